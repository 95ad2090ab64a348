#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ceqe/corpus.hpp"
#include "ceqe/error.hpp"
#include "ceqe/expansion.hpp"
#include "ceqe/index.hpp"
#include "ceqe/stem.hpp"

namespace ceqe {

/// Everything a command needs, loaded from a `key = value` file and then
/// overridden by flags.
struct Config {
  // paths
  std::string corpus;
  std::string index;
  std::string mentions;
  std::string static_vectors;
  bool static_keys_are_stems = false;  // tables written by `ceqe embed` are keyed by stem
  std::string query_embeddings;
  std::string topics;
  std::string qrels;
  std::string folds;
  std::string output;

  // analysis
  StemmerId stemmer = StemmerId::krovetz;

  // retrieval
  Bm25Params bm25;
  double mu = 1500.0;
  std::size_t depth = 1000;

  // expansion
  ExpansionParams expansion;
  CandidatePolicy policy;

  // embeddings
  std::string provider = "test";  // test | precomputed | remote
  std::size_t max_pieces = 128;
  TestEmbedderConfig test_embedder;
  std::string remote_host = "127.0.0.1";
  int remote_port = 8080;
  int remote_timeout_ms = 30000;

  // evaluation
  std::uint64_t seed = 0;
  std::size_t num_folds = 5;
  std::string target_metric = "AP@1000";
  std::vector<std::size_t> grid_fb_docs;
  std::vector<std::size_t> grid_fb_terms;
  std::vector<double> grid_lambda;

  void validate() const {
    expansion.validate();
    if (bm25.k1 <= 0.0) throw ConfigError("k1 must be > 0");
    if (bm25.b < 0.0 || bm25.b > 1.0) throw ConfigError("b must be in [0,1]");
    if (!(mu > 0.0)) throw ConfigError("mu must be > 0");
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (max_pieces < 3) throw ConfigError("max_pieces must be >= 3");
    if (provider != "test" && provider != "precomputed" && provider != "remote") {
      throw ConfigError("provider must be test, precomputed or remote (got '" + provider + "')");
    }
  }
};

namespace detail {

inline std::string trim_copy(std::string_view s) { return std::string(sgml_detail::trim(s)); }

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    out = static_cast<T>(std::strtod(value.c_str(), &end));
    if (value.empty() || end != value.c_str() + value.size()) throw ConfigError(key + ": expected a number, got '" + value + "'");
  } else {
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, std::string value) {
  if (!value.empty() && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto comma = value.find(',', pos);
    auto item = trim_copy(std::string_view(value).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace detail

/// Applies one setting. Unknown keys are errors so typos do not silently
/// fall back to defaults.
inline void apply_setting(Config& c, const std::string& key, const std::string& raw) {
  using detail::parse_bool;
  using detail::parse_number;
  const std::string value = detail::unquote(detail::trim_copy(raw));
  static const std::map<std::string, std::string Config::*> paths = {
      {"corpus", &Config::corpus},     {"index", &Config::index},
      {"mentions", &Config::mentions}, {"static_vectors", &Config::static_vectors},
      {"query_embeddings", &Config::query_embeddings},
      {"topics", &Config::topics},     {"qrels", &Config::qrels},
      {"folds", &Config::folds},       {"output", &Config::output},
      {"provider", &Config::provider}, {"remote_host", &Config::remote_host},
      {"target_metric", &Config::target_metric}};
  if (auto it = paths.find(key); it != paths.end()) {
    c.*(it->second) = value;
  } else if (key == "static_keys") {
    if (value != "words" && value != "stems") throw ConfigError("static_keys must be words or stems");
    c.static_keys_are_stems = value == "stems";
  } else if (key == "stemmer") {
    c.stemmer = parse_stemmer_id(value);
  } else if (key == "k1") {
    c.bm25.k1 = parse_number<double>(key, value);
  } else if (key == "b") {
    c.bm25.b = parse_number<double>(key, value);
  } else if (key == "mu") {
    c.mu = parse_number<double>(key, value);
  } else if (key == "depth") {
    c.depth = parse_number<std::size_t>(key, value);
  } else if (key == "fb_docs") {
    c.expansion.fb_docs = parse_number<std::size_t>(key, value);
  } else if (key == "fb_terms") {
    c.expansion.fb_terms = parse_number<std::size_t>(key, value);
  } else if (key == "lambda") {
    c.expansion.lambda = parse_number<double>(key, value);
  } else if (key == "drop_stopwords") {
    c.policy.drop_stopwords = parse_bool(key, value);
  } else if (key == "min_length") {
    c.policy.min_length = parse_number<std::size_t>(key, value);
  } else if (key == "drop_digits") {
    c.policy.drop_digits = parse_bool(key, value);
  } else if (key == "max_pieces") {
    c.max_pieces = parse_number<std::size_t>(key, value);
  } else if (key == "embed_dim") {
    c.test_embedder.dimension = parse_number<std::size_t>(key, value);
  } else if (key == "embed_seed") {
    c.test_embedder.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "embed_radius") {
    c.test_embedder.radius = parse_number<std::size_t>(key, value);
  } else if (key == "embed_context_weight") {
    c.test_embedder.context_weight = parse_number<double>(key, value);
  } else if (key == "embed_jitter_weight") {
    c.test_embedder.jitter_weight = parse_number<double>(key, value);
  } else if (key == "embed_max_piece_chars") {
    c.test_embedder.max_piece_chars = parse_number<std::size_t>(key, value);
  } else if (key == "remote_port") {
    c.remote_port = parse_number<int>(key, value);
  } else if (key == "remote_timeout_ms") {
    c.remote_timeout_ms = parse_number<int>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "num_folds") {
    c.num_folds = parse_number<std::size_t>(key, value);
  } else if (key == "grid_fb_docs") {
    c.grid_fb_docs = detail::parse_list<std::size_t>(key, value);
  } else if (key == "grid_fb_terms") {
    c.grid_fb_terms = detail::parse_list<std::size_t>(key, value);
  } else if (key == "grid_lambda") {
    c.grid_lambda = detail::parse_list<double>(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// `key = value` lines; `#` starts a comment, `[section]` headers are
/// accepted and ignored. Relative paths are left as written.
inline void apply_config_text(Config& c, std::string_view text) {
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const auto t = detail::trim_copy(line);
    if (t.empty() || t.front() == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(c, detail::trim_copy(std::string_view(t).substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& ex) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
}

inline Config load_config(const std::string& path) {
  Config c;
  apply_config_text(c, read_file(path));
  return c;
}

}  // namespace ceqe
