#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ceqe/analysis.hpp"
#include "ceqe/embedding.hpp"
#include "ceqe/error.hpp"
#include "ceqe/eval.hpp"
#include "ceqe/expansion.hpp"
#include "ceqe/index.hpp"
#include "ceqe/mention_store.hpp"
#include "ceqe/static_vectors.hpp"

namespace ceqe {

enum class Method { bm25, rm3, static_global, static_prf, ceqe_centroid, ceqe_max, ceqe_mul };

inline constexpr Method kAllMethods[] = {Method::bm25,          Method::rm3,      Method::static_global,
                                         Method::static_prf,    Method::ceqe_centroid, Method::ceqe_max,
                                         Method::ceqe_mul};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::bm25: return "bm25";
    case Method::rm3: return "rm3";
    case Method::static_global: return "static";
    case Method::static_prf: return "static-prf";
    case Method::ceqe_centroid: return "ceqe-centroid";
    case Method::ceqe_max: return "ceqe-max";
    case Method::ceqe_mul: return "ceqe-mul";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected bm25, rm3, static, static-prf, ceqe-centroid, ceqe-max or ceqe-mul)");
}

inline bool uses_feedback(Method m) { return m != Method::bm25 && m != Method::static_global; }
inline bool uses_mentions(Method m) {
  return m == Method::ceqe_centroid || m == Method::ceqe_max || m == Method::ceqe_mul;
}
inline bool uses_static_vectors(Method m) { return m == Method::static_global || m == Method::static_prf; }

// ---------------------------------------------------------------------------
// Topics: `query_id<TAB>query text` per line
// ---------------------------------------------------------------------------

struct Topic {
  std::string id;
  std::string text;
};

inline std::vector<Topic> parse_topics(std::string_view text) {
  std::vector<Topic> topics;
  std::map<std::string, bool> seen;
  detail::for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw ParseError("topics line " + std::to_string(line_no) + ": expected 'query_id<TAB>text'", line_no);
    }
    Topic t{std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))};
    if (seen[t.id]) throw ParseError("topics line " + std::to_string(line_no) + ": duplicate query '" + t.id + "'", line_no);
    seen[t.id] = true;
    topics.push_back(std::move(t));
  });
  return topics;
}

inline std::string format_topics(std::span<const Topic> topics) {
  std::string out;
  for (const auto& t : topics) out += t.id + "\t" + t.text + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Running a method
// ---------------------------------------------------------------------------

struct RetrievalParams {
  Bm25Params bm25;
  double mu = 1500.0;
  std::size_t depth = 1000;
  ExpansionParams expansion;
  CandidatePolicy policy;
};

/// Assets a method may need. Only the index is always required.
struct Resources {
  const Index* index = nullptr;
  const MentionStore* mentions = nullptr;
  const StaticVectorTable* static_vectors = nullptr;
  const EmbeddingProvider* query_provider = nullptr;
};

inline void check_resources(Method m, const Resources& res) {
  if (res.index == nullptr) throw ConfigError("no index loaded");
  if (uses_mentions(m)) {
    if (res.mentions == nullptr) {
      throw ConfigError(std::string(to_string(m)) +
                        " needs a mention store: build one with `ceqe embed` or the Python extractor "
                        "(`ceqe-extract corpus`), then set `mentions`");
    }
    if (res.query_provider == nullptr) throw ConfigError(std::string(to_string(m)) + " needs a query embedding provider");
  }
  if (uses_static_vectors(m) && res.static_vectors == nullptr) {
    throw ConfigError(std::string(to_string(m)) + " needs a static vector table (`static_vectors`)");
  }
}

/// Canonical text of every parameter that can change a run's output.
inline std::string params_fingerprint(Method m, const RetrievalParams& p) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "method=%s;k1=%.17g;b=%.17g;mu=%.17g;depth=%zu;fb_docs=%zu;fb_terms=%zu;lambda=%.17g;"
                "stop=%d;minlen=%zu;digits=%d",
                std::string(to_string(m)).c_str(), p.bm25.k1, p.bm25.b, p.mu, p.depth, p.expansion.fb_docs,
                p.expansion.fb_terms, p.expansion.lambda, p.policy.drop_stopwords ? 1 : 0, p.policy.min_length,
                p.policy.drop_digits ? 1 : 0);
  return buf;
}

/// Method name plus 8 hex digits of an FNV-1a hash of the parameters.
inline std::string run_tag(Method m, const RetrievalParams& p) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : params_fingerprint(m, p)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char hex[9];
  std::snprintf(hex, sizeof(hex), "%08x", static_cast<unsigned>((h ^ (h >> 32)) & 0xffffffffu));
  return std::string(to_string(m)) + "-" + hex;
}

/// Per-query state that does not depend on the expansion parameters, so
/// grid search can reuse it.
struct PreparedQuery {
  Topic topic;
  std::vector<Token> tokens;
  Ranking first_pass;
  std::optional<QueryEmbedding> embedding;
};

inline PreparedQuery prepare_query(Method m, const Topic& topic, const Resources& res, const RetrievalParams& p) {
  check_resources(m, res);
  PreparedQuery q;
  q.topic = topic;
  q.tokens = res.index->analyzer().analyze(topic.text);
  q.first_pass = bm25_search(*res.index, q.tokens, p.depth, p.bm25, topic.id);
  if (uses_mentions(m) && !q.tokens.empty()) q.embedding = embed_query(topic.id, q.tokens, *res.query_provider);
  return q;
}

/// The feedback distribution before interpolation; empty when the first
/// pass found nothing to learn from.
inline TermDistribution expansion_terms(Method m, const PreparedQuery& q, const Resources& res, std::size_t fb_docs,
                                        std::size_t fb_terms, const RetrievalParams& p, Diagnostics* diag = nullptr) {
  const Index& index = *res.index;
  const auto& stops = index.analyzer().stopwords();
  if (m == Method::bm25) throw ConfigError("bm25 has no expansion terms");
  if (m == Method::static_global) {
    const auto vocab = global_vocabulary(index, *res.static_vectors, p.policy, stops);
    return static_embed_expand(q.topic.id, q.tokens, *res.static_vectors, vocab, fb_terms);
  }
  if (q.first_pass.empty()) {
    warn(diag, "query '" + q.topic.id + "': first pass retrieved nothing, no expansion");
    return TermDistribution{q.topic.id, {}};
  }
  const auto feedback = compute_posteriors(q.first_pass, fb_docs, index, q.tokens, p.mu, diag);
  switch (m) {
    case Method::rm3:
      return rm_expand(feedback, index, fb_terms, p.policy, stops);
    case Method::static_prf: {
      const auto vocab = feedback_vocabulary(feedback, index, p.policy, stops);
      return static_embed_expand(q.topic.id, q.tokens, *res.static_vectors, vocab, fb_terms);
    }
    case Method::ceqe_centroid:
      return ceqe_centroid(feedback, *q.embedding, *res.mentions, fb_terms, p.policy, stops, diag);
    case Method::ceqe_max:
      return ceqe_term_pool(feedback, *q.embedding, *res.mentions, Pooling::max, fb_terms, p.policy, stops, diag);
    case Method::ceqe_mul:
      return ceqe_term_pool(feedback, *q.embedding, *res.mentions, Pooling::prod, fb_terms, p.policy, stops, diag);
    default:
      break;
  }
  throw ConfigError("unsupported method");
}

/// Final ranking for one prepared query: BM25 passthrough, or interpolated
/// expansion executed with weighted query likelihood.
inline Ranking run_prepared(Method m, const PreparedQuery& q, const Resources& res, const RetrievalParams& p,
                            Diagnostics* diag = nullptr) {
  if (m == Method::bm25) return q.first_pass;
  if (detail::query_mle(q.tokens).empty()) {
    warn(diag, "query '" + q.topic.id + "' has no content terms");
    return Ranking{q.topic.id, {}};
  }
  const auto expansion = expansion_terms(m, q, res, p.expansion.fb_docs, p.expansion.fb_terms, p, diag);
  const auto model = interpolate(q.tokens, expansion, expansion.empty() ? 0.0 : p.expansion.lambda);
  return execute_expanded(*res.index, model, p.depth, p.mu);
}

inline Run run_topics(Method m, std::span<const Topic> topics, const Resources& res, const RetrievalParams& p,
                      Diagnostics* diag = nullptr) {
  p.expansion.validate();
  Run run;
  run.tag = run_tag(m, p);
  for (const auto& t : topics) run.rankings.push_back(run_prepared(m, prepare_query(m, t, res, p), res, p, diag));
  return run;
}

}  // namespace ceqe
