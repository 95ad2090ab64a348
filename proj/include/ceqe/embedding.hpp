#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ceqe/analysis.hpp"
#include "ceqe/corpus.hpp"
#include "ceqe/error.hpp"
#include "ceqe/similarity.hpp"

namespace ceqe {

/// Half-open range [begin, end) of WordPiece positions belonging to one word.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const WordSpan&) const = default;
};

/// Mean of the piece vectors inside each span.
///
/// Spans must be non-empty, in range and non-overlapping; they need not
/// cover special-token positions.
inline std::vector<Vector> aggregate_wordpieces(std::span<const Vector> pieces, std::span<const WordSpan> spans) {
  std::size_t dim = pieces.empty() ? 0 : pieces.front().size();
  for (const auto& p : pieces) {
    if (p.size() != dim) throw Error("aggregate_wordpieces: piece dimension mismatch");
  }
  std::vector<Vector> words;
  words.reserve(spans.size());
  std::size_t previous_end = 0;
  for (const auto& span : spans) {
    if (span.end <= span.begin) throw Error("aggregate_wordpieces: empty word span");
    if (span.end > pieces.size()) throw Error("aggregate_wordpieces: span exceeds piece sequence");
    if (span.begin < previous_end) throw Error("aggregate_wordpieces: overlapping word spans");
    previous_end = span.end;
    Vector mean(dim, 0.0);
    for (std::size_t i = span.begin; i < span.end; ++i) {
      for (std::size_t j = 0; j < dim; ++j) mean[j] += pieces[i][j];
    }
    const double n = static_cast<double>(span.end - span.begin);
    for (auto& x : mean) x /= n;
    words.push_back(std::move(mean));
  }
  return words;
}

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

struct Chunk {
  std::string doc_id;
  std::uint32_t chunk_index = 0;
  std::uint32_t begin = 0;  // token index range [begin, end)
  std::uint32_t end = 0;
  bool truncated = false;   // a single word longer than the piece budget

  bool operator==(const Chunk&) const = default;
};

using PieceCounter = std::function<std::size_t(const Token&)>;

/// Greedy left-to-right packing of whole words into chunks of at most
/// max_pieces - 2 WordPieces (two slots are reserved for the start and end
/// special tokens). A word longer than the budget gets a chunk of its own,
/// flagged truncated, with a warning.
inline std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_pieces, const PieceCounter& pieces,
                                         Diagnostics* diag = nullptr) {
  if (max_pieces < 2) throw ConfigError("chunk_document: max_pieces must be >= 2");
  const std::size_t budget = max_pieces - 2;
  std::vector<Chunk> chunks;
  std::size_t i = 0;
  const std::size_t n = doc.tokens.size();
  while (i < n) {
    Chunk chunk{doc.doc_id, static_cast<std::uint32_t>(chunks.size()), static_cast<std::uint32_t>(i),
                static_cast<std::uint32_t>(i), false};
    std::size_t used = 0;
    while (i < n) {
      const std::size_t c = pieces(doc.tokens[i]);
      if (used + c <= budget) {
        used += c;
        ++i;
        continue;
      }
      if (used == 0) {
        chunk.truncated = true;
        warn(diag, "document '" + doc.doc_id + "': word '" + doc.tokens[i].surface + "' has " + std::to_string(c) +
                       " pieces, truncated to " + std::to_string(budget));
        ++i;
      }
      break;
    }
    chunk.end = static_cast<std::uint32_t>(i);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

enum class ProviderSource { precomputed, remote, deterministic_test };

struct ProviderInfo {
  std::size_t dimension = 0;
  ProviderSource source = ProviderSource::deterministic_test;
};

/// Output of running the contextual model over one text. `pieces` holds
/// every WordPiece vector including the leading start token and trailing
/// end token; `word_spans[i]` locates the pieces of input word i.
struct EncodedText {
  std::vector<Vector> pieces;
  std::vector<WordSpan> word_spans;
};

struct QueryEmbedding {
  std::string query_id;
  Vector centroid;
  std::map<std::string, Vector> per_term;  // keyed by stem
};

/// Source of contextual vectors. Implementations must be safe to call
/// concurrently from several threads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual ProviderInfo info() const = 0;
  /// Number of WordPieces the model would produce for this word.
  virtual std::size_t piece_count(const Token& token) const = 0;
  /// Runs the model over one token sequence (stopwords included).
  virtual EncodedText encode(std::span<const Token> tokens) const = 0;
  /// Stored query representation, for providers that cannot encode.
  virtual std::optional<QueryEmbedding> lookup_query(std::string_view /*query_id*/) const { return std::nullopt; }
};

/// Query representation: the centroid averages every piece including the
/// special tokens; per-term vectors average each non-stopword word's own
/// pieces, and a stem occurring twice gets the mean of its occurrences.
inline QueryEmbedding embed_query(std::string_view query_id, std::span<const Token> query,
                                  const EmbeddingProvider& provider) {
  if (auto stored = provider.lookup_query(query_id)) return *stored;
  if (query.empty()) throw Error("embed_query: empty query");
  const EncodedText enc = provider.encode(query);
  if (enc.pieces.empty()) throw Error("embed_query: provider returned no pieces");
  if (enc.word_spans.size() != query.size()) throw Error("embed_query: provider returned wrong number of word spans");

  QueryEmbedding q;
  q.query_id = std::string(query_id);
  const std::size_t dim = enc.pieces.front().size();
  q.centroid.assign(dim, 0.0);
  for (const auto& p : enc.pieces) {
    if (p.size() != dim) throw Error("embed_query: piece dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j) q.centroid[j] += p[j];
  }
  for (auto& x : q.centroid) x /= static_cast<double>(enc.pieces.size());

  const auto words = aggregate_wordpieces(enc.pieces, enc.word_spans);
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (query[i].is_stopword) continue;
    auto [it, inserted] = q.per_term.try_emplace(query[i].stem, dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) it->second[j] += words[i][j];
    ++counts[query[i].stem];
  }
  for (auto& [stem, v] : q.per_term) {
    const double n = static_cast<double>(counts[stem]);
    for (auto& x : v) x /= n;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Deterministic test embedder
// ---------------------------------------------------------------------------

struct TestEmbedderConfig {
  std::size_t dimension = 64;
  std::uint64_t seed = 0;
  std::size_t radius = 3;         // context window, in token positions
  double self_weight = 1.0;       // identity of the word itself
  double context_weight = 1.0;    // mean identity of its context words
  double jitter_weight = 0.1;     // hash of the exact (word, context multiset) pair
  std::size_t max_piece_chars = 0;  // 0: one piece per word; else ceil(len / n) pieces
};

/// Hash-seeded stand-in for a contextual encoder.
///
/// A vector is the L2-normalized sum of a pseudorandom unit vector for the
/// stem, the mean unit vector of the context stems, and a small term keyed
/// by the stem together with the sorted context multiset. Identical inputs
/// give identical vectors; mentions sharing context words end up close,
/// which is what makes sense-dependent behaviour testable without a model.
/// Seeding uses fixed integer hashing instead of <random> distributions, so
/// vectors do not depend on the standard library implementation.
class DeterministicTestEmbedder final : public EmbeddingProvider {
 public:
  explicit DeterministicTestEmbedder(TestEmbedderConfig config = {}) : config_(config) {
    if (config_.dimension == 0) throw ConfigError("test embedder: dimension must be > 0");
  }

  const TestEmbedderConfig& config() const noexcept { return config_; }

  ProviderInfo info() const override { return {config_.dimension, ProviderSource::deterministic_test}; }

  std::size_t piece_count(const Token& token) const override {
    if (config_.max_piece_chars == 0) return 1;
    const std::size_t len = std::max<std::size_t>(token.surface.size(), 1);
    return (len + config_.max_piece_chars - 1) / config_.max_piece_chars;
  }

  /// Vector for `stem` seen with the given context stems. Context order is
  /// irrelevant; only the multiset matters.
  Vector embed(std::string_view stem, std::span<const std::string> context) const {
    // Summed in sorted order so a permuted context gives identical bits.
    std::vector<std::string> sorted(context.begin(), context.end());
    std::sort(sorted.begin(), sorted.end());
    Vector v = unit_gaussian(stem);
    for (auto& x : v) x *= config_.self_weight;
    if (!sorted.empty()) {
      const double w = config_.context_weight / static_cast<double>(sorted.size());
      for (const auto& c : sorted) {
        const Vector g = unit_gaussian(c);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] += w * g[j];
      }
    }
    std::string key(stem);
    key.push_back('\x1f');
    for (const auto& c : sorted) {
      key += c;
      key.push_back('\x1e');
    }
    const Vector jitter = unit_gaussian(key);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += config_.jitter_weight * jitter[j];
    return normalized(std::move(v));
  }

  /// Non-stopword stems within `radius` positions of token i, excluding i.
  std::vector<std::string> context_of(std::span<const Token> tokens, std::size_t i) const {
    std::vector<std::string> ctx;
    const std::size_t lo = i >= config_.radius ? i - config_.radius : 0;
    const std::size_t hi = std::min(tokens.size(), i + config_.radius + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (j != i && !tokens[j].is_stopword) ctx.push_back(tokens[j].stem);
    }
    return ctx;
  }

  EncodedText encode(std::span<const Token> tokens) const override {
    std::vector<std::string> all;
    for (const auto& t : tokens) {
      if (!t.is_stopword) all.push_back(t.stem);
    }
    EncodedText out;
    out.pieces.push_back(embed("[CLS]", all));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto ctx = context_of(tokens, i);
      const std::size_t n = piece_count(tokens[i]);
      const std::size_t begin = out.pieces.size();
      for (std::size_t p = 0; p < n; ++p) {
        out.pieces.push_back(p == 0 ? embed(tokens[i].stem, ctx)
                                    : embed(tokens[i].stem + "##" + std::to_string(p), ctx));
      }
      out.word_spans.push_back({begin, out.pieces.size()});
    }
    out.pieces.push_back(embed("[SEP]", all));
    return out;
  }

 private:
  static std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

  static std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Box-Muller over splitmix64 draws, then unit-normalized.
  Vector unit_gaussian(std::string_view key) const {
    std::uint64_t state = fnv1a(key, config_.seed);
    Vector v(config_.dimension);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (std::size_t j = 0; j < v.size(); j += 2) {
      const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
      const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      const double r = std::sqrt(-2.0 * std::log(u1));
      v[j] = r * std::cos(kTwoPi * u2);
      if (j + 1 < v.size()) v[j + 1] = r * std::sin(kTwoPi * u2);
    }
    return normalized(std::move(v));
  }

  TestEmbedderConfig config_;
};

}  // namespace ceqe
