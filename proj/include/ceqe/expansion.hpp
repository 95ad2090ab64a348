#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceqe/analysis.hpp"
#include "ceqe/embedding.hpp"
#include "ceqe/error.hpp"
#include "ceqe/index.hpp"
#include "ceqe/mention_store.hpp"
#include "ceqe/ranking.hpp"
#include "ceqe/similarity.hpp"
#include "ceqe/static_vectors.hpp"

namespace ceqe {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct FeedbackDoc {
  std::string doc_id;
  double ql_log_score = 0.0;
  double posterior = 0.0;
};

/// Pseudo-relevant documents with normalized query posteriors.
struct FeedbackSet {
  std::string query_id;
  std::vector<FeedbackDoc> docs;
};

struct WeightedTerm {
  std::string stem;
  double weight = 0.0;

  bool operator==(const WeightedTerm&) const = default;
};

/// Weighted term set, ordered by descending weight then ascending stem.
struct TermDistribution {
  std::string query_id;
  std::vector<WeightedTerm> terms;

  double weight(std::string_view stem) const {
    for (const auto& t : terms) {
      if (t.stem == stem) return t.weight;
    }
    return 0.0;
  }
  double total() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.weight;
    return s;
  }
  std::size_t size() const noexcept { return terms.size(); }
  bool empty() const noexcept { return terms.empty(); }
  std::vector<std::pair<std::string, double>> as_pairs() const {
    std::vector<std::pair<std::string, double>> out;
    out.reserve(terms.size());
    for (const auto& t : terms) out.emplace_back(t.stem, t.weight);
    return out;
  }

  bool operator==(const TermDistribution&) const = default;
};

enum class Pooling { centroid, max, prod };
enum class Similarity { shifted_cosine };

inline std::string_view to_string(Pooling p) {
  switch (p) {
    case Pooling::centroid: return "centroid";
    case Pooling::max: return "max";
    case Pooling::prod: return "prod";
  }
  return "centroid";
}

struct ExpansionParams {
  std::size_t fb_docs = 10;
  std::size_t fb_terms = 20;
  double lambda = 0.5;
  Similarity similarity = Similarity::shifted_cosine;
  Pooling pooling = Pooling::max;

  void validate() const {
    if (fb_docs < 1) throw ConfigError("fb_docs must be >= 1");
    if (fb_terms < 1) throw ConfigError("fb_terms must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0,1]");
  }
};

/// Which stems may become expansion terms.
struct CandidatePolicy {
  bool drop_stopwords = true;
  std::size_t min_length = 2;
  bool drop_digits = true;

  static CandidatePolicy all_off() { return {false, 0, false}; }

  std::string describe() const {
    return "stopwords=" + std::string(drop_stopwords ? "on" : "off") + ", min_length=" + std::to_string(min_length) +
           ", digits=" + std::string(drop_digits ? "on" : "off");
  }
};

/// Probability floor applied before taking logs under multiplicative pooling.
inline constexpr double kProdPoolFloor = 1e-12;

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace detail {

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Sorts by (weight desc, stem asc), drops non-positive weights, keeps the top
// `limit` and renormalizes.
inline TermDistribution top_normalized(std::string query_id, const std::map<std::string, double>& weights,
                                       std::size_t limit) {
  TermDistribution dist;
  dist.query_id = std::move(query_id);
  for (const auto& [stem, w] : weights) {
    if (w > 0.0) dist.terms.push_back({stem, w});
  }
  std::sort(dist.terms.begin(), dist.terms.end(), [](const WeightedTerm& a, const WeightedTerm& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.stem < b.stem;
  });
  if (dist.terms.size() > limit) dist.terms.resize(limit);
  const double z = dist.total();
  if (z > 0.0) {
    for (auto& t : dist.terms) t.weight /= z;
  }
  return dist;
}

inline std::map<std::string, double> query_mle(std::span<const Token> query) {
  std::map<std::string, double> mle;
  double n = 0.0;
  for (const auto& t : query) {
    if (t.is_stopword) continue;
    mle[t.stem] += 1.0;
    n += 1.0;
  }
  for (auto& [stem, w] : mle) w /= n;
  return mle;
}

}  // namespace detail

inline bool candidate_allowed(std::string_view stem, const CandidatePolicy& policy, const StopwordSet& stopwords) {
  if (policy.drop_stopwords && stopwords.contains(stem)) return false;
  if (stem.size() < policy.min_length) return false;
  if (policy.drop_digits && detail::all_digits(stem)) return false;
  return true;
}

/// Keeps stems allowed by the policy, preserving order.
inline std::vector<std::string> candidate_filter(std::span<const std::string> stems, const CandidatePolicy& policy,
                                                 const StopwordSet& stopwords = StopwordSet()) {
  std::vector<std::string> out;
  for (const auto& s : stems) {
    if (candidate_allowed(s, policy, stopwords)) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feedback posteriors
// ---------------------------------------------------------------------------

/// Numerically stabilized softmax over log scores: exp(s_i - max) / sum.
inline FeedbackSet feedback_from_scores(std::string query_id, std::span<const std::pair<std::string, double>> scored) {
  FeedbackSet fb;
  fb.query_id = std::move(query_id);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [id, s] : scored) best = std::max(best, s);
  double z = 0.0;
  for (const auto& [id, s] : scored) {
    const double e = std::exp(s - best);
    fb.docs.push_back({id, s, e});
    z += e;
  }
  for (auto& d : fb.docs) d.posterior /= z;
  return fb;
}

/// Posteriors p(Q|D) for the top fb_docs documents of a first-pass ranking:
/// softmax of their query-likelihood log scores. A uniform document prior
/// cancels in the normalization.
inline FeedbackSet compute_posteriors(const Ranking& ranking, std::size_t fb_docs, const Index& index,
                                      std::span<const Token> query, double mu, Diagnostics* diag = nullptr) {
  if (ranking.empty()) throw Error("compute_posteriors: empty ranking for query '" + ranking.query_id + "'");
  if (fb_docs < 1) throw ConfigError("fb_docs must be >= 1");
  const std::size_t n = std::min(fb_docs, ranking.size());
  if (n < fb_docs) {
    warn(diag, "query '" + ranking.query_id + "': only " + std::to_string(n) + " of " + std::to_string(fb_docs) +
                   " feedback documents available");
  }
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = ranking.entries[i].doc_id;
    scored.emplace_back(id, ql_log_score(index, query, id, mu));
  }
  return feedback_from_scores(ranking.query_id, scored);
}

// ---------------------------------------------------------------------------
// Relevance model
// ---------------------------------------------------------------------------

/// p(w|theta_R) proportional to sum_D p_mle(w|D) p(Q|D) over the filtered
/// vocabulary of the feedback documents; top fb_terms, renormalized.
inline TermDistribution rm_expand(const FeedbackSet& feedback, const Index& index, std::size_t fb_terms,
                                  const CandidatePolicy& policy = {}, const StopwordSet& stopwords = StopwordSet()) {
  if (fb_terms < 1) throw ConfigError("fb_terms must be >= 1");
  std::map<std::string, double> weights;
  bool any_candidate = false;
  for (const auto& d : feedback.docs) {
    const auto doc = index.require_doc(d.doc_id);
    const double len = static_cast<double>(index.doc_length(doc));
    if (len == 0.0) continue;
    for (const auto& [term_id, tf] : index.doc_terms(doc)) {
      const auto& stem = index.term(term_id).stem;
      if (!candidate_allowed(stem, policy, stopwords)) continue;
      any_candidate = true;
      weights[stem] += d.posterior * static_cast<double>(tf) / len;
    }
  }
  if (!any_candidate) {
    throw Error("rm_expand: no candidate terms for query '" + feedback.query_id + "' after filters (" +
                policy.describe() + ")");
  }
  return detail::top_normalized(feedback.query_id, weights, fb_terms);
}

// ---------------------------------------------------------------------------
// Contextualized expansion
// ---------------------------------------------------------------------------

/// Mention-normalized similarity mass for one document:
/// p(w|v,D) = sum_{m in M_w} delta(v, m) / sum_{m in M_*} delta(v, m),
/// where M_* ranges over mentions of the candidate stems only. Returns an
/// empty map when the total mass is zero.
inline std::map<std::string, double> mention_distribution(std::string_view doc_id, const Vector& query_vector,
                                                          const MentionStore& store,
                                                          std::span<const std::string> candidates) {
  std::map<std::string, double> mass;
  double total = 0.0;
  const std::span<const double> q(query_vector);
  for (const auto& stem : candidates) {
    double m = 0.0;
    for (const auto& mention : store.mentions_of(doc_id, stem)) m += shifted_cosine<double, float>(q, mention.vector);
    mass[stem] = m;
    total += m;
  }
  if (!(total > 0.0)) return {};
  for (auto& [stem, m] : mass) m /= total;
  return mass;
}

namespace detail {

inline std::vector<std::string> store_candidates(const MentionStore& store, std::string_view doc_id,
                                                 const CandidatePolicy& policy, const StopwordSet& stopwords) {
  std::vector<std::string> stems;
  for (auto s : store.stems_of(doc_id)) stems.emplace_back(s);
  return candidate_filter(stems, policy, stopwords);
}

inline void check_dimensions(const QueryEmbedding& q, const MentionStore& store) {
  if (q.centroid.size() != store.dimension()) {
    throw Error("query embedding dimension " + std::to_string(q.centroid.size()) + " != store dimension " +
                std::to_string(store.dimension()));
  }
  for (const auto& [stem, v] : q.per_term) {
    if (v.size() != store.dimension()) throw Error("per-term vector for '" + stem + "' has wrong dimension");
  }
}

}  // namespace detail

/// Per-document p(w|Q,D) against the query centroid.
inline std::map<std::string, double> ceqe_centroid_document(std::string_view doc_id, const QueryEmbedding& query,
                                                            const MentionStore& store, const CandidatePolicy& policy = {},
                                                            const StopwordSet& stopwords = StopwordSet()) {
  return mention_distribution(doc_id, query.centroid, store, detail::store_candidates(store, doc_id, policy, stopwords));
}

/// Per-document p(w|Q,D) from per-query-term distributions pooled by max
/// or product, normalized over the document's candidates. Both poolings
/// run in log space so a one-term query gives bitwise-identical results.
inline std::map<std::string, double> ceqe_term_pool_document(std::string_view doc_id, const QueryEmbedding& query,
                                                             const MentionStore& store, Pooling pooling,
                                                             const CandidatePolicy& policy = {},
                                                             const StopwordSet& stopwords = StopwordSet(),
                                                             Diagnostics* diag = nullptr) {
  if (pooling == Pooling::centroid) return ceqe_centroid_document(doc_id, query, store, policy, stopwords);
  if (query.per_term.empty()) throw Error("ceqe_term_pool: query '" + query.query_id + "' has no per-term vectors");
  const auto candidates = detail::store_candidates(store, doc_id, policy, stopwords);
  if (candidates.empty()) return {};

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::map<std::string, double> log_f;
  for (const auto& stem : candidates) log_f[stem] = pooling == Pooling::max ? kNegInf : 0.0;
  std::size_t floored = 0;
  for (const auto& [qstem, qvec] : query.per_term) {
    const auto p = mention_distribution(doc_id, qvec, store, candidates);
    if (p.empty()) return {};
    for (auto& [stem, lf] : log_f) {
      const double pw = p.at(stem);
      if (pooling == Pooling::max) {
        lf = std::max(lf, std::log(pw));
      } else {
        if (pw < kProdPoolFloor) ++floored;
        lf += std::log(std::max(pw, kProdPoolFloor));
      }
    }
  }
  if (floored > 0) {
    warn(diag, "document '" + std::string(doc_id) + "': " + std::to_string(floored) +
                   " zero term probabilities floored under product pooling");
  }
  double best = kNegInf;
  for (const auto& [stem, lf] : log_f) best = std::max(best, lf);
  if (best == kNegInf) return {};
  double z = 0.0;
  std::map<std::string, double> out;
  for (const auto& [stem, lf] : log_f) {
    const double g = std::exp(lf - best);
    out[stem] = g;
    z += g;
  }
  for (auto& [stem, g] : out) g /= z;
  return out;
}

namespace detail {

template <typename PerDocument>
TermDistribution mix_documents(const FeedbackSet& feedback, std::size_t fb_terms, PerDocument&& per_document,
                               Diagnostics* diag) {
  if (fb_terms < 1) throw ConfigError("fb_terms must be >= 1");
  std::map<std::string, double> weights;
  for (const auto& d : feedback.docs) {
    const auto dist = per_document(d.doc_id);
    if (dist.empty()) {
      warn(diag, "query '" + feedback.query_id + "': document '" + d.doc_id + "' has zero mention mass, skipped");
      continue;
    }
    for (const auto& [stem, p] : dist) weights[stem] += d.posterior * p;
  }
  return top_normalized(feedback.query_id, weights, fb_terms);
}

}  // namespace detail

/// Centroid CEQE: sum_D p(w|Q,D) p(Q|D) with the query centroid.
inline TermDistribution ceqe_centroid(const FeedbackSet& feedback, const QueryEmbedding& query,
                                      const MentionStore& store, std::size_t fb_terms,
                                      const CandidatePolicy& policy = {}, const StopwordSet& stopwords = StopwordSet(),
                                      Diagnostics* diag = nullptr) {
  detail::check_dimensions(query, store);
  return detail::mix_documents(
      feedback, fb_terms,
      [&](const std::string& doc_id) { return ceqe_centroid_document(doc_id, query, store, policy, stopwords); },
      diag);
}

/// Term-based CEQE with MaxPool or MulPool.
inline TermDistribution ceqe_term_pool(const FeedbackSet& feedback, const QueryEmbedding& query,
                                       const MentionStore& store, Pooling pooling, std::size_t fb_terms,
                                       const CandidatePolicy& policy = {}, const StopwordSet& stopwords = StopwordSet(),
                                       Diagnostics* diag = nullptr) {
  if (pooling == Pooling::centroid) throw ConfigError("ceqe_term_pool: pooling must be max or prod");
  detail::check_dimensions(query, store);
  return detail::mix_documents(
      feedback, fb_terms,
      [&](const std::string& doc_id) {
        return ceqe_term_pool_document(doc_id, query, store, pooling, policy, stopwords, diag);
      },
      diag);
}

// ---------------------------------------------------------------------------
// Static-embedding expansion
// ---------------------------------------------------------------------------

/// Every index stem that passes the filter and has a static vector.
inline std::vector<std::string> global_vocabulary(const Index& index, const StaticVectorTable& table,
                                                  const CandidatePolicy& policy = {},
                                                  const StopwordSet& stopwords = StopwordSet()) {
  std::vector<std::string> stems;
  for (std::uint32_t t = 0; t < index.term_count(); ++t) {
    if (table.find(index.term(t).stem) != nullptr) stems.push_back(index.term(t).stem);
  }
  return candidate_filter(stems, policy, stopwords);
}

/// Filtered stems occurring in the feedback documents, ascending.
inline std::vector<std::string> feedback_vocabulary(const FeedbackSet& feedback, const Index& index,
                                                    const CandidatePolicy& policy = {},
                                                    const StopwordSet& stopwords = StopwordSet()) {
  std::map<std::string, bool> seen;
  for (const auto& d : feedback.docs) {
    for (const auto& [term_id, tf] : index.doc_terms(index.require_doc(d.doc_id))) seen[index.term(term_id).stem] = true;
  }
  std::vector<std::string> stems;
  for (const auto& [s, unused] : seen) stems.push_back(s);
  return candidate_filter(stems, policy, stopwords);
}

/// Scores each vocabulary stem by delta(centroid of the query's static
/// vectors, w) and normalizes the top fb_terms scores.
inline TermDistribution static_embed_expand(std::string query_id, std::span<const Token> query,
                                            const StaticVectorTable& table, std::span<const std::string> vocabulary,
                                            std::size_t fb_terms) {
  if (fb_terms < 1) throw ConfigError("fb_terms must be >= 1");
  Vector centroid(table.dimension, 0.0);
  std::size_t found = 0;
  for (const auto& t : query) {
    if (t.is_stopword) continue;
    if (const Vector* v = table.find(t.stem)) {
      for (std::size_t j = 0; j < centroid.size(); ++j) centroid[j] += (*v)[j];
      ++found;
    }
  }
  if (found == 0) throw Error("static_embed_expand: no query term of '" + query_id + "' has a static vector");
  for (auto& x : centroid) x /= static_cast<double>(found);

  std::map<std::string, double> scores;
  for (const auto& stem : vocabulary) {
    if (const Vector* v = table.find(stem)) scores[stem] = shifted_cosine(centroid, *v);
  }
  return detail::top_normalized(std::move(query_id), scores, fb_terms);
}

// ---------------------------------------------------------------------------
// Interpolation and execution
// ---------------------------------------------------------------------------

/// (1 - lambda) p_mle(w|Q) + lambda p_exp(w), normalized.
inline TermDistribution interpolate(std::span<const Token> query, const TermDistribution& expansion, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("interpolate: lambda must be in [0,1]");
  std::map<std::string, double> mixed;
  for (const auto& [stem, p] : detail::query_mle(query)) mixed[stem] += (1.0 - lambda) * p;
  for (const auto& t : expansion.terms) mixed[t.stem] += lambda * t.weight;
  return detail::top_normalized(expansion.query_id, mixed, std::numeric_limits<std::size_t>::max());
}

/// Weighted query likelihood of an expanded model over the whole index.
inline Ranking execute_expanded(const Index& index, const TermDistribution& model, std::size_t k, double mu) {
  const auto pairs = model.as_pairs();
  return weighted_ql_search(index, pairs, k, mu, model.query_id);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// `stem<TAB>weight` lines, descending weight.
inline std::string format_term_distribution(const TermDistribution& dist) {
  std::string out;
  char buf[40];
  for (const auto& t : dist.terms) {
    std::snprintf(buf, sizeof(buf), "\t%.17g\n", t.weight);
    out += t.stem;
    out += buf;
  }
  return out;
}

inline TermDistribution parse_term_distribution(std::string query_id, std::string_view text) {
  TermDistribution dist;
  dist.query_id = std::move(query_id);
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("term distribution line " + std::to_string(line_no) + ": missing tab", line_no);
    std::string weight(line.substr(tab + 1));
    char* end = nullptr;
    const double w = std::strtod(weight.c_str(), &end);
    if (end != weight.c_str() + weight.size()) {
      throw ParseError("term distribution line " + std::to_string(line_no) + ": bad weight", line_no);
    }
    dist.terms.push_back({std::string(line.substr(0, tab)), w});
  }
  return dist;
}

inline nlohmann::json term_distribution_json(const TermDistribution& dist, const ExpansionParams& params,
                                             std::string_view method) {
  nlohmann::json j;
  j["query_id"] = dist.query_id;
  j["method"] = method;
  j["params"] = {{"fb_docs", params.fb_docs},
                 {"fb_terms", params.fb_terms},
                 {"lambda", params.lambda},
                 {"similarity", "cosine-shifted"},
                 {"pooling", to_string(params.pooling)}};
  j["terms"] = nlohmann::json::array();
  for (const auto& t : dist.terms) j["terms"].push_back({{"stem", t.stem}, {"weight", t.weight}});
  return j;
}

}  // namespace ceqe
