#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceqe/error.hpp"
#include "ceqe/eval.hpp"
#include "ceqe/expansion.hpp"
#include "ceqe/index.hpp"

namespace ceqe {

enum class TermLabelKind { positive, negative, neutral };

inline std::string_view to_string(TermLabelKind k) {
  switch (k) {
    case TermLabelKind::positive: return "positive";
    case TermLabelKind::negative: return "negative";
    case TermLabelKind::neutral: return "neutral";
  }
  return "?";
}

struct TermLabel {
  std::string query_id;
  std::string stem;
  double delta_recall1000 = 0.0;
  TermLabelKind label = TermLabelKind::neutral;
};

inline constexpr double kIntrinsicThreshold = 0.001;
inline constexpr double kIntrinsicWeight = 0.5;

/// Strict on both sides: a delta of exactly the threshold is neutral.
inline TermLabelKind label_from_delta(double delta, double threshold = kIntrinsicThreshold) {
  if (delta > threshold) return TermLabelKind::positive;
  if (delta < -threshold) return TermLabelKind::negative;
  return TermLabelKind::neutral;
}

/// Labels candidate expansion terms one at a time by the Recall@1000 change
/// they cause when added alone to the query with weight 0.5.
class IntrinsicJudge {
 public:
  IntrinsicJudge(const Index& index, const Qrels& qrels, double mu, std::size_t depth = 1000)
      : index_(index), qrels_(qrels), mu_(mu), depth_(depth) {}

  /// nullopt when the query has no relevant documents.
  std::optional<TermLabel> label(std::string_view query_id, std::span<const Token> query, std::string_view stem) {
    if (qrels_.relevant_count(query_id) == 0) return std::nullopt;
    if (!index_.find_term(stem)) throw NotFoundError("intrinsic: stem '" + std::string(stem) + "' not in index");
    const double base = baseline(query_id, query);
    TermDistribution point;
    point.query_id = std::string(query_id);
    point.terms.push_back({std::string(stem), 1.0});
    const auto model = interpolate(query, point, kIntrinsicWeight);
    const double expanded = recall(execute_expanded(index_, model, depth_, mu_));
    TermLabel out{std::string(query_id), std::string(stem), expanded - base, TermLabelKind::neutral};
    out.label = label_from_delta(out.delta_recall1000);
    return out;
  }

  double baseline(std::string_view query_id, std::span<const Token> query) {
    auto it = baseline_.find(std::string(query_id));
    if (it != baseline_.end()) return it->second;
    TermDistribution empty;
    empty.query_id = std::string(query_id);
    const double r = recall(execute_expanded(index_, interpolate(query, empty, 0.0), depth_, mu_));
    baseline_.emplace(std::string(query_id), r);
    return r;
  }

 private:
  double recall(const Ranking& ranking) const { return recall_at(ranking, qrels_, depth_).value_or(0.0); }

  const Index& index_;
  const Qrels& qrels_;
  double mu_;
  std::size_t depth_;
  std::map<std::string, double> baseline_;
};

inline std::optional<TermLabel> intrinsic_label(const Index& index, std::string_view query_id,
                                                std::span<const Token> query, std::string_view stem,
                                                const Qrels& qrels, double mu) {
  IntrinsicJudge judge(index, qrels, mu);
  return judge.label(query_id, query, stem);
}

/// Union of each method's top `depth` terms per query, ascending.
inline std::map<std::string, std::vector<std::string>> pool_candidates(
    std::span<const std::map<std::string, TermDistribution>> methods, std::size_t depth = 1000) {
  std::map<std::string, std::set<std::string>> pooled;
  for (const auto& method : methods) {
    for (const auto& [qid, dist] : method) {
      for (std::size_t i = 0; i < std::min(depth, dist.terms.size()); ++i) pooled[qid].insert(dist.terms[i].stem);
    }
  }
  std::map<std::string, std::vector<std::string>> out;
  for (auto& [qid, stems] : pooled) out[qid].assign(stems.begin(), stems.end());
  return out;
}

struct IntrinsicPrecision {
  std::size_t k = 10;
  double mean = 0.0;
  std::map<std::string, double> per_query;
  std::vector<std::string> excluded;  // labeled queries without any positive term
  std::size_t unjudged = 0;           // ranked terms outside the labeled pool
};

/// Fraction of each query's top-k ranked terms labeled positive,
/// macro-averaged over queries with at least one positive label. A query
/// the method did not rank scores 0.
inline IntrinsicPrecision intrinsic_precision(const std::map<std::string, std::vector<std::string>>& ranked_terms,
                                              std::span<const TermLabel> labels, std::size_t k) {
  if (k == 0) throw ConfigError("intrinsic precision: k must be >= 1");
  std::map<std::string, std::map<std::string, TermLabelKind>> by_query;
  for (const auto& l : labels) by_query[l.query_id][l.stem] = l.label;

  IntrinsicPrecision out;
  out.k = k;
  for (const auto& [qid, judged] : by_query) {
    const bool has_positive = std::any_of(judged.begin(), judged.end(),
                                          [](const auto& kv) { return kv.second == TermLabelKind::positive; });
    if (!has_positive) {
      out.excluded.push_back(qid);
      continue;
    }
    std::size_t hits = 0;
    if (auto it = ranked_terms.find(qid); it != ranked_terms.end()) {
      for (std::size_t i = 0; i < std::min(k, it->second.size()); ++i) {
        auto j = judged.find(it->second[i]);
        if (j == judged.end()) {
          ++out.unjudged;
        } else if (j->second == TermLabelKind::positive) {
          ++hits;
        }
      }
    }
    out.per_query[qid] = static_cast<double>(hits) / static_cast<double>(k);
  }
  double s = 0.0;
  for (const auto& [q, v] : out.per_query) s += v;
  out.mean = out.per_query.empty() ? 0.0 : s / static_cast<double>(out.per_query.size());
  return out;
}

/// `query_id<TAB>stem<TAB>delta<TAB>label` rows.
inline std::string format_term_labels(std::span<const TermLabel> labels) {
  std::string out;
  char buf[40];
  for (const auto& l : labels) {
    std::snprintf(buf, sizeof(buf), "%.6f", l.delta_recall1000);
    out += l.query_id + "\t" + l.stem + "\t" + buf + "\t" + std::string(to_string(l.label)) + "\n";
  }
  return out;
}

}  // namespace ceqe
