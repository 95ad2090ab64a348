#pragma once

// Naive reference implementations used as test oracles. They deliberately
// share no arithmetic with the library: plain loops over raw inputs, direct
// products instead of log space, their own cosine and sorting.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using Weights = std::map<std::string, double>;

inline double shifted_cos(const std::vector<double>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * static_cast<double>(b[i]);
    aa += a[i] * a[i];
    bb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (aa == 0 || bb == 0) return 0.5;
  double s = (1.0 + ab / (std::sqrt(aa) * std::sqrt(bb))) / 2.0;
  return std::clamp(s, 0.0, 1.0);
}

inline std::vector<double> softmax(const std::vector<double>& s) {
  double m = s[0];
  for (double x : s) m = std::max(m, x);
  std::vector<double> e;
  double z = 0;
  for (double x : s) {
    e.push_back(std::exp(x - m));
    z += e.back();
  }
  for (auto& x : e) x /= z;
  return e;
}

/// Keeps the `limit` heaviest terms (ties: smaller stem first) and rescales
/// them to sum to one.
inline Weights truncate(const Weights& w, std::size_t limit) {
  std::vector<std::pair<std::string, double>> v;
  for (const auto& [k, x] : w) {
    if (x > 0) v.emplace_back(k, x);
  }
  std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
  if (v.size() > limit) v.resize(limit);
  double z = 0;
  for (auto& p : v) z += p.second;
  Weights out;
  for (auto& p : v) out[p.first] = p.second / z;
  return out;
}

struct Filter {
  std::set<std::string> stopwords;
  std::size_t min_length = 2;
  bool drop_digits = true;
  bool drop_stop = true;

  bool allowed(const std::string& s) const {
    if (drop_stop && stopwords.count(s)) return false;
    if (s.size() < min_length) return false;
    if (drop_digits && !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
    return true;
  }
};

/// One feedback document as the oracle sees it: its content stems (stopwords
/// already removed) and posterior.
struct Doc {
  std::vector<std::string> stems;
  double posterior = 0;
};

/// sum_D (count(w, D) / |D|) * posterior(D), over allowed stems.
inline Weights relevance_model(const std::vector<Doc>& docs, const Filter& f) {
  Weights w;
  for (const auto& d : docs) {
    if (d.stems.empty()) continue;
    for (const auto& s : d.stems) {
      if (f.allowed(s)) w[s] += d.posterior / static_cast<double>(d.stems.size());
    }
  }
  return w;
}

struct Mention {
  std::string stem;
  std::vector<float> vec;
};

/// p(w|v,D) by summing delta over every mention of w and dividing by the sum
/// over every allowed mention. Empty when the denominator is zero.
inline Weights doc_distribution(const std::vector<Mention>& mentions, const std::vector<double>& v, const Filter& f) {
  Weights num;
  double den = 0;
  for (const auto& m : mentions) {
    if (!f.allowed(m.stem)) continue;
    const double d = shifted_cos(v, m.vec);
    num[m.stem] += d;
    den += d;
  }
  if (den == 0) return {};
  for (auto& [k, x] : num) x /= den;
  return num;
}

struct FeedbackMentions {
  std::vector<Mention> mentions;
  double posterior = 0;
};

inline Weights centroid_model(const std::vector<FeedbackMentions>& docs, const std::vector<double>& centroid,
                              const Filter& f) {
  Weights w;
  for (const auto& d : docs) {
    for (const auto& [k, p] : doc_distribution(d.mentions, centroid, f)) w[k] += p * d.posterior;
  }
  return w;
}

/// Term pooling with a direct product (no logs) or a max, normalized over
/// the document's allowed stems.
inline Weights doc_pooled(const std::vector<Mention>& mentions, const std::vector<std::vector<double>>& query_terms,
                          bool product, const Filter& f, double floor = 1e-12) {
  std::vector<Weights> per_term;
  for (const auto& q : query_terms) {
    per_term.push_back(doc_distribution(mentions, q, f));
    if (per_term.back().empty()) return {};
  }
  Weights pooled;
  for (const auto& [stem, unused] : per_term.front()) {
    double v = product ? 1.0 : 0.0;
    for (const auto& pt : per_term) {
      const double p = pt.at(stem);
      v = product ? v * std::max(p, floor) : std::max(v, p);
    }
    pooled[stem] = v;
  }
  double z = 0;
  for (auto& [k, x] : pooled) z += x;
  if (z == 0) return {};
  for (auto& [k, x] : pooled) x /= z;
  return pooled;
}

inline Weights pooled_model(const std::vector<FeedbackMentions>& docs, const std::vector<std::vector<double>>& query_terms,
                            bool product, const Filter& f) {
  Weights w;
  for (const auto& d : docs) {
    for (const auto& [k, p] : doc_pooled(d.mentions, query_terms, product, f)) w[k] += p * d.posterior;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Metrics, O(n^2) where natural
// ---------------------------------------------------------------------------

inline double average_precision(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades,
                                 std::size_t cutoff) {
  std::size_t rel = 0;
  for (const auto& [d, g] : grades) rel += g >= 1;
  if (rel == 0) return 0;
  double sum = 0;
  for (std::size_t i = 0; i < ranked.size() && i < cutoff; ++i) {
    auto it = grades.find(ranked[i]);
    if (it == grades.end() || it->second < 1) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      auto jt = grades.find(ranked[j]);
      hits += jt != grades.end() && jt->second >= 1;
    }
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(rel);
}

inline double precision(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades, std::size_t k) {
  double hits = 0;
  for (std::size_t i = 0; i < k && i < ranked.size(); ++i) {
    auto it = grades.find(ranked[i]);
    hits += it != grades.end() && it->second >= 1;
  }
  return hits / static_cast<double>(k);
}

inline double recall(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades, std::size_t k) {
  double rel = 0, hits = 0;
  for (const auto& [d, g] : grades) {
    if (g < 1) continue;
    rel += 1;
    for (std::size_t i = 0; i < k && i < ranked.size(); ++i) hits += ranked[i] == d;
  }
  return rel == 0 ? 0 : hits / rel;
}

inline double ndcg(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades, std::size_t k) {
  double dcg = 0;
  for (std::size_t i = 0; i < k && i < ranked.size(); ++i) {
    auto it = grades.find(ranked[i]);
    const int g = it == grades.end() ? 0 : it->second;
    dcg += (std::pow(2.0, g) - 1.0) / (std::log(static_cast<double>(i) + 2.0) / std::log(2.0));
  }
  std::vector<int> ideal;
  for (const auto& [d, g] : grades) ideal.push_back(g);
  // selection sort, descending
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    for (std::size_t j = i + 1; j < ideal.size(); ++j) {
      if (ideal[j] > ideal[i]) std::swap(ideal[i], ideal[j]);
    }
  }
  double idcg = 0;
  for (std::size_t i = 0; i < k && i < ideal.size(); ++i) {
    idcg += (std::pow(2.0, ideal[i]) - 1.0) / (std::log(static_cast<double>(i) + 2.0) / std::log(2.0));
  }
  return idcg == 0 ? 0 : dcg / idcg;
}

}  // namespace oracle
