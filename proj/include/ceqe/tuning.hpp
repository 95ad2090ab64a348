#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ceqe/error.hpp"
#include "ceqe/eval.hpp"

namespace ceqe {

/// folds[i] lists the query ids held out in fold i.
struct FoldAssignment {
  std::vector<std::vector<std::string>> folds;

  std::size_t size() const noexcept { return folds.size(); }
};

/// Lines `fold_index<TAB>query_id`; fold indices must be 0..k-1 with none
/// empty, and a query may appear only once.
inline FoldAssignment parse_folds(std::string_view text) {
  std::map<long long, std::vector<std::string>> by_fold;
  std::set<std::string> seen;
  detail::for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    auto f = detail::split_ws(line);
    if (f.empty()) return;
    long long fold = 0;
    if (f.size() != 2 || !detail::parse_int(f[0], fold) || fold < 0) {
      throw ParseError("fold file line " + std::to_string(line_no) + ": expected 'fold_index<TAB>query_id'", line_no);
    }
    if (!seen.insert(f[1]).second) {
      throw ParseError("fold file line " + std::to_string(line_no) + ": query '" + f[1] + "' assigned twice", line_no);
    }
    by_fold[fold].push_back(f[1]);
  });
  FoldAssignment out;
  long long expect = 0;
  for (auto& [idx, ids] : by_fold) {
    if (idx != expect) throw ParseError("fold file: fold " + std::to_string(expect) + " is empty", 0);
    out.folds.push_back(std::move(ids));
    ++expect;
  }
  return out;
}

inline std::string format_folds(const FoldAssignment& folds) {
  std::string out;
  for (std::size_t i = 0; i < folds.folds.size(); ++i) {
    for (const auto& q : folds.folds[i]) out += std::to_string(i) + "\t" + q + "\n";
  }
  return out;
}

/// splitmix64; fixed so fold splits are identical across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::uint64_t state_;
};

/// Shuffles the sorted topic list with the seed and deals topics round-robin
/// into k folds.
inline FoldAssignment random_folds(std::vector<std::string> topics, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (topics.size() < k) throw ConfigError("fewer topics than folds");
  std::sort(topics.begin(), topics.end());
  SplitMix64 rng(seed);
  for (std::size_t i = topics.size(); i > 1; --i) std::swap(topics[i - 1], topics[rng.below(i)]);
  FoldAssignment out;
  out.folds.resize(k);
  for (std::size_t i = 0; i < topics.size(); ++i) out.folds[i % k].push_back(topics[i]);
  for (auto& f : out.folds) std::sort(f.begin(), f.end());
  return out;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridPoint {
  std::size_t fb_docs = 10;
  std::size_t fb_terms = 20;
  double lambda = 0.5;

  bool operator==(const GridPoint&) const = default;
};

inline std::vector<double> lambda_grid() {
  std::vector<double> out;
  for (int i = 10; i <= 90; i += 5) out.push_back(i / 100.0);
  return out;
}

/// The full expansion grid: fb_docs 5..100 by 5, fb_terms 10..100 by 10,
/// lambda 0.10..0.90 by 0.05.
inline std::vector<GridPoint> expansion_grid() {
  std::vector<GridPoint> grid;
  for (std::size_t d = 5; d <= 100; d += 5) {
    for (std::size_t t = 10; t <= 100; t += 10) {
      for (double l : lambda_grid()) grid.push_back({d, t, l});
    }
  }
  return grid;
}

template <typename Params>
struct FoldResult {
  std::size_t fold = 0;
  std::size_t grid_index = 0;
  Params params{};
  double train_score = 0.0;
  std::vector<std::string> test_queries;  // evaluable held-out queries
};

template <typename Params>
struct CvResult {
  std::string target;
  std::vector<FoldResult<Params>> folds;
  /// Held-out metrics for every evaluable query under its fold's selection.
  MetricReport pooled;
};

namespace detail {

inline double mean_over(const MetricReport& report, std::span<const std::string> queries, const std::string& metric,
                        std::size_t& counted) {
  double s = 0.0;
  counted = 0;
  for (const auto& q : queries) {
    auto it = report.per_query.find(q);
    if (it == report.per_query.end()) continue;
    s += it->second.at(metric);
    ++counted;
  }
  return counted == 0 ? 0.0 : s / static_cast<double>(counted);
}

}  // namespace detail

/// K-fold grid search. `evaluate(params)` returns a MetricReport over all
/// topics; a query is evaluable when it appears in the report. For each fold
/// the grid point with the best mean `target` on the training topics wins,
/// ties going to the earlier grid point, and only held-out rows of that
/// point's report enter the pooled result.
template <typename Params, typename Evaluate>
CvResult<Params> grid_search_cv(const FoldAssignment& folds, std::span<const Params> grid, Evaluate&& evaluate,
                                const std::string& target = "AP@1000") {
  if (grid.empty()) throw ConfigError("grid search: empty grid");
  if (folds.size() < 2) throw ConfigError("grid search: need at least 2 folds");
  std::vector<MetricReport> reports;
  reports.reserve(grid.size());
  for (const auto& p : grid) reports.push_back(evaluate(p));

  CvResult<Params> result;
  result.target = target;
  result.pooled.metrics = reports.front().metrics;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::string> train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train.insert(train.end(), folds.folds[g].begin(), folds.folds[g].end());
    }
    FoldResult<Params> fr;
    fr.fold = f;
    bool have = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::size_t counted = 0;
      const double score = detail::mean_over(reports[i], train, target, counted);
      if (counted == 0) throw Error("grid search: fold " + std::to_string(f) + " has no evaluable training queries");
      if (!have || score > fr.train_score) {
        fr.train_score = score;
        fr.grid_index = i;
        have = true;
      }
    }
    fr.params = grid[fr.grid_index];
    const auto& chosen = reports[fr.grid_index];
    for (const auto& q : folds.folds[f]) {
      auto it = chosen.per_query.find(q);
      if (it == chosen.per_query.end()) continue;
      fr.test_queries.push_back(q);
      result.pooled.per_query[q] = it->second;
    }
    if (fr.test_queries.empty()) throw Error("grid search: fold " + std::to_string(f) + " has no evaluable queries");
    result.folds.push_back(std::move(fr));
  }
  for (const auto& m : result.pooled.metrics) {
    double s = 0.0;
    for (const auto& [q, row] : result.pooled.per_query) s += row.at(m);
    result.pooled.mean[m] = s / static_cast<double>(result.pooled.per_query.size());
  }
  return result;
}

}  // namespace ceqe
