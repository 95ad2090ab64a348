#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "ceqe/error.hpp"
#include "ceqe/ranking.hpp"

namespace ceqe {

// ---------------------------------------------------------------------------
// Qrels
// ---------------------------------------------------------------------------

struct QrelEntry {
  std::string query_id;
  std::string iteration = "0";
  std::string doc_id;
  int grade = 0;

  bool operator==(const QrelEntry&) const = default;
};

/// Graded judgments. Unjudged (query, doc) pairs count as grade 0.
class Qrels {
 public:
  Qrels() = default;
  explicit Qrels(std::vector<QrelEntry> entries) {
    for (auto& e : entries) add(std::move(e));
  }

  void add(QrelEntry e) {
    if (e.grade < 0) throw Error("qrels: negative grade for (" + e.query_id + ", " + e.doc_id + ")");
    grades_[e.query_id][e.doc_id] = e.grade;
    entries_.push_back(std::move(e));
  }

  int grade(std::string_view query_id, std::string_view doc_id) const {
    auto q = grades_.find(std::string(query_id));
    if (q == grades_.end()) return 0;
    auto d = q->second.find(std::string(doc_id));
    return d == q->second.end() ? 0 : d->second;
  }
  bool is_relevant(std::string_view query_id, std::string_view doc_id) const { return grade(query_id, doc_id) >= 1; }

  std::size_t relevant_count(std::string_view query_id) const {
    auto q = grades_.find(std::string(query_id));
    if (q == grades_.end()) return 0;
    return static_cast<std::size_t>(std::count_if(q->second.begin(), q->second.end(), [](auto& kv) { return kv.second >= 1; }));
  }
  /// Grades of the query's judged documents, for ideal-DCG computation.
  std::vector<int> grades_of(std::string_view query_id) const {
    std::vector<int> g;
    auto q = grades_.find(std::string(query_id));
    if (q != grades_.end()) {
      for (const auto& [doc, grade] : q->second) g.push_back(grade);
    }
    return g;
  }
  std::vector<std::string> query_ids() const {
    std::vector<std::string> ids;
    for (const auto& [q, docs] : grades_) ids.push_back(q);
    return ids;
  }
  bool has_query(std::string_view query_id) const { return grades_.count(std::string(query_id)) != 0; }
  const std::vector<QrelEntry>& entries() const noexcept { return entries_; }

  bool operator==(const Qrels& other) const { return entries_ == other.entries_; }

 private:
  std::vector<QrelEntry> entries_;
  std::map<std::string, std::unordered_map<std::string, int>> grades_;
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    fields.emplace_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    f(line, line_no);
  }
}

inline bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Parses `qid iter docid grade` lines.
inline Qrels parse_qrels(std::string_view text) {
  Qrels qrels;
  detail::for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    auto f = detail::split_ws(line);
    if (f.empty()) return;
    long long grade = 0;
    if (f.size() != 4 || !detail::parse_int(f[3], grade)) {
      throw ParseError("qrels line " + std::to_string(line_no) + ": expected 'qid iter docid grade'", line_no);
    }
    if (grade < 0) throw ParseError("qrels line " + std::to_string(line_no) + ": negative grade", line_no);
    qrels.add({f[0], f[1], f[2], static_cast<int>(grade)});
  });
  return qrels;
}

inline std::string write_qrels(const Qrels& qrels) {
  std::string out;
  for (const auto& e : qrels.entries()) {
    out += e.query_id + " " + e.iteration + " " + e.doc_id + " " + std::to_string(e.grade) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct Run {
  std::string tag;
  std::vector<Ranking> rankings;  // file order

  const Ranking* find(std::string_view query_id) const {
    for (const auto& r : rankings) {
      if (r.query_id == query_id) return &r;
    }
    return nullptr;
  }
};

/// `qid Q0 docid rank score tag`, ranks 1-based, scores with 6 decimals.
inline std::string write_run(const Ranking& ranking, std::string_view tag) {
  std::string out;
  char score[64];
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    std::snprintf(score, sizeof(score), "%.6f", ranking.entries[i].score);
    out += ranking.query_id;
    out += " Q0 ";
    out += ranking.entries[i].doc_id;
    out += ' ';
    out += std::to_string(i + 1);
    out += ' ';
    out += score;
    out += ' ';
    out += tag;
    out += '\n';
  }
  return out;
}

inline std::string write_run(const Run& run) {
  std::string out;
  for (const auto& r : run.rankings) out += write_run(r, run.tag);
  return out;
}

/// Parses a run file. Each query's lines must be contiguous with ranks
/// 1, 2, 3, ... in order; any gap or repeat is an error naming the line.
inline Run parse_run(std::string_view text) {
  Run run;
  std::set<std::string> finished;
  detail::for_each_line(text, [&](std::string_view line, std::uint64_t line_no) {
    auto f = detail::split_ws(line);
    if (f.empty()) return;
    long long rank = 0;
    double score = 0.0;
    if (f.size() != 6 || !detail::parse_int(f[3], rank) || !detail::parse_double(f[4], score)) {
      throw ParseError("run line " + std::to_string(line_no) + ": expected 'qid Q0 docid rank score tag'", line_no);
    }
    if (run.rankings.empty() || run.rankings.back().query_id != f[0]) {
      if (!run.rankings.empty()) finished.insert(run.rankings.back().query_id);
      if (finished.count(f[0]) != 0) {
        throw ParseError("run line " + std::to_string(line_no) + ": query '" + f[0] + "' is not contiguous", line_no);
      }
      run.rankings.push_back({f[0], {}});
    }
    auto& ranking = run.rankings.back();
    if (rank != static_cast<long long>(ranking.entries.size()) + 1) {
      throw ParseError("run line " + std::to_string(line_no) + ": rank " + std::to_string(rank) + " follows rank " +
                           std::to_string(ranking.entries.size()),
                       line_no);
    }
    if (run.tag.empty()) run.tag = f[5];
    ranking.entries.push_back({f[2], score});
  });
  return run;
}

// ---------------------------------------------------------------------------
// Metrics (binary relevance is grade >= 1)
// ---------------------------------------------------------------------------

inline double precision_at(const Ranking& ranking, const Qrels& qrels, std::size_t k) {
  if (k == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (qrels.is_relevant(ranking.query_id, ranking.entries[i].doc_id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

/// nullopt when the query has no relevant documents.
inline std::optional<double> recall_at(const Ranking& ranking, const Qrels& qrels, std::size_t k) {
  const auto total = qrels.relevant_count(ranking.query_id);
  if (total == 0) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (qrels.is_relevant(ranking.query_id, ranking.entries[i].doc_id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

/// Average precision truncated at `cutoff`; nullopt without relevant docs.
inline std::optional<double> average_precision(const Ranking& ranking, const Qrels& qrels, std::size_t cutoff = 1000) {
  const auto total = qrels.relevant_count(ranking.query_id);
  if (total == 0) return std::nullopt;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(cutoff, ranking.size()); ++i) {
    if (qrels.is_relevant(ranking.query_id, ranking.entries[i].doc_id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

/// NDCG@k with gain 2^grade - 1 and discount log2(rank + 1); 0 when the
/// ideal DCG is 0.
inline double ndcg(const Ranking& ranking, const Qrels& qrels, std::size_t k) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    const int g = qrels.grade(ranking.query_id, ranking.entries[i].doc_id);
    if (g > 0) dcg += (std::exp2(static_cast<double>(g)) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  auto grades = qrels.grades_of(ranking.query_id);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
    if (grades[i] > 0) ideal += (std::exp2(static_cast<double>(grades[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return ideal > 0.0 ? dcg / ideal : 0.0;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Metric names in report order.
inline const std::vector<std::string>& standard_metrics() {
  static const std::vector<std::string> names = {"P@10",   "P@20",   "NDCG@10",    "NDCG@20",
                                                 "AP@1000", "Recall@100", "Recall@1000"};
  return names;
}

inline double compute_metric(std::string_view name, const Ranking& ranking, const Qrels& qrels) {
  auto cut = [&](std::string_view prefix) {
    return static_cast<std::size_t>(std::stoul(std::string(name.substr(prefix.size()))));
  };
  if (name.rfind("P@", 0) == 0) return precision_at(ranking, qrels, cut("P@"));
  if (name.rfind("NDCG@", 0) == 0) return ndcg(ranking, qrels, cut("NDCG@"));
  if (name.rfind("AP@", 0) == 0) return average_precision(ranking, qrels, cut("AP@")).value_or(0.0);
  if (name.rfind("Recall@", 0) == 0) return recall_at(ranking, qrels, cut("Recall@")).value_or(0.0);
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

struct MetricReport {
  std::vector<std::string> metrics;
  std::map<std::string, std::map<std::string, double>> per_query;
  std::map<std::string, double> mean;
  std::vector<std::string> excluded;  // judged queries without any relevant document
  std::vector<std::string> warnings;

  double value(std::string_view query_id, std::string_view metric) const {
    return per_query.at(std::string(query_id)).at(std::string(metric));
  }
};

/// Evaluates every qrels query that has at least one relevant document.
/// Such a query missing from the run scores 0; run queries absent from the
/// qrels are reported as orphans.
inline MetricReport evaluate_run(const Run& run, const Qrels& qrels,
                                 const std::vector<std::string>& metrics = standard_metrics()) {
  MetricReport report;
  report.metrics = metrics;
  for (const auto& r : run.rankings) {
    if (!qrels.has_query(r.query_id)) report.warnings.push_back("run query '" + r.query_id + "' has no judgments");
  }
  for (const auto& qid : qrels.query_ids()) {
    if (qrels.relevant_count(qid) == 0) {
      report.excluded.push_back(qid);
      continue;
    }
    const Ranking* r = run.find(qid);
    Ranking empty{qid, {}};
    if (r == nullptr) {
      report.warnings.push_back("judged query '" + qid + "' missing from run");
      r = &empty;
    }
    auto& row = report.per_query[qid];
    for (const auto& m : metrics) row[m] = compute_metric(m, *r, qrels);
  }
  for (const auto& m : metrics) {
    double s = 0.0;
    for (const auto& [qid, row] : report.per_query) s += row.at(m);
    report.mean[m] = report.per_query.empty() ? 0.0 : s / static_cast<double>(report.per_query.size());
  }
  return report;
}

/// trec_eval-style `metric<TAB>qid<TAB>value` rows, then `all` means.
inline std::string format_report_tsv(const MetricReport& report) {
  std::string out;
  char buf[64];
  for (const auto& [qid, row] : report.per_query) {
    for (const auto& m : report.metrics) {
      std::snprintf(buf, sizeof(buf), "%.6f", row.at(m));
      out += m + "\t" + qid + "\t" + buf + "\n";
    }
  }
  for (const auto& m : report.metrics) {
    std::snprintf(buf, sizeof(buf), "%.6f", report.mean.at(m));
    out += m + "\tall\t" + buf + "\n";
  }
  return out;
}

inline nlohmann::json report_json(const MetricReport& report) {
  nlohmann::json j;
  j["metrics"] = report.metrics;
  j["mean"] = report.mean;
  j["per_query"] = report.per_query;
  j["num_queries"] = report.per_query.size();
  j["excluded"] = report.excluded;
  j["warnings"] = report.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  /// Zero variance of the differences; p is 1 if every difference is 0,
  /// otherwise the p -> 0 limit.
  bool degenerate = false;
};

/// Two-sided paired t-test on a - b with n - 1 degrees of freedom.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("paired_t_test: samples differ in length");
  if (a.size() < 2) throw Error("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult res;
  res.n = n;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    res.degenerate = true;
    if (mean == 0.0) {
      res.t = 0.0;
      res.p_value = 1.0;
    } else {
      res.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      res.p_value = 0.0;
    }
    return res;
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  res.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(res.t)));
  return res;
}

}  // namespace ceqe
