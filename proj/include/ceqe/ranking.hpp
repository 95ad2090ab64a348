#pragma once

#include <algorithm>
#include <string>
#include <vector>

namespace ceqe {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

/// Ranked result list for one query: descending score, ties by ascending doc_id.
struct Ranking {
  std::string query_id;
  std::vector<ScoredDoc> entries;

  bool operator==(const Ranking&) const = default;
  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
};

/// Strict weak order used for every ranked list in the library.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

inline void sort_ranking(Ranking& ranking) {
  std::sort(ranking.entries.begin(), ranking.entries.end(), ranks_before);
}

}  // namespace ceqe
