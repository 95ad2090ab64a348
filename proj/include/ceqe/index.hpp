#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ceqe/analysis.hpp"
#include "ceqe/binary_io.hpp"
#include "ceqe/corpus.hpp"
#include "ceqe/error.hpp"
#include "ceqe/ranking.hpp"

namespace ceqe {

struct Posting {
  std::uint32_t doc = 0;  // dense document number, ascending doc_id order
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

struct TermEntry {
  std::string stem;
  std::uint64_t cf = 0;
  std::vector<Posting> postings;
};

/// Immutable inverted index over non-stopword stems.
///
/// Documents are numbered in ascending doc_id order, so the index (and its
/// file image) does not depend on ingestion order. Document length counts
/// indexed (non-stopword) tokens only.
class Index {
 public:
  static constexpr std::string_view kMagic = "CEQE-IDX";
  static constexpr std::uint32_t kVersion = 1;

  Index() = default;

  /// Builds from analyzed documents. Duplicate or empty doc_ids raise Error.
  static Index build(std::span<const Document> docs, const Analyzer& analyzer = Analyzer()) {
    Index index;
    index.stemmer_ = analyzer.stemmer();
    index.stopwords_ = analyzer.stopwords().sorted_words();
    index.analyzer_ = analyzer;

    std::vector<const Document*> order;
    order.reserve(docs.size());
    for (const auto& d : docs) {
      if (d.doc_id.empty()) throw Error("document with empty doc_id");
      order.push_back(&d);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (order[i]->doc_id == order[i - 1]->doc_id) throw Error("duplicate doc_id '" + order[i]->doc_id + "'");
    }

    std::map<std::string, std::vector<Posting>> postings;
    for (std::uint32_t doc = 0; doc < order.size(); ++doc) {
      std::map<std::string_view, std::uint32_t> counts;
      std::uint64_t length = 0;
      for (const auto& tok : order[doc]->tokens) {
        if (tok.is_stopword || tok.stem.empty()) continue;
        ++counts[tok.stem];
        ++length;
      }
      index.doc_ids_.push_back(order[doc]->doc_id);
      index.doc_lengths_.push_back(length);
      index.collection_length_ += length;
      for (const auto& [stem, tf] : counts) postings[std::string(stem)].push_back({doc, tf});
    }
    for (auto& [stem, list] : postings) {
      TermEntry entry;
      entry.stem = stem;
      for (const auto& p : list) entry.cf += p.tf;
      entry.postings = std::move(list);
      index.terms_.push_back(std::move(entry));
    }
    index.finish();
    return index;
  }

  // --- collection statistics ---
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  std::size_t term_count() const noexcept { return terms_.size(); }
  std::uint64_t collection_length() const noexcept { return collection_length_; }
  double average_doc_length() const noexcept {
    return doc_ids_.empty() ? 0.0 : static_cast<double>(collection_length_) / static_cast<double>(doc_ids_.size());
  }

  // --- documents ---
  const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
  std::uint64_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
  std::optional<std::uint32_t> find_doc(std::string_view doc_id) const {
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc_id);
    if (it == doc_ids_.end() || *it != doc_id) return std::nullopt;
    return static_cast<std::uint32_t>(it - doc_ids_.begin());
  }
  std::uint32_t require_doc(std::string_view doc_id) const {
    auto doc = find_doc(doc_id);
    if (!doc) throw NotFoundError("unknown doc_id '" + std::string(doc_id) + "'");
    return *doc;
  }
  /// (term id, tf) pairs of one document, ascending term id.
  const std::vector<Posting>& doc_terms(std::uint32_t doc) const { return forward_.at(doc); }

  // --- vocabulary ---
  std::optional<std::uint32_t> find_term(std::string_view stem) const {
    auto it = term_lookup_.find(std::string(stem));
    if (it == term_lookup_.end()) return std::nullopt;
    return it->second;
  }
  const TermEntry& term(std::uint32_t id) const { return terms_.at(id); }
  std::uint64_t collection_frequency(std::string_view stem) const {
    auto id = find_term(stem);
    return id ? terms_[*id].cf : 0;
  }
  std::uint32_t term_frequency(std::string_view stem, std::uint32_t doc) const {
    auto id = find_term(stem);
    if (!id) return 0;
    const auto& list = terms_[*id].postings;
    auto it = std::lower_bound(list.begin(), list.end(), doc, [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return (it != list.end() && it->doc == doc) ? it->tf : 0;
  }

  /// p(w|C) = cf / |C|, floored at 1/(2|C|) for unseen stems.
  double collection_probability(std::string_view stem) const {
    const double len = static_cast<double>(std::max<std::uint64_t>(collection_length_, 1));
    const auto cf = collection_frequency(stem);
    return cf == 0 ? 1.0 / (2.0 * len) : static_cast<double>(cf) / len;
  }

  /// The analyzer the index was built with; queries must use the same one.
  const Analyzer& analyzer() const noexcept { return analyzer_; }

  // --- persistence ---
  std::string serialize() const {
    io::ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(stemmer_));
    w.u64(stopwords_.size());
    for (const auto& s : stopwords_) w.str(s);
    w.u64(doc_ids_.size());
    w.u64(terms_.size());
    w.u64(collection_length_);
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
      w.str(doc_ids_[d]);
      w.u64(doc_lengths_[d]);
    }
    for (const auto& t : terms_) {
      w.str(t.stem);
      w.u64(t.cf);
      w.u32(static_cast<std::uint32_t>(t.postings.size()));
      for (const auto& p : t.postings) {
        w.u32(p.doc);
        w.u32(p.tf);
      }
    }
    return w.take();
  }

  static Index deserialize(std::string_view bytes) {
    io::ByteReader r(bytes, "index");
    if (r.raw(kMagic.size()) != kMagic) throw ParseError("index: bad magic bytes", 0);
    if (auto v = r.u32(); v != kVersion) throw ParseError("index: unsupported format version " + std::to_string(v), 8);
    Index index;
    auto stemmer = r.u32();
    if (stemmer > 2) throw ParseError("index: unknown stemmer code " + std::to_string(stemmer), 12);
    index.stemmer_ = static_cast<StemmerId>(stemmer);
    auto nstop = r.u64();
    for (std::uint64_t i = 0; i < nstop; ++i) index.stopwords_.push_back(r.str());
    index.analyzer_ = Analyzer(index.stemmer_, StopwordSet(index.stopwords_));
    auto ndocs = r.u64();
    auto nterms = r.u64();
    index.collection_length_ = r.u64();
    for (std::uint64_t d = 0; d < ndocs; ++d) {
      index.doc_ids_.push_back(r.str());
      index.doc_lengths_.push_back(r.u64());
    }
    for (std::uint64_t t = 0; t < nterms; ++t) {
      TermEntry e;
      e.stem = r.str();
      e.cf = r.u64();
      auto df = r.u32();
      e.postings.reserve(df);
      for (std::uint32_t i = 0; i < df; ++i) {
        Posting p;
        p.doc = r.u32();
        p.tf = r.u32();
        if (p.doc >= ndocs) throw ParseError("index: posting references document " + std::to_string(p.doc), r.position());
        e.postings.push_back(p);
      }
      index.terms_.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw ParseError("index: trailing bytes", r.position());
    index.finish();
    return index;
  }

  void save(const std::string& path) const { io::write_file(path, serialize()); }
  static Index load(const std::string& path) { return deserialize(read_file(path)); }

 private:
  void finish() {
    term_lookup_.clear();
    forward_.assign(doc_ids_.size(), {});
    for (std::uint32_t id = 0; id < terms_.size(); ++id) {
      term_lookup_.emplace(terms_[id].stem, id);
      for (const auto& p : terms_[id].postings) forward_[p.doc].push_back({id, p.tf});
    }
  }

  StemmerId stemmer_ = StemmerId::krovetz;
  std::vector<std::string> stopwords_;
  Analyzer analyzer_;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint64_t> doc_lengths_;
  std::uint64_t collection_length_ = 0;
  std::vector<TermEntry> terms_;
  std::unordered_map<std::string, std::uint32_t> term_lookup_;
  std::vector<std::vector<Posting>> forward_;  // Posting::doc holds the term id here
};

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

namespace detail {

inline Ranking top_k(std::string query_id, const Index& index, const std::vector<double>& scores,
                     const std::vector<bool>& scored, std::size_t k) {
  std::vector<std::uint32_t> docs;
  for (std::uint32_t d = 0; d < scores.size(); ++d) {
    if (scored[d]) docs.push_back(d);
  }
  // Dense doc numbers follow doc_id order, so comparing numbers breaks ties by doc_id.
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t n = std::min(k, docs.size());
  std::partial_sort(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n), docs.end(), better);
  Ranking ranking;
  ranking.query_id = std::move(query_id);
  ranking.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ranking.entries.push_back({index.doc_id(docs[i]), scores[docs[i]]});
  return ranking;
}

}  // namespace detail

/// Okapi BM25 idf, ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
inline double bm25_idf(std::uint64_t df, std::uint64_t num_docs) {
  const double n = static_cast<double>(num_docs);
  const double f = static_cast<double>(df);
  return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

/// Top-k documents by BM25 over the query's non-stopword tokens. Only
/// documents containing at least one query stem are ranked; a query whose
/// stems are all out of vocabulary yields an empty ranking.
inline Ranking bm25_search(const Index& index, std::span<const Token> query, std::size_t k, double b, double k1,
                           std::string query_id = {}) {
  if (k < 1) throw ConfigError("bm25: k must be >= 1");
  if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25: b must be in [0,1]");
  if (!(k1 > 0.0)) throw ConfigError("bm25: k1 must be > 0");

  std::vector<double> scores(index.doc_count(), 0.0);
  std::vector<bool> scored(index.doc_count(), false);
  const double avgdl = index.average_doc_length();
  for (const auto& tok : query) {
    if (tok.is_stopword) continue;
    auto id = index.find_term(tok.stem);
    if (!id) continue;
    const auto& entry = index.term(*id);
    const double idf = bm25_idf(entry.postings.size(), index.doc_count());
    for (const auto& p : entry.postings) {
      const double tf = p.tf;
      const double norm = avgdl > 0.0 ? static_cast<double>(index.doc_length(p.doc)) / avgdl : 0.0;
      scores[p.doc] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
      scored[p.doc] = true;
    }
  }
  return detail::top_k(std::move(query_id), index, scores, scored, k);
}

inline Ranking bm25_search(const Index& index, std::span<const Token> query, std::size_t k,
                           const Bm25Params& params = {}, std::string query_id = {}) {
  return bm25_search(index, query, k, params.b, params.k1, std::move(query_id));
}

/// log[(tf + mu p(w|C)) / (|D| + mu)] for one stem in one document.
inline double ql_term_log_prob(const Index& index, std::string_view stem, std::uint32_t doc, double mu) {
  const double tf = index.term_frequency(stem, doc);
  const double len = static_cast<double>(index.doc_length(doc));
  return std::log((tf + mu * index.collection_probability(stem)) / (len + mu));
}

/// Dirichlet-smoothed query log-likelihood of `doc_id` over the query's
/// non-stopword tokens.
inline double ql_log_score(const Index& index, std::span<const Token> query, std::string_view doc_id, double mu) {
  if (!(mu > 0.0)) throw ConfigError("ql: mu must be > 0");
  const auto doc = index.require_doc(doc_id);
  double score = 0.0;
  for (const auto& tok : query) {
    if (!tok.is_stopword) score += ql_term_log_prob(index, tok.stem, doc, mu);
  }
  return score;
}

/// Scores every document by sum_w weight(w) * log p(w|D) under Dirichlet
/// smoothing and returns the top k.
///
/// The score is split into a length-only part shared by documents lacking
/// the term and a per-posting correction, so cost is O(N + postings).
inline Ranking weighted_ql_search(const Index& index, std::span<const std::pair<std::string, double>> model,
                                  std::size_t k, double mu, std::string query_id = {}) {
  if (k < 1) throw ConfigError("ql: k must be >= 1");
  if (!(mu > 0.0)) throw ConfigError("ql: mu must be > 0");
  const std::size_t n = index.doc_count();
  double background = 0.0;  // sum_w weight * log(mu p(w|C))
  double total_weight = 0.0;
  std::vector<double> scores(n, 0.0);
  for (const auto& [stem, weight] : model) {
    const double pc = index.collection_probability(stem);
    background += weight * std::log(mu * pc);
    total_weight += weight;
    if (auto id = index.find_term(stem)) {
      for (const auto& p : index.term(*id).postings) {
        scores[p.doc] += weight * (std::log(static_cast<double>(p.tf) + mu * pc) - std::log(mu * pc));
      }
    }
  }
  for (std::uint32_t d = 0; d < n; ++d) {
    scores[d] += background - total_weight * std::log(static_cast<double>(index.doc_length(d)) + mu);
  }
  return detail::top_k(std::move(query_id), index, scores, std::vector<bool>(n, true), k);
}

}  // namespace ceqe
