#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ceqe/binary_io.hpp"
#include "ceqe/corpus.hpp"
#include "ceqe/embedding.hpp"
#include "ceqe/error.hpp"

namespace ceqe {

/// One occurrence of one word in one document chunk, with its vector.
struct MentionEmbedding {
  std::string stem;
  std::string doc_id;
  std::uint32_t chunk_index = 0;
  std::uint32_t position = 0;  // token position within the document
  std::vector<float> vector;

  bool operator==(const MentionEmbedding&) const = default;
};

/// Read-side view of a stored mention; the vector points into the store.
struct MentionView {
  std::uint32_t chunk_index = 0;
  std::uint32_t position = 0;
  std::span<const float> vector;
};

// File layout (all integers little-endian, see docs/formats.md):
//
//   header    magic "CEQE-MNT", u32 version, u32 dim, u64 doc_count,
//             u64 entry_count, u64 mention_count, u64 string_bytes
//   strings   string_bytes bytes, zero-padded to a multiple of 8
//   docs      doc_count    x {u32 offset, u32 length}           sorted by doc_id
//   entries   entry_count  x {u32 doc, u32 stem_offset, u32 stem_length,
//                             u32 mention_count, u64 first_mention} sorted by (doc_id, stem)
//   mentions  mention_count x {u32 chunk_index, u32 position}   grouped by entry
//   vectors   mention_count x dim x f32
inline constexpr std::string_view kMentionStoreMagic = "CEQE-MNT";
inline constexpr std::uint32_t kMentionStoreVersion = 1;

/// Accumulates mentions and writes the binary store.
class MentionStoreWriter {
 public:
  explicit MentionStoreWriter(std::size_t dimension) : dim_(dimension) {
    if (dim_ == 0) throw ConfigError("mention store: dimension must be > 0");
  }

  /// Registers a document even if it ends up with no mentions, so lookups
  /// can tell "unknown document" from "no mentions".
  void add_document(std::string_view doc_id) { docs_.insert(std::string(doc_id)); }

  void add(MentionEmbedding m) {
    if (m.vector.size() != dim_) {
      throw Error("mention store: vector dimension " + std::to_string(m.vector.size()) + " != " + std::to_string(dim_));
    }
    for (float x : m.vector) {
      if (!std::isfinite(x)) throw Error("mention store: non-finite vector component in '" + m.doc_id + "'");
    }
    if (!keys_.emplace(m.doc_id, m.chunk_index, m.position).second) {
      throw Error("mention store: duplicate mention (" + m.doc_id + ", " + std::to_string(m.chunk_index) + ", " +
                  std::to_string(m.position) + ")");
    }
    docs_.insert(m.doc_id);
    mentions_.push_back(std::move(m));
  }

  std::size_t size() const noexcept { return mentions_.size(); }

  std::string serialize() const {
    std::vector<const MentionEmbedding*> order;
    order.reserve(mentions_.size());
    for (const auto& m : mentions_) order.push_back(&m);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) {
      return std::tie(a->doc_id, a->stem, a->chunk_index, a->position) <
             std::tie(b->doc_id, b->stem, b->chunk_index, b->position);
    });

    std::string pool;
    std::map<std::string, std::uint32_t> offsets;
    auto intern = [&](const std::string& s) {
      auto [it, inserted] = offsets.try_emplace(s, static_cast<std::uint32_t>(pool.size()));
      if (inserted) pool += s;
      return it->second;
    };
    std::vector<std::pair<std::uint32_t, std::uint32_t>> doc_table;
    std::map<std::string, std::uint32_t> doc_number;
    for (const auto& d : docs_) {
      doc_number.emplace(d, static_cast<std::uint32_t>(doc_table.size()));
      doc_table.emplace_back(intern(d), static_cast<std::uint32_t>(d.size()));
    }

    struct Entry {
      std::uint32_t doc, stem_offset, stem_length, count;
      std::uint64_t first;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto* m = order[i];
      if (entries.empty() || i == 0 || order[i - 1]->doc_id != m->doc_id || order[i - 1]->stem != m->stem) {
        entries.push_back({doc_number.at(m->doc_id), intern(m->stem), static_cast<std::uint32_t>(m->stem.size()), 0, i});
      }
      ++entries.back().count;
    }

    io::ByteWriter w;
    w.raw(kMentionStoreMagic);
    w.u32(kMentionStoreVersion);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u64(doc_table.size());
    w.u64(entries.size());
    w.u64(order.size());
    w.u64(pool.size());
    w.raw(pool);
    w.pad_to(8);
    for (const auto& [off, len] : doc_table) {
      w.u32(off);
      w.u32(len);
    }
    for (const auto& e : entries) {
      w.u32(e.doc);
      w.u32(e.stem_offset);
      w.u32(e.stem_length);
      w.u32(e.count);
      w.u64(e.first);
    }
    for (const auto* m : order) {
      w.u32(m->chunk_index);
      w.u32(m->position);
    }
    for (const auto* m : order) {
      for (float x : m->vector) w.f32(x);
    }
    return w.take();
  }

  void save(const std::string& path) const { io::write_file(path, serialize()); }

 private:
  std::size_t dim_;
  std::set<std::string> docs_;
  std::set<std::tuple<std::string, std::uint32_t, std::uint32_t>> keys_;
  std::vector<MentionEmbedding> mentions_;
};

/// Immutable, fully loaded mention store. Safe for concurrent readers.
class MentionStore {
 public:
  static MentionStore from_bytes(std::string bytes, Diagnostics* diag = nullptr) {
    MentionStore s;
    s.bytes_ = std::make_shared<const std::string>(std::move(bytes));
    std::string_view all(*s.bytes_);
    io::ByteReader r(all, "mention store");
    if (r.raw(kMentionStoreMagic.size()) != kMentionStoreMagic) throw ParseError("mention store: bad magic bytes", 0);
    if (auto v = r.u32(); v != kMentionStoreVersion) {
      throw ParseError("mention store: unsupported format version " + std::to_string(v), 8);
    }
    s.dim_ = r.u32();
    const auto doc_count = r.u64();
    const auto entry_count = r.u64();
    const auto mention_count = r.u64();
    const auto string_bytes = r.u64();
    const std::string_view pool = r.raw(string_bytes);
    r.skip_to_alignment(8);

    auto slice = [&](std::uint32_t off, std::uint32_t len) {
      if (static_cast<std::uint64_t>(off) + len > pool.size()) throw ParseError("mention store: string out of range", r.position());
      return pool.substr(off, len);
    };
    for (std::uint64_t d = 0; d < doc_count; ++d) {
      const auto off = r.u32();
      const auto len = r.u32();
      s.docs_.push_back({slice(off, len), 0, 0});
      if (d > 0 && !(s.docs_[d - 1].doc_id < s.docs_[d].doc_id)) {
        throw ParseError("mention store: document table not sorted", r.position());
      }
    }
    std::uint64_t expected_first = 0;
    for (std::uint64_t e = 0; e < entry_count; ++e) {
      Entry entry;
      entry.doc = r.u32();
      const auto off = r.u32();
      const auto len = r.u32();
      entry.count = r.u32();
      entry.first = r.u64();
      entry.stem = slice(off, len);
      if (entry.doc >= doc_count) throw ParseError("mention store: entry references unknown document", r.position());
      if (entry.first != expected_first) throw ParseError("mention store: mention ranges not contiguous", r.position());
      expected_first += entry.count;
      if (e > 0) {
        const auto& prev = s.entries_.back();
        if (!(std::tie(prev.doc, prev.stem) < std::tie(entry.doc, entry.stem))) {
          throw ParseError("mention store: entry table not sorted", r.position());
        }
      }
      if (s.docs_[entry.doc].entry_count == 0) s.docs_[entry.doc].first_entry = e;
      ++s.docs_[entry.doc].entry_count;
      s.entries_.push_back(entry);
    }
    if (expected_first != mention_count) throw ParseError("mention store: mention count mismatch", r.position());
    s.positions_.reserve(mention_count);
    for (std::uint64_t m = 0; m < mention_count; ++m) {
      const auto chunk = r.u32();
      const auto pos = r.u32();
      s.positions_.emplace_back(chunk, pos);
    }
    s.vectors_.resize(mention_count * s.dim_);
    std::size_t non_finite = 0;
    for (auto& x : s.vectors_) {
      x = r.f32();
      if (!std::isfinite(x)) ++non_finite;
    }
    if (r.remaining() != 0) throw ParseError("mention store: trailing bytes", r.position());
    if (non_finite > 0) warn(diag, "mention store: " + std::to_string(non_finite) + " non-finite vector components");
    return s;
  }

  static MentionStore load(const std::string& path, Diagnostics* diag = nullptr) {
    return from_bytes(read_file(path), diag);
  }

  std::size_t dimension() const noexcept { return dim_; }
  std::size_t mention_count() const noexcept { return positions_.size(); }
  std::size_t doc_count() const noexcept { return docs_.size(); }

  bool has_document(std::string_view doc_id) const { return find_doc(doc_id) != nullptr; }

  std::vector<std::string_view> doc_ids() const {
    std::vector<std::string_view> out;
    for (const auto& d : docs_) out.push_back(d.doc_id);
    return out;
  }

  /// Stems with at least one mention in the document, ascending.
  std::vector<std::string_view> stems_of(std::string_view doc_id) const {
    const auto& d = require_doc(doc_id);
    std::vector<std::string_view> out;
    for (std::uint64_t e = d.first_entry; e < d.first_entry + d.entry_count; ++e) out.push_back(entries_[e].stem);
    return out;
  }

  /// Every mention of `stem` in the document, by (chunk_index, position).
  /// Unknown documents raise NotFoundError; a known document without the
  /// stem yields an empty list.
  std::vector<MentionView> mentions_of(std::string_view doc_id, std::string_view stem) const {
    const auto& d = require_doc(doc_id);
    auto begin = entries_.begin() + static_cast<std::ptrdiff_t>(d.first_entry);
    auto end = begin + static_cast<std::ptrdiff_t>(d.entry_count);
    auto it = std::lower_bound(begin, end, stem, [](const Entry& e, std::string_view s) { return e.stem < s; });
    std::vector<MentionView> out;
    if (it == end || it->stem != stem) return out;
    for (std::uint64_t m = it->first; m < it->first + it->count; ++m) {
      out.push_back({positions_[m].first, positions_[m].second,
                     std::span<const float>(vectors_.data() + m * dim_, dim_)});
    }
    return out;
  }

  /// Materializes every mention, in file order.
  std::vector<MentionEmbedding> all_mentions() const {
    std::vector<MentionEmbedding> out;
    out.reserve(positions_.size());
    for (const auto& e : entries_) {
      for (std::uint64_t m = e.first; m < e.first + e.count; ++m) {
        out.push_back({std::string(e.stem), std::string(docs_[e.doc].doc_id), positions_[m].first,
                       positions_[m].second,
                       std::vector<float>(vectors_.begin() + static_cast<std::ptrdiff_t>(m * dim_),
                                          vectors_.begin() + static_cast<std::ptrdiff_t>((m + 1) * dim_))});
      }
    }
    return out;
  }

 private:
  struct Doc {
    std::string_view doc_id;
    std::uint64_t first_entry = 0;
    std::uint64_t entry_count = 0;
  };
  struct Entry {
    std::uint32_t doc = 0;
    std::string_view stem;
    std::uint32_t count = 0;
    std::uint64_t first = 0;
  };

  const Doc* find_doc(std::string_view doc_id) const {
    auto it = std::lower_bound(docs_.begin(), docs_.end(), doc_id,
                               [](const Doc& d, std::string_view id) { return d.doc_id < id; });
    return (it != docs_.end() && it->doc_id == doc_id) ? &*it : nullptr;
  }
  const Doc& require_doc(std::string_view doc_id) const {
    const Doc* d = find_doc(doc_id);
    if (d == nullptr) throw NotFoundError("mention store: unknown doc_id '" + std::string(doc_id) + "'");
    return *d;
  }

  // Owns the string pool the views point into; shared so copies stay valid.
  std::shared_ptr<const std::string> bytes_;
  std::size_t dim_ = 0;
  std::vector<Doc> docs_;
  std::vector<Entry> entries_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> positions_;
  std::vector<float> vectors_;
};

// ---------------------------------------------------------------------------
// Extraction with an in-process provider
// ---------------------------------------------------------------------------

/// Chunks the document, encodes each chunk, averages pieces into word
/// vectors and emits one mention per non-stopword token. A truncated word
/// keeps only the pieces that fit the budget.
inline std::vector<MentionEmbedding> extract_mentions(const Document& doc, const EmbeddingProvider& provider,
                                                      std::size_t max_pieces, Diagnostics* diag = nullptr) {
  std::vector<MentionEmbedding> out;
  const auto chunks = chunk_document(
      doc, max_pieces, [&](const Token& t) { return provider.piece_count(t); }, diag);
  const std::size_t budget = max_pieces - 2;
  for (const auto& chunk : chunks) {
    std::span<const Token> tokens(doc.tokens.data() + chunk.begin, chunk.end - chunk.begin);
    EncodedText enc = provider.encode(tokens);
    if (enc.word_spans.size() != tokens.size()) throw Error("provider returned wrong number of word spans");
    if (chunk.truncated) {
      auto& span = enc.word_spans.front();
      span.end = std::min(span.end, span.begin + budget);
      if (span.end == span.begin) continue;
    }
    const auto words = aggregate_wordpieces(enc.pieces, enc.word_spans);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].is_stopword) continue;
      MentionEmbedding m;
      m.stem = tokens[i].stem;
      m.doc_id = doc.doc_id;
      m.chunk_index = chunk.chunk_index;
      m.position = tokens[i].position;
      m.vector.assign(words[i].begin(), words[i].end());
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace ceqe
