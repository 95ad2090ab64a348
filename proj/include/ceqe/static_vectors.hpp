#pragma once

#include <charconv>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "ceqe/analysis.hpp"
#include "ceqe/corpus.hpp"
#include "ceqe/error.hpp"
#include "ceqe/mention_store.hpp"
#include "ceqe/similarity.hpp"

namespace ceqe {

/// Context-free word vectors keyed by index stem.
struct StaticVectorTable {
  std::size_t dimension = 0;
  std::map<std::string, Vector> vectors;

  const Vector* find(std::string_view stem) const {
    auto it = vectors.find(std::string(stem));
    return it == vectors.end() ? nullptr : &it->second;
  }
};

/// Parses GloVe text format: `word v1 v2 ... vd` per line. With an analyzer,
/// each word is stemmed and words sharing a stem are averaged, so keys match
/// the index vocabulary.
inline StaticVectorTable parse_static_vectors(std::string_view bytes, const Analyzer* analyzer = nullptr) {
  StaticVectorTable table;
  std::map<std::string, std::size_t> counts;
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    std::string line(bytes.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? bytes.size() : nl + 1;
    ++line_no;
    std::istringstream in(line);
    std::string word;
    if (!(in >> word)) continue;
    Vector v;
    std::string field;
    while (in >> field) {
      char* end = nullptr;
      double x = std::strtod(field.c_str(), &end);
      if (end != field.c_str() + field.size()) {
        throw ParseError("static vectors line " + std::to_string(line_no) + ": bad number '" + field + "'", line_no);
      }
      v.push_back(x);
    }
    if (table.dimension == 0) table.dimension = v.size();
    if (v.empty() || v.size() != table.dimension) {
      throw ParseError("static vectors line " + std::to_string(line_no) + ": expected " +
                           std::to_string(table.dimension) + " components",
                       line_no);
    }
    std::string key = word;
    if (analyzer != nullptr) {
      auto toks = analyzer->analyze(word);
      if (toks.size() != 1) continue;  // punctuation or multi-part entries
      key = toks[0].stem;
    }
    auto [it, inserted] = table.vectors.try_emplace(key, table.dimension, 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) it->second[j] += v[j];
    ++counts[key];
  }
  for (auto& [key, v] : table.vectors) {
    for (auto& x : v) x /= static_cast<double>(counts[key]);
  }
  return table;
}

inline StaticVectorTable load_static_vectors(const std::string& path, const Analyzer* analyzer = nullptr) {
  return parse_static_vectors(read_file(path), analyzer);
}

/// Writes GloVe text format with round-trip precision.
inline std::string format_static_vectors(const StaticVectorTable& table) {
  std::string out;
  char buf[32];
  for (const auto& [word, v] : table.vectors) {
    out += word;
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), " %.17g", x);
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

/// Static vector per stem as the mean of all its contextual mention
/// vectors in the store, a corpus-level distributional embedding that
/// mixes every sense of a word.
inline StaticVectorTable static_vectors_from_mentions(const MentionStore& store) {
  StaticVectorTable table;
  table.dimension = store.dimension();
  std::map<std::string, std::size_t> counts;
  for (auto doc : store.doc_ids()) {
    for (auto stem : store.stems_of(doc)) {
      auto [it, inserted] = table.vectors.try_emplace(std::string(stem), table.dimension, 0.0);
      for (const auto& m : store.mentions_of(doc, stem)) {
        for (std::size_t j = 0; j < table.dimension; ++j) it->second[j] += m.vector[j];
        ++counts[it->first];
      }
    }
  }
  for (auto& [key, v] : table.vectors) {
    for (auto& x : v) x /= static_cast<double>(counts[key]);
  }
  return table;
}

}  // namespace ceqe
