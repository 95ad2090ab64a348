#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceqe/analysis.hpp"
#include "ceqe/error.hpp"

namespace ceqe {

struct Document {
  std::string doc_id;
  std::string raw_text;
  std::vector<Token> tokens;
};

/// One rejected record. `location` is a byte offset for SGML input and a
/// 1-based line number for JSONL input.
struct IngestError {
  std::uint64_t location = 0;
  std::string message;
};

struct IngestResult {
  std::vector<Document> documents;
  std::vector<IngestError> errors;

  bool ok() const noexcept { return errors.empty(); }
};

namespace sgml_detail {

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Removes every <...> tag, replacing it with a space so words on either
// side of a tag do not fuse.
inline std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_tag = false;
  for (char c : s) {
    if (c == '<') {
      in_tag = true;
    } else if (c == '>' && in_tag) {
      in_tag = false;
      out.push_back(' ');
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  return out;
}

// Content of the first <tag>...</tag> in `record`, if any.
inline bool find_element(std::string_view record, std::string_view tag, std::size_t from, std::size_t& content_begin,
                         std::size_t& content_end, std::size_t& after) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  auto b = record.find(open, from);
  if (b == std::string_view::npos) return false;
  auto e = record.find(close, b + open.size());
  if (e == std::string_view::npos) return false;
  content_begin = b + open.size();
  content_end = e;
  after = e + close.size();
  return true;
}

// Collects <TEXT> and <HEADLINE> bodies in document order.
inline std::string collect_text(std::string_view record) {
  std::string text;
  std::size_t pos = 0;
  while (true) {
    std::size_t tb = 0, te = 0, ta = 0, hb = 0, he = 0, ha = 0;
    bool has_text = find_element(record, "TEXT", pos, tb, te, ta);
    bool has_head = find_element(record, "HEADLINE", pos, hb, he, ha);
    if (!has_text && !has_head) break;
    std::size_t b = 0, e = 0, a = 0;
    if (has_text && (!has_head || tb < hb)) {
      b = tb, e = te, a = ta;
    } else {
      b = hb, e = he, a = ha;
    }
    std::string piece(trim(strip_tags(record.substr(b, e - b))));
    if (!piece.empty()) {
      if (!text.empty()) text.push_back('\n');
      text += piece;
    }
    pos = a;
  }
  return text;
}

}  // namespace sgml_detail

/// Parses concatenated <DOC>...</DOC> records. Bad records are reported
/// in `errors` and skipped; parsing continues with the next record.
inline IngestResult ingest_trec_sgml(std::string_view bytes, const Analyzer& analyzer = Analyzer()) {
  IngestResult result;
  std::string last_doc_id;
  std::size_t pos = 0;
  while (true) {
    auto start = bytes.find("<DOC>", pos);
    if (start == std::string_view::npos) break;
    auto end = bytes.find("</DOC>", start + 5);
    if (end == std::string_view::npos) {
      result.errors.push_back(
          {start, "truncated record at byte " + std::to_string(start) + " after last complete document '" +
                      last_doc_id + "'"});
      break;
    }
    std::string_view record = bytes.substr(start + 5, end - start - 5);
    pos = end + 6;

    std::size_t b = 0, e = 0, a = 0;
    if (!sgml_detail::find_element(record, "DOCNO", 0, b, e, a) ||
        sgml_detail::trim(record.substr(b, e - b)).empty()) {
      result.errors.push_back({start, "record at byte " + std::to_string(start) + " has no <DOCNO>"});
      continue;
    }
    Document doc;
    doc.doc_id = std::string(sgml_detail::trim(record.substr(b, e - b)));
    doc.raw_text = sgml_detail::collect_text(record);
    doc.tokens = analyzer.analyze(doc.raw_text);
    last_doc_id = doc.doc_id;
    result.documents.push_back(std::move(doc));
  }
  return result;
}

/// Parses one JSON object per line with string fields "id" and "contents".
/// Blank lines are ignored.
inline IngestResult ingest_jsonl(std::string_view bytes, const Analyzer& analyzer = Analyzer()) {
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    std::string_view line = bytes.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? bytes.size() : nl + 1;
    ++line_no;
    if (sgml_detail::trim(line).empty()) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      result.errors.push_back({line_no, "line " + std::to_string(line_no) + ": malformed JSON: " + ex.what()});
      continue;
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("contents") ||
        !obj["contents"].is_string()) {
      result.errors.push_back(
          {line_no, "line " + std::to_string(line_no) + ": expected string fields \"id\" and \"contents\""});
      continue;
    }
    Document doc;
    doc.doc_id = obj["id"].get<std::string>();
    if (doc.doc_id.empty()) {
      result.errors.push_back({line_no, "line " + std::to_string(line_no) + ": empty id"});
      continue;
    }
    if (!seen.insert(doc.doc_id).second) {
      result.errors.push_back({line_no, "line " + std::to_string(line_no) + ": duplicate id '" + doc.doc_id + "'"});
      continue;
    }
    doc.raw_text = obj["contents"].get<std::string>();
    doc.tokens = analyzer.analyze(doc.raw_text);
    result.documents.push_back(std::move(doc));
  }
  return result;
}

enum class CorpusFormat { trec_sgml, jsonl };

/// Sniffs the format from the first non-whitespace byte: '<' means SGML.
inline CorpusFormat detect_corpus_format(std::string_view bytes) {
  for (char c : bytes) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
    return c == '<' ? CorpusFormat::trec_sgml : CorpusFormat::jsonl;
  }
  return CorpusFormat::jsonl;
}

inline IngestResult ingest_corpus(std::string_view bytes, const Analyzer& analyzer = Analyzer()) {
  return detect_corpus_format(bytes) == CorpusFormat::trec_sgml ? ingest_trec_sgml(bytes, analyzer)
                                                                 : ingest_jsonl(bytes, analyzer);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace ceqe
