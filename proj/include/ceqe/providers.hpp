#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ceqe/corpus.hpp"
#include "ceqe/embedding.hpp"
#include "ceqe/error.hpp"

namespace ceqe {

// ---------------------------------------------------------------------------
// Remote provider wire contract
//
//   POST <path>   {"texts": [["oscar", "winner"], ...]}
//   200           {"dim": 768, "results": [{"pieces": [[...], ...], "spans": [[1, 2], [2, 3]]}, ...]}
//   4xx / 5xx     {"error": "message", ...}
//
// `pieces` includes the start and end special-token vectors; `spans` are
// half-open piece ranges, one per input word.
// ---------------------------------------------------------------------------
namespace wire {

inline nlohmann::json encode_request(std::span<const std::vector<std::string>> texts) {
  nlohmann::json req;
  req["texts"] = nlohmann::json::array();
  for (const auto& words : texts) req["texts"].push_back(words);
  return req;
}

inline std::vector<std::vector<std::string>> decode_request(const nlohmann::json& req) {
  if (!req.is_object() || !req.contains("texts") || !req["texts"].is_array()) {
    throw ParseError("embedding request: expected {\"texts\": [[...], ...]}", 0);
  }
  std::vector<std::vector<std::string>> texts;
  for (const auto& t : req["texts"]) {
    if (!t.is_array()) throw ParseError("embedding request: each text must be a list of words", 0);
    texts.push_back(t.get<std::vector<std::string>>());
  }
  return texts;
}

inline nlohmann::json encode_response(std::span<const EncodedText> results, std::size_t dim) {
  nlohmann::json resp;
  resp["dim"] = dim;
  resp["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json item;
    item["pieces"] = r.pieces;
    item["spans"] = nlohmann::json::array();
    for (const auto& s : r.word_spans) item["spans"].push_back({s.begin, s.end});
    resp["results"].push_back(std::move(item));
  }
  return resp;
}

inline std::vector<EncodedText> decode_response(const nlohmann::json& resp) {
  if (resp.contains("error")) throw Error("embedding service error: " + resp["error"].dump());
  if (!resp.contains("results") || !resp["results"].is_array()) throw ParseError("embedding response: missing results", 0);
  std::vector<EncodedText> out;
  for (const auto& item : resp["results"]) {
    EncodedText enc;
    enc.pieces = item.at("pieces").get<std::vector<Vector>>();
    for (const auto& s : item.at("spans")) {
      if (!s.is_array() || s.size() != 2) throw ParseError("embedding response: span must be [begin, end]", 0);
      enc.word_spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
    }
    out.push_back(std::move(enc));
  }
  return out;
}

}  // namespace wire

struct RemoteProviderConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/embed";
  std::size_t dimension = 768;
  int timeout_ms = 30000;
  int retries = 1;
};

/// Client for an embedding service speaking the wire contract above. Each
/// call opens its own connection, so concurrent callers do not share state
/// other than the piece-count cache.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteProviderConfig config) : config_(std::move(config)) {}

  ProviderInfo info() const override { return {config_.dimension, ProviderSource::remote}; }

  std::size_t piece_count(const Token& token) const override {
    {
      std::lock_guard lock(mutex_);
      if (auto it = piece_cache_.find(token.surface); it != piece_cache_.end()) return it->second;
    }
    const auto enc = request({std::vector<std::string>{token.surface}});
    if (enc.size() != 1 || enc[0].word_spans.size() != 1) throw Error("embedding service: bad piece-count reply");
    const auto n = enc[0].word_spans[0].end - enc[0].word_spans[0].begin;
    std::lock_guard lock(mutex_);
    piece_cache_.emplace(token.surface, n);
    return n;
  }

  EncodedText encode(std::span<const Token> tokens) const override {
    std::vector<std::string> words;
    words.reserve(tokens.size());
    for (const auto& t : tokens) words.push_back(t.surface);
    auto enc = request({words});
    if (enc.size() != 1) throw Error("embedding service: expected one result");
    return std::move(enc[0]);
  }

  std::vector<EncodedText> request(const std::vector<std::vector<std::string>>& texts) const {
    const std::string body = wire::encode_request(texts).dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      httplib::Client client(config_.host, config_.port);
      const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = client.Post(config_.path, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 400 && res->status < 500) {
        // Client errors are not retried.
        throw Error("embedding service rejected request (" + std::to_string(res->status) + "): " + res->body);
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      return wire::decode_response(nlohmann::json::parse(res->body));
    }
    throw Error("embedding service at " + config_.host + ":" + std::to_string(config_.port) + " unavailable: " + last_error);
  }

 private:
  RemoteProviderConfig config_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::size_t> piece_cache_;
};

// ---------------------------------------------------------------------------
// Precomputed query embeddings
//
// JSONL, one query per line:
//   {"query_id": "301", "centroid": [...], "per_term": {"oscar": [...], ...}}
// ---------------------------------------------------------------------------

inline std::string query_embedding_to_json(const QueryEmbedding& q) {
  nlohmann::json j;
  j["query_id"] = q.query_id;
  j["centroid"] = q.centroid;
  j["per_term"] = nlohmann::json::object();
  for (const auto& [stem, v] : q.per_term) j["per_term"][stem] = v;
  return j.dump();
}

inline std::map<std::string, QueryEmbedding> parse_query_embeddings(std::string_view bytes) {
  std::map<std::string, QueryEmbedding> out;
  std::uint64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    auto line = bytes.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? bytes.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      QueryEmbedding q;
      q.query_id = j.at("query_id").get<std::string>();
      q.centroid = j.at("centroid").get<Vector>();
      for (const auto& [stem, v] : j.at("per_term").items()) q.per_term[stem] = v.get<Vector>();
      out[q.query_id] = std::move(q);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("query embeddings line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    }
  }
  return out;
}

/// Serves query embeddings computed offline by the extractor.
class PrecomputedQueryProvider final : public EmbeddingProvider {
 public:
  PrecomputedQueryProvider(std::size_t dimension, std::map<std::string, QueryEmbedding> queries)
      : dim_(dimension), queries_(std::move(queries)) {}

  static PrecomputedQueryProvider load(const std::string& path) {
    auto queries = parse_query_embeddings(read_file(path));
    std::size_t dim = queries.empty() ? 0 : queries.begin()->second.centroid.size();
    return PrecomputedQueryProvider(dim, std::move(queries));
  }

  ProviderInfo info() const override { return {dim_, ProviderSource::precomputed}; }
  std::size_t piece_count(const Token&) const override {
    throw ConfigError("precomputed provider cannot count pieces; use the extractor");
  }
  EncodedText encode(std::span<const Token>) const override {
    throw ConfigError("precomputed provider cannot encode text; query was not in the query-embedding file");
  }
  std::optional<QueryEmbedding> lookup_query(std::string_view query_id) const override {
    auto it = queries_.find(std::string(query_id));
    if (it == queries_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::size_t dim_;
  std::map<std::string, QueryEmbedding> queries_;
};

}  // namespace ceqe
