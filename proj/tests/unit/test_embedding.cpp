#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "ceqe/mention_store.hpp"
#include "ceqe/providers.hpp"
#include "ceqe/static_vectors.hpp"
#include "support/synthetic.hpp"

using namespace ceqe;

namespace {

Document words_doc(std::string id, std::size_t n) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back("w" + std::to_string(i % 7) + "x");
  return synth::make_document(std::move(id), w);
}

double cosine(const Vector& a, const Vector& b) { return 2.0 * shifted_cosine(a, b) - 1.0; }

}  // namespace

TEST(Aggregate, MeanOfPiecesPerSpan) {
  const std::vector<Vector> pieces = {{9, 9}, {1, 2}, {3, 4}, {5, 6}, {7, 7}};
  const std::vector<WordSpan> spans = {{1, 3}, {3, 4}};
  const auto words = aggregate_wordpieces(pieces, spans);
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[0], (Vector{2, 3}));
  EXPECT_EQ(words[1], (Vector{5, 6}));
}

TEST(Aggregate, RejectsBadSpans) {
  const std::vector<Vector> pieces = {{1}, {2}, {3}};
  EXPECT_THROW(aggregate_wordpieces(pieces, std::vector<WordSpan>{{1, 1}}), Error);
  EXPECT_THROW(aggregate_wordpieces(pieces, std::vector<WordSpan>{{1, 4}}), Error);
  EXPECT_THROW(aggregate_wordpieces(pieces, std::vector<WordSpan>{{0, 2}, {1, 3}}), Error);
  EXPECT_THROW(aggregate_wordpieces(std::vector<Vector>{{1}, {2, 3}}, std::vector<WordSpan>{{0, 1}}), Error);
}

TEST(Chunking, GreedyWholeWords) {
  const auto doc = words_doc("d", 300);
  const auto chunks = chunk_document(doc, 128, [](const Token&) { return std::size_t{1}; });
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].end - chunks[0].begin, 126u);
  EXPECT_EQ(chunks[1].end - chunks[1].begin, 126u);
  EXPECT_EQ(chunks[2].end - chunks[2].begin, 48u);
  EXPECT_EQ(chunks[2].chunk_index, 2u);
}

TEST(Chunking, OversizedWordGetsOwnTruncatedChunk) {
  const auto doc = synth::make_document("d", {"ab", "abcdefghij", "cd"});
  Diagnostics diag;
  const auto chunks = chunk_document(doc, 5, [](const Token& t) { return t.surface.size(); }, &diag);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_FALSE(chunks[0].truncated);
  EXPECT_TRUE(chunks[1].truncated);
  EXPECT_EQ(chunks[1].end - chunks[1].begin, 1u);
  EXPECT_EQ(diag.warnings.size(), 1u);
  EXPECT_THROW(chunk_document(doc, 1, [](const Token&) { return std::size_t{1}; }), ConfigError);
}

TEST(QueryEmbedding, CentroidIncludesSpecialTokensAndPerTermSkipsStopwords) {
  const DeterministicTestEmbedder emb({.dimension = 8, .seed = 1});
  const auto q = Analyzer().analyze("the oscar winner oscar");
  const auto enc = emb.encode(q);
  const auto e = embed_query("q", q, emb);
  ASSERT_EQ(enc.pieces.size(), 6u);
  for (std::size_t j = 0; j < 8; ++j) {
    double s = 0;
    for (const auto& p : enc.pieces) s += p[j];
    EXPECT_NEAR(e.centroid[j], s / 6.0, 1e-15);
    EXPECT_NEAR(e.per_term.at("oscar")[j], (enc.pieces[2][j] + enc.pieces[4][j]) / 2.0, 1e-15);
  }
  EXPECT_EQ(e.per_term.size(), 2u);
  EXPECT_FALSE(e.per_term.count("the"));
  EXPECT_THROW(embed_query("q", std::vector<Token>{}, emb), Error);
}

TEST(TestEmbedder, DeterministicUnitVectorsAndContextOrderFree) {
  const DeterministicTestEmbedder emb({.dimension = 16, .seed = 7});
  const std::vector<std::string> c1 = {"film", "award"}, c2 = {"award", "film"};
  const auto a = emb.embed("oscar", c1);
  EXPECT_EQ(a, emb.embed("oscar", c2));
  double n = 0;
  for (double x : a) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
  const DeterministicTestEmbedder other({.dimension = 16, .seed = 8});
  EXPECT_NE(a, other.embed("oscar", c1));
}

// A word seen in overlapping contexts stays closer than the same word in an
// unrelated context.
TEST(TestEmbedder, SenseDependsOnContext) {
  const DeterministicTestEmbedder emb({.dimension = 64, .seed = 3, .radius = 3, .context_weight = 2.0});
  const std::vector<std::string> film = {"film", "award", "actor"}, film2 = {"film", "award", "director"};
  const std::vector<std::string> bank = {"money", "loan", "river"};
  const auto v1 = emb.embed("oscar", film), v2 = emb.embed("oscar", film2), v3 = emb.embed("oscar", bank);
  EXPECT_GT(cosine(v1, v2), cosine(v1, v3));
}

TEST(TestEmbedder, PieceCountsAndSpans) {
  const DeterministicTestEmbedder emb({.dimension = 4, .max_piece_chars = 3});
  const auto toks = Analyzer().analyze("ab abcdefg");
  EXPECT_EQ(emb.piece_count(toks[0]), 1u);
  EXPECT_EQ(emb.piece_count(toks[1]), 3u);
  const auto enc = emb.encode(toks);
  EXPECT_EQ(enc.pieces.size(), 6u);
  EXPECT_EQ(enc.word_spans, (std::vector<WordSpan>{{1, 2}, {2, 5}}));
}

TEST(MentionStore, ThousandMentionsRoundTrip) {
  synth::Rng rng(11);
  MentionStoreWriter w(5);
  std::vector<MentionEmbedding> all;
  for (std::uint32_t i = 0; i < 1000; ++i) {
    MentionEmbedding m{"s" + std::to_string(rng.below(40)), "doc" + std::to_string(rng.below(30)), i % 3, i, {}};
    for (int j = 0; j < 5; ++j) m.vector.push_back(static_cast<float>(rng.uniform() - 0.5));
    all.push_back(m);
    w.add(m);
  }
  w.add_document("empty-doc");
  const auto bytes = w.serialize();
  const auto store = MentionStore::from_bytes(bytes);
  EXPECT_EQ(store.mention_count(), 1000u);
  EXPECT_EQ(store.dimension(), 5u);
  EXPECT_TRUE(store.has_document("empty-doc"));
  EXPECT_TRUE(store.stems_of("empty-doc").empty());

  auto back = store.all_mentions();
  auto key = [](const MentionEmbedding& m) { return std::tie(m.doc_id, m.stem, m.chunk_index, m.position); };
  std::sort(all.begin(), all.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  std::sort(back.begin(), back.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  EXPECT_EQ(back, all);

  const auto copy = store;  // views must survive copies
  const auto& m = all.front();
  const auto views = copy.mentions_of(m.doc_id, m.stem);
  ASSERT_FALSE(views.empty());
  EXPECT_EQ(std::vector<float>(views[0].vector.begin(), views[0].vector.end()), m.vector);
  EXPECT_TRUE(copy.mentions_of(m.doc_id, "no-such-stem").empty());
  EXPECT_THROW(copy.mentions_of("no-such-doc", m.stem), NotFoundError);
}

TEST(MentionStore, WriterRejectsBadMentions) {
  MentionStoreWriter w(2);
  EXPECT_THROW(w.add({"a", "d", 0, 0, {1.0f}}), Error);
  EXPECT_THROW(w.add({"a", "d", 0, 0, {1.0f, NAN}}), Error);
  w.add({"a", "d", 0, 0, {1.0f, 2.0f}});
  EXPECT_THROW(w.add({"b", "d", 0, 0, {1.0f, 2.0f}}), Error);
  EXPECT_THROW(MentionStoreWriter(0), ConfigError);
}

TEST(MentionStore, RejectsCorruptBytes) {
  MentionStoreWriter w(2);
  w.add({"a", "d", 0, 0, {1.0f, 2.0f}});
  const auto bytes = w.serialize();
  EXPECT_THROW(MentionStore::from_bytes(bytes.substr(0, bytes.size() - 1)), ParseError);
  EXPECT_THROW(MentionStore::from_bytes(bytes + "x"), ParseError);
  auto bad = bytes;
  bad[0] = 'Z';
  EXPECT_THROW(MentionStore::from_bytes(bad), ParseError);
  bad = bytes;
  bad[8] = 9;  // version
  EXPECT_THROW(MentionStore::from_bytes(bad), ParseError);
}

TEST(Extraction, OneMentionPerContentToken) {
  const DeterministicTestEmbedder emb({.dimension = 6, .max_piece_chars = 2});
  const auto doc = synth::make_document("d", {"the", "oscar", "goes", "to", "a", "winner", "oscar"});
  const auto mentions = extract_mentions(doc, emb, 6);
  std::size_t content = 0;
  for (const auto& t : doc.tokens) content += !t.is_stopword;
  ASSERT_EQ(mentions.size(), content);
  for (const auto& m : mentions) {
    EXPECT_EQ(m.doc_id, "d");
    EXPECT_EQ(m.vector.size(), 6u);
    EXPECT_FALSE(doc.tokens[m.position].is_stopword);
    EXPECT_EQ(doc.tokens[m.position].stem, m.stem);
  }
}

TEST(Wire, RequestAndResponseRoundTrip) {
  const std::vector<std::vector<std::string>> texts = {{"oscar", "winner"}, {"film"}};
  EXPECT_EQ(wire::decode_request(wire::encode_request(texts)), texts);
  EXPECT_EQ(wire::encode_request(texts).dump(), R"({"texts":[["oscar","winner"],["film"]]})");

  EncodedText e;
  e.pieces = {{0.5, 1.0}, {0.25, -1.0}, {0.0, 0.0}};
  e.word_spans = {{1, 2}};
  const std::vector<EncodedText> results = {e};
  const auto json = wire::encode_response(results, 2);
  EXPECT_EQ(json.dump(), R"({"dim":2,"results":[{"pieces":[[0.5,1.0],[0.25,-1.0],[0.0,0.0]],"spans":[[1,2]]}]})");
  const auto back = wire::decode_response(json);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].pieces, e.pieces);
  EXPECT_EQ(back[0].word_spans, e.word_spans);

  EXPECT_THROW(wire::decode_request(nlohmann::json::parse(R"({"text": []})")), ParseError);
  EXPECT_THROW(wire::decode_response(nlohmann::json::parse(R"({"error": "boom"})")), Error);
  EXPECT_THROW(wire::decode_response(nlohmann::json::parse(R"({"results":[{"pieces":[],"spans":[[1]]}]})")),
               ParseError);
}

namespace {

/// Local embedding service backed by the test embedder. The first
/// `fail_first` requests get `fail_status`.
class FakeService {
 public:
  FakeService(int fail_first, int fail_status) : fail_first_(fail_first), fail_status_(fail_status) {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      if (calls_++ < fail_first_) {
        res.status = fail_status_;
        res.set_content(R"({"error":"nope"})", "application/json");
        return;
      }
      std::vector<EncodedText> out;
      for (const auto& words : wire::decode_request(nlohmann::json::parse(req.body))) {
        out.push_back(embedder_.encode(Analyzer().analyze(synth::join(words))));
      }
      res.set_content(wire::encode_response(out, 8).dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }
  int calls() const { return calls_; }
  const DeterministicTestEmbedder& embedder() const { return embedder_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  int fail_first_;
  int fail_status_;
  DeterministicTestEmbedder embedder_{{.dimension = 8, .seed = 5}};
};

}  // namespace

TEST(RemoteProvider, MatchesInProcessEmbedder) {
  FakeService svc(0, 200);
  RemoteProvider remote({.port = svc.port(), .dimension = 8, .timeout_ms = 5000});
  const auto toks = Analyzer().analyze("the oscar winner");
  const auto a = remote.encode(toks);
  const auto b = svc.embedder().encode(toks);
  EXPECT_EQ(a.word_spans, b.word_spans);
  ASSERT_EQ(a.pieces.size(), b.pieces.size());
  for (std::size_t i = 0; i < a.pieces.size(); ++i) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(a.pieces[i][j], b.pieces[i][j], 1e-15);
  }
  EXPECT_EQ(remote.piece_count(toks[1]), 1u);
  EXPECT_EQ(remote.piece_count(toks[1]), 1u);
  EXPECT_EQ(svc.calls(), 2);  // second piece count came from the cache
}

TEST(RemoteProvider, RetriesServerErrors) {
  FakeService svc(1, 503);
  RemoteProvider remote({.port = svc.port(), .dimension = 8, .timeout_ms = 5000, .retries = 1});
  EXPECT_NO_THROW(remote.encode(Analyzer().analyze("oscar")));
  EXPECT_EQ(svc.calls(), 2);
}

TEST(RemoteProvider, DoesNotRetryClientErrors) {
  FakeService svc(5, 400);
  RemoteProvider remote({.port = svc.port(), .dimension = 8, .timeout_ms = 5000, .retries = 3});
  EXPECT_THROW(remote.encode(Analyzer().analyze("oscar")), Error);
  EXPECT_EQ(svc.calls(), 1);
}

TEST(RemoteProvider, UnreachableServiceIsError) {
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  RemoteProvider remote({.port = port, .dimension = 8, .timeout_ms = 500, .retries = 0});
  EXPECT_THROW(remote.encode(Analyzer().analyze("oscar")), Error);
}

TEST(QueryEmbeddings, JsonlRoundTripAndLookup) {
  const DeterministicTestEmbedder emb({.dimension = 4, .seed = 2});
  const auto q = embed_query("301", Analyzer().analyze("oscar winner"), emb);
  const auto parsed = parse_query_embeddings(query_embedding_to_json(q) + "\n\n");
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(parsed.at("301").centroid, q.centroid);
  EXPECT_EQ(parsed.at("301").per_term, q.per_term);

  const PrecomputedQueryProvider provider(4, parsed);
  EXPECT_EQ(embed_query("301", Analyzer().analyze("ignored text"), provider).centroid, q.centroid);
  EXPECT_THROW(embed_query("302", Analyzer().analyze("oscar"), provider), ConfigError);
  EXPECT_THROW(parse_query_embeddings("{\"query_id\": \"1\"}\n"), ParseError);
}

TEST(StaticVectors, ParseFormatAndStemAveraging) {
  const std::string text = "oscar 1 2\noscars 3 4\nwinner 0.5 -1e-3\n";
  const auto raw = parse_static_vectors(text);
  EXPECT_EQ(raw.dimension, 2u);
  EXPECT_EQ(raw.vectors.size(), 3u);
  EXPECT_EQ(parse_static_vectors(format_static_vectors(raw)).vectors, raw.vectors);

  const Analyzer analyzer;
  const auto stemmed = parse_static_vectors(text, &analyzer);
  EXPECT_EQ(stemmed.vectors.size(), 2u);
  EXPECT_EQ(*stemmed.find("oscar"), (Vector{2, 3}));
  EXPECT_EQ(stemmed.find("film"), nullptr);

  EXPECT_THROW(parse_static_vectors("a 1 2\nb 1\n"), ParseError);
  EXPECT_THROW(parse_static_vectors("a 1 x\n"), ParseError);
}

TEST(StaticVectors, MeanOfMentions) {
  MentionStoreWriter w(2);
  w.add({"oscar", "d1", 0, 0, {1.0f, 0.0f}});
  w.add({"oscar", "d2", 0, 3, {0.0f, 1.0f}});
  w.add({"film", "d2", 0, 4, {2.0f, 2.0f}});
  const auto table = static_vectors_from_mentions(MentionStore::from_bytes(w.serialize()));
  EXPECT_EQ(*table.find("oscar"), (Vector{0.5, 0.5}));
  EXPECT_EQ(*table.find("film"), (Vector{2.0, 2.0}));
}
