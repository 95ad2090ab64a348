// ceqe: command-line driver for indexing, expansion runs and evaluation.

#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ceqe/binary_io.hpp"
#include "ceqe/config.hpp"
#include "ceqe/corpus.hpp"
#include "ceqe/embedding.hpp"
#include "ceqe/eval.hpp"
#include "ceqe/expansion.hpp"
#include "ceqe/index.hpp"
#include "ceqe/intrinsic.hpp"
#include "ceqe/mention_store.hpp"
#include "ceqe/pipeline.hpp"
#include "ceqe/providers.hpp"
#include "ceqe/static_vectors.hpp"
#include "ceqe/tuning.hpp"

namespace {

using namespace ceqe;

// Flags shared by every subcommand; they override the config file.
struct CommonFlags {
  std::string config_path;
  std::vector<std::string> settings;  // key=value
  std::string method;
  std::string topics;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::string index;
  std::string corpus;
  std::string mentions;
  std::string static_vectors;
  std::string qrels;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--set", f.settings, "override one config key (key=value), repeatable");
  cmd->add_option("--topics", f.topics, "topics file (query_id<TAB>text)");
  cmd->add_option("--output", f.output, "output path (default: stdout)");
  cmd->add_option("--seed", f.seed, "seed for all randomness");
  cmd->add_option("--index", f.index, "index file");
  cmd->add_option("--corpus", f.corpus, "corpus file (TREC SGML or JSONL)");
  cmd->add_option("--mentions", f.mentions, "mention store file");
  cmd->add_option("--static-vectors", f.static_vectors, "static vector table");
  cmd->add_option("--qrels", f.qrels, "qrels file");
}

Config resolve(const CommonFlags& f) {
  Config c;
  if (!f.config_path.empty()) c = load_config(f.config_path);
  for (const auto& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  auto over = [](std::string& dst, const std::string& src) {
    if (!src.empty()) dst = src;
  };
  over(c.topics, f.topics);
  over(c.output, f.output);
  over(c.index, f.index);
  over(c.corpus, f.corpus);
  over(c.mentions, f.mentions);
  over(c.static_vectors, f.static_vectors);
  over(c.qrels, f.qrels);
  if (f.seed) c.seed = *f.seed;
  c.validate();
  return c;
}

const std::string& require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("missing required setting '") + key + "'");
  return value;
}

void emit(const Config& c, const std::string& text) {
  if (c.output.empty() || c.output == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    io::write_file(c.output, text);
  }
}

void print_warnings(const Diagnostics& d) {
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
}

RetrievalParams retrieval_params(const Config& c) {
  RetrievalParams p;
  p.bm25 = c.bm25;
  p.mu = c.mu;
  p.depth = c.depth;
  p.expansion = c.expansion;
  p.policy = c.policy;
  return p;
}

Analyzer config_analyzer(const Config& c) { return Analyzer(c.stemmer); }

std::vector<Document> load_corpus(const Config& c, const Analyzer& analyzer) {
  const auto bytes = read_file(require_path(c.corpus, "corpus"));
  auto result = ingest_corpus(bytes, analyzer);
  if (!result.ok()) {
    for (const auto& e : result.errors) std::cerr << "error: " << c.corpus << " @" << e.location << ": " << e.message << "\n";
    throw Error(std::to_string(result.errors.size()) + " corpus record(s) rejected");
  }
  return std::move(result.documents);
}

// Everything a run may need, loaded lazily according to the method.
struct Loaded {
  Index index;
  std::optional<MentionStore> mentions;
  std::optional<StaticVectorTable> static_vectors;
  std::unique_ptr<EmbeddingProvider> provider;

  Resources resources() const {
    Resources r;
    r.index = &index;
    r.mentions = mentions ? &*mentions : nullptr;
    r.static_vectors = static_vectors ? &*static_vectors : nullptr;
    r.query_provider = provider.get();
    return r;
  }
};

std::unique_ptr<EmbeddingProvider> make_provider(const Config& c) {
  if (c.provider == "test") return std::make_unique<DeterministicTestEmbedder>(c.test_embedder);
  if (c.provider == "precomputed") {
    return std::make_unique<PrecomputedQueryProvider>(
        PrecomputedQueryProvider::load(require_path(c.query_embeddings, "query_embeddings")));
  }
  RemoteProviderConfig rc;
  rc.host = c.remote_host;
  rc.port = c.remote_port;
  rc.timeout_ms = c.remote_timeout_ms;
  return std::make_unique<RemoteProvider>(rc);
}

Loaded load_assets(const Config& c, const std::vector<Method>& methods, Diagnostics& diag) {
  Loaded l{Index::load(require_path(c.index, "index")), std::nullopt, std::nullopt, nullptr};
  bool need_mentions = false;
  bool need_static = false;
  for (Method m : methods) {
    need_mentions = need_mentions || uses_mentions(m);
    need_static = need_static || uses_static_vectors(m);
  }
  if (need_mentions) {
    if (c.mentions.empty()) {
      throw ConfigError("ceqe methods need a mention store: run `ceqe embed --corpus <corpus> --output <store>` "
                        "(or the Python extractor) and set `mentions`");
    }
    l.mentions = MentionStore::load(c.mentions, &diag);
    l.provider = make_provider(c);
  }
  if (need_static) {
    if (c.static_vectors.empty()) throw ConfigError("static methods need `static_vectors`");
    l.static_vectors = c.static_keys_are_stems ? load_static_vectors(c.static_vectors)
                                               : load_static_vectors(c.static_vectors, &l.index.analyzer());
  }
  return l;
}

std::vector<Topic> load_topics(const Config& c) { return parse_topics(read_file(require_path(c.topics, "topics"))); }

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_index(const Config& c) {
  const auto docs = load_corpus(c, config_analyzer(c));
  if (docs.empty()) throw Error("no documents in '" + c.corpus + "'");
  const auto index = Index::build(docs, config_analyzer(c));
  index.save(require_path(c.index, "index"));
  std::cout << "documents\t" << index.doc_count() << "\nterms\t" << index.term_count() << "\n";
  return 0;
}

int cmd_extract_plan(const Config& c) {
  const auto docs = load_corpus(c, config_analyzer(c));
  std::string out;
  for (const auto& d : docs) {
    nlohmann::json j;
    j["doc_id"] = d.doc_id;
    j["max_pieces"] = c.max_pieces;
    j["tokens"] = nlohmann::json::array();
    for (const auto& t : d.tokens) {
      j["tokens"].push_back({{"surface", t.surface}, {"stem", t.stem}, {"position", t.position}, {"stop", t.is_stopword}});
    }
    out += j.dump() + "\n";
  }
  emit(c, out);
  return 0;
}

int cmd_embed(const Config& c, const std::string& queries_out, const std::string& static_out, Diagnostics& diag) {
  const auto docs = load_corpus(c, config_analyzer(c));
  const DeterministicTestEmbedder embedder(c.test_embedder);
  MentionStoreWriter writer(c.test_embedder.dimension);
  for (const auto& d : docs) {
    writer.add_document(d.doc_id);
    for (auto& m : extract_mentions(d, embedder, c.max_pieces, &diag)) writer.add(std::move(m));
  }
  const auto bytes = writer.serialize();
  io::write_file(require_path(c.output, "output"), bytes);
  std::cout << "mentions\t" << writer.size() << "\n";
  if (!static_out.empty()) {
    io::write_file(static_out, format_static_vectors(static_vectors_from_mentions(MentionStore::from_bytes(bytes))));
  }
  if (!queries_out.empty()) {
    std::string lines;
    const Analyzer analyzer = config_analyzer(c);
    for (const auto& t : load_topics(c)) {
      const auto tokens = analyzer.analyze(t.text);
      if (tokens.empty()) continue;
      lines += query_embedding_to_json(embed_query(t.id, tokens, embedder)) + "\n";
    }
    io::write_file(queries_out, lines);
  }
  return 0;
}

int cmd_run(const Config& c, Method method, Diagnostics& diag) {
  const auto loaded = load_assets(c, {method}, diag);
  const auto topics = load_topics(c);
  const auto run = run_topics(method, topics, loaded.resources(), retrieval_params(c), &diag);
  emit(c, write_run(run));
  return 0;
}

int cmd_expand(const Config& c, Method method, Diagnostics& diag) {
  if (method == Method::bm25) throw ConfigError("bm25 has no expansion terms");
  const auto loaded = load_assets(c, {method}, diag);
  const auto res = loaded.resources();
  const auto params = retrieval_params(c);
  std::string out;
  for (const auto& t : load_topics(c)) {
    const auto q = prepare_query(method, t, res, params);
    const auto dist = expansion_terms(method, q, res, c.expansion.fb_docs, c.expansion.fb_terms, params, &diag);
    out += term_distribution_json(dist, c.expansion, to_string(method)).dump() + "\n";
  }
  emit(c, out);
  return 0;
}

int cmd_eval(const Config& c, const std::string& run_path, const std::string& json_path, Diagnostics& diag) {
  const auto qrels = parse_qrels(read_file(require_path(c.qrels, "qrels")));
  const auto run = parse_run(read_file(run_path));
  const auto report = evaluate_run(run, qrels);
  for (const auto& w : report.warnings) diag.warn(w);
  if (!report.excluded.empty()) diag.warn(std::to_string(report.excluded.size()) + " judged queries have no relevant documents and were excluded");
  emit(c, format_report_tsv(report));
  if (!json_path.empty()) io::write_file(json_path, report_json(report).dump(2) + "\n");
  return 0;
}

int cmd_compare(const Config& c, const std::string& run_a, const std::string& run_b, const std::string& metric) {
  const auto qrels = parse_qrels(read_file(require_path(c.qrels, "qrels")));
  const auto a = evaluate_run(parse_run(read_file(run_a)), qrels, {metric});
  const auto b = evaluate_run(parse_run(read_file(run_b)), qrels, {metric});
  std::vector<double> xa, xb;
  for (const auto& [qid, row] : a.per_query) {
    xa.push_back(row.at(metric));
    xb.push_back(b.value(qid, metric));
  }
  const auto t = paired_t_test(xa, xb);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "metric\t%s\nn\t%zu\nmean_a\t%.6f\nmean_b\t%.6f\nt\t%.6f\np\t%.6g\ndegenerate\t%s\n",
                metric.c_str(), t.n, a.mean.at(metric), b.mean.at(metric), t.t, t.p_value,
                t.degenerate ? "true" : "false");
  emit(c, buf);
  return 0;
}

std::vector<GridPoint> config_grid(const Config& c) {
  std::vector<std::size_t> docs = c.grid_fb_docs, terms = c.grid_fb_terms;
  std::vector<double> lambdas = c.grid_lambda;
  if (docs.empty()) {
    for (std::size_t d = 5; d <= 100; d += 5) docs.push_back(d);
  }
  if (terms.empty()) {
    for (std::size_t t = 10; t <= 100; t += 10) terms.push_back(t);
  }
  if (lambdas.empty()) lambdas = lambda_grid();
  std::vector<GridPoint> grid;
  for (auto d : docs) {
    for (auto t : terms) {
      for (auto l : lambdas) grid.push_back({d, t, l});
    }
  }
  return grid;
}

int cmd_tune(const Config& c, Method method, Diagnostics& diag) {
  if (method == Method::bm25) throw ConfigError("bm25 has no expansion parameters to tune");
  const auto loaded = load_assets(c, {method}, diag);
  const auto res = loaded.resources();
  const auto qrels = parse_qrels(read_file(require_path(c.qrels, "qrels")));
  const auto topics = load_topics(c);
  const auto base = retrieval_params(c);

  std::vector<PreparedQuery> prepared;
  for (const auto& t : topics) prepared.push_back(prepare_query(method, t, res, base));

  FoldAssignment folds;
  if (!c.folds.empty()) {
    folds = parse_folds(read_file(c.folds));
  } else {
    std::vector<std::string> ids;
    for (const auto& t : topics) ids.push_back(t.id);
    folds = random_folds(ids, c.num_folds, c.seed);
  }

  // Expansion distributions depend on (fb_docs, fb_terms) only; cache them
  // so each lambda costs one weighted retrieval per query.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<TermDistribution>> cache;
  const auto grid = config_grid(c);
  auto evaluate = [&](const GridPoint& g) {
    auto key = std::make_pair(g.fb_docs, g.fb_terms);
    auto it = cache.find(key);
    if (it == cache.end()) {
      std::vector<TermDistribution> dists;
      for (const auto& q : prepared) {
        dists.push_back(detail::query_mle(q.tokens).empty() ? TermDistribution{q.topic.id, {}}
                                                            : expansion_terms(method, q, res, g.fb_docs, g.fb_terms, base, &diag));
      }
      it = cache.emplace(key, std::move(dists)).first;
    }
    Run run;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const auto& q = prepared[i];
      const auto& dist = it->second[i];
      if (detail::query_mle(q.tokens).empty()) {
        run.rankings.push_back({q.topic.id, {}});
        continue;
      }
      const auto model = interpolate(q.tokens, dist, dist.empty() ? 0.0 : g.lambda);
      run.rankings.push_back(execute_expanded(*res.index, model, base.depth, base.mu));
    }
    return evaluate_run(run, qrels);
  };
  const auto cv = grid_search_cv<GridPoint>(folds, grid, evaluate, c.target_metric);

  nlohmann::json j;
  j["method"] = to_string(method);
  j["target"] = cv.target;
  j["grid_size"] = grid.size();
  j["folds"] = nlohmann::json::array();
  for (const auto& f : cv.folds) {
    j["folds"].push_back({{"fold", f.fold},
                          {"fb_docs", f.params.fb_docs},
                          {"fb_terms", f.params.fb_terms},
                          {"lambda", f.params.lambda},
                          {"train_" + cv.target, f.train_score},
                          {"test_queries", f.test_queries}});
  }
  j["pooled"] = report_json(cv.pooled);
  emit(c, j.dump(2) + "\n");
  return 0;
}

int cmd_intrinsic(const Config& c, const std::vector<std::string>& method_names, std::size_t pool_depth,
                  const std::string& report_path, Diagnostics& diag) {
  std::vector<Method> methods;
  for (const auto& n : method_names) {
    const Method m = parse_method(n);
    if (m == Method::bm25) throw ConfigError("bm25 produces no expansion terms");
    methods.push_back(m);
  }
  const auto loaded = load_assets(c, methods, diag);
  const auto res = loaded.resources();
  const auto qrels = parse_qrels(read_file(require_path(c.qrels, "qrels")));
  const auto params = retrieval_params(c);
  IntrinsicJudge judge(*res.index, qrels, params.mu, 1000);

  std::vector<std::map<std::string, TermDistribution>> per_method(methods.size());
  std::map<std::string, std::vector<Token>> query_tokens;
  for (const auto& t : load_topics(c)) {
    for (std::size_t i = 0; i < methods.size(); ++i) {
      const auto q = prepare_query(methods[i], t, res, params);
      if (detail::query_mle(q.tokens).empty()) continue;
      query_tokens[t.id] = q.tokens;
      auto dist = expansion_terms(methods[i], q, res, c.expansion.fb_docs, pool_depth, params, &diag);
      // Terms already in the query are not expansion candidates.
      std::erase_if(dist.terms, [&](const WeightedTerm& w) { return detail::query_mle(q.tokens).count(w.stem) != 0; });
      per_method[i][t.id] = std::move(dist);
    }
  }
  const auto pool = pool_candidates(per_method, pool_depth);
  std::vector<TermLabel> labels;
  for (const auto& [qid, stems] : pool) {
    for (const auto& stem : stems) {
      if (auto l = judge.label(qid, query_tokens.at(qid), stem)) labels.push_back(*l);
    }
  }
  emit(c, format_term_labels(labels));

  std::string table = "method\tP@10\tP@20\tP@100\n";
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    std::map<std::string, std::vector<std::string>> ranked;
    for (const auto& [qid, dist] : per_method[i]) {
      for (const auto& t : dist.terms) ranked[qid].push_back(t.stem);
    }
    table += std::string(to_string(methods[i]));
    for (std::size_t k : {10, 20, 100}) {
      const auto p = intrinsic_precision(ranked, labels, k);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "\t%.4f", p.mean);
      table += buf;
      j[std::string(to_string(methods[i]))]["P@" + std::to_string(k)] = p.mean;
      j[std::string(to_string(methods[i]))]["queries"] = p.per_query.size();
    }
    table += "\n";
  }
  std::cerr << table;
  if (!report_path.empty()) io::write_file(report_path, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextualized-embedding query expansion: indexing, runs and evaluation"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* index = app.add_subcommand("index", "ingest a corpus and write the index");
  auto* plan = app.add_subcommand("extract-plan", "tokens per document as JSONL, input for the extractor");
  auto* embed = app.add_subcommand("embed", "mention store from the deterministic test embedder");
  auto* run = app.add_subcommand("run", "retrieve topics with one method and write a TREC run");
  auto* expand = app.add_subcommand("expand", "write expansion term distributions as JSONL");
  auto* eval = app.add_subcommand("eval", "evaluate a run against qrels");
  auto* compare = app.add_subcommand("compare", "paired t-test between two runs");
  auto* tune = app.add_subcommand("tune", "cross-validated grid search");
  auto* intrinsic = app.add_subcommand("intrinsic", "label expansion terms one at a time and score methods");
  for (auto* cmd : {index, plan, embed, run, expand, eval, compare, tune, intrinsic}) add_common(cmd, flags);
  for (auto* cmd : {run, expand, tune}) cmd->add_option("--method", flags.method, "retrieval method")->required();

  std::string queries_out, static_out, run_path, json_path, run_a, run_b, metric = "AP@1000", report_path;
  std::vector<std::string> methods{"rm3", "ceqe-centroid", "ceqe-max", "ceqe-mul"};
  std::size_t pool_depth = 1000;
  embed->add_option("--queries-out", queries_out, "also write query embeddings for --topics (JSONL)");
  embed->add_option("--static-out", static_out, "also write per-stem mean vectors (GloVe text)");
  eval->add_option("--run", run_path, "run file")->required();
  eval->add_option("--json", json_path, "also write the report as JSON");
  compare->add_option("--run-a", run_a, "first run")->required();
  compare->add_option("--run-b", run_b, "second run")->required();
  compare->add_option("--metric", metric, "metric to compare");
  intrinsic->add_option("--methods", methods, "methods to pool and score")->delimiter(',');
  intrinsic->add_option("--pool-depth", pool_depth, "terms per method entering the pool");
  intrinsic->add_option("--report", report_path, "write per-method precision as JSON");

  CLI11_PARSE(app, argc, argv);

  Diagnostics diag;
  try {
    const Config c = resolve(flags);
    int rc = 0;
    if (index->parsed()) rc = cmd_index(c);
    if (plan->parsed()) rc = cmd_extract_plan(c);
    if (embed->parsed()) rc = cmd_embed(c, queries_out, static_out, diag);
    if (run->parsed()) rc = cmd_run(c, parse_method(flags.method), diag);
    if (expand->parsed()) rc = cmd_expand(c, parse_method(flags.method), diag);
    if (eval->parsed()) rc = cmd_eval(c, run_path, json_path, diag);
    if (compare->parsed()) rc = cmd_compare(c, run_a, run_b, metric);
    if (tune->parsed()) rc = cmd_tune(c, parse_method(flags.method), diag);
    if (intrinsic->parsed()) rc = cmd_intrinsic(c, methods, pool_depth, report_path, diag);
    print_warnings(diag);
    return rc;
  } catch (const std::exception& ex) {
    print_warnings(diag);
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
