// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if
// any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ceqe/intrinsic.hpp"
#include "ceqe/static_vectors.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace ceqe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

oracle::Filter default_filter() {
  oracle::Filter f;
  const auto words = StopwordSet().sorted_words();
  f.stopwords.insert(words.begin(), words.end());
  return f;
}

oracle::Weights to_weights(const TermDistribution& d) {
  oracle::Weights w;
  for (const auto& t : d.terms) w[t.stem] = t.weight;
  return w;
}

/// Largest absolute difference, or +inf if the supports differ. When the
/// supports differ only because near-equal weights sat on the truncation
/// boundary, the untruncated weights are compared instead.
double compare(const TermDistribution& lib, const oracle::Weights& raw, std::size_t fb_terms,
               const std::function<TermDistribution()>& untruncated) {
  const auto want = oracle::truncate(raw, fb_terms);
  const auto got = to_weights(lib);
  bool same_keys = got.size() == want.size();
  for (const auto& [k, v] : want) same_keys = same_keys && got.count(k);
  if (!same_keys) {
    std::vector<double> sorted;
    for (const auto& [k, v] : raw) sorted.push_back(v);
    std::sort(sorted.rbegin(), sorted.rend());
    const bool boundary_tie = fb_terms < sorted.size() && std::abs(sorted[fb_terms - 1] - sorted[fb_terms]) < 1e-12;
    if (!boundary_tie) return INFINITY;
    return compare(untruncated(), raw, raw.size() + 1, {});
  }
  double worst = 0;
  for (const auto& [k, v] : want) worst = std::max(worst, std::abs(got.at(k) - v));
  return worst;
}

std::vector<oracle::FeedbackMentions> oracle_feedback(const synth::SmallInstance& inst) {
  std::vector<oracle::FeedbackMentions> out;
  for (const auto& d : inst.feedback.docs) {
    oracle::FeedbackMentions fm;
    fm.posterior = d.posterior;
    for (const auto& m : inst.mentions) {
      if (m.doc_id == d.doc_id) fm.mentions.push_back({m.stem, m.vector});
    }
    out.push_back(std::move(fm));
  }
  return out;
}

// 1 ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto filter = default_filter();
  const int seeds = 250;
  double worst = 0;
  int failures = 0;
  for (int s = 0; s < seeds; ++s) {
    const auto inst = synth::make_small_instance(static_cast<std::uint64_t>(s));
    std::vector<oracle::Doc> rm_docs;
    for (const auto& d : inst.feedback.docs) {
      const auto& doc = *std::find_if(inst.docs.begin(), inst.docs.end(), [&](auto& x) { return x.doc_id == d.doc_id; });
      rm_docs.push_back({synth::content_stems(doc), d.posterior});
    }
    const auto fm = oracle_feedback(inst);
    std::vector<std::vector<double>> terms;
    for (const auto& [stem, v] : inst.query_embedding.per_term) terms.push_back(v);

    auto check = [&](double diff) {
      worst = std::max(worst, diff);
      failures += !(diff <= 1e-9);
    };

    const auto rm_raw = oracle::relevance_model(rm_docs, filter);
    if (rm_raw.empty()) {
      bool threw = false;
      try {
        rm_expand(inst.feedback, inst.index, inst.fb_terms);
      } catch (const Error&) {
        threw = true;
      }
      failures += !threw;
    } else {
      check(compare(rm_expand(inst.feedback, inst.index, inst.fb_terms), rm_raw, inst.fb_terms,
                    [&] { return rm_expand(inst.feedback, inst.index, 100000); }));
    }

    check(compare(ceqe_centroid(inst.feedback, inst.query_embedding, inst.store, inst.fb_terms),
                  oracle::centroid_model(fm, inst.query_embedding.centroid, filter), inst.fb_terms,
                  [&] { return ceqe_centroid(inst.feedback, inst.query_embedding, inst.store, 100000); }));
    for (bool product : {false, true}) {
      const Pooling pool = product ? Pooling::prod : Pooling::max;
      check(compare(ceqe_term_pool(inst.feedback, inst.query_embedding, inst.store, pool, inst.fb_terms),
                    oracle::pooled_model(fm, terms, product, filter), inst.fb_terms,
                    [&] { return ceqe_term_pool(inst.feedback, inst.query_embedding, inst.store, pool, 100000); }));
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 60.0,
          std::to_string(seeds) + " seeds, 4 estimators, max |diff| " + fmt("%.2e", worst) + " (tol 1e-9), " +
              fmt("%.1f", secs) + " s (limit 60 s)"};
}

// 2 ---------------------------------------------------------------------------

Outcome distribution_invariants() {
  const int instances = 1000;
  std::size_t checked = 0, bad = 0;
  auto sum_ok = [&](double total, bool nonneg) {
    ++checked;
    bad += !(std::abs(total - 1.0) <= 1e-9 && nonneg);
  };
  auto check_dist = [&](const TermDistribution& d) {
    if (d.empty()) return;
    bool nonneg = true;
    for (const auto& t : d.terms) nonneg = nonneg && t.weight >= 0.0;
    sum_ok(d.total(), nonneg);
  };
  auto check_map = [&](const std::map<std::string, double>& m) {
    if (m.empty()) return;
    double z = 0;
    bool nonneg = true;
    for (const auto& [k, v] : m) {
      z += v;
      nonneg = nonneg && v >= 0.0;
    }
    sum_ok(z, nonneg);
  };
  auto check_posteriors = [&](const FeedbackSet& fb) {
    double z = 0;
    bool nonneg = true;
    for (const auto& d : fb.docs) {
      z += d.posterior;
      nonneg = nonneg && d.posterior >= 0.0;
    }
    sum_ok(z, nonneg);
  };

  for (int s = 0; s < instances; ++s) {
    const auto inst = synth::make_small_instance(100000 + static_cast<std::uint64_t>(s));
    check_posteriors(inst.feedback);
    const auto first = bm25_search(inst.index, inst.query, 1000);
    if (!first.empty()) {
      const auto fb = compute_posteriors(first, 10, inst.index, inst.query, 1500.0);
      check_posteriors(fb);
    }
    try {
      check_dist(rm_expand(inst.feedback, inst.index, inst.fb_terms));
    } catch (const Error&) {
      // no candidate terms at all; nothing emitted
    }
    check_dist(ceqe_centroid(inst.feedback, inst.query_embedding, inst.store, inst.fb_terms));
    for (Pooling p : {Pooling::max, Pooling::prod}) {
      const auto d = ceqe_term_pool(inst.feedback, inst.query_embedding, inst.store, p, inst.fb_terms);
      check_dist(d);
      check_dist(interpolate(inst.query, d, 0.5));
    }
    for (const auto& d : inst.feedback.docs) {
      check_map(ceqe_centroid_document(d.doc_id, inst.query_embedding, inst.store));
      check_map(ceqe_term_pool_document(d.doc_id, inst.query_embedding, inst.store, Pooling::max));
      check_map(ceqe_term_pool_document(d.doc_id, inst.query_embedding, inst.store, Pooling::prod));
    }
  }
  return {bad == 0 && checked > 0, std::to_string(instances) + " instances, " + std::to_string(checked) +
                                       " distributions checked, " + std::to_string(bad) + " outside 1 +- 1e-9"};
}

// 3 ---------------------------------------------------------------------------

Outcome single_term_reduction() {
  const int fixtures = 150;
  int mismatches = 0;
  for (int s = 0; s < fixtures; ++s) {
    const auto inst = synth::make_small_instance(200000 + static_cast<std::uint64_t>(s), 1);
    if (inst.query_embedding.per_term.size() != 1) ++mismatches;
    const auto mx = ceqe_term_pool(inst.feedback, inst.query_embedding, inst.store, Pooling::max, inst.fb_terms);
    const auto mu = ceqe_term_pool(inst.feedback, inst.query_embedding, inst.store, Pooling::prod, inst.fb_terms);
    bool same = mx.terms.size() == mu.terms.size();
    for (std::size_t i = 0; same && i < mx.terms.size(); ++i) {
      same = mx.terms[i].stem == mu.terms[i].stem &&
             std::memcmp(&mx.terms[i].weight, &mu.terms[i].weight, sizeof(double)) == 0;
    }
    mismatches += !same;
  }
  return {mismatches == 0, std::to_string(fixtures) + " one-term fixtures, " + std::to_string(mismatches) +
                               " not bitwise equal"};
}

// 4 ---------------------------------------------------------------------------

Outcome metric_oracle() {
  synth::Rng rng(4242);
  const int pairs = 600;
  double worst = 0;
  for (int s = 0; s < pairs; ++s) {
    const std::size_t pool = rng.between(1, 60);
    Qrels qrels;
    std::map<std::string, int> grades;
    for (std::size_t d = 0; d < pool; ++d) {
      if (!rng.chance(0.5)) continue;
      const int g = static_cast<int>(rng.below(4));
      qrels.add({"q", "0", "d" + std::to_string(d), g});
      grades["d" + std::to_string(d)] = g;
    }
    Ranking r{"q", {}};
    std::vector<std::string> ids;
    for (std::size_t d = 0; d < pool; ++d) {
      if (rng.chance(0.7)) ids.push_back("d" + std::to_string(d));
    }
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    for (std::size_t i = 0; i < ids.size(); ++i) r.entries.push_back({ids[i], -static_cast<double>(i)});

    const std::size_t cutoff = rng.chance(0.5) ? 1000 : rng.between(1, 30);
    const std::size_t k = rng.between(1, 30);
    auto diff = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    diff(average_precision(r, qrels, cutoff).value_or(0.0), oracle::average_precision(ids, grades, cutoff));
    diff(ndcg(r, qrels, k), oracle::ndcg(ids, grades, k));
    diff(precision_at(r, qrels, k), oracle::precision(ids, grades, k));
    diff(recall_at(r, qrels, k).value_or(0.0), oracle::recall(ids, grades, k));
  }

  // Relevant at ranks 1 and 3 of five, two relevant in total.
  Qrels q;
  q.add({"q", "0", "a", 1});
  q.add({"q", "0", "c", 1});
  const Ranking r{"q", {{"a", 5}, {"b", 4}, {"c", 3}, {"d", 2}, {"e", 1}}};
  const double ap = *average_precision(r, q);
  const bool fixture = ap == (1.0 + 2.0 / 3.0) / 2.0;

  return {worst <= 1e-12 && fixture, std::to_string(pairs) + " random pairs, max |diff| " + fmt("%.2e", worst) +
                                         " (tol 1e-12); fixture AP " + fmt("%.4f", ap) + " (expect 0.8333)"};
}

// 5 ---------------------------------------------------------------------------

Outcome intrinsic_protocol() {
  synth::Rng rng(55);
  synth::WordFactory words(rng);
  std::vector<std::string> filler;
  for (int i = 0; i < 400; ++i) filler.push_back(words.next());

  struct Q {
    std::string id;
    std::vector<std::string> terms;
    std::vector<std::string> planted;
  };
  std::vector<Q> queries;
  for (int i = 0; i < 3; ++i) {
    Q q{"Q" + std::to_string(i), {words.next(), words.next()}, {words.next(), words.next(), words.next()}};
    queries.push_back(q);
  }

  std::vector<Document> docs;
  Qrels qrels;
  int n = 0;
  auto add = [&](const std::vector<std::string>& toks) {
    char id[16];
    std::snprintf(id, sizeof(id), "X%05d", n++);
    docs.push_back(synth::make_document(id, toks));
    return std::string(id);
  };
  for (int i = 0; i < 1200; ++i) {
    std::vector<std::string> toks;
    const std::size_t len = rng.between(20, 40);
    for (std::size_t j = 0; j < len; ++j) toks.push_back(rng.pick(filler));
    add(toks);
  }
  for (const auto& q : queries) {
    // Relevant and found by the query itself.
    for (int i = 0; i < 5; ++i) {
      std::vector<std::string> toks = q.terms;
      for (int j = 0; j < 20; ++j) toks.push_back(rng.pick(filler));
      qrels.add({q.id, "0", add(toks), 1});
    }
    // Non-relevant documents that also use the query words.
    for (int i = 0; i < 5; ++i) {
      std::vector<std::string> toks{q.terms[static_cast<std::size_t>(i % 2)]};
      for (int j = 0; j < 30; ++j) toks.push_back(rng.pick(filler));
      add(toks);
    }
    // Relevant but long and free of query words, so the query alone ranks
    // them below depth 1000. Only the planted word reaches them.
    for (const auto& p : q.planted) {
      qrels.add({q.id, "0", add(std::vector<std::string>(80, p)), 1});
    }
  }
  const Index index = Index::build(docs);

  IntrinsicJudge judge(index, qrels, 1500.0);
  std::vector<TermLabel> labels;
  int wrong = 0;
  std::size_t judged = 0;
  for (const auto& q : queries) {
    const auto tokens = index.analyzer().analyze(synth::join(q.terms));
    std::vector<std::string> candidates = filler;
    for (const auto& other : queries) candidates.insert(candidates.end(), other.planted.begin(), other.planted.end());
    for (const auto& stem : candidates) {
      if (!index.find_term(stem)) continue;
      const auto l = judge.label(q.id, tokens, stem);
      ++judged;
      const bool planted = std::find(q.planted.begin(), q.planted.end(), stem) != q.planted.end();
      wrong += (l->label == TermLabelKind::positive) != planted;
      labels.push_back(*l);
    }
  }

  // Ranked lists for the precision check: Q0 ranks all three planted terms
  // in its top 10, Q1 two of them, Q2 one. Hand count: (3 + 2 + 1) / 30.
  std::map<std::string, std::vector<std::string>> ranked;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto& list = ranked[queries[i].id];
    for (std::size_t j = 0; j < 10; ++j) list.push_back(filler[j + 10 * i]);
    for (std::size_t j = 0; j < 3 - i; ++j) list[2 * j + 1] = queries[i].planted[j];
    list.push_back(queries[i].planted.back());  // rank 11, outside the cutoff
  }
  const auto prec = intrinsic_precision(ranked, labels, 10);
  const double expected = (3.0 + 2.0 + 1.0) / 30.0;
  const bool prec_ok = std::abs(prec.mean - expected) <= 1e-15 && prec.unjudged == 0;

  return {wrong == 0 && prec_ok,
          std::to_string(docs.size()) + " docs, " + std::to_string(judged) + " labels, " + std::to_string(wrong) +
              " disagree with the planted set; P@10 " + fmt("%.4f", prec.mean) + " (hand count 0.2000)"};
}

// 6 ---------------------------------------------------------------------------

Outcome directional_replication() {
  const auto t0 = std::chrono::steady_clock::now();
  const int seeds = 20;
  std::vector<double> rm, stat, cmax;
  for (int s = 0; s < seeds; ++s) {
    synth::TopicalParams tp;
    tp.distractor_is_partner = true;
    tp.distractor_share = 0.3;
    const auto c = synth::make_topical_collection(1000 + static_cast<std::uint64_t>(s), tp);
    const Index index = Index::build(c.docs);
    TestEmbedderConfig ec;
    ec.dimension = 64;
    ec.seed = static_cast<std::uint64_t>(s);
    ec.radius = 10;
    ec.context_weight = 3.0;
    const DeterministicTestEmbedder emb(ec);
    MentionStoreWriter w(ec.dimension);
    for (const auto& d : c.docs) {
      w.add_document(d.doc_id);
      for (auto& m : extract_mentions(d, emb, 128)) w.add(std::move(m));
    }
    const auto store = MentionStore::from_bytes(w.serialize());
    const auto table = static_vectors_from_mentions(store);
    const Resources res{&index, &store, &table, &emb};
    RetrievalParams p;
    p.mu = 100.0;
    auto recall100 = [&](Method m) {
      return evaluate_run(run_topics(m, c.topics, res, p), c.qrels, {"Recall@100"}).mean.at("Recall@100");
    };
    rm.push_back(recall100(Method::rm3));
    stat.push_back(recall100(Method::static_global));
    cmax.push_back(recall100(Method::ceqe_max));
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const auto t = paired_t_test(cmax, stat);
  const double secs = seconds_since(t0);
  const bool pass = mean(cmax) > mean(stat) && mean(cmax) >= mean(rm) && !t.degenerate && t.p_value < 0.05 &&
                    secs < 300.0;
  return {pass, "mean Recall@100 ceqe-max " + fmt("%.4f", mean(cmax)) + ", static " + fmt("%.4f", mean(stat)) +
                    ", rm3 " + fmt("%.4f", mean(rm)) + "; paired t p " + fmt("%.2e", t.p_value) + "; " +
                    fmt("%.0f", secs) + " s (limit 300 s)"};
}

// 7 ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CEQE_CLI_PATH) + " " + args + " 2>>" + log.string() + " >/dev/null";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("ceqe-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  synth::TopicalParams tp;
  tp.topic_pairs = 3;
  tp.docs_per_topic = 20;
  tp.noise_docs = 60;
  const auto c = synth::make_topical_collection(7, tp);
  std::string corpus;
  for (const auto& d : c.docs) corpus += nlohmann::json{{"id", d.doc_id}, {"contents", d.raw_text}}.dump() + "\n";
  spit(dir / "corpus.jsonl", corpus);
  spit(dir / "topics.tsv", format_topics(c.topics));
  const std::string d = dir.string() + "/";
  const fs::path log = dir / "stderr.txt";

  int rc = 0;
  rc |= cli("index --corpus " + d + "corpus.jsonl --index " + d + "a.idx", log);
  rc |= cli("index --corpus " + d + "corpus.jsonl --index " + d + "b.idx", log);
  rc |= cli("embed --corpus " + d + "corpus.jsonl --output " + d + "m.bin --seed 3", log);
  std::vector<std::string> mismatched;
  if (slurp(dir / "a.idx") != slurp(dir / "b.idx") || slurp(dir / "a.idx").empty()) mismatched.push_back("index");
  for (const char* method : {"bm25", "rm3", "ceqe-max"}) {
    for (const char* out : {"r1", "r2"}) {
      rc |= cli(std::string("run --method ") + method + " --index " + d + "a.idx --mentions " + d + "m.bin --topics " +
                    d + "topics.tsv --seed 3 --output " + d + out + ".run",
                log);
    }
    const auto r1 = slurp(dir / "r1.run");
    if (r1.empty() || r1 != slurp(dir / "r2.run")) mismatched.push_back(method);
  }
  const bool pass = rc == 0 && mismatched.empty();
  std::string detail = "index rebuild and bm25/rm3/ceqe-max runs twice each";
  if (rc != 0) detail += "; a CLI call failed, see " + log.string();
  for (const auto& m : mismatched) detail += "; " + m + " output differs";
  if (pass) {
    detail += ", byte-identical";
    fs::remove_all(dir);
  }
  return {pass, detail};
}

// 8 ---------------------------------------------------------------------------

Outcome format_round_trips() {
  synth::Rng rng(8);
  int failures = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Run run;
    run.tag = "tag" + std::to_string(t);
    const std::size_t nq = rng.between(1, 4);
    Qrels qrels;
    for (std::size_t q = 0; q < nq; ++q) {
      Ranking r{"q" + std::to_string(q), {}};
      const std::size_t nd = rng.between(1, 30);
      double score = 10.0 * rng.uniform();
      for (std::size_t d = 0; d < nd; ++d) {
        score -= rng.uniform();
        r.entries.push_back({"doc-" + std::to_string(rng.below(1000)) + "-" + std::to_string(d), score});
        if (rng.chance(0.3)) qrels.add({r.query_id, "0", r.entries.back().doc_id, static_cast<int>(rng.below(4))});
      }
      run.rankings.push_back(std::move(r));
    }
    const std::string run_text = write_run(run);
    failures += write_run(parse_run(run_text)) != run_text;
    const std::string qrels_text = write_qrels(qrels);
    failures += write_qrels(parse_qrels(qrels_text)) != qrels_text;
  }

  int store_failures = 0;
  for (int s = 0; s < 50; ++s) {
    const auto inst = synth::make_small_instance(300000 + static_cast<std::uint64_t>(s));
    MentionStoreWriter w(inst.store.dimension());
    for (const auto& d : inst.docs) w.add_document(d.doc_id);
    for (const auto& m : inst.mentions) w.add(m);
    const std::string bytes = w.serialize();
    const auto loaded = MentionStore::from_bytes(bytes);
    MentionStoreWriter again(loaded.dimension());
    for (auto id : loaded.doc_ids()) again.add_document(id);
    for (auto& m : loaded.all_mentions()) again.add(std::move(m));
    store_failures += again.serialize() != bytes;
  }
  return {failures == 0 && store_failures == 0,
          std::to_string(trials) + " run/qrels files, 50 mention stores; " + std::to_string(failures + store_failures) +
              " differ after a round trip"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"distribution invariants", distribution_invariants},
      {"single-term reduction", single_term_reduction},
      {"metric oracle", metric_oracle},
      {"intrinsic protocol", intrinsic_protocol},
      {"directional synthetic replication", directional_replication},
      {"determinism", determinism},
      {"format round-trips", format_round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
