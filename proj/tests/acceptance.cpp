// Acceptance checks. Prints one PASS/FAIL line per criterion followed by the
// measurements behind it; exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dcomp/cli.hpp"
#include "dcomp/dcomp.hpp"
#include "helpers.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace dcomp;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  violated: " << what << '\n';
    }
  }
};

int g_failures = 0;

void report(const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "  exception: " << e.what() << '\n';
  }
  std::printf("%s %s (%.1f s)\n%s", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0),
              o.detail.str().c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared synthetic setups

double mrr10(const EmbeddingStore& docs, const EmbeddingStore& queries, const Qrels& qrels) {
  FlatIndex index(docs);
  const auto results = flat_topk_batch(index, queries, 10, detail::default_threads());
  RunList run;
  for (std::size_t q = 0; q < queries.size(); ++q) run[queries.id(q)] = to_ranked(results[q]);
  return mrr_at_k(run, qrels, 10).value;
}

double compressed_mrr10(const CompressorModel& model, const SynthData& data) {
  return mrr10(compress_store(model, data.docs, Side::Document),
               compress_store(model, data.test_queries, Side::Query), data.qrels);
}

struct Prepared {
  SynthData data;
  TopDocsTable dtop;
};

Prepared prepare(std::size_t intrinsic_dim, std::uint64_t seed) {
  SynthConfig cfg;  // K=256, 50k docs, 2000 train and 500 test queries
  cfg.intrinsic_dim = intrinsic_dim;
  cfg.seed = seed;
  Prepared p{synth_teacher(cfg), {}};
  p.dtop = build_dtop(p.data.docs, p.data.train_queries, kDefaultTopDocs, detail::default_threads());
  return p;
}

TrainResult train_on(const Prepared& p, TrainableKind kind, std::size_t dim, std::uint64_t seed,
                     Ablation ablation = Ablation::Full) {
  TrainConfig cfg;  // λ=0.1, lr=0.001, batch 128, 20 epochs
  cfg.seed = seed;
  cfg.ablation = ablation;
  if (kind == TrainableKind::Ce) cfg.n_negatives = 7;
  const auto init = init_model(kind, p.data.docs.dimension(), dim, seed);
  return train(init, p.data.docs, p.data.train_queries, p.data.qrels, p.dtop, cfg);
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// ---------------------------------------------------------------------------

void gradient_correctness(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240601);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t k = 4 + gen() % 29;              // 4..32
    const std::size_t l = 1 + gen() % std::min<std::size_t>(8, k);  // 1..8
    const std::size_t cands = 2 + gen() % 15;          // 2..16
    const std::size_t negs = 1 + gen() % 4;
    const std::size_t batch = 1 + gen() % 4;
    const bool split = gen() % 4 == 0;
    const auto model = testing_helpers::random_conae(k, l, gen(), split);
    const auto b = testing_helpers::random_batch(k, batch, cands, negs, gen());
    TrainConfig cfg;  // full objective
    const double err = fd_check(model, std::span<const TrainExample>(b.examples), cfg, 1e-5);
    worst = std::max(worst, err);
    o.require(err < 1e-4, "instance " + std::to_string(inst) + " relative error " + std::to_string(err));
  }
  const double secs = seconds_since(t0);
  o.detail << "  50 instances, worst relative error " << worst << ", " << fmt(secs) << " s\n";
  o.require(secs < 30.0, "runtime under 30 s");
}

void loss_oracles(Outcome& o) {
  const double kl = kl_loss(DenseVector{1, 0}, DenseVector{0.5, 0.5});
  o.require(std::abs(kl - std::log(2.0)) <= 1e-9, "kl_loss([1,0],[.5,.5]) = ln 2");
  o.require(std::abs(margin_from_scores(0.7, 0.7) - 1.0) <= 1e-12, "margin at equal scores = 1");
  o.require(std::abs(margin_from_scores(1e6, -1e6) + 1.0) <= 1e-12, "margin saturation = -1");
  o.require(std::abs(margin_from_scores(0.5, -0.5) - 0.07576568547998053) <= 1e-12, "margin(0.5,-0.5)");
  ConaeModel id{DenseMatrix::identity(2), DenseMatrix::identity(2), DenseMatrix::identity(2), std::nullopt};
  const DenseVector q{1, 0}, pos{0.5, 1}, neg{-0.5, 2};
  o.require(std::abs(margin_loss_query(id, q, pos, neg) - 0.07576568547998053) <= 1e-12, "query margin example");
  o.require(std::abs(margin_loss_doc(id, q, pos, neg) - 0.07576568547998053) <= 1e-12, "doc margin example");
  TrainConfig cfg;
  o.require(total_loss(2, 1, 1, cfg).total == 2.0 + 0.1 * 1.0 + 0.1 * 1.0, "total = kl + λ·mq + λ·md");
  o.require(std::abs(total_loss(2, 1, 1, cfg).total - 2.2) <= 1e-15, "total 2.2");
  cfg.lambda = 0;
  o.require(total_loss(2, 1, 1, cfg).total == 2.0, "λ=0 → total = kl");
  const auto p = softmax_stable(DenseVector{std::log(2.0), 0});
  o.require(std::abs(p[0] - 2.0 / 3.0) <= 1e-12 && std::abs(p[1] - 1.0 / 3.0) <= 1e-12, "softmax [ln2,0]");
  TopDocsTable t;
  t.entries["q"] = {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}};
  for (double x : teacher_distribution("q", t)) o.require(x == 0.25, "equal teacher scores → 0.25 each");
  o.detail << "  kl=" << kl << " margin(0.5,-0.5)=" << margin_from_scores(0.5, -0.5) << '\n';
}

void flat_exactness(Outcome& o) {
  std::mt19937_64 gen(777);
  int exact_instances = 0, real_instances = 0, tied_instances = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + gen() % 500, dim = 1 + gen() % 64, k = 1 + gen() % 120;
    // Two thirds of the instances use small integers or dyadic values, where
    // every summation order is exact and ties are frequent.
    const int mode = inst % 3;
    EmbeddingStore docs, queries;
    if (mode == 0) {
      docs = testing_helpers::random_store(n, dim, gen());
      queries = testing_helpers::random_store(3, dim, gen(), 'q');
    } else {
      const int span = mode == 1 ? 1 : 3;
      docs = testing_helpers::integer_store(n, dim, gen(), -span, span);
      queries = testing_helpers::integer_store(3, dim, gen(), -span, span, 'q');
      if (mode == 2) {  // scale to dyadic fractions
        DenseMatrix m = docs.matrix();
        for (double& x : m.values()) x *= 0.125;
        docs = EmbeddingStore(docs.ids(), m);
      }
    }
    mode == 0 ? ++real_instances : ++exact_instances;
    FlatIndex index(docs);
    const auto rows = testing_helpers::rows_of(docs);
    bool had_tie = false;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const std::vector<double> qv(queries.row(q).begin(), queries.row(q).end());
      const auto expect = oracle::full_sort_topk(docs.ids(), rows, qv, k);
      const auto got = flat_topk(index, queries.row(q), k);
      bool same = got.size() == expect.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].doc_id == expect[i].first &&
               (mode == 0 ? std::abs(got[i].score - expect[i].second) <= 1e-9 * (1 + std::abs(expect[i].second))
                          : got[i].score == expect[i].second);
        if (i > 0 && got[i].score == got[i - 1].score) had_tie = true;
      }
      o.require(same, "instance " + std::to_string(inst) + " query " + std::to_string(q) + " differs from oracle");
    }
    tied_instances += had_tie;
  }
  o.detail << "  200 instances (" << exact_instances << " exact-arithmetic, " << real_instances
           << " Gaussian), " << tied_instances << " with tied scores in the returned list\n";
  o.require(tied_instances > 50, "tie cases exercised");
}

void hnsw_quality(Outcome& o) {
  SynthConfig cfg;
  cfg.intrinsic_dim = 32;
  cfg.ambient_dim = 128;
  cfg.n_clusters = 200;
  cfg.n_docs = 10000;
  cfg.n_queries = 0;
  cfg.n_test_queries = 500;
  cfg.seed = 11;
  const auto data = synth_teacher(cfg);
  const auto t0 = Clock::now();
  const auto index = hnsw_build(data.docs, HnswParams{});
  const double build_s = seconds_since(t0);
  index.validate();
  FlatIndex flat(data.docs);
  const auto truth = flat_topk_batch(flat, data.test_queries, 10, 1);
  double prev = -1;
  for (std::size_t ef : {16, 64, 128, 256}) {
    double hits = 0;
    for (std::size_t q = 0; q < data.test_queries.size(); ++q) {
      std::set<std::string> t;
      for (const auto& d : truth[q]) t.insert(d.doc_id);
      for (const auto& d : hnsw_search(index, data.test_queries.row(q), 10, ef)) hits += t.count(d.doc_id);
    }
    const double recall = hits / (10.0 * data.test_queries.size());
    o.detail << "  ef_search=" << ef << " recall@10=" << fmt(recall) << '\n';
    o.require(recall >= prev, "recall non-decreasing in ef_search");
    if (ef == 128) o.require(recall >= 0.95, "recall@10 >= 0.95 at ef_search=128");
    prev = recall;
  }
  o.detail << "  build " << fmt(build_s) << " s for 10k x 128\n";
}

void metric_oracles(Outcome& o) {
  auto ranked = [](std::size_t n) {
    RunList run;
    for (std::size_t i = 1; i <= n; ++i) run["q"].push_back({"d" + std::to_string(i), double(n - i), i});
    return run;
  };
  auto judged = [](std::initializer_list<std::pair<int, int>> rg) {
    Qrels q;
    for (auto [r, g] : rg) q["q"]["d" + std::to_string(r)] = g;
    return q;
  };
  auto near = [&](double a, double b, const std::string& what) { o.require(std::abs(a - b) <= 1e-9, what); };
  const auto r30 = ranked(30);
  near(mrr_at_k(r30, judged({{1, 1}}), 10).value, 1.0, "mrr rank 1");
  near(mrr_at_k(r30, judged({{4, 1}}), 10).value, 0.25, "mrr rank 4");
  near(mrr_at_k(r30, judged({{11, 1}}), 10).value, 0.0, "mrr cutoff");
  near(ndcg_at_k(r30, judged({{1, 2}, {2, 1}}), 10).value, 1.0, "ndcg ideal");
  near(ndcg_at_k(r30, judged({{2, 1}}), 10).value, 0.6309297535714575, "ndcg single relevant at rank 2");
  near(ndcg_at_k(r30, judged({{2, 2}, {1, 1}}), 10).value, 0.7967075809905066, "ndcg swapped grades");
  near(recall_at_k(r30, judged({{1, 1}, {5, 1}}), 10).value, 1.0, "recall all");
  near(recall_at_k(r30, judged({{1, 1}, {50, 1}}), 10).value, 0.5, "recall half");
  near(hit_at_k(r30, judged({{20, 1}}), 20).value, 1.0, "hit boundary");
  near(hit_at_k(r30, judged({{21, 1}}), 20).value, 0.0, "hit past cutoff");

  std::mt19937_64 gen(99);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RunList run;
    Qrels qrels;
    const int nq = 1 + gen() % 10;
    for (int q = 0; q < nq; ++q) {
      const std::string qid = "q" + std::to_string(q);
      std::vector<int> docs(20);
      std::iota(docs.begin(), docs.end(), 0);
      std::shuffle(docs.begin(), docs.end(), gen);
      const int len = gen() % 21;
      for (int i = 0; i < len; ++i) run[qid].push_back({"d" + std::to_string(docs[i]), -double(i), std::size_t(i + 1)});
      if (gen() % 4 == 0) continue;
      for (int d = 0; d < 20; ++d)
        if (gen() % 3 == 0) qrels[qid]["d" + std::to_string(d)] = int(gen() % 4);
    }
    for (std::size_t k : {1, 5, 10, 20}) {
      double sm = 0, sh = 0, sr = 0, sn = 0;
      int na = 0, nr = 0;
      for (const auto& [qid, list] : run) {
        auto it = qrels.find(qid);
        if (it == qrels.end()) continue;
        oracle::Ranking r;
        for (const auto& d : list) r.push_back(d.doc_id);
        sm += oracle::mrr(r, it->second, k);
        sh += oracle::hit(r, it->second, k);
        ++na;
        if (oracle::recall(r, it->second, k) >= 0) {
          sr += oracle::recall(r, it->second, k);
          sn += oracle::ndcg(r, it->second, k);
          ++nr;
        }
      }
      const double diffs[] = {
          std::abs(mrr_at_k(run, qrels, k).value - (na ? sm / na : 0)),
          std::abs(hit_at_k(run, qrels, k).value - (na ? sh / na : 0)),
          std::abs(recall_at_k(run, qrels, k).value - (nr ? sr / nr : 0)),
          std::abs(ndcg_at_k(run, qrels, k).value - (nr ? sn / nr : 0)),
      };
      for (double d : diffs) worst = std::max(worst, d);
    }
  }
  o.detail << "  100 random runs, worst deviation from naive oracle " << worst << '\n';
  o.require(worst <= 1e-12, "random runs agree with naive oracle to 1e-12");
}

struct E2EResult {
  std::vector<double> teacher, conae, no_decoder, no_kl;
  bool no_decoder_zero = true, no_kl_zero = true;
};

E2EResult run_e2e() {
  E2EResult r;
  for (auto seed : kSeeds) {
    const auto p = prepare(32, seed);
    r.teacher.push_back(mrr10(p.data.docs, p.data.test_queries, p.data.qrels));
    r.conae.push_back(compressed_mrr10(train_on(p, TrainableKind::Conae, 32, seed).model, p.data));
    const auto nd = train_on(p, TrainableKind::Conae, 32, seed, Ablation::NoDecoder);
    for (const auto& e : nd.history) r.no_decoder_zero &= e.mean.margin_q == 0.0 && e.mean.margin_d == 0.0;
    r.no_decoder.push_back(compressed_mrr10(nd.model, p.data));
    const auto nk = train_on(p, TrainableKind::Conae, 32, seed, Ablation::NoKL);
    for (const auto& e : nk.history) r.no_kl_zero &= e.mean.kl == 0.0;
    r.no_kl.push_back(compressed_mrr10(nk.model, p.data));
    std::printf("  [e2e seed %llu] teacher %.4f conae %.4f no-decoder %.4f no-kl %.4f\n",
                static_cast<unsigned long long>(seed), r.teacher.back(), r.conae.back(), r.no_decoder.back(),
                r.no_kl.back());
    std::fflush(stdout);
  }
  return r;
}

double mean(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::string list(const std::vector<double>& xs) {
  std::string s;
  for (double x : xs) s += (s.empty() ? "" : " ") + fmt(x);
  return s;
}

void method_ordering(Outcome& o) {
  std::vector<double> conae, ce, pca;
  for (auto seed : kSeeds) {
    const auto p = prepare(64, seed);
    conae.push_back(compressed_mrr10(train_on(p, TrainableKind::Conae, 32, seed).model, p.data));
    ce.push_back(compressed_mrr10(train_on(p, TrainableKind::Ce, 32, seed).model, p.data));
    pca.push_back(compressed_mrr10(pca_fit(p.data.docs, 32), p.data));
  }
  o.detail << "  MRR@10 per seed  conae [" << list(conae) << "]  ce [" << list(ce) << "]  pca [" << list(pca)
           << "]\n  means  conae " << fmt(mean(conae)) << "  ce " << fmt(mean(ce)) << "  pca " << fmt(mean(pca))
           << '\n';
  o.require(mean(conae) >= mean(ce), "ConAE >= CE");
  o.require(mean(ce) >= mean(pca), "CE >= PCA");
}

void latency_and_size(Outcome& o) {
  SynthConfig cfg;
  cfg.n_docs = 100000;
  cfg.n_queries = 0;
  cfg.n_test_queries = 200;
  cfg.seed = 5;
  const auto data = synth_teacher(cfg);
  testing_helpers::TempDir dir("accept_size");
  std::vector<double> means;
  std::vector<std::pair<std::size_t, double>> per_dim_bytes;
  for (std::size_t dim : {256, 128, 64}) {
    const EmbeddingStore docs =
        dim == 256 ? data.docs
                   : compress_store(init_model(TrainableKind::Conae, 256, dim, 1), data.docs, Side::Document);
    const EmbeddingStore queries =
        dim == 256 ? data.test_queries
                   : compress_store(init_model(TrainableKind::Conae, 256, dim, 1), data.test_queries, Side::Query);
    const auto report = bench_latency(FlatIndex(docs), queries, 10, 20, 3);
    means.push_back(report.mean_ms);
    const auto path = dir / ("flat" + std::to_string(dim) + ".idx");
    save_embeddings(docs, path);
    std::size_t id_block = 0;
    for (const auto& id : docs.ids()) id_block += 2 + id.size();
    const double payload = double(std::filesystem::file_size(path) - kEmbeddingHeaderBytes - id_block);
    per_dim_bytes.emplace_back(dim, payload / double(dim));
    o.detail << "  dim " << dim << ": mean " << fmt(report.mean_ms) << " ms, p50 " << fmt(report.p50_ms)
             << " ms, file " << std::filesystem::file_size(path) << " bytes\n";
  }
  o.require(means[0] > means[1] && means[1] > means[2], "latency strictly decreasing 256 > 128 > 64");
  o.require(means[2] <= 0.5 * means[0], "dim-64 latency <= 0.5 x dim-256 latency");
  const double ref = per_dim_bytes.front().second;
  for (const auto& [dim, b] : per_dim_bytes)
    o.require(std::abs(b / ref - 1.0) <= 0.01, "file bytes per dimension within 1% at dim " + std::to_string(dim));
  o.detail << "  latency ratio 64/256 = " << fmt(means[2] / means[0]) << ", payload bytes per dimension "
           << fmt(ref) << '\n';
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dcomp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

void determinism(Outcome& o) {
  testing_helpers::TempDir a("accept_det_a"), b("accept_det_b");
  for (const auto* dir : {&a, &b}) {
    auto p = [&](const std::string& n) { return (*dir / n).string(); };
    o.require(cli({"synth", "--out-dir", dir->path().string(), "--docs", "10000", "--clusters", "200",
                   "--train-queries", "500", "--test-queries", "200", "--seed", "9"}) == 0,
              "synth");
    o.require(cli({"dtop", "--docs", p("docs.emb"), "--queries", p("train_queries.emb"), "--out", p("dtop.tsv")}) == 0,
              "dtop");
    o.require(cli({"train", "--docs", p("docs.emb"), "--queries", p("train_queries.emb"), "--qrels", p("qrels.txt"),
                   "--dtop", p("dtop.tsv"), "--out", p("model"), "--dim", "32", "--epochs", "3", "--seed", "9"}) == 0,
              "train");
    o.require(cli({"train", "--docs", p("docs.emb"), "--queries", p("train_queries.emb"), "--qrels", p("qrels.txt"),
                   "--dtop", p("dtop.tsv"), "--out", p("ce_model"), "--model", "ce", "--dim", "32", "--epochs", "2",
                   "--seed", "9"}) == 0,
              "train ce");
    o.require(cli({"compress", "--model", p("model"), "--input", p("docs.emb"), "--side", "document", "--out",
                   p("cdocs.emb")}) == 0,
              "compress docs");
    o.require(cli({"compress", "--model", p("model"), "--input", p("test_queries.emb"), "--side", "query", "--out",
                   p("cq.emb")}) == 0,
              "compress queries");
    o.require(cli({"index", "--docs", p("cdocs.emb"), "--type", "flat", "--out", p("flat.idx")}) == 0, "index");
    o.require(cli({"search", "--index", p("flat.idx"), "--queries", p("cq.emb"), "--out", p("run.txt"), "--k",
                   "100", "--threads", dir == &a ? "1" : "4"}) == 0,
              "search");
  }
  for (const char* f : {"docs.emb", "dtop.tsv", "model", "ce_model", "cdocs.emb", "flat.idx", "run.txt"}) {
    const auto x = slurp(a / f), y = slurp(b / f);
    o.require(!x.empty() && x == y, std::string(f) + " byte-identical across reruns");
    o.detail << "  " << f << ": " << x.size() << " bytes, " << (x == y ? "identical" : "DIFFERENT") << '\n';
  }
}

}  // namespace

int main() {
  std::printf("dcomp acceptance run (%zu worker threads for batch search)\n", detail::default_threads());
  report("gradient correctness", gradient_correctness);
  report("loss unit oracles", loss_oracles);
  report("flat-index exactness", flat_exactness);
  report("HNSW quality", hnsw_quality);
  report("metric oracles", metric_oracles);

  E2EResult e2e;
  report("end-to-end compression recovery", [&](Outcome& o) {
    e2e = run_e2e();
    const double t = mean(e2e.teacher), c = mean(e2e.conae);
    o.detail << "  mean MRR@10 teacher " << fmt(t) << ", ConAE L=32 " << fmt(c) << ", ratio " << fmt(c / t) << '\n';
    o.require(c >= 0.95 * t, "ConAE MRR@10 >= 0.95 x teacher");
  });
  report("method ordering", method_ordering);
  report("ablation contract", [&](Outcome& o) {
    o.require(!e2e.conae.empty(), "end-to-end results available");
    if (e2e.conae.empty()) return;
    const double full = mean(e2e.conae), nd = mean(e2e.no_decoder), nk = mean(e2e.no_kl);
    o.detail << "  mean MRR@10 full " << fmt(full) << ", no-decoder " << fmt(nd) << " (" << fmt(nd / full)
             << "x), no-kl " << fmt(nk) << " (" << fmt(nk / full) << "x)\n";
    o.require(e2e.no_decoder_zero, "no-decoder history has zero margin terms");
    o.require(e2e.no_kl_zero, "no-kl history has zero KL term");
    o.require(nd >= 0.8 * full && nd <= 1.05 * full, "no-decoder MRR@10 within [0.8, 1.05] x full");
    o.require(nk >= 0.8 * full && nk <= 1.05 * full, "no-kl MRR@10 within [0.8, 1.05] x full");
  });
  report("latency trend and index size", latency_and_size);
  report("determinism", determinism);

  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
