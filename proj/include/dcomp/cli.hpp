#pragma once

// Subcommand front end: synth → dtop → train/pca → compress → index →
// search → evaluate → bench. Exit codes: 0 success, 1 usage error, 2 data or
// format error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcomp/compressors.hpp"
#include "dcomp/dtop.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"
#include "dcomp/hnsw.hpp"
#include "dcomp/latency.hpp"
#include "dcomp/metrics.hpp"
#include "dcomp/qrels.hpp"
#include "dcomp/run_file.hpp"
#include "dcomp/synth.hpp"
#include "dcomp/trainer.hpp"

namespace dcomp::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

namespace detail {

enum class IndexType { Flat, Hnsw };

inline IndexType sniff_index(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index: " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  const std::string_view m(magic, static_cast<std::size_t>(in.gcount()));
  if (m == kEmbeddingMagic) return IndexType::Flat;
  if (m == kHnswMagic) return IndexType::Hnsw;
  throw FormatError("unrecognised index file: " + path.string());
}

/// A searchable index loaded from disk: flat indexes are embedding files,
/// HNSW graphs need the document store they were built on.
struct LoadedIndex {
  EmbeddingStore docs;
  std::optional<HnswIndex> hnsw;
  std::size_t ef_search = kDefaultEfSearch;

  SearchResult search(std::span<const double> q, std::size_t k) const {
    if (hnsw) return hnsw_search(*hnsw, q, k, std::max(ef_search, k));
    return flat_topk(FlatIndex(docs), q, k);
  }
};

inline LoadedIndex load_index(const fs::path& index_path, const std::string& docs_path, std::size_t ef_search) {
  LoadedIndex out;
  out.ef_search = ef_search;
  if (sniff_index(index_path) == IndexType::Flat) {
    out.docs = load_embeddings(index_path);
    return out;
  }
  if (docs_path.empty()) throw ConfigError("HNSW index needs --docs with the indexed embeddings");
  out.docs = load_embeddings(docs_path);
  out.hnsw.emplace(load_hnsw(index_path, out.docs));
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace detail

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"dcomp: dense-retrieval embedding compression toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // synth
  SynthConfig synth_cfg;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Generate synthetic teacher embeddings and qrels");
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--intrinsic-dim", synth_cfg.intrinsic_dim)->capture_default_str();
  synth->add_option("--ambient-dim", synth_cfg.ambient_dim)->capture_default_str();
  synth->add_option("--clusters", synth_cfg.n_clusters)->capture_default_str();
  synth->add_option("--docs", synth_cfg.n_docs)->capture_default_str();
  synth->add_option("--train-queries", synth_cfg.n_queries)->capture_default_str();
  synth->add_option("--test-queries", synth_cfg.n_test_queries)->capture_default_str();
  synth->add_option("--relevant-per-query", synth_cfg.relevant_per_query)->capture_default_str();
  synth->add_option("--cluster-spread", synth_cfg.cluster_spread)->capture_default_str();
  synth->add_option("--noise-floor", synth_cfg.noise_floor)->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();

  // dtop
  std::string dtop_docs, dtop_queries, dtop_out;
  std::size_t dtop_n = kDefaultTopDocs;
  auto* dtop = app.add_subcommand("dtop", "Build the per-query teacher top-N candidate table");
  dtop->add_option("--docs", dtop_docs, "Teacher document embeddings")->required()->check(CLI::ExistingFile);
  dtop->add_option("--queries", dtop_queries, "Teacher query embeddings")->required()->check(CLI::ExistingFile);
  dtop->add_option("--out", dtop_out, "Output table")->required();
  dtop->add_option("--n-top", dtop_n)->capture_default_str()->check(CLI::PositiveNumber);

  // train
  TrainConfig train_cfg;
  std::string tr_docs, tr_queries, tr_qrels, tr_dtop, tr_out, tr_history, tr_model = "conae",
                                                                           tr_ablation = "full";
  std::size_t tr_dim = 128;
  bool tr_split_decoder = false;
  auto* train_cmd = app.add_subcommand("train", "Train a CE or ConAE compressor");
  train_cmd->add_option("--docs", tr_docs)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--queries", tr_queries, "Training query embeddings")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--qrels", tr_qrels)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dtop", tr_dtop)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr_out, "Output model file")->required();
  train_cmd->add_option("--history", tr_history, "Loss history output");
  train_cmd->add_option("--model", tr_model)->capture_default_str()->check(CLI::IsMember({"ce", "conae"}));
  train_cmd->add_option("--ablation", tr_ablation)
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "no-decoder", "no-kl"}));
  train_cmd->add_option("--dim", tr_dim, "Target dimension L")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lambda", train_cfg.lambda)->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.lr)->capture_default_str();
  train_cmd->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  auto* neg_opt = train_cmd->add_option("--negatives", train_cfg.n_negatives,
                                        "Negatives per query (default 1 for conae, 7 for ce)");
  train_cmd->add_option("--n-top", train_cfg.n_top)->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed)->capture_default_str();
  train_cmd->add_flag("--split-decoder", tr_split_decoder, "Separate query and document decoders");

  // pca
  std::string pca_docs, pca_out;
  std::size_t pca_dim = 128;
  auto* pca = app.add_subcommand("pca", "Fit a PCA compressor on document embeddings");
  pca->add_option("--docs", pca_docs)->required()->check(CLI::ExistingFile);
  pca->add_option("--dim", pca_dim)->capture_default_str()->check(CLI::PositiveNumber);
  pca->add_option("--out", pca_out)->required();

  // compress
  std::string cmp_model, cmp_input, cmp_out, cmp_side = "document";
  auto* compress_cmd = app.add_subcommand("compress", "Apply a compressor to an embedding file");
  compress_cmd->add_option("--model", cmp_model)->required()->check(CLI::ExistingFile);
  compress_cmd->add_option("--input", cmp_input)->required()->check(CLI::ExistingFile);
  compress_cmd->add_option("--side", cmp_side)->capture_default_str()->check(CLI::IsMember({"query", "document"}));
  compress_cmd->add_option("--out", cmp_out)->required();

  // index
  std::string idx_docs, idx_out, idx_type = "flat";
  HnswParams hnsw_params;
  auto* index_cmd = app.add_subcommand("index", "Build a flat or HNSW index");
  index_cmd->add_option("--docs", idx_docs)->required()->check(CLI::ExistingFile);
  index_cmd->add_option("--type", idx_type)->capture_default_str()->check(CLI::IsMember({"flat", "hnsw"}));
  index_cmd->add_option("--out", idx_out)->required();
  index_cmd->add_option("--m", hnsw_params.M)->capture_default_str();
  index_cmd->add_option("--ef-construction", hnsw_params.ef_construction)->capture_default_str();
  index_cmd->add_option("--seed", hnsw_params.seed)->capture_default_str();

  // search
  std::string s_index, s_docs, s_queries, s_out, s_tag = "dcomp";
  std::size_t s_k = 1000, s_ef = kDefaultEfSearch, s_threads = 1;
  auto* search = app.add_subcommand("search", "Search an index and write a TREC run");
  search->add_option("--index", s_index)->required()->check(CLI::ExistingFile);
  search->add_option("--docs", s_docs, "Indexed embeddings (HNSW only)")->check(CLI::ExistingFile);
  search->add_option("--queries", s_queries)->required()->check(CLI::ExistingFile);
  search->add_option("--out", s_out)->required();
  search->add_option("--k", s_k)->capture_default_str()->check(CLI::PositiveNumber);
  search->add_option("--ef-search", s_ef)->capture_default_str();
  search->add_option("--threads", s_threads)->capture_default_str()->check(CLI::PositiveNumber);
  search->add_option("--tag", s_tag)->capture_default_str();

  // evaluate
  std::string e_run, e_qrels, e_out, e_per_query, e_metrics = "mrr@10,ndcg@10,recall@1000,hit@20,hit@100";
  auto* evaluate = app.add_subcommand("evaluate", "Score a run against qrels");
  evaluate->add_option("--run", e_run)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--qrels", e_qrels)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--metrics", e_metrics, "Comma-separated metric@k list")->capture_default_str();
  evaluate->add_option("--out", e_out, "Report file (stdout when omitted)");
  evaluate->add_option("--per-query", e_per_query, "Per-query TSV output");

  // bench
  std::string b_index, b_docs, b_queries, b_out;
  std::size_t b_k = 10, b_warmup = 10, b_reps = 3, b_ef = kDefaultEfSearch;
  auto* bench = app.add_subcommand("bench", "Measure per-query search latency");
  bench->add_option("--index", b_index)->required()->check(CLI::ExistingFile);
  bench->add_option("--docs", b_docs, "Indexed embeddings (HNSW only)")->check(CLI::ExistingFile);
  bench->add_option("--queries", b_queries)->required()->check(CLI::ExistingFile);
  bench->add_option("--k", b_k)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--warmup", b_warmup)->capture_default_str();
  bench->add_option("--reps", b_reps)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--ef-search", b_ef)->capture_default_str();
  bench->add_option("--out", b_out, "Report file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  err << "[dcomp " << chosen->get_name() << "] resolved configuration:\n" << chosen->config_to_str(true, false);

  try {
    if (chosen == synth) {
      fs::create_directories(synth_dir);
      const auto data = synth_teacher(synth_cfg);
      const fs::path dir(synth_dir);
      save_embeddings(data.docs, dir / "docs.emb");
      save_embeddings(data.train_queries, dir / "train_queries.emb");
      save_embeddings(data.test_queries, dir / "test_queries.emb");
      save_qrels(data.qrels, dir / "qrels.txt");
      err << "wrote " << data.docs.size() << " docs, " << data.train_queries.size() << " train and "
          << data.test_queries.size() << " test queries to " << dir << '\n';
    } else if (chosen == dtop) {
      const auto docs = load_embeddings(dtop_docs);
      const auto queries = load_embeddings(dtop_queries);
      save_dtop(build_dtop(docs, queries, dtop_n), dtop_out);
    } else if (chosen == train_cmd) {
      train_cfg.ablation = tr_ablation == "no-decoder" ? Ablation::NoDecoder
                           : tr_ablation == "no-kl"     ? Ablation::NoKL
                                                        : Ablation::Full;
      const bool ce = tr_model == "ce";
      if (ce && neg_opt->count() == 0) train_cfg.n_negatives = 7;
      const auto docs = load_embeddings(tr_docs);
      const auto queries = load_embeddings(tr_queries);
      const auto qrels = load_qrels(tr_qrels);
      const auto table = load_dtop(tr_dtop);
      auto init = init_model(ce ? TrainableKind::Ce : TrainableKind::Conae, docs.dimension(), tr_dim,
                             train_cfg.seed, tr_split_decoder);
      const auto result = train(init, docs, queries, qrels, table, train_cfg);
      save_model(result.model, tr_out);
      if (!tr_history.empty()) save_loss_history(result, tr_history);
      err << "trained on " << queries.size() - result.skipped_queries << " queries (" << result.skipped_queries
          << " skipped); final total loss "
          << (result.history.empty() ? result.initial.total : result.history.back().mean.total) << '\n';
    } else if (chosen == pca) {
      save_model(pca_fit(load_embeddings(pca_docs), pca_dim), pca_out);
    } else if (chosen == compress_cmd) {
      const auto model = load_model(cmp_model);
      const auto side = cmp_side == "query" ? Side::Query : Side::Document;
      save_embeddings(compress_store(model, load_embeddings(cmp_input), side), cmp_out);
    } else if (chosen == index_cmd) {
      const auto docs = load_embeddings(idx_docs);
      if (idx_type == "flat") {
        save_embeddings(docs, idx_out);
      } else {
        save_hnsw(hnsw_build(docs, hnsw_params), idx_out);
      }
    } else if (chosen == search) {
      const auto index = detail::load_index(s_index, s_docs, s_ef);
      const auto queries = load_embeddings(s_queries);
      require_dims(queries.dimension(), index.docs.dimension(), "search: query/index");
      std::vector<SearchResult> results;
      if (index.hnsw) {
        results.resize(queries.size());
        dcomp::detail::parallel_for(queries.size(), s_threads,
                                    [&](std::size_t q) { results[q] = index.search(queries.row(q), s_k); });
      } else {
        results = flat_topk_batch(FlatIndex(index.docs), queries, s_k, s_threads);
      }
      RunList run;
      for (std::size_t q = 0; q < queries.size(); ++q) run[queries.id(q)] = to_ranked(results[q]);
      write_run(run, s_out, s_tag);
    } else if (chosen == evaluate) {
      const auto run = read_run(e_run);
      const auto qrels = load_qrels(e_qrels);
      std::vector<MetricReport> reports;
      for (const auto& m : detail::split_list(e_metrics)) reports.push_back(evaluate_named(m, run, qrels));
      if (!reports.empty() && reports.front().unjudged_queries > 0) {
        err << "warning: " << reports.front().unjudged_queries << " run queries have no judgments\n";
      }
      if (e_out.empty()) {
        out.precision(17);
        for (const auto& r : reports) out << r.metric << '\t' << r.value << '\n';
      } else {
        save_metric_reports(reports, e_out);
      }
      if (!e_per_query.empty()) save_per_query(reports, e_per_query);
    } else if (chosen == bench) {
      const auto index = detail::load_index(b_index, b_docs, b_ef);
      const auto queries = load_embeddings(b_queries);
      require_dims(queries.dimension(), index.docs.dimension(), "bench: query/index");
      const auto report = bench_latency(
          [&](std::span<const double> q, std::size_t k) { return index.search(q, k); }, queries, b_k, b_warmup,
          b_reps);
      std::ofstream file;
      std::ostream* sink = &out;
      if (!b_out.empty()) {
        file.open(b_out, std::ios::trunc);
        if (!file) throw IoError("cannot open for writing: " + b_out);
        sink = &file;
      }
      *sink << "mean_ms\t" << report.mean_ms << "\np50_ms\t" << report.p50_ms << "\np95_ms\t" << report.p95_ms
            << "\nwarmup\t" << report.warmup << "\nreps\t" << report.reps << "\nsamples\t"
            << report.samples_ms.size() << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << error_kind(e) << ": " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace dcomp::cli
