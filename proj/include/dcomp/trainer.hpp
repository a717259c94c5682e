#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dcomp/adam.hpp"
#include "dcomp/compressors.hpp"
#include "dcomp/dtop.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/gradients.hpp"
#include "dcomp/losses.hpp"
#include "dcomp/qrels.hpp"
#include "dcomp/random.hpp"

namespace dcomp {

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown mean;
};

struct TrainResult {
  CompressorModel model;
  LossBreakdown initial;  // mean loss of the initial model over the training set
  std::vector<EpochLoss> history;
  std::size_t skipped_queries = 0;
};

/// The judged document with the highest grade, ties by ascending doc id.
inline std::optional<std::string> gold_positive(const Qrels& qrels, const std::string& qid) {
  auto it = qrels.find(qid);
  if (it == qrels.end()) return std::nullopt;
  std::optional<std::string> best;
  int best_grade = 0;
  for (const auto& [doc, grade] : it->second) {  // map order = ascending doc id
    if (grade > best_grade) {
      best = doc;
      best_grade = grade;
    }
  }
  return best;
}

namespace detail {

struct PreparedQuery {
  std::string qid;
  TrainExample example;  // negatives filled per step
};

inline std::vector<PreparedQuery> prepare_training_set(const EmbeddingStore& docs,
                                                       const EmbeddingStore& queries, const Qrels& qrels,
                                                       const TopDocsTable& dtop, const TrainConfig& cfg,
                                                       std::size_t& skipped) {
  require_dims(docs.dimension(), queries.dimension(), "train: doc/query stores");
  std::vector<PreparedQuery> out;
  skipped = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& qid = queries.id(q);
    auto it = dtop.entries.find(qid);
    auto pos = gold_positive(qrels, qid);
    if (it == dtop.entries.end() || !pos || !docs.find(*pos)) {
      ++skipped;
      continue;
    }
    const auto& list = it->second;
    const std::size_t n = std::min(list.size(), cfg.n_top);
    bool has_negative = false;
    PreparedQuery pq;
    pq.qid = qid;
    pq.example.query = queries.row(q);
    pq.example.positive = docs.vector(*pos);
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      pq.example.candidates.push_back(docs.vector(list[i].doc_id));
      scores.push_back(list[i].score);
      has_negative = has_negative || grade_of(qrels, qid, list[i].doc_id) == 0;
    }
    if (!has_negative) {
      ++skipped;
      continue;
    }
    pq.example.teacher_probs = softmax_stable(scores);
    out.push_back(std::move(pq));
  }
  return out;
}

/// D_top truncated to the configured size, so negatives come from the same
/// candidate pool the KL term uses.
inline TopDocsTable truncate_dtop(const TopDocsTable& dtop, std::size_t n_top) {
  TopDocsTable out;
  for (const auto& [qid, list] : dtop.entries) {
    out.entries.emplace(qid, std::vector<ScoredDoc>(list.begin(), list.begin() + std::min(n_top, list.size())));
  }
  return out;
}

inline void fill_negatives(PreparedQuery& pq, const EmbeddingStore& docs, const Qrels& qrels,
                           const TopDocsTable& dtop, const TrainConfig& cfg, std::uint64_t seed) {
  pq.example.negatives.clear();
  for (const auto& id : sample_negatives(pq.qid, qrels, dtop, cfg.n_negatives, seed)) {
    pq.example.negatives.push_back(docs.vector(id));
  }
}

template <typename Model>
TrainResult run_training(Model model, const EmbeddingStore& docs, const EmbeddingStore& queries,
                         const Qrels& qrels, const TopDocsTable& dtop_full, const TrainConfig& cfg) {
  cfg.validate();
  require_dims(docs.dimension(), model.source_dim(), "train: model/store");
  const TopDocsTable dtop = truncate_dtop(dtop_full, cfg.n_top);
  TrainResult result;
  auto set = prepare_training_set(docs, queries, qrels, dtop, cfg, result.skipped_queries);
  if (set.empty()) throw ConfigError("train: no usable training queries");

  const double inv_n = 1.0 / static_cast<double>(set.size());
  auto negative_seed = [&](std::size_t epoch, std::size_t q) {
    return mix_seed(mix_seed(cfg.seed, epoch), q);
  };

  // Loss of the starting point, with epoch-0 negatives.
  for (std::size_t q = 0; q < set.size(); ++q) {
    fill_negatives(set[q], docs, qrels, dtop, cfg, negative_seed(0, q));
    result.initial += example_loss(model, set[q].example, cfg);
  }
  result.initial = result.initial.scaled(inv_n);

  auto params = parameters(model);
  AdamState adam = AdamState::for_params(params);
  std::vector<std::size_t> order(set.size());
  std::vector<TrainExample> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(mix_seed(cfg.seed, 1'000'000 + epoch));
    shuffler.shuffle(std::span(order));
    LossBreakdown sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        auto& pq = set[order[i]];
        fill_negatives(pq, docs, qrels, dtop, cfg, negative_seed(epoch, order[i]));
        batch.push_back(pq.example);
      }
      ParamGrads grads = gradients(model, std::span<const TrainExample>(batch), cfg, &sum);
      // Mean over the batch keeps λ's scale independent of batch size.
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (auto& g : grads)
        for (double& x : g.values()) x *= inv_b;
      adam_step(adam, params, grads, cfg.lr);
    }
    result.history.push_back({epoch, sum.scaled(inv_n)});
  }
  result.model = std::move(model);
  return result;
}

}  // namespace detail

/// Trains a CE or ConAE model from `init` against frozen teacher embeddings.
/// The stores are only read.
inline TrainResult train(const CompressorModel& init, const EmbeddingStore& docs, const EmbeddingStore& queries,
                         const Qrels& qrels, const TopDocsTable& dtop, const TrainConfig& cfg) {
  if (const auto* m = std::get_if<ConaeModel>(&init)) {
    return detail::run_training(*m, docs, queries, qrels, dtop, cfg);
  }
  if (const auto* m = std::get_if<CeModel>(&init)) {
    return detail::run_training(*m, docs, queries, qrels, dtop, cfg);
  }
  throw ConfigError("train: PCA models are fitted, not trained");
}

/// `epoch kl margin_q margin_d total` per line; epoch 0 is the initial model.
inline void save_loss_history(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  auto line = [&](std::size_t epoch, const LossBreakdown& l) {
    out << epoch << ' ' << l.kl << ' ' << l.margin_q << ' ' << l.margin_d << ' ' << l.total << '\n';
  };
  line(0, result.initial);
  for (const auto& e : result.history) line(e.epoch, e.mean);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dcomp
