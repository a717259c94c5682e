#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"
#include "dcomp/linalg.hpp"
#include "dcomp/qrels.hpp"
#include "dcomp/random.hpp"

namespace dcomp {

/// Synthetic teacher embeddings: clustered points in an m-dimensional space
/// embedded in K dimensions by a random orthonormal map, plus ambient noise.
struct SynthConfig {
  std::size_t intrinsic_dim = 32;
  std::size_t ambient_dim = 256;
  std::size_t n_clusters = 1000;
  std::size_t n_docs = 50000;
  std::size_t n_queries = 2000;       // training queries
  std::size_t n_test_queries = 500;
  std::size_t relevant_per_query = 1;
  double cluster_spread = 0.2;
  double noise_floor = 0.001;
  std::uint64_t seed = 42;

  void validate() const {
    if (intrinsic_dim == 0 || intrinsic_dim > ambient_dim)
      throw ConfigError("synth: need 0 < intrinsic_dim <= ambient_dim");
    if (n_clusters < 2) throw ConfigError("synth: n_clusters must be at least 2");
    if (relevant_per_query < 1) throw ConfigError("synth: relevant_per_query must be at least 1");
    if (n_docs < n_clusters * relevant_per_query)
      throw ConfigError("synth: every cluster needs at least relevant_per_query docs");
    if (n_queries + n_test_queries == 0) throw ConfigError("synth: no queries requested");
    if (!(cluster_spread >= 0.0) || !(noise_floor >= 0.0))
      throw ConfigError("synth: spreads must be non-negative");
  }
};

struct SynthData {
  EmbeddingStore docs;
  EmbeddingStore train_queries;
  EmbeddingStore test_queries;
  Qrels qrels;
};

namespace detail {

inline std::string numbered_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%07zu", prefix, i);
  return buf;
}

}  // namespace detail

inline SynthData synth_teacher(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t m = cfg.intrinsic_dim, k = cfg.ambient_dim;
  Rng rng(mix_seed(cfg.seed, 1));

  DenseMatrix centers(cfg.n_clusters, m);
  for (double& x : centers.values()) x = rng.normal();

  // Docs are assigned round-robin so no cluster is empty.
  DenseMatrix docs_m(cfg.n_docs, m);
  std::vector<std::vector<std::size_t>> members(cfg.n_clusters);
  for (std::size_t d = 0; d < cfg.n_docs; ++d) {
    const std::size_t c = d % cfg.n_clusters;
    members[c].push_back(d);
    auto row = docs_m.row(d);
    const auto center = centers.row(c);
    for (std::size_t j = 0; j < m; ++j) row[j] = center[j] + cfg.cluster_spread * rng.normal();
  }

  std::vector<std::string> doc_ids(cfg.n_docs);
  for (std::size_t d = 0; d < cfg.n_docs; ++d) doc_ids[d] = detail::numbered_id('d', d);

  const std::size_t n_q = cfg.n_queries + cfg.n_test_queries;
  DenseMatrix queries_m(n_q, m);
  Qrels qrels;
  std::vector<std::string> query_ids(n_q);
  for (std::size_t q = 0; q < n_q; ++q) {
    const bool train = q < cfg.n_queries;
    query_ids[q] = train ? detail::numbered_id('q', q) : detail::numbered_id('t', q - cfg.n_queries);
    const std::size_t c = rng.below(cfg.n_clusters);
    auto row = queries_m.row(q);
    const auto center = centers.row(c);
    for (std::size_t j = 0; j < m; ++j) row[j] = center[j] + cfg.cluster_spread * rng.normal();

    // Relevant docs: the highest clean-space dot products within the cluster.
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t d : members[c]) scored.emplace_back(dot(row, docs_m.row(d)), d);
    std::partial_sort(scored.begin(), scored.begin() + cfg.relevant_per_query, scored.end(),
                      [&](const auto& a, const auto& b) {
                        return ranks_before(a.first, doc_ids[a.second], b.first, doc_ids[b.second]);
                      });
    for (std::size_t r = 0; r < cfg.relevant_per_query; ++r) {
      qrels[query_ids[q]][doc_ids[scored[r].second]] = 1;
    }
  }

  const DenseMatrix lift = random_orthonormal(k, m, mix_seed(cfg.seed, 2));
  Rng ambient(mix_seed(cfg.seed, 3));
  auto lift_rows = [&](const DenseMatrix& src) {
    DenseMatrix out(src.rows(), k);
    for (std::size_t i = 0; i < src.rows(); ++i) {
      auto lifted = mat_vec(lift, src.row(i));
      auto row = out.row(i);
      for (std::size_t j = 0; j < k; ++j) row[j] = lifted[j] + cfg.noise_floor * ambient.normal();
    }
    return out;
  };
  DenseMatrix docs_k = lift_rows(docs_m);
  DenseMatrix queries_k = lift_rows(queries_m);

  auto slice = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> values(queries_k.values().begin() + lo * k, queries_k.values().begin() + hi * k);
    std::vector<std::string> ids(query_ids.begin() + lo, query_ids.begin() + hi);
    return std::pair{std::move(ids), DenseMatrix(hi - lo, k, std::move(values))};
  };
  auto [train_ids, train_m] = slice(0, cfg.n_queries);
  auto [test_ids, test_m] = slice(cfg.n_queries, n_q);

  return SynthData{EmbeddingStore(std::move(doc_ids), std::move(docs_k)),
                   EmbeddingStore(std::move(train_ids), std::move(train_m)),
                   EmbeddingStore(std::move(test_ids), std::move(test_m)), std::move(qrels)};
}

}  // namespace dcomp
