#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"

namespace dcomp {

struct LatencyReport {
  std::vector<double> samples_ms;  // one per measured query execution
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t warmup = 0;
  std::size_t reps = 0;
};

/// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<double> xs, double pct) {
  if (xs.empty()) throw EmptyInputError("percentile: no samples");
  std::sort(xs.begin(), xs.end());
  const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(xs.size())));
  return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

inline LatencyReport summarize_latency(std::vector<double> samples_ms, std::size_t warmup, std::size_t reps) {
  LatencyReport r;
  double sum = 0.0;
  for (double s : samples_ms) sum += s;
  r.mean_ms = sum / static_cast<double>(samples_ms.size());
  r.p50_ms = percentile(samples_ms, 50.0);
  r.p95_ms = percentile(samples_ms, 95.0);
  r.samples_ms = std::move(samples_ms);
  r.warmup = warmup;
  r.reps = reps;
  return r;
}

/// Times `search(query, k)` per query on the calling thread. The first
/// `warmup` queries run unmeasured; then every query is timed `reps` times.
template <typename SearchFn>
  requires std::invocable<SearchFn&, std::span<const double>, std::size_t>
LatencyReport bench_latency(SearchFn&& search, const EmbeddingStore& queries, std::size_t k, std::size_t warmup,
                            std::size_t reps) {
  if (queries.empty()) throw EmptyInputError("bench_latency: no queries");
  if (reps < 1) throw ConfigError("bench_latency: reps must be at least 1");
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < warmup; ++i) {
    const SearchResult r = search(queries.row(i % queries.size()), k);
    if (!r.empty()) sink = sink + r.front().score;
  }
  std::vector<double> samples;
  samples.reserve(reps * queries.size());
  using clock = std::chrono::steady_clock;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const auto t0 = clock::now();
      const SearchResult r = search(queries.row(q), k);
      const auto t1 = clock::now();
      if (!r.empty()) sink = sink + r.front().score;
      samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  return summarize_latency(std::move(samples), warmup, reps);
}

inline LatencyReport bench_latency(const FlatIndex& index, const EmbeddingStore& queries, std::size_t k,
                                   std::size_t warmup, std::size_t reps) {
  return bench_latency([&](std::span<const double> q, std::size_t kk) { return flat_topk(index, q, kk); }, queries,
                       k, warmup, reps);
}

}  // namespace dcomp
