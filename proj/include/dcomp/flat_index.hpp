#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "dcomp/detail/parallel.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/linalg.hpp"

namespace dcomp {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Ordered best first: descending score, ties by ascending doc id.
using SearchResult = std::vector<ScoredDoc>;

inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  return score_a > score_b || (score_a == score_b && id_a < id_b);
}

namespace detail {

struct RowScore {
  std::size_t row;
  double score;
};

/// Bounded selection of the best k rows of `store` under ranks_before.
class TopK {
 public:
  TopK(const EmbeddingStore& store, std::size_t k) : store_(store), k_(k) { heap_.reserve(k + 1); }

  void offer(std::size_t row, double score) {
    if (heap_.size() == k_) {
      const auto& worst = heap_.front();
      if (!better({row, score}, worst)) return;
      std::pop_heap(heap_.begin(), heap_.end(), cmp());
      heap_.back() = {row, score};
    } else {
      heap_.push_back({row, score});
    }
    std::push_heap(heap_.begin(), heap_.end(), cmp());
  }

  SearchResult finish() {
    std::sort_heap(heap_.begin(), heap_.end(), cmp());
    SearchResult out;
    out.reserve(heap_.size());
    for (const auto& e : heap_) out.push_back({store_.id(e.row), e.score});
    return out;
  }

 private:
  struct Better {
    const EmbeddingStore* store;
    bool operator()(const RowScore& a, const RowScore& b) const {
      return ranks_before(a.score, store->id(a.row), b.score, store->id(b.row));
    }
  };

  bool better(const RowScore& a, const RowScore& b) const { return Better{&store_}(a, b); }
  Better cmp() const { return Better{&store_}; }

  const EmbeddingStore& store_;
  std::size_t k_;
  std::vector<RowScore> heap_;
};

}  // namespace detail

/// Exhaustive maximum-inner-product index over a store.
class FlatIndex {
 public:
  explicit FlatIndex(const EmbeddingStore& store) : store_(&store) {
    if (store.empty()) throw EmptyInputError("FlatIndex: empty store");
  }

  const EmbeddingStore& store() const noexcept { return *store_; }
  std::size_t dimension() const noexcept { return store_->dimension(); }

 private:
  const EmbeddingStore* store_;
};

inline SearchResult flat_topk(const FlatIndex& index, std::span<const double> query, std::size_t k) {
  const auto& store = index.store();
  require_dims(query.size(), store.dimension(), "flat_topk");
  if (k == 0) throw ConfigError("flat_topk: k must be at least 1");
  const std::size_t dim = store.dimension();
  const double* base = store.matrix().values().data();
  detail::TopK top(store, std::min(k, store.size()));
  for (std::size_t r = 0; r < store.size(); ++r) {
    top.offer(r, detail::dot_unchecked(base + r * dim, query.data(), dim));
  }
  return top.finish();
}

/// flat_topk for many queries at once. Queries are scored in tiles so each
/// document row is read once per tile; every score is computed exactly as in
/// flat_topk, so results are identical.
inline std::vector<SearchResult> flat_topk_batch(const FlatIndex& index, const EmbeddingStore& queries,
                                                 std::size_t k, std::size_t threads = 1) {
  const auto& store = index.store();
  require_dims(queries.dimension(), store.dimension(), "flat_topk_batch");
  if (k == 0) throw ConfigError("flat_topk: k must be at least 1");
  constexpr std::size_t kTile = 8;
  const std::size_t dim = store.dimension();
  const double* base = store.matrix().values().data();
  std::vector<SearchResult> out(queries.size());
  const std::size_t tiles = (queries.size() + kTile - 1) / kTile;
  detail::parallel_for(tiles, threads, [&](std::size_t t) {
    const std::size_t lo = t * kTile, hi = std::min(queries.size(), lo + kTile);
    std::vector<detail::TopK> tops;
    tops.reserve(hi - lo);
    for (std::size_t q = lo; q < hi; ++q) tops.emplace_back(store, std::min(k, store.size()));
    for (std::size_t r = 0; r < store.size(); ++r) {
      const double* row = base + r * dim;
      for (std::size_t q = lo; q < hi; ++q) {
        tops[q - lo].offer(r, detail::dot_unchecked(row, queries.row(q).data(), dim));
      }
    }
    for (std::size_t q = lo; q < hi; ++q) out[q] = tops[q - lo].finish();
  });
  return out;
}

}  // namespace dcomp
