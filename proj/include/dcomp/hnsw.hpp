#pragma once

// Hierarchical navigable small world graph for maximum inner product search.
// Distance is the negated dot product; no transformation to Euclidean space
// is applied. Construction follows the usual recipe: geometric layer
// assignment, greedy descent through upper layers, beam search with
// ef_construction, and heuristic neighbour pruning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcomp/detail/binary_io.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"
#include "dcomp/linalg.hpp"
#include "dcomp/random.hpp"

namespace dcomp {

struct HnswParams {
  std::size_t M = 16;
  std::size_t ef_construction = 200;
  std::uint64_t seed = 42;
};

inline constexpr std::size_t kDefaultEfSearch = 128;

class HnswIndex {
 public:
  using NodeId = std::uint32_t;

  HnswIndex(const EmbeddingStore& store, HnswParams params) : store_(&store), params_(params) {}

  const EmbeddingStore& store() const noexcept { return *store_; }
  const HnswParams& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return links_.size(); }
  NodeId entry_point() const noexcept { return entry_; }
  std::size_t max_level() const noexcept { return max_level_; }

  /// Number of layers node n participates in (top layer + 1).
  std::size_t levels(NodeId n) const { return links_[n].size(); }
  const std::vector<NodeId>& neighbors(NodeId n, std::size_t layer) const { return links_[n][layer]; }

  std::size_t max_degree(std::size_t layer) const { return layer == 0 ? 2 * params_.M : params_.M; }

  /// Throws FormatError describing the first broken structural invariant.
  void validate() const {
    const std::size_t n = links_.size();
    if (n != store_->size()) throw FormatError("hnsw: node count differs from store size");
    if (n == 0) throw FormatError("hnsw: empty graph");
    if (entry_ >= n) throw FormatError("hnsw: entry point out of range");
    if (links_[entry_].size() != max_level_ + 1) throw FormatError("hnsw: entry point is not on the top layer");
    for (NodeId v = 0; v < n; ++v) {
      if (links_[v].empty()) throw FormatError("hnsw: node missing from layer 0");
      if (links_[v].size() > max_level_ + 1) throw FormatError("hnsw: node above the top layer");
      for (std::size_t l = 0; l < links_[v].size(); ++l) {
        const auto& adj = links_[v][l];
        if (adj.size() > max_degree(l)) throw FormatError("hnsw: neighbour list over capacity");
        for (NodeId u : adj) {
          if (u >= n) throw FormatError("hnsw: neighbour id out of range");
          if (u == v) throw FormatError("hnsw: self loop");
          if (links_[u].size() <= l) throw FormatError("hnsw: neighbour absent from layer");
        }
      }
    }
  }

 private:
  friend HnswIndex hnsw_build(const EmbeddingStore&, const HnswParams&);
  friend SearchResult hnsw_search(const HnswIndex&, std::span<const double>, std::size_t, std::size_t);
  friend void save_hnsw(const HnswIndex&, const std::filesystem::path&);
  friend HnswIndex load_hnsw(const std::filesystem::path&, const EmbeddingStore&);

  struct Candidate {
    double dist;
    NodeId id;
    // Strict weak order: nearer first, then lower node id.
    friend bool operator<(const Candidate& a, const Candidate& b) {
      return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
    }
    friend bool operator>(const Candidate& a, const Candidate& b) { return b < a; }
  };

  double distance(std::span<const double> q, NodeId n) const {
    const auto row = store_->row(n);
    return -detail::dot_unchecked(q.data(), row.data(), row.size());
  }
  double distance(NodeId a, NodeId b) const { return distance(store_->row(a), b); }

  NodeId greedy_closest(std::span<const double> q, NodeId start, std::size_t from_layer,
                        std::size_t to_layer) const {
    NodeId cur = start;
    double cur_dist = distance(q, cur);
    for (std::size_t l = from_layer; l > to_layer; --l) {
      bool changed = true;
      while (changed) {
        changed = false;
        for (NodeId u : links_[cur][l]) {
          const Candidate c{distance(q, u), u};
          if (c < Candidate{cur_dist, cur}) {
            cur = u;
            cur_dist = c.dist;
            changed = true;
          }
        }
      }
    }
    return cur;
  }

  /// Beam search on one layer. Returns up to ef candidates sorted nearest first.
  std::vector<Candidate> search_layer(std::span<const double> q, NodeId start, std::size_t ef, std::size_t layer,
                                      std::vector<std::uint32_t>& visited, std::uint32_t tag) const {
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;  // nearest on top
    std::priority_queue<Candidate> best;                                               // farthest on top
    const Candidate first{distance(q, start), start};
    frontier.push(first);
    best.push(first);
    visited[start] = tag;
    while (!frontier.empty()) {
      const Candidate c = frontier.top();
      if (best.top() < c && best.size() >= ef) break;
      frontier.pop();
      for (NodeId u : links_[c.id][layer]) {
        if (visited[u] == tag) continue;
        visited[u] = tag;
        const Candidate nc{distance(q, u), u};
        if (best.size() < ef || nc < best.top()) {
          frontier.push(nc);
          best.push(nc);
          if (best.size() > ef) best.pop();
        }
      }
    }
    std::vector<Candidate> out;
    out.reserve(best.size());
    while (!best.empty()) {
      out.push_back(best.top());
      best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  /// Keeps a candidate only if it is nearer to the base point than to every
  /// neighbour already kept. `sorted` must be nearest first.
  std::vector<NodeId> select_neighbors(const std::vector<Candidate>& sorted, std::size_t cap) const {
    std::vector<NodeId> kept;
    for (const auto& c : sorted) {
      if (kept.size() >= cap) break;
      bool diverse = true;
      for (NodeId s : kept) {
        if (distance(c.id, s) < c.dist) {
          diverse = false;
          break;
        }
      }
      if (diverse) kept.push_back(c.id);
    }
    return kept;
  }

  void link(NodeId from, NodeId to, std::size_t layer) {
    auto& adj = links_[from][layer];
    adj.push_back(to);
    const std::size_t cap = max_degree(layer);
    if (adj.size() <= cap) return;
    std::vector<Candidate> cands;
    cands.reserve(adj.size());
    for (NodeId u : adj) cands.push_back({distance(from, u), u});
    std::sort(cands.begin(), cands.end());
    adj = select_neighbors(cands, cap);
  }

  void insert(NodeId v, std::size_t level, std::vector<std::uint32_t>& visited, std::uint32_t& tag) {
    links_[v].assign(level + 1, {});
    if (v == 0) {
      entry_ = 0;
      max_level_ = level;
      return;
    }
    const auto q = store_->row(v);
    NodeId cur = entry_;
    if (max_level_ > level) cur = greedy_closest(q, cur, max_level_, level);
    for (std::size_t l = std::min(level, max_level_) + 1; l-- > 0;) {
      auto found = search_layer(q, cur, params_.ef_construction, l, visited, ++tag);
      auto chosen = select_neighbors(found, params_.M);
      links_[v][l] = chosen;
      for (NodeId u : chosen) link(u, v, l);
      cur = found.front().id;
    }
    if (level > max_level_) {
      entry_ = v;
      max_level_ = level;
    }
  }

  const EmbeddingStore* store_;
  HnswParams params_;
  std::vector<std::vector<std::vector<NodeId>>> links_;  // node → layer → neighbours
  NodeId entry_ = 0;
  std::size_t max_level_ = 0;
};

/// Single-threaded, deterministic for a given store and params.
inline HnswIndex hnsw_build(const EmbeddingStore& store, const HnswParams& params) {
  if (store.empty()) throw EmptyInputError("hnsw_build: empty store");
  if (params.M < 2) throw ConfigError("hnsw_build: M must be at least 2");
  if (params.ef_construction < 1) throw ConfigError("hnsw_build: ef_construction must be positive");
  if (store.size() > UINT32_MAX) throw ConfigError("hnsw_build: too many nodes");
  HnswIndex index(store, params);
  index.links_.resize(store.size());
  Rng rng(params.seed);
  const double level_mult = 1.0 / std::log(static_cast<double>(params.M));
  std::vector<std::uint32_t> visited(store.size(), 0);
  std::uint32_t tag = 0;
  for (std::size_t v = 0; v < store.size(); ++v) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    const auto level = static_cast<std::size_t>(std::floor(-std::log(u) * level_mult));
    index.insert(static_cast<HnswIndex::NodeId>(v), level, visited, tag);
  }
  return index;
}

inline HnswIndex hnsw_build(const EmbeddingStore& store, std::size_t M, std::size_t ef_construction,
                            std::uint64_t seed) {
  return hnsw_build(store, HnswParams{M, ef_construction, seed});
}

/// Best-first search with beam width max(ef_search, k). Scores are exact dot
/// products; ties are ordered by ascending doc id.
inline SearchResult hnsw_search(const HnswIndex& index, std::span<const double> query, std::size_t k,
                                std::size_t ef_search) {
  require_dims(query.size(), index.store().dimension(), "hnsw_search");
  if (k == 0) throw ConfigError("hnsw_search: k must be at least 1");
  if (ef_search < k) throw ConfigError("hnsw_search: ef_search must be >= k");
  std::vector<std::uint32_t> visited(index.size(), 0);
  const auto start = index.greedy_closest(query, index.entry_, index.max_level_, 0);
  const auto found = index.search_layer(query, start, ef_search, 0, visited, 1);
  const auto& store = index.store();
  SearchResult out;
  out.reserve(found.size());
  for (const auto& c : found) out.push_back({store.id(c.id), dot(query, store.row(c.id))});
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    return ranks_before(a.score, a.doc_id, b.score, b.doc_id);
  });
  if (out.size() > k) out.resize(k);
  return out;
}

inline constexpr std::string_view kHnswMagic{"DCHNS1\0\0", 8};
inline constexpr std::uint32_t kHnswVersion = 1;

/// Header: magic, u32 version, u32 M, u32 ef_construction, u64 seed,
/// u32 entry point, u32 top layer, u64 node count. Then per node a u32 layer
/// count and, per layer, a u32 neighbour count followed by u32 ids.
inline void save_hnsw(const HnswIndex& index, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(kHnswMagic);
  w.uint<std::uint32_t>(kHnswVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(index.params_.M));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(index.params_.ef_construction));
  w.uint<std::uint64_t>(index.params_.seed);
  w.uint<std::uint32_t>(index.entry_);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(index.max_level_));
  w.uint<std::uint64_t>(index.links_.size());
  for (const auto& layers : index.links_) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
    for (const auto& adj : layers) {
      w.uint<std::uint32_t>(static_cast<std::uint32_t>(adj.size()));
      for (auto u : adj) w.uint<std::uint32_t>(u);
    }
  }
  w.write_to(path);
}

/// The graph is attached to `store`, which must be the store it was built on.
inline HnswIndex load_hnsw(const std::filesystem::path& path, const EmbeddingStore& store) {
  auto r = detail::ByteReader::from_file(path);
  if (r.bytes(8) != kHnswMagic) throw FormatError("load_hnsw: bad magic in " + path.string());
  if (auto v = r.uint<std::uint32_t>(); v != kHnswVersion)
    throw FormatError("load_hnsw: unsupported version " + std::to_string(v));
  HnswParams params;
  params.M = r.uint<std::uint32_t>();
  params.ef_construction = r.uint<std::uint32_t>();
  params.seed = r.uint<std::uint64_t>();
  HnswIndex index(store, params);
  index.entry_ = r.uint<std::uint32_t>();
  index.max_level_ = r.uint<std::uint32_t>();
  const auto n = r.uint<std::uint64_t>();
  if (n != store.size()) throw FormatError("load_hnsw: graph has " + std::to_string(n) +
                                           " nodes but the store has " + std::to_string(store.size()));
  index.links_.resize(n);
  for (auto& layers : index.links_) {
    const auto nl = r.uint<std::uint32_t>();
    if (nl == 0 || nl > index.max_level_ + 1) throw FormatError("load_hnsw: bad layer count");
    layers.resize(nl);
    for (auto& adj : layers) {
      const auto deg = r.uint<std::uint32_t>();
      if (deg > 2 * params.M) throw FormatError("load_hnsw: bad neighbour count");
      adj.resize(deg);
      for (auto& u : adj) u = r.uint<std::uint32_t>();
    }
  }
  r.expect_end();
  index.validate();
  return index;
}

}  // namespace dcomp
