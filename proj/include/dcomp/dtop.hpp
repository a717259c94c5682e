#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dcomp/detail/parallel.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"
#include "dcomp/qrels.hpp"
#include "dcomp/random.hpp"

namespace dcomp {

/// Per query, the teacher's top-ranked documents with their teacher scores,
/// best first. This is the candidate set for the distillation loss.
struct TopDocsTable {
  std::map<std::string, std::vector<ScoredDoc>> entries;

  const std::vector<ScoredDoc>& at(const std::string& qid) const {
    auto it = entries.find(qid);
    if (it == entries.end()) throw KeyError("query '" + qid + "' not in D_top table");
    return it->second;
  }

  friend bool operator==(const TopDocsTable&, const TopDocsTable&) = default;
};

inline constexpr std::size_t kDefaultTopDocs = 100;

inline TopDocsTable build_dtop(const EmbeddingStore& doc_store, const EmbeddingStore& query_store,
                               std::size_t n_top = kDefaultTopDocs,
                               std::size_t threads = detail::default_threads()) {
  require_dims(doc_store.dimension(), query_store.dimension(), "build_dtop");
  if (n_top == 0) throw ConfigError("build_dtop: n_top must be positive");
  FlatIndex index(doc_store);
  auto lists = flat_topk_batch(index, query_store, n_top, threads);
  TopDocsTable table;
  for (std::size_t q = 0; q < query_store.size(); ++q) {
    table.entries.emplace(query_store.id(q), std::move(lists[q]));
  }
  return table;
}

/// Tab-separated `qid docid score` lines, list order preserved. Scores are
/// written with 17 significant digits so they reload bit-exactly.
inline void save_dtop(const TopDocsTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  char buf[64];
  for (const auto& [qid, docs] : table.entries) {
    for (const auto& d : docs) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d.score, std::chars_format::general, 17);
      out << qid << '\t' << d.doc_id << '\t' << std::string_view(buf, end - buf) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline TopDocsTable load_dtop(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open D_top file: " + path.string());
  TopDocsTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 3) throw FormatError("dtop: expected 3 fields", lineno);
    double score = 0.0;
    if (!detail::parse_number(fields[2], score)) throw FormatError("dtop: bad score", lineno);
    auto& list = table.entries[fields[0]];
    if (!list.empty() && ranks_before(score, fields[1], list.back().score, list.back().doc_id)) {
      throw FormatError("dtop: list not sorted", lineno);
    }
    list.push_back({fields[1], score});
  }
  return table;
}

/// Uniformly draws n irrelevant (grade 0 or unjudged) documents from the
/// query's D_top list. Draws are without replacement while candidates last.
inline std::vector<std::string> sample_negatives(const std::string& qid, const Qrels& qrels,
                                                 const TopDocsTable& dtop, std::size_t n,
                                                 std::uint64_t seed) {
  const auto& list = dtop.at(qid);
  std::vector<std::string> pool;
  for (const auto& d : list) {
    if (grade_of(qrels, qid, d.doc_id) == 0) pool.push_back(d.doc_id);
  }
  if (pool.empty()) throw NoNegativeError("no irrelevant candidate in D_top for query '" + qid + "'");
  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  std::size_t live = pool.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (live == 0) live = pool.size();
    const std::size_t j = rng.below(live);
    out.push_back(pool[j]);
    std::swap(pool[j], pool[live - 1]);
    --live;
  }
  return out;
}

}  // namespace dcomp
