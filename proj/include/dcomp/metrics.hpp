#pragma once

// Ranking metrics over a run. Relevance is grade >= 1. Queries that appear in
// the run but not in the qrels are skipped and counted in `unjudged_queries`.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"
#include "dcomp/qrels.hpp"

namespace dcomp {

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const RankedDoc&, const RankedDoc&) = default;
};

/// query id → ranked list, rank 1 first.
using RunList = std::map<std::string, std::vector<RankedDoc>>;

inline std::vector<RankedDoc> to_ranked(const SearchResult& result) {
  std::vector<RankedDoc> out;
  out.reserve(result.size());
  for (std::size_t i = 0; i < result.size(); ++i) out.push_back({result[i].doc_id, result[i].score, i + 1});
  return out;
}

struct MetricReport {
  std::string metric;
  double value = 0.0;  // mean of per_query
  std::map<std::string, double> per_query;
  std::size_t unjudged_queries = 0;

  std::size_t query_count() const noexcept { return per_query.size(); }
};

namespace detail {

/// Per-query metric; nullopt excludes the query from the mean.
using QueryMetric =
    std::function<std::optional<double>(const std::vector<RankedDoc>&, const std::map<std::string, int>&)>;

inline MetricReport evaluate_metric(std::string name, const RunList& run, const Qrels& qrels,
                                    std::size_t k, const QueryMetric& fn) {
  if (k == 0) throw ConfigError(name + ": k must be at least 1");
  MetricReport report;
  report.metric = std::move(name);
  for (const auto& [qid, ranked] : run) {
    auto judged = qrels.find(qid);
    if (judged == qrels.end()) {
      ++report.unjudged_queries;
      continue;
    }
    if (auto v = fn(ranked, judged->second)) report.per_query.emplace(qid, *v);
  }
  double sum = 0.0;
  for (const auto& [qid, v] : report.per_query) sum += v;
  report.value = report.per_query.empty() ? 0.0 : sum / static_cast<double>(report.per_query.size());
  return report;
}

inline int grade_in(const std::map<std::string, int>& judged, const std::string& doc) {
  auto it = judged.find(doc);
  return it == judged.end() ? 0 : it->second;
}

inline std::size_t cutoff(const std::vector<RankedDoc>& ranked, std::size_t k) {
  return std::min(k, ranked.size());
}

}  // namespace detail

inline MetricReport mrr_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  return detail::evaluate_metric("mrr@" + std::to_string(k), run, qrels, k,
                                 [k](const auto& ranked, const auto& judged) -> std::optional<double> {
                                   for (std::size_t i = 0; i < detail::cutoff(ranked, k); ++i) {
                                     if (detail::grade_in(judged, ranked[i].doc_id) >= 1) return 1.0 / double(i + 1);
                                   }
                                   return 0.0;
                                 });
}

/// Gain 2^grade − 1, discount log₂(rank + 1). Queries without relevant docs are excluded.
inline MetricReport ndcg_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  return detail::evaluate_metric(
      "ndcg@" + std::to_string(k), run, qrels, k, [k](const auto& ranked, const auto& judged) -> std::optional<double> {
        std::vector<int> grades;
        for (const auto& [doc, g] : judged)
          if (g > 0) grades.push_back(g);
        if (grades.empty()) return std::nullopt;
        std::sort(grades.begin(), grades.end(), std::greater<>());
        double ideal = 0.0;
        for (std::size_t i = 0; i < std::min(k, grades.size()); ++i)
          ideal += (std::exp2(grades[i]) - 1.0) / std::log2(double(i + 2));
        double dcg = 0.0;
        for (std::size_t i = 0; i < detail::cutoff(ranked, k); ++i) {
          const int g = detail::grade_in(judged, ranked[i].doc_id);
          if (g > 0) dcg += (std::exp2(g) - 1.0) / std::log2(double(i + 2));
        }
        return dcg / ideal;
      });
}

inline MetricReport recall_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  return detail::evaluate_metric("recall@" + std::to_string(k), run, qrels, k,
                                 [k](const auto& ranked, const auto& judged) -> std::optional<double> {
                                   const std::size_t total = relevant_count(judged);
                                   if (total == 0) return std::nullopt;
                                   std::size_t found = 0;
                                   for (std::size_t i = 0; i < detail::cutoff(ranked, k); ++i)
                                     found += detail::grade_in(judged, ranked[i].doc_id) >= 1 ? 1 : 0;
                                   return double(found) / double(total);
                                 });
}

inline MetricReport hit_at_k(const RunList& run, const Qrels& qrels, std::size_t k) {
  return detail::evaluate_metric("hit@" + std::to_string(k), run, qrels, k,
                                 [k](const auto& ranked, const auto& judged) -> std::optional<double> {
                                   for (std::size_t i = 0; i < detail::cutoff(ranked, k); ++i)
                                     if (detail::grade_in(judged, ranked[i].doc_id) >= 1) return 1.0;
                                   return 0.0;
                                 });
}

/// Evaluates a metric named like `mrr@10`, `ndcg@10`, `recall@1000`, `hit@20`.
inline MetricReport evaluate_named(const std::string& spec, const RunList& run, const Qrels& qrels) {
  const auto at = spec.find('@');
  if (at == std::string::npos) throw ConfigError("metric '" + spec + "' needs a cutoff, e.g. mrr@10");
  const std::string name = spec.substr(0, at);
  std::size_t k = 0;
  if (!detail::parse_number(spec.substr(at + 1), k) || k == 0) throw ConfigError("bad cutoff in metric '" + spec + "'");
  if (name == "mrr") return mrr_at_k(run, qrels, k);
  if (name == "ndcg") return ndcg_at_k(run, qrels, k);
  if (name == "recall") return recall_at_k(run, qrels, k);
  if (name == "hit" || name == "top") return hit_at_k(run, qrels, k);
  throw ConfigError("unknown metric '" + name + "'");
}

/// `metric<TAB>value` lines.
inline void save_metric_reports(const std::vector<MetricReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  for (const auto& r : reports) out << r.metric << '\t' << r.value << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

/// `metric<TAB>qid<TAB>value` lines.
inline void save_per_query(const std::vector<MetricReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  for (const auto& r : reports)
    for (const auto& [qid, v] : r.per_query) out << r.metric << '\t' << qid << '\t' << v << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dcomp
