#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "dcomp/errors.hpp"
#include "dcomp/metrics.hpp"
#include "dcomp/qrels.hpp"

namespace dcomp {

/// TREC run lines `qid Q0 docid rank score tag`. Scores use the shortest
/// representation that reads back to the same double.
inline void write_run(const RunList& run, std::ostream& out, const std::string& tag = "dcomp") {
  char buf[64];
  for (const auto& [qid, docs] : run) {
    for (const auto& d : docs) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d.score);
      out << qid << " Q0 " << d.doc_id << ' ' << d.rank << ' ' << std::string_view(buf, end - buf) << ' ' << tag
          << '\n';
    }
  }
}

inline void write_run(const RunList& run, const std::filesystem::path& path, const std::string& tag = "dcomp") {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_run(run, out, tag);
  if (!out) throw IoError("write failed: " + path.string());
}

/// Lines for one query must be contiguous in the file, ranks must run 1, 2, …
/// and scores must not increase with rank.
inline RunList read_run(std::istream& in) {
  RunList run;
  std::string line, last_qid;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = detail::split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 6) throw FormatError("run: expected 6 fields", lineno);
    RankedDoc d;
    d.doc_id = f[2];
    if (!detail::parse_number(f[3], d.rank)) throw FormatError("run: bad rank", lineno);
    if (!detail::parse_number(f[4], d.score) || !std::isfinite(d.score)) throw FormatError("run: bad score", lineno);
    auto& list = run[f[0]];
    if (f[0] != last_qid && !list.empty()) throw FormatError("run: query lines not contiguous", lineno);
    last_qid = f[0];
    if (d.rank != list.size() + 1) throw FormatError("run: non-contiguous rank", lineno);
    if (!list.empty() && d.score > list.back().score) throw FormatError("run: score increases with rank", lineno);
    list.push_back(std::move(d));
  }
  return run;
}

inline RunList read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run file: " + path.string());
  return read_run(in);
}

}  // namespace dcomp
