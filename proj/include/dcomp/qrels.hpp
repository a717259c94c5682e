#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dcomp/errors.hpp"

namespace dcomp {

/// query id → (doc id → grade). A document is relevant iff its grade is ≥ 1.
using Qrels = std::map<std::string, std::map<std::string, int>>;

inline int grade_of(const Qrels& qrels, const std::string& qid, const std::string& docid) {
  auto q = qrels.find(qid);
  if (q == qrels.end()) return 0;
  auto d = q->second.find(docid);
  return d == q->second.end() ? 0 : d->second;
}

inline std::size_t relevant_count(const std::map<std::string, int>& judged) {
  std::size_t n = 0;
  for (const auto& [doc, grade] : judged) n += grade >= 1 ? 1 : 0;
  return n;
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(std::move(tok));
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

}  // namespace detail

/// Reads TREC qrels (`qid iter docid grade`). Later lines override earlier
/// ones for the same (qid, docid).
inline Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 4) throw FormatError("qrels: expected 4 fields", lineno);
    int grade = 0;
    if (!detail::parse_number(fields[3], grade)) throw FormatError("qrels: bad grade", lineno);
    if (grade < 0) throw FormatError("qrels: negative grade", lineno);
    qrels[fields[0]][fields[2]] = grade;
  }
  return qrels;
}

inline Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open qrels: " + path.string());
  return parse_qrels(in);
}

inline void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& [qid, docs] : qrels)
    for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dcomp
