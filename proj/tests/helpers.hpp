#pragma once

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dcomp/embedding_store.hpp"
#include "dcomp/linalg.hpp"

namespace testing_helpers {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dcomp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string doc_id(std::size_t i, char prefix = 'd') {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

/// Gaussian store with ids d00000, d00001, ...
inline dcomp::EmbeddingStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed, char prefix = 'd') {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> values(n * dim);
  for (double& v : values) v = nd(gen);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(doc_id(i, prefix));
  return dcomp::EmbeddingStore(std::move(ids), dcomp::DenseMatrix(n, dim, std::move(values)));
}

/// Small integer entries so that exact score ties are common.
inline dcomp::EmbeddingStore integer_store(std::size_t n, std::size_t dim, std::uint64_t seed, int lo, int hi,
                                           char prefix = 'd') {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> ud(lo, hi);
  std::vector<double> values(n * dim);
  for (double& v : values) v = ud(gen);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(doc_id(i, prefix));
  return dcomp::EmbeddingStore(std::move(ids), dcomp::DenseMatrix(n, dim, std::move(values)));
}

inline std::vector<std::vector<double>> rows_of(const dcomp::EmbeddingStore& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.emplace_back(s.row(i).begin(), s.row(i).end());
  return out;
}

}  // namespace testing_helpers
