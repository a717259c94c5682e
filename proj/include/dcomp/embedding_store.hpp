#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dcomp/detail/binary_io.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/linalg.hpp"

namespace dcomp {

/// A collection of embeddings, one row per string id.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  EmbeddingStore(std::vector<std::string> ids, DenseMatrix matrix)
      : ids_(std::move(ids)), matrix_(std::move(matrix)) {
    if (ids_.size() != matrix_.rows()) {
      throw DimensionError("EmbeddingStore: " + std::to_string(ids_.size()) + " ids for " +
                           std::to_string(matrix_.rows()) + " rows");
    }
    if (matrix_.cols() == 0) throw DimensionError("EmbeddingStore: dimension must be positive");
    lookup_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!lookup_.emplace(ids_[i], i).second) {
        throw FormatError("EmbeddingStore: duplicate id '" + ids_[i] + "'");
      }
    }
  }

  std::size_t dimension() const noexcept { return matrix_.cols(); }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  const DenseMatrix& matrix() const noexcept { return matrix_; }
  std::span<const double> row(std::size_t r) const { return matrix_.row(r); }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> vector(std::string_view id) const {
    auto r = find(id);
    if (!r) throw KeyError("unknown id '" + std::string(id) + "'");
    return row(*r);
  }

 private:
  std::vector<std::string> ids_;
  DenseMatrix matrix_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

inline constexpr std::string_view kEmbeddingMagic{"DCEMB1\0\0", 8};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
/// magic + version + dimension + count
inline constexpr std::size_t kEmbeddingHeaderBytes = 8 + 4 + 4 + 8;

inline detail::ByteWriter encode_embeddings(const EmbeddingStore& store) {
  detail::ByteWriter w;
  w.bytes(kEmbeddingMagic);
  w.uint<std::uint32_t>(kEmbeddingVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(store.dimension()));
  w.uint<std::uint64_t>(store.size());
  for (double v : store.matrix().values()) w.f32(static_cast<float>(v));
  for (const auto& id : store.ids()) {
    if (id.empty()) throw FormatError("save_embeddings: empty id");
    if (id.size() > UINT16_MAX) throw FormatError("save_embeddings: id longer than 65535 bytes");
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
  }
  return w;
}

/// Values are narrowed to f32 on disk.
inline void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  if (store.dimension() == 0) throw FormatError("save_embeddings: zero dimension");
  if (!store.matrix().finite()) throw FormatError("save_embeddings: non-finite value");
  encode_embeddings(store).write_to(path);
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  if (r.bytes(8) != kEmbeddingMagic) throw FormatError("load_embeddings: bad magic in " + path.string());
  if (auto v = r.uint<std::uint32_t>(); v != kEmbeddingVersion) {
    throw FormatError("load_embeddings: unsupported version " + std::to_string(v));
  }
  const auto dim = r.uint<std::uint32_t>();
  const auto count = r.uint<std::uint64_t>();
  if (dim == 0) throw FormatError("load_embeddings: zero dimension");
  if (count > r.remaining() / (4ull * dim)) throw FormatError("load_embeddings: truncated payload");

  std::vector<double> values(count * dim);
  for (double& v : values) {
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError("load_embeddings: non-finite value");
  }
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.uint<std::uint16_t>();
    if (len == 0) throw FormatError("load_embeddings: empty id");
    ids.emplace_back(r.bytes(len));
  }
  r.expect_end();
  return EmbeddingStore(std::move(ids), DenseMatrix(count, dim, std::move(values)));
}

}  // namespace dcomp
