#pragma once

// Dimension-reduction models: PCA, CE (two bias-free linear maps) and ConAE
// (two linear encoders plus a linear decoder back to the source dimension).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dcomp/detail/binary_io.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/linalg.hpp"

namespace dcomp {

enum class Side { Query, Document };

inline const char* to_string(Side s) { return s == Side::Query ? "query" : "document"; }

struct PcaModel {
  DenseVector mean;        // K
  DenseMatrix components;  // L×K, orthonormal rows, descending singular value

  std::size_t source_dim() const noexcept { return components.cols(); }
  std::size_t target_dim() const noexcept { return components.rows(); }
};

struct CeModel {
  DenseMatrix w_query;  // L×K
  DenseMatrix w_doc;    // L×K

  std::size_t source_dim() const noexcept { return w_query.cols(); }
  std::size_t target_dim() const noexcept { return w_query.rows(); }
};

struct ConaeModel {
  DenseMatrix enc_query;  // L×K
  DenseMatrix enc_doc;    // L×K
  DenseMatrix dec;        // K×L, shared by both sides unless dec_doc is set
  std::optional<DenseMatrix> dec_doc;

  std::size_t source_dim() const noexcept { return enc_query.cols(); }
  std::size_t target_dim() const noexcept { return enc_query.rows(); }
  bool shared_decoder() const noexcept { return !dec_doc.has_value(); }
  const DenseMatrix& decoder(Side side) const {
    return side == Side::Document && dec_doc ? *dec_doc : dec;
  }
};

using CompressorModel = std::variant<PcaModel, CeModel, ConaeModel>;

enum class ModelKind : std::uint8_t { Pca = 0, Ce = 1, Conae = 2, ConaeSplitDecoder = 3 };

inline ModelKind kind_of(const CompressorModel& m) {
  if (std::holds_alternative<PcaModel>(m)) return ModelKind::Pca;
  if (std::holds_alternative<CeModel>(m)) return ModelKind::Ce;
  return std::get<ConaeModel>(m).shared_decoder() ? ModelKind::Conae : ModelKind::ConaeSplitDecoder;
}

inline std::size_t source_dim(const CompressorModel& m) {
  return std::visit([](const auto& x) { return x.source_dim(); }, m);
}
inline std::size_t target_dim(const CompressorModel& m) {
  return std::visit([](const auto& x) { return x.target_dim(); }, m);
}

// ---------------------------------------------------------------------------
// PCA

/// Fits on the rows of `doc_store`. Components are the leading right singular
/// vectors of the centered matrix; each is signed so that its largest-magnitude
/// entry is positive.
inline PcaModel pca_fit(const EmbeddingStore& doc_store, std::size_t target_dim) {
  const std::size_t n = doc_store.size(), k = doc_store.dimension();
  if (target_dim == 0 || target_dim > k) {
    throw DimensionError("pca_fit: target_dim " + std::to_string(target_dim) +
                         " outside [1, " + std::to_string(k) + "]");
  }
  if (n < 2) throw EmptyInputError("pca_fit: need at least 2 rows");

  PcaModel model;
  model.mean.assign(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) axpy(1.0, doc_store.row(r), model.mean);
  for (double& x : model.mean) x /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = doc_store.row(r);
    for (std::size_t c = 0; c < k; ++c) centered(r, c) = row[c] - model.mean[c];
  }
  const unsigned opts = n >= k ? Eigen::ComputeThinV : Eigen::ComputeFullV;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, opts);
  const Eigen::MatrixXd& v = svd.matrixV();

  model.components = DenseMatrix(target_dim, k);
  for (std::size_t i = 0; i < target_dim; ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (std::abs(v(c, i)) > std::abs(v(arg, i))) arg = c;
    const double sign = v(arg, i) < 0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < k; ++c) model.components(i, c) = sign * v(c, i);
  }
  return model;
}

inline DenseVector pca_project(const PcaModel& model, std::span<const double> x) {
  require_dims(x.size(), model.source_dim(), "pca_project");
  DenseVector centered(x.begin(), x.end());
  for (std::size_t c = 0; c < centered.size(); ++c) centered[c] -= model.mean[c];
  return mat_vec(model.components, centered);
}

inline DenseVector pca_reconstruct(const PcaModel& model, std::span<const double> code) {
  require_dims(code.size(), model.target_dim(), "pca_reconstruct");
  DenseVector out = mat_t_vec(model.components, code);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += model.mean[c];
  return out;
}

// ---------------------------------------------------------------------------
// Linear encoders

inline DenseVector encode(const CeModel& model, std::span<const double> x, Side side) {
  require_dims(x.size(), model.source_dim(), "encode");
  return mat_vec(side == Side::Query ? model.w_query : model.w_doc, x);
}

inline DenseVector encode(const ConaeModel& model, std::span<const double> x, Side side) {
  require_dims(x.size(), model.source_dim(), "encode");
  return mat_vec(side == Side::Query ? model.enc_query : model.enc_doc, x);
}

inline DenseVector decode(const ConaeModel& model, std::span<const double> code, Side side = Side::Query) {
  require_dims(code.size(), model.target_dim(), "decode");
  return mat_vec(model.decoder(side), code);
}

/// Applies the model's side-appropriate map to one vector. PCA ignores side.
inline DenseVector compress(const CompressorModel& model, std::span<const double> x, Side side) {
  return std::visit(
      [&](const auto& m) -> DenseVector {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, PcaModel>) {
          return pca_project(m, x);
        } else {
          return encode(m, x, side);
        }
      },
      model);
}

inline EmbeddingStore compress_store(const CompressorModel& model, const EmbeddingStore& store, Side side) {
  require_dims(store.dimension(), source_dim(model), "compress_store");
  const std::size_t l = target_dim(model);
  DenseMatrix out(store.size(), l);
  for (std::size_t r = 0; r < store.size(); ++r) {
    auto code = compress(model, store.row(r), side);
    std::copy(code.begin(), code.end(), out.row(r).begin());
  }
  return EmbeddingStore(store.ids(), std::move(out));
}

// ---------------------------------------------------------------------------
// Initialisation

enum class TrainableKind { Ce, Conae };

/// Both encoders start as the same orthonormal projection (L×K, orthonormal
/// rows); the decoder starts as its transpose.
inline CompressorModel init_model(TrainableKind kind, std::size_t source, std::size_t target,
                                  std::uint64_t seed, bool split_decoder = false) {
  if (target == 0 || target > source) {
    throw DimensionError("init_model: target dim " + std::to_string(target) +
                         " must be in [1, " + std::to_string(source) + "]");
  }
  DenseMatrix proj = random_orthonormal(source, target, seed).transpose();
  if (kind == TrainableKind::Ce) return CeModel{proj, proj};
  ConaeModel m{proj, proj, proj.transpose(), std::nullopt};
  if (split_decoder) m.dec_doc = m.dec;
  return m;
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr std::string_view kModelMagic{"DCMDL1\0\0", 8};
inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(const CompressorModel& model, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(kModelMagic);
  w.uint<std::uint32_t>(kModelVersion);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(kind_of(model)));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(source_dim(model)));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(target_dim(model)));
  auto put = [&](std::span<const double> xs) {
    for (double x : xs) w.f64(x);
  };
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PcaModel>) {
          put(m.mean);
          put(m.components.values());
        } else if constexpr (std::is_same_v<T, CeModel>) {
          put(m.w_query.values());
          put(m.w_doc.values());
        } else {
          put(m.enc_query.values());
          put(m.enc_doc.values());
          put(m.dec.values());
          if (m.dec_doc) put(m.dec_doc->values());
        }
      },
      model);
  w.write_to(path);
}

inline CompressorModel load_model(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  if (r.bytes(8) != kModelMagic) throw FormatError("load_model: bad magic in " + path.string());
  if (auto v = r.uint<std::uint32_t>(); v != kModelVersion)
    throw FormatError("load_model: unsupported version " + std::to_string(v));
  const auto kind = r.uint<std::uint8_t>();
  const std::size_t k = r.uint<std::uint32_t>(), l = r.uint<std::uint32_t>();
  if (k == 0 || l == 0 || l > k) throw FormatError("load_model: invalid dimensions");
  auto get = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> xs(rows * cols);
    for (double& x : xs) {
      x = r.f64();
      if (!std::isfinite(x)) throw FormatError("load_model: non-finite parameter");
    }
    return DenseMatrix(rows, cols, std::move(xs));
  };
  CompressorModel out;
  switch (static_cast<ModelKind>(kind)) {
    case ModelKind::Pca: {
      auto mean = get(1, k);
      auto comps = get(l, k);
      out = PcaModel{DenseVector(mean.values().begin(), mean.values().end()), std::move(comps)};
      break;
    }
    case ModelKind::Ce: {
      auto wq = get(l, k);
      auto wd = get(l, k);
      out = CeModel{std::move(wq), std::move(wd)};
      break;
    }
    case ModelKind::Conae:
    case ModelKind::ConaeSplitDecoder: {
      auto eq = get(l, k);
      auto ed = get(l, k);
      auto dec = get(k, l);
      std::optional<DenseMatrix> dec_doc;
      if (static_cast<ModelKind>(kind) == ModelKind::ConaeSplitDecoder) dec_doc = get(k, l);
      out = ConaeModel{std::move(eq), std::move(ed), std::move(dec), std::move(dec_doc)};
      break;
    }
    default:
      throw FormatError("load_model: unknown model kind " + std::to_string(kind));
  }
  r.expect_end();
  return out;
}

}  // namespace dcomp
