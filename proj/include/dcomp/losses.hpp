#pragma once

// Distillation and reconstruction objectives for the linear compressors:
//   KL(teacher softmax over D_top ‖ student softmax over D_top)
//   L_q = 1 + tanh f(ĥ_q, d⁻) − tanh f(ĥ_q, d⁺)     ĥ_q = dec·enc_q·h_q
//   L_d = 1 + tanh f(h_q, ĥ_d⁻) − tanh f(h_q, ĥ_d⁺)  ĥ_d = dec·enc_d·h_d
//   L   = KL + λ·L_q + λ·L_d

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcomp/compressors.hpp"
#include "dcomp/dtop.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/linalg.hpp"

namespace dcomp {

enum class Ablation { Full, NoDecoder, NoKL };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoDecoder: return "no-decoder";
    case Ablation::NoKL: return "no-kl";
  }
  return "?";
}

struct TrainConfig {
  double lambda = 0.1;
  double lr = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::size_t n_negatives = 1;
  std::size_t n_top = 100;
  std::uint64_t seed = 42;
  Ablation ablation = Ablation::Full;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (n_top < 2) throw ConfigError("n_top must be >= 2");
    if (n_negatives < 1) throw ConfigError("n_negatives must be >= 1");
  }

  bool uses_kl() const noexcept { return ablation != Ablation::NoKL; }
  bool uses_margins() const noexcept { return ablation != Ablation::NoDecoder; }
};

/// Loss components. `contrastive` is only non-zero for CE training, which
/// optimises a softmax cross-entropy instead of the distillation objective.
struct LossBreakdown {
  double kl = 0.0;
  double margin_q = 0.0;
  double margin_d = 0.0;
  double contrastive = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    kl += o.kl;
    margin_q += o.margin_q;
    margin_d += o.margin_d;
    contrastive += o.contrastive;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const { return {kl * s, margin_q * s, margin_d * s, contrastive * s, total * s}; }
};

/// Combines the components, zeroing whatever the ablation removes.
inline LossBreakdown total_loss(double kl, double margin_q, double margin_d, const TrainConfig& cfg) {
  LossBreakdown out;
  out.kl = cfg.uses_kl() ? kl : 0.0;
  out.margin_q = cfg.uses_margins() ? margin_q : 0.0;
  out.margin_d = cfg.uses_margins() ? margin_d : 0.0;
  out.total = out.kl + cfg.lambda * out.margin_q + cfg.lambda * out.margin_d;
  return out;
}

inline DenseVector teacher_distribution(const std::string& qid, const TopDocsTable& dtop) {
  const auto& list = dtop.at(qid);
  std::vector<double> scores;
  scores.reserve(list.size());
  for (const auto& d : list) scores.push_back(d.score);
  return softmax_stable(scores);
}

template <typename Model>
DenseVector student_distribution(const Model& model, std::span<const double> query_vec,
                                 std::span<const std::span<const double>> docs) {
  const auto eq = encode(model, query_vec, Side::Query);
  std::vector<double> scores;
  scores.reserve(docs.size());
  for (const auto& d : docs) scores.push_back(dot(eq, encode(model, d, Side::Document)));
  return softmax_stable(scores);
}

/// Σ pᵢ ln(pᵢ/qᵢ); terms with pᵢ = 0 contribute nothing.
inline double kl_loss(std::span<const double> p_teacher, std::span<const double> p_student) {
  require_dims(p_teacher.size(), p_student.size(), "kl_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < p_teacher.size(); ++i) {
    if (p_teacher[i] > 0.0) sum += p_teacher[i] * std::log(p_teacher[i] / p_student[i]);
  }
  return sum;
}

inline double margin_from_scores(double pos_score, double neg_score) {
  return 1.0 + std::tanh(neg_score) - std::tanh(pos_score);
}

inline double margin_loss_query(const ConaeModel& model, std::span<const double> h_q,
                                std::span<const double> h_pos, std::span<const double> h_neg) {
  const auto recon = decode(model, encode(model, h_q, Side::Query), Side::Query);
  return margin_from_scores(dot(recon, h_pos), dot(recon, h_neg));
}

inline double margin_loss_doc(const ConaeModel& model, std::span<const double> h_q,
                              std::span<const double> h_pos, std::span<const double> h_neg) {
  const auto pos = decode(model, encode(model, h_pos, Side::Document), Side::Document);
  const auto neg = decode(model, encode(model, h_neg, Side::Document), Side::Document);
  return margin_from_scores(dot(h_q, pos), dot(h_q, neg));
}

}  // namespace dcomp
