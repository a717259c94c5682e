#pragma once

// Closed-form gradients of the training objectives with respect to the
// encoder and decoder matrices, and a central-difference checker.
//
// With e_q = W_q h_q and student scores sᵢ = e_q · W_d hᵢ, the KL gradient
// reduces to cᵢ = p_studentᵢ − p_teacherᵢ and g = Σ cᵢ hᵢ:
//   ∂KL/∂W_q = (W_d g) h_qᵀ        ∂KL/∂W_d = e_q gᵀ
// The tanh margins use d tanh(x)/dx = sech²(x).

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "dcomp/compressors.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/linalg.hpp"
#include "dcomp/losses.hpp"

namespace dcomp {

/// One training query with everything the loss needs. Vectors are views into
/// stores that must outlive the example.
struct TrainExample {
  std::span<const double> query;
  std::vector<std::span<const double>> candidates;  // D_top, in list order
  DenseVector teacher_probs;                        // aligned with candidates
  std::span<const double> positive;
  std::vector<std::span<const double>> negatives;
};

using ParamGrads = std::vector<DenseMatrix>;

inline std::vector<DenseMatrix*> parameters(ConaeModel& m) {
  std::vector<DenseMatrix*> out{&m.enc_query, &m.enc_doc, &m.dec};
  if (m.dec_doc) out.push_back(&*m.dec_doc);
  return out;
}

inline std::vector<DenseMatrix*> parameters(CeModel& m) { return {&m.w_query, &m.w_doc}; }

template <typename Model>
ParamGrads zero_grads(const Model& model) {
  ParamGrads out;
  for (const DenseMatrix* p : parameters(const_cast<Model&>(model))) out.emplace_back(p->rows(), p->cols());
  return out;
}

namespace detail {

inline double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

/// Softmax cross-entropy against `target` over scores sᵢ = u·hᵢ, with the
/// encoder gradients accumulated into (g_wq, g_wd). Returns the loss.
inline double softmax_xent(const DenseMatrix& w_doc, std::span<const double> h_q,
                           std::span<const double> eq, std::span<const std::span<const double>> cands,
                           std::span<const double> target, DenseMatrix* g_wq, DenseMatrix* g_wd) {
  require_dims(cands.size(), target.size(), "candidate/target length");
  if (cands.empty()) throw EmptyInputError("training example without candidates");
  const DenseVector u = mat_t_vec(w_doc, eq);
  std::vector<double> scores(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) scores[i] = dot(u, cands[i]);
  const double lse = log_sum_exp(scores);
  double loss = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (target[i] > 0.0) loss += target[i] * (std::log(target[i]) - (scores[i] - lse));
  }
  if (g_wq != nullptr) {
    DenseVector g(h_q.size(), 0.0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      axpy(std::exp(scores[i] - lse) - target[i], cands[i], g);
    }
    add_outer(*g_wq, 1.0, mat_vec(w_doc, g), h_q);
    add_outer(*g_wd, 1.0, eq, g);
  }
  return loss;
}

}  // namespace detail

/// Loss of one example under the distillation objective; when `grads` is
/// non-null the example's gradient is added to it.
inline LossBreakdown example_loss(const ConaeModel& m, const TrainExample& ex, const TrainConfig& cfg,
                                  ParamGrads* grads = nullptr) {
  const std::size_t k = m.source_dim();
  require_dims(ex.query.size(), k, "training example");
  const DenseVector eq = mat_vec(m.enc_query, ex.query);
  DenseMatrix* g_wq = grads ? &(*grads)[0] : nullptr;
  DenseMatrix* g_wd = grads ? &(*grads)[1] : nullptr;

  double kl = 0.0, mq = 0.0, md = 0.0;
  if (cfg.uses_kl()) {
    kl = detail::softmax_xent(m.enc_doc, ex.query, eq, ex.candidates, ex.teacher_probs, g_wq, g_wd);
  }

  if (cfg.uses_margins()) {
    if (ex.negatives.empty()) throw ConfigError("margin losses need at least one negative");
    const double inv_n = 1.0 / static_cast<double>(ex.negatives.size());
    const double scale = cfg.lambda;
    const DenseMatrix& dq = m.decoder(Side::Query);
    const DenseMatrix& dd = m.decoder(Side::Document);
    DenseMatrix* g_dq = grads ? &(*grads)[2] : nullptr;
    DenseMatrix* g_dd = grads ? &(*grads)[m.shared_decoder() ? 2 : 3] : nullptr;

    // Decoded query against original documents.
    const DenseVector q_hat = mat_vec(dq, eq);
    const double a_pos = dot(q_hat, ex.positive);
    DenseVector r(k, 0.0);
    for (const auto& neg : ex.negatives) {
      const double a_neg = dot(q_hat, neg);
      mq += inv_n * margin_from_scores(a_pos, a_neg);
      if (grads) axpy(inv_n * detail::sech2(a_neg), neg, r);
    }
    if (grads) {
      axpy(-detail::sech2(a_pos), ex.positive, r);
      add_outer(*g_dq, scale, r, eq);
      add_outer(*g_wq, scale, mat_t_vec(dq, r), ex.query);
    }

    // Original query against decoded documents: f(h_q, D e) = (Dᵀh_q)·e.
    const DenseVector w = mat_t_vec(dd, ex.query);
    const DenseVector e_pos = mat_vec(m.enc_doc, ex.positive);
    const double b_pos = dot(w, e_pos);
    const double t_pos = detail::sech2(b_pos);
    DenseVector code_dir(m.target_dim(), 0.0);
    DenseVector input_dir(k, 0.0);
    for (const auto& neg : ex.negatives) {
      const DenseVector e_neg = mat_vec(m.enc_doc, neg);
      const double b_neg = dot(w, e_neg);
      md += inv_n * margin_from_scores(b_pos, b_neg);
      if (grads) {
        const double t_neg = detail::sech2(b_neg);
        axpy(inv_n * t_neg, e_neg, code_dir);
        axpy(inv_n * t_neg, neg, input_dir);
      }
    }
    if (grads) {
      axpy(-t_pos, e_pos, code_dir);
      axpy(-t_pos, ex.positive, input_dir);
      add_outer(*g_dd, scale, ex.query, code_dir);
      add_outer(*g_wd, scale, w, input_dir);
    }
  }
  return total_loss(kl, mq, md, cfg);
}

/// CE objective: softmax cross-entropy of the positive against the sampled
/// negatives, scored with the compressed embeddings.
inline LossBreakdown example_loss(const CeModel& m, const TrainExample& ex, const TrainConfig&,
                                  ParamGrads* grads = nullptr) {
  require_dims(ex.query.size(), m.source_dim(), "training example");
  if (ex.negatives.empty()) throw ConfigError("contrastive loss needs at least one negative");
  std::vector<std::span<const double>> cands{ex.positive};
  cands.insert(cands.end(), ex.negatives.begin(), ex.negatives.end());
  std::vector<double> target(cands.size(), 0.0);
  target[0] = 1.0;
  const DenseVector eq = mat_vec(m.w_query, ex.query);
  LossBreakdown out;
  out.contrastive = detail::softmax_xent(m.w_doc, ex.query, eq, cands, target,
                                         grads ? &(*grads)[0] : nullptr, grads ? &(*grads)[1] : nullptr);
  out.total = out.contrastive;
  return out;
}

/// Summed loss over a batch.
template <typename Model>
LossBreakdown batch_loss(const Model& model, std::span<const TrainExample> batch, const TrainConfig& cfg) {
  LossBreakdown sum;
  for (const auto& ex : batch) sum += example_loss(model, ex, cfg);
  return sum;
}

namespace detail {

/// Streaming pairwise sum of per-example gradients (binary-counter order).
/// Equal adjacent inputs merge first, so a batch with every element repeated
/// twice in place sums to exactly twice the original.
class PairwiseGradSum {
 public:
  void add(ParamGrads g) {
    std::size_t level = 0;
    while (!stack_.empty() && stack_.back().level == level) {
      merge_into(stack_.back().grads, g);
      g = std::move(stack_.back().grads);
      stack_.pop_back();
      ++level;
    }
    stack_.push_back({level, std::move(g)});
  }

  /// Remaining partial sums are combined right to left.
  ParamGrads finish(ParamGrads zero) {
    if (stack_.empty()) return zero;
    ParamGrads acc = std::move(stack_.back().grads);
    stack_.pop_back();
    while (!stack_.empty()) {
      merge_into(stack_.back().grads, acc);
      acc = std::move(stack_.back().grads);
      stack_.pop_back();
    }
    return acc;
  }

 private:
  struct Partial {
    std::size_t level;
    ParamGrads grads;
  };

  // left += right
  static void merge_into(ParamGrads& left, const ParamGrads& right) {
    for (std::size_t p = 0; p < left.size(); ++p) axpy(1.0, right[p].values(), left[p].values());
  }

  std::vector<Partial> stack_;
};

}  // namespace detail

/// Gradient of the summed batch loss, in parameters() order. Per-example
/// gradients are reduced pairwise in batch order; `loss_sum`, when given,
/// receives the summed loss.
template <typename Model>
ParamGrads gradients(const Model& model, std::span<const TrainExample> batch, const TrainConfig& cfg,
                     LossBreakdown* loss_sum = nullptr) {
  detail::PairwiseGradSum sum;
  for (const auto& ex : batch) {
    ParamGrads g = zero_grads(model);
    const LossBreakdown l = example_loss(model, ex, cfg, &g);
    if (loss_sum) *loss_sum += l;
    sum.add(std::move(g));
  }
  return sum.finish(zero_grads(model));
}

/// Central-difference check of `analytic` against `loss` over every entry of
/// `params`. Returns max |analytic − fd| / max(|fd|, 1e-8).
inline double fd_check_fn(std::span<DenseMatrix* const> params, const ParamGrads& analytic,
                          const std::function<double()>& loss, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ConfigError("fd_check: epsilon must be in [1e-7, 1e-3]");
  require_dims(params.size(), analytic.size(), "fd_check parameter count");
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p]->values();
    const auto grad = analytic[p].values();
    require_dims(values.size(), grad.size(), "fd_check parameter shape");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = loss();
      values[i] = saved - epsilon;
      const double down = loss();
      values[i] = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, std::abs(grad[i] - fd) / std::max(std::abs(fd), 1e-8));
    }
  }
  return worst;
}

template <typename Model>
double fd_check(const Model& model, std::span<const TrainExample> batch, const TrainConfig& cfg,
                double epsilon) {
  Model probe = model;
  const ParamGrads analytic = gradients(probe, batch, cfg);
  const auto params = parameters(probe);
  return fd_check_fn(params, analytic, [&] { return batch_loss(probe, batch, cfg).total; }, epsilon);
}

}  // namespace dcomp
