#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dcomp/errors.hpp"
#include "dcomp/linalg.hpp"

namespace dcomp {

struct AdamState {
  std::vector<DenseMatrix> first_moment;
  std::vector<DenseMatrix> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(std::span<DenseMatrix* const> params) {
    AdamState s;
    for (const DenseMatrix* p : params) {
      s.first_moment.emplace_back(p->rows(), p->cols());
      s.second_moment.emplace_back(p->rows(), p->cols());
    }
    return s;
  }
};

/// One bias-corrected Adam update of every parameter matrix in place.
inline void adam_step(AdamState& state, std::span<DenseMatrix* const> params,
                      std::span<const DenseMatrix> grads, double lr) {
  require_dims(params.size(), grads.size(), "adam_step parameter count");
  require_dims(params.size(), state.first_moment.size(), "adam_step state size");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->same_shape(grads[p]) || !params[p]->same_shape(state.first_moment[p]) ||
        !params[p]->same_shape(state.second_moment[p])) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(p));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto x = params[p]->values();
    auto g = grads[p].values();
    auto m = state.first_moment[p].values();
    auto v = state.second_moment[p].values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.epsilon);
    }
  }
}

}  // namespace dcomp
