#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hers/net/mlp.hpp"

namespace hers::net {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments for one parameter list. Shapes are fixed by the first call
/// (or by `for_params`) and checked on every step.
struct AdamState {
  AdamConfig config;
  std::vector<Vector> m;
  std::vector<Vector> v;
  long step = 0;

  template <typename Params>
  static AdamState for_params(const Params& params, AdamConfig cfg = {}) {
    AdamState s{cfg, {}, {}, 0};
    for (const auto& p : params) {
      s.m.emplace_back(p.values.size(), 0.0);
      s.v.emplace_back(p.values.size(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, std::span<const ParamRef> params, const Gradients& grads) {
  if (params.size() != grads.values.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.values.size()) + " gradients, " +
                     std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].values.size() != grads.values[p].size() ||
        params[p].values.size() != state.m[p].size()) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + params[p].name + "'");
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].values;
    const Vector& g = grads.values[p];
    Vector& m = state.m[p];
    Vector& v = state.v[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace hers::net
