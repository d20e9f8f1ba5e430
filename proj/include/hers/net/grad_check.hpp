#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <utility>

#include "hers/net/mlp.hpp"
#include "hers/rng.hpp"

namespace hers::net {

struct EvalRequest {
  bool gradients = true;
  ActivationPattern* pattern = nullptr;
};

struct LossEval {
  double loss = 0.0;
  Gradients grads;  // empty unless requested
};

// A scalar loss of the model's trainable parameters. Implementations must be
// deterministic: repeated calls on the same parameters return the same value.
using LossFn = std::function<LossEval(const MlpDenoiser&, const EvalRequest&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  std::size_t resampled = 0;  // candidates rejected because a step crossed a kink
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares analytic gradients against central differences on `n_coords`
/// distinct trainable coordinates chosen uniformly at random. Frozen weights
/// are never sampled. A candidate whose +h or -h evaluation flips any
/// hidden-unit sign is discarded and another one is drawn.
inline GradCheckResult grad_check(MlpDenoiser& model, const LossFn& loss, std::size_t n_coords,
                                  SeededRng& rng, double h = 1e-4) {
  auto params = model.trainable();
  std::size_t total = 0;
  for (const auto& p : params) total += p.values.size();
  GradCheckResult result;
  if (total == 0 || n_coords == 0) return result;
  n_coords = std::min(n_coords, total);

  ActivationPattern base_pattern;
  const LossEval analytic = loss(model, {true, &base_pattern});
  if (analytic.grads.values.size() != params.size()) {
    throw ShapeError("grad_check: loss returned gradients for " +
                     std::to_string(analytic.grads.values.size()) + " parameters, model has " +
                     std::to_string(params.size()));
  }

  std::set<std::size_t> seen;
  const std::size_t max_attempts = 50 * n_coords + 100;
  std::size_t attempts = 0;
  while (result.coords_checked < n_coords && attempts++ < max_attempts && seen.size() < total) {
    const std::size_t flat = rng.below(total);
    if (!seen.insert(flat).second) continue;
    std::size_t p = 0;
    std::size_t idx = flat;
    while (idx >= params[p].values.size()) idx -= params[p++].values.size();

    double& coord = params[p].values[idx];
    const double saved = coord;
    ActivationPattern plus_pattern;
    ActivationPattern minus_pattern;
    coord = saved + h;
    const double f_plus = loss(model, {false, &plus_pattern}).loss;
    coord = saved - h;
    const double f_minus = loss(model, {false, &minus_pattern}).loss;
    coord = saved;
    if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
      ++result.resampled;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double err = relative_error(analytic.grads.values[p][idx], numeric);
    if (err > result.max_rel_error || result.coords_checked == 0) {
      result.max_rel_error = std::max(err, result.max_rel_error);
      result.worst_param = params[p].name;
      result.worst_index = idx;
    }
    ++result.coords_checked;
  }
  return result;
}

}  // namespace hers::net
