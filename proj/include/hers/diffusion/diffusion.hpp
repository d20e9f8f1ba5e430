#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hers/linalg/matrix.hpp"
#include "hers/net/grad_check.hpp"
#include "hers/net/mlp.hpp"
#include "hers/rng.hpp"

namespace hers::diffusion {

using linalg::Matrix;
using linalg::Vector;
using net::MlpDenoiser;

/// Linear beta schedule with cumulative alpha products. Timesteps are
/// 1-based: t in [1, T]; alpha_bar(0) is 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(std::size_t steps, double beta_start, double beta_end)
      : beta_start_(beta_start), beta_end_(beta_end) {
    if (steps < 1) throw Error("make_schedule: need at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
      throw Error("make_schedule: need 0 < beta_start <= beta_end < 1, got " +
                  std::to_string(beta_start) + " .. " + std::to_string(beta_end));
    }
    betas_.resize(steps);
    alphas_.resize(steps);
    alpha_bars_.resize(steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
      betas_[i] = beta_start + frac * (beta_end - beta_start);
      alphas_[i] = 1.0 - betas_[i];
      prod *= alphas_[i];
      alpha_bars_[i] = prod;
    }
  }

  std::size_t steps() const noexcept { return betas_.size(); }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }
  const Vector& betas() const noexcept { return betas_; }
  const Vector& alphas() const noexcept { return alphas_; }
  const Vector& alpha_bars() const noexcept { return alpha_bars_; }

  double beta(std::size_t t) const { return betas_.at(check(t) - 1); }
  double alpha(std::size_t t) const { return alphas_.at(check(t) - 1); }
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bars_.at(check(t) - 1); }

  // β̃_t = β_t (1 - ᾱ_{t-1}) / (1 - ᾱ_t)
  double posterior_variance(std::size_t t) const {
    return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
  }

  std::size_t check(std::size_t t) const {
    if (t < 1 || t > steps()) {
      throw Error("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    }
    return t;
  }

 private:
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  Vector betas_;
  Vector alphas_;
  Vector alpha_bars_;
};

inline NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
  return NoiseSchedule(steps, beta_start, beta_end);
}

// √ᾱ_t x0 + √(1-ᾱ_t) noise, written for an explicit ᾱ so the limits are testable.
inline Vector q_sample_with(std::span<const double> x0, double alpha_bar,
                            std::span<const double> noise) {
  if (noise.size() != x0.size()) {
    throw ShapeError("q_sample: noise length " + std::to_string(noise.size()) + " != data length " +
                     std::to_string(x0.size()));
  }
  const double a = std::sqrt(alpha_bar);
  const double s = std::sqrt(1.0 - alpha_bar);
  Vector out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * noise[i];
  return out;
}

inline Vector q_sample(std::span<const double> x0, std::size_t t, std::span<const double> noise,
                       const NoiseSchedule& sched) {
  return q_sample_with(x0, sched.alpha_bar(sched.check(t)), noise);
}

/// One-hot domain condition.
class Condition {
 public:
  Condition(std::size_t index, std::size_t count) : index_(index), count_(count) {
    if (count == 0 || index >= count) {
      throw Error("condition index " + std::to_string(index) + " outside domain set of size " +
                  std::to_string(count));
    }
  }
  std::size_t index() const noexcept { return index_; }
  std::size_t count() const noexcept { return count_; }
  Vector one_hot() const {
    Vector v(count_, 0.0);
    v[index_] = 1.0;
    return v;
  }

 private:
  std::size_t index_;
  std::size_t count_;
};

/// sin/cos of t/T at frequencies π·2^i, i = 0..3.
inline std::array<double, net::kTimeEmbeddingDim> time_embedding(std::size_t t, std::size_t steps) {
  std::array<double, net::kTimeEmbeddingDim> e{};
  const double phase = static_cast<double>(t) / static_cast<double>(steps);
  for (std::size_t i = 0; i < net::kTimeEmbeddingDim / 2; ++i) {
    const double f = std::numbers::pi * static_cast<double>(1u << i);
    e[2 * i] = std::sin(f * phase);
    e[2 * i + 1] = std::cos(f * phase);
  }
  return e;
}

inline Vector model_input(std::span<const double> x, const Condition& cond, std::size_t t,
                          std::size_t steps) {
  Vector in;
  in.reserve(x.size() + cond.count() + net::kTimeEmbeddingDim);
  in.insert(in.end(), x.begin(), x.end());
  const Vector oh = cond.one_hot();
  in.insert(in.end(), oh.begin(), oh.end());
  const auto te = time_embedding(t, steps);
  in.insert(in.end(), te.begin(), te.end());
  return in;
}

inline void require_compatible(const MlpDenoiser& model, std::size_t data_dim,
                               std::size_t cond_dim) {
  const auto& s = model.shape();
  if (s.data_dim != data_dim || s.cond_dim != cond_dim) {
    throw ShapeError("denoiser expects data dim " + std::to_string(s.data_dim) +
                     " and condition dim " + std::to_string(s.cond_dim) + ", got " +
                     std::to_string(data_dim) + " and " + std::to_string(cond_dim));
  }
}

struct LabeledSample {
  Vector x;
  std::size_t domain = 0;
};

/// A training item with its timestep and noise already drawn.
struct NoisedItem {
  Vector x0;
  std::size_t domain = 0;
  std::size_t t = 1;
  Vector noise;
};

inline std::vector<NoisedItem> draw_noise(std::span<const LabeledSample> batch,
                                          const NoiseSchedule& sched, SeededRng& rng) {
  std::vector<NoisedItem> items;
  items.reserve(batch.size());
  for (const auto& s : batch) {
    NoisedItem it{s.x, s.domain, 1 + rng.below(sched.steps()), Vector(s.x.size())};
    for (double& v : it.noise) v = rng.normal();
    items.push_back(std::move(it));
  }
  return items;
}

// λ Σ (||A||_F² + ||B||_F²) over installed adapters.
inline double adapter_penalty(const MlpDenoiser& model, double lambda) {
  double s = 0.0;
  for (const auto& l : model.layers())
    if (l.adapter) s += linalg::frobenius_sq(l.adapter->a) + linalg::frobenius_sq(l.adapter->b);
  return lambda * s;
}

/// mean_i ||ε_i - ε̂(x_t, t, cond)||² + λ Σ (||A||² + ||B||²) on pre-drawn items.
inline net::LossEval denoise_loss_fixed(const MlpDenoiser& model, std::span<const NoisedItem> items,
                                        const NoiseSchedule& sched, double lambda,
                                        const net::EvalRequest& request = {}) {
  if (items.empty()) throw Error("denoise_loss: empty batch");
  const std::size_t cond_dim = model.shape().cond_dim;
  require_compatible(model, items.front().x0.size(), cond_dim);
  net::LossEval out;
  if (request.gradients) out.grads = model.zero_gradients();
  const double inv_n = 1.0 / static_cast<double>(items.size());
  double mse = 0.0;
  Vector upstream(model.output_dim());
  for (const auto& it : items) {
    const Vector xt = q_sample(it.x0, it.t, it.noise, sched);
    const Vector in = model_input(xt, Condition(it.domain, cond_dim), it.t, sched.steps());
    double sq = 0.0;
    if (request.gradients) {
      const net::ForwardTape tape = model.forward_cached(in, request.pattern);
      for (std::size_t i = 0; i < upstream.size(); ++i) {
        const double r = tape.output[i] - it.noise[i];
        sq += r * r;
        upstream[i] = 2.0 * r * inv_n;
      }
      model.backward_accumulate(tape, upstream, out.grads);
    } else {
      const Vector pred = model.forward(in, request.pattern);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - it.noise[i];
        sq += r * r;
      }
    }
    mse += sq;
  }
  out.loss = mse * inv_n + adapter_penalty(model, lambda);

  if (request.gradients && lambda != 0.0) {
    // Adapter factors occupy known slots in trainable() order.
    std::size_t slot = 0;
    for (const auto& l : model.layers()) {
      if (!model.frozen_base()) slot += 2;
      if (l.adapter) {
        auto& ga = out.grads.values[slot];
        auto& gb = out.grads.values[slot + 1];
        const auto a = l.adapter->a.data();
        const auto b = l.adapter->b.data();
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * lambda * a[i];
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] += 2.0 * lambda * b[i];
        slot += 2;
      }
    }
  }
  return out;
}

/// Training loss: draws t ~ U{1..T} and ε ~ N(0, I) per item from `rng`.
inline net::LossEval denoise_loss(const MlpDenoiser& model, std::span<const LabeledSample> batch,
                                  const NoiseSchedule& sched, SeededRng& rng, double lambda,
                                  const net::EvalRequest& request = {}) {
  if (batch.empty()) throw Error("denoise_loss: empty batch");
  const auto items = draw_noise(batch, sched, rng);
  return denoise_loss_fixed(model, items, sched, lambda, request);
}

/// Deterministic LossFn over a fixed batch; each evaluation replays the
/// same timestep/noise draws from `seed`.
inline net::LossFn denoise_loss_fn(std::vector<LabeledSample> batch, const NoiseSchedule& sched,
                                   std::uint64_t seed, double lambda) {
  SeededRng rng(seed);
  auto items = draw_noise(batch, sched, rng);
  return [items = std::move(items), sched, lambda](const MlpDenoiser& m,
                                                   const net::EvalRequest& req) {
    return denoise_loss_fixed(m, items, sched, lambda, req);
  };
}

/// Ancestral DDPM sampler. Starts from x_T ~ N(0, I), applies
/// x_{t-1} = (x_t - β_t/√(1-ᾱ_t) ε̂) / √α_t + √β̃_t z for t = T..1, with no
/// noise at the final step. Initial noise for all rows is drawn first, then
/// per-step noise row by row.
inline Matrix generate(const MlpDenoiser& model, const Condition& cond, std::size_t n,
                       const NoiseSchedule& sched, SeededRng& rng) {
  const std::size_t d = model.shape().data_dim;
  require_compatible(model, d, cond.count());
  Matrix x(n, d);
  for (double& v : x.data()) v = rng.normal();
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double sigma = t > 1 ? std::sqrt(sched.posterior_variance(t)) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      const Vector eps = model.forward(model_input(row, cond, t, sched.steps()));
      for (std::size_t j = 0; j < d; ++j) row[j] = inv_sqrt_alpha * (row[j] - coef * eps[j]);
      if (t > 1)
        for (std::size_t j = 0; j < d; ++j) row[j] += sigma * rng.normal();
    }
  }
  return x;
}

}  // namespace hers::diffusion
