#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hers/linalg/matrix.hpp"
#include "hers/rng.hpp"

namespace hers::net {

using linalg::Matrix;
using linalg::Vector;

/// Low-rank update delta = B A for one named layer of one domain expert.
/// A is r x d_in, B is d_out x r.
struct LoRAAdapter {
  std::string layer_name;
  std::string domain;
  Matrix a;
  Matrix b;

  std::size_t rank() const noexcept { return a.rows(); }
  std::size_t d_in() const noexcept { return a.cols(); }
  std::size_t d_out() const noexcept { return b.rows(); }

  Matrix delta() const { return linalg::matmul(b, a); }

  void validate() const {
    if (a.rows() == 0 || b.cols() != a.rows()) {
      throw ShapeError("adapter '" + layer_name + "': factors " + b.shape() + " and " + a.shape() +
                       " do not compose");
    }
    if (rank() > std::min(d_in(), d_out())) {
      throw ShapeError("adapter '" + layer_name + "': rank " + std::to_string(rank()) +
                       " exceeds min(d_out, d_in) of " + b.shape() + " x " + a.shape());
    }
  }

  /// Fresh adapter: A ~ N(0, 1/r), B = 0, so the effective delta is exactly zero.
  static LoRAAdapter init(std::string layer_name, std::string domain, std::size_t d_out,
                          std::size_t d_in, std::size_t rank, SeededRng& rng) {
    if (rank == 0 || rank > std::min(d_out, d_in)) {
      throw ShapeError("adapter '" + layer_name + "': rank " + std::to_string(rank) +
                       " must be in [1, " + std::to_string(std::min(d_out, d_in)) + "]");
    }
    Matrix a(rank, d_in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rank));
    for (double& v : a.data()) v = scale * rng.normal();
    return {std::move(layer_name), std::move(domain), std::move(a), Matrix(d_out, rank)};
  }
};

/// Dense layer y = (W0 + B A) x + bias, W0 frozen whenever an adapter trains.
struct LinearLayer {
  std::string name;
  Matrix w0;  // d_out x d_in
  Vector bias;
  std::optional<LoRAAdapter> adapter;

  std::size_t d_in() const noexcept { return w0.cols(); }
  std::size_t d_out() const noexcept { return w0.rows(); }

  void validate() const {
    if (bias.size() != d_out()) {
      throw ShapeError("layer '" + name + "': bias length " + std::to_string(bias.size()) +
                       " for weight " + w0.shape());
    }
    if (adapter) {
      adapter->validate();
      if (adapter->d_in() != d_in() || adapter->d_out() != d_out()) {
        throw ShapeError("layer '" + name + "': adapter " + adapter->b.shape() + " x " +
                         adapter->a.shape() + " does not fit weight " + w0.shape());
      }
    }
  }

  // W0 + B A, materialized. Only used for audits and tests.
  Matrix effective_weight() const { return adapter ? w0 + adapter->delta() : w0; }
};

/// Forward pass of one layer. The adapter path is evaluated as B (A x) so the
/// d_out x d_in product is never formed. `ax`, when given, receives A x.
inline Vector linear_forward(const LinearLayer& layer, std::span<const double> x,
                             Vector* ax = nullptr) {
  if (x.size() != layer.d_in()) {
    throw ShapeError("layer '" + layer.name + "': input length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(layer.d_in()));
  }
  Vector y = linalg::matvec(layer.w0, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.bias[i];
  if (layer.adapter) {
    Vector u = linalg::matvec(layer.adapter->a, x);
    const Vector bu = linalg::matvec(layer.adapter->b, u);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bu[i];
    if (ax) *ax = std::move(u);
  }
  return y;
}

}  // namespace hers::net
