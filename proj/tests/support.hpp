#pragma once

#include "hers/linalg/matrix.hpp"
#include "hers/rng.hpp"

namespace hers::fixtures {

inline linalg::Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng, double scale = 1.0) {
  linalg::Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

// MᵀM + ridge·I, so ridge > 0 gives a positive definite matrix.
inline linalg::Matrix random_psd(std::size_t k, SeededRng& rng, double ridge = 0.0) {
  const auto m = random_matrix(k + 2, k, rng);
  auto p = linalg::matmul(linalg::transpose(m), m);
  for (std::size_t i = 0; i < k; ++i) p(i, i) += ridge;
  return linalg::symmetrized(p);
}

inline linalg::Matrix naive_matmul(const linalg::Matrix& a, const linalg::Matrix& b) {
  linalg::Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace hers::fixtures

#include "hers/diffusion/diffusion.hpp"
#include "hers/net/mlp.hpp"

namespace hers::fixtures {

// Small denoiser with random nonzero adapters on the hidden layers, so A and B
// both receive well-scaled gradients.
inline net::MlpDenoiser adapted_model(SeededRng& rng, bool frozen, net::MlpShape shape = {8, 3, 16, 2}) {
  auto m = net::MlpDenoiser::create(shape, rng);
  for (const auto& name : m.hidden_layer_names()) {
    const auto& l = m.layer(name);
    auto a = net::LoRAAdapter::init(name, "d", l.d_out(), l.d_in(), 2, rng);
    for (double& v : a.b.data()) v = 0.3 * rng.normal();
    m.install_adapter(std::move(a));
  }
  for (auto& l : m.layers())
    for (double& b : l.bias) b = 0.1 * rng.normal();
  m.set_frozen_base(frozen);
  return m;
}

inline std::vector<diffusion::LabeledSample> random_batch(std::size_t n, std::size_t d, std::size_t domains,
                                                          SeededRng& rng) {
  std::vector<diffusion::LabeledSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    diffusion::LabeledSample s{linalg::Vector(d), i % domains};
    for (double& v : s.x) v = rng.normal() + static_cast<double>(s.domain);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace hers::fixtures
