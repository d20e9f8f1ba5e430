#pragma once

#include <cmath>
#include <string>

#include "hers/linalg/eigen.hpp"
#include "hers/linalg/matrix.hpp"
#include "hers/rng.hpp"

namespace hers::linalg {

/// Mean and covariance of a k-dimensional distribution. The covariance is
/// symmetrized on construction and must be PSD within 1e-8.
class GaussianStats {
 public:
  GaussianStats(Vector mean, const Matrix& cov) : mean_(std::move(mean)), cov_(symmetrized(cov)) {
    if (!cov_.square() || cov_.rows() != mean_.size()) {
      throw ShapeError("GaussianStats: mean of length " + std::to_string(mean_.size()) +
                       " with covariance " + cov_.shape());
    }
    eig_ = psd_eig(cov_, "GaussianStats");
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  // Eigendecomposition of cov with small negative eigenvalues clamped to 0.
  const SymEig& eig() const noexcept { return eig_; }

 private:
  Vector mean_;
  Matrix cov_;
  SymEig eig_;
};

/// Column means and unbiased (n - 1) sample covariance of the rows of `samples`.
inline GaussianStats gaussian_fit(const Matrix& samples) {
  const std::size_t n = samples.rows();
  const std::size_t k = samples.cols();
  if (n < 2) throw Error("gaussian_fit: need at least 2 samples, got " + std::to_string(n));
  Vector mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) mean[j] += samples(i, j);
  for (double& m : mean) m /= static_cast<double>(n);

  Matrix cov(k, k);
  Vector centered(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) centered[j] = samples(i, j) - mean[j];
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a; b < k; ++b) cov(a, b) += centered[a] * centered[b];
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b) {
      cov(a, b) /= denom;
      cov(b, a) = cov(a, b);
    }
  return GaussianStats(std::move(mean), cov);
}

/// PSD factor L with L Lᵀ = cov, built as V diag(sqrt(λ)). Zero eigenvalues
/// give zero columns, so degenerate covariances are allowed.
inline Matrix psd_factor(const GaussianStats& stats) {
  const SymEig& eig = stats.eig();
  const std::size_t k = stats.dim();
  Matrix l(k, k);
  for (std::size_t j = 0; j < k; ++j) {
    const double s = std::sqrt(eig.values[j]);
    for (std::size_t i = 0; i < k; ++i) l(i, j) = eig.vectors(i, j) * s;
  }
  return l;
}

/// n draws of mean + L ξ with ξ ~ N(0, I), one row per draw.
inline Matrix mvn_sample(const GaussianStats& stats, std::size_t n, SeededRng& rng) {
  const std::size_t k = stats.dim();
  const Matrix l = psd_factor(stats);
  Matrix out(n, k);
  Vector xi(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& x : xi) x = rng.normal();
    auto row = out.row(i);
    for (std::size_t a = 0; a < k; ++a) {
      double acc = stats.mean()[a];
      for (std::size_t b = 0; b < k; ++b) acc += l(a, b) * xi[b];
      row[a] = acc;
    }
  }
  return out;
}

// ||a - b||_F / max(||b||_F, tiny); used to compare moment estimates.
inline double relative_frobenius_error(const Matrix& a, const Matrix& b) {
  return frobenius(a - b) / std::max(frobenius(b), 1e-300);
}

}  // namespace hers::linalg
