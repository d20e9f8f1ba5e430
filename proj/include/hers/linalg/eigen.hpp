#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "hers/linalg/matrix.hpp"

namespace hers::linalg {

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kPsdTolerance = 1e-8;

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // column j pairs with values[j]
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

inline void require_symmetric(const Matrix& m, const char* what) {
  if (!m.square()) throw ShapeError(std::string(what) + ": matrix " + m.shape() + " is not square");
  const double asym = max_asymmetry(m);
  if (asym > kSymmetryTolerance) {
    std::ostringstream os;
    os << what << ": matrix is not symmetric (max |m_ij - m_ji| = " << asym << ")";
    throw Error(os.str());
  }
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// 1e-12 * max(1, ||m||_F), giving up after `max_sweeps`. Eigenvalues are
/// returned in descending order with eigenvectors as matching columns.
inline SymEig sym_eig(const Matrix& m, int max_sweeps = 100) {
  detail::require_symmetric(m, "sym_eig");
  const std::size_t n = m.rows();
  Matrix a = symmetrized(m);
  Matrix v = Matrix::identity(n);
  const double tol = 1e-12 * std::max(1.0, frobenius(a));

  int sweep = 0;
  double off = detail::off_diagonal_norm(a);
  while (off >= tol) {
    if (sweep++ >= max_sweeps) {
      std::ostringstream os;
      os << "sym_eig: no convergence after " << max_sweeps
         << " sweeps (off-diagonal norm " << off << ")";
      throw Error(os.str());
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Rotation angle that zeroes a(p, q); smaller root for stability.
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    off = detail::off_diagonal_norm(a);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymEig out{Vector(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

// V diag(f(λ)) Vᵀ
template <typename F>
Matrix spectral_map(const SymEig& eig, F&& f) {
  const std::size_t n = eig.values.size();
  Matrix out(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double fj = f(eig.values[j]);
    if (fj == 0.0) continue;
    for (std::size_t r = 0; r < n; ++r) {
      const double vr = eig.vectors(r, j) * fj;
      if (vr == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) out(r, c) += vr * eig.vectors(c, j);
    }
  }
  return symmetrized(out);
}

/// Eigenvalues of a PSD matrix with values in [-1e-8, 0) clamped to zero.
/// Throws if any eigenvalue is more negative than that.
inline SymEig psd_eig(const Matrix& m, const char* what = "psd_eig") {
  SymEig eig = sym_eig(m);
  for (double& l : eig.values) {
    if (l < -kPsdTolerance) {
      std::ostringstream os;
      os << what << ": matrix is not PSD (eigenvalue " << l << ")";
      throw Error(os.str());
    }
    if (l < 0.0) l = 0.0;
  }
  return eig;
}

/// Principal square root of a symmetric PSD matrix.
inline Matrix sqrtm_psd(const Matrix& m) {
  const SymEig eig = psd_eig(m, "sqrtm_psd");
  return spectral_map(eig, [](double l) { return std::sqrt(l); });
}

}  // namespace hers::linalg
