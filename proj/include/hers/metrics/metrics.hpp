#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hers/linalg/eigen.hpp"
#include "hers/linalg/gaussian.hpp"
#include "hers/linalg/matrix.hpp"
#include "hers/rng.hpp"

namespace hers::metrics {

using linalg::GaussianStats;
using linalg::Matrix;
using linalg::Vector;

/// Fixed linear feature map with orthonormal rows, standing in for a learned
/// image encoder. Rows come from Gram-Schmidt (two passes) on a seeded
/// Gaussian k x d matrix.
class FeatureProjector {
 public:
  FeatureProjector(std::size_t k, std::size_t d, std::uint64_t seed) : proj_(k, d) {
    if (k == 0 || k > d) {
      throw Error("FeatureProjector: need 1 <= k <= d, got k=" + std::to_string(k) +
                  " d=" + std::to_string(d));
    }
    SeededRng rng(seed);
    for (double& v : proj_.data()) v = rng.normal();
    for (std::size_t i = 0; i < k; ++i) {
      auto ri = proj_.row(i);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < i; ++j) {
          auto rj = proj_.row(j);
          const double c = linalg::dot(ri, rj);
          for (std::size_t t = 0; t < d; ++t) ri[t] -= c * rj[t];
        }
      }
      const double n = linalg::norm(ri);
      if (n < 1e-12) throw Error("FeatureProjector: degenerate random draw");
      for (double& v : ri) v /= n;
    }
  }

  explicit FeatureProjector(Matrix proj) : proj_(std::move(proj)) {}

  const Matrix& matrix() const noexcept { return proj_; }
  std::size_t out_dim() const noexcept { return proj_.rows(); }
  std::size_t in_dim() const noexcept { return proj_.cols(); }

  Vector project(std::span<const double> x) const { return linalg::matvec(proj_, x); }

  // Rows of `samples` (n x d) mapped to rows of the result (n x k).
  Matrix project(const Matrix& samples) const {
    if (samples.cols() != in_dim()) {
      throw ShapeError("FeatureProjector: samples " + samples.shape() + " for projection " +
                       proj_.shape());
    }
    return linalg::matmul(samples, linalg::transpose(proj_));
  }

 private:
  Matrix proj_;
};

namespace detail {
inline void require_same_dim(const GaussianStats& a, const GaussianStats& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw ShapeError(std::string(what) + ": dimension " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
}
}  // namespace detail

/// Fréchet distance between Gaussian moment summaries:
/// ||μr - μg||² + tr(Σr + Σg - 2 (Σr Σg)^{1/2}).
/// The trace of the square root is taken from the symmetric, similar matrix
/// Σr^{1/2} Σg Σr^{1/2}.
inline double fid(const GaussianStats& real, const GaussianStats& gen) {
  detail::require_same_dim(real, gen, "fid");
  const Matrix s = linalg::spectral_map(real.eig(), [](double l) { return std::sqrt(l); });
  const Matrix m = linalg::symmetrized(linalg::matmul(linalg::matmul(s, gen.cov()), s));
  const auto eig = linalg::sym_eig(m);
  const double scale = std::max(1.0, linalg::frobenius(m));
  double tr_sqrt = 0.0;
  for (double l : eig.values) {
    if (l < -linalg::kPsdTolerance * scale) {
      std::ostringstream os;
      os << "fid: covariance product has negative eigenvalue " << l;
      throw Error(os.str());
    }
    tr_sqrt += std::sqrt(std::max(l, 0.0));
  }
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < real.dim(); ++i) {
    const double d = real.mean()[i] - gen.mean()[i];
    mean_sq += d * d;
  }
  const double d = mean_sq + linalg::trace(real.cov()) + linalg::trace(gen.cov()) - 2.0 * tr_sqrt;
  if (d < 0.0) {
    if (d >= -1e-8) return 0.0;
    std::ostringstream os;
    os << "fid: negative distance " << d;
    throw Error(os.str());
  }
  return d;
}

/// KL(p || q) between Gaussians. q's covariance must be positive definite;
/// a singular p covariance is regularized by 1e-10 I in its log-determinant.
inline double kl_gaussian(const GaussianStats& p, const GaussianStats& q) {
  detail::require_same_dim(p, q, "kl_gaussian");
  const auto& eq = q.eig();
  const double min_q = *std::min_element(eq.values.begin(), eq.values.end());
  if (!(min_q > 1e-10)) {
    std::ostringstream os;
    os << "kl_gaussian: q covariance is singular (min eigenvalue " << min_q << ")";
    throw Error(os.str());
  }
  const std::size_t k = p.dim();
  const Matrix q_inv = linalg::spectral_map(eq, [](double l) { return 1.0 / l; });

  double tr = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) tr += q_inv(i, j) * p.cov()(j, i);

  Vector diff(k);
  for (std::size_t i = 0; i < k; ++i) diff[i] = q.mean()[i] - p.mean()[i];
  const double quad = linalg::dot(diff, linalg::matvec(q_inv, diff));

  double logdet_q = 0.0;
  for (double l : eq.values) logdet_q += std::log(l);
  const auto& ep = p.eig().values;
  const bool singular_p = *std::min_element(ep.begin(), ep.end()) <= 0.0;
  double logdet_p = 0.0;
  for (double l : ep) logdet_p += std::log(singular_p ? l + 1e-10 : l);

  const double kl = 0.5 * (tr + quad - static_cast<double>(k) + logdet_q - logdet_p);
  if (kl < 0.0) {
    if (kl >= -1e-10) return 0.0;
    std::ostringstream os;
    os << "kl_gaussian: negative divergence " << kl;
    throw Error(os.str());
  }
  return kl;
}

struct CalibrationPoint {
  double fid = 0.0;
  double kl = 0.0;
  double excess = 0.0;  // observed excess loss
};

/// ε(FID, KL) = a·FID + b·KL with a, b >= 0.
struct EpsilonModel {
  double a = 0.0;
  double b = 0.0;
  double residual = 0.0;  // Σ (a·fid + b·kl - excess)²
  std::size_t sweeps = 0;
  std::vector<double> objective_trace;  // residual after each sweep

  double operator()(double fid_value, double kl_value) const { return a * fid_value + b * kl_value; }
};

/// Nonnegative least squares for (a, b) by projected coordinate descent on
/// the normal equations. Each coordinate update is an exact 1-D minimization
/// clipped at zero, so the objective never increases. Stops when the
/// projected gradient is below 1e-10 · max(1, |Xᵀy|∞).
inline EpsilonModel fit_epsilon(const std::vector<CalibrationPoint>& points,
                                std::size_t max_sweeps = 1'000'000) {
  if (points.size() < 2) {
    throw Error("fit_epsilon: need at least 2 calibration points, got " + std::to_string(points.size()));
  }
  double g[2][2] = {{0, 0}, {0, 0}};
  double h[2] = {0, 0};
  double yy = 0.0;
  for (const auto& p : points) {
    const double x[2] = {p.fid, p.kl};
    for (int i = 0; i < 2; ++i) {
      h[i] += x[i] * p.excess;
      for (int j = 0; j < 2; ++j) g[i][j] += x[i] * x[j];
    }
    yy += p.excess * p.excess;
  }
  const double tol = 1e-10 * std::max({1.0, std::abs(h[0]), std::abs(h[1])});
  double x[2] = {0.0, 0.0};
  auto objective = [&] {
    return x[0] * x[0] * g[0][0] + 2.0 * x[0] * x[1] * g[0][1] + x[1] * x[1] * g[1][1] -
           2.0 * (x[0] * h[0] + x[1] * h[1]) + yy;
  };
  auto projected_gradient = [&] {
    double m = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double gi = g[i][0] * x[0] + g[i][1] * x[1] - h[i];
      m = std::max(m, std::abs(x[i] > 0.0 ? gi : std::min(0.0, gi)));
    }
    return m;
  };

  EpsilonModel model;
  while (projected_gradient() >= tol && model.sweeps < max_sweeps) {
    for (int i = 0; i < 2; ++i) {
      if (g[i][i] <= 0.0) {
        x[i] = 0.0;
        continue;
      }
      const double gi = g[i][0] * x[0] + g[i][1] * x[1] - h[i];
      x[i] = std::max(0.0, x[i] - gi / g[i][i]);
    }
    ++model.sweeps;
    model.objective_trace.push_back(std::max(0.0, objective()));
  }
  model.a = x[0];
  model.b = x[1];
  double r = 0.0;
  for (const auto& p : points) {
    const double e = model(p.fid, p.kl) - p.excess;
    r += e * e;
  }
  model.residual = r;
  return model;
}

struct RiskCheck {
  double epsilon = 0.0;
  double slack = 0.0;  // real_loss + ε - gen_loss
  bool satisfied = false;
};

/// Evaluates E_gen[L] <= E_real[L] + ε(FID, KL).
inline RiskCheck risk_bound_check(double fid_value, double kl_value, const EpsilonModel& eps,
                                  double gen_loss, double real_loss) {
  if (!std::isfinite(gen_loss) || !std::isfinite(real_loss)) {
    throw Error("risk_bound_check: losses must be finite");
  }
  RiskCheck c;
  c.epsilon = eps(fid_value, kl_value);
  c.slack = real_loss + c.epsilon - gen_loss;
  c.satisfied = c.slack >= 0.0;
  return c;
}

/// Multinomial logistic regression on standardized features, trained by
/// full-batch gradient descent from zero weights.
class LogisticProbe {
 public:
  struct Options {
    std::size_t iterations = 500;
    double lr = 0.5;
    double l2 = 1e-4;
  };

  LogisticProbe(const Matrix& features, const std::vector<std::size_t>& labels, std::size_t classes)
      : LogisticProbe(features, labels, classes, Options{}) {}

  LogisticProbe(const Matrix& features, const std::vector<std::size_t>& labels, std::size_t classes,
                Options opt)
      : classes_(classes), mean_(features.cols(), 0.0), scale_(features.cols(), 1.0),
        w_(classes, features.cols()), b_(classes, 0.0) {
    const std::size_t n = features.rows();
    const std::size_t k = features.cols();
    if (n == 0 || labels.size() != n) throw Error("LogisticProbe: labels do not match features");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) mean_[j] += features(i, j);
    for (double& m : mean_) m /= static_cast<double>(n);
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (features(i, j) - mean_[j]) * (features(i, j) - mean_[j]);
      s = std::sqrt(s / static_cast<double>(n));
      scale_[j] = s > 1e-12 ? s : 1.0;
    }
    Matrix x(n, k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) x(i, j) = (features(i, j) - mean_[j]) / scale_[j];

    Matrix gw(classes, k);
    Vector gb(classes);
    Vector p(classes);
    for (std::size_t it = 0; it < opt.iterations; ++it) {
      std::fill(gw.data().begin(), gw.data().end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        softmax(x.row(i), p);
        p[labels[i]] -= 1.0;
        linalg::add_outer(gw, p, x.row(i));
        for (std::size_t c = 0; c < classes; ++c) gb[c] += p[c];
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      auto wd = w_.data();
      auto gwd = gw.data();
      for (std::size_t t = 0; t < wd.size(); ++t) wd[t] -= opt.lr * (gwd[t] * inv_n + opt.l2 * wd[t]);
      for (std::size_t c = 0; c < classes; ++c) b_[c] -= opt.lr * gb[c] * inv_n;
    }
  }

  std::size_t predict(std::span<const double> feature) const {
    Vector z(feature.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = (feature[j] - mean_[j]) / scale_[j];
    Vector p(classes_);
    softmax(z, p);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }

  // Fraction of rows of `features` predicted as `label`.
  double accuracy(const Matrix& features, std::size_t label) const {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < features.rows(); ++i) hit += predict(features.row(i)) == label;
    return static_cast<double>(hit) / static_cast<double>(features.rows());
  }

 private:
  void softmax(std::span<const double> x, Vector& p) const {
    double mx = -1e300;
    for (std::size_t c = 0; c < classes_; ++c) {
      double z = b_[c];
      auto wr = w_.row(c);
      for (std::size_t j = 0; j < x.size(); ++j) z += wr[j] * x[j];
      p[c] = z;
      mx = std::max(mx, z);
    }
    double s = 0.0;
    for (double& v : p) s += (v = std::exp(v - mx));
    for (double& v : p) v /= s;
  }

  std::size_t classes_;
  Vector mean_;
  Vector scale_;
  Matrix w_;
  Vector b_;
};

/// Even rows train the probe, odd rows are held out.
struct RealSplit {
  std::vector<Matrix> train;
  std::vector<Matrix> holdout;
};

inline RealSplit split_real(const std::vector<Matrix>& real) {
  RealSplit s;
  for (const auto& m : real) {
    Matrix tr((m.rows() + 1) / 2, m.cols());
    Matrix ho(m.rows() / 2, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      auto dst = (i % 2 == 0) ? tr.row(i / 2) : ho.row(i / 2);
      std::copy(m.row(i).begin(), m.row(i).end(), dst.begin());
    }
    s.train.push_back(std::move(tr));
    s.holdout.push_back(std::move(ho));
  }
  return s;
}

struct ProbeResult {
  double accuracy = 0.0;          // generated samples vs their conditioning domain
  double real_holdout_accuracy = 0.0;
  std::vector<double> per_domain;  // generated accuracy per domain
};

/// Trains a probe on projected real samples (one matrix per domain, even
/// rows) and scores generated samples against the domain they were
/// conditioned on. Accuracy is the mean of per-domain accuracies.
inline ProbeResult probe_faithfulness(const FeatureProjector& projector,
                                      const std::vector<Matrix>& real,
                                      const std::vector<Matrix>& gen) {
  if (real.size() < 2 || real.size() != gen.size()) {
    throw Error("probe_faithfulness: need >= 2 domains with real and generated samples each");
  }
  for (std::size_t t = 0; t < real.size(); ++t) {
    if (real[t].rows() < 10 || gen[t].rows() < 10) {
      throw Error("probe_faithfulness: domain " + std::to_string(t) + " has " +
                  std::to_string(real[t].rows()) + " real and " + std::to_string(gen[t].rows()) +
                  " generated samples; need at least 10 of each");
    }
  }
  const RealSplit split = split_real(real);
  std::size_t n = 0;
  for (const auto& m : split.train) n += m.rows();
  Matrix features(n, projector.out_dim());
  std::vector<std::size_t> labels;
  std::size_t row = 0;
  for (std::size_t t = 0; t < split.train.size(); ++t) {
    const Matrix f = projector.project(split.train[t]);
    for (std::size_t i = 0; i < f.rows(); ++i, ++row) {
      std::copy(f.row(i).begin(), f.row(i).end(), features.row(row).begin());
      labels.push_back(t);
    }
  }
  const LogisticProbe probe(features, labels, real.size());

  ProbeResult r;
  for (std::size_t t = 0; t < real.size(); ++t) {
    const double acc = probe.accuracy(projector.project(gen[t]), t);
    r.per_domain.push_back(acc);
    r.accuracy += acc;
    r.real_holdout_accuracy += probe.accuracy(projector.project(split.holdout[t]), t);
  }
  r.accuracy /= static_cast<double>(real.size());
  r.real_holdout_accuracy /= static_cast<double>(real.size());
  return r;
}

}  // namespace hers::metrics
