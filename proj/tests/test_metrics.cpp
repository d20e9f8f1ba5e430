#include <gtest/gtest.h>

#include <cmath>

#include "hers/metrics/metrics.hpp"
#include "support.hpp"

using namespace hers;
using namespace hers::metrics;
using linalg::Matrix;
using linalg::Vector;
namespace fx = hers::fixtures;

namespace {

GaussianStats random_stats(std::size_t k, SeededRng& rng, double ridge = 0.1) {
  Vector mu(k);
  for (double& v : mu) v = rng.normal();
  return {mu, fx::random_psd(k, rng, ridge)};
}

double det2(const Matrix& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

// 2x2 closed form: a matrix with nonnegative real eigenvalues l1, l2 has
// tr sqrt = sqrt(l1) + sqrt(l2) = sqrt(tr + 2 sqrt(det)).
double fid_2d(const GaussianStats& r, const GaussianStats& g) {
  const Matrix p = fx::naive_matmul(r.cov(), g.cov());
  const double tr_sqrt = std::sqrt(p(0, 0) + p(1, 1) + 2.0 * std::sqrt(std::max(0.0, det2(p))));
  const double dm0 = r.mean()[0] - g.mean()[0];
  const double dm1 = r.mean()[1] - g.mean()[1];
  return dm0 * dm0 + dm1 * dm1 + r.cov()(0, 0) + r.cov()(1, 1) + g.cov()(0, 0) + g.cov()(1, 1) -
         2.0 * tr_sqrt;
}

// 2x2 closed form with the explicit adjugate inverse.
double kl_2d(const GaussianStats& p, const GaussianStats& q) {
  const Matrix& s = q.cov();
  const double d = det2(s);
  const Matrix inv{{s(1, 1) / d, -s(0, 1) / d}, {-s(1, 0) / d, s(0, 0) / d}};
  const Matrix ip = fx::naive_matmul(inv, p.cov());
  const double dm[2] = {q.mean()[0] - p.mean()[0], q.mean()[1] - p.mean()[1]};
  double quad = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) quad += dm[i] * inv(i, j) * dm[j];
  return 0.5 * (ip(0, 0) + ip(1, 1) + quad - 2.0 + std::log(d / det2(p.cov())));
}

Matrix cluster(std::size_t n, std::size_t d, double center, SeededRng& rng) {
  Matrix m(n, d);
  for (double& v : m.data()) v = center + 0.5 * rng.normal();
  return m;
}

}  // namespace

TEST(Projector, RowsOrthonormal) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const FeatureProjector p(4, 8, seed);
    const Matrix g = linalg::matmul(p.matrix(), linalg::transpose(p.matrix()));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g(i, j), i == j ? 1.0 : 0.0, 1e-10);
  }
  EXPECT_THROW(FeatureProjector(9, 8, 1), Error);
  EXPECT_THROW(FeatureProjector(0, 8, 1), Error);
}

TEST(Projector, Contraction) {
  const FeatureProjector p(4, 8, 17);
  SeededRng rng(18);
  for (int k = 0; k < 100; ++k) {
    Vector x(8), y(8);
    for (double& v : x) v = rng.normal();
    for (double& v : y) v = 3.0 * rng.normal();
    Vector dx(8), dp(4);
    const Vector px = p.project(x), py = p.project(y);
    for (std::size_t i = 0; i < 8; ++i) dx[i] = x[i] - y[i];
    for (std::size_t i = 0; i < 4; ++i) dp[i] = px[i] - py[i];
    EXPECT_LE(linalg::norm(dp), linalg::norm(dx) + 1e-10);
  }
}

TEST(Projector, MatrixProjectionMatchesRows) {
  const FeatureProjector p(3, 5, 4);
  SeededRng rng(5);
  const Matrix s = fx::random_matrix(7, 5, rng);
  const Matrix out = p.project(s);
  for (std::size_t i = 0; i < 7; ++i) {
    const Vector r = p.project(s.row(i));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out(i, j), r[j], 1e-14);
  }
  EXPECT_THROW(p.project(Matrix(2, 4)), ShapeError);
}

TEST(Fid, SelfDistanceIsZero) {
  SeededRng rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto s = random_stats(4, rng);
    EXPECT_LT(fid(s, s), 1e-8);
  }
}

TEST(Fid, OneDimClosedForm) {
  EXPECT_NEAR(fid({{0.0}, Matrix{{1.0}}}, {{1.0}, Matrix{{1.0}}}), 1.0, 1e-12);
  // (μ1-μ2)² + (σ1-σ2)²
  EXPECT_NEAR(fid({{2.0}, Matrix{{4.0}}}, {{-1.0}, Matrix{{9.0}}}), 9.0 + 1.0, 1e-12);
}

TEST(Fid, MatchesTwoByTwoClosedForm) {
  SeededRng rng(2);
  for (int k = 0; k < 50; ++k) {
    const auto a = random_stats(2, rng, 0.01);
    const auto b = random_stats(2, rng, 0.01);
    EXPECT_NEAR(fid(a, b), fid_2d(a, b), 1e-8 * std::max(1.0, fid_2d(a, b)));
  }
}

TEST(Fid, SymmetricAndNonnegative) {
  SeededRng rng(3);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_stats(4, rng, 0.0);
    const auto b = random_stats(4, rng, 0.0);
    const double ab = fid(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, fid(b, a), 1e-8 * std::max(1.0, ab));
  }
}

TEST(Fid, HandlesSingularCovariances) {
  const GaussianStats z({0.0, 0.0}, Matrix(2, 2));
  const GaussianStats s({1.0, 0.0}, Matrix{{4.0, 0.0}, {0.0, 0.0}});
  EXPECT_NEAR(fid(z, s), 1.0 + 4.0, 1e-12);
  EXPECT_THROW(fid(z, GaussianStats({0.0}, Matrix{{1.0}})), ShapeError);
}

TEST(Kl, SelfDivergenceIsZero) {
  SeededRng rng(4);
  for (int k = 0; k < 20; ++k) {
    const auto s = random_stats(4, rng);
    EXPECT_LT(kl_gaussian(s, s), 1e-10);
  }
}

TEST(Kl, UnitShiftHandCase) {
  EXPECT_NEAR(kl_gaussian({{0.0}, Matrix{{1.0}}}, {{1.0}, Matrix{{1.0}}}), 0.5, 1e-14);
}

TEST(Kl, MatchesTwoByTwoClosedForm) {
  SeededRng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto p = random_stats(2, rng, 0.1);
    const auto q = random_stats(2, rng, 0.1);
    EXPECT_NEAR(kl_gaussian(p, q), kl_2d(p, q), 1e-9 * std::max(1.0, kl_2d(p, q)));
  }
}

TEST(Kl, NonnegativeAndAsymmetric) {
  SeededRng rng(6);
  for (int k = 0; k < 100; ++k) {
    const auto p = random_stats(3, rng, 0.05);
    const auto q = random_stats(3, rng, 0.05);
    EXPECT_GE(kl_gaussian(p, q), 0.0);
  }
  const GaussianStats p({0.0}, Matrix{{1.0}});
  const GaussianStats q({0.0}, Matrix{{4.0}});
  // 0.5 (σp²/σq² - 1 + ln σq²/σp²)
  EXPECT_NEAR(kl_gaussian(p, q), 0.5 * (0.25 - 1.0 + std::log(4.0)), 1e-14);
  EXPECT_NEAR(kl_gaussian(q, p), 0.5 * (4.0 - 1.0 + std::log(0.25)), 1e-14);
  EXPECT_GT(std::abs(kl_gaussian(p, q) - kl_gaussian(q, p)), 0.1);
}

TEST(Kl, SingularQRejectedSingularPRegularized) {
  const GaussianStats sing({0.0, 0.0}, Matrix{{1.0, 0.0}, {0.0, 0.0}});
  const GaussianStats unit({0.0, 0.0}, Matrix{{1.0, 0.0}, {0.0, 1.0}});
  EXPECT_THROW(kl_gaussian(unit, sing), Error);
  // ln det(I) - ln(1 · 1e-10) over two; trace and mean terms cancel with k.
  EXPECT_NEAR(kl_gaussian(sing, unit), 0.5 * (1.0 - 2.0 - std::log(1e-10)), 1e-6);
}

TEST(FitEpsilon, ZeroTargetGivesZero) {
  const auto m = fit_epsilon({{1.0, 2.0, 0.0}, {3.0, 0.5, 0.0}, {0.2, 0.1, 0.0}});
  EXPECT_EQ(m.a, 0.0);
  EXPECT_EQ(m.b, 0.0);
}

TEST(FitEpsilon, RecoversExactLinearModel) {
  std::vector<CalibrationPoint> pts;
  SeededRng rng(7);
  for (int i = 0; i < 12; ++i) {
    const double f = 5.0 * rng.uniform(), k = 2.0 * rng.uniform();
    pts.push_back({f, k, 2.0 * f + 3.0 * k});
  }
  const auto m = fit_epsilon(pts);
  EXPECT_NEAR(m.a, 2.0, 1e-6);
  EXPECT_NEAR(m.b, 3.0, 1e-6);
  EXPECT_LT(m.residual, 1e-10);
}

TEST(FitEpsilon, NegativeSlopeClampsToZero) {
  const auto m = fit_epsilon({{1.0, 0.0, -1.0}, {2.0, 0.0, -2.0}, {3.0, 0.0, -3.0}});
  EXPECT_EQ(m.a, 0.0);
  EXPECT_EQ(m.b, 0.0);
  EXPECT_NEAR(m.residual, 14.0, 1e-12);
}

TEST(FitEpsilon, MatchesActiveSetOracle) {
  // Two-variable NNLS: the optimum is the unconstrained solution if it is
  // nonnegative, otherwise the better of the two one-variable fits.
  SeededRng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<CalibrationPoint> pts;
    const double ta = rng.normal(), tb = rng.normal();
    for (int i = 0; i < 8; ++i) {
      const double f = rng.uniform() * 3.0, k = rng.uniform() * 3.0;
      pts.push_back({f, k, ta * f + tb * k + 0.3 * rng.normal()});
    }
    double g00 = 0, g01 = 0, g11 = 0, h0 = 0, h1 = 0;
    for (const auto& p : pts) {
      g00 += p.fid * p.fid;
      g01 += p.fid * p.kl;
      g11 += p.kl * p.kl;
      h0 += p.fid * p.excess;
      h1 += p.kl * p.excess;
    }
    auto sse = [&](double a, double b) {
      double s = 0.0;
      for (const auto& p : pts) s += (a * p.fid + b * p.kl - p.excess) * (a * p.fid + b * p.kl - p.excess);
      return s;
    };
    const double det = g00 * g11 - g01 * g01;
    double best_a = 0.0, best_b = 0.0;
    const double ua = (g11 * h0 - g01 * h1) / det, ub = (g00 * h1 - g01 * h0) / det;
    if (ua >= 0 && ub >= 0) {
      best_a = ua;
      best_b = ub;
    } else {
      const double oa = std::max(0.0, h0 / g00), ob = std::max(0.0, h1 / g11);
      if (sse(oa, 0.0) <= sse(0.0, ob)) best_a = oa;
      else best_b = ob;
    }
    const auto m = fit_epsilon(pts);
    EXPECT_GE(m.a, 0.0);
    EXPECT_GE(m.b, 0.0);
    EXPECT_NEAR(m.residual, sse(best_a, best_b), 1e-8 * std::max(1.0, sse(best_a, best_b)));
    for (std::size_t i = 1; i < m.objective_trace.size(); ++i)
      EXPECT_LE(m.objective_trace[i], m.objective_trace[i - 1] * (1.0 + 1e-12) + 1e-12);
  }
}

TEST(FitEpsilon, NeedsTwoPoints) {
  EXPECT_THROW(fit_epsilon({{1.0, 1.0, 1.0}}), Error);
  EXPECT_THROW(fit_epsilon({}), Error);
}

TEST(RiskBound, Arithmetic) {
  const EpsilonModel zero;
  auto c = risk_bound_check(3.0, 1.0, zero, 2.0, 2.0);
  EXPECT_TRUE(c.satisfied);
  EXPECT_EQ(c.slack, 0.0);

  EpsilonModel half;
  half.a = 0.5;
  c = risk_bound_check(1.0, 7.0, half, 3.0, 2.0);
  EXPECT_DOUBLE_EQ(c.epsilon, 0.5);
  EXPECT_DOUBLE_EQ(c.slack, -0.5);
  EXPECT_FALSE(c.satisfied);
  EXPECT_THROW(risk_bound_check(0, 0, half, std::nan(""), 1.0), Error);
}

TEST(Probe, CopiedRealEqualsHeldOutAccuracy) {
  SeededRng rng(9);
  const FeatureProjector p(4, 8, 10);
  std::vector<Matrix> real;
  for (int t = 0; t < 3; ++t) real.push_back(cluster(60, 8, 0.4 * t, rng));
  const auto split = split_real(real);
  const auto r = probe_faithfulness(p, real, split.holdout);
  EXPECT_NEAR(r.accuracy, r.real_holdout_accuracy, 1e-15);
  EXPECT_GT(r.accuracy, 0.5);
  EXPECT_LE(r.accuracy, 1.0);
}

TEST(Probe, ConditionBlindGeneratorIsAtChance) {
  // Every domain receives the same generated set, so per-domain hit rates sum to 1.
  SeededRng rng(11);
  const FeatureProjector p(4, 8, 12);
  std::vector<Matrix> real;
  for (int t = 0; t < 3; ++t) real.push_back(cluster(60, 8, 1.0 * t, rng));
  const Matrix shared = cluster(90, 8, 1.0, rng);
  const auto r = probe_faithfulness(p, real, {shared, shared, shared});
  EXPECT_NEAR(r.accuracy, 1.0 / 3.0, 1e-12);
}

TEST(Probe, SeparableDomainsScoreHigh) {
  SeededRng rng(13);
  const FeatureProjector p(4, 8, 14);
  std::vector<Matrix> real, gen;
  for (int t = 0; t < 3; ++t) {
    real.push_back(cluster(60, 8, 4.0 * t, rng));
    gen.push_back(cluster(30, 8, 4.0 * t, rng));
  }
  const auto r = probe_faithfulness(p, real, gen);
  EXPECT_GT(r.accuracy, 0.95);
  ASSERT_EQ(r.per_domain.size(), 3u);
}

TEST(Probe, RejectsDegenerateInputs) {
  SeededRng rng(15);
  const FeatureProjector p(4, 8, 16);
  const Matrix ok = cluster(20, 8, 0.0, rng);
  EXPECT_THROW(probe_faithfulness(p, {ok}, {ok}), Error);
  EXPECT_THROW(probe_faithfulness(p, {ok, ok}, {ok}), Error);
  EXPECT_THROW(probe_faithfulness(p, {ok, cluster(5, 8, 0.0, rng)}, {ok, ok}), Error);
}

TEST(SplitReal, AlternatesRows) {
  const Matrix m{{0}, {1}, {2}, {3}, {4}};
  const auto s = split_real({m});
  EXPECT_EQ(s.train[0], (Matrix{{0}, {2}, {4}}));
  EXPECT_EQ(s.holdout[0], (Matrix{{1}, {3}}));
}
