#include <gtest/gtest.h>

#include "hers/experts/experts.hpp"
#include "hers/linalg/eigen.hpp"
#include "support.hpp"

using namespace hers;
using namespace hers::experts;
using linalg::Matrix;
namespace fx = hers::fixtures;

namespace {

net::MlpDenoiser small_base(std::uint64_t seed = 3, net::MlpShape shape = {4, 2, 12, 2}) {
  SeededRng rng(seed);
  return net::MlpDenoiser::create(shape, rng);
}

// Rank-`r` random experts on every hidden layer of `base`.
ExpertSet random_experts(const net::MlpDenoiser& base, std::size_t count, std::size_t r, SeededRng& rng) {
  ExpertSet set{base, {}};
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<net::LoRAAdapter> list;
    for (const auto& name : base.hidden_layer_names()) {
      const auto& l = base.layer(name);
      list.push_back({name, "d" + std::to_string(t), fx::random_matrix(r, l.d_in(), rng),
                      fx::random_matrix(l.d_out(), r, rng)});
    }
    set.adapters["d" + std::to_string(t)] = std::move(list);
  }
  return set;
}

// Two rank-1 experts on a 2x2 layer: e1 = [1,0]ᵀ[1,0], e2 = [0,1]ᵀ[0,1].
ExpertSet rank1_pair() {
  const auto base = small_base(1, {2, 1, 2, 1});
  const std::string layer = base.hidden_layer_names().at(0);
  ExpertSet set{base, {}};
  set.adapters["one"] = {{layer, "one", Matrix{{1, 0}}, Matrix{{1}, {0}}}};
  set.adapters["two"] = {{layer, "two", Matrix{{0, 1}}, Matrix{{0}, {1}}}};
  return set;
}

std::vector<diffusion::LabeledSample> domain_data(std::size_t n, std::size_t domain, std::size_t d,
                                                  SeededRng& rng) {
  std::vector<diffusion::LabeledSample> out(n);
  for (auto& s : out) {
    s.domain = domain;
    s.x.resize(d);
    for (std::size_t j = 0; j < d; ++j) s.x[j] = 0.5 * rng.normal() + (j % 2 ? 1.5 : -1.0);
  }
  return out;
}

ExpertConfig quick_config(std::size_t steps) {
  ExpertConfig c;
  c.train = {steps, 16, 3e-3, 1e-4, 11, 64};
  c.rank = 2;
  c.init_seed = 5;
  return c;
}

}  // namespace

TEST(Merge, Rank1PairHandFixture) {
  const auto set = rank1_pair();
  const auto merged = merge_experts(set);
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].a, (Matrix{{0.5, 0.5}}));
  EXPECT_EQ(merged[0].b, (Matrix{{0.5}, {0.5}}));
  EXPECT_EQ(merged[0].delta(), (Matrix{{0.25, 0.25}, {0.25, 0.25}}));
  EXPECT_EQ(merged[0].domain, "merged");

  const auto oracle = merge_deltas_oracle(set);
  EXPECT_EQ(oracle.at(merged[0].layer_name), (Matrix{{0.5, 0.0}, {0.0, 0.5}}));
  EXPECT_DOUBLE_EQ(merge_discrepancy(set).at(merged[0].layer_name), 0.5);
}

TEST(Merge, SingletonIsExact) {
  SeededRng rng(4);
  const auto set = random_experts(small_base(), 1, 3, rng);
  const auto merged = merge_experts(set);
  const auto& only = set.adapters.begin()->second;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    EXPECT_EQ(merged[i].a, only[i].a);
    EXPECT_EQ(merged[i].b, only[i].b);
  }
  const auto oracle = merge_deltas_oracle(set);
  for (const auto& m : merged) EXPECT_EQ(oracle.at(m.layer_name), m.delta());
  for (const auto& [name, d] : merge_discrepancy(set)) EXPECT_LE(d, 1e-12) << name;
}

TEST(Merge, IdenticalExpertsReproduceEach) {
  SeededRng rng(5);
  auto set = random_experts(small_base(), 1, 3, rng);
  const auto one = set.adapters.begin()->second;
  set.adapters["x"] = one;
  set.adapters["y"] = one;
  const auto merged = merge_experts(set);
  const auto oracle = merge_deltas_oracle(set);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    EXPECT_LE(linalg::max_abs_diff(merged[i].a, one[i].a), 1e-12);
    EXPECT_LE(linalg::max_abs_diff(merged[i].b, one[i].b), 1e-12);
    EXPECT_LE(linalg::max_abs_diff(oracle.at(one[i].layer_name), merged[i].delta()), 1e-12);
  }
  for (const auto& [name, d] : merge_discrepancy(set)) EXPECT_LE(d, 1e-12) << name;
}

TEST(Merge, FactorMeansMatchElementwiseOracle) {
  SeededRng rng(6);
  const auto set = random_experts(small_base(), 3, 2, rng);
  const auto merged = merge_experts(set);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    Matrix a(merged[i].a.rows(), merged[i].a.cols());
    Matrix b(merged[i].b.rows(), merged[i].b.cols());
    for (const auto& [d, list] : set.adapters) {
      a = a + list[i].a;
      b = b + list[i].b;
    }
    EXPECT_LE(linalg::max_abs_diff(merged[i].a, (1.0 / 3.0) * a), 1e-14);
    EXPECT_LE(linalg::max_abs_diff(merged[i].b, (1.0 / 3.0) * b), 1e-14);
  }
}

TEST(Merge, LinearInEachFactor) {
  SeededRng rng(7);
  auto set = random_experts(small_base(), 3, 2, rng);
  const auto before = merge_experts(set);
  // Powers of two keep the scaling exact in floating point.
  for (auto& [d, list] : set.adapters)
    for (auto& a : list) a.a = 4.0 * a.a;
  auto after = merge_experts(set);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(after[i].a, 4.0 * before[i].a);
    EXPECT_EQ(after[i].b, before[i].b);
  }
  for (auto& [d, list] : set.adapters)
    for (auto& a : list) a.b = 0.5 * a.b;
  after = merge_experts(set);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(after[i].b, 0.5 * before[i].b);
}

TEST(Merge, EffectiveDeltaRankBound) {
  SeededRng rng(8);
  const std::size_t r = 2;
  const auto merged = merge_experts(random_experts(small_base(), 3, r, rng));
  for (const auto& m : merged) {
    const Matrix d = m.delta();
    const auto eig = linalg::sym_eig(linalg::symmetrized(linalg::matmul(linalg::transpose(d), d)));
    std::size_t above = 0;
    for (double v : eig.values) above += v > 1e-10;
    EXPECT_LE(above, r) << m.layer_name;
  }
}

TEST(Merge, DiscrepancyNonnegativeAndMatchesDirectNorm) {
  SeededRng rng(9);
  const auto set = random_experts(small_base(), 3, 2, rng);
  const auto disc = merge_discrepancy(set);
  const auto merged = merge_experts(set);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    Matrix mean(merged[i].delta().rows(), merged[i].delta().cols());
    for (const auto& [d, list] : set.adapters) mean = mean + fx::naive_matmul(list[i].b, list[i].a);
    const Matrix gap = fx::naive_matmul(merged[i].b, merged[i].a) - (1.0 / 3.0) * mean;
    EXPECT_GE(disc.at(merged[i].layer_name), 0.0);
    EXPECT_NEAR(disc.at(merged[i].layer_name), linalg::frobenius(gap), 1e-12);
  }
}

TEST(Merge, ShapeAndLayerMismatchesNameTheLayer) {
  SeededRng rng(10);
  const auto base = small_base();
  EXPECT_THROW(merge_experts(ExpertSet{base, {}}), Error);

  auto set = random_experts(base, 2, 2, rng);
  set.adapters["d1"][0].a = fx::random_matrix(3, set.adapters["d1"][0].a.cols(), rng);
  set.adapters["d1"][0].b = fx::random_matrix(set.adapters["d1"][0].b.rows(), 3, rng);
  try {
    merge_experts(set);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find(set.adapters["d1"][0].layer_name), std::string::npos) << e.what();
  }

  set = random_experts(base, 2, 2, rng);
  set.adapters["d1"][1].layer_name = "in";
  EXPECT_THROW(merge_experts(set), ShapeError);
  set = random_experts(base, 2, 2, rng);
  set.adapters["d1"].pop_back();
  EXPECT_THROW(merge_experts(set), ShapeError);
}

TEST(InitAdapters, ZeroDeltaAndSharedAcrossDomains) {
  const auto base = small_base();
  const auto names = base.hidden_layer_names();
  const auto x = init_adapters(base, names, "a", 2, 77);
  const auto y = init_adapters(base, names, "b", 2, 77);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].a, y[i].a);
    EXPECT_EQ(linalg::frobenius(x[i].delta()), 0.0);
  }
  EXPECT_NE(x[0].a, init_adapters(base, names, "a", 2, 78)[0].a);
}

TEST(TrainExpert, ZeroStepsIsTheBase) {
  const auto base = small_base();
  SeededRng rng(12);
  const auto data = domain_data(40, 1, 4, rng);
  const auto sched = diffusion::make_schedule(20, 1e-3, 0.1);
  const auto e = train_expert(base, 1, "d1", data, sched, quick_config(0));
  const auto model = with_adapters(base, e.adapters);
  SeededRng in_rng(13);
  for (int k = 0; k < 10; ++k) {
    linalg::Vector in(base.shape().input_dim());
    for (double& v : in) v = in_rng.normal();
    EXPECT_EQ(model.forward(in), base.forward(in));
  }
  EXPECT_TRUE(e.log.curve.empty());
}

TEST(TrainExpert, LowersLossAndLeavesBaseUntouched) {
  const auto base = small_base();
  const auto snapshot = base;
  SeededRng rng(14);
  const auto data = domain_data(200, 0, 4, rng);
  const auto sched = diffusion::make_schedule(20, 1e-3, 0.1);
  const auto e = train_expert(base, 0, "d0", data, sched, quick_config(300));
  EXPECT_LT(e.log.final_loss, e.log.initial_loss);
  EXPECT_EQ(e.log.curve.size(), 300u);
  for (std::size_t i = 0; i < base.layers().size(); ++i) {
    EXPECT_EQ(base.layers()[i].w0, snapshot.layers()[i].w0);
    EXPECT_EQ(base.layers()[i].bias, snapshot.layers()[i].bias);
  }
  for (const auto& a : e.adapters) {
    EXPECT_EQ(a.domain, "d0");
    EXPECT_GT(linalg::frobenius(a.b), 0.0);
  }

  const auto again = train_expert(base, 0, "d0", data, sched, quick_config(300));
  for (std::size_t i = 0; i < e.adapters.size(); ++i) {
    EXPECT_EQ(e.adapters[i].a, again.adapters[i].a);
    EXPECT_EQ(e.adapters[i].b, again.adapters[i].b);
  }
}

TEST(TrainExpert, RejectsBadInput) {
  const auto base = small_base();
  SeededRng rng(15);
  const auto sched = diffusion::make_schedule(10, 1e-3, 0.1);
  EXPECT_THROW(train_expert(base, 0, "d0", {}, sched, quick_config(1)), Error);
  auto mixed = domain_data(10, 0, 4, rng);
  mixed[3].domain = 1;
  EXPECT_THROW(train_expert(base, 0, "d0", mixed, sched, quick_config(1)), Error);
  auto adapted = with_adapters(base, init_adapters(base, base.hidden_layer_names(), "x", 2, 1));
  EXPECT_THROW(train_expert(adapted, 0, "d0", domain_data(10, 0, 4, rng), sched, quick_config(1)), Error);
  auto cfg = quick_config(1);
  cfg.rank = 99;
  EXPECT_THROW(train_expert(base, 0, "d0", domain_data(10, 0, 4, rng), sched, cfg), ShapeError);
}

TEST(ExpertSet, ExpertModelUsesItsAdapters) {
  SeededRng rng(16);
  const auto set = random_experts(small_base(), 2, 2, rng);
  const auto m = set.expert_model("d1");
  EXPECT_TRUE(m.frozen_base());
  const auto got = m.adapters();
  ASSERT_EQ(got.size(), set.adapters.at("d1").size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].a, set.adapters.at("d1")[i].a);
  EXPECT_THROW(set.expert_model("nope"), Error);
}
