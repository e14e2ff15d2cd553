#include <gtest/gtest.h>

#include <cmath>

#include "sara/theory.hpp"

using namespace sara;

namespace {

TheoryParams golden_params() {
  TheoryParams p;
  p.delta = 0.25;
  p.sigma_sq = 1.0;
  p.L = 1.0;
  p.Delta = 1.0;
  p.T = 1000000;
  return p;
}

}  // namespace

TEST(Schedule, GoldenValues) {
  // mpmath, 40 digits: beta1 = 1/(1 + sqrt(125000)).
  const Schedule s = schedule_from_theorem(golden_params());
  EXPECT_NEAR(s.beta1 / 0.0028204496883436968472 - 1.0, 0.0, 1e-12);
  EXPECT_EQ(s.tau, 30256);
  EXPECT_NEAR(s.eta / 3.1242972108222223654e-6 - 1.0, 0.0, 1e-12);
}

TEST(Schedule, RespectsEveryCap) {
  for (double delta : {0.05, 0.25, 0.5, 1.0}) {
    for (double sigma_sq : {0.0, 0.1, 4.0}) {
      for (double L : {0.5, 2.0}) {
        TheoryParams p;
        p.delta = delta;
        p.sigma_sq = sigma_sq;
        p.L = L;
        p.Delta = 3.0;
        p.T = 10000000;
        if (!admissible_horizon(p)) continue;
        const Schedule s = schedule_from_theorem(p);
        const auto caps = step_size_caps(L, delta, s.beta1, s.tau);
        EXPECT_LE(s.eta, caps.smooth);
        EXPECT_LE(s.eta, caps.momentum);
        EXPECT_LE(s.eta, caps.period);
        EXPECT_LE(s.eta, caps.mixed);
        EXPECT_LE(s.eta, caps.min());
        EXPECT_GT(s.beta1, 0.0);
        EXPECT_LE(s.beta1, 1.0);
      }
    }
  }
}

TEST(Schedule, NoiselessLimit) {
  TheoryParams p;
  p.delta = 1.0;
  p.sigma_sq = 0.0;
  p.T = 100;
  EXPECT_NEAR(horizon_threshold(p), 2.0 + 128.0 / 3.0, 1e-12);
  const Schedule s = schedule_from_theorem(p);
  EXPECT_EQ(s.beta1, 1.0);
  EXPECT_EQ(s.tau, 22);
}

TEST(Schedule, ShortHorizonRejected) {
  TheoryParams p = golden_params();
  p.T = 100;
  EXPECT_FALSE(admissible_horizon(p));
  EXPECT_THROW(schedule_from_theorem(p), InvalidArgument);
}

TEST(Schedule, InvalidParameters) {
  TheoryParams p = golden_params();
  p.delta = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = golden_params();
  p.L = -1.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = golden_params();
  p.Delta = 0.0;
  EXPECT_THROW(horizon_threshold(p), InvalidArgument);
}

TEST(ProjectionBound, TightIdentityCase) {
  RngStream rng(1, 1);
  const Matrix g = Matrix::Identity(3, 3);
  const auto rep = verify_projection_bound(SelectorSpec{SelectorType::Sara, 1, 1}, g, 10000, rng);
  EXPECT_NEAR(rep.delta, 1.0 / 3, 1e-15);
  EXPECT_NEAR(rep.rhs, 2.0, 1e-15);
  EXPECT_NEAR(rep.lhs_mean, 2.0, 1e-12);
  EXPECT_TRUE(rep.pass);
}

TEST(ProjectionBound, RandomGaussianCases) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RngStream rng(seed, 2);
    const Matrix g = gaussian_matrix(rng, 6, 9);
    for (auto type : {SelectorType::Sara, SelectorType::RandomOrthonormal}) {
      const auto rep = verify_projection_bound(SelectorSpec{type, 2, 1}, g, 10000, rng);
      EXPECT_TRUE(rep.pass) << "seed " << seed << " lhs " << rep.lhs_mean << " rhs " << rep.rhs;
      EXPECT_EQ(rep.trials, 10000);
    }
  }
}

TEST(ProjectionBound, RejectsDominantAndTooFewTrials) {
  RngStream rng(3, 3);
  const Matrix g = gaussian_matrix(rng, 4, 4);
  EXPECT_THROW(verify_projection_bound(SelectorSpec{SelectorType::Dominant, 2, 1}, g, 10000, rng), InvalidArgument);
  EXPECT_THROW(verify_projection_bound(SelectorSpec{SelectorType::Sara, 2, 1}, g, 100, rng), InvalidArgument);
}

TEST(CompareDelta, WorkedExample) {
  const auto c = compare_delta(SelectionWeights({0.5, 0.3, 0.2}), 2);
  EXPECT_NEAR(c.delta_uniform, 2.0 / 3, 1e-15);
  EXPECT_NEAR(c.delta_sara, 17.0 / 35, 1e-15);
  EXPECT_NEAR(c.gap, 0.18095238095238095, 1e-14);
}

TEST(CompareDelta, UniformHasNoGap) {
  const auto c = compare_delta(SelectionWeights({0.25, 0.25, 0.25, 0.25}), 2);
  EXPECT_NEAR(c.gap, 0.0, 1e-15);
}

TEST(TheoryJson, Fields) {
  const auto j = to_json(schedule_from_theorem(golden_params()));
  EXPECT_EQ(j.at("tau").get<std::int64_t>(), 30256);
  EXPECT_TRUE(j.contains("beta1"));
  EXPECT_TRUE(j.contains("eta"));
}
