#include <gtest/gtest.h>

#include <random>

#include "hstn/affine.hpp"
#include "hstn/regularize.hpp"
#include "oracles.hpp"

using namespace hstn;

TEST(BendingEnergy, ZeroOnAffineFields) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const AffineParams<double> p{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    EXPECT_LE(bending_energy(to_motion_field(p, 16 + trial % 17, 9 + trial % 23)), 1e-10);
  }
}

TEST(BendingEnergy, ConstantField) {
  EXPECT_EQ(bending_energy(FieldD::constant(5, 4, 1.5, -2.0)), 0.0);
}

TEST(BendingEnergy, CenterSpike) {
  FieldD f(3, 3);
  f.u(1, 1) = 1.0;
  EXPECT_DOUBLE_EQ(bending_energy(f), 2.0);
}

TEST(BendingEnergy, RejectsSmallFields) {
  EXPECT_THROW(bending_energy(FieldD(2, 5)), InvalidInput);
}

TEST(Smoothness, ConstantAndTranslationFields) {
  EXPECT_EQ(smoothness(FieldD::constant(4, 4, 3.0, 1.0)), 0.0);
  AffineParams<double> p;
  p.c = 0.3;
  p.f = -0.7;
  EXPECT_NEAR(smoothness(to_motion_field(p, 8, 8)), 0.0, 1e-15);
}

TEST(Smoothness, TwoPixelStep) {
  FieldD f(2, 1);
  f.u(1, 0) = 1.0;
  EXPECT_DOUBLE_EQ(smoothness(f), 0.5);
}

TEST(Smoothness, RejectsSinglePixel) { EXPECT_THROW(smoothness(FieldD(1, 1)), InvalidInput); }

TEST(Penalties, NonNegativeAndAbsolutelyHomogeneous) {
  std::mt19937 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    const auto w = oracle::random_field(6, 5, -2, 2, rng);
    const double k = (trial % 2 ? -1.0 : 1.0) * (0.5 + trial * 0.1);
    FieldD kw = w;
    for (auto& c : kw.vectors()) c *= k;
    EXPECT_GE(bending_energy(w), 0.0);
    EXPECT_GE(smoothness(w), 0.0);
    EXPECT_NEAR(bending_energy(kw), std::abs(k) * bending_energy(w), 1e-12);
    EXPECT_NEAR(smoothness(kw), std::abs(k) * smoothness(w), 1e-12);
  }
}

TEST(RegLossGrad, ZeroFieldIsStationary) {
  const auto r = reg_loss_grad(FieldD(5, 5), RegWeights{0.01, 1.0});
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad.vectors()) EXPECT_EQ(g, 0.0);
}

TEST(RegLossGrad, ZeroWeights) {
  std::mt19937 rng(23);
  const auto r = reg_loss_grad(oracle::random_field(5, 5, -1, 1, rng), RegWeights{0.0, 0.0});
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad.vectors()) EXPECT_EQ(g, 0.0);
}

TEST(RegLossGrad, LossIsWeightedSum) {
  std::mt19937 rng(24);
  const auto w = oracle::random_field(7, 6, -1, 1, rng);
  const RegWeights rw{0.01, 1.0};
  EXPECT_NEAR(reg_loss_grad(w, rw).loss, 0.01 * bending_energy(w) + smoothness(w), 1e-14);
  EXPECT_THROW(reg_loss_grad(w, RegWeights{-1.0, 0.0}), InvalidInput);
}

TEST(RegLossGrad, MatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937 rng(25);
  const RegWeights rw{0.01, 1.0};
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = oracle::random_field(5, 5, -1, 1, rng);
    const auto r = reg_loss_grad(w, rw);
    const auto mask = reg_kink_mask(w, rw, 1e-6);
    const auto fd = oracle::central_diff(w.vectors(), [&](const std::vector<double>& v) {
      return reg_loss_grad(FieldD(5, 5, v), rw).loss;
    }, 1e-6);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      if (mask[i]) continue;
      ++checked;
      EXPECT_LT(oracle::rel_err(r.grad.vectors()[i], fd[i]), 1e-3) << i << " " << r.grad.vectors()[i] << " " << fd[i];
    }
  }
  EXPECT_GT(checked, 400);
}
