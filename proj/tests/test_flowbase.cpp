#include <gtest/gtest.h>

#include <random>

#include "hstn/data/metrics.hpp"
#include "hstn/data/synth.hpp"
#include "hstn/flowbase.hpp"
#include "oracles.hpp"

using namespace hstn;

namespace {

ImageD smooth_image(int w, int h, std::uint64_t seed) { return data::make_texture(w, h, seed).cast<double>(); }

}  // namespace

TEST(HornSchunck, IdenticalImagesStayAtZero) {
  const auto img = smooth_image(16, 16, 1);
  EXPECT_EQ(horn_schunck_level(img, img, FieldD(16, 16), 0.1, 50), FieldD(16, 16));
  PyramidConfig cfg;
  cfg.levels = 2;
  EXPECT_EQ(coarse_to_fine(img, img, cfg), FieldD(16, 16));
}

TEST(HornSchunck, RecoversOnePixelTranslation) {
  const auto src = smooth_image(32, 32, 2);
  const auto gt = FieldD::constant(32, 32, 1.0, 0.0);
  const auto tgt = sample_bilinear(src, gt);
  PyramidConfig cfg;
  cfg.levels = 1;
  cfg.lambda = 0.01;
  cfg.iterations = 300;
  cfg.warps_per_level = 3;
  const auto f = coarse_to_fine(src, tgt, cfg);
  EXPECT_LT(data::epe_flow(f, gt, 6), 0.2);
}

TEST(HornSchunck, JacobiEnergyIsNonIncreasing) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto src = smooth_image(16, 12, trial);
    const auto tgt = sample_bilinear(src, oracle::random_field(16, 12, -0.5, 0.5, rng));
    std::vector<double> trace;
    horn_schunck_level(src, tgt, oracle::random_field(16, 12, -0.2, 0.2, rng), 0.1, 40, &trace);
    ASSERT_EQ(trace.size(), 41u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] * (1 + 1e-12) + 1e-15);
  }
}

TEST(HornSchunck, EnergyMatchesTraceEndpoints) {
  const auto src = smooth_image(12, 12, 4);
  const auto tgt = sample_bilinear(src, FieldD::constant(12, 12, 0.5, -0.3));
  const FieldD init(12, 12);
  std::vector<double> trace;
  const auto f = horn_schunck_level(src, tgt, init, 0.2, 10, &trace);
  EXPECT_NEAR(trace.front(), hs_energy(src, tgt, init, init, 0.2), 1e-9);
  EXPECT_NEAR(trace.back(), hs_energy(src, tgt, init, f, 0.2), 1e-9);
}

TEST(CoarseToFine, SingleLevelEqualsDirectSolve) {
  const auto src = smooth_image(20, 20, 5);
  const auto tgt = sample_bilinear(src, FieldD::constant(20, 20, 0.7, 0.2));
  PyramidConfig cfg;
  cfg.levels = 1;
  EXPECT_EQ(coarse_to_fine(src, tgt, cfg), horn_schunck_level(src, tgt, FieldD(20, 20), cfg.lambda, cfg.iterations));
}

TEST(CoarseToFine, PyramidBeatsSingleLevelOnLargeShift) {
  const auto src = smooth_image(48, 48, 6);
  const auto gt = FieldD::constant(48, 48, 6.0, 0.0);
  const auto tgt = sample_bilinear(src, gt);
  PyramidConfig multi;
  multi.lambda = 0.01;
  multi.warps_per_level = 3;
  PyramidConfig single = multi;
  single.levels = 1;
  EXPECT_LT(data::epe_flow(coarse_to_fine(src, tgt, multi), gt, 10),
            data::epe_flow(coarse_to_fine(src, tgt, single), gt, 10));
}

TEST(CoarseToFine, RejectsTooManyLevels) {
  const auto img = smooth_image(16, 16, 7);
  PyramidConfig cfg;
  cfg.levels = 3;  // 16 -> 8 -> 4
  EXPECT_THROW(coarse_to_fine(img, img, cfg), InvalidInput);
}

TEST(CoarseToFine, RejectsInvalidParameters) {
  const auto img = smooth_image(16, 16, 8);
  PyramidConfig cfg;
  cfg.lambda = 0;
  EXPECT_THROW(coarse_to_fine(img, img, cfg), InvalidInput);
  cfg = {};
  cfg.scale_factor = 1.0;
  EXPECT_THROW(coarse_to_fine(img, img, cfg), InvalidInput);
  EXPECT_THROW(coarse_to_fine(img, smooth_image(16, 8, 1), PyramidConfig{}), InvalidInput);
}
