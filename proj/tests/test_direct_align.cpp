#include <gtest/gtest.h>

#include <limits>

#include "hstn/data/metrics.hpp"
#include "hstn/data/synth.hpp"
#include "hstn/direct_align.hpp"

using namespace hstn;

namespace {

DirectConfig quick() {
  DirectConfig c;
  c.affine_steps = 150;
  c.flow_steps = 200;
  return c;
}

}  // namespace

TEST(DirectAlign, IdenticalImagesGiveZeroField) {
  const auto img = data::make_texture(24, 24, 1).cast<double>();
  const auto r = direct_align(img, img, quick());
  EXPECT_EQ(r.composed, FieldD(24, 24));
  EXPECT_EQ(r.warped, img);
  EXPECT_EQ(r.final_loss, 0.0);
}

TEST(DirectAlign, RecoversPureAffineWarp) {
  const auto base = data::make_texture(32, 32, 2);
  const auto p = data::make_warp_pair(base, data::AffineRanges{}, 4, 0, 3);
  auto cfg = quick();
  cfg.flow_stage = false;
  cfg.affine_steps = 300;
  const auto r = direct_align(p.src, p.tgt, cfg);
  EXPECT_EQ(r.flow, MotionField<float>(32, 32));
  EXPECT_LT(data::epe_flow(r.composed, p.gt_field, 4), 0.25f);
}

TEST(DirectAlign, FlowStageReducesPhotometricLoss) {
  const auto base = data::make_texture(32, 32, 4);
  const auto p = data::make_warp_pair(base, data::AffineRanges{}, 4, 2, 5);
  auto affine_only = quick();
  affine_only.flow_stage = false;
  const auto a = direct_align(p.src, p.tgt, affine_only);
  const auto b = direct_align(p.src, p.tgt, quick());
  EXPECT_LT(b.final_loss, a.final_loss);
  EXPECT_EQ(b.affine, a.affine);
}

TEST(DirectAlign, IsDeterministic) {
  const auto base = data::make_texture(16, 16, 6);
  const auto p = data::make_warp_pair(base, data::AffineRanges{}, 4, 1, 7);
  const auto a = direct_align(p.src, p.tgt, quick()), b = direct_align(p.src, p.tgt, quick());
  EXPECT_EQ(a.composed, b.composed);
  EXPECT_EQ(a.warped, b.warped);
}

TEST(DirectAlign, BlurScheduleWidensCaptureRange) {
  const auto base = data::make_texture(32, 32, 1000).cast<double>();
  auto affine = AffineParams<double>::identity();
  affine.c = affine.f = -0.5;
  const auto gt = to_motion_field(affine, 32, 32);
  const auto tgt = sample_bilinear(base, gt);
  auto cfg = quick();
  cfg.flow_stage = false;
  cfg.affine_blur = {0};
  const double sharp = data::epe_flow(direct_align(base, tgt, cfg).composed, gt, 4);
  cfg.affine_blur = {4, 0};
  const double blurred = data::epe_flow(direct_align(base, tgt, cfg).composed, gt, 4);
  EXPECT_GT(sharp, 2.0);
  EXPECT_LT(blurred, 0.5);
}

TEST(DirectAlign, GaussianBlurPreservesConstantsAndMass) {
  const ImageD flat(9, 7, 0.3);
  const auto b = detail::gaussian_blur(flat, 2.0);
  for (double p : b.pixels()) EXPECT_NEAR(p, 0.3, 1e-12);
  ImageD dot(15, 15);
  dot.at(7, 7) = 1;
  const auto spread = detail::gaussian_blur(dot, 1.5);
  double sum = 0;
  for (double p : spread.pixels()) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(detail::gaussian_blur(dot, 0.0), dot);
}

TEST(DirectAlign, NonFiniteInputDiverges) {
  auto img = data::make_texture(16, 16, 8);
  auto bad = img;
  bad.at(8, 8) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(direct_align(img, bad, quick()), Divergence);
}

TEST(DirectAlign, RejectsInvalidInput) {
  const auto img = data::make_texture(16, 16, 9);
  EXPECT_THROW(direct_align(img, data::make_texture(16, 8, 9), quick()), InvalidInput);
  auto cfg = quick();
  cfg.crop_margin = 8;
  EXPECT_THROW(direct_align(img, img, cfg), InvalidInput);
  cfg = quick();
  cfg.affine_blur.clear();
  EXPECT_THROW(direct_align(img, img, cfg), InvalidInput);
  cfg = quick();
  cfg.flow_lr = 0;
  EXPECT_THROW(direct_align(img, img, cfg), InvalidInput);
}
