#include <gtest/gtest.h>

#include <random>

#include "hstn/data/synth.hpp"
#include "hstn/model.hpp"
#include "hstn/neural/checkpoint.hpp"
#include "oracles.hpp"

using namespace hstn;

namespace {

ArchConfig small_arch(ModelKind kind, Task task) {
  ArchConfig a;
  a.kind = kind;
  a.task = task;
  a.width = a.height = 16;
  a.stn_filters = 4;
  a.stn_blocks = 2;
  a.stn_hidden = 8;
  a.flow_filters = 4;
  a.cls_filters = 4;
  a.cls_blocks = 2;
  a.cls_hidden = 16;
  return a;
}

Image<float> random_image(int w, int h, std::mt19937& rng) { return oracle::random_image(w, h, rng).cast<float>(); }

void perturb(HstnModel<float>& m, std::uint64_t seed, float scale) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  for (auto* p : m.params())
    for (auto& v : p->tensor.values()) v += n(rng);
}

}  // namespace

TEST(ModelKind, ParsesNamesAndRejectsUnknown) {
  EXPECT_EQ(parse_model_kind("affine-stn"), ModelKind::affine_stn);
  EXPECT_EQ(to_string(ModelKind::hstn), "hstn");
  EXPECT_EQ(parse_task("align"), Task::align);
  EXPECT_THROW(parse_model_kind("tps"), InvalidInput);
  EXPECT_THROW(parse_task("segment"), InvalidInput);
}

TEST(ArchConfig, RejectsCnnAlignmentAndBadExtents) {
  EXPECT_THROW(HstnModel<float>(small_arch(ModelKind::cnn, Task::align)), InvalidInput);
  auto a = small_arch(ModelKind::hstn, Task::align);
  a.width = 18;  // not divisible by 4
  EXPECT_THROW(HstnModel<float>{a}, InvalidInput);
}

TEST(Model, FreshHstnIsIdentityBitExact) {
  HstnModel<float> m(small_arch(ModelKind::hstn, Task::classify));
  std::mt19937 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto img = random_image(16, 16, rng);
    const auto r = forward(m, img);
    EXPECT_EQ(r.warped, img);
    EXPECT_EQ(r.composed, MotionField<float>(16, 16));
    EXPECT_EQ(r.affine, AffineParams<float>::identity());
  }
}

TEST(Model, FreshAlignerIsIdentityBitExact) {
  HstnModel<float> m(small_arch(ModelKind::hstn, Task::align));
  std::mt19937 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto src = random_image(16, 16, rng), tgt = random_image(16, 16, rng);
    EXPECT_EQ(forward_pair(m, src, tgt, 2).warped, src);
  }
}

TEST(Model, ComposedFieldIsLinearPlusFlow) {
  HstnModel<float> m(small_arch(ModelKind::hstn, Task::align));
  perturb(m, 3, 0.05f);
  std::mt19937 rng(3);
  const auto src = random_image(16, 16, rng), tgt = random_image(16, 16, rng);
  const auto r = forward_pair(m, src, tgt, 2);
  const auto lin = to_motion_field(r.affine, 16, 16);
  for (std::size_t k = 0; k < lin.vectors().size(); ++k)
    EXPECT_EQ(r.composed.vectors()[k], lin.vectors()[k] + r.flow.vectors()[k]);
  EXPECT_EQ(r.warped, sample_bilinear(src, r.composed));
  EXPECT_FLOAT_EQ(r.final_loss, photometric_loss(r.warped, tgt, 2).loss);
}

TEST(Model, DisabledFlowLeavesLinearWarpOnly) {
  HstnModel<float> m(small_arch(ModelKind::hstn, Task::align));
  perturb(m, 4, 0.05f);
  m.set_flow_enabled(false);
  EXPECT_EQ(m.trainable_params().size(), m.linear_params().size());
  std::mt19937 rng(4);
  const auto src = random_image(16, 16, rng), tgt = random_image(16, 16, rng);
  const auto r = forward_pair(m, src, tgt, 2);
  EXPECT_EQ(r.flow, MotionField<float>(16, 16));
  EXPECT_EQ(r.composed, to_motion_field(r.affine, 16, 16));
}

TEST(Model, AffineStnHasNoFlowAndCnnNoWarp) {
  HstnModel<float> a(small_arch(ModelKind::affine_stn, Task::classify));
  EXPECT_TRUE(a.flow_params().empty());
  HstnModel<float> c(small_arch(ModelKind::cnn, Task::classify));
  EXPECT_TRUE(c.linear_params().empty());
  perturb(c, 5, 0.1f);
  std::mt19937 rng(5);
  const auto img = random_image(16, 16, rng);
  EXPECT_EQ(forward(c, img).warped, img);
}

TEST(Model, ParameterNamesAreUniqueAndSeedDetermined) {
  HstnModel<float> a(small_arch(ModelKind::hstn, Task::classify)), b(small_arch(ModelKind::hstn, Task::classify));
  std::set<std::string> names;
  const auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(names.insert(pa[i]->name).second) << pa[i]->name;
    EXPECT_EQ(pa[i]->tensor.values(), pb[i]->tensor.values());
  }
}

TEST(Model, CheckpointRestoresOutputs) {
  HstnModel<float> a(small_arch(ModelKind::hstn, Task::align));
  perturb(a, 6, 0.05f);
  auto arch = small_arch(ModelKind::hstn, Task::align);
  arch.seed = 99;
  HstnModel<float> b(arch);
  const auto bytes = nn::encode_checkpoint(nn::snapshot(a.params()));
  EXPECT_EQ(nn::restore(nn::decode_checkpoint(bytes), b.params()), b.params().size());
  std::mt19937 rng(6);
  const auto src = random_image(16, 16, rng), tgt = random_image(16, 16, rng);
  EXPECT_EQ(forward_pair(a, src, tgt, 2).warped, forward_pair(b, src, tgt, 2).warped);
}

TEST(Model, AffineWeightsTransferIntoHstn) {
  HstnModel<float> stn(small_arch(ModelKind::affine_stn, Task::classify));
  perturb(stn, 7, 0.05f);
  HstnModel<float> h(small_arch(ModelKind::hstn, Task::classify));
  const auto n = nn::restore(nn::snapshot(stn.params()), h.params());
  EXPECT_EQ(n, stn.params().size());
  std::mt19937 rng(7);
  const auto img = random_image(16, 16, rng);
  const auto rs = forward(stn, img), rh = forward(h, img);
  EXPECT_EQ(rs.warped, rh.warped);
}

TEST(Model, RejectsWrongExtent) {
  HstnModel<float> m(small_arch(ModelKind::hstn, Task::classify));
  EXPECT_THROW(forward(m, Image<float>(8, 16)), InvalidInput);
  HstnModel<float> al(small_arch(ModelKind::hstn, Task::align));
  EXPECT_THROW(forward(al, Image<float>(16, 16)), InvalidInput);
}
