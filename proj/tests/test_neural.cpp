#include <gtest/gtest.h>

#include <random>

#include "hstn/neural/checkpoint.hpp"
#include "hstn/neural/layers.hpp"
#include "hstn/neural/optim.hpp"
#include "oracles.hpp"

using namespace hstn;
using namespace hstn::nn;

namespace {

Tensor<double> random_tensor(Shape s, std::mt19937& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks input and parameter gradients of `layer` against central differences
// of <upstream, layer(x)>. Returns the number of compared entries.
int check_layer(Layer<double>& layer, Tensor<double> x, std::mt19937& rng) {
  auto y = layer.forward(x, Mode::eval);
  const auto up = random_tensor(y.shape(), rng);
  for (auto* p : layer.params()) p->tensor.zero_grad();
  const auto dx = layer.backward(up);

  auto objective = [&]() { return dot(layer.forward(x, Mode::eval), up); };
  int compared = 0;
  const double h = 1e-4;
  auto compare = [&](std::vector<double>& vals, const std::vector<double>& analytic,
                     const std::string& what) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double fp = objective();
      vals[i] = keep - h;
      const double fm = objective();
      vals[i] = keep;
      const double f0 = objective();
      const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
      if (std::abs(fwd - bwd) > 1e-4 * std::max(1.0, std::abs(fwd))) continue;  // kink
      EXPECT_LT(oracle::rel_err(analytic[i], (fp - fm) / (2 * h)), 1e-3) << what << " " << i;
      ++compared;
    }
  };
  compare(x.values(), dx.values(), layer.kind() + " input");
  for (auto* p : layer.params()) {
    const auto analytic = p->tensor.grad();
    compare(p->tensor.values(), analytic, layer.kind() + " " + p->name);
  }
  return compared;
}

}  // namespace

TEST(Layers, ReluForward) {
  ReLU<double> relu;
  const auto y = relu.forward(Tensor<double>({3}, {-1.0, 0.0, 2.0}), Mode::eval);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Layers, ReluBackwardInactive) {
  ReLU<double> relu;
  relu.forward(Tensor<double>({1}, {-1.0}), Mode::train);
  EXPECT_EQ(relu.backward(Tensor<double>({1}, {5.0}))[0], 0.0);
}

TEST(Layers, ZeroConvGivesZeroOutput) {
  SplitMix64 rng(1);
  Conv2d<double> conv(1, 1, 3, 1, rng);
  std::fill(conv.weight().tensor.values().begin(), conv.weight().tensor.values().end(), 0.0);
  std::mt19937 g(1);
  const auto y = conv.forward(random_tensor({2, 1, 5, 7}, g), Mode::eval);
  EXPECT_EQ(y.shape(), (Shape{2, 1, 5, 7}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Layers, MaxPoolWindow) {
  MaxPool2<double> pool;
  const auto y = pool.forward(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}), Mode::eval);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 4.0);
}

TEST(Layers, MaxPoolTiesRouteToFirst) {
  MaxPool2<double> pool;
  pool.forward(Tensor<double>({1, 1, 2, 2}, {7, 7, 7, 7}), Mode::train);
  EXPECT_EQ(pool.backward(Tensor<double>({1, 1, 1, 1}, {3.0})).values(),
            (std::vector<double>{3, 0, 0, 0}));
}

TEST(Layers, DenseBiasGradientIsUpstream) {
  SplitMix64 rng(2);
  Dense<double> dense(4, 3, rng);
  std::mt19937 g(2);
  dense.forward(random_tensor({1, 4}, g), Mode::train);
  const Tensor<double> up({1, 3}, {0.5, -2.0, 1.25});
  dense.backward(up);
  EXPECT_EQ(dense.bias().tensor.grad(), up.values());
}

TEST(Layers, ConvMatchesFiniteDifferences) {
  SplitMix64 rng(3);
  std::mt19937 g(3);
  Conv2d<double> conv(2, 3, 3, 1, rng);
  EXPECT_EQ(check_layer(conv, random_tensor({1, 2, 6, 6}, g), g), 72 + 54 + 3);
  Conv2d<double> strided(2, 2, 3, 2, rng);
  EXPECT_GT(check_layer(strided, random_tensor({2, 2, 6, 6}, g), g), 100);
  Conv2d<double> wide(1, 2, 5, 1, rng);
  EXPECT_GT(check_layer(wide, random_tensor({1, 1, 7, 6}, g), g), 50);
  Conv2d<double> bottleneck(3, 2, 1, 1, rng);
  EXPECT_GT(check_layer(bottleneck, random_tensor({2, 3, 4, 4}, g), g), 50);
}

TEST(Layers, DeconvMatchesFiniteDifferences) {
  SplitMix64 rng(4);
  std::mt19937 g(4);
  Deconv2d<double> deconv(3, 2, 3, rng);
  const auto y = deconv.forward(random_tensor({1, 3, 3, 4}, g), Mode::eval);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 6, 8}));
  EXPECT_GT(check_layer(deconv, random_tensor({2, 3, 3, 4}, g), g), 100);
  Deconv2d<double> even(2, 2, 2, rng);
  EXPECT_GT(check_layer(even, random_tensor({1, 2, 3, 3}, g), g), 30);
}

// The deconvolution is the adjoint of the same-geometry stride-2 convolution:
// <deconv(x), y> == <x, conv(y)> with shared (transposed) weights and no bias.
TEST(Layers, DeconvIsAdjointOfStridedConv) {
  SplitMix64 rng(5);
  std::mt19937 g(5);
  Deconv2d<double> deconv(2, 3, 3, rng);
  Conv2d<double> conv(3, 2, 3, 2, rng);
  auto& wd = deconv.params()[0]->tensor;
  auto& wc = conv.weight().tensor;
  // Deconv layout (in=2, out=3, k, k) equals the conv layout (out=2, in=3, k, k).
  wc.values() = wd.values();
  const auto x = random_tensor({1, 2, 4, 5}, g), y = random_tensor({1, 3, 8, 10}, g);
  EXPECT_NEAR(dot(deconv.forward(x, Mode::eval), y), dot(x, conv.forward(y, Mode::eval)), 1e-12);
}

TEST(Layers, DenseReluPoolDropoutMatchFiniteDifferences) {
  SplitMix64 rng(6);
  std::mt19937 g(6);
  Dense<double> dense(12, 5, rng);
  EXPECT_GT(check_layer(dense, random_tensor({3, 3, 2, 2}, g), g), 100);
  ReLU<double> relu;
  EXPECT_GT(check_layer(relu, random_tensor({2, 10}, g), g), 15);
  MaxPool2<double> pool;
  EXPECT_GT(check_layer(pool, random_tensor({2, 2, 4, 6}, g), g), 80);
  Dropout<double> drop(0.5, 9);
  EXPECT_GT(check_layer(drop, random_tensor({2, 8}, g), g), 15);
}

TEST(Layers, ShapeMismatchRejected) {
  SplitMix64 rng(7);
  Conv2d<double> conv(2, 3, 3, 1, rng);
  EXPECT_THROW(conv.forward(Tensor<double>({1, 3, 4, 4}), Mode::eval), InvalidInput);
  EXPECT_THROW(conv.backward(Tensor<double>({1, 3, 4, 4})), InvalidInput);
  Dense<double> dense(4, 2, rng);
  EXPECT_THROW(dense.forward(Tensor<double>({1, 5}), Mode::eval), InvalidInput);
  EXPECT_THROW(Dropout<double>(1.0, 0), InvalidInput);
}

TEST(Layers, DropoutDeterministicAndInverted) {
  std::mt19937 g(8);
  const auto x = random_tensor({4, 50}, g, 0.5, 1.0);
  Dropout<double> a(0.5, 42), b(0.5, 42);
  const auto ya = a.forward(x, Mode::train), yb = b.forward(x, Mode::train);
  EXPECT_EQ(ya, yb);
  int zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (ya[i] == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(ya[i], 2.0 * x[i]);
  }
  EXPECT_GT(zeros, 60);
  EXPECT_LT(zeros, 140);
  EXPECT_EQ(a.forward(x, Mode::eval), x);
}

TEST(Layers, SoftmaxXentUniform) {
  const auto r = softmax_xent(Tensor<double>({2, 10}), {3, 7});
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
}

TEST(Layers, SoftmaxXentGradient) {
  std::mt19937 g(9);
  const auto z = random_tensor({3, 4}, g, -2, 2);
  const std::vector<int> labels{0, 3, 1};
  const auto r = softmax_xent(z, labels);
  const auto fd = oracle::central_diff(z.values(), [&](const std::vector<double>& v) {
    return softmax_xent(Tensor<double>({3, 4}, v), labels).loss;
  });
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(r.grad[i], fd[i], 1e-8);
}

TEST(Layers, IdentityHeads) {
  SplitMix64 rng(10);
  std::mt19937 g(10);
  Dense<double> affine_head(7, 6, rng);
  init_identity_head<double>(affine_head, {1, 0, 0, 0, 1, 0});
  const auto y = affine_head.forward(random_tensor({3, 7}, g), Mode::eval);
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 6; ++i) EXPECT_EQ(y[n * 6 + i], (i == 0 || i == 4) ? 1.0 : 0.0);

  Conv2d<double> flow_head(4, 2, 3, 1, rng);
  init_identity_head<double>(flow_head, {0, 0});
  const auto flow = flow_head.forward(random_tensor({2, 4, 5, 5}, g), Mode::eval);
  for (double v : flow.values()) EXPECT_EQ(v, 0.0);

  ReLU<double> relu;
  EXPECT_THROW(init_identity_head<double>(relu, {0}), InvalidInput);
  EXPECT_THROW(init_identity_head<double>(affine_head, {0, 0}), InvalidInput);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Param<double> p{"p", Tensor<double>({3}, {0.5, -1.0, 2.0})};
  p.tensor.grad();
  Adam<double> opt({&p}, AdamConfig{1e-3});
  opt.step();
  EXPECT_EQ(p.tensor.values(), (std::vector<double>{0.5, -1.0, 2.0}));
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(Adam, FirstStepMagnitude) {
  Param<double> p{"p", Tensor<double>({1}, {0.0})};
  p.tensor.grad()[0] = 1.0;
  Adam<double> opt({&p}, AdamConfig{1e-4});
  opt.step();
  EXPECT_NEAR(p.tensor[0], -1e-4, 1e-11);
}

TEST(Adam, DeterministicTrajectories) {
  Param<double> a{"a", Tensor<double>({2}, {1.0, 2.0})}, b = a;
  Adam<double> oa({&a}, AdamConfig{1e-2}), ob({&b}, AdamConfig{1e-2});
  for (int t = 0; t < 50; ++t) {
    a.tensor.grad() = {std::sin(t), std::cos(t)};
    b.tensor.grad() = {std::sin(t), std::cos(t)};
    oa.step();
    ob.step();
  }
  EXPECT_EQ(a.tensor.values(), b.tensor.values());
}

TEST(Adam, RejectsNonFiniteGradient) {
  Param<double> p{"weights", Tensor<double>({2}, {1.0, 1.0})};
  p.tensor.grad() = {0.1, std::numeric_limits<double>::infinity()};
  Adam<double> opt({&p}, AdamConfig{1e-3});
  try {
    opt.step();
    FAIL() << "expected Divergence";
  } catch (const Divergence& e) {
    EXPECT_NE(std::string(e.what()).find("weights"), std::string::npos);
  }
  EXPECT_EQ(p.tensor.values(), (std::vector<double>{1.0, 1.0}));
  EXPECT_THROW(Adam<double>({&p}, AdamConfig{0.0}), InvalidInput);
}

TEST(Checkpoint, EncodeDecodeRestore) {
  SplitMix64 rng(11);
  Sequential<float> net("net");
  net.add<Conv2d<float>>(1, 2, 3, 1, rng);
  net.add<ReLU<float>>();
  net.add<Dense<float>>(2 * 4 * 4, 3, rng);
  const auto bytes = encode_checkpoint(snapshot(net.params()));
  EXPECT_EQ(bytes.substr(0, 8), "HSTN0001");
  EXPECT_EQ(net.params()[0]->name, "net.0.weight");
  EXPECT_EQ(net.params()[2]->name, "net.2.weight");

  SplitMix64 other(99);
  Sequential<float> copy("net");
  copy.add<Conv2d<float>>(1, 2, 3, 1, other);
  copy.add<ReLU<float>>();
  copy.add<Dense<float>>(2 * 4 * 4, 3, other);
  EXPECT_EQ(restore(decode_checkpoint(bytes), copy.params()), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(copy.params()[i]->tensor.values(), net.params()[i]->tensor.values());

  EXPECT_THROW(decode_checkpoint("HSTN0002"), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
}

TEST(Checkpoint, ByteLayout) {
  const auto bytes = encode_checkpoint({NamedArray{"ab", {2}, {1.0f, -2.0f}}});
  const std::string expected("HSTN0001"
                             "\x02\x00\x00\x00" "ab"
                             "\x01\x00\x00\x00" "\x02\x00\x00\x00"
                             "\x00\x00\x80\x3f" "\x00\x00\x00\xc0", 8 + 4 + 2 + 8 + 8);
  EXPECT_EQ(bytes, expected);
}
