#pragma once

// Finite-difference gradient suites in double precision. Each check reduces
// an operation to a scalar through a fixed random projection of its output,
// compares every analytic partial against a central difference, and skips
// coordinates where a kink of a piecewise-linear op lies within one step.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hstn/affine.hpp"
#include "hstn/grid.hpp"
#include "hstn/model.hpp"
#include "hstn/neural/layers.hpp"
#include "hstn/regularize.hpp"

namespace hstn::gradcheck {

struct Options {
  std::uint64_t seed = 1;
  double step = 1e-4;
  double tolerance = 1e-3;
  double floor = 1e-6;
  // Operation (or "op" prefix of "op.input") whose analytic gradient is
  // deliberately scaled as a negative control; empty for none.
  std::string corrupt;
};

struct Result {
  std::string module;
  std::string op;
  double max_rel_err = 0;
  std::size_t compared = 0;
  std::size_t excluded = 0;
  bool pass = true;
};

inline const std::vector<std::string>& modules() {
  static const std::vector<std::string> m{"grid", "affine", "regularize", "neural", "hstn"};
  return m;
}

using Loss = std::function<double()>;

// Compares analytic[i] with the central difference of `loss` in the scalar
// referenced by coords[i]. `skip` marks coordinates excluded up front.
inline Result compare(const std::string& module, const std::string& op, const std::vector<double*>& coords,
                      std::vector<double> analytic, const Loss& loss, const Options& opt,
                      const std::vector<bool>& skip = {}) {
  Result r{module, op};
  const bool hit = !opt.corrupt.empty() &&
                   (op == opt.corrupt || op.rfind(opt.corrupt + ".", 0) == 0);
  if (hit)
    for (auto& a : analytic) a = a * 1.1 + 1e-3;
  const double h = opt.step;
  const double base = loss();
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!skip.empty() && skip[i]) {
      ++r.excluded;
      continue;
    }
    double& x = *coords[i];
    const double keep = x;
    auto at = [&](double d) {
      x = keep + d;
      const double v = loss();
      x = keep;
      return v;
    };
    const double fp = at(h), fm = at(-h), fp2 = at(h / 2), fm2 = at(-h / 2);
    const double num = (fp - fm) / (2 * h);
    const double num2 = (fp2 - fm2) / h;
    // A kink at distance d < h from x shows up either as a disagreement of
    // the central differences at h and h/2, or as a second difference that
    // does not scale quadratically with the step.
    const double second = std::abs((fp - 2 * base + fm) - 4 * (fp2 - 2 * base + fm2)) / h;
    const double scale = 0.1 * opt.tolerance * std::max({std::abs(num), opt.floor});
    if (std::abs(num - num2) > scale || second > scale) {
      ++r.excluded;
      continue;
    }
    const double err = std::abs(analytic[i] - num) / std::max({std::abs(analytic[i]), std::abs(num), opt.floor});
    r.max_rel_err = std::max(r.max_rel_err, err);
    ++r.compared;
  }
  r.pass = r.compared > 0 && r.max_rel_err <= opt.tolerance;
  return r;
}

namespace detail {

inline ImageD random_image(int w, int h, SplitMix64& rng) {
  ImageD img(w, h);
  for (auto& p : img.pixels()) p = rng.uniform();
  return img;
}

inline FieldD random_field(int w, int h, double amp, SplitMix64& rng) {
  FieldD f(w, h);
  for (auto& c : f.vectors()) c = rng.uniform(-amp, amp);
  return f;
}

template <typename V>
std::vector<double*> addresses(V& values) {
  std::vector<double*> out;
  for (auto& v : values) out.push_back(&v);
  return out;
}

template <typename V>
double dot(const V& a, const V& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline std::vector<Result> check_grid(const Options& opt) {
  SplitMix64 rng(opt.seed);
  std::vector<Result> out;
  const int W = 9, H = 7;
  ImageD src = detail::random_image(W, H, rng);
  FieldD field = detail::random_field(W, H, 2.5, rng);
  const ImageD r = detail::random_image(W, H, rng);
  auto sample_loss = [&] { return detail::dot(sample_bilinear(src, field).pixels(), r.pixels()); };
  const auto g = sample_bilinear_grad(src, field, r);
  out.push_back(compare("grid", "sample_bilinear.src", detail::addresses(src.pixels()), g.src.pixels(), sample_loss, opt));
  out.push_back(compare("grid", "sample_bilinear.field", detail::addresses(field.vectors()), g.field.vectors(),
                        sample_loss, opt));

  FieldD a = detail::random_field(W, H, 2, rng), b = detail::random_field(W, H, 2, rng);
  const FieldD rf = detail::random_field(W, H, 1, rng);
  auto compose_loss = [&] { return detail::dot(compose_fields(a, b).vectors(), rf.vectors()); };
  out.push_back(compare("grid", "compose_fields.linear", detail::addresses(a.vectors()), rf.vectors(), compose_loss, opt));
  out.push_back(compare("grid", "compose_fields.flow", detail::addresses(b.vectors()), rf.vectors(), compose_loss, opt));

  ImageD warped = detail::random_image(W, H, rng);
  const ImageD tgt = detail::random_image(W, H, rng);
  auto photo_loss = [&] { return photometric_loss(warped, tgt, 1).loss; };
  out.push_back(compare("grid", "photometric_loss", detail::addresses(warped.pixels()),
                        photometric_loss(warped, tgt, 1).grad.pixels(), photo_loss, opt));
  return out;
}

inline std::vector<Result> check_affine(const Options& opt) {
  SplitMix64 rng(opt.seed + 1);
  const int W = 11, H = 8;
  std::array<double, 6> p{1 + rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.3, 0.3),
                          rng.uniform(-0.2, 0.2),     1 + rng.uniform(-0.2, 0.2), rng.uniform(-0.3, 0.3)};
  const FieldD r = detail::random_field(W, H, 1, rng);
  auto loss = [&] { return detail::dot(to_motion_field(AffineParams<double>::from_array(p), W, H).vectors(), r.vectors()); };
  const auto g = to_motion_field_grad(AffineParams<double>::from_array(p), W, H, r);
  return {compare("affine", "to_motion_field", detail::addresses(p), std::vector<double>(g.begin(), g.end()), loss, opt)};
}

inline std::vector<Result> check_regularize(const Options& opt) {
  SplitMix64 rng(opt.seed + 2);
  std::vector<Result> out;
  const int W = 10, H = 9;
  const std::vector<std::pair<std::string, RegWeights>> cases{
      {"bending_energy", {1.0, 0.0}}, {"smoothness", {0.0, 1.0}}, {"reg_loss", {0.01, 1.0}}};
  for (const auto& [name, weights] : cases) {
    FieldD w = detail::random_field(W, H, 1.5, rng);
    auto loss = [&] { return reg_loss_grad(w, weights).loss; };
    const auto g = reg_loss_grad(w, weights);
    const auto mask = reg_kink_mask(w, weights, 8 * opt.step);
    out.push_back(compare("regularize", name, detail::addresses(w.vectors()), g.grad.vectors(), loss, opt, mask));
  }
  return out;
}

namespace detail {

// Checks one layer: input gradient and every parameter gradient of
// <r, layer(x)> for a fixed random projection r.
inline std::vector<Result> check_layer(const std::string& name, nn::Layer<double>& layer, nn::Tensor<double> x,
                                       nn::Mode mode, const Options& opt, SplitMix64& rng,
                                       const std::function<void()>& before_forward = {}) {
  auto fwd = [&]() -> nn::Tensor<double> {
    if (before_forward) before_forward();
    return layer.forward(x, mode);
  };
  const nn::Tensor<double> y = fwd();
  nn::Tensor<double> r(y.shape());
  for (auto& v : r.values()) v = rng.uniform(-1, 1);
  for (auto* p : layer.params()) p->tensor.grad().assign(p->tensor.size(), 0.0);
  const nn::Tensor<double> dx = layer.backward(r);
  auto loss = [&] { return dot(fwd().values(), r.values()); };
  std::vector<Result> out;
  out.push_back(compare("neural", name + ".input", addresses(x.values()), dx.values(), loss, opt));
  for (auto* p : layer.params())
    out.push_back(compare("neural", name + "." + p->name, addresses(p->tensor.values()), p->tensor.grad(), loss, opt));
  return out;
}

inline nn::Tensor<double> random_tensor(nn::Shape s, SplitMix64& rng) {
  nn::Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

template <typename V>
void append(std::vector<Result>& out, V&& more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace detail

inline std::vector<Result> check_neural(const Options& opt) {
  SplitMix64 rng(opt.seed + 3);
  std::vector<Result> out;
  {
    nn::Dense<double> l(12, 5, rng);
    for (auto& b : l.bias().tensor.values()) b = rng.uniform(-0.5, 0.5);
    detail::append(out, detail::check_layer("dense", l, detail::random_tensor({3, 12}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::Conv2d<double> l(2, 3, 3, 1, rng);
    detail::append(out, detail::check_layer("conv2d", l, detail::random_tensor({2, 2, 6, 5}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::Conv2d<double> l(2, 3, 3, 2, rng);
    detail::append(out, detail::check_layer("conv2d_stride2", l, detail::random_tensor({2, 2, 6, 6}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::Conv2d<double> l(3, 2, 5, 1, rng);
    detail::append(out, detail::check_layer("conv2d_5x5", l, detail::random_tensor({1, 3, 7, 6}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::Deconv2d<double> l(3, 2, 3, rng);
    detail::append(out, detail::check_layer("deconv2d", l, detail::random_tensor({2, 3, 3, 4}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::MaxPool2<double> l;
    detail::append(out, detail::check_layer("maxpool2", l, detail::random_tensor({2, 2, 6, 6}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::ReLU<double> l;
    detail::append(out, detail::check_layer("relu", l, detail::random_tensor({2, 3, 4, 4}, rng), nn::Mode::train, opt, rng));
  }
  {
    nn::Dropout<double> l(0.5, rng.next());
    detail::append(out, detail::check_layer("dropout", l, detail::random_tensor({2, 3, 4, 4}, rng), nn::Mode::train, opt,
                                            rng, [&] { l.reset_counter(); }));
  }
  {
    nn::Tensor<double> logits = detail::random_tensor({4, 6}, rng);
    const std::vector<int> labels{0, 3, 5, 2};
    const auto xe = nn::softmax_xent(logits, labels);
    out.push_back(compare("neural", "softmax_xent.logits", detail::addresses(logits.values()), xe.grad.values(),
                          [&] { return nn::softmax_xent(logits, labels).loss; }, opt));
  }
  return out;
}

namespace detail {

inline ArchConfig toy_arch(Task task) {
  ArchConfig a;
  a.kind = ModelKind::hstn;
  a.task = task;
  a.width = a.height = 12;
  a.stn_filters = 2;
  a.stn_kernel = 3;
  a.stn_blocks = 1;
  a.stn_hidden = 4;
  a.flow_filters = 2;
  a.flow_depth = 1;
  a.cls_filters = 2;
  a.cls_blocks = 1;
  a.cls_hidden = 4;
  a.classes = 3;
  a.dropout = 0.0;
  return a;
}

// Moves every parameter off its initialization so identity heads do not
// block gradient flow to earlier layers.
inline void perturb(HstnModel<double>& m, SplitMix64& rng) {
  for (auto* p : m.params()) {
    const bool affine_head_bias = p->name == m.linear_params().back()->name;
    for (auto& v : p->tensor.values()) v += rng.uniform(-0.3, 0.3) * (affine_head_bias ? 0.3 : 1.0);
  }
}

}  // namespace detail

inline std::vector<Result> check_hstn(const Options& opt) {
  SplitMix64 rng(opt.seed + 4);
  std::vector<Result> out;
  const int S = 12;
  {
    HstnModel<double> m(detail::toy_arch(Task::classify));
    detail::perturb(m, rng);
    nn::Tensor<double> x = detail::random_tensor({2, 1, S, S}, rng);
    for (auto& v : x.values()) v = 0.5 * (v + 1);
    const std::vector<int> labels{1, 2};
    auto loss = [&] { return nn::softmax_xent(m.forward_batch(x, nullptr, nn::Mode::eval).logits, labels).loss; };
    m.zero_grad();
    for (auto* p : m.params()) p->tensor.grad();
    const auto f = m.forward_batch(x, nullptr, nn::Mode::eval);
    const auto xe = nn::softmax_xent(f.logits, labels);
    m.backward_batch(f, &xe.grad, {}, {});
    for (auto* p : m.params())
      out.push_back(compare("hstn", "classify." + p->name, detail::addresses(p->tensor.values()), p->tensor.grad(), loss, opt));
  }
  {
    HstnModel<double> m(detail::toy_arch(Task::align));
    detail::perturb(m, rng);
    nn::Tensor<double> src = detail::random_tensor({2, 1, S, S}, rng), tgt = detail::random_tensor({2, 1, S, S}, rng);
    const RegWeights reg{0.01, 1.0};
    auto objective = [&](BatchForward<double>& f, std::vector<ImageD>* gw, std::vector<FieldD>* gf) {
      double total = 0;
      for (std::size_t i = 0; i < f.warped.size(); ++i) {
        auto lg = photometric_loss(f.warped[i], hstn::detail::image_from(tgt, i), 1);
        auto rg = reg_loss_grad(f.flow[i], reg);
        total += lg.loss + rg.loss;
        if (gw) gw->push_back(std::move(lg.grad));
        if (gf) gf->push_back(std::move(rg.grad));
      }
      return total;
    };
    auto loss = [&] {
      auto f = m.forward_batch(src, &tgt, nn::Mode::eval);
      return objective(f, nullptr, nullptr);
    };
    m.zero_grad();
    for (auto* p : m.params()) p->tensor.grad();
    auto f = m.forward_batch(src, &tgt, nn::Mode::eval);
    std::vector<ImageD> gw;
    std::vector<FieldD> gf;
    objective(f, &gw, &gf);
    m.backward_batch(f, nullptr, std::move(gw), gf);
    for (auto* p : m.params())
      out.push_back(compare("hstn", "align." + p->name, detail::addresses(p->tensor.values()), p->tensor.grad(), loss, opt));
  }
  return out;
}

inline std::vector<Result> run(const std::string& module, const Options& opt) {
  if (module == "grid") return check_grid(opt);
  if (module == "affine") return check_affine(opt);
  if (module == "regularize") return check_regularize(opt);
  if (module == "neural") return check_neural(opt);
  if (module == "hstn") return check_hstn(opt);
  if (module == "all") {
    std::vector<Result> out;
    for (const auto& m : modules()) detail::append(out, run(m, opt));
    return out;
  }
  throw InvalidInput("unknown gradcheck module '" + module + "'");
}

inline std::string format_row(const Result& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s\t%s\t%.3e\t%zu\t%zu\t%s", r.module.c_str(), r.op.c_str(), r.max_rel_err,
                r.compared, r.excluded, r.pass ? "PASS" : "FAIL");
  return buf;
}

inline std::string header_row() { return "module\top\tmax_rel_err\tcompared\tkink_excluded\tstatus"; }

}  // namespace hstn::gradcheck
