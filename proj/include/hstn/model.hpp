#pragma once

// The hierarchical warper: a linear transformation generator whose affine
// output is converted to a motion field, a U-Net style flow generator that
// sees the linearly warped source, and a sampler that warps the original
// source once with the composed field. An optional CNN classifier consumes the
// warped image.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hstn/affine.hpp"
#include "hstn/grid.hpp"
#include "hstn/neural/layers.hpp"
#include "hstn/regularize.hpp"

namespace hstn {

enum class ModelKind { cnn, affine_stn, hstn };
enum class Task { classify, align };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cnn: return "cnn";
    case ModelKind::affine_stn: return "affine-stn";
    case ModelKind::hstn: return "hstn";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "cnn") return ModelKind::cnn;
  if (s == "affine-stn") return ModelKind::affine_stn;
  if (s == "hstn") return ModelKind::hstn;
  throw InvalidInput("unknown model '" + s + "' (expected cnn, affine-stn or hstn)");
}

inline std::string to_string(Task t) { return t == Task::classify ? "classify" : "align"; }

inline Task parse_task(const std::string& s) {
  if (s == "classify") return Task::classify;
  if (s == "align") return Task::align;
  throw InvalidInput("unknown task '" + s + "' (expected classify or align)");
}

struct ArchConfig {
  ModelKind kind = ModelKind::hstn;
  Task task = Task::classify;
  int width = 40, height = 40;

  // Linear generator: [conv(stn_filters, k x k) -> relu -> pool] x stn_blocks
  //                   -> dense(stn_hidden) -> relu -> dense(6)
  int stn_filters = 20, stn_kernel = 5, stn_blocks = 3, stn_hidden = 50;

  // Flow generator: base filter count doubles per stride-2 downsampling step.
  int flow_filters = 8, flow_depth = 2;

  // Classifier: [conv(cls_filters, 3x3) -> relu -> pool -> dropout] x cls_blocks
  //             -> dense(cls_hidden) -> relu -> dense(classes)
  int cls_filters = 32, cls_blocks = 3, cls_hidden = 256, classes = 10;
  double dropout = 0.5;

  std::uint64_t seed = 1;

  bool has_linear() const { return kind != ModelKind::cnn; }
  bool has_flow() const { return kind == ModelKind::hstn; }
  bool has_classifier() const { return task == Task::classify; }
  int input_channels() const { return task == Task::align ? 2 : 1; }

  void validate() const {
    require(width >= 4 && height >= 4, "arch: image too small");
    if (kind == ModelKind::cnn)
      require(task == Task::classify, "model cnn has no warper and cannot be used for alignment");
    if (has_linear()) {
      require(stn_blocks >= 0 && stn_filters > 0 && stn_kernel > 0 && stn_hidden > 0,
              "arch: invalid linear generator");
      require((width >> stn_blocks) >= 1 && (height >> stn_blocks) >= 1,
              "arch: too many linear generator pooling blocks for the image extent");
    }
    if (has_flow()) {
      const int div = 1 << flow_depth;
      require(flow_depth >= 0 && flow_filters > 0, "arch: invalid flow generator");
      require(width % div == 0 && height % div == 0,
              "arch: image extents must be divisible by 2^flow_depth (" + std::to_string(div) + ")");
    }
    if (has_classifier()) {
      require(cls_blocks >= 0 && cls_filters > 0 && cls_hidden > 0 && classes >= 2,
              "arch: invalid classifier");
      require((width >> cls_blocks) >= 1 && (height >> cls_blocks) >= 1,
              "arch: too many classifier pooling blocks for the image extent");
    }
  }
};

namespace detail {

// Concatenates two (N, C, H, W) tensors along the channel axis.
template <typename T>
nn::Tensor<T> concat_channels(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat: incompatible tensors " + nn::shape_str(a.shape()) + " and " +
              nn::shape_str(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  nn::Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return out;
}

// Inverse of concat_channels: the leading `ca` channels and the rest.
template <typename T>
std::pair<nn::Tensor<T>, nn::Tensor<T>> split_channels(const nn::Tensor<T>& t, std::size_t ca) {
  const std::size_t n = t.dim(0), c = t.dim(1), cb = c - ca, hw = t.dim(2) * t.dim(3);
  nn::Tensor<T> a({n, ca, t.dim(2), t.dim(3)}), b({n, cb, t.dim(2), t.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(t.data() + i * c * hw, ca * hw, a.data() + i * ca * hw);
    std::copy_n(t.data() + (i * c + ca) * hw, cb * hw, b.data() + i * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Image<T> image_from(const nn::Tensor<T>& t, std::size_t n, std::size_t channel = 0) {
  const int h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  const T* p = t.data() + (n * t.dim(1) + channel) * h * w;
  return Image<T>(w, h, std::vector<T>(p, p + static_cast<std::size_t>(w) * h));
}

template <typename T>
void store_image(nn::Tensor<T>& t, std::size_t n, std::size_t channel, const Image<T>& img) {
  std::copy(img.pixels().begin(), img.pixels().end(),
            t.data() + (n * t.dim(1) + channel) * img.size());
}

// Planar (N, 2, H, W) flow <-> interleaved MotionField.
template <typename T>
MotionField<T> field_from(const nn::Tensor<T>& t, std::size_t n) {
  const int h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  MotionField<T> f(w, h);
  const T* pu = t.data() + n * 2 * hw;
  const T* pv = pu + hw;
  for (std::size_t i = 0; i < hw; ++i) {
    f.vectors()[2 * i] = pu[i];
    f.vectors()[2 * i + 1] = pv[i];
  }
  return f;
}

template <typename T>
void store_field(nn::Tensor<T>& t, std::size_t n, const MotionField<T>& f) {
  const std::size_t hw = f.pixel_count();
  T* pu = t.data() + n * 2 * hw;
  T* pv = pu + hw;
  for (std::size_t i = 0; i < hw; ++i) {
    pu[i] = f.vectors()[2 * i];
    pv[i] = f.vectors()[2 * i + 1];
  }
}

}  // namespace detail

// Contraction/expansion network with skip connections and stride-2
// deconvolutions; emits a 2-channel (u, v) flow in pixel units.
template <typename T>
class FlowGenerator {
 public:
  FlowGenerator(int in_channels, int base_filters, int depth, SplitMix64& rng)
      : depth_(depth) {
    const auto ch = [&](int level) { return base_filters << level; };
    stem_ = std::make_unique<nn::Conv2d<T>>(in_channels, ch(0), 3, 1, rng);
    for (int d = 1; d <= depth; ++d)
      down_.push_back(std::make_unique<nn::Conv2d<T>>(ch(d - 1), ch(d), 3, 2, rng));
    bottleneck_ = std::make_unique<nn::Conv2d<T>>(ch(depth), ch(depth), 1, 1, rng);
    for (int d = depth; d >= 1; --d) {
      up_.push_back(std::make_unique<nn::Deconv2d<T>>(ch(d), ch(d - 1), 3, rng));
      fuse_.push_back(std::make_unique<nn::Conv2d<T>>(2 * ch(d - 1), ch(d - 1), 3, 1, rng));
    }
    head_ = std::make_unique<nn::Conv2d<T>>(ch(0), 2, 3, 1, rng);
    nn::init_identity_head<T>(*head_, {T(0), T(0)});
    relus_.resize(2 + depth + 2 * depth);

    name(*stem_, "flow.stem");
    for (int d = 0; d < depth; ++d) name(*down_[d], "flow.down" + std::to_string(d + 1));
    name(*bottleneck_, "flow.bottleneck");
    for (int d = 0; d < depth; ++d) {
      name(*up_[d], "flow.up" + std::to_string(depth - d));
      name(*fuse_[d], "flow.fuse" + std::to_string(depth - d));
    }
    name(*head_, "flow.head");
  }

  nn::Layer<T>& head() { return *head_; }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    std::size_t r = 0;
    skips_.clear();
    nn::Tensor<T> h = relus_[r++].forward(stem_->forward(x, mode), mode);
    for (int d = 0; d < depth_; ++d) {
      skips_.push_back(h);
      h = relus_[r++].forward(down_[d]->forward(h, mode), mode);
    }
    h = relus_[r++].forward(bottleneck_->forward(h, mode), mode);
    for (int d = 0; d < depth_; ++d) {
      h = relus_[r++].forward(up_[d]->forward(h, mode), mode);
      const auto& skip = skips_[depth_ - 1 - d];
      h = relus_[r++].forward(fuse_[d]->forward(detail::concat_channels(h, skip), mode), mode);
    }
    return head_->forward(h, mode);
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& g) {
    std::size_t r = relus_.size();
    nn::Tensor<T> d = head_->backward(g);
    std::vector<nn::Tensor<T>> skip_grads(depth_);
    for (int i = depth_ - 1; i >= 0; --i) {
      d = fuse_[i]->backward(relus_[--r].backward(d));
      const std::size_t up_ch = d.dim(1) / 2;
      auto [dup, dskip] = detail::split_channels(d, up_ch);
      skip_grads[depth_ - 1 - i] = std::move(dskip);
      d = up_[i]->backward(relus_[--r].backward(dup));
    }
    d = bottleneck_->backward(relus_[--r].backward(d));
    for (int i = depth_ - 1; i >= 0; --i) {
      d = down_[i]->backward(relus_[--r].backward(d));
      auto& sg = skip_grads[i];
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += sg[k];
    }
    return stem_->backward(relus_[--r].backward(d));
  }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    auto add = [&](nn::Layer<T>& l) {
      for (auto* p : l.params()) out.push_back(p);
    };
    add(*stem_);
    for (auto& l : down_) add(*l);
    add(*bottleneck_);
    for (std::size_t i = 0; i < up_.size(); ++i) {
      add(*up_[i]);
      add(*fuse_[i]);
    }
    add(*head_);
    return out;
  }

 private:
  static void name(nn::Layer<T>& l, const std::string& prefix) {
    for (auto* p : l.params()) p->name = prefix + "." + p->name;
  }

  int depth_;
  std::unique_ptr<nn::Conv2d<T>> stem_, bottleneck_, head_;
  std::vector<std::unique_ptr<nn::Conv2d<T>>> down_, fuse_;
  std::vector<std::unique_ptr<nn::Deconv2d<T>>> up_;
  std::vector<nn::ReLU<T>> relus_;
  std::vector<nn::Tensor<T>> skips_;
};

template <typename T>
struct AlignResult {
  AffineParams<T> affine;
  MotionField<T> flow;
  MotionField<T> composed;
  Image<T> warped;
  T final_loss = 0;
};

// Everything a batch forward pass produced, kept for the backward pass.
template <typename T>
struct BatchForward {
  std::vector<Image<T>> src;
  std::vector<AffineParams<T>> affine;
  std::vector<MotionField<T>> linear_field;
  std::vector<Image<T>> linear_warped;
  std::vector<MotionField<T>> flow;
  std::vector<MotionField<T>> composed;
  std::vector<Image<T>> warped;
  nn::Tensor<T> logits;  // classification mode only
  bool flow_ran = false;
};

template <typename T>
class HstnModel {
 public:
  explicit HstnModel(const ArchConfig& arch) : arch_(arch), linear_("linear"), classifier_("classifier") {
    arch_.validate();
    SplitMix64 rng(arch_.seed);
    const int cin = arch_.input_channels();
    if (arch_.has_linear()) {
      int c = cin, w = arch_.width, h = arch_.height;
      for (int b = 0; b < arch_.stn_blocks; ++b) {
        linear_.template add<nn::Conv2d<T>>(c, arch_.stn_filters, arch_.stn_kernel, 1, rng);
        linear_.template add<nn::ReLU<T>>();
        linear_.template add<nn::MaxPool2<T>>();
        c = arch_.stn_filters;
        w /= 2;
        h /= 2;
      }
      linear_.template add<nn::Dense<T>>(c * w * h, arch_.stn_hidden, rng);
      linear_.template add<nn::ReLU<T>>();
      auto& head = linear_.template add<nn::Dense<T>>(arch_.stn_hidden, 6, rng);
      nn::init_identity_head<T>(head, {T(1), T(0), T(0), T(0), T(1), T(0)});
    }
    if (arch_.has_flow())
      flow_ = std::make_unique<FlowGenerator<T>>(cin, arch_.flow_filters, arch_.flow_depth, rng);
    if (arch_.has_classifier()) {
      int c = 1, w = arch_.width, h = arch_.height;
      for (int b = 0; b < arch_.cls_blocks; ++b) {
        classifier_.template add<nn::Conv2d<T>>(c, arch_.cls_filters, 3, 1, rng);
        classifier_.template add<nn::ReLU<T>>();
        classifier_.template add<nn::MaxPool2<T>>();
        classifier_.template add<nn::Dropout<T>>(arch_.dropout, rng.next());
        c = arch_.cls_filters;
        w /= 2;
        h /= 2;
      }
      classifier_.template add<nn::Dense<T>>(c * w * h, arch_.cls_hidden, rng);
      classifier_.template add<nn::ReLU<T>>();
      classifier_.template add<nn::Dense<T>>(arch_.cls_hidden, arch_.classes, rng);
    }
  }

  const ArchConfig& arch() const { return arch_; }

  // Phase control: with the flow generator disabled the composed field is the
  // linear field alone (equivalent to a zero flow head).
  void set_flow_enabled(bool on) { flow_enabled_ = on; }
  bool flow_enabled() const { return flow_enabled_ && flow_ != nullptr; }

  std::vector<nn::Param<T>*> linear_params() { return arch_.has_linear() ? linear_.params() : std::vector<nn::Param<T>*>{}; }
  std::vector<nn::Param<T>*> flow_params() { return flow_ ? flow_->params() : std::vector<nn::Param<T>*>{}; }
  std::vector<nn::Param<T>*> classifier_params() { return arch_.has_classifier() ? classifier_.params() : std::vector<nn::Param<T>*>{}; }

  std::vector<nn::Param<T>*> params() {
    auto out = linear_params();
    for (auto* p : flow_params()) out.push_back(p);
    for (auto* p : classifier_params()) out.push_back(p);
    return out;
  }

  // Parameters the current phase trains.
  std::vector<nn::Param<T>*> trainable_params() {
    auto out = linear_params();
    if (flow_enabled())
      for (auto* p : flow_params()) out.push_back(p);
    for (auto* p : classifier_params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->tensor.zero_grad();
  }

  // Classification mode: src is (N, 1, H, W). Alignment mode additionally
  // takes the targets (N, 1, H, W); generators see the channel concatenation.
  BatchForward<T> forward_batch(const nn::Tensor<T>& src, const nn::Tensor<T>* tgt, nn::Mode mode) {
    require(src.rank() == 4 && src.dim(1) == 1 &&
                static_cast<int>(src.dim(2)) == arch_.height && static_cast<int>(src.dim(3)) == arch_.width,
            "model: expected source batch (N,1," + std::to_string(arch_.height) + "," +
                std::to_string(arch_.width) + "), got " + nn::shape_str(src.shape()));
    const bool align = arch_.task == Task::align;
    require(!align || (tgt && tgt->shape() == src.shape()), "model: alignment needs a target batch of equal extent");
    const std::size_t n = src.dim(0);
    const int W = arch_.width, H = arch_.height;
    BatchForward<T> f;
    f.flow_ran = flow_enabled();
    for (std::size_t i = 0; i < n; ++i) f.src.push_back(detail::image_from(src, i));

    if (arch_.has_linear()) {
      const nn::Tensor<T> gen_in = align ? detail::concat_channels(src, *tgt) : src;
      const nn::Tensor<T> theta = linear_.forward(gen_in, mode);
      for (std::size_t i = 0; i < n; ++i) {
        std::array<T, 6> a;
        std::copy_n(theta.data() + 6 * i, 6, a.begin());
        f.affine.push_back(AffineParams<T>::from_array(a));
        f.linear_field.push_back(to_motion_field(f.affine.back(), W, H));
        f.linear_warped.push_back(sample_bilinear(f.src[i], f.linear_field.back()));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        f.affine.push_back(AffineParams<T>::identity());
        f.linear_field.emplace_back(W, H);
        f.linear_warped.push_back(f.src[i]);
      }
    }

    if (f.flow_ran) {
      nn::Tensor<T> warped_lin({n, 1, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
      for (std::size_t i = 0; i < n; ++i) detail::store_image(warped_lin, i, 0, f.linear_warped[i]);
      const nn::Tensor<T> flow_in = align ? detail::concat_channels(warped_lin, *tgt) : warped_lin;
      const nn::Tensor<T> flow = flow_->forward(flow_in, mode);
      for (std::size_t i = 0; i < n; ++i) f.flow.push_back(detail::field_from(flow, i));
    } else {
      for (std::size_t i = 0; i < n; ++i) f.flow.emplace_back(W, H);
    }

    for (std::size_t i = 0; i < n; ++i) {
      f.composed.push_back(compose_fields(f.linear_field[i], f.flow[i]));
      f.warped.push_back(arch_.has_linear() ? sample_bilinear(f.src[i], f.composed[i]) : f.src[i]);
    }

    if (arch_.has_classifier()) {
      nn::Tensor<T> cls_in({n, 1, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
      for (std::size_t i = 0; i < n; ++i) detail::store_image(cls_in, i, 0, f.warped[i]);
      f.logits = classifier_.forward(cls_in, mode);
    }
    return f;
  }

  // Accumulates parameter gradients. `grad_logits` drives the classifier
  // (classification mode); `grad_warped` and `grad_flow` add direct loss terms
  // on the warped images and on the flow fields (either may be empty).
  void backward_batch(const BatchForward<T>& f, const nn::Tensor<T>* grad_logits,
                      std::vector<Image<T>> grad_warped, const std::vector<MotionField<T>>& grad_flow) {
    const std::size_t n = f.src.size();
    const int W = arch_.width, H = arch_.height;
    if (grad_warped.empty())
      for (std::size_t i = 0; i < n; ++i) grad_warped.emplace_back(W, H);
    if (arch_.has_classifier() && grad_logits) {
      const nn::Tensor<T> d = classifier_.backward(*grad_logits);
      for (std::size_t i = 0; i < n; ++i) {
        const Image<T> di = detail::image_from(d, i);
        for (std::size_t k = 0; k < di.size(); ++k) grad_warped[i][k] += di[k];
      }
    }
    if (!arch_.has_linear()) return;

    std::vector<MotionField<T>> g_composed;
    for (std::size_t i = 0; i < n; ++i)
      g_composed.push_back(sample_bilinear_grad(f.src[i], f.composed[i], grad_warped[i]).field);

    std::vector<MotionField<T>> g_linear = g_composed;
    if (f.flow_ran) {
      nn::Tensor<T> g_flow({n, 2, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
      for (std::size_t i = 0; i < n; ++i) {
        MotionField<T> gf = g_composed[i];
        if (!grad_flow.empty())
          for (std::size_t k = 0; k < gf.vectors().size(); ++k) gf.vectors()[k] += grad_flow[i].vectors()[k];
        detail::store_field(g_flow, i, gf);
      }
      const nn::Tensor<T> d_in = flow_->backward(g_flow);
      for (std::size_t i = 0; i < n; ++i) {
        const Image<T> d_warped_lin = detail::image_from(d_in, i, 0);
        const auto g = sample_bilinear_grad(f.src[i], f.linear_field[i], d_warped_lin).field;
        for (std::size_t k = 0; k < g.vectors().size(); ++k) g_linear[i].vectors()[k] += g.vectors()[k];
      }
    }

    nn::Tensor<T> g_theta({n, 6});
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = to_motion_field_grad(f.affine[i], W, H, g_linear[i]);
      std::copy(g.begin(), g.end(), g_theta.data() + 6 * i);
    }
    linear_.backward(g_theta);
  }

  FlowGenerator<T>* flow_generator() { return flow_.get(); }
  nn::Sequential<T>& linear_generator() { return linear_; }
  nn::Sequential<T>& classifier() { return classifier_; }

 private:
  ArchConfig arch_;
  nn::Sequential<T> linear_;
  std::unique_ptr<FlowGenerator<T>> flow_;
  nn::Sequential<T> classifier_;
  bool flow_enabled_ = true;
};

namespace detail {

template <typename T>
nn::Tensor<T> batch_of(const std::vector<const Image<T>*>& imgs) {
  require(!imgs.empty(), "empty batch");
  const int w = imgs[0]->width(), h = imgs[0]->height();
  nn::Tensor<T> t({imgs.size(), 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    require(imgs[i]->width() == w && imgs[i]->height() == h, "batch: images differ in extent");
    store_image(t, i, 0, *imgs[i]);
  }
  return t;
}

}  // namespace detail

// Single-image classification-mode pass (evaluation mode).
template <typename T>
AlignResult<T> forward(HstnModel<T>& model, const Image<T>& src) {
  require(model.arch().task == Task::classify, "forward: model is configured for alignment");
  auto f = model.forward_batch(detail::batch_of<T>({&src}), nullptr, nn::Mode::eval);
  return {f.affine[0], f.flow[0], f.composed[0], f.warped[0], T(0)};
}

// Single-pair alignment-mode pass; final_loss is the photometric loss.
template <typename T>
AlignResult<T> forward_pair(HstnModel<T>& model, const Image<T>& src, const Image<T>& tgt, int crop_margin) {
  require(model.arch().task == Task::align, "forward_pair: model is configured for classification");
  require_same_extent(src, tgt, "forward_pair");
  const auto tb = detail::batch_of<T>({&tgt});
  auto f = model.forward_batch(detail::batch_of<T>({&src}), &tb, nn::Mode::eval);
  const T loss = photometric_loss(f.warped[0], tgt, crop_margin).loss;
  return {f.affine[0], f.flow[0], f.composed[0], f.warped[0], loss};
}

}  // namespace hstn
