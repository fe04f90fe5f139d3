#pragma once

// Trainable layers with hand-written backward passes. Each layer caches what
// its backward pass needs during forward(); backward() consumes that cache,
// accumulates parameter gradients and returns the gradient for its input.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "hstn/neural/tensor.hpp"

namespace hstn::nn {

enum class Mode { eval, train };

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& upstream) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Glorot-uniform fill.
template <typename T>
void glorot_fill(std::vector<T>& w, double fan_in, double fan_out, SplitMix64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
}

// Unfolds a (C, H, W) image into (C*k*k, oh*ow) patch columns.
template <typename T>
void im2col(const T* img, int C, int H, int W, int k, int stride, int pad, int oh, int ow,
            T* cols) {
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
}

// Adjoint of im2col: scatters (accumulates) columns back onto the image.
template <typename T>
void col2im(const T* cols, int C, int H, int W, int k, int stride, int pad, int oh, int ow,
            T* img) {
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = img + (static_cast<std::size_t>(c) * H + iy) * W;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
}

inline void require_rank4(const Shape& s, const std::string& who) {
  require(s.size() == 4, who + ": expected (N,C,H,W) input, got " + shape_str(s));
}

}  // namespace detail

// y = W x + b on the flattened trailing dimensions.
template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(int in, int out, SplitMix64& rng) : in_(in), out_(out) {
    weight_.name = "weight";
    weight_.tensor = Tensor<T>({static_cast<std::size_t>(out), static_cast<std::size_t>(in)});
    bias_.name = "bias";
    bias_.tensor = Tensor<T>({static_cast<std::size_t>(out)});
    detail::glorot_fill(weight_.tensor.values(), in, out, rng);
  }

  std::string kind() const override { return "dense"; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    require(x.rank() >= 1 && x.dim(0) > 0, "dense: empty batch");
    const std::size_t n = x.dim(0);
    require(x.size() == n * in_, "dense: input " + shape_str(x.shape()) + " does not flatten to " +
                                     std::to_string(in_) + " features");
    input_ = x;
    Tensor<T> y({n, static_cast<std::size_t>(out_)});
    detail::CMapMat<T> X(x.data(), n, in_);
    detail::CMapMat<T> Wm(weight_.tensor.data(), out_, in_);
    detail::MapMat<T> Y(y.data(), n, out_);
    Y.noalias() = X * Wm.transpose();
    for (std::size_t i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) Y(i, o) += bias_.tensor[o];
    cached_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    require(cached_, "dense: backward without matching forward");
    const std::size_t n = input_.dim(0);
    require(g.size() == n * out_, "dense: upstream shape mismatch");
    detail::CMapMat<T> G(g.data(), n, out_);
    detail::CMapMat<T> X(input_.data(), n, in_);
    detail::MapMat<T> dW(weight_.tensor.grad().data(), out_, in_);
    dW.noalias() += G.transpose() * X;
    auto& db = bias_.tensor.grad();
    for (std::size_t i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) db[o] += G(i, o);
    Tensor<T> dx(input_.shape());
    detail::CMapMat<T> Wm(weight_.tensor.data(), out_, in_);
    detail::MapMat<T> DX(dx.data(), n, in_);
    DX.noalias() = G * Wm;
    cached_ = false;
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> input_;
  bool cached_ = false;
};

// k x k convolution (cross-correlation) with same padding and the given stride.
// A 1x1 instance is the bottleneck layer.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_ch, int out_ch, int k, int stride, SplitMix64& rng)
      : cin_(in_ch), cout_(out_ch), k_(k), stride_(stride), pad_((k - 1) / 2) {
    require(in_ch > 0 && out_ch > 0 && k > 0 && stride > 0, "conv: invalid geometry");
    weight_.name = "weight";
    weight_.tensor = Tensor<T>({static_cast<std::size_t>(out_ch), static_cast<std::size_t>(in_ch),
                                static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    bias_.name = "bias";
    bias_.tensor = Tensor<T>({static_cast<std::size_t>(out_ch)});
    detail::glorot_fill(weight_.tensor.values(), double(in_ch) * k * k, double(out_ch) * k * k, rng);
  }

  std::string kind() const override { return "conv"; }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    detail::require_rank4(x.shape(), "conv");
    require(static_cast<int>(x.dim(1)) == cin_, "conv: expected " + std::to_string(cin_) +
                                                    " input channels, got " + shape_str(x.shape()));
    const int n = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(2)),
              w = static_cast<int>(x.dim(3));
    h_ = h;
    w_ = w;
    oh_ = (h + 2 * pad_ - k_) / stride_ + 1;
    ow_ = (w + 2 * pad_ - k_) / stride_ + 1;
    require(oh_ > 0 && ow_ > 0, "conv: input too small");
    const std::size_t rows = static_cast<std::size_t>(cin_) * k_ * k_;
    const std::size_t ncols = static_cast<std::size_t>(oh_) * ow_;
    cols_.assign(static_cast<std::size_t>(n) * rows * ncols, T(0));
    Tensor<T> y({static_cast<std::size_t>(n), static_cast<std::size_t>(cout_),
                 static_cast<std::size_t>(oh_), static_cast<std::size_t>(ow_)});
    detail::CMapMat<T> Wm(weight_.tensor.data(), cout_, rows);
    for (int b = 0; b < n; ++b) {
      T* cols = cols_.data() + b * rows * ncols;
      detail::im2col(x.data() + static_cast<std::size_t>(b) * cin_ * h * w, cin_, h, w, k_,
                     stride_, pad_, oh_, ow_, cols);
      detail::MapMat<T> Y(y.data() + static_cast<std::size_t>(b) * cout_ * ncols, cout_, ncols);
      Y.noalias() = Wm * detail::CMapMat<T>(cols, rows, ncols);
      for (int o = 0; o < cout_; ++o) Y.row(o).array() += bias_.tensor[o];
    }
    batch_ = n;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    require(batch_ > 0, "conv: backward without matching forward");
    const std::size_t rows = static_cast<std::size_t>(cin_) * k_ * k_;
    const std::size_t ncols = static_cast<std::size_t>(oh_) * ow_;
    require(g.size() == static_cast<std::size_t>(batch_) * cout_ * ncols,
            "conv: upstream shape mismatch " + shape_str(g.shape()));
    Tensor<T> dx({static_cast<std::size_t>(batch_), static_cast<std::size_t>(cin_),
                  static_cast<std::size_t>(h_), static_cast<std::size_t>(w_)});
    detail::CMapMat<T> Wm(weight_.tensor.data(), cout_, rows);
    detail::MapMat<T> dW(weight_.tensor.grad().data(), cout_, rows);
    auto& db = bias_.tensor.grad();
    std::vector<T> dcols(rows * ncols);
    for (int b = 0; b < batch_; ++b) {
      detail::CMapMat<T> G(g.data() + static_cast<std::size_t>(b) * cout_ * ncols, cout_, ncols);
      detail::CMapMat<T> C(cols_.data() + b * rows * ncols, rows, ncols);
      dW.noalias() += G * C.transpose();
      for (int o = 0; o < cout_; ++o) db[o] += G.row(o).sum();
      detail::MapMat<T>(dcols.data(), rows, ncols).noalias() = Wm.transpose() * G;
      detail::col2im(dcols.data(), cin_, h_, w_, k_, stride_, pad_, oh_, ow_,
                     dx.data() + static_cast<std::size_t>(b) * cin_ * h_ * w_);
    }
    batch_ = 0;
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int cin_, cout_, k_, stride_, pad_;
  int h_ = 0, w_ = 0, oh_ = 0, ow_ = 0, batch_ = 0;
  Param<T> weight_, bias_;
  std::vector<T> cols_;
};

// Stride-2 transposed convolution: the exact adjoint of a stride-2 same-padded
// k x k convolution, mapping (H, W) to (2H, 2W). Weight layout (in, out, k, k).
template <typename T>
class Deconv2d : public Layer<T> {
 public:
  Deconv2d(int in_ch, int out_ch, int k, SplitMix64& rng)
      : cin_(in_ch), cout_(out_ch), k_(k), pad_((k - 1) / 2) {
    require(in_ch > 0 && out_ch > 0 && k >= 2, "deconv: invalid geometry");
    weight_.name = "weight";
    weight_.tensor = Tensor<T>({static_cast<std::size_t>(in_ch), static_cast<std::size_t>(out_ch),
                                static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    bias_.name = "bias";
    bias_.tensor = Tensor<T>({static_cast<std::size_t>(out_ch)});
    detail::glorot_fill(weight_.tensor.values(), double(in_ch) * k * k, double(out_ch) * k * k, rng);
  }

  std::string kind() const override { return "deconv"; }
  int out_channels() const { return cout_; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    detail::require_rank4(x.shape(), "deconv");
    require(static_cast<int>(x.dim(1)) == cin_, "deconv: expected " + std::to_string(cin_) +
                                                    " input channels, got " + shape_str(x.shape()));
    input_ = x;
    const int n = static_cast<int>(x.dim(0));
    h_ = static_cast<int>(x.dim(2));
    w_ = static_cast<int>(x.dim(3));
    const int oh = 2 * h_, ow = 2 * w_;
    const std::size_t rows = static_cast<std::size_t>(cout_) * k_ * k_;
    const std::size_t ncols = static_cast<std::size_t>(h_) * w_;
    Tensor<T> y({static_cast<std::size_t>(n), static_cast<std::size_t>(cout_),
                 static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    detail::CMapMat<T> Wm(weight_.tensor.data(), cin_, rows);
    std::vector<T> cols(rows * ncols);
    for (int b = 0; b < n; ++b) {
      detail::CMapMat<T> X(x.data() + static_cast<std::size_t>(b) * cin_ * ncols, cin_, ncols);
      detail::MapMat<T>(cols.data(), rows, ncols).noalias() = Wm.transpose() * X;
      T* out = y.data() + static_cast<std::size_t>(b) * cout_ * oh * ow;
      detail::col2im(cols.data(), cout_, oh, ow, k_, 2, pad_, h_, w_, out);
      for (int o = 0; o < cout_; ++o) {
        T* plane = out + static_cast<std::size_t>(o) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) plane[i] += bias_.tensor[o];
      }
    }
    cached_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    require(cached_, "deconv: backward without matching forward");
    const std::size_t n = input_.dim(0);
    const int oh = 2 * h_, ow = 2 * w_;
    require(g.size() == n * cout_ * oh * ow, "deconv: upstream shape mismatch");
    const std::size_t rows = static_cast<std::size_t>(cout_) * k_ * k_;
    const std::size_t ncols = static_cast<std::size_t>(h_) * w_;
    Tensor<T> dx(input_.shape());
    detail::CMapMat<T> Wm(weight_.tensor.data(), cin_, rows);
    detail::MapMat<T> dW(weight_.tensor.grad().data(), cin_, rows);
    auto& db = bias_.tensor.grad();
    std::vector<T> dcols(rows * ncols);
    for (std::size_t b = 0; b < n; ++b) {
      const T* gb = g.data() + b * cout_ * oh * ow;
      detail::im2col(gb, cout_, oh, ow, k_, 2, pad_, h_, w_, dcols.data());
      detail::CMapMat<T> DC(dcols.data(), rows, ncols);
      detail::CMapMat<T> X(input_.data() + b * cin_ * ncols, cin_, ncols);
      detail::MapMat<T>(dx.data() + b * cin_ * ncols, cin_, ncols).noalias() = Wm * DC;
      dW.noalias() += X * DC.transpose();
      for (int o = 0; o < cout_; ++o) {
        const T* plane = gb + static_cast<std::size_t>(o) * oh * ow;
        T s = 0;
        for (int i = 0; i < oh * ow; ++i) s += plane[i];
        db[o] += s;
      }
    }
    cached_ = false;
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int cin_, cout_, k_, pad_;
  int h_ = 0, w_ = 0;
  Param<T> weight_, bias_;
  Tensor<T> input_;
  bool cached_ = false;
};

// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped. Ties go to
// the first element in row-major window order.
template <typename T>
class MaxPool2 : public Layer<T> {
 public:
  std::string kind() const override { return "maxpool"; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    detail::require_rank4(x.shape(), "maxpool");
    in_shape_ = x.shape();
    const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    require(oh > 0 && ow > 0, "maxpool: input smaller than 2x2");
    Tensor<T> y({x.dim(0), x.dim(1), oh, ow});
    argmax_.assign(y.size(), 0);
    for (std::size_t p = 0; p < nc; ++p) {
      const T* in = x.data() + p * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = (2 * oy) * w + 2 * ox;
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t c : cand)
            if (in[c] > in[best]) best = c;
          const std::size_t o = (p * oh + oy) * ow + ox;
          y[o] = in[best];
          argmax_[o] = p * h * w + best;
        }
    }
    cached_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    require(cached_, "maxpool: backward without matching forward");
    require(g.size() == argmax_.size(), "maxpool: upstream shape mismatch");
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) dx[argmax_[o]] += g[o];
    cached_ = false;
    return dx;
  }

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(x.shape());
    active_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        active_[i] = 1;
      }
    }
    shape_ = x.shape();
    cached_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    require(cached_ && g.size() == active_.size(), "relu: backward without matching forward");
    Tensor<T> dx(shape_);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = active_[i] ? g[i] : T(0);
    cached_ = false;
    return dx;
  }

 private:
  Shape shape_;
  std::vector<unsigned char> active_;
  bool cached_ = false;
};

// Inverted dropout. The mask of the n-th training-mode call depends only on
// (seed, n), so runs are reproducible; evaluation mode is the identity.
template <typename T>
class Dropout : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  }

  std::string kind() const override { return "dropout"; }
  double rate() const { return rate_; }
  void reset_counter(std::uint64_t c = 0) { counter_ = c; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    shape_ = x.shape();
    scale_.assign(x.size(), T(1));
    if (mode == Mode::train && rate_ > 0.0) {
      SplitMix64 rng(seed_ ^ (0xD1B54A32D192ED03ULL * (++counter_)));
      const T keep = static_cast<T>(1.0 / (1.0 - rate_));
      for (auto& s : scale_) s = rng.uniform() >= rate_ ? keep : T(0);
    }
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale_[i];
    cached_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    require(cached_ && g.size() == scale_.size(), "dropout: backward without matching forward");
    Tensor<T> dx(shape_);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * scale_[i];
    cached_ = false;
    return dx;
  }

 private:
  double rate_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  Shape shape_;
  std::vector<T> scale_;
  bool cached_ = false;
};

// Ordered chain of layers. Parameter names are "<prefix>.<index>.<name>".
template <typename T>
class Sequential {
 public:
  explicit Sequential(std::string prefix = {}) : prefix_(std::move(prefix)) {}

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    for (auto* p : layer->params())
      p->name = prefix_ + "." + std::to_string(layers_.size()) + "." + p->name;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    Tensor<T> d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  Layer<T>& back() { return *layers_.back(); }

 private:
  std::string prefix_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
struct XentResult {
  T loss;            // mean over the batch
  Tensor<T> grad;    // d loss / d logits
  std::size_t correct;
};

// Softmax followed by mean cross-entropy against integer labels.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, "softmax_xent: logits must be (N, classes)");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require(labels.size() == n, "softmax_xent: label count mismatch");
  XentResult<T> r{T(0), Tensor<T>(logits.shape()), 0};
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < k, "softmax_xent: bad label");
    const T* z = logits.data() + i * k;
    T* g = r.grad.data() + i * k;
    std::size_t arg = 0;
    T zmax = z[0];
    for (std::size_t j = 1; j < k; ++j)
      if (z[j] > zmax) {
        zmax = z[j];
        arg = j;
      }
    T denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    const T log_denom = std::log(denom);
    r.loss += log_denom - (z[labels[i]] - zmax);
    for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(z[j] - zmax - log_denom) / T(n);
    g[labels[i]] -= T(1) / T(n);
    if (static_cast<int>(arg) == labels[i]) ++r.correct;
  }
  r.loss /= T(n);
  return r;
}

// Zeroes the weights of a generator's final layer and sets its bias, so the
// untrained generator emits `identity_bias` regardless of input. Accepts dense
// heads and convolutional heads (per-channel bias).
template <typename T>
void init_identity_head(Layer<T>& head, const std::vector<T>& identity_bias) {
  auto apply = [&](Param<T>& w, Param<T>& b) {
    require(b.tensor.size() == identity_bias.size(),
            "init_identity_head: bias has " + std::to_string(b.tensor.size()) + " entries, got " +
                std::to_string(identity_bias.size()));
    std::fill(w.tensor.values().begin(), w.tensor.values().end(), T(0));
    b.tensor.values() = identity_bias;
  };
  if (auto* d = dynamic_cast<Dense<T>*>(&head)) {
    apply(d->weight(), d->bias());
  } else if (auto* c = dynamic_cast<Conv2d<T>*>(&head)) {
    apply(c->weight(), c->bias());
  } else {
    throw InvalidInput("init_identity_head: layer kind '" + head.kind() +
                       "' cannot be an identity head");
  }
}

}  // namespace hstn::nn
