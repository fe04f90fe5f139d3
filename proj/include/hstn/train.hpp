#pragma once

// Training loops: classification (cross-entropy on the warped image) and
// unsupervised alignment (photometric loss plus flow penalties), both with
// Adam and a divide-on-plateau learning-rate schedule.

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hstn/data/metrics.hpp"
#include "hstn/data/synth.hpp"
#include "hstn/model.hpp"
#include "hstn/neural/optim.hpp"

namespace hstn {

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay_factor = 10;
  int patience = 3;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 1;
  RegWeights reg;
  int crop_margin = 4;

  void validate() const {
    require(lr > 0 && std::isfinite(lr), "train: lr must be positive");
    require(lr_decay_factor >= 1, "train: lr_decay_factor must be at least 1");
    require(patience >= 1, "train: patience must be at least 1");
    require(epochs >= 0, "train: epochs must be non-negative");
    require(batch_size >= 1, "train: batch size must be positive");
    require(crop_margin >= 0, "train: crop margin must be non-negative");
    reg.validate();
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0, valid_loss = 0, metric = 0, lr = 0;
};

// epoch, train_loss, valid_loss, accuracy_or_epe, lr (tab-separated).
inline std::string format_log_line(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.6g", e.epoch, e.train_loss, e.valid_loss, e.metric, e.lr);
  return buf;
}

using LogSink = std::function<void(const EpochLog&)>;

// Divides the learning rate after `patience` consecutive epochs without a
// new best validation loss.
class PlateauSchedule {
 public:
  PlateauSchedule(double factor, int patience) : factor_(factor), patience_(patience) {}

  double update(double valid_loss, double lr) {
    if (valid_loss < best_) {
      best_ = valid_loss;
      wait_ = 0;
      return lr;
    }
    if (++wait_ >= patience_) {
      wait_ = 0;
      return lr / factor_;
    }
    return lr;
  }

 private:
  double factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
};

namespace detail {

template <typename T, typename Src>
nn::Tensor<T> gather_images(const std::vector<Src>& items, const std::vector<std::size_t>& idx, std::size_t lo,
                            std::size_t hi, const Image<float>& (*pick)(const Src&)) {
  const Image<float>& first = pick(items[idx[lo]]);
  const std::size_t w = first.width(), h = first.height();
  nn::Tensor<T> t({hi - lo, 1, h, w});
  for (std::size_t b = lo; b < hi; ++b) {
    const Image<float>& img = pick(items[idx[b]]);
    require(static_cast<std::size_t>(img.width()) == w && static_cast<std::size_t>(img.height()) == h,
            "batch: images differ in extent");
    std::copy(img.pixels().begin(), img.pixels().end(), t.data() + (b - lo) * w * h);
  }
  return t;
}

inline const Image<float>& pick_labeled(const data::LabeledImage& l) { return l.image; }
inline const Image<float>& pick_src(const data::WarpPair<float>& p) { return p.src; }
inline const Image<float>& pick_tgt(const data::WarpPair<float>& p) { return p.tgt; }

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

inline void check_loss(double loss, const std::string& where, int epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw Divergence(where + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                     std::to_string(batch));
}

inline std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1));
}

}  // namespace detail

struct ClassifyEval {
  double loss = 0, accuracy = 0;
};

template <typename T>
ClassifyEval evaluate_classify(HstnModel<T>& model, const std::vector<data::LabeledImage>& set, int batch_size = 64) {
  require(!set.empty(), "evaluate: empty dataset");
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < set.size(); lo += batch_size) {
    const std::size_t hi = std::min(set.size(), lo + batch_size);
    const auto x = detail::gather_images<T>(set, idx, lo, hi, &detail::pick_labeled);
    std::vector<int> labels;
    for (std::size_t i = lo; i < hi; ++i) labels.push_back(set[i].label);
    const auto f = model.forward_batch(x, nullptr, nn::Mode::eval);
    const auto xe = nn::softmax_xent(f.logits, labels);
    loss += static_cast<double>(xe.loss) * static_cast<double>(hi - lo);
    correct += xe.correct;
  }
  return {loss / set.size(), static_cast<double>(correct) / set.size()};
}

// Returns the per-epoch log; the metric column is validation accuracy.
template <typename T>
std::vector<EpochLog> train_classify(HstnModel<T>& model, const std::vector<data::LabeledImage>& train,
                                     const std::vector<data::LabeledImage>& valid, const TrainConfig& cfg,
                                     const LogSink& sink = {}) {
  cfg.validate();
  require(model.arch().task == Task::classify, "train_classify: model is configured for alignment");
  require(!train.empty(), "train_classify: empty training set");
  require(!valid.empty(), "train_classify: empty validation set");
  nn::Adam<T> opt(model.trainable_params(), {cfg.lr});
  PlateauSchedule sched(cfg.lr_decay_factor, cfg.patience);
  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto idx = detail::shuffled(train.size(), detail::epoch_seed(cfg.seed, epoch));
    double total = 0;
    std::size_t batch = 0;
    for (std::size_t lo = 0; lo < train.size(); lo += cfg.batch_size, ++batch) {
      const std::size_t hi = std::min(train.size(), lo + cfg.batch_size);
      const auto x = detail::gather_images<T>(train, idx, lo, hi, &detail::pick_labeled);
      std::vector<int> labels;
      for (std::size_t i = lo; i < hi; ++i) labels.push_back(train[idx[i]].label);
      opt.zero_grad();
      const auto f = model.forward_batch(x, nullptr, nn::Mode::train);
      const auto xe = nn::softmax_xent(f.logits, labels);
      detail::check_loss(xe.loss, "train_classify", epoch, batch);
      model.backward_batch(f, &xe.grad, {}, {});
      opt.step();
      total += static_cast<double>(xe.loss) * static_cast<double>(hi - lo);
    }
    const auto ev = evaluate_classify(model, valid);
    detail::check_loss(ev.loss, "train_classify (validation)", epoch, 0);
    EpochLog e{epoch, total / train.size(), ev.loss, ev.accuracy, opt.lr()};
    log.push_back(e);
    if (sink) sink(e);
    opt.set_lr(sched.update(ev.loss, opt.lr()));
  }
  return log;
}

struct AlignEval {
  double loss = 0;  // photometric + penalties
  double epe = 0;   // mean epe_flow of the composed field vs ground truth
};

namespace detail {

template <typename T>
struct AlignBatchLoss {
  double loss = 0;
  std::vector<Image<T>> grad_warped;
  std::vector<MotionField<T>> grad_flow;
};

// Mean over the batch of photometric loss plus, when the flow generator ran,
// alpha * bending + beta * smoothness of the flow.
template <typename T>
AlignBatchLoss<T> align_loss(const BatchForward<T>& f, const nn::Tensor<T>& tgt, const TrainConfig& cfg) {
  AlignBatchLoss<T> r;
  const std::size_t n = f.warped.size();
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto lg = photometric_loss(f.warped[i], image_from(tgt, i), cfg.crop_margin);
    r.loss += static_cast<double>(lg.loss);
    for (auto& g : lg.grad.pixels()) g *= inv;
    r.grad_warped.push_back(std::move(lg.grad));
    if (f.flow_ran && (cfg.reg.alpha > 0 || cfg.reg.beta > 0)) {
      auto rg = reg_loss_grad(f.flow[i], cfg.reg);
      r.loss += static_cast<double>(rg.loss);
      for (auto& g : rg.grad.vectors()) g *= inv;
      r.grad_flow.push_back(std::move(rg.grad));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace detail

template <typename T>
AlignEval evaluate_align(HstnModel<T>& model, const std::vector<data::WarpPair<float>>& set, const TrainConfig& cfg,
                         int batch_size = 32) {
  require(!set.empty(), "evaluate: empty pair set");
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  AlignEval ev;
  for (std::size_t lo = 0; lo < set.size(); lo += batch_size) {
    const std::size_t hi = std::min(set.size(), lo + batch_size);
    const auto src = detail::gather_images<T>(set, idx, lo, hi, &detail::pick_src);
    const auto tgt = detail::gather_images<T>(set, idx, lo, hi, &detail::pick_tgt);
    const auto f = model.forward_batch(src, &tgt, nn::Mode::eval);
    ev.loss += detail::align_loss(f, tgt, cfg).loss * static_cast<double>(hi - lo);
    for (std::size_t i = lo; i < hi; ++i)
      ev.epe += static_cast<double>(
          data::epe_flow(f.composed[i - lo], set[i].gt_field.template cast<T>(), cfg.crop_margin));
  }
  ev.loss /= set.size();
  ev.epe /= set.size();
  return ev;
}

// One alignment training phase over the model's currently trainable
// parameters. Epoch numbers in the log continue from `first_epoch`.
template <typename T>
std::vector<EpochLog> train_align(HstnModel<T>& model, const std::vector<data::WarpPair<float>>& train,
                                  const std::vector<data::WarpPair<float>>& valid, const TrainConfig& cfg,
                                  int first_epoch = 1, const LogSink& sink = {}) {
  cfg.validate();
  require(model.arch().task == Task::align, "train_align: model is configured for classification");
  require(!train.empty(), "train_align: empty training set");
  require(!valid.empty(), "train_align: empty validation set");
  nn::Adam<T> opt(model.trainable_params(), {cfg.lr});
  PlateauSchedule sched(cfg.lr_decay_factor, cfg.patience);
  std::vector<EpochLog> log;
  for (int k = 0; k < cfg.epochs; ++k) {
    const int epoch = first_epoch + k;
    const auto idx = detail::shuffled(train.size(), detail::epoch_seed(cfg.seed, epoch));
    double total = 0;
    std::size_t batch = 0;
    for (std::size_t lo = 0; lo < train.size(); lo += cfg.batch_size, ++batch) {
      const std::size_t hi = std::min(train.size(), lo + cfg.batch_size);
      const auto src = detail::gather_images<T>(train, idx, lo, hi, &detail::pick_src);
      const auto tgt = detail::gather_images<T>(train, idx, lo, hi, &detail::pick_tgt);
      opt.zero_grad();
      const auto f = model.forward_batch(src, &tgt, nn::Mode::train);
      auto l = detail::align_loss(f, tgt, cfg);
      detail::check_loss(l.loss, "train_align", epoch, batch);
      model.backward_batch(f, nullptr, std::move(l.grad_warped), l.grad_flow);
      opt.step();
      total += l.loss * static_cast<double>(hi - lo);
    }
    const auto ev = evaluate_align(model, valid, cfg);
    detail::check_loss(ev.loss, "train_align (validation)", epoch, 0);
    EpochLog e{epoch, total / train.size(), ev.loss, ev.epe, opt.lr()};
    log.push_back(e);
    if (sink) sink(e);
    opt.set_lr(sched.update(ev.loss, opt.lr()));
  }
  return log;
}

// Phase 1 trains the linear generator alone with the flow generator disabled
// (its head emits zero). Phase 2 trains all parameters with the flow penalties.
template <typename T>
std::vector<EpochLog> pretrain_linear_then_joint(HstnModel<T>& model, const std::vector<data::WarpPair<float>>& train,
                                                 const std::vector<data::WarpPair<float>>& valid,
                                                 const TrainConfig& cfg, int phase1_epochs, int phase2_epochs,
                                                 const LogSink& sink = {}) {
  require(phase1_epochs >= 0 && phase2_epochs >= 0, "pretrain: epoch counts must be non-negative");
  TrainConfig c = cfg;
  c.epochs = phase1_epochs;
  model.set_flow_enabled(false);
  auto log = train_align(model, train, valid, c, 1, sink);
  model.set_flow_enabled(true);
  c.epochs = phase2_epochs;
  auto log2 = train_align(model, train, valid, c, phase1_epochs + 1, sink);
  log.insert(log.end(), log2.begin(), log2.end());
  return log;
}

}  // namespace hstn
