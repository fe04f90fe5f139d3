// Command-line entry point: gen-data, train, align, gradcheck.
// Exit codes: 0 success, 1 validation failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hstn/config.hpp"
#include "hstn/data/dataset.hpp"
#include "hstn/data/metrics.hpp"
#include "hstn/direct_align.hpp"
#include "hstn/flowbase.hpp"
#include "hstn/gradcheck.hpp"
#include "hstn/neural/checkpoint.hpp"
#include "hstn/train.hpp"

namespace {

using namespace hstn;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> values;  // key -> flag value
  std::map<std::string, CLI::Option*> options;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

void add_keys(Subcommand& sc, const RunConfig& defaults, const std::vector<std::string>& keys) {
  sc.app->add_option("--config", sc.config_path, "key = value configuration file (flags override it)");
  for (const auto& k : keys) {
    sc.options[k] = sc.app->add_option(flag_name(k), sc.values[k], defaults.help(k) + " [" + defaults.str(k) + "]");
  }
}

RunConfig resolve(const Subcommand& sc) {
  RunConfig cfg;
  if (!sc.config_path.empty()) cfg.load_text(read_file_bytes(sc.config_path));
  for (const auto& [k, opt] : sc.options)
    if (opt->count() > 0) cfg.set(k, sc.values.at(k));
  return cfg;
}

std::string require_out(const RunConfig& cfg) {
  const std::string out = cfg.str("out");
  if (out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + out + "': " + ec.message());
  return out;
}

int positive(const RunConfig& cfg, const std::string& key) {
  const long v = cfg.integer(key);
  require(v > 0, key + " must be positive");
  return static_cast<int>(v);
}

data::AffineRanges affine_ranges(const RunConfig& cfg) {
  data::AffineRanges r{cfg.real("scale_lo"), cfg.real("scale_hi"), cfg.real("rotation"), cfg.real("translation"),
                       cfg.real("shear")};
  r.validate();
  return r;
}

std::string manifest_text(const RunConfig& cfg, const std::vector<std::string>& notes) {
  std::string out = cfg.to_text();
  for (const auto& n : notes) out += "# " + n + "\n";
  return out;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const RunConfig& cfg) {
  const std::string kind = cfg.str("kind");
  if (kind != "digits" && kind != "cluttered" && kind != "pairs")
    throw UsageError("--kind must be digits, cluttered or pairs");
  const std::string out = require_out(cfg);
  const long n = cfg.integer("n");
  require(n >= 0, "n must be non-negative");
  SplitMix64 rng(cfg.u64("seed"));
  std::vector<std::string> files;

  if (kind == "digits") {
    data::DigitStyle style{cfg.real("digit_rotation"), cfg.real("digit_min_scale"), cfg.real("digit_max_scale")};
    const auto digits = data::make_digits(static_cast<std::size_t>(n), rng.next(), positive(cfg, "digit_size"), style);
    data::write_labeled_dir(out, digits);
    files = {"images.idx", "labels.idx"};
  } else if (kind == "cluttered") {
    if (cfg.str("digits_images").empty() || cfg.str("digits_labels").empty())
      throw UsageError("--kind cluttered needs --digits-images and --digits-labels");
    const auto raw = data::read_idx_labeled(cfg.str("digits_images"), cfg.str("digits_labels"));
    require(!raw.empty() || n == 0, "digit archive is empty");
    const int canvas = positive(cfg, "canvas");
    const int distractors = static_cast<int>(cfg.integer("n_distractors"));
    std::vector<data::LabeledImage> set;
    for (long i = 0; i < n; ++i)
      set.push_back(data::make_cluttered(raw[static_cast<std::size_t>(i) % raw.size()], canvas, canvas, distractors,
                                         rng.next(), raw));
    data::write_labeled_dir(out, set);
    files = {"images.idx", "labels.idx"};
  } else {
    const auto ranges = affine_ranges(cfg);
    const bool have_base = !cfg.str("base").empty();
    const Image<float> base = have_base ? data::read_pgm(cfg.str("base")) : Image<float>(1, 1);
    const int size = positive(cfg, "pair_size");
    std::vector<data::WarpPair<float>> pairs;
    for (long i = 0; i < n; ++i) {
      const std::uint64_t tex_seed = rng.next(), pair_seed = rng.next();
      const Image<float> b = have_base ? base : data::make_texture(size, size, tex_seed);
      pairs.push_back(data::make_warp_pair(b, ranges, cfg.real("elastic_sigma"), cfg.real("elastic_amplitude"), pair_seed));
    }
    files = data::write_pairs_dir(out, pairs);
    std::string meta;
    for (std::size_t i = 0; i < pairs.size(); ++i) meta += data::pair_name(i, "meta", "txt") + "\t" + pairs[i].meta() + "\n";
    write_file_atomic(data::join(out, "pairs_meta.tsv"), meta);
    files.push_back("pairs_meta.tsv");
  }
  std::vector<std::string> notes{"generated by: hstn gen-data --config manifest.txt"};
  for (const auto& f : files) notes.push_back("file " + f);
  write_file_atomic(data::join(out, "manifest.txt"), manifest_text(cfg, notes));
  std::printf("gen-data\t%s\t%ld\t%s\n", kind.c_str(), n, out.c_str());
  return 0;
}

// ---------------------------------------------------------------- train

ArchConfig arch_from(const RunConfig& cfg, int width, int height) {
  ArchConfig a;
  a.kind = parse_model_kind(cfg.str("model"));
  a.task = parse_task(cfg.str("task"));
  a.width = width;
  a.height = height;
  a.stn_filters = positive(cfg, "stn_filters");
  a.stn_kernel = positive(cfg, "stn_kernel");
  a.stn_blocks = static_cast<int>(cfg.integer("stn_blocks"));
  a.stn_hidden = positive(cfg, "stn_hidden");
  a.flow_filters = positive(cfg, "flow_filters");
  a.flow_depth = static_cast<int>(cfg.integer("flow_depth"));
  a.cls_filters = positive(cfg, "cls_filters");
  a.cls_blocks = static_cast<int>(cfg.integer("cls_blocks"));
  a.cls_hidden = positive(cfg, "cls_hidden");
  a.dropout = cfg.real("dropout");
  a.seed = cfg.u64("seed");
  return a;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.lr = cfg.real("lr");
  t.lr_decay_factor = cfg.real("lr_decay");
  t.patience = static_cast<int>(cfg.integer("patience"));
  t.epochs = static_cast<int>(cfg.integer("epochs"));
  t.batch_size = static_cast<int>(cfg.integer("batch_size"));
  t.seed = cfg.u64("seed");
  t.reg = {cfg.real("alpha"), cfg.real("beta")};
  t.crop_margin = static_cast<int>(cfg.integer("crop_margin"));
  t.validate();
  return t;
}

template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> split_holdout(std::vector<Item> all) {
  require(all.size() >= 2, "dataset needs at least 2 samples to hold out a validation part");
  const std::size_t nv = std::max<std::size_t>(1, all.size() / 10);
  std::vector<Item> valid(std::make_move_iterator(all.end() - nv), std::make_move_iterator(all.end()));
  all.resize(all.size() - nv);
  return {std::move(all), std::move(valid)};
}

int cmd_train(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  ModelKind kind;
  Task task;
  try {
    kind = parse_model_kind(cfg.str("model"));
    task = parse_task(cfg.str("task"));
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  if (kind == ModelKind::cnn && task == Task::align)
    throw UsageError("--model cnn has no warper and cannot be trained with --task align");
  if (cfg.str("data").empty()) throw UsageError("--data is required");
  const std::string out = require_out(cfg);
  const TrainConfig tc = train_config(cfg);

  std::string log_text;
  const LogSink sink = [&](const EpochLog& e) {
    const std::string line = format_log_line(e);
    log_text += line + "\n";
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };
  auto init_from = [&](HstnModel<float>& model) {
    if (cfg.str("init").empty()) return;
    const auto arrays = nn::decode_checkpoint(read_file_bytes(cfg.str("init")));
    const std::size_t restored = nn::restore(arrays, model.params());
    std::printf("init\t%zu/%zu parameters from %s\n", restored, model.params().size(), cfg.str("init").c_str());
  };
  std::string test_text;

  std::unique_ptr<HstnModel<float>> model;
  if (task == Task::classify) {
    auto train = data::read_labeled_dir(cfg.str("data"));
    std::vector<data::LabeledImage> valid;
    if (cfg.str("valid").empty()) {
      std::tie(train, valid) = split_holdout(std::move(train));
    } else {
      valid = data::read_labeled_dir(cfg.str("valid"));
    }
    require(!train.empty(), "training set is empty");
    const int w = cfg.integer("width") > 0 ? static_cast<int>(cfg.integer("width")) : train[0].image.width();
    const int h = cfg.integer("height") > 0 ? static_cast<int>(cfg.integer("height")) : train[0].image.height();
    cfg.set("width", std::to_string(w));
    cfg.set("height", std::to_string(h));
    model = std::make_unique<HstnModel<float>>(arch_from(cfg, w, h));
    init_from(*model);
    train_classify(*model, train, valid, tc, sink);
    if (!cfg.str("test").empty()) {
      const auto ev = evaluate_classify(*model, data::read_labeled_dir(cfg.str("test")));
      char buf[128];
      std::snprintf(buf, sizeof buf, "test_loss\ttest_accuracy\n%.6f\t%.6f\n", ev.loss, ev.accuracy);
      test_text = buf;
    }
  } else {
    auto train = data::read_pairs_dir(cfg.str("data"));
    std::vector<data::WarpPair<float>> valid;
    if (cfg.str("valid").empty()) {
      std::tie(train, valid) = split_holdout(std::move(train));
    } else {
      valid = data::read_pairs_dir(cfg.str("valid"));
    }
    const int w = train[0].src.width(), h = train[0].src.height();
    cfg.set("width", std::to_string(w));
    cfg.set("height", std::to_string(h));
    model = std::make_unique<HstnModel<float>>(arch_from(cfg, w, h));
    init_from(*model);
    if (kind == ModelKind::hstn) {
      pretrain_linear_then_joint(*model, train, valid, tc, static_cast<int>(cfg.integer("phase1_epochs")),
                                 static_cast<int>(cfg.integer("phase2_epochs")), sink);
    } else {
      train_align(*model, train, valid, tc, 1, sink);
    }
    if (!cfg.str("test").empty()) {
      const auto ev = evaluate_align(*model, data::read_pairs_dir(cfg.str("test")), tc);
      char buf[128];
      std::snprintf(buf, sizeof buf, "test_loss\ttest_epe_flow\n%.6f\t%.6f\n", ev.loss, ev.epe);
      test_text = buf;
    }
  }

  const std::string ckpt = data::join(out, "model.ckpt");
  write_file_atomic(ckpt, nn::encode_checkpoint(nn::snapshot(model->params())));
  write_file_atomic(ckpt + ".manifest", manifest_text(cfg, {"architecture and training configuration of model.ckpt"}));
  write_file_atomic(data::join(out, "log.tsv"), log_text);
  if (!test_text.empty()) {
    write_file_atomic(data::join(out, "test.tsv"), test_text);
    std::printf("test\t%s", test_text.substr(test_text.find('\n') + 1).c_str());
  }
  return 0;
}

// ---------------------------------------------------------------- align

int cmd_align(const RunConfig& cfg, const std::string& src_path, const std::string& tgt_path) {
  const std::string method = cfg.str("method");
  if (method != "direct" && method != "hstn" && method != "flow" && method != "affine")
    throw UsageError("--method must be direct, hstn, flow or affine");
  if (method == "hstn" && cfg.str("checkpoint").empty()) throw UsageError("--method hstn needs --checkpoint");
  const std::string out = require_out(cfg);
  const Image<float> src = data::read_pgm(src_path), tgt = data::read_pgm(tgt_path);
  require_same_extent(src, tgt, "align");
  const int margin = static_cast<int>(cfg.integer("crop_margin"));
  Crop::centered(src.width(), src.height(), margin);

  const auto t0 = std::chrono::steady_clock::now();
  AlignResult<float> r;
  if (method == "direct" || method == "affine") {
    DirectConfig dc;
    dc.affine_steps = static_cast<int>(cfg.integer("affine_steps"));
    dc.affine_lr = cfg.real("affine_lr");
    dc.affine_blur = cfg.reals("affine_blur");
    dc.flow_steps = static_cast<int>(cfg.integer("flow_steps"));
    dc.flow_lr = cfg.real("flow_lr");
    dc.reg = {cfg.real("direct_alpha"), cfg.real("direct_beta")};
    dc.crop_margin = margin;
    dc.flow_stage = method == "direct";
    r = direct_align(src, tgt, dc);
  } else if (method == "flow") {
    PyramidConfig pc;
    pc.levels = static_cast<int>(cfg.integer("levels"));
    pc.scale_factor = cfg.real("scale_factor");
    pc.iterations = static_cast<int>(cfg.integer("iterations"));
    pc.lambda = cfg.real("lambda");
    pc.warps_per_level = static_cast<int>(cfg.integer("warps"));
    r.flow = coarse_to_fine(src, tgt, pc);
    r.composed = r.flow;
    r.warped = sample_bilinear(src, r.composed);
    r.final_loss = photometric_loss(r.warped, tgt, margin).loss;
  } else {
    RunConfig arch_cfg;
    arch_cfg.load_text(read_file_bytes(cfg.str("checkpoint") + ".manifest"));
    const ArchConfig arch =
        arch_from(arch_cfg, static_cast<int>(arch_cfg.integer("width")), static_cast<int>(arch_cfg.integer("height")));
    require(arch.task == Task::align, "checkpoint was trained for classification, not alignment");
    require(arch.width == src.width() && arch.height == src.height(),
            "checkpoint expects " + std::to_string(arch.width) + "x" + std::to_string(arch.height) + " images");
    HstnModel<float> model(arch);
    const auto arrays = nn::decode_checkpoint(read_file_bytes(cfg.str("checkpoint")));
    const std::size_t restored = nn::restore(arrays, model.params());
    require(restored == model.params().size(), "checkpoint does not cover every model parameter");
    r = forward_pair(model, src, tgt, margin);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  data::write_pgm(data::join(out, "warped.pgm"), r.warped);
  data::write_flo(data::join(out, "field.flo"), r.composed);
  write_file_atomic(data::join(out, "align.manifest"),
                    manifest_text(cfg, {"src " + src_path, "tgt " + tgt_path, "affine " + format_affine(r.affine)}));

  const double epe_img = data::epe_image(r.warped, tgt, margin);
  std::string epe_flow = "-";
  if (!cfg.str("gt").empty()) {
    const auto gt = data::read_flo(cfg.str("gt"));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(data::epe_flow(r.composed, gt, margin)));
    epe_flow = buf;
  }
  std::printf("%s\t%.6f\t%s\t%.6f\n", method.c_str(), epe_img, epe_flow.c_str(), seconds);
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const RunConfig& cfg) {
  gradcheck::Options opt;
  opt.seed = cfg.u64("seed");
  opt.corrupt = cfg.str("corrupt");
  const std::string module = cfg.str("module");
  if (module != "all" && std::find(gradcheck::modules().begin(), gradcheck::modules().end(), module) ==
                             gradcheck::modules().end())
    throw UsageError("--module must be grid, affine, regularize, neural, hstn or all");
  const auto results = gradcheck::run(module, opt);
  std::printf("%s\n", gradcheck::header_row().c_str());
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::printf("%s\n", gradcheck::format_row(r).c_str());
    if (!r.pass) ++failed;
  }
  std::printf("summary\t%zu checks\t%zu failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const RunConfig defaults;
  CLI::App app{"Hierarchical spatial transformer networks: data, training, alignment, gradient checks"};
  app.require_subcommand(1);

  Subcommand gen;
  gen.app = app.add_subcommand("gen-data", "generate digits, cluttered canvases or warp pairs");
  add_keys(gen, defaults,
           {"kind", "out", "seed", "n", "digits_images", "digits_labels", "canvas", "digit_size", "digit_rotation",
            "digit_min_scale", "digit_max_scale", "n_distractors", "pair_size", "base", "scale_lo", "scale_hi",
            "rotation", "translation", "shear", "elastic_sigma", "elastic_amplitude"});

  Subcommand train;
  train.app = app.add_subcommand("train", "train a classifier or an alignment network");
  add_keys(train, defaults,
           {"task", "model", "data", "valid", "test", "out", "seed", "init", "epochs", "phase1_epochs",
            "phase2_epochs", "batch_size", "lr", "lr_decay", "patience", "alpha", "beta", "crop_margin", "width",
            "height", "stn_filters", "stn_kernel", "stn_blocks", "stn_hidden", "flow_filters", "flow_depth",
            "cls_filters", "cls_blocks", "cls_hidden", "dropout"});

  Subcommand align;
  align.app = app.add_subcommand("align", "align src.pgm onto tgt.pgm");
  std::string src_path, tgt_path;
  align.app->add_option("src", src_path, "source image (PGM)")->required();
  align.app->add_option("tgt", tgt_path, "target image (PGM)")->required();
  add_keys(align, defaults,
           {"method", "out", "seed", "checkpoint", "gt", "crop_margin", "levels", "scale_factor", "iterations",
            "lambda", "warps", "affine_steps", "affine_lr", "affine_blur", "flow_steps", "flow_lr", "direct_alpha", "direct_beta"});

  Subcommand grad;
  grad.app = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  add_keys(grad, defaults, {"module", "seed", "corrupt"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen.app->parsed()) return cmd_gen_data(resolve(gen));
    if (train.app->parsed()) return cmd_train(resolve(train));
    if (align.app->parsed()) return cmd_align(resolve(align), src_path, tgt_path);
    if (grad.app->parsed()) return cmd_gradcheck(resolve(grad));
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
