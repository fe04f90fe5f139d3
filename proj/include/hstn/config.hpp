#pragma once

// Run configuration: a fixed set of typed keys with defaults, loadable from
// "key = value" text ('#' starts a comment). Unknown keys and unparsable
// values are rejected. to_text() emits every key in sorted order and is used
// as the manifest accompanying generated artifacts.

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hstn/errors.hpp"

namespace hstn {

class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

enum class ValueType { integer, real, text };

class RunConfig {
 public:
  RunConfig() {
    // Generation
    def("seed", ValueType::integer, "1", "master random seed");
    def("kind", ValueType::text, "pairs", "gen-data kind: digits, cluttered or pairs");
    def("n", ValueType::integer, "8", "number of generated samples");
    def("digits_images", ValueType::text, "", "IDX image archive of raw digits (cluttered kind)");
    def("digits_labels", ValueType::text, "", "IDX label archive of raw digits (cluttered kind)");
    def("canvas", ValueType::integer, "40", "cluttered canvas extent");
    def("digit_size", ValueType::integer, "28", "rendered digit extent");
    def("digit_rotation", ValueType::real, "17", "max rendered digit rotation, degrees");
    def("digit_min_scale", ValueType::real, "0.75", "min rendered digit scale");
    def("digit_max_scale", ValueType::real, "1.0", "max rendered digit scale");
    def("n_distractors", ValueType::integer, "6", "distractor patches per canvas");
    def("pair_size", ValueType::integer, "32", "warp pair extent (procedural bases)");
    def("base", ValueType::text, "", "optional PGM base image for warp pairs");
    def("scale_lo", ValueType::real, "0.85", "affine scale range low");
    def("scale_hi", ValueType::real, "1.15", "affine scale range high");
    def("rotation", ValueType::real, "15", "affine rotation range, degrees (symmetric)");
    def("translation", ValueType::real, "0.2", "affine translation range, fraction of half-extent");
    def("shear", ValueType::real, "0.1", "affine shear range (symmetric)");
    def("elastic_sigma", ValueType::real, "4", "elastic smoothing width, pixels");
    def("elastic_amplitude", ValueType::real, "2", "elastic max displacement, pixels");
    // Training
    def("data", ValueType::text, "", "dataset directory");
    def("valid", ValueType::text, "", "validation dataset directory (default: hold out 10%)");
    def("test", ValueType::text, "", "test dataset directory, evaluated after training");
    def("task", ValueType::text, "classify", "classify or align");
    def("model", ValueType::text, "hstn", "cnn, affine-stn or hstn");
    def("init", ValueType::text, "", "checkpoint whose matching parameters initialize the model");
    def("epochs", ValueType::integer, "10", "training epochs (classification, affine-stn alignment)");
    def("phase1_epochs", ValueType::integer, "5", "hstn alignment: linear-generator pretraining epochs");
    def("phase2_epochs", ValueType::integer, "5", "hstn alignment: joint training epochs");
    def("batch_size", ValueType::integer, "32", "minibatch size");
    def("lr", ValueType::real, "1e-4", "initial Adam learning rate");
    def("lr_decay", ValueType::real, "10", "learning-rate divisor on plateau");
    def("patience", ValueType::integer, "3", "epochs without validation improvement before decay");
    def("alpha", ValueType::real, "0.01", "bending-energy weight (training)");
    def("beta", ValueType::real, "1", "smoothness weight (training)");
    def("crop_margin", ValueType::integer, "4", "border excluded from losses and metrics");
    def("width", ValueType::integer, "0", "model image width (0: taken from the data)");
    def("height", ValueType::integer, "0", "model image height (0: taken from the data)");
    def("stn_filters", ValueType::integer, "20", "linear generator conv filters");
    def("stn_kernel", ValueType::integer, "5", "linear generator conv kernel");
    def("stn_blocks", ValueType::integer, "3", "linear generator conv/pool blocks");
    def("stn_hidden", ValueType::integer, "50", "linear generator hidden units");
    def("flow_filters", ValueType::integer, "8", "flow generator base filters");
    def("flow_depth", ValueType::integer, "2", "flow generator downsampling steps");
    def("cls_filters", ValueType::integer, "32", "classifier conv filters");
    def("cls_blocks", ValueType::integer, "3", "classifier conv/pool blocks");
    def("cls_hidden", ValueType::integer, "256", "classifier hidden units");
    def("dropout", ValueType::real, "0.5", "classifier dropout rate");
    // Alignment
    def("method", ValueType::text, "direct", "direct, hstn, flow or affine");
    def("checkpoint", ValueType::text, "", "trained alignment checkpoint (method hstn)");
    def("gt", ValueType::text, "", "ground-truth FLO for epe_flow");
    def("levels", ValueType::integer, "3", "flow pyramid levels");
    def("scale_factor", ValueType::real, "0.5", "flow pyramid shrink per level");
    def("iterations", ValueType::integer, "100", "flow Jacobi iterations per warp");
    def("lambda", ValueType::real, "0.1", "flow smoothness weight");
    def("warps", ValueType::integer, "1", "flow re-linearizations per level");
    def("affine_steps", ValueType::integer, "300", "direct: affine descent steps");
    def("affine_lr", ValueType::real, "0.02", "direct: affine learning rate");
    def("affine_blur", ValueType::text, "4,0", "direct: comma-separated Gaussian widths of the affine rounds");
    def("flow_steps", ValueType::integer, "1000", "direct: flow descent steps");
    def("flow_lr", ValueType::real, "0.2", "direct: flow learning rate, pixels");
    def("direct_alpha", ValueType::real, "0.001", "direct: bending-energy weight");
    def("direct_beta", ValueType::real, "0.0001", "direct: smoothness weight");
    // Gradient check
    def("module", ValueType::text, "all", "gradcheck module: grid, affine, regularize, neural, hstn or all");
    def("corrupt", ValueType::text, "", "gradcheck negative control: operation to corrupt");
    def("out", ValueType::text, "", "output directory");
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& help(const std::string& key) const { return entry(key).help; }
  ValueType type(const std::string& key) const { return entry(key).type; }
  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [name, e] : entries_) k.push_back(name);
    return k;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    check_type(key, it->second.type, value);
    it->second.value = value;
  }

  const std::string& str(const std::string& key) const { return entry(key).value; }
  long integer(const std::string& key) const { return std::strtol(entry(key).value.c_str(), nullptr, 10); }
  std::uint64_t u64(const std::string& key) const { return std::strtoull(entry(key).value.c_str(), nullptr, 10); }
  double real(const std::string& key) const { return std::strtod(entry(key).value.c_str(), nullptr); }

  // Comma-separated finite numbers.
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream in(entry(key).value);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      const std::string t = trim(tok);
      char* end = nullptr;
      const double d = std::strtod(t.c_str(), &end);
      if (t.empty() || *end != '\0' || !std::isfinite(d))
        throw ConfigError("config key '" + key + "' expects comma-separated numbers, got '" + entry(key).value + "'");
      out.push_back(d);
    }
    return out;
  }

  void load_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      try {
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
    return out;
  }

 private:
  struct Entry {
    ValueType type;
    std::string value;
    std::string help;
  };

  void def(const std::string& key, ValueType t, const std::string& value, const std::string& help) {
    entries_[key] = {t, value, help};
  }

  const Entry& entry(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static void check_type(const std::string& key, ValueType t, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    switch (t) {
      case ValueType::integer:
        std::strtoll(v.c_str(), &end, 10);
        if (v.empty() || *end != '\0' || errno == ERANGE)
          throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
        break;
      case ValueType::real: {
        const double d = std::strtod(v.c_str(), &end);
        if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(d))
          throw ConfigError("config key '" + key + "' expects a finite number, got '" + v + "'");
        break;
      }
      case ValueType::text:
        if (v.find('\n') != std::string::npos) throw ConfigError("config key '" + key + "' contains a newline");
        break;
    }
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace hstn
