#pragma once

// Experiment configuration as a JSON document with nested sections. Parsing
// starts from a preset and overlays the file; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "slotid/analysis/contrast.hpp"
#include "slotid/analysis/irreducibility.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/hash.hpp"
#include "slotid/metrics/kernel_ridge.hpp"
#include "slotid/synth/generator.hpp"
#include "slotid/synth/latents.hpp"
#include "slotid/train/trainer.hpp"

namespace slotid::experiments {

using Json = nlohmann::json;

/// Malformed or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Preset { paper, desk };

inline std::string to_string(Preset p) { return p == Preset::paper ? "paper" : "desk"; }

inline Preset preset_from_string(const std::string& s) {
  if (s == "paper") return Preset::paper;
  if (s == "desk") return Preset::desk;
  throw ConfigError("unknown preset '" + s + "' (expected paper or desk)");
}

struct GeneratorConfig {
  std::vector<std::size_t> slots{2, 3, 5};
  std::size_t slot_dim = 3;
  std::size_t slot_out = 20;
  std::size_t hidden = 0;  // 0 = slot_out
  double weight_range = synth::kDefaultWeightRange;
  double leaky_slope = diff::kDefaultLeakySlope;
  std::uint64_t seed = 0;
  std::size_t rank_probes = 20;
};

struct ValidationConfig {
  std::size_t probes = 100;
  std::size_t partition_budget = analysis::kDefaultPartitionBudget;
  double rank_tolerance = analysis::kAnalyticRankTolerance;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  Preset preset = Preset::paper;
  GeneratorConfig generator;
  synth::LatentKind latents = synth::LatentKind::independent;
  std::size_t train_size = 75000;
  std::size_t val_size = 6000;
  std::size_t test_size = 5000;
  bool standardize = true;
  std::vector<double> lambdas{1e-7, 1e-5, 1e-2, 0.0, 1.0, 10.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t decay_epoch = 50;
  double decay_factor = 10.0;
  std::size_t eval_period = 4;
  std::size_t model_hidden = train::kDefaultHidden;
  double model_leaky_slope = diff::kDefaultLeakySlope;
  analysis::ContrastVariant loss_contrast = analysis::ContrastVariant::raw;
  bool latent_scaled_contrast = false;
  train::AdamConfig adam;
  double divergence_threshold = 1e12;
  metrics::ReadoutConfig readout;
  std::size_t contrast_samples = 1000;
  ValidationConfig validation;
  std::string output_dir = "out";

  static ExperimentConfig from_preset(Preset p) {
    ExperimentConfig c;
    c.preset = p;
    if (p == Preset::desk) {
      c.generator.slots = {2};
      c.train_size = 10000;
      c.val_size = 1000;
      c.test_size = 1000;
      c.lambdas = {0.0, 1.0};
      c.seeds = {0, 1, 2, 3, 4};
      c.epochs = 40;
      c.decay_epoch = 20;
    }
    return c;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (generator.slots.empty()) fail("generator.slots must be a non-empty list");
    for (std::size_t k : generator.slots) {
      if (k < 1) fail("generator.slots entries must be at least 1");
    }
    if (generator.slot_dim < 1) fail("generator.slot_dim must be at least 1");
    if (generator.slot_out <= generator.slot_dim) {
      fail("generator.slot_out (" + std::to_string(generator.slot_out) + ") must exceed generator.slot_dim (" +
           std::to_string(generator.slot_dim) + ")");
    }
    if (!(generator.weight_range > 0.0)) fail("generator.weight_range must be positive");
    if (generator.rank_probes < 1) fail("generator.rank_probes must be at least 1");
    if (train_size < 2 || val_size < 2 || test_size < 2) fail("data sizes must be at least 2");
    if (lambdas.empty()) fail("train.lambdas must be a non-empty list");
    for (double l : lambdas) {
      if (!(l >= 0.0)) fail("train.lambdas entries must be non-negative");
    }
    if (seeds.empty()) fail("train.seeds must be a non-empty list");
    if (batch_size < 1) fail("train.batch_size must be at least 1");
    if (eval_period < 1) fail("train.eval_period must be at least 1");
    if (!(learning_rate > 0.0)) fail("train.learning_rate must be positive");
    if (!(decay_factor > 0.0)) fail("train.decay_factor must be positive");
    if (model_hidden < 1) fail("train.hidden must be at least 1");
    if (!(readout.ridge > 0.0)) fail("metrics.ridge must be positive");
    if (!(readout.bandwidth >= 0.0)) fail("metrics.bandwidth must be non-negative (0 = median heuristic)");
    if (validation.probes < 1) fail("validation.probes must be at least 1");
    if (output_dir.empty()) fail("output.dir must not be empty");
  }

  /// Training configuration for one grid cell.
  [[nodiscard]] train::TrainConfig train_config(double lambda, std::uint64_t seed) const {
    train::TrainConfig t;
    t.lambda = lambda;
    t.seed = seed;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.decay_epoch = decay_epoch;
    t.decay_factor = decay_factor;
    t.eval_period = eval_period;
    t.loss_variant = loss_contrast;
    t.latent_scaled_contrast = latent_scaled_contrast;
    t.hidden = model_hidden;
    t.leaky_slope = model_leaky_slope;
    t.adam = adam;
    t.train_size = train_size;
    t.val_size = val_size;
    t.test_size = test_size;
    t.standardize = standardize;
    t.divergence_threshold = divergence_threshold;
    t.readout = readout;
    t.contrast_eval_samples = contrast_samples;
    return t;
  }
};

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["preset"] = to_string(c.preset);
  j["generator"] = {{"slots", c.generator.slots},
                    {"slot_dim", c.generator.slot_dim},
                    {"slot_out", c.generator.slot_out},
                    {"hidden", c.generator.hidden},
                    {"weight_range", c.generator.weight_range},
                    {"leaky_slope", c.generator.leaky_slope},
                    {"seed", c.generator.seed},
                    {"rank_probes", c.generator.rank_probes}};
  j["latents"] = {{"kind", synth::to_string(c.latents)}};
  j["data"] = {{"train", c.train_size}, {"val", c.val_size}, {"test", c.test_size}, {"standardize", c.standardize}};
  j["train"] = {{"lambdas", c.lambdas},
                {"seeds", c.seeds},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"decay_epoch", c.decay_epoch},
                {"decay_factor", c.decay_factor},
                {"eval_period", c.eval_period},
                {"hidden", c.model_hidden},
                {"leaky_slope", c.model_leaky_slope},
                {"loss_contrast", analysis::to_string(c.loss_contrast)},
                {"latent_scaled_contrast", c.latent_scaled_contrast},
                {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
                {"divergence_threshold", c.divergence_threshold}};
  j["metrics"] = {{"bandwidth", c.readout.bandwidth},
                  {"ridge", c.readout.ridge},
                  {"max_fit_samples", c.readout.max_fit_samples},
                  {"contrast_samples", c.contrast_samples}};
  j["validation"] = {{"probes", c.validation.probes},
                     {"partition_budget", c.validation.partition_budget},
                     {"rank_tolerance", c.validation.rank_tolerance},
                     {"seed", c.validation.seed}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) keys_.push_back(it.key());
  }

  template <class T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("expected a string");
      }
      out = it->get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <class T>
  void get_list(const char* key, std::vector<T>& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used(key);
    if (!it->is_array()) throw ConfigError(where(key) + ": expected a list");
    std::vector<T> v;
    for (const Json& e : *it) {
      if constexpr (std::is_same_v<T, double>) {
        if (!e.is_number()) throw ConfigError(where(key) + ": expected numbers");
      } else {
        if (!e.is_number_unsigned()) throw ConfigError(where(key) + ": expected non-negative integers");
      }
      v.push_back(e.get<T>());
    }
    out = std::move(v);
  }

  Reader section(const char* key) {
    const auto it = j_.find(key);
    used(key);
    static const Json empty = Json::object();
    return {it == j_.end() ? empty : *it, path_.empty() ? key : path_ + "." + key};
  }

  void finish() const {
    for (const auto& k : keys_) {
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + where(k.c_str()) + "'");
    }
  }

 private:
  void used(const std::string& k) { seen_.insert(k); }
  [[nodiscard]] std::string where(const char* key = nullptr) const {
    if (key == nullptr) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const Json& j_;
  std::string path_;
  std::vector<std::string> keys_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Overlays `j` on the preset it names (or `base` when it names none).
inline ExperimentConfig from_json(const Json& j, Preset base = Preset::paper) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset: expected a string");
    base = preset_from_string(j["preset"].get<std::string>());
  }
  ExperimentConfig c = ExperimentConfig::from_preset(base);
  detail::Reader root(j, "");
  std::string preset_name = to_string(base);
  root.get("preset", preset_name);

  auto g = root.section("generator");
  g.get_list("slots", c.generator.slots);
  g.get("slot_dim", c.generator.slot_dim);
  g.get("slot_out", c.generator.slot_out);
  g.get("hidden", c.generator.hidden);
  g.get("weight_range", c.generator.weight_range);
  g.get("leaky_slope", c.generator.leaky_slope);
  g.get("seed", c.generator.seed);
  g.get("rank_probes", c.generator.rank_probes);
  g.finish();

  auto l = root.section("latents");
  std::string kind = synth::to_string(c.latents);
  l.get("kind", kind);
  try {
    c.latents = synth::latent_kind_from_string(kind);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("latents.kind: ") + e.what());
  }
  l.finish();

  auto d = root.section("data");
  d.get("train", c.train_size);
  d.get("val", c.val_size);
  d.get("test", c.test_size);
  d.get("standardize", c.standardize);
  d.finish();

  auto t = root.section("train");
  t.get_list("lambdas", c.lambdas);
  t.get_list("seeds", c.seeds);
  t.get("epochs", c.epochs);
  t.get("batch_size", c.batch_size);
  t.get("learning_rate", c.learning_rate);
  t.get("decay_epoch", c.decay_epoch);
  t.get("decay_factor", c.decay_factor);
  t.get("eval_period", c.eval_period);
  t.get("hidden", c.model_hidden);
  t.get("leaky_slope", c.model_leaky_slope);
  std::string variant = analysis::to_string(c.loss_contrast);
  t.get("loss_contrast", variant);
  t.get("latent_scaled_contrast", c.latent_scaled_contrast);
  try {
    c.loss_contrast = analysis::contrast_variant_from_string(variant);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("train.loss_contrast: ") + e.what());
  }
  auto a = t.section("adam");
  a.get("beta1", c.adam.beta1);
  a.get("beta2", c.adam.beta2);
  a.get("epsilon", c.adam.epsilon);
  a.finish();
  t.get("divergence_threshold", c.divergence_threshold);
  t.finish();

  auto m = root.section("metrics");
  m.get("bandwidth", c.readout.bandwidth);
  m.get("ridge", c.readout.ridge);
  m.get("max_fit_samples", c.readout.max_fit_samples);
  m.get("contrast_samples", c.contrast_samples);
  m.finish();

  auto v = root.section("validation");
  v.get("probes", c.validation.probes);
  v.get("partition_budget", c.validation.partition_budget);
  v.get("rank_tolerance", c.validation.rank_tolerance);
  v.get("seed", c.validation.seed);
  v.finish();

  auto o = root.section("output");
  o.get("dir", c.output_dir);
  o.finish();

  root.finish();
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& text, Preset base = Preset::paper) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j, base);
}

inline ExperimentConfig load_config(const std::filesystem::path& path, Preset base = Preset::paper) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Stable identifier of one grid cell: hash of every setting that affects its
/// results (output location and the grid lists themselves excluded).
inline std::string run_id(const ExperimentConfig& c, std::size_t slots, double lambda, std::uint64_t seed) {
  Json j = to_json(c);
  j.erase("output");
  j.erase("validation");
  j.erase("preset");
  j["generator"].erase("slots");
  j["train"].erase("lambdas");
  j["train"].erase("seeds");
  j["cell"] = {{"slots", slots}, {"lambda", lambda}, {"seed", seed}};
  Fnv1a h;
  h.add(std::string_view(j.dump()));
  return h.hex();
}

}  // namespace slotid::experiments
