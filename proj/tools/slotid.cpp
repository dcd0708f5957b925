// slotid: experiment command line.
//
//   slotid validate-generator --config cfg.json
//   slotid run --config cfg.json --preset desk --out out --workers 4
//   slotid plotdata out/results.csv > points.csv
//   slotid analyze --checkpoint out/runs/<id>/checkpoint.bin --generator out/generators/K2.bin
//
// Exit codes: 0 success, 1 runtime failure (probe failure, unreadable or
// malformed input), 2 configuration or usage error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "slotid/experiments/analyze.hpp"
#include "slotid/experiments/config.hpp"
#include "slotid/experiments/csv.hpp"
#include "slotid/experiments/plotdata.hpp"
#include "slotid/experiments/runner.hpp"
#include "slotid/synth/validate.hpp"

namespace fs = std::filesystem;
using namespace slotid;
using experiments::ConfigError;
using experiments::ExperimentConfig;
using experiments::Preset;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  std::size_t workers = 0;
  std::uint64_t seed_offset = 0;
};

ExperimentConfig resolve_config(const Common& c) {
  const Preset base = c.preset.empty() ? Preset::paper : experiments::preset_from_string(c.preset);
  ExperimentConfig cfg =
      c.config.empty() ? ExperimentConfig::from_preset(base) : experiments::load_config(c.config, base);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed_offset != 0) {
    for (auto& s : cfg.seeds) s += c.seed_offset;
  }
  cfg.validate();
  return cfg;
}

int cmd_validate_generator(const Common& c) {
  const ExperimentConfig cfg = resolve_config(c);
  synth::ValidationOptions opt;
  opt.probe_count = cfg.validation.probes;
  opt.partition_budget = cfg.validation.partition_budget;
  opt.rank_tolerance = cfg.validation.rank_tolerance;
  opt.seed = cfg.validation.seed;
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  bool ok = true;
  for (std::size_t k : cfg.generator.slots) {
    const auto& g = cfg.generator;
    const synth::GeneratorSpec gen =
        synth::build_generator(k, g.slot_dim, g.slot_out, g.seed, g.weight_range, g.hidden, g.leaky_slope);
    const synth::ValidationReport rep = synth::validate_generator(gen, opt);
    const fs::path path = out / ("validation_K" + std::to_string(k) + ".txt");
    experiments::write_file_atomic(path, rep.to_text());
    std::cout << "K=" << k << " probes=" << rep.probes << " violations=" << rep.violations.size() << " "
              << (rep.passed() ? "PASS" : "FAIL") << " report=" << path.string() << "\n";
    ok = ok && rep.passed();
  }
  return ok ? 0 : kExitFailure;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = resolve_config(c);
  experiments::RunOptions opt;
  opt.workers = experiments::resolve_workers(c.workers);
  const experiments::GridSummary s = experiments::run_grid(cfg, opt);
  std::cout << "runs=" << s.total << " executed=" << s.executed << " skipped=" << s.skipped
            << " completed=" << s.completed << " diverged=" << s.diverged << " failed=" << s.failed << "\n"
            << "results=" << s.results_csv.string() << "\nfinal=" << s.final_csv.string() << "\n";
  return 0;
}

int cmd_plotdata(const std::string& input, const std::string& output) {
  std::ifstream in(input);
  if (!in) throw FormatError("cannot open results file '" + input + "'");
  const auto pts = experiments::read_plot_points(in, input);
  if (pts.empty()) std::cerr << "warning: no evaluation rows in '" << input << "'\n";
  std::ostringstream os;
  experiments::write_plot_points(os, pts);
  if (output.empty()) {
    std::cout << os.str();
  } else {
    experiments::write_file_atomic(output, os.str());
  }
  return 0;
}

struct AnalyzeArgs {
  std::string checkpoint;
  std::string generator;
  std::string latents = "independent";
  std::uint64_t latent_seed = 0;
  experiments::AnalyzeOptions opt;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const synth::GeneratorSpec gen = synth::load_generator(fs::path(a.generator));
  const synth::LatentKind kind = synth::latent_kind_from_string(a.latents);
  const synth::LatentDistribution dist = kind == synth::LatentKind::independent
                                             ? synth::LatentDistribution::independent(gen.latent_dim())
                                             : synth::LatentDistribution::correlated(gen.latent_dim(), a.latent_seed);
  experiments::StructureReport r;
  if (a.checkpoint.empty()) {
    r = experiments::analyze_generator(gen, dist, a.opt);
  } else {
    const train::Checkpoint ckpt = train::load_checkpoint(fs::path(a.checkpoint));
    r = experiments::analyze_checkpoint(ckpt, gen, dist, a.opt);
  }
  std::cout << r.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slot identifiability experiments"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool with_run_flags) {
    sub->add_option("--config", common.config, "Experiment configuration (JSON)");
    sub->add_option("--preset", common.preset, "Built-in defaults")->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--out", common.out, "Output directory");
    if (with_run_flags) {
      sub->add_option("--workers", common.workers, "Concurrent runs (fallback: SLOTPROV_WORKERS)");
      sub->add_option("--seed-offset", common.seed_offset, "Added to every seed in the grid");
    }
  };

  CLI::App* validate = app.add_subcommand("validate-generator", "Build and probe the ground-truth generators");
  add_common(validate, false);
  CLI::App* run = app.add_subcommand("run", "Train the (K, lambda, seed) grid");
  add_common(run, true);

  std::string plot_input;
  std::string plot_output;
  CLI::App* plot = app.add_subcommand("plotdata", "Scatter data from a combined results CSV");
  plot->add_option("results", plot_input, "Combined results CSV")->required();
  plot->add_option("-o,--output", plot_output, "Write here instead of stdout");

  AnalyzeArgs an;
  CLI::App* analyze = app.add_subcommand("analyze", "Structure report for a trained decoder or the generator");
  analyze->add_option("--checkpoint", an.checkpoint, "Model checkpoint; omit to analyze the generator itself");
  analyze->add_option("--generator", an.generator, "Generator file (.bin)")->required();
  analyze->add_option("--samples", an.opt.samples, "Fresh samples")->capture_default_str();
  analyze->add_option("--probes", an.opt.probes, "Latent points for Jacobian statistics")->capture_default_str();
  analyze->add_option("--seed", an.opt.seed, "Sampling seed")->capture_default_str();
  analyze->add_option("--rank-tolerance", an.opt.rank_tolerance, "Relative rank tolerance")->capture_default_str();
  analyze->add_option("--latents", an.latents, "Latent distribution")
      ->check(CLI::IsMember({"independent", "correlated"}))
      ->capture_default_str();
  analyze->add_option("--latent-seed", an.latent_seed, "Covariance seed for correlated latents")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (validate->parsed()) return cmd_validate_generator(common);
    if (run->parsed()) return cmd_run(common);
    if (plot->parsed()) return cmd_plotdata(plot_input, plot_output);
    if (analyze->parsed()) return cmd_analyze(an);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}
