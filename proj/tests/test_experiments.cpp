#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "slotid/experiments/analyze.hpp"
#include "slotid/experiments/config.hpp"
#include "slotid/experiments/csv.hpp"
#include "slotid/experiments/plotdata.hpp"
#include "slotid/experiments/runner.hpp"

using namespace slotid;
using namespace slotid::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("slotid_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10-run grid small enough for a unit test
ExperimentConfig tiny_grid(const fs::path& out) {
  ExperimentConfig c = ExperimentConfig::from_preset(Preset::desk);
  c.generator.slot_dim = 1;
  c.generator.slot_out = 4;
  c.train_size = 200;
  c.val_size = 100;
  c.test_size = 100;
  c.epochs = 4;
  c.eval_period = 2;
  c.batch_size = 50;
  c.model_hidden = 6;
  c.contrast_samples = 20;
  c.output_dir = out.string();
  return c;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SLOTID_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, PaperDefaults) {
  const ExperimentConfig c = ExperimentConfig::from_preset(Preset::paper);
  EXPECT_EQ(c.generator.slots, (std::vector<std::size_t>{2, 3, 5}));
  EXPECT_EQ(c.generator.slot_dim, 3u);
  EXPECT_EQ(c.generator.slot_out, 20u);
  EXPECT_EQ(c.train_size, 75000u);
  EXPECT_EQ(c.val_size, 6000u);
  EXPECT_EQ(c.test_size, 5000u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_EQ(c.decay_epoch, 50u);
  EXPECT_EQ(c.eval_period, 4u);
  EXPECT_EQ(c.lambdas, (std::vector<double>{1e-7, 1e-5, 1e-2, 0.0, 1.0, 10.0}));
  EXPECT_EQ(grid_cells(c).size(), 180u);
}

TEST(Config, DeskPreset) {
  const ExperimentConfig c = ExperimentConfig::from_preset(Preset::desk);
  EXPECT_EQ(c.train_size, 10000u);
  EXPECT_EQ(c.val_size, 1000u);
  EXPECT_EQ(c.test_size, 1000u);
  EXPECT_EQ(c.epochs, 40u);
  EXPECT_EQ(grid_cells(c).size(), 10u);
}

TEST(Config, RoundTripIsIdempotent) {
  ExperimentConfig c = ExperimentConfig::from_preset(Preset::desk);
  c.latents = synth::LatentKind::correlated;
  c.lambdas = {0.0, 0.5};
  c.learning_rate = 3e-4;
  const std::string once = serialize(c);
  const std::string twice = serialize(parse_config(once));
  EXPECT_EQ(once, twice);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config(R"({"generator": {"slot_out": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"lambdas": []}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"lambdas": [-1]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"epochz": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"preset": "huge"})"), ConfigError);
  try {
    load_config("/nonexistent/cfg.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
  }
}

TEST(Config, PartialFileOverlaysPreset) {
  const ExperimentConfig c = parse_config(R"({"preset": "desk", "train": {"seeds": [7]}})");
  EXPECT_EQ(c.train_size, 10000u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7}));
}

TEST(RunId, StableAndSensitive) {
  const ExperimentConfig a = ExperimentConfig::from_preset(Preset::desk);
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  b.seeds = {0};
  EXPECT_EQ(run_id(a, 2, 1.0, 0), run_id(b, 2, 1.0, 0));
  EXPECT_NE(run_id(a, 2, 1.0, 0), run_id(a, 2, 1.0, 1));
  EXPECT_NE(run_id(a, 2, 1.0, 0), run_id(a, 2, 0.0, 0));
  b.learning_rate = 1e-2;
  EXPECT_NE(run_id(a, 2, 1.0, 0), run_id(b, 2, 1.0, 0));
}

TEST(Csv, WriteAndParse) {
  std::ostringstream os;
  write_csv_row(os, {"a", "0;1", "2.5"});
  EXPECT_EQ(os.str(), "a,0;1,2.5\n");
  std::istringstream in("x,y\r\n1,0;1\n\n");
  const CsvTable t = parse_csv(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][1], "0;1");
  EXPECT_EQ(t.column("y"), 1u);
  EXPECT_THROW(t.column("z"), FormatError);
  std::istringstream bad("x,y\n1\n");
  EXPECT_THROW(parse_csv(bad), FormatError);
}

TEST(Csv, DoublesRoundTrip) {
  for (double v : {0.1, 1e-7, 123456.789, -2.5e-300}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(PlotData, SortedAndEchoed) {
  std::istringstream in(
      "run_id,K,lambda,seed,epoch,rec_normalized,contrast_normalized,sis\n"
      "b,2,1,1,4,0.1,0.2,0.3\n"
      "a,2,0,3,8,0.4,0.5,0.6\n"
      "a,2,0,3,4,0.7,0.8,0.9\n"
      "c,2,1,0,4,1.0,1.1,1.2\n");
  const auto pts = read_plot_points(in);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[0].lambda, 0.0);
  EXPECT_EQ(pts[0].epoch, 4u);
  EXPECT_EQ(pts[1].epoch, 8u);
  EXPECT_EQ(pts[2].seed, 0u);
  EXPECT_EQ(pts[3].seed, 1u);
  std::ostringstream os;
  write_plot_points(os, pts);
  EXPECT_EQ(os.str(),
            "rec_normalized,contrast_normalized,sis,K,lambda,seed,epoch\n"
            "0.7,0.8,0.9,2,0,3,4\n"
            "0.4,0.5,0.6,2,0,3,8\n"
            "1.0,1.1,1.2,2,1,0,4\n"
            "0.1,0.2,0.3,2,1,1,4\n");
}

TEST(PlotData, EmptyAndMalformed) {
  std::istringstream empty("");
  EXPECT_TRUE(read_plot_points(empty).empty());
  std::istringstream missing("K,lambda\n2,1\n");
  EXPECT_THROW(read_plot_points(missing), FormatError);
  std::istringstream bad("K,lambda,seed,epoch,rec_normalized,contrast_normalized,sis\n2,1,x,4,0,0,0\n");
  EXPECT_THROW(read_plot_points(bad), FormatError);
}

TEST(Grid, TenRunsThenIdempotentRerun) {
  const fs::path out = scratch("grid");
  const ExperimentConfig cfg = tiny_grid(out);
  RunOptions opt;
  opt.log = nullptr;
  const GridSummary first = run_grid(cfg, opt);
  EXPECT_EQ(first.total, 10u);
  EXPECT_EQ(first.executed, 10u);
  EXPECT_EQ(first.completed + first.diverged, 10u);
  std::size_t metric_files = 0;
  for (const auto& e : fs::directory_iterator(out / "runs")) {
    metric_files += fs::exists(e.path() / "metrics.csv") ? 1 : 0;
    EXPECT_TRUE(fs::exists(e.path() / "record.json"));
  }
  EXPECT_EQ(metric_files, 10u);
  EXPECT_TRUE(fs::exists(out / "generators" / "K2.bin"));

  const std::string results = slurp(first.results_csv);
  const CsvTable t = read_csv(first.results_csv);
  EXPECT_EQ(t.rows.size(), 20u);  // 10 runs x 2 evaluations
  EXPECT_EQ(read_csv(first.final_csv).rows.size(), 10u);

  const GridSummary again = run_grid(cfg, opt);
  EXPECT_EQ(again.executed, 0u);
  EXPECT_EQ(again.skipped, 10u);
  EXPECT_EQ(slurp(again.results_csv), results);

  // fresh directory, two workers: same bytes
  ExperimentConfig other = cfg;
  other.output_dir = scratch("grid2").string();
  opt.workers = 2;
  EXPECT_EQ(slurp(run_grid(other, opt).results_csv), results);

  std::istringstream in(results);
  EXPECT_EQ(read_plot_points(in).size(), 20u);
  fs::remove_all(out);
  fs::remove_all(other.output_dir);
}

TEST(Grid, FailedRunIsRetried) {
  const fs::path out = scratch("retry");
  ExperimentConfig cfg = tiny_grid(out);
  cfg.seeds = {0};
  cfg.lambdas = {0.0};
  RunOptions opt;
  opt.log = nullptr;
  run_grid(cfg, opt);
  const GridCell cell = grid_cells(cfg)[0];
  RunRecord r;
  r.run_id = cell.run_id;
  r.status = "failed";
  write_file_atomic(run_dir(out, cell.run_id) / "record.json", r.to_json().dump());
  EXPECT_FALSE(run_settled(out, cell));
  EXPECT_EQ(run_grid(cfg, opt).executed, 1u);
  fs::remove_all(out);
}

TEST(Workers, EnvironmentFallback) {
  EXPECT_EQ(resolve_workers(3), 3u);
  ::setenv("SLOTPROV_WORKERS", "4", 1);
  EXPECT_EQ(resolve_workers(0), 4u);
  ::setenv("SLOTPROV_WORKERS", "zero", 1);
  EXPECT_THROW(resolve_workers(0), ConfigError);
  ::unsetenv("SLOTPROV_WORKERS");
  EXPECT_EQ(resolve_workers(0), 1u);
}

TEST(Analyze, GeneratorAsDecoder) {
  const synth::GeneratorSpec gen = synth::build_valid_generator(2, 3, 20, 0);
  AnalyzeOptions opt;
  opt.samples = 2000;
  opt.probes = 50;
  const StructureReport r = analyze_generator(gen, synth::LatentDistribution::independent(6), opt);
  EXPECT_EQ(r.contrast_raw, 0.0);
  EXPECT_GE(r.sis.sis, 0.99);
  EXPECT_EQ(r.max_overlap_fraction, 0.0);
  EXPECT_EQ(r.mechanism_rank_min, 3u);
  EXPECT_NE(r.to_text().find("contrast raw=0"), std::string::npos);
}

TEST(Analyze, MismatchedCheckpoint) {
  const synth::GeneratorSpec gen = synth::build_generator(2, 3, 20, 0);
  train::Checkpoint ckpt;
  ckpt.spec = {3, 3, 60, 8};
  ckpt.state = train::TrainState(std::vector<double>(train::AutoEncoder(ckpt.spec).parameter_count()));
  EXPECT_THROW(analyze_checkpoint(ckpt, gen, synth::LatentDistribution::independent(6), {}), DimensionError);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  const fs::path log = dir / "log.txt";
  EXPECT_EQ(run_cli("--help", log), 0);
  EXPECT_EQ(run_cli("frobnicate", log), 2);
  EXPECT_EQ(run_cli("validate-generator --config " + (dir / "missing.json").string(), log), 2);
  EXPECT_NE(slurp(log).find("missing.json"), std::string::npos);

  std::ofstream(dir / "bad.json") << R"({"generator": {"slot_dim": 3, "slot_out": 3}})";
  EXPECT_EQ(run_cli("validate-generator --config " + (dir / "bad.json").string(), log), 2);
  EXPECT_NE(slurp(log).find("slot_out"), std::string::npos);

  std::ofstream(dir / "ok.json") << R"({"preset": "desk", "validation": {"probes": 20}})";
  EXPECT_EQ(run_cli("validate-generator --config " + (dir / "ok.json").string() + " --out " + (dir / "v").string(), log), 0);
  EXPECT_NE(slurp(log).find("PASS"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "v" / "validation_K2.txt"));

  std::ofstream(dir / "empty.csv").close();
  EXPECT_EQ(run_cli("plotdata " + (dir / "empty.csv").string(), log), 0);
  EXPECT_NE(slurp(log).find("warning"), std::string::npos);
  std::ofstream(dir / "bad.csv") << "K,lambda\n2\n";
  EXPECT_EQ(run_cli("plotdata " + (dir / "bad.csv").string(), log), 1);

  std::ofstream(dir / "trunc.bin") << "SLOTAE01abc";
  EXPECT_EQ(run_cli("analyze --generator " + (dir / "v" / "none.bin").string(), log), 1);
  const synth::GeneratorSpec gen = synth::build_generator(2, 3, 20, 0);
  synth::save_generator(gen, dir / "gen.bin");
  EXPECT_EQ(run_cli("analyze --generator " + (dir / "gen.bin").string() + " --checkpoint " +
                        (dir / "trunc.bin").string(),
                    log),
            1);
  EXPECT_EQ(run_cli("analyze --generator " + (dir / "gen.bin").string() + " --samples 1000 --probes 10", log), 0);
  EXPECT_NE(slurp(log).find("sis"), std::string::npos);
  fs::remove_all(dir);
}
