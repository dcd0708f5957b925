#pragma once

// Grid execution over (K, lambda, seed). Each cell writes into
// <out>/runs/<run id>/: metrics.csv, checkpoint.bin and, last, record.json.
// A cell whose record.json exists is skipped on re-execution. After all cells
// settle, <out>/results.csv (every evaluation) and <out>/final.csv (last
// evaluation per run) are assembled from the per-run files.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "slotid/experiments/config.hpp"
#include "slotid/experiments/csv.hpp"
#include "slotid/synth/validate.hpp"
#include "slotid/train/checkpoint.hpp"
#include "slotid/train/trainer.hpp"

namespace slotid::experiments {

namespace fs = std::filesystem;

inline const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h{"epoch", "lr",  "rec_raw", "rec_normalized", "contrast_raw", "contrast_normalized",
                                          "sis",   "s1",  "s2",      "wall_time_s",    "permutation"};
  return h;
}

inline const std::vector<std::string>& results_header() {
  static const std::vector<std::string> h{"run_id",         "K",     "M",    "lambda", "seed", "status",
                                          "epoch",          "lr",    "rec_raw", "rec_normalized",
                                          "contrast_raw",   "contrast_normalized", "sis", "s1", "s2",
                                          "permutation"};
  return h;
}

inline std::vector<std::string> metrics_row(const train::EvalRecord& e) {
  return {std::to_string(e.epoch),        format_double(e.lr),        format_double(e.rec_raw),
          format_double(e.rec_normalized), format_double(e.contrast_raw), format_double(e.contrast_normalized),
          format_double(e.sis),           format_double(e.s1),        format_double(e.s2),
          format_double(e.wall_time_s),   e.permutation};
}

enum class RunStatus { completed, diverged, failed, skipped };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::diverged: return "diverged";
    case RunStatus::failed: return "failed";
    case RunStatus::skipped: return "skipped";
  }
  return "?";
}

struct GridCell {
  std::size_t slots = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string run_id;
};

struct RunRecord {
  std::string run_id;
  std::size_t slots = 0;
  std::size_t slot_dim = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string status;  // completed | diverged | failed
  std::string message;
  std::size_t epochs_completed = 0;
  std::size_t evaluations = 0;
  std::string metrics_file = "metrics.csv";
  std::string checkpoint_file = "checkpoint.bin";

  [[nodiscard]] Json to_json() const {
    return {{"run_id", run_id},
            {"K", slots},
            {"M", slot_dim},
            {"lambda", lambda},
            {"seed", seed},
            {"status", status},
            {"message", message},
            {"epochs_completed", epochs_completed},
            {"evaluations", evaluations},
            {"metrics", metrics_file},
            {"checkpoint", checkpoint_file}};
  }

  static RunRecord from_json(const Json& j) {
    RunRecord r;
    try {
      r.run_id = j.at("run_id").get<std::string>();
      r.slots = j.at("K").get<std::size_t>();
      r.slot_dim = j.at("M").get<std::size_t>();
      r.lambda = j.at("lambda").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.status = j.at("status").get<std::string>();
      r.message = j.at("message").get<std::string>();
      r.epochs_completed = j.at("epochs_completed").get<std::size_t>();
      r.evaluations = j.at("evaluations").get<std::size_t>();
      r.metrics_file = j.at("metrics").get<std::string>();
      r.checkpoint_file = j.at("checkpoint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("run record: ") + e.what());
    }
    return r;
  }
};

struct GridSummary {
  std::size_t total = 0;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t completed = 0;
  std::size_t diverged = 0;
  std::size_t failed = 0;
  fs::path results_csv;
  fs::path final_csv;
};

struct RunOptions {
  std::size_t workers = 1;
  std::ostream* log = &std::cerr;
};

/// Worker count from an explicit value, else SLOTPROV_WORKERS, else 1.
inline std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SLOTPROV_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("SLOTPROV_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

inline std::vector<GridCell> grid_cells(const ExperimentConfig& cfg) {
  std::vector<GridCell> cells;
  for (std::size_t k : cfg.generator.slots) {
    for (double l : cfg.lambdas) {
      for (std::uint64_t s : cfg.seeds) cells.push_back({k, l, s, run_id(cfg, k, l, s)});
    }
  }
  std::sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    return std::tie(a.slots, a.lambda, a.seed) < std::tie(b.slots, b.lambda, b.seed);
  });
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i].run_id == cells[i - 1].run_id) throw ConfigError("duplicate grid cell (repeated K, lambda or seed)");
  }
  return cells;
}

/// Ground-truth generator for K slots, rebuilt with the next seed until the
/// Jacobian has full rank at every probe.
inline synth::GeneratorSpec grid_generator(const ExperimentConfig& cfg, std::size_t slots,
                                           std::uint64_t* used_seed = nullptr) {
  const GeneratorConfig& g = cfg.generator;
  return synth::build_valid_generator(slots, g.slot_dim, g.slot_out, g.seed, g.weight_range, g.hidden, g.leaky_slope,
                                      g.rank_probes, used_seed);
}

inline synth::LatentDistribution grid_distribution(const ExperimentConfig& cfg, std::size_t slots) {
  const std::size_t dim = slots * cfg.generator.slot_dim;
  return cfg.latents == synth::LatentKind::independent ? synth::LatentDistribution::independent(dim)
                                                       : synth::LatentDistribution::correlated(dim, cfg.generator.seed);
}

inline fs::path run_dir(const fs::path& out, const std::string& id) { return out / "runs" / id; }

inline bool run_settled(const fs::path& out, const GridCell& cell) {
  const fs::path rec = run_dir(out, cell.run_id) / "record.json";
  if (!fs::exists(rec)) return false;
  try {
    std::ifstream in(rec);
    const RunRecord r = RunRecord::from_json(Json::parse(in));
    return r.run_id == cell.run_id && r.status != "failed";
  } catch (const std::exception&) {
    return false;
  }
}

/// Trains one grid cell and writes its files. Never throws for training
/// failures; they are recorded in the returned record.
inline RunRecord execute_run(const ExperimentConfig& cfg, const GridCell& cell, const synth::GeneratorSpec& gen,
                             const synth::LatentDistribution& dist, const fs::path& out) {
  const fs::path dir = run_dir(out, cell.run_id);
  fs::create_directories(dir);
  RunRecord rec;
  rec.run_id = cell.run_id;
  rec.slots = cell.slots;
  rec.slot_dim = cfg.generator.slot_dim;
  rec.lambda = cell.lambda;
  rec.seed = cell.seed;

  std::ostringstream csv;
  write_csv_row(csv, metrics_header());
  try {
    const train::TrainConfig tc = cfg.train_config(cell.lambda, cell.seed);
    std::ofstream live(dir / "metrics.csv.partial", std::ios::trunc);
    write_csv_row(live, metrics_header());
    live.flush();
    const train::TrainResult res = train::train(gen, dist, tc, [&](const train::EvalRecord& e) {
      write_csv_row(live, metrics_row(e));
      live.flush();
    });
    for (const auto& e : res.history) write_csv_row(csv, metrics_row(e));
    rec.epochs_completed = res.state.epoch;
    rec.evaluations = res.history.size();
    rec.status = res.diverged ? "diverged" : "completed";
    rec.message = res.message;
    train::save_checkpoint(res.checkpoint(), dir / rec.checkpoint_file);
    live.close();
    fs::remove(dir / "metrics.csv.partial");
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.message = e.what();
  }
  write_file_atomic(dir / rec.metrics_file, csv.str());
  write_file_atomic(dir / "record.json", rec.to_json().dump(2) + "\n");
  return rec;
}

/// Assembles results.csv and final.csv from the per-run files of `cells`.
/// Rows are ordered by (K, lambda, seed, epoch); wall-clock columns are
/// omitted so re-executions produce identical bytes.
inline void assemble_results(const fs::path& out, const std::vector<GridCell>& cells, fs::path* results_path = nullptr,
                             fs::path* final_path = nullptr) {
  std::ostringstream all;
  std::ostringstream last;
  write_csv_row(all, results_header());
  write_csv_row(last, results_header());
  for (const GridCell& cell : cells) {
    const fs::path dir = run_dir(out, cell.run_id);
    if (!fs::exists(dir / "record.json")) continue;
    std::ifstream in(dir / "record.json");
    const RunRecord r = RunRecord::from_json(Json::parse(in));
    if (!fs::exists(dir / r.metrics_file)) continue;
    const CsvTable t = read_csv(dir / r.metrics_file);
    if (t.rows.empty()) continue;
    if (t.header != metrics_header()) throw FormatError((dir / r.metrics_file).string() + ": unexpected header");
    const std::size_t wall = t.column("wall_time_s");
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : t.rows) {
      std::vector<std::string> cellv{r.run_id, std::to_string(r.slots), std::to_string(r.slot_dim),
                                     format_double(r.lambda), std::to_string(r.seed), r.status};
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i != wall) cellv.push_back(row[i]);
      }
      rows.push_back(std::move(cellv));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return std::stoull(a[6]) < std::stoull(b[6]);
    });
    for (const auto& row : rows) write_csv_row(all, row);
    write_csv_row(last, rows.back());
  }
  const fs::path rp = out / "results.csv";
  const fs::path fp = out / "final.csv";
  write_file_atomic(rp, all.str());
  write_file_atomic(fp, last.str());
  if (results_path) *results_path = rp;
  if (final_path) *final_path = fp;
}

/// Executes every unsettled cell of the grid, then assembles the combined
/// CSVs. Generators are written to <out>/generators/.
inline GridSummary run_grid(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const fs::path out = cfg.output_dir;
  fs::create_directories(out / "runs");
  fs::create_directories(out / "generators");
  write_file_atomic(out / "config.json", serialize(cfg));

  const std::vector<GridCell> cells = grid_cells(cfg);
  std::map<std::size_t, synth::GeneratorSpec> gens;
  std::map<std::size_t, synth::LatentDistribution> dists;
  for (std::size_t k : cfg.generator.slots) {
    if (gens.contains(k)) continue;
    std::uint64_t used = 0;
    gens.emplace(k, grid_generator(cfg, k, &used));
    dists.emplace(k, grid_distribution(cfg, k));
    const fs::path base = out / "generators" / ("K" + std::to_string(k));
    synth::save_generator(gens.at(k), fs::path(base.string() + ".bin"));
    Json gj = synth::generator_to_json(gens.at(k));
    gj["seed"] = used;
    write_file_atomic(base.string() + ".json", gj.dump(2) + "\n");
  }

  GridSummary summary;
  summary.total = cells.size();
  std::vector<const GridCell*> todo;
  for (const GridCell& c : cells) {
    if (run_settled(out, c)) {
      ++summary.skipped;
    } else {
      todo.push_back(&c);
    }
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const GridCell& c = *todo[i];
      const auto t0 = std::chrono::steady_clock::now();
      const RunRecord r = execute_run(cfg, c, gens.at(c.slots), dists.at(c.slots), out);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(mu);
      ++done;
      ++summary.executed;
      if (r.status == "completed") ++summary.completed;
      if (r.status == "diverged") ++summary.diverged;
      if (r.status == "failed") ++summary.failed;
      if (opt.log) {
        *opt.log << "[" << done << "/" << todo.size() << "] run " << r.run_id << " K=" << r.slots
                 << " lambda=" << format_double(r.lambda) << " seed=" << r.seed << " " << r.status;
        if (!r.message.empty()) *opt.log << " (" << r.message << ")";
        *opt.log << " " << std::fixed << std::setprecision(1) << secs << "s" << std::defaultfloat << std::endl;
      }
    }
  };
  const std::size_t nw = std::max<std::size_t>(1, std::min(opt.workers, todo.size()));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  assemble_results(out, cells, &summary.results_csv, &summary.final_csv);
  return summary;
}

}  // namespace slotid::experiments
