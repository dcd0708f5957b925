#pragma once

// Scatter data for plotting SIS against reconstruction error and contrast:
// one row per evaluation point, ordered by (K, lambda, seed, epoch).

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "slotid/experiments/csv.hpp"

namespace slotid::experiments {

struct PlotPoint {
  double rec_normalized = 0.0;
  double contrast_normalized = 0.0;
  double sis = 0.0;
  std::uint64_t slots = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  // original text of each field, echoed unchanged
  std::vector<std::string> text;
};

inline const std::vector<std::string>& plotdata_header() {
  static const std::vector<std::string> h{"rec_normalized", "contrast_normalized", "sis", "K", "lambda", "seed", "epoch"};
  return h;
}

inline std::uint64_t parse_count(const std::string& s, const std::string& what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(what + ": not a non-negative integer: '" + s + "'");
  }
  return std::stoull(s);
}

/// Reads a combined results table. An empty input gives no points.
inline std::vector<PlotPoint> read_plot_points(std::istream& in, const std::string& what = "results") {
  const CsvTable t = parse_csv(in, what);
  std::vector<PlotPoint> pts;
  if (t.header.empty()) return pts;
  const std::vector<std::string>& h = plotdata_header();
  std::vector<std::size_t> col;
  for (const auto& name : h) col.push_back(t.column(name));
  std::size_t line = 1;
  for (const auto& row : t.rows) {
    ++line;
    const std::string where = what + ":" + std::to_string(line);
    PlotPoint p;
    p.rec_normalized = parse_double(row[col[0]], where);
    p.contrast_normalized = parse_double(row[col[1]], where);
    p.sis = parse_double(row[col[2]], where);
    p.slots = parse_count(row[col[3]], where);
    p.lambda = parse_double(row[col[4]], where);
    p.seed = parse_count(row[col[5]], where);
    p.epoch = parse_count(row[col[6]], where);
    for (std::size_t c : col) p.text.push_back(row[c]);
    pts.push_back(std::move(p));
  }
  std::stable_sort(pts.begin(), pts.end(), [](const PlotPoint& a, const PlotPoint& b) {
    return std::tie(a.slots, a.lambda, a.seed, a.epoch) < std::tie(b.slots, b.lambda, b.seed, b.epoch);
  });
  return pts;
}

/// Header plus one row per point; nothing at all for an empty input.
inline void write_plot_points(std::ostream& os, const std::vector<PlotPoint>& pts) {
  if (pts.empty()) return;
  write_csv_row(os, plotdata_header());
  for (const auto& p : pts) write_csv_row(os, p.text);
}

}  // namespace slotid::experiments
