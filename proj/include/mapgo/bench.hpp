#pragma once

// Benchmark harness: solver sweeps over datasets and team sizes, gate
// denoising at injected outlier fractions, CSV tables and SVG line charts.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mapgo/pipeline.hpp"
#include "mapgo/synthetic.hpp"

namespace mapgo {

struct DenoiseScore {
  double precision = 0.0;
  double recall = 0.0;
};

/// Precision and recall of a pruned edge set against the corrupted labels.
/// An empty pruned set has precision 1 when there is nothing to find and 0
/// otherwise; recall is 1 when there are no labels.
DenoiseScore denoise_metrics(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& pruned);

struct BenchRow {
  std::string kind;     // "solve", "denoise" or "scale"
  std::string dataset;
  std::string variant;
  int team_size = 0;
  double outlier_fraction = 0.0;
  double f_initial = 0.0;
  double f_final = 0.0;
  double seconds = 0.0;  // solver wall time, loading excluded
  double precision = 0.0;
  double recall = 0.0;
  int instances = 0;  // rows averaging several graphs
};

struct BenchReport {
  std::vector<BenchRow> rows;

  /// Deterministic columns only, so repeated seeded runs compare bit-exact.
  void write_csv(std::ostream& os) const;
  /// Wall times, which vary run to run.
  void write_timing_csv(std::ostream& os) const;
  nlohmann::json to_json() const;
};

struct NamedGraph {
  std::string name;
  PoseGraph graph;
};

struct BenchConfig {
  std::vector<int> team_sizes{3};
  std::vector<Variant> variants{Variant::V1, Variant::V2};
  /// Every dataset is corrupted at each fraction; empty skips the sweep.
  std::vector<double> outlier_fractions;
  std::uint64_t seed = 0;
  SolveConfig solve;
};

/// Sweeps every dataset over team sizes and variants ("solve" rows, or
/// "scale" rows when more than one team size is given), then the outlier
/// fractions ("denoise" rows averaged over datasets). Actors are replicated
/// round robin to each team size.
BenchReport run_benchmark(const std::vector<NamedGraph>& datasets, const std::vector<Actor>& trained,
                          const BenchConfig& cfg);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Minimal SVG line chart with linear axes.
void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series);

/// Objective-vs-team-size and runtime-vs-team-size charts from "scale" or
/// "solve" rows; returns the files written.
std::vector<std::filesystem::path> write_scaling_charts(const BenchReport& report, const std::filesystem::path& dir);

}  // namespace mapgo
