#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gsc/graph.hpp"

namespace gsc {

struct BenchPoint {
  long edges = 0;
  double seconds = 0.0;  // median time per forward pass
};

struct BenchResult {
  std::vector<BenchPoint> points;
  double slope = 0.0;  // log-log fit of time vs edge count
  double r2 = 0.0;
};

// Random graph with roughly edges/3 nodes; node 0 is the context node.
SchemaGraph make_bench_graph(long edges, std::uint64_t seed);

// Times gsc_forward at each edge count (median of `repetitions` blocks, each
// block amortized over enough passes to be measurable) and fits the log-log
// slope. Edge counts must be increasing.
BenchResult bench_scaling(std::span<const long> edge_counts, int repetitions,
                          int num_layers, bool parallel);

// Ordinary least squares on (x, y); returns slope, intercept, r^2.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace gsc
