#include "gsc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gsc/errors.hpp"
#include "gsc/gsc_model.hpp"
#include "gsc/rng.hpp"

namespace gsc {

SchemaGraph make_bench_graph(long edges, std::uint64_t seed) {
  SchemaGraph g;
  const long nodes = std::max<long>(2, edges / 3);
  g.node_types.resize(nodes);
  g.node_types[0] = kContextNodeType;
  Rng rng(derive_seed(seed, 0x62656e6368ull, edges));
  for (long i = 1; i < nodes; ++i) {
    g.node_types[i] = rng.uniform_int(kQuestionNodeType, kOtherNodeType);
  }
  g.edges.reserve(edges);
  const int n = static_cast<int>(nodes);
  for (long e = 0; e < edges; ++e) {
    const int src = rng.uniform_int(0, n - 1);
    int dst = rng.uniform_int(0, n - 2);
    if (dst >= src) ++dst;
    g.edges.push_back({src, dst, 0});
  }
  return g;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  LineFit fit;
  const double dn = static_cast<double>(n);
  const double denom = dn * sxx - sx * sx;
  fit.slope = (dn * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / dn;
  double ss_res = 0.0;
  const double mean_y = sy / dn;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = fit.slope * x[i] + fit.intercept;
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
  }
  fit.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

BenchResult bench_scaling(std::span<const long> edge_counts, int repetitions,
                          int num_layers, bool parallel) {
  for (std::size_t i = 1; i < edge_counts.size(); ++i) {
    if (edge_counts[i] <= edge_counts[i - 1]) {
      throw config_error("bench edge counts must be increasing");
    }
  }
  using clock = std::chrono::steady_clock;
  BenchResult result;
  volatile double sink = 0.0;
  for (long ec : edge_counts) {
    const SchemaGraph g = make_bench_graph(ec, 17);
    std::vector<double> values(g.edges.size());
    Rng rng(derive_seed(29, 0x76616c75ull, ec));
    for (double& v : values) v = rng.uniform();
    auto run = [&]() {
      return parallel ? gsc_forward_parallel(g, values, num_layers)
                      : gsc_forward_serial(g, values, num_layers);
    };
    sink = sink + run();  // warm up caches
    // Amortize over enough passes that one block is comfortably measurable.
    int passes = 1;
    {
      const auto t0 = clock::now();
      sink = sink + run();
      const double once =
          std::chrono::duration<double>(clock::now() - t0).count();
      passes = std::max(1, static_cast<int>(5e-3 / std::max(once, 1e-9)));
      passes = std::min(passes, 20000);
    }
    std::vector<double> samples;
    samples.reserve(repetitions);
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = clock::now();
      for (int k = 0; k < passes; ++k) sink = sink + run();
      const double block =
          std::chrono::duration<double>(clock::now() - t0).count();
      samples.push_back(block / passes);
    }
    std::sort(samples.begin(), samples.end());
    result.points.push_back({ec, samples[samples.size() / 2]});
  }
  std::vector<double> lx, ly;
  for (const BenchPoint& p : result.points) {
    lx.push_back(std::log10(static_cast<double>(p.edges)));
    ly.push_back(std::log10(p.seconds));
  }
  const LineFit fit = fit_line(lx, ly);
  result.slope = fit.slope;
  result.r2 = fit.r2;
  return result;
}

}  // namespace gsc
