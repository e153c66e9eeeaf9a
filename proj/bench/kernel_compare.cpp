// Compares the serial reference against the OpenMP kernel across sizes and
// verifies they produce bitwise-identical scores while timing both.

#include <cstdio>
#include <vector>

#include "gsc/bench.hpp"
#include "gsc/gsc_model.hpp"
#include "gsc/rng.hpp"

int main(int argc, char** argv) {
  int layers = 2;
  if (argc > 1) layers = std::atoi(argv[1]);
  const std::vector<long> sizes = {1000,   3162,   10000,  31623,
                                   100000, 316228, 1000000};

  std::printf("%10s %14s %14s %9s %s\n", "edges", "serial_s", "parallel_s",
              "speedup", "bitwise");
  for (long ec : sizes) {
    const gsc::SchemaGraph g = gsc::make_bench_graph(ec, 17);
    std::vector<double> values(g.edges.size());
    gsc::Rng rng(gsc::derive_seed(29, 0x76616c75ull, ec));
    for (double& v : values) v = rng.uniform();

    const double serial = gsc::gsc_forward_serial(g, values, layers);
    const double parallel = gsc::gsc_forward_parallel(g, values, layers);
    const bool bitwise = serial == parallel;

    const std::vector<long> one = {ec};
    const auto ts = gsc::bench_scaling(one, 5, layers, false);
    const auto tp = gsc::bench_scaling(one, 5, layers, true);
    std::printf("%10ld %14.6e %14.6e %9.3f %s\n", ec, ts.points[0].seconds,
                tp.points[0].seconds,
                ts.points[0].seconds / tp.points[0].seconds,
                bitwise ? "yes" : "NO");
    if (!bitwise) return 1;
  }
  return 0;
}
