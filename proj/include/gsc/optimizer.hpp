#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gsc {

struct RAdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RAdamState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;

  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

// Names a flat parameter range for error reporting.
struct ParamSegment {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Rectified Adam update. Maintains first/second moments; applies the
// variance rectification when the SMA length exceeds 4 and falls back to an
// un-adapted momentum step while the variance estimate is untrustworthy
// (early steps). Throws training_error naming the parameter on non-finite
// gradients.
void radam_step(std::span<double> params, std::span<const double> grads,
                RAdamState& state, const RAdamConfig& config,
                std::span<const ParamSegment> segments = {});

}  // namespace gsc
