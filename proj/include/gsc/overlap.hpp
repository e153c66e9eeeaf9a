#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "gsc/graph.hpp"
#include "gsc/train.hpp"

namespace gsc {

// Counts for the 8 regions of the three-set partition over instances:
// bit 0 = a correct, bit 1 = b correct, bit 2 = a and b agree.
struct OverlapReport {
  std::array<long, 8> region_counts{};
  long total = 0;
  double agreement = 0.0;  // fraction with pred_a == pred_b
  double acc_a = 0.0;
  double acc_b = 0.0;
};

// Predictions must cover identical instance ids (throws alignment_error
// otherwise); gold labels come from the instance file.
OverlapReport overlap_report(const std::vector<PredictionRecord>& pred_a,
                             const std::vector<PredictionRecord>& pred_b,
                             const std::vector<QAInstance>& gold);

void print_overlap(std::ostream& out, const OverlapReport& report);

}  // namespace gsc
