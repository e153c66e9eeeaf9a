#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsc/graph.hpp"

namespace gsc {

// Extra edges of one triplet type that the gold choice's graph receives.
struct PlantedSignal {
  int head_type = kQuestionNodeType;
  int rel = 0;
  int tail_type = kQuestionNodeType;
  int count_delta = 1;
};

struct SyntheticTaskConfig {
  int instance_count = 0;
  int choices = 5;
  int min_nodes = 6;
  int max_nodes = 14;
  int min_noise_edges = 4;
  int max_noise_edges = 12;
  std::vector<PlantedSignal> planted;
  // Fraction of instances whose label is flipped to a random other choice
  // after planting. The planted signal still marks the original choice, so a
  // positive rate caps the reachable accuracy; used by experiments that need
  // irreducible error. Default 0 keeps labels exactly recoverable.
  double label_noise_rate = 0.0;
  std::uint64_t seed = 0;
  TripletVocabulary vocab;
  std::string id_prefix = "q";
};

// Each instance holds i.i.d. noise graphs per choice; the gold choice's
// graph additionally receives the planted edges, attached so the planted
// tail is context-adjacent (inside a 2-layer receptive field). Instances are
// regenerated until the summed planted-type count over the symmetrized graph
// identifies the gold choice uniquely, so the label is recoverable by exact
// counting. Deterministic for a fixed seed.
std::vector<QAInstance> generate_synthetic(const SyntheticTaskConfig& config);

// Sum of planted-type counts over the symmetrized graph; the generator's
// labeling statistic.
double planted_count_statistic(const SchemaGraph& graph,
                               const std::vector<PlantedSignal>& planted,
                               const TripletVocabulary& vocab);

}  // namespace gsc
