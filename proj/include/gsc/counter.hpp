#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gsc/autodiff.hpp"
#include "gsc/graph.hpp"
#include "gsc/tensor.hpp"

namespace gsc {

enum class CounterMode { one_hop, two_hop };

struct CounterConfig {
  CounterMode mode = CounterMode::one_hop;
  // Pair block typing for the 2-hop feature: (relation, relation) by default,
  // full (triplet type, triplet type) behind this flag.
  bool full_pair_typing = false;
  // Restrict counted length-2 paths to those ending at the context node.
  bool context_terminated_pairs = false;
  int hidden_dim = 32;
  std::optional<int> max_nodes;
};

// Nonnegative integer counts stored as reals for the MLP head. one_hop
// entries histogram the triplet types; two_hop appends ordered pair counts
// over directed length-2 paths.
struct CountFeature {
  CounterMode mode = CounterMode::one_hop;
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
};

int count_feature_dim(const TripletVocabulary& vocab,
                      const CounterConfig& config);

// Histogram over all node_type^2 * relation triplet types; entries sum to the
// edge count. Expects a symmetrized graph.
CountFeature count_features_1hop(const SchemaGraph& graph,
                                 const TripletVocabulary& vocab);

// 1-hop histogram concatenated with ordered pair counts (first edge's type,
// second edge's type) over directed length-2 paths with
// dst(first) == src(second).
CountFeature count_features_2hop(const SchemaGraph& graph,
                                 const TripletVocabulary& vocab,
                                 const CounterConfig& config);

CountFeature count_features(const SchemaGraph& graph,
                            const TripletVocabulary& vocab,
                            const CounterConfig& config);

// Two-layer MLP head with linear output.
struct MlpHeadParams {
  Tensor w1;  // [in x hidden]
  Tensor b1;  // [1 x hidden]
  Tensor w2;  // [hidden x 1]
  Tensor b2;  // [1 x 1]

  int input_dim() const { return w1.rows; }
  int hidden_dim() const { return w1.cols; }
  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  static MlpHeadParams init(int input_dim, int hidden_dim, std::uint64_t seed);
};

// score = MLP(feature); zero entries of the feature are skipped, which leaves
// the sum order of the remaining terms unchanged.
double counter_forward(const CountFeature& feature,
                       const MlpHeadParams& params);

struct MlpHeadLeaves {
  Value w1, b1, w2, b2;
};

MlpHeadLeaves make_head_leaves(Tape& tape, const MlpHeadParams& params);

Value build_counter_score(Tape& tape, const CountFeature& feature,
                          const MlpHeadLeaves& leaves);

std::vector<double> collect_head_grads(const Tape& tape,
                                       const MlpHeadLeaves& leaves);

// Debug CSV: feature_index,count
void write_feature_csv(std::ostream& out, const CountFeature& feature);

}  // namespace gsc
