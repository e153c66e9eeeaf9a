#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsc/autodiff.hpp"
#include "gsc/graph.hpp"
#include "gsc/tensor.hpp"

namespace gsc {

enum class Activation { relu, tanh, sigmoid };

enum class ContextProvider { zero, constant, from_file };

struct GscConfig {
  int num_layers = 2;
  std::optional<int> max_nodes;
  // 0 means use the vocabulary's one-hot dimension; a larger value zero-pads
  // the encoder input (47 is the common padded setting).
  int encoder_input_dim = 0;
  Activation hidden_activation = Activation::relu;
  ContextProvider provider = ContextProvider::zero;
  double context_constant = 0.0;

  int resolved_input_dim(const TripletVocabulary& vocab) const;
};

// The edge encoder's two-layer MLP: the model's only learnable parameters.
// Hidden width is fixed at 32.
struct GscParams {
  Tensor w1;  // [input_dim x 32]
  Tensor b1;  // [1 x 32]
  Tensor w2;  // [32 x 1]
  Tensor b2;  // [1 x 1]

  int input_dim() const { return w1.rows; }
  int hidden_dim() const { return w1.cols; }
  std::size_t param_count() const;

  // Flat layout: w1, b1, w2, b2.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  static GscParams init(int input_dim, std::uint64_t seed);
};

inline constexpr int kGscHiddenDim = 32;

// sigma(MLP(onehot(head, rel, tail))) per edge, each strictly in (0, 1).
// The graph must be symmetrized. Identical triplets share one evaluation.
std::vector<double> edge_encoder_forward(const SchemaGraph& graph,
                                         const GscParams& params,
                                         const TripletVocabulary& vocab,
                                         const GscConfig& config);

// Soft-count value for one triplet type.
double encode_triplet_value(int head_type, int rel, int tail_type,
                            const GscParams& params,
                            const TripletVocabulary& vocab,
                            const GscConfig& config);

// L counting layers over precomputed edge values; returns the final context
// node (node 0) value. Per layer: edge state accumulates its source node's
// value, then node state is replaced by the destination-wise edge sum.
double gsc_forward(const SchemaGraph& graph,
                   std::span<const double> edge_values, int num_layers);

// Serial reference kept verbatim for testing the parallel kernel against.
double gsc_forward_serial(const SchemaGraph& graph,
                          std::span<const double> edge_values, int num_layers);

// OpenMP kernel: gather parallel over edges, per-node sums over a CSR view
// built by destination. Summation order inside each node matches the serial
// reference, so results are bitwise identical.
double gsc_forward_parallel(const SchemaGraph& graph,
                            std::span<const double> edge_values,
                            int num_layers);

// Brute-force enumeration oracle. Walks every directed path of length
// k <= num_layers ending at node 0 together with every strictly increasing
// assignment of its k-1 node-to-edge hops to layers, adding the value of the
// path's farthest edge once per (path, schedule) pair. Exponential; small
// graphs only.
double path_sum_oracle(const SchemaGraph& graph,
                       std::span<const double> edge_values, int num_layers);

// context score + graph score for one (already preprocessed) choice graph.
double choice_score(const SchemaGraph& graph, const GscParams& params,
                    const GscConfig& config, const TripletVocabulary& vocab,
                    std::optional<double> context_score);

// Per-choice scores. Applies truncate_nodes (if configured) and symmetrize
// before scoring; resolves the context score through the configured provider.
std::vector<double> instance_forward(const QAInstance& instance,
                                     const GscParams& params,
                                     const GscConfig& config,
                                     const TripletVocabulary& vocab);

double resolve_context_score(const GscConfig& config,
                             std::optional<double> stored,
                             const std::string& instance_id, int choice_index);

SchemaGraph preprocess_graph(const SchemaGraph& graph, const GscConfig& config,
                             const TripletVocabulary& vocab);

struct SoftCountRow {
  int head_type;
  int relation;
  int tail_type;
  double value;
};

// Evaluates the encoder on every triplet type, sorted descending by value
// (ties broken by ascending head, relation, tail).
std::vector<SoftCountRow> dump_soft_counts(const GscParams& params,
                                           const TripletVocabulary& vocab,
                                           const GscConfig& config,
                                           int top_k);

// CSV: head_type,relation,tail_type,soft_count
void write_soft_counts_csv(std::ostream& out,
                           const std::vector<SoftCountRow>& rows);

struct LayerTrace {
  std::vector<double> edge_values;
  std::vector<double> node_values;
};

// Edge/node value snapshots after each layer; the last snapshot's node 0
// equals gsc_forward. Expects a preprocessed graph.
std::vector<LayerTrace> trace_layers(const SchemaGraph& graph,
                                     const GscParams& params,
                                     const GscConfig& config,
                                     const TripletVocabulary& vocab);

std::string layer_trace_json(const std::vector<LayerTrace>& traces);

// --- tape builders for training ---

struct GscLeaves {
  Value w1, b1, w2, b2;
};

GscLeaves make_gsc_leaves(Tape& tape, const GscParams& params);

// Score for one preprocessed choice graph as a tape node.
Value build_choice_score(Tape& tape, const SchemaGraph& graph,
                         const GscLeaves& leaves, const GscConfig& config,
                         const TripletVocabulary& vocab, double context_score);

// Mean-ready cross-entropy loss for one instance (preprocessing applied).
Value build_instance_loss(Tape& tape, const QAInstance& instance,
                          const GscLeaves& leaves, const GscConfig& config,
                          const TripletVocabulary& vocab);

// Gradients of the leaves in flatten() order.
std::vector<double> collect_gsc_grads(const Tape& tape,
                                      const GscLeaves& leaves);

}  // namespace gsc
