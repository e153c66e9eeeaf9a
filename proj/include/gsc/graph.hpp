#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gsc {

// Node-type ids. The context node is always node 0.
inline constexpr int kContextNodeType = 0;
inline constexpr int kQuestionNodeType = 1;
inline constexpr int kAnswerNodeType = 2;
inline constexpr int kOtherNodeType = 3;

// Node-type and relation-type inventories plus the one-hot layout for
// [head type, relation, tail type].
//
// Relation-id layout (defaults): base relations 0..16, their reversals
// 17..33, QA-link relations and their reversals 34..37 as adjacent pairs
// (34<->35, 36<->37). For non-default counts the trailing qa block keeps the
// adjacent-pair rule; an odd trailing relation is its own reversal.
struct TripletVocabulary {
  int node_type_count = 4;
  int relation_count = 38;
  int qa_relation_count = 4;

  int onehot_dim() const { return 2 * node_type_count + relation_count; }
  int base_relation_count() const {
    return (relation_count - qa_relation_count) / 2;
  }
  int triplet_type_count() const {
    return node_type_count * relation_count * node_type_count;
  }

  // (head, rel, tail) -> dense triplet-type id
  int triplet_type_id(int head_type, int rel, int tail_type) const {
    return (head_type * relation_count + rel) * node_type_count + tail_type;
  }
  std::array<int, 3> triplet_of_type_id(int type_id) const;

  int reverse_relation(int rel) const;

  // One-hot offsets: head type at [0, N), relation at [N, N+R),
  // tail type at [N+R, 2N+R).
  int head_offset() const { return 0; }
  int relation_offset() const { return node_type_count; }
  int tail_offset() const { return node_type_count + relation_count; }
};

// Throws config_error for non-positive counts.
TripletVocabulary build_triplet_vocab(int node_type_count, int relation_count);

struct Edge {
  int src = 0;
  int dst = 0;
  int rel = 0;

  bool operator==(const Edge&) const = default;
};

// Typed nodes plus directed typed edges for one answer choice. Node 0 is the
// context node.
struct SchemaGraph {
  std::vector<int> node_types;
  std::vector<Edge> edges;

  int node_count() const { return static_cast<int>(node_types.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
};

struct Choice {
  SchemaGraph graph;
  std::optional<double> context_score;
};

struct QAInstance {
  std::string id;
  int label = 0;
  std::vector<Choice> choices;
};

// Exactly three entries are 1, the rest 0. Throws encoding_error naming the
// offending field for out-of-range ids.
std::vector<double> encode_triplet_onehot(int head_type, int rel,
                                          int tail_type,
                                          const TripletVocabulary& vocab);

// Inverse of encode_triplet_onehot; throws encoding_error if the vector is
// not a valid three-hot encoding.
std::array<int, 3> decode_triplet_onehot(const std::vector<double>& onehot,
                                         const TripletVocabulary& vocab);

// Appends the missing reversed edge (dst, src, rev(rel)) for every edge.
// Originals keep their order; reversals are appended in original order.
// Idempotent: a graph whose reversal counts already match is returned with
// the edge set unchanged.
SchemaGraph symmetrize(const SchemaGraph& graph,
                       const TripletVocabulary& vocab);

// Keeps the context node, then question entities, then answer entities, then
// the rest (input order within each group) up to max_nodes; drops edges that
// touch removed nodes and reindexes contiguously with the context node still
// at index 0. Throws config_error when max_nodes < 1.
SchemaGraph truncate_nodes(const SchemaGraph& graph, int max_nodes);

enum class DiagnosticCode {
  context_node_missing,
  context_node_type,
  node_type_out_of_range,
  edge_src_out_of_range,
  edge_dst_out_of_range,
  edge_rel_out_of_range,
};

struct Diagnostic {
  DiagnosticCode code;
  std::string message;
};

// Returns every invariant violation, not just the first; empty means ok.
std::vector<Diagnostic> validate_graph(const SchemaGraph& graph,
                                       const TripletVocabulary& vocab);

// JSON Lines persistence, one QAInstance per line:
//   {"id":"q1","label":0,"choices":[{"context_score":0.0,
//    "nodes":[0,1,1,2],"edges":[[1,0,34],[3,0,36]]}, ...]}
// Malformed lines raise parse_error with the line number; invariant
// violations raise validation_error with the instance id.
std::vector<QAInstance> load_instances(const std::string& path);
void save_instances(const std::vector<QAInstance>& instances,
                    const std::string& path);

std::vector<QAInstance> parse_instances(std::istream& in,
                                        const std::string& source_name);
void write_instances(const std::vector<QAInstance>& instances,
                     std::ostream& out);

// Vocabulary config file: {"node_type_count":4,"relation_count":38}
TripletVocabulary load_vocab(const std::string& path);

}  // namespace gsc
