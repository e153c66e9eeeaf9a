#include "gsc/graph.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "gsc/errors.hpp"
#include "json.hpp"

namespace gsc {

TripletVocabulary build_triplet_vocab(int node_type_count,
                                      int relation_count) {
  if (node_type_count < 1 || relation_count < 1) {
    throw config_error("vocabulary counts must be positive, got node types " +
                       std::to_string(node_type_count) + ", relations " +
                       std::to_string(relation_count));
  }
  TripletVocabulary v;
  v.node_type_count = node_type_count;
  v.relation_count = relation_count;
  if (relation_count >= 6 && (relation_count - 4) % 2 == 0) {
    v.qa_relation_count = 4;
  } else {
    v.qa_relation_count = relation_count % 2;
  }
  return v;
}

std::array<int, 3> TripletVocabulary::triplet_of_type_id(int type_id) const {
  const int tail = type_id % node_type_count;
  const int rest = type_id / node_type_count;
  const int rel = rest % relation_count;
  const int head = rest / relation_count;
  return {head, rel, tail};
}

int TripletVocabulary::reverse_relation(int rel) const {
  if (rel < 0 || rel >= relation_count) {
    throw index_error("relation id " + std::to_string(rel) +
                      " out of range for " + std::to_string(relation_count) +
                      " relations");
  }
  const int base = base_relation_count();
  if (rel < base) return rel + base;
  if (rel < 2 * base) return rel - base;
  const int q = rel - 2 * base;
  const int partner = (q % 2 == 0) ? q + 1 : q - 1;
  if (2 * base + partner >= relation_count) return rel;  // odd trailing slot
  return 2 * base + partner;
}

std::vector<double> encode_triplet_onehot(int head_type, int rel,
                                          int tail_type,
                                          const TripletVocabulary& vocab) {
  if (head_type < 0 || head_type >= vocab.node_type_count) {
    throw encoding_error("head type " + std::to_string(head_type) +
                         " out of range [0, " +
                         std::to_string(vocab.node_type_count) + ")");
  }
  if (rel < 0 || rel >= vocab.relation_count) {
    throw encoding_error("relation " + std::to_string(rel) +
                         " out of range [0, " +
                         std::to_string(vocab.relation_count) + ")");
  }
  if (tail_type < 0 || tail_type >= vocab.node_type_count) {
    throw encoding_error("tail type " + std::to_string(tail_type) +
                         " out of range [0, " +
                         std::to_string(vocab.node_type_count) + ")");
  }
  std::vector<double> out(vocab.onehot_dim(), 0.0);
  out[vocab.head_offset() + head_type] = 1.0;
  out[vocab.relation_offset() + rel] = 1.0;
  out[vocab.tail_offset() + tail_type] = 1.0;
  return out;
}

std::array<int, 3> decode_triplet_onehot(const std::vector<double>& onehot,
                                         const TripletVocabulary& vocab) {
  if (static_cast<int>(onehot.size()) != vocab.onehot_dim()) {
    throw encoding_error("one-hot length " + std::to_string(onehot.size()) +
                         " does not match vocabulary dimension " +
                         std::to_string(vocab.onehot_dim()));
  }
  auto find_one = [&](int begin, int end, const char* field) {
    int found = -1;
    for (int i = begin; i < end; ++i) {
      if (onehot[i] == 1.0) {
        if (found >= 0) {
          throw encoding_error(std::string("multiple ones in ") + field +
                               " block");
        }
        found = i - begin;
      } else if (onehot[i] != 0.0) {
        throw encoding_error(std::string("non-binary entry in ") + field +
                             " block");
      }
    }
    if (found < 0) {
      throw encoding_error(std::string("no one set in ") + field + " block");
    }
    return found;
  };
  const int head = find_one(vocab.head_offset(), vocab.relation_offset(),
                            "head type");
  const int rel =
      find_one(vocab.relation_offset(), vocab.tail_offset(), "relation");
  const int tail =
      find_one(vocab.tail_offset(), vocab.onehot_dim(), "tail type");
  return {head, rel, tail};
}

namespace {

struct TripleKey {
  int src, dst, rel;
  bool operator<(const TripleKey& o) const {
    if (src != o.src) return src < o.src;
    if (dst != o.dst) return dst < o.dst;
    return rel < o.rel;
  }
};

}  // namespace

SchemaGraph symmetrize(const SchemaGraph& graph,
                       const TripletVocabulary& vocab) {
  std::map<TripleKey, int> counts;
  for (const Edge& e : graph.edges) {
    ++counts[{e.src, e.dst, e.rel}];
  }
  SchemaGraph out;
  out.node_types = graph.node_types;
  out.edges = graph.edges;
  // The k-th occurrence of a triple needs a reversal only once the existing
  // reversed occurrences are used up; this makes a second pass a no-op.
  std::map<TripleKey, int> seen;
  for (const Edge& e : graph.edges) {
    const int rev_rel = vocab.reverse_relation(e.rel);
    const int occurrence = ++seen[{e.src, e.dst, e.rel}];
    const auto it = counts.find({e.dst, e.src, rev_rel});
    const int have = it == counts.end() ? 0 : it->second;
    if (occurrence > have) {
      out.edges.push_back({e.dst, e.src, rev_rel});
    }
  }
  return out;
}

SchemaGraph truncate_nodes(const SchemaGraph& graph, int max_nodes) {
  if (max_nodes < 1) {
    throw config_error("max_nodes must be >= 1, got " +
                       std::to_string(max_nodes));
  }
  const int n = graph.node_count();
  if (n <= max_nodes) return graph;

  // Priority: context first, then ascending node-type id (question, answer,
  // other), input order within each group. A stray context-typed node that is
  // not node 0 sorts last.
  std::vector<int> order;
  order.reserve(n);
  order.push_back(0);
  for (int i = 1; i < n; ++i) order.push_back(i);
  auto priority = [&](int i) {
    const int t = graph.node_types[i];
    return t >= kQuestionNodeType ? t : std::numeric_limits<int>::max();
  };
  std::stable_sort(order.begin() + 1, order.end(),
                   [&](int a, int b) { return priority(a) < priority(b); });

  std::vector<int> new_index(n, -1);
  for (int k = 0; k < max_nodes; ++k) {
    new_index[order[k]] = 0;  // mark kept; real index assigned below
  }
  // Reindex kept nodes in original order so the context node stays at 0.
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (new_index[i] == 0) new_index[i] = next++;
    else new_index[i] = -1;
  }

  SchemaGraph out;
  out.node_types.resize(next);
  for (int i = 0; i < n; ++i) {
    if (new_index[i] >= 0) out.node_types[new_index[i]] = graph.node_types[i];
  }
  for (const Edge& e : graph.edges) {
    const int s = new_index[e.src];
    const int d = new_index[e.dst];
    if (s >= 0 && d >= 0) out.edges.push_back({s, d, e.rel});
  }
  return out;
}

std::vector<Diagnostic> validate_graph(const SchemaGraph& graph,
                                       const TripletVocabulary& vocab) {
  std::vector<Diagnostic> out;
  const int n = graph.node_count();
  if (n == 0) {
    out.push_back({DiagnosticCode::context_node_missing,
                   "graph has no nodes; node 0 must be the context node"});
  } else if (graph.node_types[0] != kContextNodeType) {
    out.push_back({DiagnosticCode::context_node_type,
                   "node 0 has type " + std::to_string(graph.node_types[0]) +
                       ", expected context type " +
                       std::to_string(kContextNodeType)});
  }
  for (int i = 0; i < n; ++i) {
    const int t = graph.node_types[i];
    if (t < 0 || t >= vocab.node_type_count) {
      out.push_back({DiagnosticCode::node_type_out_of_range,
                     "node " + std::to_string(i) + " has type " +
                         std::to_string(t) + ", valid range [0, " +
                         std::to_string(vocab.node_type_count) + ")"});
    }
  }
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const Edge& e = graph.edges[k];
    if (e.src < 0 || e.src >= n) {
      out.push_back({DiagnosticCode::edge_src_out_of_range,
                     "edge " + std::to_string(k) + " src " +
                         std::to_string(e.src) + " out of range [0, " +
                         std::to_string(n) + ")"});
    }
    if (e.dst < 0 || e.dst >= n) {
      out.push_back({DiagnosticCode::edge_dst_out_of_range,
                     "edge " + std::to_string(k) + " dst " +
                         std::to_string(e.dst) + " out of range [0, " +
                         std::to_string(n) + ")"});
    }
    if (e.rel < 0 || e.rel >= vocab.relation_count) {
      out.push_back({DiagnosticCode::edge_rel_out_of_range,
                     "edge " + std::to_string(k) + " relation " +
                         std::to_string(e.rel) + " out of range [0, " +
                         std::to_string(vocab.relation_count) + ")"});
    }
  }
  return out;
}

namespace {

using ordered_json = nlohmann::ordered_json;

QAInstance instance_from_json(const ordered_json& j) {
  QAInstance inst;
  inst.id = j.at("id").get<std::string>();
  inst.label = j.at("label").get<int>();
  for (const auto& jc : j.at("choices")) {
    Choice c;
    if (jc.contains("context_score") && !jc.at("context_score").is_null()) {
      c.context_score = jc.at("context_score").get<double>();
    }
    c.graph.node_types = jc.at("nodes").get<std::vector<int>>();
    for (const auto& je : jc.at("edges")) {
      if (!je.is_array() || je.size() != 3) {
        throw parse_error("edge entries must be [src, dst, rel] triples");
      }
      c.graph.edges.push_back(
          {je[0].get<int>(), je[1].get<int>(), je[2].get<int>()});
    }
    inst.choices.push_back(std::move(c));
  }
  return inst;
}

ordered_json instance_to_json(const QAInstance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["label"] = inst.label;
  ordered_json choices = ordered_json::array();
  for (const Choice& c : inst.choices) {
    ordered_json jc;
    if (c.context_score.has_value()) {
      jc["context_score"] = *c.context_score;
    } else {
      jc["context_score"] = nullptr;
    }
    jc["nodes"] = c.graph.node_types;
    ordered_json edges = ordered_json::array();
    for (const Edge& e : c.graph.edges) {
      edges.push_back(ordered_json::array({e.src, e.dst, e.rel}));
    }
    jc["edges"] = std::move(edges);
    choices.push_back(std::move(jc));
  }
  j["choices"] = std::move(choices);
  return j;
}

void check_instance(const QAInstance& inst) {
  if (inst.choices.size() < 2) {
    throw validation_error("instance " + inst.id + " has " +
                           std::to_string(inst.choices.size()) +
                           " choices, need at least 2");
  }
  if (inst.label < 0 ||
      inst.label >= static_cast<int>(inst.choices.size())) {
    throw validation_error("instance " + inst.id + " label " +
                           std::to_string(inst.label) +
                           " out of range for " +
                           std::to_string(inst.choices.size()) + " choices");
  }
  for (std::size_t c = 0; c < inst.choices.size(); ++c) {
    const SchemaGraph& g = inst.choices[c].graph;
    const int n = g.node_count();
    if (n == 0 || g.node_types[0] != kContextNodeType) {
      throw validation_error("instance " + inst.id + " choice " +
                             std::to_string(c) +
                             ": node 0 must be the context node");
    }
    for (const Edge& e : g.edges) {
      if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n || e.rel < 0) {
        throw validation_error("instance " + inst.id + " choice " +
                               std::to_string(c) +
                               ": edge index out of range");
      }
    }
  }
}

}  // namespace

std::vector<QAInstance> parse_instances(std::istream& in,
                                        const std::string& source_name) {
  std::vector<QAInstance> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(source_name + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    QAInstance inst;
    try {
      inst = instance_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(source_name + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    check_instance(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<QAInstance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw validation_error("cannot open instance file: " + path);
  }
  return parse_instances(in, path);
}

void write_instances(const std::vector<QAInstance>& instances,
                     std::ostream& out) {
  for (const QAInstance& inst : instances) {
    out << instance_to_json(inst).dump() << "\n";
  }
}

void save_instances(const std::vector<QAInstance>& instances,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw validation_error("cannot write instance file: " + path);
  }
  write_instances(instances, out);
}

TripletVocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw config_error("cannot open vocabulary config: " + path);
  }
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("vocabulary config " + path + ": " + e.what());
  }
  return build_triplet_vocab(j.value("node_type_count", 4),
                             j.value("relation_count", 38));
}

}  // namespace gsc
