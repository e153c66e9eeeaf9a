#include "gsc/gsc_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "gsc/errors.hpp"
#include "gsc/rng.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsc {

int GscConfig::resolved_input_dim(const TripletVocabulary& vocab) const {
  const int base = vocab.onehot_dim();
  if (encoder_input_dim == 0) return base;
  if (encoder_input_dim < base) {
    throw config_error("encoder input dimension " +
                       std::to_string(encoder_input_dim) +
                       " is smaller than the one-hot dimension " +
                       std::to_string(base));
  }
  return encoder_input_dim;
}

std::size_t GscParams::param_count() const {
  return static_cast<std::size_t>(w1.size()) + b1.size() + w2.size() +
         b2.size();
}

std::vector<double> GscParams::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const Tensor* t : {&w1, &b1, &w2, &b2}) {
    out.insert(out.end(), t->v.begin(), t->v.end());
  }
  return out;
}

void GscParams::unflatten(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw shape_error("parameter vector has " + std::to_string(flat.size()) +
                      " entries, expected " + std::to_string(param_count()));
  }
  std::size_t off = 0;
  for (Tensor* t : {&w1, &b1, &w2, &b2}) {
    std::copy(flat.begin() + off, flat.begin() + off + t->size(),
              t->v.begin());
    off += t->size();
  }
}

GscParams GscParams::init(int input_dim, std::uint64_t seed) {
  GscParams p;
  p.w1 = Tensor(input_dim, kGscHiddenDim);
  p.b1 = Tensor(1, kGscHiddenDim);
  p.w2 = Tensor(kGscHiddenDim, 1);
  p.b2 = Tensor(1, 1);
  Rng rng(derive_seed(seed, 0x6773635f696e6974ull));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : p.w1.v) w = rng.normal(0.0, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(kGscHiddenDim));
  for (double& w : p.w2.v) w = rng.normal(0.0, s2);
  return p;
}

namespace {

double apply_activation(double x, Activation a) {
  switch (a) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
    case Activation::sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  return x;
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// Hot rows of w1 for a triplet; the padded tail (if any) is all zero and
// contributes nothing.
std::array<int, 3> hot_rows(int head_type, int rel, int tail_type,
                            const TripletVocabulary& vocab) {
  return {vocab.head_offset() + head_type, vocab.relation_offset() + rel,
          vocab.tail_offset() + tail_type};
}

void check_encoder_dims(const GscParams& params,
                        const TripletVocabulary& vocab,
                        const GscConfig& config) {
  const int want = config.resolved_input_dim(vocab);
  if (params.input_dim() != want) {
    throw encoding_error("encoder expects input dimension " +
                         std::to_string(params.input_dim()) +
                         " but the vocabulary/config give " +
                         std::to_string(want));
  }
}

}  // namespace

double encode_triplet_value(int head_type, int rel, int tail_type,
                            const GscParams& params,
                            const TripletVocabulary& vocab,
                            const GscConfig& config) {
  check_encoder_dims(params, vocab, config);
  if (head_type < 0 || head_type >= vocab.node_type_count ||
      tail_type < 0 || tail_type >= vocab.node_type_count ||
      rel < 0 || rel >= vocab.relation_count) {
    throw encoding_error("triplet (" + std::to_string(head_type) + ", " +
                         std::to_string(rel) + ", " +
                         std::to_string(tail_type) +
                         ") outside the vocabulary");
  }
  const auto rows = hot_rows(head_type, rel, tail_type, vocab);
  double z = 0.0;
  for (int j = 0; j < params.hidden_dim(); ++j) {
    const double h = params.b1.v[j] + params.w1.at(rows[0], j) +
                     params.w1.at(rows[1], j) + params.w1.at(rows[2], j);
    z += apply_activation(h, config.hidden_activation) * params.w2.at(j, 0);
  }
  return sigmoid(z + params.b2.v[0]);
}

std::vector<double> edge_encoder_forward(const SchemaGraph& graph,
                                         const GscParams& params,
                                         const TripletVocabulary& vocab,
                                         const GscConfig& config) {
  check_encoder_dims(params, vocab, config);
  // One evaluation per distinct triplet type present in the graph.
  std::map<int, double> cache;
  std::vector<double> out(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const Edge& ed = graph.edges[e];
    const int head = graph.node_types[ed.src];
    const int tail = graph.node_types[ed.dst];
    const int type = vocab.triplet_type_id(head, ed.rel, tail);
    auto it = cache.find(type);
    if (it == cache.end()) {
      it = cache
               .emplace(type, encode_triplet_value(head, ed.rel, tail, params,
                                                   vocab, config))
               .first;
    }
    out[e] = it->second;
  }
  return out;
}

double gsc_forward_serial(const SchemaGraph& graph,
                          std::span<const double> edge_values,
                          int num_layers) {
  const std::size_t ec = graph.edges.size();
  if (edge_values.size() != ec) {
    throw contract_error("edge value count " +
                         std::to_string(edge_values.size()) +
                         " does not match edge count " + std::to_string(ec));
  }
  if (graph.node_count() == 0) return 0.0;
  std::vector<double> edge_state(edge_values.begin(), edge_values.end());
  std::vector<double> node_state(graph.node_count(), 0.0);
  for (int layer = 0; layer < num_layers; ++layer) {
    for (std::size_t e = 0; e < ec; ++e) {
      edge_state[e] += node_state[graph.edges[e].src];
    }
    std::fill(node_state.begin(), node_state.end(), 0.0);
    for (std::size_t e = 0; e < ec; ++e) {
      node_state[graph.edges[e].dst] += edge_state[e];
    }
  }
  return node_state[0];
}

double gsc_forward_parallel(const SchemaGraph& graph,
                            std::span<const double> edge_values,
                            int num_layers) {
  const std::size_t ec = graph.edges.size();
  if (edge_values.size() != ec) {
    throw contract_error("edge value count " +
                         std::to_string(edge_values.size()) +
                         " does not match edge count " + std::to_string(ec));
  }
  const int n = graph.node_count();
  if (n == 0) return 0.0;

  // CSR by destination; per-node edge lists stay in ascending edge order so
  // each node's sum uses the same addition order as the serial reference.
  std::vector<int> offsets(n + 1, 0);
  for (const Edge& e : graph.edges) ++offsets[e.dst + 1];
  for (int v = 0; v < n; ++v) offsets[v + 1] += offsets[v];
  std::vector<int> in_edges(ec);
  {
    std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t e = 0; e < ec; ++e) {
      in_edges[cursor[graph.edges[e].dst]++] = static_cast<int>(e);
    }
  }

  std::vector<double> edge_state(edge_values.begin(), edge_values.end());
  std::vector<double> node_state(n, 0.0);
  for (int layer = 0; layer < num_layers; ++layer) {
#pragma omp parallel for schedule(static)
    for (long e = 0; e < static_cast<long>(ec); ++e) {
      edge_state[e] += node_state[graph.edges[e].src];
    }
#pragma omp parallel for schedule(static)
    for (int v = 0; v < n; ++v) {
      double acc = 0.0;
      for (int k = offsets[v]; k < offsets[v + 1]; ++k) {
        acc += edge_state[in_edges[k]];
      }
      node_state[v] = acc;
    }
  }
  return node_state[0];
}

double gsc_forward(const SchemaGraph& graph,
                   std::span<const double> edge_values, int num_layers) {
  return gsc_forward_serial(graph, edge_values, num_layers);
}

namespace {

// Number of strictly increasing layer schedules for a length-k path under L
// layers: the k-1 hops occupy distinct layers among the last L-1. Pascal's
// rule, no implementation shared with the forward pass.
long schedule_count(int num_layers, int path_len) {
  const int n = num_layers - 1;
  const int k = path_len - 1;
  if (k < 0 || k > n) return path_len == 1 ? 1 : 0;
  std::vector<long> row(n + 1, 0);
  row[0] = 1;
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j >= 1; --j) row[j] += row[j - 1];
  }
  return row[k];
}

void enumerate_paths(const SchemaGraph& graph,
                     const std::vector<std::vector<int>>& in_edges_of,
                     std::span<const double> edge_values, int node,
                     int depth_left, int path_len, int num_layers,
                     double& acc) {
  for (int e : in_edges_of[node]) {
    const double farthest_value = edge_values[e];
    const int len = path_len + 1;
    acc +=
        farthest_value * static_cast<double>(schedule_count(num_layers, len));
    if (depth_left > 1) {
      enumerate_paths(graph, in_edges_of, edge_values, graph.edges[e].src,
                      depth_left - 1, len, num_layers, acc);
    }
  }
}

}  // namespace

double path_sum_oracle(const SchemaGraph& graph,
                       std::span<const double> edge_values, int num_layers) {
  if (edge_values.size() != graph.edges.size()) {
    throw contract_error("edge value count does not match edge count");
  }
  if (graph.node_count() == 0 || num_layers < 1) return 0.0;
  std::vector<std::vector<int>> in_edges_of(graph.node_count());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    in_edges_of[graph.edges[e].dst].push_back(static_cast<int>(e));
  }
  double acc = 0.0;
  enumerate_paths(graph, in_edges_of, edge_values, 0, num_layers, 0,
                  num_layers, acc);
  return acc;
}

double resolve_context_score(const GscConfig& config,
                             std::optional<double> stored,
                             const std::string& instance_id,
                             int choice_index) {
  switch (config.provider) {
    case ContextProvider::zero:
      return 0.0;
    case ContextProvider::constant:
      return config.context_constant;
    case ContextProvider::from_file:
      if (!stored.has_value()) {
        throw missing_score_error(
            "context provider is from_file but instance " + instance_id +
            " choice " + std::to_string(choice_index) +
            " has no context_score");
      }
      return *stored;
  }
  return 0.0;
}

SchemaGraph preprocess_graph(const SchemaGraph& graph, const GscConfig& config,
                             const TripletVocabulary& vocab) {
  if (config.max_nodes.has_value()) {
    return symmetrize(truncate_nodes(graph, *config.max_nodes), vocab);
  }
  return symmetrize(graph, vocab);
}

double choice_score(const SchemaGraph& graph, const GscParams& params,
                    const GscConfig& config, const TripletVocabulary& vocab,
                    std::optional<double> context_score) {
  const double ctx = resolve_context_score(config, context_score, "", 0);
  const std::vector<double> values =
      edge_encoder_forward(graph, params, vocab, config);
  return ctx + gsc_forward(graph, values, config.num_layers);
}

std::vector<double> instance_forward(const QAInstance& instance,
                                     const GscParams& params,
                                     const GscConfig& config,
                                     const TripletVocabulary& vocab) {
  std::vector<double> scores;
  scores.reserve(instance.choices.size());
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    const Choice& choice = instance.choices[c];
    const SchemaGraph g = preprocess_graph(choice.graph, config, vocab);
    const double ctx =
        resolve_context_score(config, choice.context_score, instance.id,
                              static_cast<int>(c));
    const std::vector<double> values =
        edge_encoder_forward(g, params, vocab, config);
    scores.push_back(ctx + gsc_forward(g, values, config.num_layers));
  }
  return scores;
}

std::vector<SoftCountRow> dump_soft_counts(const GscParams& params,
                                           const TripletVocabulary& vocab,
                                           const GscConfig& config,
                                           int top_k) {
  std::vector<SoftCountRow> rows;
  rows.reserve(vocab.triplet_type_count());
  for (int h = 0; h < vocab.node_type_count; ++h) {
    for (int r = 0; r < vocab.relation_count; ++r) {
      for (int t = 0; t < vocab.node_type_count; ++t) {
        rows.push_back(
            {h, r, t, encode_triplet_value(h, r, t, params, vocab, config)});
      }
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const SoftCountRow& a, const SoftCountRow& b) {
              if (a.value != b.value) return a.value > b.value;
              if (a.head_type != b.head_type) return a.head_type < b.head_type;
              if (a.relation != b.relation) return a.relation < b.relation;
              return a.tail_type < b.tail_type;
            });
  if (top_k >= 0 && top_k < static_cast<int>(rows.size())) {
    rows.resize(top_k);
  }
  return rows;
}

void write_soft_counts_csv(std::ostream& out,
                           const std::vector<SoftCountRow>& rows) {
  out << "head_type,relation,tail_type,soft_count\n";
  out.precision(17);
  for (const SoftCountRow& r : rows) {
    out << r.head_type << "," << r.relation << "," << r.tail_type << ","
        << r.value << "\n";
  }
}

std::vector<LayerTrace> trace_layers(const SchemaGraph& graph,
                                     const GscParams& params,
                                     const GscConfig& config,
                                     const TripletVocabulary& vocab) {
  const std::vector<double> values =
      edge_encoder_forward(graph, params, vocab, config);
  std::vector<LayerTrace> out;
  std::vector<double> edge_state(values);
  std::vector<double> node_state(graph.node_count(), 0.0);
  for (int layer = 0; layer < config.num_layers; ++layer) {
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      edge_state[e] += node_state[graph.edges[e].src];
    }
    std::fill(node_state.begin(), node_state.end(), 0.0);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      node_state[graph.edges[e].dst] += edge_state[e];
    }
    out.push_back({edge_state, node_state});
  }
  return out;
}

std::string layer_trace_json(const std::vector<LayerTrace>& traces) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < traces.size(); ++i) {
    nlohmann::ordered_json layer;
    layer["layer"] = i + 1;
    layer["edge_values"] = traces[i].edge_values;
    layer["node_values"] = traces[i].node_values;
    j.push_back(std::move(layer));
  }
  return j.dump();
}

GscLeaves make_gsc_leaves(Tape& tape, const GscParams& params) {
  return {tape.leaf(params.w1), tape.leaf(params.b1), tape.leaf(params.w2),
          tape.leaf(params.b2)};
}

Value build_choice_score(Tape& tape, const SchemaGraph& graph,
                         const GscLeaves& leaves, const GscConfig& config,
                         const TripletVocabulary& vocab,
                         double context_score) {
  const int ec = graph.edge_count();
  if (ec == 0) {
    return tape.add_const(tape.leaf(Tensor::scalar(0.0)), context_score);
  }
  std::vector<std::array<int, 3>> rows;
  rows.reserve(ec);
  std::vector<int> src(ec), dst(ec);
  for (int e = 0; e < ec; ++e) {
    const Edge& ed = graph.edges[e];
    rows.push_back({vocab.head_offset() + graph.node_types[ed.src],
                    vocab.relation_offset() + ed.rel,
                    vocab.tail_offset() + graph.node_types[ed.dst]});
    src[e] = ed.src;
    dst[e] = ed.dst;
  }
  Value h = tape.threehot_affine(leaves.w1, leaves.b1, rows);  // [E x 32]
  switch (config.hidden_activation) {
    case Activation::relu:
      h = tape.relu(h);
      break;
    case Activation::tanh:
      h = tape.tanh_(h);
      break;
    case Activation::sigmoid:
      h = tape.sigmoid(h);
      break;
  }
  Value z = tape.affine(leaves.w2, leaves.b2, h);        // [E x 1]
  Value edge_vals = tape.sigmoid(tape.reshape(z, 1, ec));  // [1 x E]
  Value node_vals = tape.leaf(Tensor(1, graph.node_count()));
  for (int layer = 0; layer < config.num_layers; ++layer) {
    edge_vals = tape.gather_add(edge_vals, node_vals, src);
    node_vals = tape.scatter_add(edge_vals, dst, graph.node_count());
  }
  return tape.add_const(tape.pick(node_vals, 0), context_score);
}

Value build_instance_loss(Tape& tape, const QAInstance& instance,
                          const GscLeaves& leaves, const GscConfig& config,
                          const TripletVocabulary& vocab) {
  std::vector<Value> scores;
  scores.reserve(instance.choices.size());
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    const Choice& choice = instance.choices[c];
    const SchemaGraph g = preprocess_graph(choice.graph, config, vocab);
    const double ctx =
        resolve_context_score(config, choice.context_score, instance.id,
                              static_cast<int>(c));
    scores.push_back(
        build_choice_score(tape, g, leaves, config, vocab, ctx));
  }
  return tape.softmax_cross_entropy(tape.concat_scalars(scores),
                                    instance.label);
}

std::vector<double> collect_gsc_grads(const Tape& tape,
                                      const GscLeaves& leaves) {
  std::vector<double> out;
  for (Value v : {leaves.w1, leaves.b1, leaves.w2, leaves.b2}) {
    const Tensor& g = tape.grad(v);
    out.insert(out.end(), g.v.begin(), g.v.end());
  }
  return out;
}

}  // namespace gsc
