#include "gsc/counter.hpp"

#include <cmath>
#include <ostream>

#include "gsc/errors.hpp"
#include "gsc/rng.hpp"

namespace gsc {

namespace {

int pair_type_count(const TripletVocabulary& vocab,
                    const CounterConfig& config) {
  return config.full_pair_typing ? vocab.triplet_type_count()
                                 : vocab.relation_count;
}

int edge_pair_type(const SchemaGraph& graph, const Edge& e,
                   const TripletVocabulary& vocab,
                   const CounterConfig& config) {
  if (!config.full_pair_typing) return e.rel;
  return vocab.triplet_type_id(graph.node_types[e.src], e.rel,
                               graph.node_types[e.dst]);
}

}  // namespace

int count_feature_dim(const TripletVocabulary& vocab,
                      const CounterConfig& config) {
  const int one_hop = vocab.triplet_type_count();
  if (config.mode == CounterMode::one_hop) return one_hop;
  const int p = pair_type_count(vocab, config);
  return one_hop + p * p;
}

CountFeature count_features_1hop(const SchemaGraph& graph,
                                 const TripletVocabulary& vocab) {
  CountFeature f;
  f.mode = CounterMode::one_hop;
  f.values.assign(vocab.triplet_type_count(), 0.0);
  for (const Edge& e : graph.edges) {
    const int type = vocab.triplet_type_id(graph.node_types[e.src], e.rel,
                                           graph.node_types[e.dst]);
    f.values[type] += 1.0;
  }
  return f;
}

CountFeature count_features_2hop(const SchemaGraph& graph,
                                 const TripletVocabulary& vocab,
                                 const CounterConfig& config) {
  CountFeature f = count_features_1hop(graph, vocab);
  f.mode = CounterMode::two_hop;
  const int p = pair_type_count(vocab, config);
  const int offset = static_cast<int>(f.values.size());
  f.values.resize(offset + static_cast<std::size_t>(p) * p, 0.0);

  // Group edges by source so each length-2 path (first, second) with
  // dst(first) == src(second) is visited once.
  std::vector<std::vector<int>> out_edges_of(graph.node_count());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    out_edges_of[graph.edges[e].src].push_back(static_cast<int>(e));
  }
  for (std::size_t first = 0; first < graph.edges.size(); ++first) {
    const Edge& ef = graph.edges[first];
    const int tf = edge_pair_type(graph, ef, vocab, config);
    for (int second : out_edges_of[ef.dst]) {
      const Edge& es = graph.edges[second];
      if (config.context_terminated_pairs && es.dst != 0) continue;
      const int ts = edge_pair_type(graph, es, vocab, config);
      f.values[offset + tf * p + ts] += 1.0;
    }
  }
  return f;
}

CountFeature count_features(const SchemaGraph& graph,
                            const TripletVocabulary& vocab,
                            const CounterConfig& config) {
  if (config.mode == CounterMode::one_hop) {
    return count_features_1hop(graph, vocab);
  }
  return count_features_2hop(graph, vocab, config);
}

std::size_t MlpHeadParams::param_count() const {
  return static_cast<std::size_t>(w1.size()) + b1.size() + w2.size() +
         b2.size();
}

std::vector<double> MlpHeadParams::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const Tensor* t : {&w1, &b1, &w2, &b2}) {
    out.insert(out.end(), t->v.begin(), t->v.end());
  }
  return out;
}

void MlpHeadParams::unflatten(std::span<const double> flat) {
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

MlpHeadParams MlpHeadParams::init(int input_dim, int hidden_dim,
                                  std::uint64_t seed) {
  MlpHeadParams p;
  p.w1 = Tensor(input_dim, hidden_dim);
  p.b1 = Tensor(1, hidden_dim);
  p.w2 = Tensor(hidden_dim, 1);
  p.b2 = Tensor(1, 1);
  Rng rng(derive_seed(seed, 0x686561645f696e69ull));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : p.w1.v) w = rng.normal(0.0, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& w : p.w2.v) w = rng.normal(0.0, s2);
  return p;
}

double counter_forward(const CountFeature& feature,
                       const MlpHeadParams& params) {
  if (feature.dim() != params.input_dim()) {
    throw shape_error("feature dimension " + std::to_string(feature.dim()) +
                      " does not match head input dimension " +
                      std::to_string(params.input_dim()));
  }
  const int hidden = params.hidden_dim();
  std::vector<double> h(params.b1.v);
  for (int i = 0; i < feature.dim(); ++i) {
    const double x = feature.values[i];
    if (x == 0.0) continue;
    for (int j = 0; j < hidden; ++j) h[j] += x * params.w1.at(i, j);
  }
  double z = params.b2.v[0];
  for (int j = 0; j < hidden; ++j) {
    const double a = h[j] > 0.0 ? h[j] : 0.0;
    z += a * params.w2.at(j, 0);
  }
  return z;
}

MlpHeadLeaves make_head_leaves(Tape& tape, const MlpHeadParams& params) {
  return {tape.leaf(params.w1), tape.leaf(params.b1), tape.leaf(params.w2),
          tape.leaf(params.b2)};
}

Value build_counter_score(Tape& tape, const CountFeature& feature,
                          const MlpHeadLeaves& leaves) {
  Tensor x(1, feature.dim());
  x.v = feature.values;
  Value h = tape.relu(tape.affine(leaves.w1, leaves.b1, tape.leaf(x)));
  Value z = tape.affine(leaves.w2, leaves.b2, h);
  return tape.pick(z, 0);
}

std::vector<double> collect_head_grads(const Tape& tape,
                                       const MlpHeadLeaves& leaves) {
  std::vector<double> out;
  for (Value v : {leaves.w1, leaves.b1, leaves.w2, leaves.b2}) {
    const Tensor& g = tape.grad(v);
    out.insert(out.end(), g.v.begin(), g.v.end());
  }
  return out;
}

void write_feature_csv(std::ostream& out, const CountFeature& feature) {
  out << "feature_index,count\n";
  for (int i = 0; i < feature.dim(); ++i) {
    out << i << "," << feature.values[i] << "\n";
  }
}

}  // namespace gsc
