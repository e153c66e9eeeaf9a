#include "gsc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gsc/errors.hpp"
#include "gsc/rng.hpp"
#include "json.hpp"

namespace gsc {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566666c6500ull;
constexpr std::uint64_t kDrawTag = 0x647261775f736473ull;
constexpr std::uint64_t kEmbTag = 0x656d625f73756d00ull;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ordered_json tensor_to_json(const Tensor& t) {
  if (t.rows == 1) return ordered_json(t.v);
  ordered_json rows = ordered_json::array();
  for (int r = 0; r < t.rows; ++r) {
    rows.push_back(std::vector<double>(t.v.begin() + static_cast<long>(r) * t.cols,
                                       t.v.begin() + static_cast<long>(r + 1) * t.cols));
  }
  return rows;
}

void tensor_from_json(const ordered_json& j, Tensor& t) {
  std::vector<double> flat;
  if (!j.is_array()) {
    throw checkpoint_error("parameter entry is not an array");
  }
  if (!j.empty() && j[0].is_array()) {
    for (const auto& row : j) {
      const auto r = row.get<std::vector<double>>();
      flat.insert(flat.end(), r.begin(), r.end());
    }
  } else {
    flat = j.get<std::vector<double>>();
  }
  if (static_cast<int>(flat.size()) != t.size()) {
    throw checkpoint_error("parameter entry has " +
                           std::to_string(flat.size()) + " values, expected " +
                           std::to_string(t.size()));
  }
  t.v = std::move(flat);
}

int argmax_lowest(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::gsc:
      return "gsc";
    case ModelKind::counter1:
      return "counter1";
    case ModelKind::counter2:
      return "counter2";
    case ModelKind::vd_mlp:
      return "vd-mlp";
  }
  return "gsc";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "gsc") return ModelKind::gsc;
  if (name == "counter1") return ModelKind::counter1;
  if (name == "counter2") return ModelKind::counter2;
  if (name == "vd-mlp" || name == "vd_mlp") return ModelKind::vd_mlp;
  throw config_error("unknown model kind: " + name);
}

GscConfig ModelConfig::gsc_config() const {
  GscConfig c;
  c.num_layers = num_layers;
  c.max_nodes = max_nodes;
  c.encoder_input_dim = encoder_input_dim;
  c.hidden_activation = hidden_activation;
  c.provider = provider;
  c.context_constant = context_constant;
  return c;
}

CounterConfig ModelConfig::counter_config() const {
  CounterConfig c;
  c.mode = kind == ModelKind::counter2 ? CounterMode::two_hop
                                       : CounterMode::one_hop;
  c.full_pair_typing = full_pair_typing;
  c.context_terminated_pairs = context_terminated_pairs;
  c.hidden_dim = counter_hidden;
  c.max_nodes = max_nodes;
  return c;
}

double Model::kl_with_grad(double, std::span<double>) { return 0.0; }

std::vector<SparseReport> Model::sparse_reports(int) const { return {}; }

// ---------------------------------------------------------------------------
// GscModel

GscModel::GscModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      params_(GscParams::init(config.gsc_config().resolved_input_dim(
                                  config.vocab),
                              seed)) {}

std::vector<double> GscModel::flatten_params() const {
  return params_.flatten();
}

void GscModel::set_params(std::span<const double> flat) {
  params_.unflatten(flat);
}

std::vector<ParamSegment> GscModel::segments() const {
  std::vector<ParamSegment> segs;
  std::size_t off = 0;
  auto push = [&](const std::string& name, std::size_t n) {
    segs.push_back({name, off, off + n});
    off += n;
  };
  push("encoder.w1", params_.w1.size());
  push("encoder.b1", params_.b1.size());
  push("encoder.w2", params_.w2.size());
  push("encoder.b2", params_.b2.size());
  return segs;
}

PreppedInstance GscModel::prep(const QAInstance& instance) const {
  PreppedInstance out;
  out.id = instance.id;
  out.label = instance.label;
  const GscConfig gc = config_.gsc_config();
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    PreppedChoice pc;
    pc.graph = preprocess_graph(instance.choices[c].graph, gc, config_.vocab);
    pc.context_score =
        resolve_context_score(gc, instance.choices[c].context_score,
                              instance.id, static_cast<int>(c));
    out.choices.push_back(std::move(pc));
  }
  return out;
}

InstanceResult GscModel::loss_and_grad(const PreppedInstance& inst,
                                       std::uint64_t /*draw_seed*/,
                                       std::span<double> grad_out) {
  Tape tape;
  const GscLeaves leaves = make_gsc_leaves(tape, params_);
  const GscConfig gc = config_.gsc_config();
  std::vector<Value> scores;
  scores.reserve(inst.choices.size());
  for (const PreppedChoice& pc : inst.choices) {
    scores.push_back(build_choice_score(tape, pc.graph, leaves, gc,
                                        config_.vocab, pc.context_score));
  }
  std::vector<double> score_vals(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    score_vals[i] = tape.value(scores[i]);
  }
  Value loss = tape.softmax_cross_entropy(tape.concat_scalars(scores),
                                          inst.label);
  tape.backward(loss);
  const std::vector<double> g = collect_gsc_grads(tape, leaves);
  std::copy(g.begin(), g.end(), grad_out.begin());
  return {tape.value(loss), argmax_lowest(score_vals) == inst.label};
}

std::vector<double> GscModel::scores(const PreppedInstance& inst) const {
  const GscConfig gc = config_.gsc_config();
  std::vector<double> out;
  out.reserve(inst.choices.size());
  for (const PreppedChoice& pc : inst.choices) {
    const std::vector<double> values =
        edge_encoder_forward(pc.graph, params_, config_.vocab, gc);
    out.push_back(pc.context_score +
                  gsc_forward(pc.graph, values, gc.num_layers));
  }
  return out;
}

std::string GscModel::params_json() const {
  ordered_json j;
  j["encoder.w1"] = tensor_to_json(params_.w1);
  j["encoder.b1"] = tensor_to_json(params_.b1);
  j["encoder.w2"] = tensor_to_json(params_.w2);
  j["encoder.b2"] = tensor_to_json(params_.b2);
  return j.dump();
}

void GscModel::params_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  tensor_from_json(j.at("encoder.w1"), params_.w1);
  tensor_from_json(j.at("encoder.b1"), params_.b1);
  tensor_from_json(j.at("encoder.w2"), params_.w2);
  tensor_from_json(j.at("encoder.b2"), params_.b2);
}

// ---------------------------------------------------------------------------
// CounterModel

CounterModel::CounterModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      params_(MlpHeadParams::init(
          count_feature_dim(config.vocab, config.counter_config()),
          config.counter_hidden, seed)) {}

ModelKind CounterModel::kind() const { return config_.kind; }

std::vector<double> CounterModel::flatten_params() const {
  return params_.flatten();
}

void CounterModel::set_params(std::span<const double> flat) {
  params_.unflatten(flat);
}

std::vector<ParamSegment> CounterModel::segments() const {
  std::vector<ParamSegment> segs;
  std::size_t off = 0;
  auto push = [&](const std::string& name, std::size_t n) {
    segs.push_back({name, off, off + n});
    off += n;
  };
  push("head.w1", params_.w1.size());
  push("head.b1", params_.b1.size());
  push("head.w2", params_.w2.size());
  push("head.b2", params_.b2.size());
  return segs;
}

PreppedInstance CounterModel::prep(const QAInstance& instance) const {
  PreppedInstance out;
  out.id = instance.id;
  out.label = instance.label;
  const CounterConfig cc = config_.counter_config();
  const GscConfig gc = config_.gsc_config();
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    PreppedChoice pc;
    SchemaGraph g = instance.choices[c].graph;
    if (cc.max_nodes.has_value()) g = truncate_nodes(g, *cc.max_nodes);
    g = symmetrize(g, config_.vocab);
    pc.feature = count_features(g, config_.vocab, cc);
    pc.context_score =
        resolve_context_score(gc, instance.choices[c].context_score,
                              instance.id, static_cast<int>(c));
    out.choices.push_back(std::move(pc));
  }
  return out;
}

InstanceResult CounterModel::loss_and_grad(const PreppedInstance& inst,
                                           std::uint64_t /*draw_seed*/,
                                           std::span<double> grad_out) {
  Tape tape;
  const MlpHeadLeaves leaves = make_head_leaves(tape, params_);
  std::vector<Value> scores;
  scores.reserve(inst.choices.size());
  std::vector<double> score_vals;
  for (const PreppedChoice& pc : inst.choices) {
    Value s = tape.add_const(build_counter_score(tape, pc.feature, leaves),
                             pc.context_score);
    score_vals.push_back(tape.value(s));
    scores.push_back(s);
  }
  Value loss = tape.softmax_cross_entropy(tape.concat_scalars(scores),
                                          inst.label);
  tape.backward(loss);
  const std::vector<double> g = collect_head_grads(tape, leaves);
  std::copy(g.begin(), g.end(), grad_out.begin());
  return {tape.value(loss), argmax_lowest(score_vals) == inst.label};
}

std::vector<double> CounterModel::scores(const PreppedInstance& inst) const {
  std::vector<double> out;
  out.reserve(inst.choices.size());
  for (const PreppedChoice& pc : inst.choices) {
    out.push_back(pc.context_score + counter_forward(pc.feature, params_));
  }
  return out;
}

std::string CounterModel::params_json() const {
  ordered_json j;
  j["head.w1"] = tensor_to_json(params_.w1);
  j["head.b1"] = tensor_to_json(params_.b1);
  j["head.w2"] = tensor_to_json(params_.w2);
  j["head.b2"] = tensor_to_json(params_.b2);
  return j.dump();
}

void CounterModel::params_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  tensor_from_json(j.at("head.w1"), params_.w1);
  tensor_from_json(j.at("head.b1"), params_.b1);
  tensor_from_json(j.at("head.w2"), params_.w2);
  tensor_from_json(j.at("head.b2"), params_.b2);
}

// ---------------------------------------------------------------------------
// VdMlpModel

VdMlpModel::VdMlpModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      l1_(VariationalAffineParams::init(
          config.vd_emb_dim +
              count_feature_dim(config.vocab, config.counter_config()),
          config.vd_hidden, derive_seed(seed, 1))),
      l2_(VariationalAffineParams::init(config.vd_hidden, 1,
                                        derive_seed(seed, 2))) {}

std::size_t VdMlpModel::param_count() const {
  return l1_.param_count() + l2_.param_count();
}

std::vector<double> VdMlpModel::flatten_params() const {
  std::vector<double> out = l1_.flatten();
  const std::vector<double> tail = l2_.flatten();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

void VdMlpModel::set_params(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw shape_error("parameter vector size mismatch");
  }
  l1_.unflatten(flat.subspan(0, l1_.param_count()));
  l2_.unflatten(flat.subspan(l1_.param_count()));
}

std::vector<ParamSegment> VdMlpModel::segments() const {
  std::vector<ParamSegment> segs;
  std::size_t off = 0;
  auto push = [&](const std::string& name, std::size_t n) {
    segs.push_back({name, off, off + n});
    off += n;
  };
  push("l1.theta", l1_.theta.size());
  push("l1.log_sigma2", l1_.log_sigma2.size());
  push("l1.bias", l1_.bias.size());
  push("l2.theta", l2_.theta.size());
  push("l2.log_sigma2", l2_.log_sigma2.size());
  push("l2.bias", l2_.bias.size());
  return segs;
}

Tensor VdMlpModel::choice_input(const SchemaGraph& graph,
                                const std::string& instance_id,
                                int choice_index) const {
  const CountFeature feature =
      count_features(graph, config_.vocab, config_.counter_config());
  Tensor x(1, config_.vd_emb_dim + feature.dim());
  // Random node embeddings (mean-pooled): carry no task signal by
  // construction and are expected to be pruned away. Kept at a modest scale
  // so the dispensable block does not dominate the activation variance.
  const std::uint64_t base =
      derive_seed(kEmbTag, fnv1a(instance_id), choice_index);
  for (int node = 0; node < graph.node_count(); ++node) {
    Rng rng(derive_seed(base, node));
    for (int k = 0; k < config_.vd_emb_dim; ++k) {
      x.v[k] += rng.normal();
    }
  }
  for (int k = 0; k < config_.vd_emb_dim; ++k) {
    x.v[k] *= 0.25 / std::max(1, graph.node_count());
  }
  for (int i = 0; i < feature.dim(); ++i) {
    x.v[config_.vd_emb_dim + i] = feature.values[i];
  }
  return x;
}

PreppedInstance VdMlpModel::prep(const QAInstance& instance) const {
  PreppedInstance out;
  out.id = instance.id;
  out.label = instance.label;
  const CounterConfig cc = config_.counter_config();
  const GscConfig gc = config_.gsc_config();
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    PreppedChoice pc;
    SchemaGraph g = instance.choices[c].graph;
    if (cc.max_nodes.has_value()) g = truncate_nodes(g, *cc.max_nodes);
    g = symmetrize(g, config_.vocab);
    pc.vd_input = choice_input(g, instance.id, static_cast<int>(c));
    pc.context_score =
        resolve_context_score(gc, instance.choices[c].context_score,
                              instance.id, static_cast<int>(c));
    out.choices.push_back(std::move(pc));
  }
  return out;
}

InstanceResult VdMlpModel::loss_and_grad(const PreppedInstance& inst,
                                         std::uint64_t draw_seed,
                                         std::span<double> grad_out) {
  Tape tape;
  const VdLeaves leaves1 = make_vd_leaves(tape, l1_);
  const VdLeaves leaves2 = make_vd_leaves(tape, l2_);
  std::vector<Value> scores;
  std::vector<double> score_vals;
  for (std::size_t c = 0; c < inst.choices.size(); ++c) {
    Rng rng(derive_seed(draw_seed, kDrawTag, c));
    Value x = tape.leaf(inst.choices[c].vd_input);
    Value h = tape.relu(build_vd_forward_train(tape, leaves1, x, rng));
    Value z = build_vd_forward_train(tape, leaves2, h, rng);
    Value s = tape.add_const(tape.pick(z, 0), inst.choices[c].context_score);
    score_vals.push_back(tape.value(s));
    scores.push_back(s);
  }
  Value loss = tape.softmax_cross_entropy(tape.concat_scalars(scores),
                                          inst.label);
  tape.backward(loss);
  std::size_t off = 0;
  for (Value v : {leaves1.theta, leaves1.log_sigma2, leaves1.bias,
                  leaves2.theta, leaves2.log_sigma2, leaves2.bias}) {
    const Tensor& g = tape.grad(v);
    std::copy(g.v.begin(), g.v.end(), grad_out.begin() + off);
    off += g.size();
  }
  return {tape.value(loss), argmax_lowest(score_vals) == inst.label};
}

std::vector<double> VdMlpModel::scores_with_tau(const PreppedInstance& inst,
                                                double tau) const {
  std::vector<double> out;
  out.reserve(inst.choices.size());
  for (const PreppedChoice& pc : inst.choices) {
    Tensor h = vd_forward_eval(l1_, pc.vd_input, tau);
    for (double& v : h.v) v = v > 0.0 ? v : 0.0;
    const Tensor z = vd_forward_eval(l2_, h, tau);
    out.push_back(pc.context_score + z.v[0]);
  }
  return out;
}

std::vector<double> VdMlpModel::scores(const PreppedInstance& inst) const {
  return scores_with_tau(inst, config_.vd_tau);
}

double VdMlpModel::kl_with_grad(double scale, std::span<double> grad_accum) {
  Tape tape;
  const VdLeaves leaves1 = make_vd_leaves(tape, l1_);
  const VdLeaves leaves2 = make_vd_leaves(tape, l2_);
  Value kl = tape.add(build_kl_term(tape, leaves1.theta, leaves1.log_sigma2),
                      build_kl_term(tape, leaves2.theta, leaves2.log_sigma2));
  tape.backward(kl);
  std::size_t off = 0;
  for (Value v : {leaves1.theta, leaves1.log_sigma2, leaves1.bias,
                  leaves2.theta, leaves2.log_sigma2, leaves2.bias}) {
    const Tensor& g = tape.grad(v);
    for (int i = 0; i < g.size(); ++i) {
      grad_accum[off + i] += scale * g.v[i];
    }
    off += g.size();
  }
  return tape.value(kl);
}

double VdMlpModel::embedding_block_ratio() const {
  return sparse_ratio_rows(l1_, config_.vd_tau, 0, config_.vd_emb_dim);
}

double VdMlpModel::count_block_ratio() const {
  return sparse_ratio_rows(l1_, config_.vd_tau, config_.vd_emb_dim,
                           l1_.theta.rows);
}

std::vector<SparseReport> VdMlpModel::sparse_reports(int epoch) const {
  return {
      {epoch, "l1.embedding", embedding_block_ratio()},
      {epoch, "l1.counts", count_block_ratio()},
      {epoch, "l2", sparse_ratio(l2_, config_.vd_tau)},
  };
}

std::string VdMlpModel::params_json() const {
  ordered_json j;
  j["l1.theta"] = tensor_to_json(l1_.theta);
  j["l1.log_sigma2"] = tensor_to_json(l1_.log_sigma2);
  j["l1.bias"] = tensor_to_json(l1_.bias);
  j["l2.theta"] = tensor_to_json(l2_.theta);
  j["l2.log_sigma2"] = tensor_to_json(l2_.log_sigma2);
  j["l2.bias"] = tensor_to_json(l2_.bias);
  return j.dump();
}

void VdMlpModel::params_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  tensor_from_json(j.at("l1.theta"), l1_.theta);
  tensor_from_json(j.at("l1.log_sigma2"), l1_.log_sigma2);
  tensor_from_json(j.at("l1.bias"), l1_.bias);
  tensor_from_json(j.at("l2.theta"), l2_.theta);
  tensor_from_json(j.at("l2.log_sigma2"), l2_.log_sigma2);
  tensor_from_json(j.at("l2.bias"), l2_.bias);
}

std::unique_ptr<Model> make_model(const ModelConfig& config,
                                  std::uint64_t seed) {
  switch (config.kind) {
    case ModelKind::gsc:
      return std::make_unique<GscModel>(config, seed);
    case ModelKind::counter1:
    case ModelKind::counter2:
      return std::make_unique<CounterModel>(config, seed);
    case ModelKind::vd_mlp:
      return std::make_unique<VdMlpModel>(config, seed);
  }
  throw config_error("unknown model kind");
}

// ---------------------------------------------------------------------------
// training loop

std::vector<PreppedInstance> prep_dataset(
    const Model& model, const std::vector<QAInstance>& data) {
  std::vector<PreppedInstance> out(data.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(data.size()); ++i) {
    out[i] = model.prep(data[i]);
  }
  return out;
}

double evaluate_accuracy(const Model& model,
                         const std::vector<PreppedInstance>& prepped,
                         const std::vector<int>& labels) {
  std::vector<int> preds(prepped.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(prepped.size()); ++i) {
    preds[i] = argmax_lowest(model.scores(prepped[i]));
  }
  long correct = 0;
  for (std::size_t i = 0; i < prepped.size(); ++i) {
    if (preds[i] == labels[i]) ++correct;
  }
  return prepped.empty() ? 0.0
                         : static_cast<double>(correct) /
                               static_cast<double>(prepped.size());
}

TrainResult train(Model& model, const TrainConfig& config,
                  const std::vector<QAInstance>& train_set,
                  const std::vector<QAInstance>& dev_set) {
  if (train_set.empty()) throw config_error("training set is empty");
  if (dev_set.empty()) throw config_error("dev set is empty");
  if (config.lr <= 0.0 || config.batch_size < 1 || config.max_epochs < 1) {
    throw config_error("train config: need lr > 0, batch >= 1, epochs >= 1");
  }

  const std::vector<PreppedInstance> train_prepped =
      prep_dataset(model, train_set);
  const std::vector<PreppedInstance> dev_prepped =
      prep_dataset(model, dev_set);
  std::vector<int> dev_labels(dev_set.size());
  for (std::size_t i = 0; i < dev_set.size(); ++i) {
    dev_labels[i] = dev_set[i].label;
  }

  const std::size_t p = model.param_count();
  std::vector<double> params = model.flatten_params();
  RAdamState state;
  state.init(p);
  RAdamConfig opt{config.lr, config.beta1, config.beta2, config.eps};
  const std::vector<ParamSegment> segs = model.segments();

  const long n_train = static_cast<long>(train_prepped.size());
  const long batch = std::min<long>(config.batch_size, n_train);
  std::vector<double> slot_grads(static_cast<std::size_t>(batch) * p);
  std::vector<double> batch_grad(p);
  std::vector<InstanceResult> slot_results(batch);

  std::vector<std::size_t> order(train_prepped.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.best_dev_acc = -1.0;
  const double warmup_epochs = config.kl_warmup_frac * config.max_epochs;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, kShuffleTag, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    const double kl_coeff =
        config.kl_coeff *
        (warmup_epochs <= 0.0
             ? 1.0
             : std::min(1.0, static_cast<double>(epoch) / warmup_epochs));

    double loss_sum = 0.0;
    double kl_value = 0.0;
    long correct = 0;
    for (long start = 0; start < n_train; start += batch) {
      const long bsz = std::min<long>(batch, n_train - start);
#pragma omp parallel for schedule(static)
      for (long b = 0; b < bsz; ++b) {
        const std::size_t idx = order[start + b];
        slot_results[b] = model.loss_and_grad(
            train_prepped[idx],
            derive_seed(config.seed, kDrawTag, epoch, idx),
            std::span<double>(slot_grads.data() + b * p, p));
      }
      // Deterministic reduction in slot (instance) order.
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (long b = 0; b < bsz; ++b) {
        const double* g = slot_grads.data() + b * p;
        for (std::size_t k = 0; k < p; ++k) batch_grad[k] += g[k];
        loss_sum += slot_results[b].loss;
        if (slot_results[b].correct) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(bsz);
      for (std::size_t k = 0; k < p; ++k) batch_grad[k] *= inv;
      kl_value = model.kl_with_grad(
          kl_coeff / static_cast<double>(n_train),
          std::span<double>(batch_grad.data(), p));
      radam_step(params, batch_grad, state, opt, segs);
      model.set_params(params);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(n_train) +
                   kl_coeff * kl_value / static_cast<double>(n_train);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(n_train);
    m.dev_acc = evaluate_accuracy(model, dev_prepped, dev_labels);
    m.kl = kl_value;
    result.log.push_back(m);
    for (const SparseReport& r : model.sparse_reports(epoch)) {
      result.curve.push_back(r);
    }

    if (m.dev_acc > result.best_dev_acc) {
      result.best_dev_acc = m.dev_acc;
      result.best_epoch = epoch;
      result.best_params = params;
    }
    if (config.early_stop_patience > 0 &&
        epoch - result.best_epoch >= config.early_stop_patience) {
      break;
    }
  }

  result.final_params = params;
  model.set_params(result.best_params);
  return result;
}

EvalResult evaluate(const Model& model,
                    const std::vector<QAInstance>& instances) {
  const std::vector<PreppedInstance> prepped = prep_dataset(model, instances);
  EvalResult out;
  out.predictions.resize(prepped.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(prepped.size()); ++i) {
    PredictionRecord rec;
    rec.id = prepped[i].id;
    rec.scores = model.scores(prepped[i]);
    rec.pred = argmax_lowest(rec.scores);
    out.predictions[i] = std::move(rec);
  }
  long correct = 0;
  for (std::size_t i = 0; i < prepped.size(); ++i) {
    if (out.predictions[i].pred == instances[i].label) ++correct;
  }
  out.accuracy = instances.empty()
                     ? 0.0
                     : static_cast<double>(correct) /
                           static_cast<double>(instances.size());
  return out;
}

void write_metrics_csv(std::ostream& out,
                       const std::vector<EpochMetrics>& log) {
  out << "epoch,train_loss,train_acc,dev_acc,kl\n";
  out.precision(17);
  for (const EpochMetrics& m : log) {
    out << m.epoch << "," << m.train_loss << "," << m.train_acc << ","
        << m.dev_acc << "," << m.kl << "\n";
  }
}

void save_predictions(const std::vector<PredictionRecord>& preds,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write prediction file: " + path);
  for (const PredictionRecord& r : preds) {
    ordered_json j;
    j["id"] = r.id;
    j["pred"] = r.pred;
    j["scores"] = r.scores;
    out << j.dump() << "\n";
  }
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open prediction file: " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      PredictionRecord r;
      r.id = j.at("id").get<std::string>();
      r.pred = j.at("pred").get<int>();
      r.scores = j.at("scores").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// model config + checkpoints

namespace {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
  }
  return "relu";
}

Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw config_error("unknown activation: " + s);
}

std::string provider_name(ContextProvider p) {
  switch (p) {
    case ContextProvider::zero:
      return "zero";
    case ContextProvider::constant:
      return "constant";
    case ContextProvider::from_file:
      return "from_file";
  }
  return "zero";
}

ContextProvider provider_from_name(const std::string& s) {
  if (s == "zero") return ContextProvider::zero;
  if (s == "constant") return ContextProvider::constant;
  if (s == "from_file") return ContextProvider::from_file;
  throw config_error("unknown context provider: " + s);
}

ordered_json model_config_json(const ModelConfig& c) {
  ordered_json j;
  j["kind"] = model_kind_name(c.kind);
  j["vocab"] = {{"node_type_count", c.vocab.node_type_count},
                {"relation_count", c.vocab.relation_count}};
  j["context_provider"] = provider_name(c.provider);
  j["context_constant"] = c.context_constant;
  j["num_layers"] = c.num_layers;
  if (c.max_nodes.has_value()) {
    j["max_nodes"] = *c.max_nodes;
  } else {
    j["max_nodes"] = nullptr;
  }
  j["encoder_input_dim"] = c.encoder_input_dim;
  j["hidden_activation"] = activation_name(c.hidden_activation);
  j["full_pair_typing"] = c.full_pair_typing;
  j["context_terminated_pairs"] = c.context_terminated_pairs;
  j["counter_hidden"] = c.counter_hidden;
  j["vd_hidden"] = c.vd_hidden;
  j["vd_emb_dim"] = c.vd_emb_dim;
  j["vd_tau"] = c.vd_tau;
  return j;
}

ModelConfig model_config_from(const ordered_json& j) {
  ModelConfig c;
  c.kind = model_kind_from_name(j.value("kind", std::string("gsc")));
  if (j.contains("vocab")) {
    c.vocab = build_triplet_vocab(j["vocab"].value("node_type_count", 4),
                                  j["vocab"].value("relation_count", 38));
  }
  c.provider =
      provider_from_name(j.value("context_provider", std::string("zero")));
  c.context_constant = j.value("context_constant", 0.0);
  c.num_layers = j.value("num_layers", 2);
  if (j.contains("max_nodes") && !j["max_nodes"].is_null()) {
    c.max_nodes = j["max_nodes"].get<int>();
  }
  c.encoder_input_dim = j.value("encoder_input_dim", 0);
  c.hidden_activation =
      activation_from_name(j.value("hidden_activation", std::string("relu")));
  c.full_pair_typing = j.value("full_pair_typing", false);
  c.context_terminated_pairs = j.value("context_terminated_pairs", false);
  c.counter_hidden = j.value("counter_hidden", 32);
  c.vd_hidden = j.value("vd_hidden", 32);
  c.vd_emb_dim = j.value("vd_emb_dim", 32);
  c.vd_tau = j.value("vd_tau", kDefaultLogAlphaThreshold);
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  return model_config_json(config).dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return model_config_from(ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const Model& model) {
  ordered_json j;
  j["model"] = model_kind_name(config.kind);
  j["config"] = model_config_json(config);
  j["param_count"] = model.param_count();
  j["params"] = ordered_json::parse(model.params_json());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write checkpoint: " + path);
  out << j.dump(1) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw checkpoint_error("cannot open checkpoint: " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(path + ": " + e.what());
  }
  LoadedCheckpoint out;
  try {
    out.config = model_config_from(j.at("config"));
    out.model = make_model(out.config, 0);
    out.model->params_from_json(j.at("params").dump());
    if (j.contains("param_count") &&
        j["param_count"].get<std::size_t>() != out.model->param_count()) {
      throw checkpoint_error("checkpoint parameter count mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(path + ": " + e.what());
  }
  return out;
}

}  // namespace gsc
