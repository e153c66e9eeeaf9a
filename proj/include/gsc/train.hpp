#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsc/counter.hpp"
#include "gsc/graph.hpp"
#include "gsc/gsc_model.hpp"
#include "gsc/optimizer.hpp"
#include "gsc/sparsevd.hpp"
#include "gsc/tensor.hpp"

namespace gsc {

enum class ModelKind { gsc, counter1, counter2, vd_mlp };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::gsc;
  TripletVocabulary vocab;
  ContextProvider provider = ContextProvider::zero;
  double context_constant = 0.0;

  // gsc
  int num_layers = 2;
  std::optional<int> max_nodes;
  int encoder_input_dim = 0;
  Activation hidden_activation = Activation::relu;

  // counter baselines (counter2 also drives the pair flags)
  bool full_pair_typing = false;
  bool context_terminated_pairs = false;
  int counter_hidden = 32;

  // vd-mlp: SparseVD-wrapped MLP over [random embedding summary | counts]
  int vd_hidden = 32;
  int vd_emb_dim = 32;
  double vd_tau = kDefaultLogAlphaThreshold;

  GscConfig gsc_config() const;
  CounterConfig counter_config() const;
};

struct TrainConfig {
  double lr = 1e-2;
  int batch_size = 128;
  int max_epochs = 30;      // 75 for the long-run setting
  int early_stop_patience = 5;  // 0 disables early stopping
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // SparseVD only: coefficient on KL/N and its linear warm-up horizon as a
  // fraction of max_epochs.
  double kl_coeff = 1.0;
  double kl_warmup_frac = 1.0 / 3.0;
};

// Per-model preprocessed view of an instance.
struct PreppedChoice {
  SchemaGraph graph;          // gsc: truncated + symmetrized
  CountFeature feature;       // counter kinds
  Tensor vd_input;            // vd-mlp: [1 x (emb dim + feature dim)]
  double context_score = 0.0;
};

struct PreppedInstance {
  std::string id;
  int label = 0;
  std::vector<PreppedChoice> choices;
};

struct InstanceResult {
  double loss = 0.0;
  bool correct = false;
};

// Internal training surface; concrete models are exposed so tests can reach
// model-specific reports.
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t param_count() const = 0;
  virtual std::vector<double> flatten_params() const = 0;
  virtual void set_params(std::span<const double> flat) = 0;
  virtual std::vector<ParamSegment> segments() const = 0;

  virtual PreppedInstance prep(const QAInstance& instance) const = 0;

  // Builds one tape, runs backward, writes d(loss)/d(params) into grad_out.
  virtual InstanceResult loss_and_grad(const PreppedInstance& inst,
                                       std::uint64_t draw_seed,
                                       std::span<double> grad_out) = 0;

  // Deterministic evaluation-mode scores per choice.
  virtual std::vector<double> scores(const PreppedInstance& inst) const = 0;

  // Adds scale * d(KL)/d(params) into grad_accum and returns the KL value;
  // zero for models without variational layers.
  virtual double kl_with_grad(double scale, std::span<double> grad_accum);

  virtual std::vector<SparseReport> sparse_reports(int epoch) const;

  virtual std::string params_json() const = 0;
  virtual void params_from_json(const std::string& json_text) = 0;
};

std::unique_ptr<Model> make_model(const ModelConfig& config,
                                  std::uint64_t seed);

class GscModel : public Model {
 public:
  GscModel(const ModelConfig& config, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::gsc; }
  std::size_t param_count() const override { return params_.param_count(); }
  std::vector<double> flatten_params() const override;
  void set_params(std::span<const double> flat) override;
  std::vector<ParamSegment> segments() const override;
  PreppedInstance prep(const QAInstance& instance) const override;
  InstanceResult loss_and_grad(const PreppedInstance& inst,
                               std::uint64_t draw_seed,
                               std::span<double> grad_out) override;
  std::vector<double> scores(const PreppedInstance& inst) const override;
  std::string params_json() const override;
  void params_from_json(const std::string& json_text) override;

  const GscParams& params() const { return params_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  GscParams params_;
};

class CounterModel : public Model {
 public:
  CounterModel(const ModelConfig& config, std::uint64_t seed);

  ModelKind kind() const override;
  std::size_t param_count() const override { return params_.param_count(); }
  std::vector<double> flatten_params() const override;
  void set_params(std::span<const double> flat) override;
  std::vector<ParamSegment> segments() const override;
  PreppedInstance prep(const QAInstance& instance) const override;
  InstanceResult loss_and_grad(const PreppedInstance& inst,
                               std::uint64_t draw_seed,
                               std::span<double> grad_out) override;
  std::vector<double> scores(const PreppedInstance& inst) const override;
  std::string params_json() const override;
  void params_from_json(const std::string& json_text) override;

  const MlpHeadParams& params() const { return params_; }

 private:
  ModelConfig config_;
  MlpHeadParams params_;
};

class VdMlpModel : public Model {
 public:
  VdMlpModel(const ModelConfig& config, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::vd_mlp; }
  std::size_t param_count() const override;
  std::vector<double> flatten_params() const override;
  void set_params(std::span<const double> flat) override;
  std::vector<ParamSegment> segments() const override;
  PreppedInstance prep(const QAInstance& instance) const override;
  InstanceResult loss_and_grad(const PreppedInstance& inst,
                               std::uint64_t draw_seed,
                               std::span<double> grad_out) override;
  std::vector<double> scores(const PreppedInstance& inst) const override;
  double kl_with_grad(double scale, std::span<double> grad_accum) override;
  std::vector<SparseReport> sparse_reports(int epoch) const override;
  std::string params_json() const override;
  void params_from_json(const std::string& json_text) override;

  // Scores with an explicit pruning threshold; +kLogAlphaClamp keeps every
  // weight (the pre-pruning model).
  std::vector<double> scores_with_tau(const PreppedInstance& inst,
                                      double tau) const;

  double embedding_block_ratio() const;
  double count_block_ratio() const;
  const VariationalAffineParams& layer1() const { return l1_; }
  const VariationalAffineParams& layer2() const { return l2_; }

 private:
  Tensor choice_input(const SchemaGraph& graph, const std::string& instance_id,
                      int choice_index) const;

  ModelConfig config_;
  VariationalAffineParams l1_;
  VariationalAffineParams l2_;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double dev_acc = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  std::vector<double> best_params;
  // Parameters after the last epoch; the dissection flow reads these, since
  // sparse ratios describe the converged regularization state rather than
  // the best-accuracy snapshot.
  std::vector<double> final_params;
  int best_epoch = 0;
  double best_dev_acc = 0.0;
  std::vector<EpochMetrics> log;
  std::vector<SparseReport> curve;
};

// Minimizes the mean softmax cross entropy over choices (+ the KL term for
// variational layers) with RAdam; returns the parameters of the best dev
// epoch. Fully deterministic for a fixed (seed, config, data). The model is
// left holding the best parameters.
TrainResult train(Model& model, const TrainConfig& config,
                  const std::vector<QAInstance>& train_set,
                  const std::vector<QAInstance>& dev_set);

std::vector<PreppedInstance> prep_dataset(const Model& model,
                                          const std::vector<QAInstance>& data);

struct PredictionRecord {
  std::string id;
  int pred = 0;
  std::vector<double> scores;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<PredictionRecord> predictions;
};

// Argmax over choice scores, ties broken by the lowest choice index.
EvalResult evaluate(const Model& model,
                    const std::vector<QAInstance>& instances);
double evaluate_accuracy(const Model& model,
                         const std::vector<PreppedInstance>& prepped,
                         const std::vector<int>& labels);

void write_metrics_csv(std::ostream& out,
                       const std::vector<EpochMetrics>& log);

// Prediction file: JSONL {"id":..., "pred":int, "scores":[...]}
void save_predictions(const std::vector<PredictionRecord>& preds,
                      const std::string& path);
std::vector<PredictionRecord> load_predictions(const std::string& path);

// Checkpoint: JSON with the model kind, vocabulary, model config and named
// parameter arrays of decimal 64-bit reals.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const Model& model);
struct LoadedCheckpoint {
  ModelConfig config;
  std::unique_ptr<Model> model;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace gsc
