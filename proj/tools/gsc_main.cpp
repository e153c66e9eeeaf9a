// Command-line front end: corpus generation, training, evaluation,
// inspection, SparseVD pruning runs, scaling benchmarks and prediction
// overlap reports.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gsc/bench.hpp"
#include "gsc/counter.hpp"
#include "gsc/errors.hpp"
#include "gsc/graph.hpp"
#include "gsc/gsc_model.hpp"
#include "gsc/overlap.hpp"
#include "gsc/sparsevd.hpp"
#include "gsc/synthetic.hpp"
#include "gsc/train.hpp"
#include "json.hpp"

namespace {

using nlohmann::ordered_json;

ordered_json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gsc::config_error("cannot open config file: " + path);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw gsc::config_error(path + ": " + e.what());
  }
}

gsc::TrainConfig train_config_from(const ordered_json& j) {
  gsc::TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.kl_coeff = j.value("kl_coeff", c.kl_coeff);
  c.kl_warmup_frac = j.value("kl_warmup_frac", c.kl_warmup_frac);
  return c;
}

gsc::SyntheticTaskConfig gen_config_from(const ordered_json& j) {
  gsc::SyntheticTaskConfig c;
  c.instance_count = j.value("instance_count", 100);
  c.choices = j.value("choices", 5);
  c.min_nodes = j.value("min_nodes", 6);
  c.max_nodes = j.value("max_nodes", 14);
  c.min_noise_edges = j.value("min_noise_edges", 4);
  c.max_noise_edges = j.value("max_noise_edges", 12);
  c.seed = j.value("seed", 0);
  c.id_prefix = j.value("id_prefix", std::string("q"));
  c.vocab = gsc::build_triplet_vocab(
      j.contains("vocab") ? j["vocab"].value("node_type_count", 4) : 4,
      j.contains("vocab") ? j["vocab"].value("relation_count", 38) : 38);
  if (j.contains("planted")) {
    for (const auto& p : j["planted"]) {
      gsc::PlantedSignal s;
      s.head_type = p.value("head_type", 1);
      s.rel = p.value("rel", 0);
      s.tail_type = p.value("tail_type", 1);
      s.count_delta = p.value("count_delta", 2);
      c.planted.push_back(s);
    }
  } else {
    c.planted = {{1, 3, 1, 3}, {1, 5, 2, 2}, {2, 7, 1, 2}};
  }
  return c;
}

struct CliConfig {
  gsc::TrainConfig train;
  gsc::ModelConfig model;
};

CliConfig cli_config_from_file(const std::string& path) {
  CliConfig c;
  if (path.empty()) return c;
  const ordered_json j = load_json_file(path);
  if (j.contains("train")) c.train = train_config_from(j["train"]);
  if (j.contains("model")) {
    c.model = gsc::model_config_from_json(j["model"].dump());
  }
  return c;
}

int run_gen(const std::string& config_path, const std::string& out_path,
            long seed_override, long count_override) {
  gsc::SyntheticTaskConfig cfg =
      config_path.empty() ? gen_config_from(ordered_json::object())
                          : gen_config_from(load_json_file(config_path));
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (count_override >= 0) cfg.instance_count = static_cast<int>(count_override);
  const std::vector<gsc::QAInstance> instances = gsc::generate_synthetic(cfg);
  gsc::save_instances(instances, out_path);
  std::cout << "wrote " << instances.size() << " instances to " << out_path
            << "\n";
  return 0;
}

int run_train(const std::string& model_name, const std::string& data_path,
              const std::string& dev_path, const std::string& config_path,
              long seed_override, const std::string& out_path,
              std::string metrics_path, std::string curve_path,
              bool long_run) {
  CliConfig cfg = cli_config_from_file(config_path);
  if (!model_name.empty()) {
    cfg.model.kind = gsc::model_kind_from_name(model_name);
  }
  if (seed_override >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  }
  if (long_run) cfg.train.max_epochs = 75;

  const auto train_set = gsc::load_instances(data_path);
  const auto dev_set = gsc::load_instances(dev_path);
  auto model = gsc::make_model(cfg.model, cfg.train.seed);
  std::cout << "model " << gsc::model_kind_name(cfg.model.kind) << " with "
            << model->param_count() << " learnable parameters\n";
  const gsc::TrainResult result =
      gsc::train(*model, cfg.train, train_set, dev_set);
  std::cout << "best dev accuracy " << result.best_dev_acc << " at epoch "
            << result.best_epoch << "\n";

  gsc::save_checkpoint(out_path, cfg.model, *model);
  if (metrics_path.empty()) metrics_path = out_path + ".metrics.csv";
  {
    std::ofstream m(metrics_path, std::ios::binary);
    if (!m) throw gsc::validation_error("cannot write " + metrics_path);
    gsc::write_metrics_csv(m, result.log);
  }
  if (!result.curve.empty()) {
    if (curve_path.empty()) curve_path = out_path + ".curve.csv";
    std::ofstream m(curve_path, std::ios::binary);
    if (!m) throw gsc::validation_error("cannot write " + curve_path);
    gsc::write_curve_csv(m, result.curve);
  }
  return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& preds_path) {
  gsc::LoadedCheckpoint ckpt = gsc::load_checkpoint(checkpoint_path);
  const auto data = gsc::load_instances(data_path);
  const gsc::EvalResult result = gsc::evaluate(*ckpt.model, data);
  std::cout << "accuracy " << result.accuracy << " over " << data.size()
            << " instances\n";
  if (!preds_path.empty()) {
    gsc::save_predictions(result.predictions, preds_path);
  }
  return 0;
}

int run_inspect(const std::string& checkpoint_path, int top_k,
                const std::string& csv_path, const std::string& data_path,
                long instance_index, long choice_index,
                const std::string& trace_path) {
  gsc::LoadedCheckpoint ckpt = gsc::load_checkpoint(checkpoint_path);
  auto* gsc_model = dynamic_cast<gsc::GscModel*>(ckpt.model.get());
  if (gsc_model == nullptr) {
    throw gsc::checkpoint_error("inspect needs a gsc checkpoint");
  }
  const gsc::GscConfig gc = ckpt.config.gsc_config();
  const auto rows = gsc::dump_soft_counts(gsc_model->params(),
                                          ckpt.config.vocab, gc, top_k);
  if (csv_path.empty()) {
    gsc::write_soft_counts_csv(std::cout, rows);
  } else {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw gsc::validation_error("cannot write " + csv_path);
    gsc::write_soft_counts_csv(out, rows);
  }
  if (!data_path.empty()) {
    const auto data = gsc::load_instances(data_path);
    if (instance_index < 0 ||
        instance_index >= static_cast<long>(data.size())) {
      throw gsc::config_error("instance index out of range");
    }
    const gsc::QAInstance& inst = data[instance_index];
    if (choice_index < 0 ||
        choice_index >= static_cast<long>(inst.choices.size())) {
      throw gsc::config_error("choice index out of range");
    }
    const gsc::SchemaGraph g = gsc::preprocess_graph(
        inst.choices[choice_index].graph, gc, ckpt.config.vocab);
    const auto traces =
        gsc::trace_layers(g, gsc_model->params(), gc, ckpt.config.vocab);
    const std::string json = gsc::layer_trace_json(traces);
    if (trace_path.empty()) {
      std::cout << json << "\n";
    } else {
      std::ofstream out(trace_path, std::ios::binary);
      if (!out) throw gsc::validation_error("cannot write " + trace_path);
      out << json << "\n";
    }
  }
  return 0;
}

int run_prune(const std::string& data_path, const std::string& dev_path,
              const std::string& config_path, long seed_override,
              const std::string& out_path, std::string curve_path) {
  CliConfig cfg = cli_config_from_file(config_path);
  cfg.model.kind = gsc::ModelKind::vd_mlp;
  if (seed_override >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  }
  const auto train_set = gsc::load_instances(data_path);
  const auto dev_set = gsc::load_instances(dev_path);
  auto model = gsc::make_model(cfg.model, cfg.train.seed);
  auto* vd = dynamic_cast<gsc::VdMlpModel*>(model.get());
  const gsc::TrainResult result =
      gsc::train(*model, cfg.train, train_set, dev_set);

  const auto prepped = gsc::prep_dataset(*model, dev_set);
  std::vector<int> labels;
  for (const auto& inst : dev_set) labels.push_back(inst.label);
  long pre_correct = 0, post_correct = 0;
  for (std::size_t i = 0; i < prepped.size(); ++i) {
    const auto pre = vd->scores_with_tau(prepped[i], gsc::kLogAlphaClamp);
    const auto post = vd->scores_with_tau(prepped[i], cfg.model.vd_tau);
    auto argmax = [](const std::vector<double>& s) {
      int best = 0;
      for (int k = 1; k < static_cast<int>(s.size()); ++k) {
        if (s[k] > s[best]) best = k;
      }
      return best;
    };
    if (argmax(pre) == labels[i]) ++pre_correct;
    if (argmax(post) == labels[i]) ++post_correct;
  }
  const double n = static_cast<double>(prepped.size());
  std::cout << "pre-pruning dev accuracy  " << pre_correct / n << "\n";
  std::cout << "post-pruning dev accuracy " << post_correct / n << "\n";
  std::cout << "embedding block sparse ratio " << vd->embedding_block_ratio()
            << "\n";
  std::cout << "count block sparse ratio     " << vd->count_block_ratio()
            << "\n";
  if (curve_path.empty()) curve_path = "sparse_curve.csv";
  {
    std::ofstream m(curve_path, std::ios::binary);
    if (!m) throw gsc::validation_error("cannot write " + curve_path);
    gsc::write_curve_csv(m, result.curve);
  }
  if (!out_path.empty()) {
    gsc::save_checkpoint(out_path, cfg.model, *model);
  }
  return 0;
}

int run_bench(const std::string& edges_csv, int reps, int layers,
              bool parallel, bool compare) {
  std::vector<long> edge_counts;
  std::stringstream ss(edges_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) edge_counts.push_back(std::stol(tok));
  }
  if (compare) {
    std::cout << "edges,serial_s,parallel_s,speedup\n";
    const auto serial = gsc::bench_scaling(edge_counts, reps, layers, false);
    const auto par = gsc::bench_scaling(edge_counts, reps, layers, true);
    for (std::size_t i = 0; i < serial.points.size(); ++i) {
      std::cout << serial.points[i].edges << "," << serial.points[i].seconds
                << "," << par.points[i].seconds << ","
                << serial.points[i].seconds / par.points[i].seconds << "\n";
    }
    return 0;
  }
  const gsc::BenchResult result =
      gsc::bench_scaling(edge_counts, reps, layers, parallel);
  std::cout << "edges,seconds_per_forward\n";
  for (const auto& p : result.points) {
    std::cout << p.edges << "," << p.seconds << "\n";
  }
  std::cout << "log-log slope " << result.slope << ", r^2 " << result.r2
            << "\n";
  return 0;
}

int run_overlap(const std::string& a_path, const std::string& b_path,
                const std::string& gold_path) {
  const auto a = gsc::load_predictions(a_path);
  const auto b = gsc::load_predictions(b_path);
  const auto gold = gsc::load_instances(gold_path);
  const gsc::OverlapReport rep = gsc::overlap_report(a, b, gold);
  gsc::print_overlap(std::cout, rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph soft counter toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  std::string gen_config, gen_out = "corpus.jsonl";
  long gen_seed = -1, gen_count = -1;
  gen->add_option("--config", gen_config, "generator config JSON");
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--seed", gen_seed, "seed override");
  gen->add_option("--count", gen_count, "instance count override");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_model, tr_data, tr_dev, tr_config, tr_out = "checkpoint.json";
  std::string tr_metrics, tr_curve;
  long tr_seed = -1;
  bool tr_long = false;
  tr->add_option("--model", tr_model, "gsc|counter1|counter2|vd-mlp");
  tr->add_option("--data", tr_data, "training JSONL")->required();
  tr->add_option("--dev", tr_dev, "dev JSONL")->required();
  tr->add_option("--config", tr_config, "train/model config JSON");
  tr->add_option("--seed", tr_seed, "seed override");
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--metrics-out", tr_metrics, "metric log CSV path");
  tr->add_option("--curve-out", tr_curve, "sparse-ratio curve CSV path");
  tr->add_flag("--long", tr_long, "long-run setting (75 epochs)");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_preds;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--preds-out", ev_preds, "prediction JSONL path");

  // inspect
  auto* in = app.add_subcommand("inspect",
                                "soft-count table and layer traces");
  std::string in_ckpt, in_csv, in_data, in_trace;
  int in_topk = 30;
  long in_instance = 0, in_choice = 0;
  in->add_option("--checkpoint", in_ckpt)->required();
  in->add_option("--top-k", in_topk, "rows to keep (-1 = all)");
  in->add_option("--csv-out", in_csv, "soft-count CSV path (default stdout)");
  in->add_option("--data", in_data, "instance file for layer tracing");
  in->add_option("--instance", in_instance, "instance index to trace");
  in->add_option("--choice", in_choice, "choice index to trace");
  in->add_option("--trace-out", in_trace, "layer trace JSON path");

  // prune
  auto* pr = app.add_subcommand("prune", "SparseVD dissection run");
  std::string pr_data, pr_dev, pr_config, pr_out, pr_curve;
  long pr_seed = -1;
  pr->add_option("--data", pr_data)->required();
  pr->add_option("--dev", pr_dev)->required();
  pr->add_option("--config", pr_config, "train/model config JSON");
  pr->add_option("--seed", pr_seed, "seed override");
  pr->add_option("--out", pr_out, "checkpoint path");
  pr->add_option("--curve-out", pr_curve, "sparse-ratio curve CSV path");

  // bench
  auto* be = app.add_subcommand("bench", "gsc_forward scaling benchmark");
  std::string be_edges = "1000,3162,10000,31623,100000,316228,1000000";
  int be_reps = 7, be_layers = 2;
  bool be_parallel = false, be_compare = false;
  be->add_option("--edges", be_edges, "comma-separated edge counts");
  be->add_option("--reps", be_reps, "timing repetitions per size");
  be->add_option("--layers", be_layers, "number of counting layers");
  be->add_flag("--parallel", be_parallel, "use the OpenMP kernel");
  be->add_flag("--compare", be_compare, "compare serial and OpenMP kernels");

  // overlap
  auto* ov = app.add_subcommand("overlap", "prediction overlap report");
  std::string ov_a, ov_b, ov_gold;
  ov->add_option("--a", ov_a)->required();
  ov->add_option("--b", ov_b)->required();
  ov->add_option("--gold", ov_gold)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(gen_config, gen_out, gen_seed, gen_count);
    if (tr->parsed()) {
      return run_train(tr_model, tr_data, tr_dev, tr_config, tr_seed, tr_out,
                       tr_metrics, tr_curve, tr_long);
    }
    if (ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_preds);
    if (in->parsed()) {
      return run_inspect(in_ckpt, in_topk, in_csv, in_data, in_instance,
                         in_choice, in_trace);
    }
    if (pr->parsed()) {
      return run_prune(pr_data, pr_dev, pr_config, pr_seed, pr_out, pr_curve);
    }
    if (be->parsed()) {
      return run_bench(be_edges, be_reps, be_layers, be_parallel, be_compare);
    }
    if (ov->parsed()) return run_overlap(ov_a, ov_b, ov_gold);
  } catch (const gsc::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const gsc::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
