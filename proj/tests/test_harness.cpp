#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gsc/bench.hpp"
#include "gsc/errors.hpp"
#include "gsc/overlap.hpp"
#include "gsc/rng.hpp"
#include "gsc/synthetic.hpp"
#include "gsc/train.hpp"

using namespace gsc;

namespace {

SyntheticTaskConfig small_task(int count, std::uint64_t seed) {
  SyntheticTaskConfig cfg;
  cfg.instance_count = count;
  cfg.choices = 5;
  cfg.min_nodes = 6;
  cfg.max_nodes = 12;
  cfg.min_noise_edges = 3;
  cfg.max_noise_edges = 9;
  cfg.seed = seed;
  cfg.vocab = build_triplet_vocab(4, 38);
  cfg.planted = {{1, 3, 1, 3}, {1, 5, 2, 2}};
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generator") {
  SUBCASE("fixed seed reproduces the corpus byte for byte") {
    const auto a = generate_synthetic(small_task(25, 3));
    const auto b = generate_synthetic(small_task(25, 3));
    std::ostringstream sa, sb;
    write_instances(a, sa);
    write_instances(b, sb);
    CHECK(sa.str() == sb.str());
  }
  SUBCASE("every generated choice passes validation") {
    const auto instances = generate_synthetic(small_task(50, 5));
    const TripletVocabulary vocab = build_triplet_vocab(4, 38);
    for (const QAInstance& inst : instances) {
      for (const Choice& c : inst.choices) {
        CHECK(validate_graph(c.graph, vocab).empty());
      }
    }
  }
  SUBCASE("the planted-count rule classifies every instance") {
    SyntheticTaskConfig cfg = small_task(40, 7);
    const auto instances = generate_synthetic(cfg);
    for (const QAInstance& inst : instances) {
      int best = -1;
      double best_stat = -1.0;
      for (std::size_t c = 0; c < inst.choices.size(); ++c) {
        const double s = planted_count_statistic(inst.choices[c].graph,
                                                 cfg.planted, cfg.vocab);
        if (s > best_stat) {
          best_stat = s;
          best = static_cast<int>(c);
        }
      }
      CHECK(best == inst.label);
    }
  }
  SUBCASE("noise-free corpus is classified perfectly by counting") {
    SyntheticTaskConfig cfg = small_task(30, 11);
    cfg.min_noise_edges = 0;
    cfg.max_noise_edges = 0;
    cfg.planted = {{1, 3, 1, 3}};
    const auto instances = generate_synthetic(cfg);
    for (const QAInstance& inst : instances) {
      for (std::size_t c = 0; c < inst.choices.size(); ++c) {
        const double s = planted_count_statistic(inst.choices[c].graph,
                                                 cfg.planted, cfg.vocab);
        if (static_cast<int>(c) == inst.label) {
          CHECK(s >= 3.0);
        } else {
          CHECK(s == 0.0);
        }
      }
    }
  }
  SUBCASE("infeasible configs are rejected") {
    SyntheticTaskConfig bad = small_task(5, 1);
    bad.planted = {{1, 3, kOtherNodeType, 2}};  // tail outside receptive field
    CHECK_THROWS_AS(generate_synthetic(bad), generation_error);
    SyntheticTaskConfig bad2 = small_task(5, 1);
    bad2.planted[0].count_delta = 0;
    CHECK_THROWS_AS(generate_synthetic(bad2), generation_error);
    SyntheticTaskConfig bad3 = small_task(5, 1);
    bad3.choices = 1;
    CHECK_THROWS_AS(generate_synthetic(bad3), generation_error);
  }
}

TEST_CASE("training memorizes a single instance") {
  const auto instances = generate_synthetic(small_task(1, 13));
  ModelConfig mc;
  mc.vocab = build_triplet_vocab(4, 38);
  auto model = make_model(mc, 17);
  TrainConfig tc;
  tc.max_epochs = 200;
  tc.early_stop_patience = 0;
  tc.batch_size = 1;
  tc.seed = 17;
  const TrainResult result = train(*model, tc, instances, instances);
  CHECK(result.log.back().train_acc == 1.0);
}

TEST_CASE("model selection returns the best dev epoch") {
  const auto train_set = generate_synthetic(small_task(60, 19));
  const auto dev_set = generate_synthetic(small_task(30, 23));
  ModelConfig mc;
  mc.vocab = build_triplet_vocab(4, 38);
  auto model = make_model(mc, 29);
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.early_stop_patience = 0;
  tc.seed = 29;
  const TrainResult result = train(*model, tc, train_set, dev_set);
  double max_dev = 0.0;
  for (const EpochMetrics& m : result.log) max_dev = std::max(max_dev, m.dev_acc);
  CHECK(result.best_dev_acc == max_dev);
  const EvalResult eval = evaluate(*model, dev_set);
  CHECK(eval.accuracy == result.best_dev_acc);
}

TEST_CASE("evaluation behaviors") {
  SUBCASE("chance level on a signal-free task") {
    // instances whose label carries no signal at all
    Rng rng(31);
    std::vector<QAInstance> instances;
    const TripletVocabulary vocab = build_triplet_vocab(4, 38);
    for (int i = 0; i < 1000; ++i) {
      QAInstance inst;
      inst.id = "n" + std::to_string(i);
      inst.label = rng.uniform_int(0, 4);
      for (int c = 0; c < 5; ++c) {
        Choice choice;
        choice.graph.node_types = {0, 1, 2};
        choice.graph.edges = {{1, 0, 34}, {2, 0, 36}};
        for (int k = 0; k < 4; ++k) {
          choice.graph.edges.push_back(
              {rng.uniform_int(0, 2), rng.uniform_int(0, 2),
               rng.uniform_int(0, 37)});
        }
        inst.choices.push_back(std::move(choice));
      }
      instances.push_back(std::move(inst));
    }
    ModelConfig mc;
    mc.vocab = vocab;
    auto model = make_model(mc, 37);
    const EvalResult result = evaluate(*model, instances);
    CHECK(result.accuracy > 0.16);
    CHECK(result.accuracy < 0.24);
  }
  SUBCASE("perfect context scores give accuracy 1") {
    const auto base = generate_synthetic(small_task(40, 41));
    std::vector<QAInstance> instances = base;
    for (QAInstance& inst : instances) {
      for (std::size_t c = 0; c < inst.choices.size(); ++c) {
        inst.choices[c].context_score =
            static_cast<int>(c) == inst.label ? 1000.0 : 0.0;
      }
    }
    ModelConfig mc;
    mc.vocab = build_triplet_vocab(4, 38);
    mc.provider = ContextProvider::from_file;
    auto model = make_model(mc, 43);
    const EvalResult result = evaluate(*model, instances);
    CHECK(result.accuracy == 1.0);
  }
  SUBCASE("ties break toward the lowest choice index") {
    QAInstance inst;
    inst.id = "tie";
    inst.label = 1;
    for (int c = 0; c < 3; ++c) {
      Choice choice;
      choice.graph.node_types = {0, 1};
      choice.graph.edges = {{1, 0, 34}};  // identical graphs, identical scores
      inst.choices.push_back(std::move(choice));
    }
    ModelConfig mc;
    mc.vocab = build_triplet_vocab(4, 38);
    auto model = make_model(mc, 47);
    const EvalResult result = evaluate(*model, {inst});
    CHECK(result.predictions[0].pred == 0);
    CHECK(result.accuracy == 0.0);
  }
}

TEST_CASE("checkpoint round trip preserves behavior") {
  const auto data = generate_synthetic(small_task(20, 53));
  ModelConfig mc;
  mc.vocab = build_triplet_vocab(4, 38);
  auto model = make_model(mc, 59);
  const std::string path = temp_path("gsc_test_ckpt.json");
  save_checkpoint(path, mc, *model);
  LoadedCheckpoint loaded = load_checkpoint(path);
  const EvalResult a = evaluate(*model, data);
  const EvalResult b = evaluate(*loaded.model, data);
  REQUIRE(a.predictions.size() == b.predictions.size());
  for (std::size_t i = 0; i < a.predictions.size(); ++i) {
    CHECK(a.predictions[i].pred == b.predictions[i].pred);
    for (std::size_t c = 0; c < a.predictions[i].scores.size(); ++c) {
      CHECK(a.predictions[i].scores[c] == b.predictions[i].scores[c]);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("training is bitwise deterministic") {
  const auto train_set = generate_synthetic(small_task(40, 61));
  const auto dev_set = generate_synthetic(small_task(20, 67));
  auto run = [&](const std::string& tag) {
    ModelConfig mc;
    mc.vocab = build_triplet_vocab(4, 38);
    auto model = make_model(mc, 71);
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.seed = 71;
    const TrainResult result = train(*model, tc, train_set, dev_set);
    const std::string ckpt = temp_path("gsc_det_" + tag + ".json");
    const std::string metrics = temp_path("gsc_det_" + tag + ".csv");
    save_checkpoint(ckpt, mc, *model);
    std::ofstream m(metrics, std::ios::binary);
    write_metrics_csv(m, result.log);
    m.close();
    const std::string bytes = file_bytes(ckpt) + file_bytes(metrics);
    std::filesystem::remove(ckpt);
    std::filesystem::remove(metrics);
    return bytes;
  };
  CHECK(run("a") == run("b"));
}

TEST_CASE("prediction files round trip") {
  std::vector<PredictionRecord> preds = {
      {"q0", 2, {0.1, 0.2, 0.9}},
      {"q1", 0, {1.5, -0.25, 0.0}},
  };
  const std::string path = temp_path("gsc_preds.jsonl");
  save_predictions(preds, path);
  const auto loaded = load_predictions(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].id == "q0");
  CHECK(loaded[0].pred == 2);
  CHECK(loaded[1].scores[0] == 1.5);
  std::filesystem::remove(path);
}

TEST_CASE("overlap report") {
  std::vector<QAInstance> gold;
  for (int i = 0; i < 4; ++i) {
    QAInstance inst;
    inst.id = "q" + std::to_string(i);
    inst.label = i % 2;
    Choice c;
    c.graph.node_types = {0};
    inst.choices = {c, c};
    gold.push_back(inst);
  }
  SUBCASE("identical correct predictions populate one region") {
    std::vector<PredictionRecord> a, b;
    for (int i = 0; i < 4; ++i) {
      a.push_back({"q" + std::to_string(i), i % 2, {}});
      b.push_back({"q" + std::to_string(i), i % 2, {}});
    }
    const OverlapReport rep = overlap_report(a, b, gold);
    CHECK(rep.agreement == 1.0);
    CHECK(rep.region_counts[7] == 4);  // both correct, agree
    for (int r = 0; r < 7; ++r) CHECK(rep.region_counts[r] == 0);
  }
  SUBCASE("complement predictions on a 2-way task") {
    std::vector<PredictionRecord> a, b;
    for (int i = 0; i < 4; ++i) {
      const int label = i % 2;
      a.push_back({"q" + std::to_string(i), label, {}});
      b.push_back({"q" + std::to_string(i), 1 - label, {}});
    }
    const OverlapReport rep = overlap_report(a, b, gold);
    CHECK(rep.agreement == 0.0);
    CHECK(rep.acc_a == 1.0);
    CHECK(rep.acc_b == 0.0);
    CHECK(rep.region_counts[1] == 4);  // a correct only, disagree
  }
  SUBCASE("id mismatch raises an alignment error") {
    std::vector<PredictionRecord> a = {{"q0", 0, {}}, {"q1", 0, {}},
                                       {"q2", 0, {}}, {"qX", 0, {}}};
    std::vector<PredictionRecord> b = {{"q0", 0, {}}, {"q1", 0, {}},
                                       {"q2", 0, {}}, {"q3", 0, {}}};
    CHECK_THROWS_AS(overlap_report(a, b, gold), alignment_error);
  }
}

TEST_CASE("bench") {
  SUBCASE("empty-ish graphs run without crashing") {
    SchemaGraph g;
    g.node_types = {0};
    CHECK(gsc_forward(g, {}, 2) == 0.0);
  }
  SUBCASE("tiny scaling run produces a sane fit") {
    const std::vector<long> sizes = {2000, 8000, 32000};
    const BenchResult r = bench_scaling(sizes, 3, 2, false);
    REQUIRE(r.points.size() == 3);
    for (const auto& p : r.points) CHECK(p.seconds > 0.0);
    CHECK(std::isfinite(r.slope));
    CHECK(r.slope > 0.0);
  }
  SUBCASE("edge counts must increase") {
    const std::vector<long> sizes = {100, 100};
    CHECK_THROWS_AS(bench_scaling(sizes, 1, 2, false), config_error);
  }
}
