#include "gsc/synthetic.hpp"

#include <algorithm>

#include "gsc/errors.hpp"
#include "gsc/rng.hpp"

namespace gsc {

namespace {

constexpr int kMaxAttempts = 200;

void check_config(const SyntheticTaskConfig& cfg) {
  if (cfg.instance_count < 0) {
    throw generation_error("instance_count must be nonnegative");
  }
  if (cfg.choices < 2) {
    throw generation_error("need at least 2 choices per instance");
  }
  if (cfg.min_nodes < 3 || cfg.max_nodes < cfg.min_nodes) {
    throw generation_error(
        "node range must allow a context, a question and an answer node");
  }
  if (cfg.min_noise_edges < 0 || cfg.max_noise_edges < cfg.min_noise_edges) {
    throw generation_error("bad noise edge range");
  }
  if (cfg.label_noise_rate < 0.0 || cfg.label_noise_rate >= 1.0) {
    throw generation_error("label noise rate must lie in [0, 1)");
  }
  if (cfg.vocab.node_type_count < 3) {
    throw generation_error(
        "vocabulary needs context, question and answer node types");
  }
  for (const PlantedSignal& p : cfg.planted) {
    if (p.count_delta < 1) {
      throw generation_error("planted count delta must be >= 1");
    }
    if (p.rel < 0 || p.rel >= cfg.vocab.relation_count ||
        p.head_type < 0 || p.head_type >= cfg.vocab.node_type_count ||
        p.tail_type < 0 || p.tail_type >= cfg.vocab.node_type_count) {
      throw generation_error("planted triplet outside the vocabulary");
    }
    if (p.tail_type > kAnswerNodeType) {
      throw generation_error(
          "planted tail type " + std::to_string(p.tail_type) +
          " is not context-adjacent; planted edges would fall outside a "
          "2-layer receptive field");
    }
    if (p.head_type == kOtherNodeType &&
        cfg.min_nodes < 4) {
      throw generation_error(
          "planted head type 'other' needs min_nodes >= 4");
    }
  }
}

int question_link_relation(const TripletVocabulary& vocab) {
  if (vocab.qa_relation_count >= 2) return 2 * vocab.base_relation_count();
  return 0;
}

int answer_link_relation(const TripletVocabulary& vocab) {
  if (vocab.qa_relation_count >= 4) return 2 * vocab.base_relation_count() + 2;
  return question_link_relation(vocab);
}

SchemaGraph make_noise_graph(const SyntheticTaskConfig& cfg, Rng& rng,
                             bool need_other_node) {
  SchemaGraph g;
  const int n = rng.uniform_int(cfg.min_nodes, cfg.max_nodes);
  g.node_types.resize(n);
  g.node_types[0] = kContextNodeType;
  g.node_types[1] = kQuestionNodeType;
  g.node_types[2] = kAnswerNodeType;
  for (int i = 3; i < n; ++i) {
    g.node_types[i] = rng.uniform_int(kQuestionNodeType, kOtherNodeType);
  }
  if (need_other_node && n >= 4) {
    g.node_types[3] = kOtherNodeType;
  }
  const int q_rel = question_link_relation(cfg.vocab);
  const int a_rel = answer_link_relation(cfg.vocab);
  for (int i = 1; i < n; ++i) {
    if (g.node_types[i] == kQuestionNodeType) {
      g.edges.push_back({i, 0, q_rel});
    } else if (g.node_types[i] == kAnswerNodeType) {
      g.edges.push_back({i, 0, a_rel});
    }
  }
  const int noise = rng.uniform_int(cfg.min_noise_edges, cfg.max_noise_edges);
  for (int k = 0; k < noise; ++k) {
    const int src = rng.uniform_int(0, n - 1);
    int dst = rng.uniform_int(0, n - 2);
    if (dst >= src) ++dst;  // distinct endpoints
    g.edges.push_back({src, dst, rng.uniform_int(0, cfg.vocab.relation_count - 1)});
  }
  return g;
}

void add_planted_edges(SchemaGraph& g, const SyntheticTaskConfig& cfg,
                       Rng& rng) {
  for (const PlantedSignal& p : cfg.planted) {
    std::vector<int> heads, tails;
    for (int i = 0; i < g.node_count(); ++i) {
      if (g.node_types[i] == p.head_type) heads.push_back(i);
      if (g.node_types[i] == p.tail_type) tails.push_back(i);
    }
    if (heads.empty() || tails.empty()) {
      throw generation_error("no node of the planted type is available");
    }
    for (int k = 0; k < p.count_delta; ++k) {
      const int u = heads[rng.uniform_int(0, static_cast<int>(heads.size()) - 1)];
      int v = tails[rng.uniform_int(0, static_cast<int>(tails.size()) - 1)];
      if (u == v) {
        // self loops carry no path into the context node; pick another tail
        // if one exists
        for (int t : tails) {
          if (t != u) {
            v = t;
            break;
          }
        }
      }
      g.edges.push_back({u, v, p.rel});
    }
  }
}

}  // namespace

double planted_count_statistic(const SchemaGraph& graph,
                               const std::vector<PlantedSignal>& planted,
                               const TripletVocabulary& vocab) {
  const SchemaGraph sym = symmetrize(graph, vocab);
  double s = 0.0;
  for (const Edge& e : sym.edges) {
    for (const PlantedSignal& p : planted) {
      if (e.rel == p.rel && sym.node_types[e.src] == p.head_type &&
          sym.node_types[e.dst] == p.tail_type) {
        s += 1.0;
      }
    }
  }
  return s;
}

std::vector<QAInstance> generate_synthetic(const SyntheticTaskConfig& cfg) {
  check_config(cfg);
  const bool need_other =
      std::any_of(cfg.planted.begin(), cfg.planted.end(),
                  [](const PlantedSignal& p) {
                    return p.head_type == kOtherNodeType;
                  });
  std::vector<QAInstance> out;
  out.reserve(cfg.instance_count);
  for (int i = 0; i < cfg.instance_count; ++i) {
    QAInstance inst;
    inst.id = cfg.id_prefix + std::to_string(i);
    Rng label_rng(derive_seed(cfg.seed, 2, i));
    const int true_choice = label_rng.uniform_int(0, cfg.choices - 1);
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      inst.choices.clear();
      for (int c = 0; c < cfg.choices; ++c) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i) * 1024 + c,
                            attempt));
        Choice choice;
        choice.graph = make_noise_graph(cfg, rng, need_other);
        if (c == true_choice) {
          add_planted_edges(choice.graph, cfg, rng);
        }
        inst.choices.push_back(std::move(choice));
      }
      if (cfg.planted.empty()) {
        ok = true;
        break;
      }
      const double gold = planted_count_statistic(
          inst.choices[true_choice].graph, cfg.planted, cfg.vocab);
      ok = true;
      for (int c = 0; c < cfg.choices; ++c) {
        if (c == true_choice) continue;
        if (planted_count_statistic(inst.choices[c].graph, cfg.planted,
                                    cfg.vocab) >= gold) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      throw generation_error(
          "could not generate an unambiguous instance " + inst.id +
          "; the planted signal is too weak for the noise level");
    }
    inst.label = true_choice;
    if (cfg.label_noise_rate > 0.0 &&
        label_rng.uniform() < cfg.label_noise_rate) {
      int flipped = label_rng.uniform_int(0, cfg.choices - 2);
      if (flipped >= true_choice) ++flipped;
      inst.label = flipped;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace gsc
