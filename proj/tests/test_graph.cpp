#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "gsc/errors.hpp"
#include "gsc/graph.hpp"
#include "gsc/rng.hpp"
#include "gsc/synthetic.hpp"

using namespace gsc;

namespace {

SchemaGraph random_graph(Rng& rng, const TripletVocabulary& vocab,
                         int min_nodes = 4, int max_nodes = 12,
                         int min_edges = 0, int max_edges = 20) {
  SchemaGraph g;
  const int n = rng.uniform_int(min_nodes, max_nodes);
  g.node_types.resize(n);
  g.node_types[0] = kContextNodeType;
  for (int i = 1; i < n; ++i) {
    g.node_types[i] = rng.uniform_int(1, vocab.node_type_count - 1);
  }
  const int e = rng.uniform_int(min_edges, max_edges);
  for (int k = 0; k < e; ++k) {
    g.edges.push_back({rng.uniform_int(0, n - 1), rng.uniform_int(0, n - 1),
                       rng.uniform_int(0, vocab.relation_count - 1)});
  }
  return g;
}

}  // namespace

TEST_CASE("vocabulary layout") {
  const TripletVocabulary v = build_triplet_vocab(4, 38);
  CHECK(v.onehot_dim() == 46);
  CHECK(v.base_relation_count() == 17);
  CHECK(build_triplet_vocab(1, 1).onehot_dim() == 3);

  SUBCASE("reversal follows the documented layout") {
    CHECK(v.reverse_relation(0) == 17);
    CHECK(v.reverse_relation(16) == 33);
    CHECK(v.reverse_relation(17) == 0);
    CHECK(v.reverse_relation(34) == 35);
    CHECK(v.reverse_relation(35) == 34);
    CHECK(v.reverse_relation(36) == 37);
    CHECK(v.reverse_relation(37) == 36);
  }
  SUBCASE("reversal is an involution for every relation") {
    for (int r = 0; r < v.relation_count; ++r) {
      CHECK(v.reverse_relation(v.reverse_relation(r)) == r);
    }
    const TripletVocabulary small = build_triplet_vocab(4, 7);
    for (int r = 0; r < small.relation_count; ++r) {
      CHECK(small.reverse_relation(small.reverse_relation(r)) == r);
    }
  }
  SUBCASE("invalid counts are rejected") {
    CHECK_THROWS_AS(build_triplet_vocab(0, 38), config_error);
    CHECK_THROWS_AS(build_triplet_vocab(4, -1), config_error);
  }
  SUBCASE("triplet type ids round trip") {
    for (int t = 0; t < v.triplet_type_count(); ++t) {
      const auto [h, r, tl] = v.triplet_of_type_id(t);
      CHECK(v.triplet_type_id(h, r, tl) == t);
    }
  }
}

TEST_CASE("one-hot encoding") {
  const TripletVocabulary v = build_triplet_vocab(4, 38);
  SUBCASE("layout positions") {
    const auto a = encode_triplet_onehot(0, 0, 0, v);
    CHECK(a[0] == 1.0);
    CHECK(a[4] == 1.0);
    CHECK(a[42] == 1.0);
    const auto b = encode_triplet_onehot(3, 37, 3, v);
    CHECK(b[3] == 1.0);
    CHECK(b[41] == 1.0);
    CHECK(b[45] == 1.0);
  }
  SUBCASE("every valid triplet is three-hot and decodes back") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
      const int h = rng.uniform_int(0, 3);
      const int r = rng.uniform_int(0, 37);
      const int t = rng.uniform_int(0, 3);
      const auto vec = encode_triplet_onehot(h, r, t, v);
      double sum = 0.0;
      for (double x : vec) sum += x;
      CHECK(sum == 3.0);
      const auto back = decode_triplet_onehot(vec, v);
      CHECK(back[0] == h);
      CHECK(back[1] == r);
      CHECK(back[2] == t);
    }
  }
  SUBCASE("out-of-range ids name the offending field") {
    CHECK_THROWS_WITH_AS(encode_triplet_onehot(4, 0, 0, v),
                         doctest::Contains("head"), encoding_error);
    CHECK_THROWS_WITH_AS(encode_triplet_onehot(0, 38, 0, v),
                         doctest::Contains("relation"), encoding_error);
    CHECK_THROWS_WITH_AS(encode_triplet_onehot(0, 0, -1, v),
                         doctest::Contains("tail"), encoding_error);
  }
}

TEST_CASE("symmetrize") {
  const TripletVocabulary v = build_triplet_vocab(4, 38);
  SUBCASE("one edge becomes two") {
    SchemaGraph g;
    g.node_types = {0, 1};
    g.edges = {{1, 0, 34}};
    const SchemaGraph s = symmetrize(g, v);
    REQUIRE(s.edge_count() == 2);
    CHECK(s.edges[0] == Edge{1, 0, 34});
    CHECK(s.edges[1] == Edge{0, 1, 35});
  }
  SUBCASE("already symmetric graphs are unchanged") {
    SchemaGraph g;
    g.node_types = {0, 1};
    g.edges = {{1, 0, 3}, {0, 1, 20}};
    const SchemaGraph s = symmetrize(g, v);
    CHECK(s.edges == g.edges);
  }
  SUBCASE("every edge gets a reversed partner on random graphs") {
    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
      SchemaGraph g = random_graph(rng, v, 4, 10, 10, 10);
      const SchemaGraph s = symmetrize(g, v);
      // exhaustive pairing check
      std::map<std::tuple<int, int, int>, int> count;
      for (const Edge& e : s.edges) ++count[{e.src, e.dst, e.rel}];
      for (const Edge& e : s.edges) {
        const auto rev = std::make_tuple(e.dst, e.src, v.reverse_relation(e.rel));
        CHECK(count[rev] == count[{e.src, e.dst, e.rel}]);
      }
    }
  }
  SUBCASE("idempotence") {
    Rng rng(47);
    for (int trial = 0; trial < 30; ++trial) {
      SchemaGraph g = random_graph(rng, v);
      const SchemaGraph once = symmetrize(g, v);
      const SchemaGraph twice = symmetrize(once, v);
      CHECK(twice.edges == once.edges);
    }
  }
  SUBCASE("originals come first in original order") {
    SchemaGraph g;
    g.node_types = {0, 1, 2};
    g.edges = {{1, 0, 34}, {2, 0, 36}, {1, 2, 5}};
    const SchemaGraph s = symmetrize(g, v);
    REQUIRE(s.edge_count() == 6);
    for (int i = 0; i < 3; ++i) CHECK(s.edges[i] == g.edges[i]);
    CHECK(s.edges[3] == Edge{0, 1, 35});
    CHECK(s.edges[4] == Edge{0, 2, 37});
    CHECK(s.edges[5] == Edge{2, 1, 22});
  }
}

TEST_CASE("truncate_nodes") {
  SUBCASE("under the cap is unchanged") {
    SchemaGraph g;
    g.node_types = {0, 1, 2, 3};
    g.edges = {{1, 0, 34}};
    const SchemaGraph t = truncate_nodes(g, 32);
    CHECK(t.node_types == g.node_types);
    CHECK(t.edges == g.edges);
  }
  SUBCASE("context node alone survives max 1") {
    SchemaGraph g;
    g.node_types = {0, 1, 2};
    g.edges = {{1, 0, 34}, {2, 0, 36}};
    const SchemaGraph t = truncate_nodes(g, 1);
    CHECK(t.node_types == std::vector<int>{0});
    CHECK(t.edges.empty());
  }
  SUBCASE("bad cap is rejected") {
    SchemaGraph g;
    g.node_types = {0};
    CHECK_THROWS_AS(truncate_nodes(g, 0), config_error);
  }
  SUBCASE("priority order and no dangling edges on a 50-node graph") {
    Rng rng(53);
    SchemaGraph g;
    g.node_types.resize(50);
    g.node_types[0] = kContextNodeType;
    for (int i = 1; i < 50; ++i) g.node_types[i] = rng.uniform_int(1, 3);
    for (int k = 0; k < 120; ++k) {
      g.edges.push_back({rng.uniform_int(0, 49), rng.uniform_int(0, 49),
                         rng.uniform_int(0, 37)});
    }
    const SchemaGraph t = truncate_nodes(g, 32);
    REQUIRE(t.node_count() == 32);
    CHECK(t.node_types[0] == kContextNodeType);
    for (const Edge& e : t.edges) {
      CHECK(e.src < 32);
      CHECK(e.dst < 32);
    }
    // every kept node of a lower-priority type implies all higher-priority
    // nodes were kept
    std::vector<int> kept_of_type(4, 0), total_of_type(4, 0);
    for (int i = 1; i < t.node_count(); ++i) ++kept_of_type[t.node_types[i]];
    for (int i = 1; i < g.node_count(); ++i) ++total_of_type[g.node_types[i]];
    bool partial_seen = false;
    for (int type = 1; type <= 3; ++type) {
      if (partial_seen) CHECK(kept_of_type[type] == 0);
      if (kept_of_type[type] < total_of_type[type]) partial_seen = true;
    }
    // kept count per type matches the keep-in-input-order rule
    CHECK(t.node_count() == 32);
  }
  SUBCASE("commutes with symmetrize when truncation keeps all endpoints") {
    Rng rng(59);
    const TripletVocabulary v = build_triplet_vocab(4, 38);
    for (int trial = 0; trial < 20; ++trial) {
      // edges only among the first 6 nodes; the tail nodes are isolated and
      // sort behind them
      SchemaGraph g;
      g.node_types = {0, 1, 1, 2, 2, 1};
      for (int extra = 0; extra < 6; ++extra) {
        g.node_types.push_back(kOtherNodeType);
      }
      for (int k = 0; k < 8; ++k) {
        g.edges.push_back({rng.uniform_int(0, 5), rng.uniform_int(0, 5),
                           rng.uniform_int(0, 37)});
      }
      const SchemaGraph a = truncate_nodes(symmetrize(g, v), 6);
      const SchemaGraph b = symmetrize(truncate_nodes(g, 6), v);
      CHECK(a.node_types == b.node_types);
      CHECK(a.edges == b.edges);
    }
  }
}

TEST_CASE("validate_graph") {
  const TripletVocabulary v = build_triplet_vocab(4, 38);
  SUBCASE("valid graph returns no diagnostics") {
    SchemaGraph g;
    g.node_types = {0, 1, 2};
    g.edges = {{1, 0, 34}, {2, 0, 36}};
    CHECK(validate_graph(g, v).empty());
  }
  SUBCASE("edge with dst == node count is flagged") {
    SchemaGraph g;
    g.node_types = {0, 1};
    g.edges = {{1, 2, 0}};
    const auto diags = validate_graph(g, v);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == DiagnosticCode::edge_dst_out_of_range);
  }
  SUBCASE("wrong context type is flagged") {
    SchemaGraph g;
    g.node_types = {kAnswerNodeType, 1};
    const auto diags = validate_graph(g, v);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].code == DiagnosticCode::context_node_type);
  }
  SUBCASE("all violations are reported together") {
    SchemaGraph g;
    g.node_types = {kAnswerNodeType, 9};
    g.edges = {{1, 5, 99}};
    const auto diags = validate_graph(g, v);
    CHECK(diags.size() == 4);
  }
}

TEST_CASE("instance persistence") {
  SUBCASE("empty file loads as an empty sequence") {
    std::istringstream in("");
    CHECK(parse_instances(in, "mem").empty());
  }
  SUBCASE("format example parses") {
    std::istringstream in(
        R"({"id":"q1","label":0,"choices":[{"context_score":0.0,"nodes":[0,1,1,2],"edges":[[1,0,34],[3,0,36]]},{"context_score":null,"nodes":[0,1],"edges":[[1,0,34]]}]})"
        "\n");
    const auto instances = parse_instances(in, "mem");
    REQUIRE(instances.size() == 1);
    CHECK(instances[0].id == "q1");
    CHECK(instances[0].label == 0);
    REQUIRE(instances[0].choices.size() == 2);
    CHECK(instances[0].choices[0].context_score.has_value());
    CHECK_FALSE(instances[0].choices[1].context_score.has_value());
    CHECK(instances[0].choices[0].graph.node_types ==
          std::vector<int>{0, 1, 1, 2});
    CHECK(instances[0].choices[0].graph.edges[1] == Edge{3, 0, 36});
  }
  SUBCASE("round trip is the identity on a generated corpus") {
    SyntheticTaskConfig cfg;
    cfg.instance_count = 100;
    cfg.seed = 7;
    cfg.vocab = build_triplet_vocab(4, 38);
    cfg.planted = {{1, 3, 1, 3}};
    const auto instances = generate_synthetic(cfg);
    std::ostringstream first;
    write_instances(instances, first);
    std::istringstream in(first.str());
    const auto reloaded = parse_instances(in, "mem");
    std::ostringstream second;
    write_instances(reloaded, second);
    CHECK(first.str() == second.str());
    REQUIRE(reloaded.size() == instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      CHECK(reloaded[i].id == instances[i].id);
      CHECK(reloaded[i].label == instances[i].label);
      for (std::size_t c = 0; c < instances[i].choices.size(); ++c) {
        CHECK(reloaded[i].choices[c].graph.edges ==
              instances[i].choices[c].graph.edges);
        CHECK(reloaded[i].choices[c].graph.node_types ==
              instances[i].choices[c].graph.node_types);
      }
    }
  }
  SUBCASE("malformed line reports its number") {
    std::istringstream in(
        R"({"id":"q0","label":0,"choices":[{"context_score":null,"nodes":[0,1],"edges":[]},{"context_score":null,"nodes":[0,1],"edges":[]}]})"
        "\nnot json\n");
    CHECK_THROWS_WITH_AS(parse_instances(in, "mem"), doctest::Contains(":2"),
                         parse_error);
  }
  SUBCASE("label out of range names the instance") {
    std::istringstream in(
        R"({"id":"q9","label":5,"choices":[{"context_score":null,"nodes":[0],"edges":[]},{"context_score":null,"nodes":[0],"edges":[]}]})"
        "\n");
    CHECK_THROWS_WITH_AS(parse_instances(in, "mem"), doctest::Contains("q9"),
                         validation_error);
  }
}
