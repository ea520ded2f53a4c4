#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "heta/common.hpp"
#include "heta/embed.hpp"
#include "heta/graph_store.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace heta;
using namespace heta::graph_store;

namespace {

EntityNode base_node(const std::string& id, const std::string& desc = "") {
  EntityNode n;
  n.entity_id = id;
  n.display_name = id;
  n.entity_type = "entity";
  n.description = desc;
  return n;
}

Triple triple(const std::string& s, const std::string& p, const std::string& o,
              const std::string& chunk = "c:0000") {
  return {s, p, o, chunk};
}

}  // namespace

TEST_SUITE("graph_store") {

TEST_CASE("import_triples creates normalized nodes and merged edges") {
  GraphStore g;

  SUBCASE("empty import is a no-op") {
    auto stats = g.import_triples({});
    CHECK(stats.nodes_created == 0);
    CHECK(stats.edges_created == 0);
  }

  SUBCASE("single triple creates two nodes and one edge") {
    auto stats = g.import_triples({triple("A", "r", "B")});
    CHECK(stats.nodes_created == 2);
    CHECK(stats.edges_created == 1);
    CHECK(g.has_node("a"));
    CHECK(g.has_node("b"));
    CHECK(g.has_edge("a", "b", "r"));
    CHECK(g.node("a").display_name == "A");
  }

  SUBCASE("case variants merge with weight increments") {
    auto stats = g.import_triples({triple("A", "r", "B", "c:1"), triple("a", "r", "B", "c:2")});
    CHECK(stats.nodes_created == 2);
    CHECK(stats.edges_created == 1);
    REQUIRE(g.edges().size() == 1);
    CHECK(g.edges()[0].weight == doctest::Approx(2.0));
    CHECK(g.edges()[0].provenance == std::vector<std::string>{"c:1", "c:2"});
  }

  SUBCASE("whitespace collapses in entity ids") {
    g.import_triples({triple("Jane   Miller", "founded", "Acme  Robotics")});
    CHECK(g.has_node("jane miller"));
    CHECK(g.has_node("acme robotics"));
  }

  SUBCASE("re-import is idempotent on node and edge sets") {
    std::vector<Triple> batch{triple("A", "r", "B"), triple("B", "s", "C")};
    g.import_triples(batch);
    auto again = g.import_triples(batch);
    CHECK(again.nodes_created == 0);
    CHECK(again.edges_created == 0);
    CHECK(g.node_count() == 3);
    CHECK(g.edge_count() == 2);
  }

  SUBCASE("triples with empty fields are skipped with a warning") {
    drain_warnings();
    auto stats = g.import_triples({triple("", "r", "B"), triple("A", "", "B"), triple("A", "r", "")});
    CHECK(stats.nodes_created == 0);
    CHECK(stats.edges_created == 0);
    CHECK(drain_warnings().size() == 3);
  }
}

TEST_CASE("edges require existing endpoints and unique keys") {
  GraphStore g;
  g.upsert_node(base_node("a"));
  g.upsert_node(base_node("b"));
  g.add_edge({"a", "b", "knows", 1.0, {"c:1"}});
  CHECK(g.has_edge("a", "b", "knows"));
  CHECK(!g.has_edge("b", "a", "knows"));
  CHECK_THROWS_WITH_AS(g.add_edge({"a", "b", "knows", 1.0, {}}), doctest::Contains("AlreadyExists"),
                       Error);
  CHECK_THROWS_WITH_AS(g.add_edge({"a", "zz", "knows", 1.0, {}}), doctest::Contains("UnknownEntity"),
                       Error);
  CHECK_THROWS_WITH_AS(g.node("zz"), doctest::Contains("UnknownEntity"), Error);
}

TEST_CASE("khop walks the undirected closure") {
  GraphStore g;
  for (const char* id : {"a", "b", "c", "iso"}) g.upsert_node(base_node(id));
  g.add_edge({"a", "b", "r", 1.0, {}});
  g.add_edge({"c", "b", "r", 1.0, {}});  // direction ignored by traversal

  CHECK(g.khop_neighbors("iso", 3) == std::set<std::string>{"iso"});
  CHECK(g.khop_neighbors("a", 0) == std::set<std::string>{"a"});
  CHECK(g.khop_neighbors("a", 1) == std::set<std::string>{"a", "b"});
  CHECK(g.khop_neighbors("a", 2) == std::set<std::string>{"a", "b", "c"});
  CHECK_THROWS_WITH_AS(g.khop_neighbors("nope", 1), doctest::Contains("UnknownEntity"), Error);
}

TEST_CASE("khop results match BFS oracle and grow monotonically") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    GraphStore g;
    const int n = 4 + static_cast<int>(rng() % 20);
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      ids.push_back("n" + std::to_string(i));
      g.upsert_node(base_node(ids.back()));
    }
    std::vector<std::pair<std::string, std::string>> edges;
    const int m = static_cast<int>(rng() % (2 * n));
    for (int e = 0; e < m; ++e) {
      const auto& u = ids[rng() % ids.size()];
      const auto& v = ids[rng() % ids.size()];
      if (u == v || g.has_edge(u, v, "r")) continue;
      g.add_edge({u, v, "r", 1.0, {}});
      edges.emplace_back(u, v);
    }

    const auto& seed = ids[rng() % ids.size()];
    std::set<std::string> prev;
    for (int k = 0; k <= 5; ++k) {
      auto got = g.khop_neighbors(seed, k);
      auto want = oracle::khop(edges, seed, k);
      CHECK(got == want);
      // Monotone growth in k.
      CHECK(std::includes(got.begin(), got.end(), prev.begin(), prev.end()));
      prev = std::move(got);
    }
  }
}

TEST_CASE("layer-restricted traversal stays on the layer") {
  GraphStore g;
  g.upsert_node(base_node("x"));
  g.upsert_node(base_node("y"));
  EntityNode summary = base_node("s1");
  summary.layer = 1;
  summary.entity_type = "community_summary";
  g.upsert_node(summary);
  g.add_edge({"x", "y", "r", 1.0, {}});
  g.add_edge({"x", "s1", "member_of", 1.0, {}});

  auto base_only = g.khop_neighbors("x", 3, 0);
  CHECK(base_only == std::set<std::string>{"x", "y"});
  auto unrestricted = g.khop_neighbors("x", 3);
  CHECK(unrestricted == std::set<std::string>{"s1", "x", "y"});
}

TEST_CASE("match_entities ranks exact matches then cosine") {
  embed::Embedder embedder({embed::EmbedderKind::deterministic_hash, 64});
  GraphStore g;
  g.upsert_node(base_node("acme robotics", "industrial robot arms manufacturer"));
  g.upsert_node(base_node("lakeside university", "research school near the lake"));
  g.upsert_node(base_node("jane miller", "founder and engineer"));
  g.ensure_embeddings(embedder);

  SUBCASE("exact normalized name wins with score 1") {
    auto q = embedder.embed_text("Acme  ROBOTICS");
    auto matches = g.match_entities("Acme  ROBOTICS", q, 3);
    REQUIRE(!matches.empty());
    CHECK(matches[0].entity_id == "acme robotics");
    CHECK(matches[0].exact);
    CHECK(matches[0].score == doctest::Approx(1.0));
  }

  SUBCASE("otherwise ranked by description cosine") {
    const std::string query = "industrial robot arms";
    auto qv = embedder.embed_text(query);
    auto matches = g.match_entities(query, qv, 3);
    REQUIRE(!matches.empty());
    CHECK(matches[0].entity_id == "acme robotics");
    CHECK(!matches[0].exact);
    // Oracle: ordering must agree with direct cosine computation.
    for (std::size_t i = 1; i < matches.size(); ++i) {
      const auto& prev = *g.node(matches[i - 1].entity_id).embedding;
      const auto& cur = *g.node(matches[i].entity_id).embedding;
      CHECK(embed::cosine_similarity(prev, qv) >= embed::cosine_similarity(cur, qv));
    }
  }

  SUBCASE("empty graph yields nothing") {
    GraphStore empty;
    auto qv = embedder.embed_text("anything");
    CHECK(empty.match_entities("anything", qv, 5).empty());
  }

  SUBCASE("limit caps results") {
    auto qv = embedder.embed_text("research school near the lake");
    CHECK(g.match_entities("research", qv, 1).size() <= 1);
  }
}

TEST_CASE("ensure_embeddings fills only missing vectors") {
  embed::Embedder embedder({embed::EmbedderKind::deterministic_hash, 32});
  GraphStore g;
  g.upsert_node(base_node("a", "alpha description"));
  g.ensure_embeddings(embedder);
  REQUIRE(g.node("a").embedding.has_value());
  auto first = g.node("a").embedding->values;

  g.node_mut("a").description = "changed later";
  g.ensure_embeddings(embedder);
  CHECK(g.node("a").embedding->values == first);
}

TEST_CASE("snapshot round-trips nodes edges and traversals") {
  testsupport::TempDir tmp;
  std::mt19937 rng(5150);
  GraphStore g;

  SUBCASE("empty graph") {
    g.snapshot(tmp.str());
    auto back = GraphStore::restore(tmp.str());
    CHECK(back.node_count() == 0);
    CHECK(back.edge_count() == 0);
  }

  SUBCASE("50-node random graph keeps khop identical") {
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) {
      ids.push_back("e" + std::to_string(i));
      auto n = base_node(ids.back(), "node " + std::to_string(i));
      if (i % 3 == 0) n.community_id = "comm" + std::to_string(i % 5);
      g.upsert_node(n);
    }
    for (int e = 0; e < 80; ++e) {
      const auto& u = ids[rng() % ids.size()];
      const auto& v = ids[rng() % ids.size()];
      if (u == v || g.has_edge(u, v, "r")) continue;
      g.add_edge({u, v, "r", 1.0 + (e % 3), {"c:" + std::to_string(e)}});
    }
    embed::Embedder embedder({embed::EmbedderKind::deterministic_hash, 16});
    g.ensure_embeddings(embedder);
    g.snapshot(tmp.str());
    auto back = GraphStore::restore(tmp.str());
    CHECK(back.node_count() == g.node_count());
    CHECK(back.edge_count() == g.edge_count());
    for (int t = 0; t < 10; ++t) {
      const auto& seed = ids[rng() % ids.size()];
      const int k = static_cast<int>(rng() % 4);
      CHECK(back.khop_neighbors(seed, k) == g.khop_neighbors(seed, k));
    }
    CHECK(back.node("e0").embedding.has_value());
    CHECK(back.node("e0").embedding->values == g.node("e0").embedding->values);
    CHECK(back.node("e3").community_id == g.node("e3").community_id);
  }

  SUBCASE("missing snapshot directory raises") {
    CHECK_THROWS_WITH_AS(GraphStore::restore(tmp.sub("absent")),
                         doctest::Contains("CorruptSnapshot"), Error);
  }
}

}  // TEST_SUITE
