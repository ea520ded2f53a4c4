#include <doctest.h>

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "heta/common.hpp"
#include "heta/embed.hpp"
#include "heta/gateway.hpp"
#include "heta/graph_store.hpp"
#include "heta/ingest.hpp"
#include "heta/kg.hpp"
#include "support/helpers.hpp"

using namespace heta;
using namespace heta::kg;
using testsupport::RuleProvider;

namespace {

ingest::Chunk text_chunk(const std::string& id, const std::string& text) {
  ingest::Chunk chunk;
  chunk.chunk_id = id;
  chunk.doc_id = "doc";
  chunk.modality = ingest::Modality::text;
  chunk.text = text;
  chunk.token_count = static_cast<std::int64_t>(tokenize(text).size());
  return chunk;
}

// Two 3-cliques joined by one bridge edge a1-b3. The async label propagation
// settles on one label per clique, so aggregation must find two communities.
graph_store::GraphStore two_triangles() {
  graph_store::GraphStore g;
  using graph_store::Triple;
  g.import_triples({Triple{"a1", "r", "a2", "c:1"}, Triple{"a1", "r", "a3", "c:1"},
                    Triple{"a2", "r", "a3", "c:2"}, Triple{"b1", "r", "b2", "c:3"},
                    Triple{"b1", "r", "b3", "c:3"}, Triple{"b2", "r", "b3", "c:4"},
                    Triple{"a1", "bridge", "b3", "c:5"}});
  return g;
}

}  // namespace

TEST_SUITE("kg") {

TEST_CASE("pattern extractor follows the capitalized-run rule") {
  SUBCASE("single pair with a one-token gap") {
    auto triples = extract_triples_pattern(text_chunk("c:1", "Marie Curie discovered Polonium."));
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].subject == "marie curie");
    CHECK(triples[0].predicate == "discovered");
    CHECK(triples[0].object == "polonium");
    CHECK(triples[0].source_chunk == "c:1");
  }

  SUBCASE("no capitalized runs yields nothing") {
    CHECK(extract_triples_pattern(text_chunk("c:2", "all lowercase words here.")).empty());
  }

  SUBCASE("two sentences each contribute in order") {
    auto triples = extract_triples_pattern(
        text_chunk("c:3", "Alice founded Initech. Bob joined Initech."));
    REQUIRE(triples.size() == 2);
    CHECK(triples[0].subject == "alice");
    CHECK(triples[0].predicate == "founded");
    CHECK(triples[0].object == "initech");
    CHECK(triples[1].subject == "bob");
    CHECK(triples[1].object == "initech");
  }

  SUBCASE("gap longer than six tokens is ignored") {
    auto triples = extract_triples_pattern(text_chunk(
        "c:4", "Alice worked very hard for many long quiet years at Initech."));
    CHECK(triples.empty());
  }

  SUBCASE("adjacent runs with no gap do not pair") {
    // "Alice Smith Initech" is one run; no middle tokens exist.
    CHECK(extract_triples_pattern(text_chunk("c:5", "Alice Smith Initech.")).empty());
  }

  SUBCASE("rule-execution oracle over a mixed paragraph") {
    // Independent trace: sentence 2 has runs [The firm] [Lakeside University]
    // separated by "partnered with" (2 tokens) -> one triple.
    auto triples = extract_triples_pattern(text_chunk(
        "c:6", "numbers stay low. The Firm partnered with Lakeside University."));
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].subject == "the firm");
    CHECK(triples[0].predicate == "partnered with");
    CHECK(triples[0].object == "lakeside university");
  }
}

TEST_CASE("llm extractor parses retries and skips") {
  auto rules = std::make_shared<RuleProvider>();
  gateway::Gateway gw(gateway::PromptCatalog::builtin(),
                      std::shared_ptr<gateway::ChatProvider>(rules));

  SUBCASE("well-formed response maps to triples") {
    rules->add_rule(testsupport::needle::triple_extract,
                    R"([{"subject":"Acme","predicate":"built","object":"arms"},)"
                    R"({"subject":"Jane","predicate":"founded","object":"Acme"}])");
    auto triples = extract_triples_llm(gw, text_chunk("c:9", "whatever"), "triple_extract");
    REQUIRE(triples.size() == 2);
    CHECK(triples[0].subject == "Acme");
    CHECK(triples[1].predicate == "founded");
    CHECK(triples[0].source_chunk == "c:9");
    CHECK(triples[1].source_chunk == "c:9");
  }

  SUBCASE("malformed reply retried once then good") {
    int calls = 0;
    rules->add_rule(testsupport::needle::triple_extract, [&](const std::string&) {
      ++calls;
      if (calls == 1) return std::string("not json at all");
      return std::string(R"([{"subject":"A","predicate":"r","object":"B"}])");
    });
    auto triples = extract_triples_llm(gw, text_chunk("c:10", "text"), "triple_extract");
    CHECK(calls == 2);
    REQUIRE(triples.size() == 1);
    CHECK(triples[0].subject == "A");
  }

  SUBCASE("persistently malformed reply skips the chunk with a warning") {
    rules->add_rule(testsupport::needle::triple_extract, "still not json");
    drain_warnings();
    CHECK(extract_triples_llm(gw, text_chunk("c:11", "text"), "triple_extract").empty());
    CHECK(!drain_warnings().empty());
  }

  SUBCASE("array items missing keys count as malformed") {
    rules->add_rule(testsupport::needle::triple_extract, R"([{"subject":"A"}])");
    drain_warnings();
    CHECK(extract_triples_llm(gw, text_chunk("c:12", "text"), "triple_extract").empty());
    CHECK(!drain_warnings().empty());
  }
}

TEST_CASE("extract_triples dispatches by kind and filters to text chunks") {
  std::vector<ingest::Chunk> chunks{text_chunk("c:1", "Alice met Bob.")};
  ingest::Chunk table;
  table.chunk_id = "c:2";
  table.modality = ingest::Modality::table;
  table.text = "Alice met Bob.";
  chunks.push_back(table);

  auto triples = extract_triples(chunks, {ExtractorKind::pattern, ""}, nullptr);
  REQUIRE(triples.size() == 1);
  CHECK(triples[0].source_chunk == "c:1");

  CHECK_THROWS_WITH_AS(extract_triples(chunks, {ExtractorKind::llm, "triple_extract"}, nullptr),
                       doctest::Contains("ConfigError"), Error);
}

TEST_CASE("label propagation is deterministic and separates the triangles") {
  auto g = two_triangles();
  std::vector<std::string> ids;
  for (const auto& [id, node] : g.nodes()) ids.push_back(id);

  auto labels = propagate_labels(g, ids, 10);
  REQUIRE(labels.size() == 6);

  // Hand-run of the async sweep: the a-clique settles on a2, the b-clique on
  // b2. The bridge never outweighs the two in-clique votes.
  CHECK(labels.at("a1") == "a2");
  CHECK(labels.at("a2") == "a2");
  CHECK(labels.at("a3") == "a2");
  CHECK(labels.at("b1") == "b2");
  CHECK(labels.at("b2") == "b2");
  CHECK(labels.at("b3") == "b2");

  std::set<std::string> distinct;
  for (const auto& [id, label] : labels) distinct.insert(label);
  CHECK(distinct.size() == 2);

  SUBCASE("second run reproduces the labels exactly") {
    CHECK(propagate_labels(g, ids, 10) == labels);
  }

  SUBCASE("iteration cap still returns labels for every node") {
    auto capped = propagate_labels(g, ids, 1);
    CHECK(capped.size() == 6);
  }
}

TEST_CASE("aggregate_hierarchy builds summaries per community") {
  auto g = two_triangles();

  SUBCASE("two level-1 communities with a related_to projection") {
    auto stats = aggregate_hierarchy(g, {1, 2, 10}, nullptr);
    CHECK(stats.levels_built == 1);
    CHECK(stats.summaries_created == 2);
    REQUIRE(g.has_node("summary:l1:a2"));
    REQUIRE(g.has_node("summary:l1:b2"));
    CHECK(g.node("summary:l1:a2").layer == 1);
    CHECK(g.node("summary:l1:a2").entity_type == "community_summary");

    // Members point at their summary.
    CHECK(g.node("a1").community_id == std::string("summary:l1:a2"));
    CHECK(g.node("b3").community_id == std::string("summary:l1:b2"));
    CHECK(g.has_edge("summary:l1:a2", "a1", "summarizes"));
    CHECK(g.has_edge("summary:l1:b2", "b1", "summarizes"));

    // Null gateway: description is the display names joined in id order.
    CHECK(g.node("summary:l1:a2").description == "a1; a2; a3");

    // Bridge a1-b3 projects onto one related_to edge carrying its provenance.
    REQUIRE(g.has_edge("summary:l1:a2", "summary:l1:b2", "related_to"));
    for (const auto& edge : g.edges()) {
      if (edge.predicate != "related_to") continue;
      CHECK(edge.provenance == std::vector<std::string>{"c:5"});
    }

    // Layer-0 remains untouched: 6 base nodes, original 7 edges intact.
    int base_nodes = 0;
    for (const auto& [id, node] : g.nodes()) base_nodes += node.layer == 0 ? 1 : 0;
    CHECK(base_nodes == 6);
    CHECK(g.has_edge("a1", "b3", "bridge"));
  }

  SUBCASE("rerun is idempotent") {
    aggregate_hierarchy(g, {1, 2, 10}, nullptr);
    const auto nodes_before = g.node_count();
    const auto edges_before = g.edge_count();
    auto again = aggregate_hierarchy(g, {1, 2, 10}, nullptr);
    CHECK(again.summaries_created == 0);
    CHECK(g.node_count() == nodes_before);
    CHECK(g.edge_count() == edges_before);
  }

  SUBCASE("min_community_size above the graph size yields nothing") {
    auto stats = aggregate_hierarchy(g, {1, 7, 10}, nullptr);
    CHECK(stats.summaries_created == 0);
    CHECK(stats.levels_built == 0);
  }

  SUBCASE("second level clusters the summaries via related_to") {
    auto stats = aggregate_hierarchy(g, {2, 2, 10}, nullptr);
    CHECK(stats.levels_built == 2);
    CHECK(stats.summaries_created == 3);
    int level2 = 0;
    for (const auto& [id, node] : g.nodes()) level2 += node.layer == 2 ? 1 : 0;
    CHECK(level2 == 1);
  }

  SUBCASE("scripted gateway supplies summary text") {
    auto rules = std::make_shared<RuleProvider>();
    rules->add_rule(testsupport::needle::community_summary, [](const std::string& prompt) {
      return std::string("summary of: ") + (prompt.find("a1") != std::string::npos ? "A" : "B");
    });
    gateway::Gateway gw(gateway::PromptCatalog::builtin(),
                        std::shared_ptr<gateway::ChatProvider>(rules));
    aggregate_hierarchy(g, {1, 2, 10}, &gw);
    CHECK(g.node("summary:l1:a2").description == "summary of: A");
    CHECK(g.node("summary:l1:b2").description == "summary of: B");
  }
}

TEST_CASE("graph_retrieve walks bottom-up") {
  embed::Embedder embedder({embed::EmbedderKind::deterministic_hash, 64});
  graph_store::GraphStore g;
  using graph_store::Triple;
  g.import_triples({Triple{"a", "r", "b", "c:1"}, Triple{"b", "r", "c", "c:2"}});
  aggregate_hierarchy(g, {1, 3, 10}, nullptr);
  REQUIRE(g.has_node("summary:l1:b"));  // single chain community settles on label b

  SUBCASE("seeded toy walk") {
    auto evidence = graph_retrieve(g, "a", embedder.embed_text("a"), 4);
    REQUIRE(evidence.matches.size() >= 1);
    CHECK(evidence.matches[0].entity_id == "a");
    CHECK(evidence.score == doctest::Approx(1.0));
    CHECK(evidence.node_ids == std::vector<std::string>{"a", "b"});
    REQUIRE(evidence.edges.size() == 1);
    CHECK(evidence.edges[0].src == "a");
    CHECK(evidence.edges[0].dst == "b");
    CHECK(evidence.summary_ids == std::vector<std::string>{"summary:l1:b"});
    CHECK(evidence.provenance == std::vector<std::string>{"c:1"});
  }

  SUBCASE("no match yields empty evidence") {
    embed::EmbeddingVector zero;
    zero.values.assign(64, 0.0f);
    auto evidence = graph_retrieve(g, "unrelated query words", zero, 4);
    CHECK(evidence.matches.empty());
    CHECK(evidence.node_ids.empty());
    CHECK(evidence.edges.empty());
    CHECK(evidence.summary_ids.empty());
    CHECK(evidence.score == 0.0);
  }

  SUBCASE("provenance stays within the known chunks") {
    auto evidence = graph_retrieve(g, "b", embedder.embed_text("b"), 4);
    const std::set<std::string> known{"c:1", "c:2"};
    for (const auto& chunk_id : evidence.provenance) CHECK(known.count(chunk_id) == 1);
  }
}

TEST_CASE("extractor kind parses from strings") {
  CHECK(extractor_kind_from_string("pattern") == ExtractorKind::pattern);
  CHECK(extractor_kind_from_string("llm") == ExtractorKind::llm);
  CHECK_THROWS_WITH_AS(extractor_kind_from_string("magic"), doctest::Contains("ConfigError"), Error);
}

}  // TEST_SUITE
