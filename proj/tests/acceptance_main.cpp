// End-to-end acceptance checks. Each criterion prints one PASS or FAIL line
// and carries a wall-clock budget; the process exits nonzero when any
// criterion fails. argv[1] names the CLI binary used by the last criterion.

#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "heta/agent.hpp"
#include "heta/common.hpp"
#include "heta/embed.hpp"
#include "heta/evaluation.hpp"
#include "heta/fulltext.hpp"
#include "heta/gateway.hpp"
#include "heta/graph_store.hpp"
#include "heta/ingest.hpp"
#include "heta/kg.hpp"
#include "heta/retrieval.hpp"
#include "heta/service.hpp"
#include "heta/table_store.hpp"
#include "heta/vector_index.hpp"
#include "heta/writer.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

namespace {

namespace fs = std::filesystem;
using testsupport::RuleProvider;
using testsupport::TempDir;
namespace needle = testsupport::needle;

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool condition, const std::string& message) {
  if (!condition) throw CheckFailure(message);
}

std::mt19937& rng() {
  static std::mt19937 gen(20240817u);
  return gen;
}

heta::ingest::Chunk text_chunk(const std::string& id, const std::string& doc,
                               const std::string& text, std::int64_t span_start,
                               std::int64_t span_end) {
  heta::ingest::Chunk chunk;
  chunk.chunk_id = id;
  chunk.doc_id = doc;
  chunk.modality = heta::ingest::Modality::text;
  chunk.text = text;
  chunk.token_count = span_end - span_start;
  chunk.parent_span = {span_start, span_end};
  return chunk;
}

// ---------------------------------------------------------------------------
// 1. Scoring formula.

void criterion_scoring() {
  const auto full = heta::evaluation::score_challenge(100.0, 100.0);
  expect(std::fabs(full.total - 133.33) <= 0.01,
         "score_challenge(100,100) = " + std::to_string(full.total));

  std::uniform_real_distribution<double> unit(0.0, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    double r1 = unit(rng()), r2 = unit(rng());
    double g1 = unit(rng()), g2 = unit(rng());
    if (r1 > r2) std::swap(r1, r2);
    if (g1 > g2) std::swap(g1, g2);
    const auto low = heta::evaluation::score_challenge(r1, g1);
    const auto high = heta::evaluation::score_challenge(r2, g2);
    expect(high.total >= low.total - 1e-12, "score is not monotone in (R, G)");
    expect(std::fabs(low.total - (r1 / 3.0 + g1)) <= 1e-9, "total deviates from R/3 + G");
  }
}

// ---------------------------------------------------------------------------
// 2. Vector exactness.

void criterion_vector() {
  const int dim = 256;
  const int count = 1000;
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::pair<std::string, std::vector<float>>> reference;
  std::vector<heta::vector_index::VectorRecord> records;
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "v%04d", i);
    std::vector<float> values;
    if (i >= 990) {
      // Duplicated vectors force score ties, exercising the id tie rule.
      values = reference[static_cast<std::size_t>(i - 500)].second;
    } else {
      values.resize(dim);
      double norm = 0.0;
      std::vector<double> raw(dim);
      for (int d = 0; d < dim; ++d) {
        raw[static_cast<std::size_t>(d)] = normal(rng());
        norm += raw[static_cast<std::size_t>(d)] * raw[static_cast<std::size_t>(d)];
      }
      norm = std::sqrt(norm);
      for (int d = 0; d < dim; ++d)
        values[static_cast<std::size_t>(d)] = static_cast<float>(raw[static_cast<std::size_t>(d)] / norm);
    }
    reference.emplace_back(id, values);
    heta::embed::EmbeddingVector vec;
    vec.values = values;
    records.push_back({id, std::move(vec), {}});
  }

  heta::vector_index::VectorCollection collection("bench", dim);
  collection.insert(std::move(records));

  for (int q = 0; q < 50; ++q) {
    std::vector<float> query(dim);
    double norm = 0.0;
    std::vector<double> raw(dim);
    for (int d = 0; d < dim; ++d) {
      raw[static_cast<std::size_t>(d)] = normal(rng());
      norm += raw[static_cast<std::size_t>(d)] * raw[static_cast<std::size_t>(d)];
    }
    norm = std::sqrt(norm);
    for (int d = 0; d < dim; ++d)
      query[static_cast<std::size_t>(d)] = static_cast<float>(raw[static_cast<std::size_t>(d)] / norm);

    heta::embed::EmbeddingVector qvec;
    qvec.values = query;
    const auto got = collection.search_topk(qvec, 10);
    const auto want = oracle::cosine_topk(reference, query, 10);
    expect(got.size() == want.size(), "top-k size mismatch");
    for (std::size_t i = 0; i < got.size(); ++i) {
      expect(got[i].chunk_id == want[i].id,
             "rank " + std::to_string(i) + ": got " + got[i].chunk_id + " want " + want[i].id);
      expect(std::fabs(got[i].score - want[i].score) <= 1e-6, "score mismatch at rank " +
                                                                  std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// 3. BM25 oracle.

void criterion_bm25() {
  {
    std::vector<heta::ingest::Chunk> chunks{text_chunk("d1", "d", "apple banana", 0, 2),
                                            text_chunk("d2", "d", "banana cherry", 0, 2)};
    const auto index = heta::fulltext::InvertedIndex::build(chunks);
    const double score = index.bm25_score({}, {"apple"}, "d1");
    expect(std::fabs(score - 0.6931) <= 1e-4 && std::fabs(score - std::log(2.0)) <= 1e-6,
           "hand fixture scored " + std::to_string(score));
    const auto hits = index.search_keyword({}, "apple", 10);
    expect(hits.size() == 1 && hits[0].chunk_id == "d1", "apple must match only d1");
  }

  const std::vector<std::string> vocab{"ant",  "bee",  "cat", "dog",  "elk",  "fox",  "gnu",
                                       "hen",  "ibis", "jay", "kite", "lark", "mole", "newt",
                                       "orca", "pika", "quail", "rook", "seal", "toad"};
  std::uniform_int_distribution<int> corpus_size(2, 50);
  std::uniform_int_distribution<int> doc_len(1, 12);
  std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);

  for (int trial = 0; trial < 20; ++trial) {
    const int n = corpus_size(rng());
    std::vector<heta::ingest::Chunk> chunks;
    std::map<std::string, std::vector<std::string>> docs;
    for (int i = 0; i < n; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "c%03d", i);
      const int len = doc_len(rng());
      std::vector<std::string> tokens;
      for (int t = 0; t < len; ++t) tokens.push_back(vocab[word(rng())]);
      std::string text;
      for (const auto& token : tokens) text += token + " ";
      chunks.push_back(text_chunk(id, "d", text, 0, len));
      docs[id] = tokens;
    }
    const auto index = heta::fulltext::InvertedIndex::build(chunks);

    std::vector<std::string> terms{vocab[word(rng())], vocab[word(rng())], vocab[word(rng())]};
    std::string query;
    for (const auto& term : terms) query += term + " ";
    const auto got = index.search_keyword({}, query, n);
    const auto want = oracle::bm25_topk(docs, terms, n);
    expect(got.size() == want.size(), "keyword hit count deviates from the naive scorer");
    for (std::size_t i = 0; i < got.size(); ++i) {
      expect(got[i].chunk_id == want[i].id, "keyword ranking deviates at rank " +
                                                std::to_string(i));
      expect(std::fabs(got[i].score - want[i].score) <= 1e-9, "keyword score deviates");
    }
  }
}

// ---------------------------------------------------------------------------
// 4. Fusion boundaries.

heta::retrieval::SourceTrace make_trace(heta::retrieval::Source source,
                                        const std::vector<std::pair<std::string, double>>& scored) {
  heta::retrieval::SourceTrace trace;
  trace.source = source;
  int rank = 1;
  for (const auto& [id, score] : scored) {
    heta::retrieval::Hit hit;
    hit.chunk_id = id;
    hit.source = source;
    hit.raw_score = score;
    hit.rank = rank++;
    trace.hits.push_back(hit);
  }
  return trace;
}

std::vector<std::string> order_of(const heta::retrieval::FusedResult& result) {
  std::vector<std::string> ids;
  for (const auto& ranked : result.ranking) ids.push_back(ranked.chunk_id);
  return ids;
}

void criterion_fusion() {
  using heta::retrieval::FusionMode;
  using heta::retrieval::Source;

  std::uniform_real_distribution<double> score_dist(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    // Both lists rank the same six chunks with distinct random scores.
    std::vector<std::string> ids{"c0", "c1", "c2", "c3", "c4", "c5"};
    auto draw_list = [&] {
      std::vector<std::pair<std::string, double>> scored;
      std::set<double> used;
      for (const auto& id : ids) {
        double s = score_dist(rng());
        while (used.count(s)) s = score_dist(rng());
        used.insert(s);
        scored.emplace_back(id, s);
      }
      std::sort(scored.begin(), scored.end(),
                [](const auto& a, const auto& b) { return a.second > b.second; });
      return scored;
    };
    const auto vec_list = draw_list();
    const auto kw_list = draw_list();
    const std::vector<heta::retrieval::SourceTrace> traces{
        make_trace(Source::vector, vec_list), make_trace(Source::fulltext, kw_list)};

    const auto at_one = heta::retrieval::fuse_hybrid(traces, 1.0, FusionMode::alpha_blend);
    for (std::size_t i = 0; i < vec_list.size(); ++i)
      expect(order_of(at_one)[i] == vec_list[i].first, "alpha=1 deviates from the vector order");

    const auto at_zero = heta::retrieval::fuse_hybrid(traces, 0.0, FusionMode::alpha_blend);
    for (std::size_t i = 0; i < kw_list.size(); ++i)
      expect(order_of(at_zero)[i] == kw_list[i].first, "alpha=0 deviates from the keyword order");

    // RRF only sees ranks, so positive per-source scaling changes nothing.
    const auto rrf_before = heta::retrieval::fuse_hybrid(traces, 0.5, FusionMode::rrf);
    auto scaled = traces;
    for (auto& trace : scaled) {
      const double factor = trace.source == Source::vector ? 7.5 : 0.25;
      for (auto& hit : trace.hits) hit.raw_score *= factor;
    }
    const auto rrf_after = heta::retrieval::fuse_hybrid(scaled, 0.5, FusionMode::rrf);
    expect(order_of(rrf_before) == order_of(rrf_after), "rrf is not scale invariant");
  }

  const std::vector<heta::retrieval::SourceTrace> worked{
      make_trace(Source::vector, {{"c1", 0.9}, {"c2", 0.5}}),
      make_trace(Source::fulltext, {{"c2", 3.0}, {"c3", 1.0}})};
  const auto fused = heta::retrieval::fuse_hybrid(worked, 0.5, FusionMode::alpha_blend);
  expect(order_of(fused) == std::vector<std::string>{"c1", "c2", "c3"},
         "worked alpha=0.5 example deviates from [c1, c2, c3]");
}

// ---------------------------------------------------------------------------
// 5. Table store.

double value_as_double(const heta::table_store::Value& value) {
  if (std::holds_alternative<std::int64_t>(value))
    return static_cast<double>(std::get<std::int64_t>(value));
  return std::get<double>(value);
}

void criterion_tables() {
  using heta::table_store::AggFn;
  using heta::table_store::CmpOp;
  using heta::table_store::Value;

  std::uniform_int_distribution<int> row_count(1, 1000);
  std::uniform_int_distribution<int> grp_dist(0, 4);
  std::uniform_real_distribution<double> val_dist(-50.0, 50.0);
  std::uniform_int_distribution<int> key_dist(0, 19);
  std::uniform_int_distribution<int> filter_count(0, 2);
  std::uniform_int_distribution<int> op_dist(0, 5);
  const char* op_names[] = {"eq", "ne", "lt", "le", "gt", "ge"};
  const CmpOp ops[] = {CmpOp::eq, CmpOp::ne, CmpOp::lt, CmpOp::le, CmpOp::gt, CmpOp::ge};

  for (int trial = 0; trial < 50; ++trial) {
    heta::table_store::TableStore store;
    store.create_table({"main",
                        {{"id", heta::table_store::ColumnType::integer},
                         {"grp", heta::table_store::ColumnType::integer},
                         {"val", heta::table_store::ColumnType::real},
                         {"key", heta::table_store::ColumnType::integer}}});
    store.create_table({"side",
                        {{"key", heta::table_store::ColumnType::integer},
                         {"bonus", heta::table_store::ColumnType::real}}});

    oracle::NaiveTable naive_main;
    naive_main.columns = {"id", "grp", "val", "key"};
    const int n = row_count(rng());
    std::vector<heta::table_store::Row> rows;
    for (int i = 0; i < n; ++i) {
      const std::int64_t grp = grp_dist(rng());
      const double val = val_dist(rng());
      const std::int64_t key = key_dist(rng());
      rows.push_back({{Value{static_cast<std::int64_t>(i)}, Value{grp}, Value{val}, Value{key}},
                      "chunk:" + std::to_string(i)});
      naive_main.rows.push_back({static_cast<double>(i), static_cast<double>(grp), val,
                                 static_cast<double>(key)});
    }
    store.insert_rows("main", rows);

    oracle::NaiveTable naive_side;
    naive_side.columns = {"key", "bonus"};
    std::vector<heta::table_store::Row> side_rows;
    for (int key = 0; key < 20; key += 2) {
      const double bonus = val_dist(rng());
      side_rows.push_back({{Value{static_cast<std::int64_t>(key)}, Value{bonus}}, ""});
      naive_side.rows.push_back({static_cast<double>(key), bonus});
    }
    store.insert_rows("side", side_rows);

    // Random conjunctive filter shared by every check in this trial.
    heta::table_store::Query query;
    query.table = "main";
    std::vector<oracle::NaiveFilter> naive_filters;
    const int filters = filter_count(rng());
    for (int f = 0; f < filters; ++f) {
      const int op = op_dist(rng());
      if (f % 2 == 0) {
        const std::int64_t operand = grp_dist(rng());
        query.filter.push_back({"grp", ops[op], Value{operand}});
        naive_filters.push_back({"grp", op_names[op], static_cast<double>(operand)});
      } else {
        const double operand = val_dist(rng());
        query.filter.push_back({"val", ops[op], Value{operand}});
        naive_filters.push_back({"val", op_names[op], operand});
      }
    }
    const auto naive_filtered = oracle::naive_filter(naive_main, naive_filters);

    const auto scan = store.run_query(query);
    expect(scan.rows.size() == naive_filtered.rows.size(), "filter row count deviates");
    for (std::size_t r = 0; r < scan.rows.size(); ++r)
      for (std::size_t c = 0; c < naive_filtered.columns.size(); ++c)
        expect(std::fabs(value_as_double(scan.rows[r].values[c]) - naive_filtered.rows[r][c]) <=
                   1e-9,
               "filtered cell deviates");

    // Aggregates against the oracle, plus the sum = count * avg identity.
    auto run_agg = [&](AggFn fn) {
      heta::table_store::Query agg = query;
      agg.aggregate = heta::table_store::Aggregate{fn, "val"};
      return store.run_query(agg);
    };
    const auto count_result = run_agg(AggFn::count);
    const double count = value_as_double(*count_result.aggregate_value);
    expect(count == *oracle::naive_aggregate(naive_filtered, "count", "val"),
           "count deviates from the oracle");
    const double sum = value_as_double(*run_agg(AggFn::sum).aggregate_value);
    expect(std::fabs(sum - *oracle::naive_aggregate(naive_filtered, "sum", "val")) <= 1e-6,
           "sum deviates from the oracle");
    if (count > 0) {
      const double avg = value_as_double(*run_agg(AggFn::avg).aggregate_value);
      const double minv = value_as_double(*run_agg(AggFn::min).aggregate_value);
      const double maxv = value_as_double(*run_agg(AggFn::max).aggregate_value);
      expect(std::fabs(avg - *oracle::naive_aggregate(naive_filtered, "avg", "val")) <= 1e-9,
             "avg deviates from the oracle");
      expect(minv == *oracle::naive_aggregate(naive_filtered, "min", "val"), "min deviates");
      expect(maxv == *oracle::naive_aggregate(naive_filtered, "max", "val"), "max deviates");
      expect(std::fabs(sum - count * avg) <= 1e-9 * std::max(1.0, std::fabs(sum)),
             "sum deviates from count * avg");
    }

    // One inner equi-join per trial against the nested-loop oracle.
    heta::table_store::Query joined = query;
    joined.join = heta::table_store::Join{"side", "key", "key"};
    const auto join_result = store.run_query(joined);
    const auto naive_joined = oracle::naive_join(naive_filtered, "key", naive_side, "key");
    expect(join_result.rows.size() == naive_joined.rows.size(), "join row count deviates");
    double got_bonus = 0.0;
    const auto bonus_idx = static_cast<std::size_t>(
        std::find(join_result.columns.begin(), join_result.columns.end(), "bonus") -
        join_result.columns.begin());
    expect(bonus_idx < join_result.columns.size(), "join result lacks the bonus column");
    for (const auto& row : join_result.rows) got_bonus += value_as_double(row.values[bonus_idx]);
    double want_bonus = 0.0;
    const int naive_bonus = naive_joined.col("bonus");
    for (const auto& row : naive_joined.rows)
      want_bonus += row[static_cast<std::size_t>(naive_bonus)];
    expect(std::fabs(got_bonus - want_bonus) <= 1e-6, "joined bonus sum deviates");
  }
}

// ---------------------------------------------------------------------------
// 6. Graph pipeline.

void criterion_graph() {
  using heta::graph_store::Triple;

  {
    // Two 3-cliques joined by one bridge edge.
    heta::graph_store::GraphStore g;
    g.import_triples({Triple{"a1", "r", "a2", "c:1"}, Triple{"a1", "r", "a3", "c:1"},
                      Triple{"a2", "r", "a3", "c:2"}, Triple{"b1", "r", "b2", "c:3"},
                      Triple{"b1", "r", "b3", "c:3"}, Triple{"b2", "r", "b3", "c:4"},
                      Triple{"a1", "bridge", "b3", "c:5"}});
    heta::kg::aggregate_hierarchy(g, {1, 2, 10}, nullptr);
    int level1 = 0;
    for (const auto& [id, node] : g.nodes()) level1 += node.layer == 1 ? 1 : 0;
    expect(level1 == 2, "two triangles built " + std::to_string(level1) + " communities");
  }

  std::uniform_int_distribution<int> node_dist(0, 11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Triple> triples;
    std::vector<std::pair<std::string, std::string>> edges;
    for (int e = 0; e < 15; ++e) {
      int u = node_dist(rng());
      int v = node_dist(rng());
      if (u == v) v = (v + 1) % 12;
      const std::string su = "n" + std::to_string(u);
      const std::string sv = "n" + std::to_string(v);
      triples.push_back(Triple{su, "r", sv, "c:" + std::to_string(e)});
      edges.emplace_back(su, sv);
    }
    heta::graph_store::GraphStore g;
    g.import_triples(triples);
    for (int seed = 0; seed < 12; ++seed) {
      const std::string id = "n" + std::to_string(seed);
      if (!g.has_node(id)) continue;
      for (int k = 0; k < 3; ++k) {
        const auto inner = g.khop_neighbors(id, k);
        const auto outer = g.khop_neighbors(id, k + 1);
        expect(std::includes(outer.begin(), outer.end(), inner.begin(), inner.end()),
               "khop(" + id + ", " + std::to_string(k) + ") escapes the k+1 set");
      }
    }
  }

  {
    heta::embed::Embedder embedder({heta::embed::EmbedderKind::deterministic_hash, 64});
    heta::graph_store::GraphStore g;
    g.import_triples({Triple{"a", "r", "b", "c:1"}, Triple{"b", "r", "c", "c:2"}});
    heta::kg::aggregate_hierarchy(g, {1, 3, 10}, nullptr);
    const auto evidence = heta::kg::graph_retrieve(g, "a", embedder.embed_text("a"), 4);
    expect(!evidence.matches.empty() && evidence.matches[0].entity_id == "a",
           "query a must match entity a");
    expect(evidence.node_ids == std::vector<std::string>{"a", "b"},
           "subgraph must be {a, b}");
    expect(evidence.summary_ids.size() == 1, "exactly one community summary expected");
    expect(g.node(evidence.summary_ids[0]).entity_type == "community_summary",
           "summary id must name a community summary node");
    expect(evidence.provenance == std::vector<std::string>{"c:1"},
           "provenance must come from the a-b edge alone");
  }
}

// ---------------------------------------------------------------------------
// 7. Multi-hop golden trace.

struct AgentFixture {
  heta::embed::Embedder embedder{{heta::embed::EmbedderKind::deterministic_hash, 64}};
  heta::ingest::Corpus corpus;
  std::unique_ptr<heta::vector_index::VectorCollection> vectors;
  heta::fulltext::InvertedIndex fulltext;

  AgentFixture() {
    std::vector<heta::ingest::Chunk> chunks{
        text_chunk("d1:0000", "d1", "Nora Voss founded Helix Dynamics.", 0, 6),
        text_chunk("d2:0000", "d2", "Helix Dynamics is headquartered in Oslo.", 0, 7)};
    corpus = heta::ingest::Corpus::from_chunks(chunks);
    vectors = std::make_unique<heta::vector_index::VectorCollection>("chunks", 64);
    std::vector<heta::vector_index::VectorRecord> records;
    for (const auto& chunk : chunks)
      records.push_back({chunk.chunk_id, embedder.embed_text(chunk.text), {}});
    vectors->insert(std::move(records));
    fulltext = heta::fulltext::InvertedIndex::build(chunks);
  }

  heta::retrieval::StoreContext context() const {
    heta::retrieval::StoreContext ctx;
    ctx.embedder = &embedder;
    ctx.vectors = vectors.get();
    ctx.fulltext = &fulltext;
    return ctx;
  }

  heta::agent::AgentConfig config() const {
    heta::agent::AgentConfig cfg;
    cfg.max_steps = 5;
    cfg.k = 1;
    cfg.sources = {heta::retrieval::Source::vector, heta::retrieval::Source::fulltext};
    return cfg;
  }
};

void criterion_agent() {
  AgentFixture fx;
  const std::string question = "In which city is the company founded by Nora Voss located?";

  auto rules = std::make_shared<RuleProvider>();
  rules->add_rule(needle::query_rewrite, "who founded Helix Dynamics");
  rules->add_rule(needle::extract_notes, [](const std::string& content) -> std::string {
    if (content.find("Oslo") != std::string::npos)
      return R"(["Helix Dynamics is headquartered in Oslo."])";
    return R"(["Nora Voss founded Helix Dynamics."])";
  });
  rules->add_rule(needle::judge_sufficiency, [](const std::string& content) -> std::string {
    if (content.find("Oslo") != std::string::npos) return R"({"sufficient": true})";
    return R"({"sufficient": false,)"
           R"( "followup_queries": ["where is Helix Dynamics headquartered"]})";
  });
  rules->add_rule(needle::final_answer,
                  "Nora Voss founded Helix Dynamics [1], and the company is headquartered in "
                  "Oslo [2].");

  std::string baseline;
  {
    heta::gateway::Gateway gw(heta::gateway::PromptCatalog::builtin(), rules);
    const auto answer = heta::agent::run_agent(fx.context(), fx.corpus, question, fx.config(), gw);
    expect(answer.trace.size() == 2, "golden trace must take exactly 2 steps");
    expect(answer.terminated_by == "sufficient", "golden trace must end on sufficiency");
    const auto& cits = answer.citations;
    expect(std::find(cits.begin(), cits.end(), "d2:0000") != cits.end(),
           "the headquarters chunk must be cited");
    expect(answer.text.find("Oslo") != std::string::npos, "answer must name the city");
    baseline = heta::agent::answer_to_json(answer).dump();
  }

  // Frozen fixtures replay byte-identically three times.
  auto scripted = rules->freeze();
  for (int run = 0; run < 3; ++run) {
    heta::gateway::Gateway gw(heta::gateway::PromptCatalog::builtin(), scripted);
    const auto answer = heta::agent::run_agent(fx.context(), fx.corpus, question, fx.config(), gw);
    expect(heta::agent::answer_to_json(answer).dump() == baseline,
           "trace JSON differs on replay " + std::to_string(run + 1));
  }

  // All-insufficient fixtures exhaust exactly the step budget.
  auto stubborn = std::make_shared<RuleProvider>();
  stubborn->add_rule(needle::query_rewrite, "helix dynamics");
  stubborn->add_rule(needle::extract_notes, R"(["a note that never settles it"])");
  stubborn->add_rule(needle::judge_sufficiency,
                     R"({"sufficient": false, "followup_queries": ["helix"]})");
  stubborn->add_rule(needle::final_answer, "nothing conclusive");
  heta::gateway::Gateway gw(heta::gateway::PromptCatalog::builtin(), stubborn);
  auto cfg = fx.config();
  cfg.max_steps = 3;
  const auto budget = heta::agent::run_agent(fx.context(), fx.corpus, question, cfg, gw);
  expect(budget.trace.size() == 3, "budget run must take exactly max_steps steps");
  expect(budget.terminated_by == "budget", "budget run must terminate by budget");
}

// ---------------------------------------------------------------------------
// 8. Report closure.

void criterion_writer() {
  heta::embed::Embedder embedder({heta::embed::EmbedderKind::deterministic_hash, 64});

  // Single-chunk documents keep each context passage equal to the chunk its
  // citation resolves to, so a verbatim copy is checkable evidence.
  std::vector<heta::ingest::Chunk> chunks;
  const std::vector<std::string> texts{
      "Acme Robotics was founded in Waterloo in 2003.",
      "The first product line shipped welding arms to auto plants.",
      "Revenue doubled after the logistics division opened.",
      "A second factory was added near the lakeshore in 2010.",
      "The research group patented a new gripper design.",
      "Staff count grew from twelve to ninety across four years.",
      "The service fleet now covers three provinces.",
      "Exports began with a contract signed in Rotterdam."};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::string doc = "t" + std::to_string(i);
    chunks.push_back(text_chunk(doc + ":0000", doc, texts[i], 0, 10));
  }
  auto image = text_chunk("img:0000", "img", "factory floor with welding arms", 0, 0);
  image.modality = heta::ingest::Modality::image;
  image.media_path = "media/floor.png";
  chunks.push_back(image);
  auto table = text_chunk("tab:0000", "tab", "year|staff\n2003|12\n2007|90", 0, 0);
  table.modality = heta::ingest::Modality::table;
  chunks.push_back(table);

  const auto corpus = heta::ingest::Corpus::from_chunks(chunks);
  heta::vector_index::VectorCollection vectors("chunks", 64);
  std::vector<heta::vector_index::VectorRecord> records;
  for (const auto& chunk : chunks)
    records.push_back({chunk.chunk_id, embedder.embed_text(chunk.text), {}});
  vectors.insert(std::move(records));
  const auto fulltext = heta::fulltext::InvertedIndex::build(chunks);

  heta::retrieval::StoreContext ctx;
  ctx.embedder = &embedder;
  ctx.vectors = &vectors;
  ctx.fulltext = &fulltext;

  auto rules = std::make_shared<RuleProvider>();
  rules->add_rule(needle::outline_plan,
                  R"({"title": "Acme Robotics", "sections": [)"
                  R"({"heading": "History", "section_query": "Acme Robotics founding history"},)"
                  R"({"heading": "Growth", "section_query": "staff growth and factories"}]})");
  // Each draft copies its first context chunk verbatim and then makes one
  // claim sharing no token with any evidence. The trailing period is trimmed
  // so the citation marker stays inside the copied sentence.
  rules->add_rule(needle::section_draft, [](const std::string& content) -> std::string {
    const auto start = content.find("[1] ");
    const auto end = content.find('\n', start);
    std::string verbatim = content.substr(start + 4, end - start - 4);
    while (!verbatim.empty() && (verbatim.back() == '.' || verbatim.back() == ' '))
      verbatim.pop_back();
    return verbatim + " [1]. Quantum zebras juggle pudding [2].";
  });
  heta::gateway::Gateway gw(heta::gateway::PromptCatalog::builtin(), rules);

  heta::writer::WriterConfig cfg;
  cfg.sections_min = 2;
  cfg.sections_max = 2;
  const auto report = heta::writer::write_report(ctx, corpus, "Summarize Acme Robotics", gw, cfg,
                                                 /*llm_fact_check=*/false);

  // Citation closure: markers in the body match the bibliography keys.
  const auto refs_at = report.markdown.find("\n## References");
  expect(refs_at != std::string::npos, "report lacks a references section");
  const std::string body = report.markdown.substr(0, refs_at);
  std::set<std::string> markers;
  const std::regex marker_re(R"(\[(\d+)\])");
  for (std::sregex_iterator it(body.begin(), body.end(), marker_re), last; it != last; ++it)
    markers.insert((*it)[1].str());
  std::set<std::string> bib_keys;
  for (const auto& [marker, chunk_id] : report.bibliography) bib_keys.insert(marker);
  expect(markers == bib_keys, "citation markers do not match the bibliography");

  // Every asset is rendered at most once.
  auto count_occurrences = [&](const std::string& needle_text) {
    std::size_t count = 0;
    for (auto at = report.markdown.find(needle_text); at != std::string::npos;
         at = report.markdown.find(needle_text, at + 1))
      ++count;
    return count;
  };
  expect(count_occurrences("](media/floor.png)") <= 1, "image rendered more than once");
  expect(count_occurrences("| year | staff |") <= 1, "table rendered more than once");

  // Verbatim claims verify; the zero-overlap claim does not.
  bool saw_supported = false;
  bool saw_unsupported = false;
  for (const auto& check : report.factcheck) {
    if (check.claim.find("Quantum zebras") != std::string::npos) {
      expect(check.verdict == "unsupported", "zero-overlap claim must be unsupported");
      saw_unsupported = true;
    } else {
      expect(check.verdict == "supported", "verbatim claim must be supported: " + check.claim);
      saw_supported = true;
    }
  }
  expect(saw_supported && saw_unsupported, "fact-check must cover both claim kinds");
  std::size_t unsupported_entries = 0;
  for (const auto& check : report.factcheck)
    if (check.verdict == "unsupported") ++unsupported_entries;
  expect(count_occurrences(" ⚠unverified") == unsupported_entries,
         "every unsupported claim must carry exactly one unverified marker");

  const auto again = heta::writer::write_report(ctx, corpus, "Summarize Acme Robotics", gw, cfg,
                                                /*llm_fact_check=*/false);
  expect(again.markdown == report.markdown, "report is not byte-identical across runs");
}

// ---------------------------------------------------------------------------
// 9. End-to-end parity and idempotence.

std::string shell_quote(const std::string& raw) { return "'" + raw + "'"; }

std::string run_capture(const std::string& command) {
  FILE* pipe = popen(command.c_str(), "r");
  expect(pipe != nullptr, "failed to start: " + command);
  std::string output;
  char buffer[4096];
  std::size_t got = 0;
  while ((got = fread(buffer, 1, sizeof buffer, pipe)) > 0) output.append(buffer, got);
  const int status = pclose(pipe);
  expect(WIFEXITED(status) && WEXITSTATUS(status) == 0,
         "command failed (" + command + "): " + output);
  return output;
}

struct ServeProcess {
  pid_t pid = -1;
  ~ServeProcess() {
    if (pid <= 0) return;
    kill(pid, SIGTERM);
    for (int waited = 0; waited < 2000 && kill(pid, 0) == 0; waited += 50) usleep(50000);
    if (kill(pid, 0) == 0) kill(pid, SIGKILL);
  }
};

void criterion_end_to_end(const std::string& cli) {
  expect(fs::exists(cli), "CLI binary not found at " + cli);
  TempDir tmp("heta_accept");
  const std::string ws = tmp.sub("ws");
  const std::string raw = tmp.sub("raw");
  fs::create_directories(ws);
  fs::create_directories(raw);

  auto write_file = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
  };
  write_file(raw + "/alpha.json",
             nlohmann::json{{"doc_id", "alpha"},
                            {"title", "Founding"},
                            {"blocks",
                             nlohmann::json::array({{{"block_type", "text"},
                                                     {"page", 1},
                                                     {"content",
                                                      "Nora Voss founded Helix Dynamics."}}})}}
                 .dump());
  write_file(raw + "/beta.json",
             nlohmann::json{{"doc_id", "beta"},
                            {"blocks",
                             nlohmann::json::array(
                                 {{{"block_type", "text"},
                                   {"page", 1},
                                   {"content", "Helix Dynamics is headquartered in Oslo."}}})}}
                 .dump());
  write_file(raw + "/gamma.json",
             nlohmann::json{{"doc_id", "gamma"},
                            {"blocks",
                             nlohmann::json::array({{{"block_type", "table"},
                                                     {"page", 1},
                                                     {"content", "year|staff\n2003|12"}}})}}
                 .dump());

  const std::string fixtures_path = ws + "/fixtures.json";
  write_file(fixtures_path, "{}");
  write_file(ws + "/config.toml",
             "[embedder]\n"
             "dim = 64\n"
             "[gateway]\n"
             "kind = \"scripted\"\n"
             "fixtures_path = \"" + fixtures_path + "\"\n"
             "[fusion]\n"
             "k = 4\n");

  const auto ingest_out =
      nlohmann::json::parse(run_capture(shell_quote(cli) + " ingest --workspace " +
                                        shell_quote(ws) + " --in " + shell_quote(raw)));
  expect(ingest_out["documents"] == 3, "ingest must read 3 documents");
  expect(ingest_out["chunks"] == 3, "ingest must emit 3 chunks");

  const std::string index_cmd =
      shell_quote(cli) + " index --workspace " + shell_quote(ws);
  const auto report1 = nlohmann::json::parse(run_capture(index_cmd));
  expect(report1["corpus_chunks"] == 3 && report1["vector_count"] == 3,
         "index must cover all 3 chunks");

  const std::string snapshot_cmd =
      shell_quote(cli) + " snapshot --workspace " + shell_quote(ws);
  const auto digest1 = nlohmann::json::parse(run_capture(snapshot_cmd))["digest"];
  nlohmann::json report2 = nlohmann::json::parse(run_capture(index_cmd));
  const auto digest2 = nlohmann::json::parse(run_capture(snapshot_cmd))["digest"];
  expect(digest1 == digest2, "reindexing changed the snapshot digest");

  // Record the agent conversation against the same stores, then freeze it
  // into the fixtures file the CLI and the HTTP service both read.
  auto config = heta::service::load_config(ws + "/config.toml");
  config.workspace_dir = ws;
  heta::service::Workspace recorder(config);
  recorder.open();
  auto rules = std::make_shared<RuleProvider>();
  rules->add_rule(needle::query_rewrite, "Helix Dynamics founder");
  rules->add_rule(needle::extract_notes, R"(["Nora Voss founded Helix Dynamics."])");
  rules->add_rule(needle::judge_sufficiency, R"({"sufficient": true})");
  rules->add_rule(needle::final_answer, "Nora Voss founded Helix Dynamics [1].");
  heta::gateway::Gateway gw(heta::gateway::PromptCatalog::builtin(), rules);
  heta::agent::AgentConfig acfg;
  acfg.max_steps = config.agent_max_steps;
  acfg.k = config.fusion.k;
  acfg.alpha = config.fusion.alpha;
  acfg.fusion = config.fusion.fusion;
  acfg.rerank = config.rerank;
  const std::string question = "Who founded Helix Dynamics?";
  const auto recorded =
      heta::agent::run_agent(recorder.context(), recorder.corpus(), question, acfg, gw);
  write_file(fixtures_path, nlohmann::json(rules->recorded()).dump(2));

  const auto cli_answer = nlohmann::json::parse(
      run_capture(shell_quote(cli) + " ask --workspace " + shell_quote(ws) + " --question " +
                  shell_quote(question)));
  expect(cli_answer == heta::agent::answer_to_json(recorded),
         "CLI answer deviates from the recorded run");

  // Serve the same workspace over HTTP and compare byte-for-byte payloads.
  const std::string serve_out = tmp.sub("serve.out");
  const std::string pid_file = tmp.sub("serve.pid");
  const std::string serve_cmd = shell_quote(cli) + " serve --workspace " + shell_quote(ws) +
                                " --port 0 > " + shell_quote(serve_out) + " 2> " +
                                shell_quote(tmp.sub("serve.err")) + " & echo $! > " +
                                shell_quote(pid_file);
  expect(std::system(serve_cmd.c_str()) == 0, "failed to launch the server");

  ServeProcess proc;
  {
    std::ifstream in(pid_file);
    in >> proc.pid;
  }
  int port = 0;
  for (int waited = 0; waited < 10000 && port == 0; waited += 50) {
    usleep(50000);
    std::ifstream in(serve_out);
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
      const auto listening = nlohmann::json::parse(buffer.str());
      port = listening["listening"]["port"].get<int>();
    } catch (const nlohmann::json::exception&) {
    }
  }
  expect(port > 0, "server never reported a port");

  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(30, 0);

  auto health = client.Get("/health");
  expect(health && health->status == 200, "health endpoint unavailable");
  const auto counts = nlohmann::json::parse(health->body)["counts"];
  for (const char* key : {"corpus_chunks", "vector_count", "fulltext_count", "table_rows",
                          "graph_nodes", "graph_edges"})
    expect(counts[key] == report2[key],
           std::string("health count ") + key + " deviates from the index report");

  auto asked = client.Post("/v1/ask", nlohmann::json{{"question", question}}.dump(),
                           "application/json");
  expect(asked && asked->status == 200, "ask endpoint unavailable");
  expect(nlohmann::json::parse(asked->body) == cli_answer,
         "HTTP answer deviates from the CLI answer");
}

// ---------------------------------------------------------------------------

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void()> body;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: heta_acceptance <path-to-cli-binary>\n";
    return 2;
  }
  const std::string cli = argv[1];

  const std::vector<Criterion> criteria{
      {"scoring formula and monotonicity", 1.0, criterion_scoring},
      {"vector search matches brute force", 5.0, criterion_vector},
      {"bm25 matches the naive scorer", 5.0, criterion_bm25},
      {"fusion boundaries and rrf invariance", 1.0, criterion_fusion},
      {"table queries match the naive evaluator", 10.0, criterion_tables},
      {"graph communities, khop, and retrieval", 5.0, criterion_graph},
      {"multi-hop golden trace and budget", 5.0, criterion_agent},
      {"report citation closure and fact-check", 5.0, criterion_writer},
      {"cli and http parity with snapshot idempotence", 30.0,
       [&cli] { criterion_end_to_end(cli); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& criterion = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
      criterion.body();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (error.empty() && elapsed > criterion.budget_seconds)
      error = "exceeded the " + std::to_string(criterion.budget_seconds) + " s budget";
    if (error.empty()) {
      std::printf("PASS %zu/%zu %s (%.2f s)\n", i + 1, criteria.size(), criterion.name.c_str(),
                  elapsed);
    } else {
      std::printf("FAIL %zu/%zu %s (%.2f s): %s\n", i + 1, criteria.size(),
                  criterion.name.c_str(), elapsed, error.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
