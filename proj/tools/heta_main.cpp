// Command line face over a workspace directory. Every verb prints one JSON
// document to stdout so the CLI and the HTTP service expose identical
// payloads for identical inputs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "heta/agent.hpp"
#include "heta/common.hpp"
#include "heta/evaluation.hpp"
#include "heta/ingest.hpp"
#include "heta/kg.hpp"
#include "heta/retrieval.hpp"
#include "heta/service.hpp"
#include "heta/writer.hpp"

namespace fs = std::filesystem;

namespace {

void print_json(const nlohmann::json& payload) { std::cout << payload.dump(2) << "\n"; }

heta::service::WorkspaceConfig config_for(const std::string& workspace) {
  auto config = heta::service::load_config(workspace + "/config.toml");
  config.workspace_dir = workspace;
  return config;
}

heta::service::Workspace open_workspace(const std::string& workspace) {
  heta::service::Workspace ws(config_for(workspace));
  ws.open();
  return ws;
}

int run_ingest(const std::string& workspace, const std::string& in_dir, std::string out_path,
               std::optional<std::int64_t> window, std::optional<std::int64_t> overlap) {
  auto config = config_for(workspace);
  if (window) config.chunk_policy.window = *window;
  if (overlap) config.chunk_policy.overlap = *overlap;
  if (config.chunk_policy.window <= 0)
    heta::raise(heta::ErrorKind::ConfigError, "chunking.window: must be positive");
  if (config.chunk_policy.overlap < 0 || config.chunk_policy.overlap >= config.chunk_policy.window)
    heta::raise(heta::ErrorKind::ConfigError, "chunking.overlap: must be in [0, window)");
  if (out_path.empty()) out_path = workspace + "/corpus.jsonl";

  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());

  std::vector<heta::ingest::ParsedDocument> docs;
  docs.reserve(paths.size());
  for (const auto& path : paths) docs.push_back(heta::ingest::load_parsed_document(path));

  fs::create_directories(fs::path(out_path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out_path).parent_path());
  heta::ingest::build_corpus(docs, config.chunk_policy, out_path);
  const auto corpus = heta::ingest::Corpus::load(out_path);
  print_json({{"documents", docs.size()}, {"chunks", corpus.size()}, {"out", out_path}});
  return 0;
}

std::vector<heta::retrieval::Source> parse_sources(const std::string& csv) {
  std::vector<heta::retrieval::Source> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string item =
        heta::trim(csv.substr(start, comma == std::string::npos ? csv.size() - start : comma - start));
    if (!item.empty()) out.push_back(heta::retrieval::source_from_string(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) heta::raise(heta::ErrorKind::ConfigError, "sources: must not be empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heta: embedded hybrid retrieval engine"};
  app.require_subcommand(1);

  std::string workspace = "ws";

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Chunk parsed documents into a corpus file");
  std::string in_dir;
  std::string out_path;
  std::int64_t window_flag = -1;
  std::int64_t overlap_flag = -1;
  ingest_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  ingest_cmd->add_option("--in", in_dir, "Directory of parsed-document JSON files")->required();
  ingest_cmd->add_option("--out", out_path, "Corpus output path (default <ws>/corpus.jsonl)");
  ingest_cmd->add_option("--window", window_flag, "Chunk window in tokens");
  ingest_cmd->add_option("--overlap", overlap_flag, "Chunk overlap in tokens");

  // index
  auto* index_cmd = app.add_subcommand("index", "Index the corpus into all stores");
  index_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();

  // kg build
  auto* kg_cmd = app.add_subcommand("kg", "Knowledge graph operations");
  kg_cmd->require_subcommand(1);
  auto* kg_build_cmd = kg_cmd->add_subcommand("build", "Rebuild the graph from the corpus");
  std::string extractor_flag;
  int levels_flag = -1;
  kg_build_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  kg_build_cmd->add_option("--extractor", extractor_flag, "Triple extractor: pattern or llm");
  kg_build_cmd->add_option("--levels", levels_flag, "Hierarchy levels to build");

  // search
  auto* search_cmd = app.add_subcommand("search", "Hybrid search over the workspace");
  std::string query;
  double alpha_flag = -1.0;
  std::string fusion_flag;
  int k_flag = -1;
  std::string sources_flag;
  std::string rerank_flag;
  search_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  search_cmd->add_option("--query", query, "Query text")->required();
  search_cmd->add_option("--alpha", alpha_flag, "Vector weight in [0, 1]");
  search_cmd->add_option("--fusion", fusion_flag, "Fusion mode: rrf or alpha_blend");
  search_cmd->add_option("--k", k_flag, "Result count");
  search_cmd->add_option("--sources", sources_flag,
                         "Comma list of vector,fulltext,graph,table");
  search_cmd->add_option("--rerank", rerank_flag,
                         "Reranker: none, lexical_overlap or remote_http");

  // ask
  auto* ask_cmd = app.add_subcommand("ask", "Multi-hop question answering");
  std::string question;
  int max_steps_flag = -1;
  std::string trace_path;
  ask_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  ask_cmd->add_option("--question", question, "Question text")->required();
  ask_cmd->add_option("--max-steps", max_steps_flag, "Agent step budget");
  ask_cmd->add_option("--trace", trace_path, "Also write the answer JSON to this file");

  // report
  auto* report_cmd = app.add_subcommand("report", "Write a cited Markdown report");
  std::string report_query;
  std::string report_out;
  int sections_max_flag = -1;
  report_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  report_cmd->add_option("--query", report_query, "Report request")->required();
  report_cmd->add_option("--out", report_out, "Also write the Markdown to this file");
  report_cmd->add_option("--sections-max", sections_max_flag, "Maximum section count");

  // eval qa | eval report
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation harness");
  eval_cmd->require_subcommand(1);
  auto* eval_qa_cmd = eval_cmd->add_subcommand("qa", "Score a QA dataset");
  std::string dataset_path;
  std::string pipeline = "ask";
  int eval_k_flag = -1;
  eval_qa_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  eval_qa_cmd->add_option("--dataset", dataset_path, "QA records, one JSON object per line")
      ->required();
  eval_qa_cmd->add_option("--pipeline", pipeline, "Answering pipeline")->capture_default_str();
  eval_qa_cmd->add_option("--k", eval_k_flag, "Retrieval depth per query");
  auto* eval_report_cmd = eval_cmd->add_subcommand("report", "Rubric-score a report");
  std::string article_path;
  std::string eval_query;
  eval_report_cmd->add_option("--workspace", workspace, "Workspace directory")
      ->capture_default_str();
  eval_report_cmd->add_option("--article", article_path, "Markdown report path")->required();
  eval_report_cmd->add_option("--query", eval_query, "The request the report answers")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string bind_flag;
  int port_flag = -1;
  serve_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  serve_cmd->add_option("--bind", bind_flag, "Bind address (default from config)");
  serve_cmd->add_option("--port", port_flag, "Port, 0 picks a free one (default from config)");

  // snapshot
  auto* snapshot_cmd = app.add_subcommand("snapshot", "Checksum the workspace snapshot");
  bool verify = false;
  snapshot_cmd->add_option("--workspace", workspace, "Workspace directory")->capture_default_str();
  snapshot_cmd->add_flag("--verify", verify, "Also restore every store to prove integrity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*ingest_cmd) {
      return run_ingest(workspace, in_dir, out_path,
                        window_flag >= 0 ? std::optional<std::int64_t>(window_flag) : std::nullopt,
                        overlap_flag >= 0 ? std::optional<std::int64_t>(overlap_flag)
                                          : std::nullopt);
    }
    if (*index_cmd) {
      auto ws = open_workspace(workspace);
      print_json(heta::service::build_report_to_json(ws.index_all()));
      return 0;
    }
    if (*kg_build_cmd) {
      auto ws = open_workspace(workspace);
      std::optional<heta::kg::ExtractorKind> extractor;
      if (!extractor_flag.empty())
        extractor = heta::kg::extractor_kind_from_string(extractor_flag);
      std::optional<int> levels;
      if (levels_flag >= 0) levels = levels_flag;
      const auto stats = ws.kg_build(extractor, levels);
      print_json({{"graph_nodes", ws.graph().node_count()},
                  {"graph_edges", ws.graph().edge_count()},
                  {"levels_built", stats.levels_built},
                  {"summaries_created", stats.summaries_created}});
      return 0;
    }
    if (*search_cmd) {
      auto ws = open_workspace(workspace);
      nlohmann::json body{{"query", query}};
      if (alpha_flag >= 0.0) body["alpha"] = alpha_flag;
      if (!fusion_flag.empty()) body["fusion"] = fusion_flag;
      if (k_flag >= 0) body["k"] = k_flag;
      if (!rerank_flag.empty()) body["rerank"] = rerank_flag;
      std::optional<heta::retrieval::RerankKind> rerank;
      auto request = heta::service::parse_search_request(body, ws.config().fusion, rerank);
      if (!sources_flag.empty()) request.sources = parse_sources(sources_flag);
      print_json(heta::service::fused_result_to_json(ws.search(request, rerank)));
      return 0;
    }
    if (*ask_cmd) {
      auto ws = open_workspace(workspace);
      std::optional<int> max_steps;
      if (max_steps_flag >= 0) max_steps = max_steps_flag;
      const auto answer = ws.ask(question, max_steps);
      const auto payload = heta::agent::answer_to_json(answer);
      if (!trace_path.empty()) heta::write_file(trace_path, payload.dump(2) + "\n");
      print_json(payload);
      return 0;
    }
    if (*report_cmd) {
      auto ws = open_workspace(workspace);
      const auto report = ws.report(report_query, sections_max_flag);
      if (!report_out.empty()) heta::write_file(report_out, report.markdown);
      print_json(heta::writer::report_to_json(report));
      return 0;
    }
    if (*eval_qa_cmd) {
      if (pipeline != "ask")
        heta::raise(heta::ErrorKind::ConfigError, "pipeline: only 'ask' is supported");
      auto config = config_for(workspace);
      if (eval_k_flag >= 1) config.fusion.k = eval_k_flag;
      heta::service::Workspace ws(std::move(config));
      ws.open();
      const auto records = heta::evaluation::load_qa_jsonl(dataset_path);
      std::vector<std::vector<std::string>> retrieved;
      std::vector<std::vector<std::string>> gold;
      double judged = 0.0;
      for (const auto& record : records) {
        const auto answer = ws.ask(record.question);
        std::vector<std::string> hits;
        for (const auto& step : answer.trace)
          for (const auto& hit : step.hits) hits.push_back(hit);
        retrieved.push_back(std::move(hits));
        gold.push_back(record.gold_chunk_ids);
        judged += heta::evaluation::judge_answer(record.question, answer.text, record, &ws.gw());
      }
      const double R = heta::evaluation::compute_R(retrieved, gold);
      const double G =
          records.empty() ? 0.0 : 100.0 * judged / static_cast<double>(records.size());
      const auto score = heta::evaluation::score_challenge(R, G);
      std::printf("questions\tR\tG\ttotal\n%zu\t%.6g\t%.6g\t%.6g\n", records.size(), score.R,
                  score.G, score.total);
      return 0;
    }
    if (*eval_report_cmd) {
      auto ws = open_workspace(workspace);
      const auto rubric =
          heta::evaluation::rubric_score(heta::read_file(article_path), eval_query, ws.gw());
      std::printf("interest\tcoherence\trelevance\tcoverage\taverage\n%d\t%d\t%d\t%d\t%.6g\n",
                  rubric.interest, rubric.coherence, rubric.relevance, rubric.coverage,
                  rubric.average);
      return 0;
    }
    if (*serve_cmd) {
      auto ws = open_workspace(workspace);
      const std::string bind = bind_flag.empty() ? ws.config().server.bind : bind_flag;
      const int port = port_flag >= 0 ? port_flag : ws.config().server.port;
      heta::service::HttpService service(ws);
      service.start(bind, port);
      print_json({{"listening", {{"bind", bind}, {"port", service.port()}}}});
      std::cout.flush();
      service.wait();
      return 0;
    }
    if (*snapshot_cmd) {
      nlohmann::json files = nlohmann::json::array();
      for (const auto& entry : heta::service::snapshot_checksums(workspace)) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%08x", entry.crc);
        files.push_back({{"path", entry.path}, {"crc32", buf}});
      }
      char digest[16];
      std::snprintf(digest, sizeof(digest), "%08x", heta::service::snapshot_digest(workspace));
      nlohmann::json payload{{"files", files}, {"digest", digest}};
      if (verify) {
        if (fs::exists(workspace + "/vector/meta.json"))
          heta::vector_index::VectorCollection::restore(workspace + "/vector");
        if (fs::exists(workspace + "/fulltext.json"))
          heta::fulltext::InvertedIndex::restore_file(workspace + "/fulltext.json");
        if (fs::exists(workspace + "/tables"))
          heta::table_store::TableStore::restore(workspace + "/tables");
        if (fs::exists(workspace + "/graph/nodes.jsonl"))
          heta::graph_store::GraphStore::restore(workspace + "/graph");
        payload["verified"] = true;
      }
      print_json(payload);
      return 0;
    }
  } catch (const heta::Error& e) {
    std::cerr << "error [" << heta::to_string(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
