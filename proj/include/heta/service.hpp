#pragma once

// Workspace lifecycle: TOML-subset config with env overrides, building every
// store from the corpus with snapshot/rollback, and the HTTP face. The CLI
// and the HTTP handlers share the same Workspace methods so both paths return
// identical payloads.

#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "heta/agent.hpp"
#include "heta/embed.hpp"
#include "heta/fulltext.hpp"
#include "heta/gateway.hpp"
#include "heta/graph_store.hpp"
#include "heta/ingest.hpp"
#include "heta/kg.hpp"
#include "heta/retrieval.hpp"
#include "heta/table_store.hpp"
#include "heta/vector_index.hpp"
#include "heta/writer.hpp"

namespace heta::service {

struct FusionDefaults {
  double alpha = 0.5;
  retrieval::FusionMode fusion = retrieval::FusionMode::rrf;
  int k = 8;
};

struct ServerConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
};

struct KgSettings {
  kg::ExtractorSpec extractor;
  kg::HierarchyConfig hierarchy;
  bool llm_summaries = false;  // false: summaries concatenate member names
};

struct WorkspaceConfig {
  std::string workspace_dir = "ws";
  embed::EmbedderSpec embedder;
  gateway::ProviderSpec provider;
  ingest::ChunkPolicy chunk_policy;
  FusionDefaults fusion;
  int agent_max_steps = 5;
  ServerConfig server;
  KgSettings kg_settings;
  fulltext::IndexOptions fulltext_options;
  retrieval::RerankSpec rerank;
  std::string prompts_dir;
};

// Missing file -> defaults. Env vars HETA_LLM_ENDPOINT and HETA_LLM_API_KEY
// override the gateway endpoint and key. ConfigError names the bad key.
WorkspaceConfig load_config(const std::string& path);
void validate_config(const WorkspaceConfig& config);  // ConfigError

struct BuildReport {
  std::int64_t corpus_chunks = 0;
  std::int64_t vector_count = 0;
  std::int64_t fulltext_count = 0;
  std::int64_t table_rows = 0;
  std::int64_t graph_nodes = 0;
  std::int64_t graph_edges = 0;
  double seconds = 0.0;
};

nlohmann::json build_report_to_json(const BuildReport& report);

// Wire shape shared by CLI `search` and POST /v1/search.
nlohmann::json fused_result_to_json(const retrieval::FusedResult& result);

// Builds a RetrievalRequest from {query, k, alpha, fusion, sources} and an
// optional rerank kind from "rerank". ConfigError messages start with the
// offending key, e.g. "alpha: ...".
retrieval::RetrievalRequest parse_search_request(const nlohmann::json& body,
                                                 const FusionDefaults& defaults,
                                                 std::optional<retrieval::RerankKind>& rerank);

class Workspace {
public:
  explicit Workspace(WorkspaceConfig config);

  // Reads <ws>/corpus.jsonl and any existing snapshots into memory.
  void open();

  // Embeds and indexes the whole corpus into all four stores, then writes
  // snapshots through a staging directory: a failure leaves the previous
  // snapshot untouched. Rerunning on the same corpus is byte-stable.
  BuildReport index_all();

  // Rebuilds just the graph store from the corpus and snapshots it.
  kg::HierarchyStats kg_build(std::optional<kg::ExtractorKind> extractor = std::nullopt,
                              std::optional<int> levels = std::nullopt);

  retrieval::StoreContext context() const;

  // nullopt reranks with the configured kind; an explicit kind overrides it.
  retrieval::FusedResult search(const retrieval::RetrievalRequest& request,
                                std::optional<retrieval::RerankKind> rerank = std::nullopt);
  agent::Answer ask(const std::string& question, std::optional<int> max_steps = std::nullopt);
  writer::Report report(const std::string& query, int sections_max);

  const WorkspaceConfig& config() const { return config_; }
  const ingest::Corpus& corpus() const { return corpus_; }
  const graph_store::GraphStore& graph() const { return graph_; }
  gateway::Gateway& gw() { return *gateway_; }
  nlohmann::json health() const;

private:
  WorkspaceConfig config_;
  embed::Embedder embedder_;
  ingest::Corpus corpus_;
  std::unique_ptr<vector_index::VectorCollection> chunks_;
  fulltext::InvertedIndex fulltext_;
  table_store::TableStore tables_;
  graph_store::GraphStore graph_;
  std::unique_ptr<gateway::Gateway> gateway_;
};

// CRC over every snapshot file (sorted relative paths and contents), printed
// by `snapshot` and used to check index_all idempotence.
std::uint32_t snapshot_digest(const std::string& workspace_dir);

struct StoreChecksum {
  std::string path;  // relative to the workspace
  std::uint32_t crc = 0;
};
std::vector<StoreChecksum> snapshot_checksums(const std::string& workspace_dir);

class HttpService {
public:
  explicit HttpService(Workspace& workspace);
  ~HttpService();

  // Binds and serves on a background thread. port 0 picks a free port.
  // BindError when the address cannot be bound.
  void start(const std::string& bind, int port);
  void stop();
  void wait();  // blocks until the server stops
  int port() const { return port_; }

private:
  struct Impl;
  Workspace& workspace_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace heta::service
