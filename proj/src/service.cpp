#include "heta/service.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <system_error>

#include <httplib.h>

namespace fs = std::filesystem;

namespace heta::service {

namespace {

struct TomlValue {
  enum class Kind { string, integer, real, boolean };
  Kind kind = Kind::string;
  std::string sval;
  std::int64_t ival = 0;
  double dval = 0.0;
  bool bval = false;
};

// '#' starts a comment unless it sits inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    else if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_value(const std::string& raw, const std::string& qual) {
  TomlValue v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = TomlValue::Kind::string;
    v.sval = raw.substr(1, raw.size() - 2);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.bval = raw == "true";
    return v;
  }
  if (!raw.empty()) {
    char* end = nullptr;
    errno = 0;
    const long long n = std::strtoll(raw.c_str(), &end, 10);
    if (end && *end == '\0' && errno == 0) {
      v.kind = TomlValue::Kind::integer;
      v.ival = n;
      return v;
    }
    end = nullptr;
    const double d = std::strtod(raw.c_str(), &end);
    if (end && *end == '\0') {
      v.kind = TomlValue::Kind::real;
      v.dval = d;
      return v;
    }
  }
  raise(ErrorKind::ConfigError, qual + ": unparseable value '" + raw + "'");
}

std::string want_string(const TomlValue& v, const std::string& qual) {
  if (v.kind != TomlValue::Kind::string)
    raise(ErrorKind::ConfigError, qual + ": expected a quoted string");
  return v.sval;
}

std::int64_t want_int(const TomlValue& v, const std::string& qual) {
  if (v.kind != TomlValue::Kind::integer)
    raise(ErrorKind::ConfigError, qual + ": expected an integer");
  return v.ival;
}

double want_real(const TomlValue& v, const std::string& qual) {
  if (v.kind == TomlValue::Kind::real) return v.dval;
  if (v.kind == TomlValue::Kind::integer) return static_cast<double>(v.ival);
  raise(ErrorKind::ConfigError, qual + ": expected a number");
}

bool want_bool(const TomlValue& v, const std::string& qual) {
  if (v.kind != TomlValue::Kind::boolean)
    raise(ErrorKind::ConfigError, qual + ": expected true or false");
  return v.bval;
}

// Re-raises enum parse failures under the owning config key.
template <typename Fn>
auto keyed(const std::string& qual, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    raise(ErrorKind::ConfigError, qual + ": " + e.what());
  }
}

void apply_entry(WorkspaceConfig& cfg, const std::string& section, const std::string& key,
                 const TomlValue& v) {
  const std::string qual = section.empty() ? key : section + "." + key;
  if (section.empty()) {
    if (key == "workspace_dir") cfg.workspace_dir = want_string(v, qual);
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "embedder") {
    if (key == "kind") {
      const std::string s = want_string(v, qual);
      if (s == "deterministic_hash") cfg.embedder.kind = embed::EmbedderKind::deterministic_hash;
      else if (s == "remote_http") cfg.embedder.kind = embed::EmbedderKind::remote_http;
      else raise(ErrorKind::ConfigError, qual + ": unknown embedder kind '" + s + "'");
    } else if (key == "dim") cfg.embedder.dim = static_cast<int>(want_int(v, qual));
    else if (key == "endpoint") cfg.embedder.endpoint = want_string(v, qual);
    else if (key == "model_name") cfg.embedder.model_name = want_string(v, qual);
    else if (key == "max_inflight") cfg.embedder.max_inflight = static_cast<int>(want_int(v, qual));
    else if (key == "timeout_ms") cfg.embedder.timeout_ms = static_cast<int>(want_int(v, qual));
    else if (key == "max_retries") cfg.embedder.max_retries = static_cast<int>(want_int(v, qual));
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "gateway") {
    if (key == "kind")
      cfg.provider.kind = keyed(qual, [&] {
        return gateway::provider_kind_from_string(want_string(v, qual));
      });
    else if (key == "endpoint") cfg.provider.endpoint = want_string(v, qual);
    else if (key == "model") cfg.provider.model = want_string(v, qual);
    else if (key == "timeout_ms") cfg.provider.timeout_ms = static_cast<int>(want_int(v, qual));
    else if (key == "max_retries") cfg.provider.max_retries = static_cast<int>(want_int(v, qual));
    else if (key == "backoff_base_ms")
      cfg.provider.backoff_base_ms = static_cast<int>(want_int(v, qual));
    else if (key == "fixtures_path") cfg.provider.fixtures_path = want_string(v, qual);
    else if (key == "api_key") cfg.provider.api_key = want_string(v, qual);
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "chunking") {
    if (key == "window") cfg.chunk_policy.window = want_int(v, qual);
    else if (key == "overlap") cfg.chunk_policy.overlap = want_int(v, qual);
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "fusion") {
    if (key == "alpha") cfg.fusion.alpha = want_real(v, qual);
    else if (key == "fusion")
      cfg.fusion.fusion = keyed(qual, [&] {
        return retrieval::fusion_from_string(want_string(v, qual));
      });
    else if (key == "k") cfg.fusion.k = static_cast<int>(want_int(v, qual));
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "agent") {
    if (key == "max_steps") cfg.agent_max_steps = static_cast<int>(want_int(v, qual));
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "server") {
    if (key == "bind") cfg.server.bind = want_string(v, qual);
    else if (key == "port") cfg.server.port = static_cast<int>(want_int(v, qual));
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "kg") {
    if (key == "extractor")
      cfg.kg_settings.extractor.kind = keyed(qual, [&] {
        return kg::extractor_kind_from_string(want_string(v, qual));
      });
    else if (key == "prompt_template")
      cfg.kg_settings.extractor.prompt_template_id = want_string(v, qual);
    else if (key == "levels")
      cfg.kg_settings.hierarchy.levels = static_cast<int>(want_int(v, qual));
    else if (key == "min_community_size")
      cfg.kg_settings.hierarchy.min_community_size = static_cast<int>(want_int(v, qual));
    else if (key == "lp_max_iters")
      cfg.kg_settings.hierarchy.lp_max_iters = static_cast<int>(want_int(v, qual));
    else if (key == "llm_summaries") cfg.kg_settings.llm_summaries = want_bool(v, qual);
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "fulltext") {
    if (key == "remove_stopwords") cfg.fulltext_options.remove_stopwords = want_bool(v, qual);
    else if (key == "stem") cfg.fulltext_options.stem = want_bool(v, qual);
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "rerank") {
    if (key == "kind")
      cfg.rerank.kind = keyed(qual, [&] {
        return retrieval::rerank_kind_from_string(want_string(v, qual));
      });
    else if (key == "endpoint") cfg.rerank.endpoint = want_string(v, qual);
    else if (key == "timeout_ms") cfg.rerank.timeout_ms = static_cast<int>(want_int(v, qual));
    else if (key == "max_retries") cfg.rerank.max_retries = static_cast<int>(want_int(v, qual));
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else if (section == "prompts") {
    if (key == "dir") cfg.prompts_dir = want_string(v, qual);
    else raise(ErrorKind::ConfigError, qual + ": unknown key");
  } else {
    raise(ErrorKind::ConfigError, section + ": unknown section");
  }
}

}  // namespace

WorkspaceConfig load_config(const std::string& path) {
  WorkspaceConfig cfg;
  if (fs::exists(path)) {
    std::istringstream in(read_file(path));
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string text = trim(strip_comment(line));
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']')
          raise(ErrorKind::ConfigError,
                "line " + std::to_string(lineno) + ": unterminated section header");
        section = trim(text.substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos)
        raise(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(text.substr(0, eq));
      const std::string raw = trim(text.substr(eq + 1));
      if (key.empty())
        raise(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": empty key");
      const std::string qual = section.empty() ? key : section + "." + key;
      apply_entry(cfg, section, key, parse_value(raw, qual));
    }
  }
  if (const char* endpoint = std::getenv("HETA_LLM_ENDPOINT"); endpoint && *endpoint)
    cfg.provider.endpoint = endpoint;
  if (const char* api_key = std::getenv("HETA_LLM_API_KEY"); api_key && *api_key)
    cfg.provider.api_key = api_key;
  validate_config(cfg);
  return cfg;
}

void validate_config(const WorkspaceConfig& config) {
  if (config.workspace_dir.empty())
    raise(ErrorKind::ConfigError, "workspace_dir: must not be empty");
  if (config.embedder.dim <= 0) raise(ErrorKind::ConfigError, "embedder.dim: must be positive");
  if (config.embedder.kind == embed::EmbedderKind::remote_http && config.embedder.endpoint.empty())
    raise(ErrorKind::ConfigError, "embedder.endpoint: required for remote_http");
  if (config.provider.kind == gateway::ProviderKind::remote_chat &&
      config.provider.endpoint.empty())
    raise(ErrorKind::ConfigError, "gateway.endpoint: required for remote_chat");
  if (config.chunk_policy.window <= 0)
    raise(ErrorKind::ConfigError, "chunking.window: must be positive");
  if (config.chunk_policy.overlap < 0 || config.chunk_policy.overlap >= config.chunk_policy.window)
    raise(ErrorKind::ConfigError, "chunking.overlap: must be in [0, window)");
  if (!(config.fusion.alpha >= 0.0 && config.fusion.alpha <= 1.0))
    raise(ErrorKind::ConfigError, "fusion.alpha: must be within [0, 1]");
  if (config.fusion.k < 1) raise(ErrorKind::ConfigError, "fusion.k: must be at least 1");
  if (config.agent_max_steps < 1)
    raise(ErrorKind::ConfigError, "agent.max_steps: must be at least 1");
  if (config.server.port < 0 || config.server.port > 65535)
    raise(ErrorKind::ConfigError, "server.port: must be within [0, 65535]");
  if (config.kg_settings.hierarchy.levels < 0)
    raise(ErrorKind::ConfigError, "kg.levels: must be non-negative");
  if (config.kg_settings.hierarchy.min_community_size < 1)
    raise(ErrorKind::ConfigError, "kg.min_community_size: must be at least 1");
  if (config.kg_settings.hierarchy.lp_max_iters < 1)
    raise(ErrorKind::ConfigError, "kg.lp_max_iters: must be at least 1");
}

nlohmann::json build_report_to_json(const BuildReport& report) {
  return nlohmann::json{
      {"corpus_chunks", report.corpus_chunks}, {"vector_count", report.vector_count},
      {"fulltext_count", report.fulltext_count}, {"table_rows", report.table_rows},
      {"graph_nodes", report.graph_nodes},     {"graph_edges", report.graph_edges},
      {"seconds", report.seconds},
  };
}

nlohmann::json fused_result_to_json(const retrieval::FusedResult& result) {
  nlohmann::json ranking = nlohmann::json::array();
  for (const auto& ranked : result.ranking) {
    nlohmann::json contributions = nlohmann::json::array();
    for (const auto& c : ranked.contributions)
      contributions.push_back({{"source", retrieval::to_string(c.source)},
                               {"norm_score", c.norm_score},
                               {"rank", c.rank}});
    ranking.push_back({{"chunk_id", ranked.chunk_id},
                       {"fused_score", ranked.fused_score},
                       {"contributions", contributions}});
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : result.trace) {
    nlohmann::json hits = nlohmann::json::array();
    for (const auto& h : t.hits)
      hits.push_back({{"chunk_id", h.chunk_id},
                      {"raw_score", h.raw_score},
                      {"norm_score", h.norm_score},
                      {"rank", h.rank}});
    trace.push_back(
        {{"source", retrieval::to_string(t.source)}, {"hits", hits}, {"error", t.error}});
  }
  return nlohmann::json{{"ranking", ranking}, {"trace", trace}};
}

retrieval::RetrievalRequest parse_search_request(const nlohmann::json& body,
                                                 const FusionDefaults& defaults,
                                                 std::optional<retrieval::RerankKind>& rerank) {
  rerank = std::nullopt;
  if (!body.is_object()) raise(ErrorKind::ConfigError, "body: expected a JSON object");
  retrieval::RetrievalRequest req;
  req.alpha = defaults.alpha;
  req.fusion = defaults.fusion;
  req.k = defaults.k;
  if (!body.contains("query") || !body["query"].is_string() ||
      body["query"].get<std::string>().empty())
    raise(ErrorKind::ConfigError, "query: required non-empty string");
  req.query = body["query"].get<std::string>();
  if (body.contains("k")) {
    if (!body["k"].is_number_integer()) raise(ErrorKind::ConfigError, "k: expected an integer");
    req.k = body["k"].get<int>();
    if (req.k < 1) raise(ErrorKind::ConfigError, "k: must be at least 1");
  }
  if (body.contains("alpha")) {
    if (!body["alpha"].is_number()) raise(ErrorKind::ConfigError, "alpha: expected a number");
    req.alpha = body["alpha"].get<double>();
    if (!(req.alpha >= 0.0 && req.alpha <= 1.0))
      raise(ErrorKind::ConfigError, "alpha: must be within [0, 1]");
  }
  if (body.contains("fusion")) {
    if (!body["fusion"].is_string()) raise(ErrorKind::ConfigError, "fusion: expected a string");
    req.fusion = keyed("fusion", [&] {
      return retrieval::fusion_from_string(body["fusion"].get<std::string>());
    });
  }
  if (body.contains("sources")) {
    if (!body["sources"].is_array() || body["sources"].empty())
      raise(ErrorKind::ConfigError, "sources: expected a non-empty array");
    req.sources.clear();
    for (const auto& entry : body["sources"]) {
      if (!entry.is_string()) raise(ErrorKind::ConfigError, "sources: entries must be strings");
      req.sources.push_back(keyed("sources", [&] {
        return retrieval::source_from_string(entry.get<std::string>());
      }));
    }
  }
  if (body.contains("rerank")) {
    if (!body["rerank"].is_string()) raise(ErrorKind::ConfigError, "rerank: expected a string");
    rerank = keyed("rerank", [&] {
      return retrieval::rerank_kind_from_string(body["rerank"].get<std::string>());
    });
  }
  return req;
}

Workspace::Workspace(WorkspaceConfig config)
    : config_(std::move(config)), embedder_(config_.embedder) {}

void Workspace::open() {
  const std::string ws = config_.workspace_dir;
  fs::create_directories(ws);
  if (fs::exists(ws + "/corpus.jsonl")) corpus_ = ingest::Corpus::load(ws + "/corpus.jsonl");
  if (fs::exists(ws + "/vector/meta.json"))
    chunks_ = vector_index::VectorCollection::restore(ws + "/vector");
  if (fs::exists(ws + "/fulltext.json"))
    fulltext_ = fulltext::InvertedIndex::restore_file(ws + "/fulltext.json");
  if (fs::exists(ws + "/tables")) tables_ = table_store::TableStore::restore(ws + "/tables");
  if (fs::exists(ws + "/graph/nodes.jsonl")) graph_ = graph_store::GraphStore::restore(ws + "/graph");

  auto catalog = gateway::PromptCatalog::builtin();
  if (!config_.prompts_dir.empty()) catalog.load_dir(config_.prompts_dir);
  gateway_ =
      std::make_unique<gateway::Gateway>(std::move(catalog), gateway::make_provider(config_.provider));
}

BuildReport Workspace::index_all() {
  if (!gateway_) raise(ErrorKind::InvalidPolicy, "workspace not opened");
  const auto t0 = std::chrono::steady_clock::now();
  BuildReport report;
  report.corpus_chunks = static_cast<std::int64_t>(corpus_.size());

  auto collection =
      std::make_unique<vector_index::VectorCollection>("chunks", config_.embedder.dim);
  std::vector<std::string> texts;
  texts.reserve(corpus_.size());
  for (const auto& chunk : corpus_.chunks()) texts.push_back(chunk.text);
  auto vectors = embedder_.embed_batch(texts);
  std::vector<vector_index::VectorRecord> records;
  records.reserve(corpus_.size());
  for (std::size_t i = 0; i < corpus_.size(); ++i) {
    const auto& chunk = corpus_.chunks()[i];
    records.push_back({chunk.chunk_id,
                       std::move(vectors[i]),
                       {{"doc_id", chunk.doc_id}, {"modality", ingest::to_string(chunk.modality)}}});
  }
  collection->insert(std::move(records));

  auto fulltext = fulltext::InvertedIndex::build(corpus_.chunks(), config_.fulltext_options);

  table_store::TableStore tables;
  for (const auto& chunk : corpus_.chunks())
    if (chunk.modality == ingest::Modality::table) table_store::import_table_chunk(tables, chunk);

  graph_store::GraphStore graph;
  const auto& kset = config_.kg_settings;
  const auto triples = kg::extract_triples(
      corpus_.chunks(), kset.extractor,
      kset.extractor.kind == kg::ExtractorKind::llm ? gateway_.get() : nullptr);
  graph.import_triples(triples);
  kg::aggregate_hierarchy(graph, kset.hierarchy, kset.llm_summaries ? gateway_.get() : nullptr);
  graph.ensure_embeddings(embedder_);

  // All stores built in memory; only now touch the snapshot on disk.
  const fs::path ws = config_.workspace_dir;
  const fs::path staging = ws / ".staging";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging / "vector");
    collection->snapshot((staging / "vector").string());
    fulltext.snapshot_file((staging / "fulltext.json").string());
    fs::create_directories(staging / "tables");
    tables.snapshot((staging / "tables").string());
    fs::create_directories(staging / "graph");
    graph.snapshot((staging / "graph").string());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  for (const char* name : {"vector", "fulltext.json", "tables", "graph"}) {
    fs::remove_all(ws / name);
    fs::rename(staging / name, ws / name);
  }
  fs::remove_all(staging, ec);

  chunks_ = std::move(collection);
  fulltext_ = std::move(fulltext);
  tables_ = std::move(tables);
  graph_ = std::move(graph);

  report.vector_count = chunks_->meta().count;
  report.fulltext_count = fulltext_.doc_count();
  report.table_rows = tables_.total_rows();
  report.graph_nodes = graph_.node_count();
  report.graph_edges = graph_.edge_count();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

kg::HierarchyStats Workspace::kg_build(std::optional<kg::ExtractorKind> extractor,
                                       std::optional<int> levels) {
  if (!gateway_) raise(ErrorKind::InvalidPolicy, "workspace not opened");
  kg::ExtractorSpec spec = config_.kg_settings.extractor;
  if (extractor) spec.kind = *extractor;
  kg::HierarchyConfig hierarchy = config_.kg_settings.hierarchy;
  if (levels) hierarchy.levels = *levels;

  graph_store::GraphStore graph;
  const auto triples = kg::extract_triples(
      corpus_.chunks(), spec, spec.kind == kg::ExtractorKind::llm ? gateway_.get() : nullptr);
  graph.import_triples(triples);
  const auto stats = kg::aggregate_hierarchy(
      graph, hierarchy, config_.kg_settings.llm_summaries ? gateway_.get() : nullptr);
  graph.ensure_embeddings(embedder_);

  const fs::path ws = config_.workspace_dir;
  const fs::path staging = ws / ".staging";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging / "graph");
    graph.snapshot((staging / "graph").string());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  fs::remove_all(ws / "graph");
  fs::rename(staging / "graph", ws / "graph");
  fs::remove_all(staging, ec);

  graph_ = std::move(graph);
  return stats;
}

retrieval::StoreContext Workspace::context() const {
  retrieval::StoreContext ctx;
  ctx.embedder = &embedder_;
  ctx.vectors = chunks_.get();
  ctx.fulltext = &fulltext_;
  ctx.bm25 = fulltext::Bm25Params{};
  ctx.graph = &graph_;
  ctx.tables = &tables_;
  return ctx;
}

retrieval::FusedResult Workspace::search(const retrieval::RetrievalRequest& request,
                                         std::optional<retrieval::RerankKind> rerank) {
  retrieval::RerankSpec spec = config_.rerank;
  if (rerank) spec.kind = *rerank;
  const retrieval::RerankSpec* effective =
      spec.kind == retrieval::RerankKind::none ? nullptr : &spec;
  return retrieval::retrieve(context(), request, effective, &corpus_);
}

agent::Answer Workspace::ask(const std::string& question, std::optional<int> max_steps) {
  if (!gateway_) raise(ErrorKind::InvalidPolicy, "workspace not opened");
  agent::AgentConfig cfg;
  cfg.max_steps = max_steps.value_or(config_.agent_max_steps);
  cfg.k = config_.fusion.k;
  cfg.alpha = config_.fusion.alpha;
  cfg.fusion = config_.fusion.fusion;
  cfg.rerank = config_.rerank;
  return agent::run_agent(context(), corpus_, question, cfg, *gateway_);
}

writer::Report Workspace::report(const std::string& query, int sections_max) {
  if (!gateway_) raise(ErrorKind::InvalidPolicy, "workspace not opened");
  writer::WriterConfig cfg;
  if (sections_max >= 1) {
    cfg.sections_max = sections_max;
    cfg.sections_min = std::min(cfg.sections_min, cfg.sections_max);
  }
  return writer::write_report(context(), corpus_, query, *gateway_, cfg, true);
}

nlohmann::json Workspace::health() const {
  return nlohmann::json{
      {"status", "ok"},
      {"counts",
       {{"corpus_chunks", static_cast<std::int64_t>(corpus_.size())},
        {"vector_count", chunks_ ? chunks_->meta().count : 0},
        {"fulltext_count", fulltext_.doc_count()},
        {"table_rows", tables_.total_rows()},
        {"graph_nodes", graph_.node_count()},
        {"graph_edges", graph_.edge_count()}}},
  };
}

std::vector<StoreChecksum> snapshot_checksums(const std::string& workspace_dir) {
  const fs::path root = workspace_dir;
  std::vector<std::string> files;
  for (const char* name : {"vector", "fulltext.json", "tables", "graph"}) {
    const fs::path entry = root / name;
    if (!fs::exists(entry)) continue;
    if (fs::is_directory(entry)) {
      for (const auto& e : fs::recursive_directory_iterator(entry))
        if (e.is_regular_file())
          files.push_back(fs::relative(e.path(), root).generic_string());
    } else {
      files.push_back(name);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<StoreChecksum> out;
  out.reserve(files.size());
  for (const auto& rel : files) out.push_back({rel, crc32_file((root / rel).string())});
  return out;
}

std::uint32_t snapshot_digest(const std::string& workspace_dir) {
  std::uint32_t crc = 0;
  for (const auto& entry : snapshot_checksums(workspace_dir)) {
    crc = crc32_bytes(entry.path, crc);
    char buf[16];
    std::snprintf(buf, sizeof(buf), ":%08x\n", entry.crc);
    crc = crc32_bytes(buf, crc);
  }
  return crc;
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& payload) {
  res.status = status;
  res.set_content(payload.dump(2) + "\n", "application/json");
}

bool identifier_like(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return true;
}

// Validation messages start with "<key>: ...", which becomes the wire key.
void send_error(httplib::Response& res, const Error& e) {
  const bool client = e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::MalformedInput ||
                      e.kind() == ErrorKind::InvalidPolicy || e.kind() == ErrorKind::RangeError;
  nlohmann::json payload{{"error", e.what()}};
  if (client) {
    const std::string& message = e.message();
    const auto colon = message.find(':');
    if (colon != std::string::npos) {
      const std::string key = trim(message.substr(0, colon));
      if (identifier_like(key)) payload["key"] = key;
    }
  }
  send_json(res, client ? 400 : 500, payload);
}

}  // namespace

struct HttpService::Impl {
  httplib::Server server;
};

HttpService::HttpService(Workspace& workspace)
    : workspace_(workspace), impl_(std::make_unique<Impl>()) {}

HttpService::~HttpService() { stop(); }

void HttpService::start(const std::string& bind, int port) {
  auto& server = impl_->server;

  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    try {
      send_json(res, 200, workspace_.health());
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, nlohmann::json{{"error", e.what()}});
    }
  });

  server.Post("/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded()) raise(ErrorKind::ConfigError, "body: invalid JSON");
      std::optional<retrieval::RerankKind> rerank;
      const auto request = parse_search_request(body, workspace_.config().fusion, rerank);
      send_json(res, 200, fused_result_to_json(workspace_.search(request, rerank)));
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, nlohmann::json{{"error", e.what()}});
    }
  });

  server.Post("/v1/ask", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded()) raise(ErrorKind::ConfigError, "body: invalid JSON");
      if (!body.is_object() || !body.contains("question") || !body["question"].is_string() ||
          body["question"].get<std::string>().empty())
        raise(ErrorKind::ConfigError, "question: required non-empty string");
      std::optional<int> max_steps;
      if (body.contains("max_steps")) {
        if (!body["max_steps"].is_number_integer())
          raise(ErrorKind::ConfigError, "max_steps: expected an integer");
        max_steps = body["max_steps"].get<int>();
        if (*max_steps < 1) raise(ErrorKind::ConfigError, "max_steps: must be at least 1");
      }
      const auto answer = workspace_.ask(body["question"].get<std::string>(), max_steps);
      send_json(res, 200, agent::answer_to_json(answer));
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, nlohmann::json{{"error", e.what()}});
    }
  });

  server.Post("/v1/report", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded()) raise(ErrorKind::ConfigError, "body: invalid JSON");
      if (!body.is_object() || !body.contains("query") || !body["query"].is_string() ||
          body["query"].get<std::string>().empty())
        raise(ErrorKind::ConfigError, "query: required non-empty string");
      int sections_max = 0;
      if (body.contains("sections_max")) {
        if (!body["sections_max"].is_number_integer())
          raise(ErrorKind::ConfigError, "sections_max: expected an integer");
        sections_max = body["sections_max"].get<int>();
        if (sections_max < 1) raise(ErrorKind::ConfigError, "sections_max: must be at least 1");
      }
      const auto report = workspace_.report(body["query"].get<std::string>(), sections_max);
      send_json(res, 200, writer::report_to_json(report));
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, nlohmann::json{{"error", e.what()}});
    }
  });

  if (port == 0) {
    const int bound = server.bind_to_any_port(bind);
    if (bound <= 0) raise(ErrorKind::BindError, "cannot bind " + bind);
    port_ = bound;
  } else {
    if (!server.bind_to_port(bind, port))
      raise(ErrorKind::BindError, "cannot bind " + bind + ":" + std::to_string(port));
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (!server.is_running()) {
    if (std::chrono::steady_clock::now() > deadline) {
      stop();
      raise(ErrorKind::BindError, "server failed to start on " + bind);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

void HttpService::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void HttpService::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace heta::service
