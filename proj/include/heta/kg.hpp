#pragma once

// Knowledge graph construction: triple extraction from chunks (pattern rules
// or an LLM), a label-propagation community hierarchy with summary nodes, and
// bottom-up retrieval over the result.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heta/embed.hpp"
#include "heta/gateway.hpp"
#include "heta/graph_store.hpp"
#include "heta/ingest.hpp"

namespace heta::kg {

enum class ExtractorKind { pattern, llm };
const char* to_string(ExtractorKind kind);
ExtractorKind extractor_kind_from_string(const std::string& name);  // ConfigError

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::pattern;
  std::string prompt_template_id = "triple_extract";
};

struct HierarchyConfig {
  int levels = 2;
  int min_community_size = 2;
  int lp_max_iters = 10;
};

// Capitalized token runs become entities; the tokens between two runs (one
// to six of them) become the predicate. All three parts are lowercased.
std::vector<graph_store::Triple> extract_triples_pattern(const ingest::Chunk& chunk);

// Asks the gateway per chunk, expects a JSON array of {subject, predicate,
// object}. One retry on a malformed reply, then the chunk is skipped.
std::vector<graph_store::Triple> extract_triples_llm(gateway::Gateway& gw,
                                                     const ingest::Chunk& chunk,
                                                     const std::string& template_id);

std::vector<graph_store::Triple> extract_triples(const std::vector<ingest::Chunk>& chunks,
                                                 const ExtractorSpec& spec,
                                                 gateway::Gateway* gw);  // llm kind needs gw

// Asynchronous label propagation: nodes are visited in entity_id order, each
// adopts its neighbors' most frequent label (ties to the smallest label),
// updates are visible within the sweep. Runs until a full sweep changes
// nothing or max_iters sweeps have run. Returns final label per node.
std::map<std::string, std::string> propagate_labels(
    const graph_store::GraphStore& graph, const std::vector<std::string>& node_ids, int max_iters);

struct HierarchyStats {
  int levels_built = 0;
  std::int64_t summaries_created = 0;
};

// Builds community summary nodes level by level. Level L clusters the nodes
// of layer L-1 using edges whose endpoints both sit on layer L-1. Communities
// of at least min_community_size get a summary node "summary:l<L>:<label>";
// members point to it via community_id and a "summarizes" edge, and summaries
// of connected communities get "related_to" edges. With a null gateway the
// summary text is the member display names joined in id order. Re-running is
// a no-op for summaries that already exist.
HierarchyStats aggregate_hierarchy(graph_store::GraphStore& graph, const HierarchyConfig& config,
                                   gateway::Gateway* gw);

struct GraphEvidence {
  std::vector<graph_store::EntityMatch> matches;
  std::vector<std::string> node_ids;     // sorted
  std::vector<graph_store::RelationEdge> edges;
  std::vector<std::string> summary_ids;  // sorted
  std::vector<std::string> provenance;   // sorted unique chunk ids
  double score = 0.0;                    // best entity match score
};

// Bottom-up: match base entities, take their 1-hop layer-0 neighborhood,
// then ascend summarizes edges to collect community summaries.
GraphEvidence graph_retrieve(const graph_store::GraphStore& graph, const std::string& query,
                             const embed::EmbeddingVector& query_vec, int k);

}  // namespace heta::kg
