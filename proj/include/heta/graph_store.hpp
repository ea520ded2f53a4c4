#pragma once

// Property graph over extracted entities. Node ids are normalized entity
// names; layer 0 holds base entities, higher layers hold community summaries.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heta/common.hpp"
#include "heta/embed.hpp"

namespace heta::graph_store {

struct EntityNode {
  std::string entity_id;      // normalized name, unique
  std::string display_name;   // first-seen original spelling
  std::string entity_type;    // "entity" for base nodes, "community_summary" for summaries
  std::string description;
  int layer = 0;
  std::optional<std::string> community_id;
  std::optional<embed::EmbeddingVector> embedding;
};

struct RelationEdge {
  std::string src;
  std::string dst;
  std::string predicate;
  double weight = 1.0;
  std::vector<std::string> provenance;  // chunk ids, sorted unique
};

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
  std::string source_chunk;
};

struct ImportStats {
  std::int64_t nodes_created = 0;
  std::int64_t edges_created = 0;
};

struct EntityMatch {
  std::string entity_id;
  double score = 0.0;
  bool exact = false;
};

class GraphStore {
public:
  bool has_node(const std::string& entity_id) const;
  const EntityNode& node(const std::string& entity_id) const;  // UnknownEntity
  EntityNode& node_mut(const std::string& entity_id);
  void upsert_node(const EntityNode& node);

  // AlreadyExists when the (src,dst,predicate) edge is already present.
  void add_edge(const RelationEdge& edge);  // UnknownEntity for missing endpoints
  bool has_edge(const std::string& src, const std::string& dst, const std::string& predicate) const;

  // Merges duplicate (src,dst,predicate) triples: weight += 1, provenance
  // union. Triples with an empty field are skipped with a warning.
  ImportStats import_triples(const std::vector<Triple>& triples);

  // Undirected BFS out to `hops` edges, seed included. UnknownEntity.
  // When `layer` is set, traversal only uses edges whose endpoints are both
  // on that layer.
  std::set<std::string> khop_neighbors(const std::string& entity_id, int hops,
                                       std::optional<int> layer = std::nullopt) const;

  // Exact normalized-name matches score 1.0 and sort first; otherwise nodes
  // whose description embedding has positive cosine against query_vec.
  std::vector<EntityMatch> match_entities(const std::string& query,
                                          const embed::EmbeddingVector& query_vec, int limit,
                                          std::optional<int> layer = std::nullopt) const;

  void ensure_embeddings(const embed::Embedder& embedder);

  const std::map<std::string, EntityNode>& nodes() const { return nodes_; }
  const std::vector<RelationEdge>& edges() const { return edges_; }
  std::vector<const RelationEdge*> edges_of(const std::string& entity_id) const;

  std::int64_t node_count() const { return static_cast<std::int64_t>(nodes_.size()); }
  std::int64_t edge_count() const { return static_cast<std::int64_t>(edges_.size()); }

  void snapshot(const std::string& dir) const;
  static GraphStore restore(const std::string& dir);  // CorruptSnapshot

private:
  std::map<std::string, EntityNode> nodes_;
  std::vector<RelationEdge> edges_;
  // (src, dst, predicate) -> index into edges_.
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> edge_index_;
  std::map<std::string, std::vector<std::size_t>> adjacency_;
};

}  // namespace heta::graph_store
