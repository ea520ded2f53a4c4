#include "heta/graph_store.hpp"

#include <algorithm>
#include <deque>
#include <filesystem>

#include <json.hpp>

namespace heta::graph_store {

bool GraphStore::has_node(const std::string& entity_id) const { return nodes_.count(entity_id) > 0; }

const EntityNode& GraphStore::node(const std::string& entity_id) const {
  auto it = nodes_.find(entity_id);
  if (it == nodes_.end()) raise(ErrorKind::UnknownEntity, "no entity: " + entity_id);
  return it->second;
}

EntityNode& GraphStore::node_mut(const std::string& entity_id) {
  auto it = nodes_.find(entity_id);
  if (it == nodes_.end()) raise(ErrorKind::UnknownEntity, "no entity: " + entity_id);
  return it->second;
}

void GraphStore::upsert_node(const EntityNode& node) {
  if (node.entity_id.empty()) raise(ErrorKind::MalformedInput, "entity_id is empty");
  nodes_[node.entity_id] = node;
}

bool GraphStore::has_edge(const std::string& src, const std::string& dst,
                          const std::string& predicate) const {
  return edge_index_.count(std::make_tuple(src, dst, predicate)) > 0;
}

void GraphStore::add_edge(const RelationEdge& edge) {
  if (!has_node(edge.src)) raise(ErrorKind::UnknownEntity, "edge source missing: " + edge.src);
  if (!has_node(edge.dst)) raise(ErrorKind::UnknownEntity, "edge target missing: " + edge.dst);
  auto key = std::make_tuple(edge.src, edge.dst, edge.predicate);
  if (edge_index_.count(key))
    raise(ErrorKind::AlreadyExists,
          "edge exists: " + edge.src + " -" + edge.predicate + "-> " + edge.dst);
  RelationEdge stored = edge;
  std::sort(stored.provenance.begin(), stored.provenance.end());
  stored.provenance.erase(std::unique(stored.provenance.begin(), stored.provenance.end()),
                          stored.provenance.end());
  std::size_t idx = edges_.size();
  edges_.push_back(std::move(stored));
  edge_index_[key] = idx;
  adjacency_[edge.src].push_back(idx);
  adjacency_[edge.dst].push_back(idx);
}

ImportStats GraphStore::import_triples(const std::vector<Triple>& triples) {
  ImportStats stats;
  for (const auto& triple : triples) {
    std::string subject = normalize_entity_name(triple.subject);
    std::string predicate = normalize_entity_name(triple.predicate);
    std::string object = normalize_entity_name(triple.object);
    if (subject.empty() || predicate.empty() || object.empty()) {
      warn("triple skipped: empty field");
      continue;
    }
    for (const auto* raw : {&triple.subject, &triple.object}) {
      std::string id = normalize_entity_name(*raw);
      if (!has_node(id)) {
        EntityNode node;
        node.entity_id = id;
        node.display_name = trim(*raw);
        node.entity_type = "entity";
        node.description = node.display_name;
        node.layer = 0;
        upsert_node(node);
        ++stats.nodes_created;
      }
    }
    auto key = std::make_tuple(subject, object, predicate);
    auto it = edge_index_.find(key);
    if (it != edge_index_.end()) {
      auto& edge = edges_[it->second];
      edge.weight += 1.0;
      if (!triple.source_chunk.empty()) {
        auto pos = std::lower_bound(edge.provenance.begin(), edge.provenance.end(),
                                    triple.source_chunk);
        if (pos == edge.provenance.end() || *pos != triple.source_chunk)
          edge.provenance.insert(pos, triple.source_chunk);
      }
    } else {
      RelationEdge edge;
      edge.src = subject;
      edge.dst = object;
      edge.predicate = predicate;
      edge.weight = 1.0;
      if (!triple.source_chunk.empty()) edge.provenance.push_back(triple.source_chunk);
      add_edge(edge);
      ++stats.edges_created;
    }
  }
  return stats;
}

std::set<std::string> GraphStore::khop_neighbors(const std::string& entity_id, int hops,
                                                 std::optional<int> layer) const {
  if (!has_node(entity_id)) raise(ErrorKind::UnknownEntity, "no entity: " + entity_id);
  if (hops < 0) raise(ErrorKind::MalformedInput, "hops must be non-negative");
  std::set<std::string> visited{entity_id};
  std::deque<std::pair<std::string, int>> frontier{{entity_id, 0}};
  while (!frontier.empty()) {
    auto [current, depth] = frontier.front();
    frontier.pop_front();
    if (depth == hops) continue;
    auto adj = adjacency_.find(current);
    if (adj == adjacency_.end()) continue;
    for (std::size_t idx : adj->second) {
      const auto& edge = edges_[idx];
      if (layer && (nodes_.at(edge.src).layer != *layer || nodes_.at(edge.dst).layer != *layer))
        continue;
      const std::string& other = edge.src == current ? edge.dst : edge.src;
      if (visited.insert(other).second) frontier.emplace_back(other, depth + 1);
    }
  }
  return visited;
}

std::vector<EntityMatch> GraphStore::match_entities(const std::string& query,
                                                    const embed::EmbeddingVector& query_vec,
                                                    int limit,
                                                    std::optional<int> layer) const {
  std::string wanted = normalize_entity_name(query);
  std::vector<EntityMatch> matches;
  for (const auto& [id, node] : nodes_) {
    if (layer && node.layer != *layer) continue;
    if (id == wanted) {
      matches.push_back(EntityMatch{id, 1.0, true});
      continue;
    }
    if (!node.embedding || query_vec.values.empty()) continue;
    double sim = embed::cosine_similarity(*node.embedding, query_vec);
    if (sim > 0.0) matches.push_back(EntityMatch{id, sim, false});
  }
  std::sort(matches.begin(), matches.end(), [](const EntityMatch& a, const EntityMatch& b) {
    if (a.exact != b.exact) return a.exact;
    if (a.score != b.score) return a.score > b.score;
    return a.entity_id < b.entity_id;
  });
  if (limit >= 0 && matches.size() > static_cast<std::size_t>(limit))
    matches.resize(static_cast<std::size_t>(limit));
  return matches;
}

void GraphStore::ensure_embeddings(const embed::Embedder& embedder) {
  std::vector<std::string> pending;
  std::vector<std::string> texts;
  for (const auto& [id, node] : nodes_) {
    if (node.embedding) continue;
    pending.push_back(id);
    texts.push_back(node.description.empty() ? node.display_name : node.description);
  }
  if (pending.empty()) return;
  auto vectors = embedder.embed_batch(texts);
  for (std::size_t i = 0; i < pending.size(); ++i)
    nodes_[pending[i]].embedding = std::move(vectors[i]);
}

std::vector<const RelationEdge*> GraphStore::edges_of(const std::string& entity_id) const {
  if (!has_node(entity_id)) raise(ErrorKind::UnknownEntity, "no entity: " + entity_id);
  std::vector<const RelationEdge*> out;
  auto it = adjacency_.find(entity_id);
  if (it == adjacency_.end()) return out;
  for (std::size_t idx : it->second) out.push_back(&edges_[idx]);
  return out;
}

namespace {

nlohmann::json node_to_json(const EntityNode& node) {
  nlohmann::json j{{"entity_id", node.entity_id},
                   {"display_name", node.display_name},
                   {"entity_type", node.entity_type},
                   {"description", node.description},
                   {"layer", node.layer}};
  if (node.community_id) j["community_id"] = *node.community_id;
  if (node.embedding) j["embedding"] = node.embedding->values;
  return j;
}

EntityNode node_from_json(const nlohmann::json& j) {
  EntityNode node;
  node.entity_id = j.at("entity_id").get<std::string>();
  node.display_name = j.at("display_name").get<std::string>();
  node.entity_type = j.at("entity_type").get<std::string>();
  node.description = j.at("description").get<std::string>();
  node.layer = j.at("layer").get<int>();
  if (j.contains("community_id")) node.community_id = j.at("community_id").get<std::string>();
  if (j.contains("embedding")) {
    embed::EmbeddingVector vec;
    vec.values = j.at("embedding").get<std::vector<float>>();
    node.embedding = std::move(vec);
  }
  return node;
}

}  // namespace

void GraphStore::snapshot(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::string nodes_text;
  for (const auto& [id, node] : nodes_) nodes_text += node_to_json(node).dump() + "\n";

  std::vector<const RelationEdge*> sorted_edges;
  for (const auto& edge : edges_) sorted_edges.push_back(&edge);
  std::sort(sorted_edges.begin(), sorted_edges.end(),
            [](const RelationEdge* a, const RelationEdge* b) {
              return std::tie(a->src, a->dst, a->predicate) < std::tie(b->src, b->dst, b->predicate);
            });
  std::string edges_text;
  for (const auto* edge : sorted_edges) {
    nlohmann::json j{{"src", edge->src},
                     {"dst", edge->dst},
                     {"predicate", edge->predicate},
                     {"weight", edge->weight},
                     {"provenance", edge->provenance}};
    edges_text += j.dump() + "\n";
  }

  write_file((fs::path(dir) / "nodes.jsonl").string(), nodes_text);
  write_file((fs::path(dir) / "edges.jsonl").string(), edges_text);
  std::uint32_t crc = crc32_bytes(nodes_text);
  crc = crc32_bytes(edges_text, crc);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x\n", crc);
  write_file((fs::path(dir) / "checksum").string(), buf);
}

GraphStore GraphStore::restore(const std::string& dir) {
  namespace fs = std::filesystem;
  auto nodes_path = fs::path(dir) / "nodes.jsonl";
  auto edges_path = fs::path(dir) / "edges.jsonl";
  auto checksum_path = fs::path(dir) / "checksum";
  if (!fs::exists(nodes_path) || !fs::exists(edges_path) || !fs::exists(checksum_path))
    raise(ErrorKind::CorruptSnapshot, "graph snapshot incomplete in " + dir);

  std::string nodes_text = read_file(nodes_path.string());
  std::string edges_text = read_file(edges_path.string());
  std::uint32_t crc = crc32_bytes(nodes_text);
  crc = crc32_bytes(edges_text, crc);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x\n", crc);
  if (read_file(checksum_path.string()) != buf)
    raise(ErrorKind::CorruptSnapshot, "graph snapshot checksum mismatch in " + dir);

  GraphStore store;
  auto each_line = [](const std::string& text, auto&& fn) {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) fn(text.substr(start, end - start));
      start = end + 1;
    }
  };
  try {
    each_line(nodes_text, [&](const std::string& line) {
      store.upsert_node(node_from_json(nlohmann::json::parse(line)));
    });
    each_line(edges_text, [&](const std::string& line) {
      auto j = nlohmann::json::parse(line);
      RelationEdge edge;
      edge.src = j.at("src").get<std::string>();
      edge.dst = j.at("dst").get<std::string>();
      edge.predicate = j.at("predicate").get<std::string>();
      edge.weight = j.at("weight").get<double>();
      edge.provenance = j.at("provenance").get<std::vector<std::string>>();
      store.add_edge(edge);
    });
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::CorruptSnapshot, std::string("graph snapshot malformed: ") + e.what());
  }
  return store;
}

}  // namespace heta::graph_store
