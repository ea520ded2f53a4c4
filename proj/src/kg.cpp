#include "heta/kg.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

namespace heta::kg {

const char* to_string(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::pattern: return "pattern";
    case ExtractorKind::llm: return "llm";
  }
  return "?";
}

ExtractorKind extractor_kind_from_string(const std::string& name) {
  if (name == "pattern") return ExtractorKind::pattern;
  if (name == "llm") return ExtractorKind::llm;
  raise(ErrorKind::ConfigError, "unknown extractor kind: " + name);
}

namespace {

// Case-preserving word tokens: maximal alnum runs, bytes >= 0x80 included.
std::vector<std::string> case_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

bool starts_capitalized(const std::string& token) {
  return !token.empty() && std::isupper(static_cast<unsigned char>(token[0]));
}

std::string join_lower(const std::vector<std::string>& tokens, std::size_t begin,
                       std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += lowercase(tokens[i]);
  }
  return out;
}

}  // namespace

std::vector<graph_store::Triple> extract_triples_pattern(const ingest::Chunk& chunk) {
  std::vector<graph_store::Triple> triples;
  for (const auto& sentence : split_sentences(chunk.text)) {
    auto tokens = case_tokens(sentence);
    // Runs of consecutive capitalized tokens, as [begin, end) index pairs.
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t i = 0;
    while (i < tokens.size()) {
      if (starts_capitalized(tokens[i])) {
        std::size_t j = i;
        while (j < tokens.size() && starts_capitalized(tokens[j])) ++j;
        runs.emplace_back(i, j);
        i = j;
      } else {
        ++i;
      }
    }
    for (std::size_t a = 0; a + 1 < runs.size(); ++a) {
      const auto& left = runs[a];
      const auto& right = runs[a + 1];
      std::size_t gap = right.first - left.second;
      if (gap < 1 || gap > 6) continue;
      graph_store::Triple triple;
      triple.subject = join_lower(tokens, left.first, left.second);
      triple.predicate = join_lower(tokens, left.second, right.first);
      triple.object = join_lower(tokens, right.first, right.second);
      triple.source_chunk = chunk.chunk_id;
      triples.push_back(std::move(triple));
    }
  }
  return triples;
}

namespace {

std::optional<std::vector<graph_store::Triple>> parse_triple_reply(const std::string& reply,
                                                                   const std::string& chunk_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (!j.is_array()) return std::nullopt;
  std::vector<graph_store::Triple> triples;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("subject") || !item.contains("predicate") ||
        !item.contains("object"))
      return std::nullopt;
    if (!item["subject"].is_string() || !item["predicate"].is_string() ||
        !item["object"].is_string())
      return std::nullopt;
    graph_store::Triple triple;
    triple.subject = item["subject"].get<std::string>();
    triple.predicate = item["predicate"].get<std::string>();
    triple.object = item["object"].get<std::string>();
    triple.source_chunk = chunk_id;
    triples.push_back(std::move(triple));
  }
  return triples;
}

}  // namespace

std::vector<graph_store::Triple> extract_triples_llm(gateway::Gateway& gw,
                                                     const ingest::Chunk& chunk,
                                                     const std::string& template_id) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto result = gw.ask(template_id, {{"text", chunk.text}});
    auto parsed = parse_triple_reply(result.text, chunk.chunk_id);
    if (parsed) return *parsed;
  }
  warn("triple extraction skipped for chunk " + chunk.chunk_id + ": unparseable reply");
  return {};
}

std::vector<graph_store::Triple> extract_triples(const std::vector<ingest::Chunk>& chunks,
                                                 const ExtractorSpec& spec,
                                                 gateway::Gateway* gw) {
  if (spec.kind == ExtractorKind::llm && gw == nullptr)
    raise(ErrorKind::ConfigError, "llm extractor requires a gateway");
  std::vector<graph_store::Triple> triples;
  for (const auto& chunk : chunks) {
    if (chunk.modality != ingest::Modality::text) continue;
    auto extracted = spec.kind == ExtractorKind::pattern
                         ? extract_triples_pattern(chunk)
                         : extract_triples_llm(*gw, chunk, spec.prompt_template_id);
    triples.insert(triples.end(), extracted.begin(), extracted.end());
  }
  return triples;
}

std::map<std::string, std::string> propagate_labels(const graph_store::GraphStore& graph,
                                                    const std::vector<std::string>& node_ids,
                                                    int max_iters) {
  std::set<std::string> members(node_ids.begin(), node_ids.end());
  std::vector<std::string> order(members.begin(), members.end());

  std::map<std::string, std::string> labels;
  for (const auto& id : order) labels[id] = id;

  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (const auto& id : order) {
      std::map<std::string, int> counts;
      for (const auto* edge : graph.edges_of(id)) {
        if (edge->predicate == "summarizes") continue;
        const std::string& other = edge->src == id ? edge->dst : edge->src;
        if (!members.count(other)) continue;
        ++counts[labels[other]];
      }
      if (counts.empty()) continue;
      // Most frequent label; ties resolve to the smallest label. Map order
      // makes the first maximal entry the smallest.
      std::string best = counts.begin()->first;
      int best_count = counts.begin()->second;
      for (const auto& [label, count] : counts) {
        if (count > best_count) {
          best = label;
          best_count = count;
        }
      }
      if (labels[id] != best) {
        labels[id] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return labels;
}

HierarchyStats aggregate_hierarchy(graph_store::GraphStore& graph, const HierarchyConfig& config,
                                   gateway::Gateway* gw) {
  HierarchyStats stats;
  if (config.levels < 1) return stats;
  if (config.min_community_size < 1)
    raise(ErrorKind::InvalidPolicy, "min_community_size must be at least 1");

  for (int level = 1; level <= config.levels; ++level) {
    std::vector<std::string> layer_nodes;
    for (const auto& [id, node] : graph.nodes())
      if (node.layer == level - 1) layer_nodes.push_back(id);
    if (static_cast<int>(layer_nodes.size()) < config.min_community_size) break;

    auto labels = propagate_labels(graph, layer_nodes, config.lp_max_iters);

    std::map<std::string, std::vector<std::string>> communities;
    for (const auto& id : layer_nodes) communities[labels[id]].push_back(id);

    // Communities that qualify for a summary, label -> summary id.
    std::map<std::string, std::string> summary_of_label;
    for (const auto& [label, member_ids] : communities)
      if (static_cast<int>(member_ids.size()) >= config.min_community_size)
        summary_of_label[label] = "summary:l" + std::to_string(level) + ":" + label;

    std::int64_t created_this_level = 0;
    for (const auto& [label, summary_id] : summary_of_label) {
      if (graph.has_node(summary_id)) continue;  // built before; leave as is
      const auto& member_ids = communities[label];

      std::string description;
      if (gw != nullptr) {
        std::string members_text;
        for (const auto& id : member_ids) {
          if (!members_text.empty()) members_text += ", ";
          members_text += graph.node(id).display_name;
        }
        std::set<std::string> member_set(member_ids.begin(), member_ids.end());
        std::string relations_text;
        for (const auto& edge : graph.edges()) {
          if (edge.predicate == "summarizes" || edge.predicate == "related_to") continue;
          if (!member_set.count(edge.src) || !member_set.count(edge.dst)) continue;
          relations_text += edge.src + " " + edge.predicate + " " + edge.dst + "\n";
        }
        description =
            gw->ask("community_summary", {{"members", members_text}, {"relations", relations_text}})
                .text;
      } else {
        for (const auto& id : member_ids) {
          if (!description.empty()) description += "; ";
          description += graph.node(id).display_name;
        }
      }

      graph_store::EntityNode summary;
      summary.entity_id = summary_id;
      summary.display_name = summary_id;
      summary.entity_type = "community_summary";
      summary.description = description;
      summary.layer = level;
      graph.upsert_node(summary);
      ++created_this_level;
      ++stats.summaries_created;

      for (const auto& id : member_ids) {
        graph.node_mut(id).community_id = summary_id;
        graph_store::RelationEdge edge;
        edge.src = summary_id;
        edge.dst = id;
        edge.predicate = "summarizes";
        graph.add_edge(edge);
      }
    }

    // Project cross-community edges onto related_to edges between summaries.
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> cross;
    std::set<std::string> layer_set(layer_nodes.begin(), layer_nodes.end());
    for (const auto& edge : graph.edges()) {
      if (edge.predicate == "summarizes" || edge.predicate == "related_to") continue;
      if (!layer_set.count(edge.src) || !layer_set.count(edge.dst)) continue;
      auto sa = summary_of_label.find(labels[edge.src]);
      auto sb = summary_of_label.find(labels[edge.dst]);
      if (sa == summary_of_label.end() || sb == summary_of_label.end()) continue;
      if (sa->second == sb->second) continue;
      auto key = std::minmax(sa->second, sb->second);
      auto& prov = cross[{key.first, key.second}];
      prov.insert(prov.end(), edge.provenance.begin(), edge.provenance.end());
    }
    for (auto& [pair, prov] : cross) {
      if (graph.has_edge(pair.first, pair.second, "related_to")) continue;
      std::sort(prov.begin(), prov.end());
      prov.erase(std::unique(prov.begin(), prov.end()), prov.end());
      graph_store::RelationEdge edge;
      edge.src = pair.first;
      edge.dst = pair.second;
      edge.predicate = "related_to";
      edge.provenance = std::move(prov);
      graph.add_edge(edge);
    }

    if (created_this_level > 0) stats.levels_built = level;
    bool any_summary_at_level = false;
    for (const auto& [id, node] : graph.nodes())
      if (node.layer == level && node.entity_type == "community_summary")
        any_summary_at_level = true;
    if (!any_summary_at_level) break;
  }
  return stats;
}

GraphEvidence graph_retrieve(const graph_store::GraphStore& graph, const std::string& query,
                             const embed::EmbeddingVector& query_vec, int k) {
  GraphEvidence evidence;
  evidence.matches = graph.match_entities(query, query_vec, k, 0);
  if (evidence.matches.empty()) return evidence;
  for (const auto& match : evidence.matches)
    evidence.score = std::max(evidence.score, match.score);

  std::set<std::string> nodes;
  for (const auto& match : evidence.matches) {
    auto hood = graph.khop_neighbors(match.entity_id, 1, 0);
    nodes.insert(hood.begin(), hood.end());
  }
  evidence.node_ids.assign(nodes.begin(), nodes.end());

  std::set<std::string> provenance;
  for (const auto& edge : graph.edges()) {
    if (edge.predicate == "summarizes" || edge.predicate == "related_to") continue;
    if (!nodes.count(edge.src) || !nodes.count(edge.dst)) continue;
    evidence.edges.push_back(edge);
    provenance.insert(edge.provenance.begin(), edge.provenance.end());
  }
  evidence.provenance.assign(provenance.begin(), provenance.end());

  // Ascend summarizes edges transitively to reach every covering summary.
  std::set<std::string> summaries;
  std::vector<std::string> frontier(nodes.begin(), nodes.end());
  while (!frontier.empty()) {
    std::vector<std::string> next;
    for (const auto& id : frontier) {
      for (const auto* edge : graph.edges_of(id)) {
        if (edge->predicate != "summarizes" || edge->dst != id) continue;
        if (summaries.insert(edge->src).second) next.push_back(edge->src);
      }
    }
    frontier = std::move(next);
  }
  evidence.summary_ids.assign(summaries.begin(), summaries.end());
  return evidence;
}

}  // namespace heta::kg
