#include "heta/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "heta/gateway.hpp"
#include "heta/kg.hpp"

namespace heta::retrieval {

const char* to_string(Source source) {
  switch (source) {
    case Source::vector: return "vector";
    case Source::fulltext: return "fulltext";
    case Source::graph: return "graph";
    case Source::table: return "table";
  }
  return "?";
}

Source source_from_string(const std::string& name) {
  if (name == "vector") return Source::vector;
  if (name == "fulltext") return Source::fulltext;
  if (name == "graph") return Source::graph;
  if (name == "table") return Source::table;
  raise(ErrorKind::MalformedInput, "unknown source: " + name);
}

const char* to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::alpha_blend: return "alpha_blend";
    case FusionMode::rrf: return "rrf";
  }
  return "?";
}

FusionMode fusion_from_string(const std::string& name) {
  if (name == "alpha_blend") return FusionMode::alpha_blend;
  if (name == "rrf") return FusionMode::rrf;
  raise(ErrorKind::MalformedInput, "unknown fusion mode: " + name);
}

const char* to_string(RerankKind kind) {
  switch (kind) {
    case RerankKind::none: return "none";
    case RerankKind::lexical_overlap: return "lexical_overlap";
    case RerankKind::remote_http: return "remote_http";
  }
  return "?";
}

RerankKind rerank_kind_from_string(const std::string& name) {
  if (name == "none") return RerankKind::none;
  if (name == "lexical_overlap") return RerankKind::lexical_overlap;
  if (name == "remote_http") return RerankKind::remote_http;
  raise(ErrorKind::MalformedInput, "unknown rerank kind: " + name);
}

namespace {

void validate_request(const RetrievalRequest& req) {
  if (req.alpha < 0.0 || req.alpha > 1.0)
    raise(ErrorKind::InvalidPolicy, "alpha must lie in [0,1]");
  if (req.sources.empty()) raise(ErrorKind::InvalidPolicy, "sources must be nonempty");
  if (req.k < 1) raise(ErrorKind::InvalidPolicy, "k must be at least 1");
}

std::vector<Hit> query_source(const StoreContext& ctx, const RetrievalRequest& req,
                              Source source) {
  std::vector<Hit> hits;
  switch (source) {
    case Source::vector: {
      if (!ctx.embedder || !ctx.vectors)
        raise(ErrorKind::InvalidPolicy, "vector source is not initialized");
      auto query_vec = ctx.embedder->embed_text(req.query);
      auto raw = ctx.vectors->search_topk(query_vec, req.k,
                                          req.filters.empty() ? nullptr : &req.filters);
      for (const auto& h : raw) hits.push_back(Hit{h.chunk_id, source, h.score, 0.0, 0});
      break;
    }
    case Source::fulltext: {
      if (!ctx.fulltext) raise(ErrorKind::InvalidPolicy, "fulltext source is not initialized");
      auto raw = ctx.fulltext->search_keyword(ctx.bm25, req.query, req.k);
      for (const auto& h : raw) hits.push_back(Hit{h.chunk_id, source, h.score, 0.0, 0});
      break;
    }
    case Source::graph: {
      if (!ctx.graph || !ctx.embedder)
        raise(ErrorKind::InvalidPolicy, "graph source is not initialized");
      auto query_vec = ctx.embedder->embed_text(req.query);
      auto evidence = kg::graph_retrieve(*ctx.graph, req.query, query_vec, req.k);
      for (const auto& chunk_id : evidence.provenance)
        hits.push_back(Hit{chunk_id, source, evidence.score, 0.0, 0});
      break;
    }
    case Source::table: {
      if (!ctx.tables) raise(ErrorKind::InvalidPolicy, "table source is not initialized");
      if (!req.table_query) {
        warn("table source requested without a table query");
        break;
      }
      auto result = ctx.tables->run_query(*req.table_query);
      for (const auto& chunk_id : result.provenance)
        hits.push_back(Hit{chunk_id, source, 1.0, 0.0, 0});
      break;
    }
  }
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<int>(i) + 1;
  return hits;
}

}  // namespace

std::vector<SourceTrace> fanout_search(const StoreContext& ctx, const RetrievalRequest& req) {
  validate_request(req);
  std::vector<Source> wanted;
  for (Source s : {Source::vector, Source::fulltext, Source::graph, Source::table})
    if (std::find(req.sources.begin(), req.sources.end(), s) != req.sources.end())
      wanted.push_back(s);

  std::vector<SourceTrace> traces;
  for (Source source : wanted) {
    SourceTrace trace;
    trace.source = source;
    try {
      trace.hits = query_source(ctx, req, source);
    } catch (const Error& e) {
      trace.error = e.what();
      trace.hits.clear();
      warn(std::string("source ") + to_string(source) + " failed: " + e.what());
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

FusedResult fuse_hybrid(const std::vector<SourceTrace>& traces, double alpha, FusionMode mode) {
  if (alpha < 0.0 || alpha > 1.0) raise(ErrorKind::InvalidPolicy, "alpha must lie in [0,1]");

  FusedResult result;
  result.trace = traces;

  // Min-max normalize each list in place on the result's copy of the trace.
  for (auto& trace : result.trace) {
    if (trace.hits.empty()) continue;
    double lo = trace.hits.front().raw_score;
    double hi = lo;
    for (const auto& hit : trace.hits) {
      lo = std::min(lo, hit.raw_score);
      hi = std::max(hi, hit.raw_score);
    }
    for (auto& hit : trace.hits)
      hit.norm_score = hi == lo ? 1.0 : (hit.raw_score - lo) / (hi - lo);
  }

  std::set<std::string> universe;
  for (const auto& trace : result.trace)
    for (const auto& hit : trace.hits) universe.insert(hit.chunk_id);

  int nonvector_lists = 0;
  for (const auto& trace : result.trace)
    if (trace.source != Source::vector && !trace.hits.empty()) ++nonvector_lists;

  for (const auto& chunk_id : universe) {
    RankedChunk ranked;
    ranked.chunk_id = chunk_id;
    double vector_norm = 0.0;
    double nonvector_sum = 0.0;
    double rrf_sum = 0.0;
    for (const auto& trace : result.trace) {
      const Hit* found = nullptr;
      for (const auto& hit : trace.hits) {
        if (hit.chunk_id == chunk_id) {
          found = &hit;
          break;
        }
      }
      if (!found) continue;
      double rrf_part = 1.0 / (kRrfConstant + found->rank);
      rrf_sum += rrf_part;
      if (trace.source == Source::vector)
        vector_norm = found->norm_score;
      else
        nonvector_sum += found->norm_score;
      Contribution contribution;
      contribution.source = trace.source;
      contribution.norm_score = mode == FusionMode::rrf ? rrf_part : found->norm_score;
      contribution.rank = found->rank;
      ranked.contributions.push_back(contribution);
    }
    if (mode == FusionMode::alpha_blend) {
      double nonvector_avg = nonvector_lists == 0 ? 0.0 : nonvector_sum / nonvector_lists;
      ranked.fused_score = alpha * vector_norm + (1.0 - alpha) * nonvector_avg;
    } else {
      ranked.fused_score = rrf_sum;
    }
    result.ranking.push_back(std::move(ranked));
  }

  std::sort(result.ranking.begin(), result.ranking.end(),
            [](const RankedChunk& a, const RankedChunk& b) {
              if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
              return a.chunk_id < b.chunk_id;
            });
  return result;
}

namespace {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a)
    if (b.count(t)) ++inter;
  std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::vector<RankedChunk> rerank(const std::string& query, std::vector<RankedChunk> candidates,
                                const RerankSpec& spec, const ingest::Corpus& corpus) {
  if (spec.kind == RerankKind::none || candidates.empty()) return candidates;

  if (spec.kind == RerankKind::lexical_overlap) {
    auto query_tokens = tokenize(query);
    std::set<std::string> query_set(query_tokens.begin(), query_tokens.end());
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto chunk_tokens = tokenize(corpus.at(candidates[i].chunk_id).text);
      std::set<std::string> chunk_set(chunk_tokens.begin(), chunk_tokens.end());
      scores[i] = jaccard(query_set, chunk_set);
    }
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RankedChunk> out;
    out.reserve(candidates.size());
    for (auto idx : order) out.push_back(std::move(candidates[idx]));
    return out;
  }

  // remote_http: {query, documents} -> {scores}; any failure keeps the order.
  try {
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& candidate : candidates) docs.push_back(corpus.at(candidate.chunk_id).text);
    nlohmann::json body{{"query", query}, {"documents", std::move(docs)}};
    auto reply = gateway::http_post_json_retry(spec.endpoint, body, spec.timeout_ms,
                                               spec.max_retries);
    auto scores = reply.at("scores").get<std::vector<double>>();
    if (scores.size() != candidates.size())
      raise(ErrorKind::MalformedInput, "reranker returned wrong score count");
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RankedChunk> out;
    out.reserve(candidates.size());
    for (auto idx : order) out.push_back(std::move(candidates[idx]));
    return out;
  } catch (const Error& e) {
    warn(std::string("remote rerank failed, keeping fused order: ") + e.what());
    return candidates;
  } catch (const nlohmann::json::exception& e) {
    warn(std::string("remote rerank reply malformed, keeping fused order: ") + e.what());
    return candidates;
  }
}

std::vector<ExpandedHit> expand_parents(const std::vector<std::string>& chunk_ids,
                                        const ingest::Corpus& corpus, std::int64_t radius) {
  // Chunks grouped by document, in span order. Zero-length spans (standalone
  // image/table blocks) are widened to length 1 so overlap is well defined.
  std::map<std::string, std::vector<const ingest::Chunk*>> by_doc;
  for (const auto& chunk : corpus.chunks()) by_doc[chunk.doc_id].push_back(&chunk);
  for (auto& [doc_id, chunks] : by_doc) {
    std::stable_sort(chunks.begin(), chunks.end(),
                     [](const ingest::Chunk* a, const ingest::Chunk* b) {
                       if (a->parent_span.start != b->parent_span.start)
                         return a->parent_span.start < b->parent_span.start;
                       return a->chunk_id < b->chunk_id;
                     });
  }
  auto effective_end = [](const ingest::Chunk& chunk) {
    return chunk.parent_span.end > chunk.parent_span.start ? chunk.parent_span.end
                                                           : chunk.parent_span.start + 1;
  };

  std::vector<ExpandedHit> expanded;
  for (const auto& chunk_id : chunk_ids) {
    const auto& hit_chunk = corpus.at(chunk_id);
    std::int64_t lo = hit_chunk.parent_span.start - radius;
    std::int64_t hi = effective_end(hit_chunk) + radius;
    ExpandedHit out;
    out.chunk_id = chunk_id;
    for (const auto* chunk : by_doc[hit_chunk.doc_id]) {
      std::int64_t start = chunk->parent_span.start;
      std::int64_t end = effective_end(*chunk);
      if (start < hi && end > lo) {
        out.context_chunk_ids.push_back(chunk->chunk_id);
        if (!out.context_text.empty()) out.context_text += "\n";
        out.context_text += chunk->text;
      }
    }
    expanded.push_back(std::move(out));
  }
  return expanded;
}

FusedResult retrieve(const StoreContext& ctx, const RetrievalRequest& req,
                     const RerankSpec* rerank_spec, const ingest::Corpus* corpus) {
  auto traces = fanout_search(ctx, req);
  auto fused = fuse_hybrid(traces, req.alpha, req.fusion);
  if (fused.ranking.size() > static_cast<std::size_t>(req.k))
    fused.ranking.resize(static_cast<std::size_t>(req.k));
  if (rerank_spec && rerank_spec->kind != RerankKind::none) {
    if (corpus == nullptr)
      raise(ErrorKind::InvalidPolicy, "rerank requires a corpus for chunk texts");
    fused.ranking = rerank(req.query, std::move(fused.ranking), *rerank_spec, *corpus);
  }
  return fused;
}

}  // namespace heta::retrieval
