#pragma once

// Hybrid retrieval: fan a query out to the four stores, fuse the hit lists
// (alpha blend or reciprocal rank fusion), rerank, and expand hits to parent
// document context.

#include <optional>
#include <string>
#include <vector>

#include "heta/embed.hpp"
#include "heta/fulltext.hpp"
#include "heta/graph_store.hpp"
#include "heta/ingest.hpp"
#include "heta/table_store.hpp"
#include "heta/vector_index.hpp"

namespace heta::retrieval {

enum class Source { vector, fulltext, graph, table };
const char* to_string(Source source);
Source source_from_string(const std::string& name);  // MalformedInput

enum class FusionMode { alpha_blend, rrf };
const char* to_string(FusionMode mode);
FusionMode fusion_from_string(const std::string& name);  // MalformedInput

inline constexpr int kRrfConstant = 60;
inline constexpr std::int64_t kParentRadius = 256;

struct RetrievalRequest {
  std::string query;
  int k = 8;
  std::vector<Source> sources{Source::vector, Source::fulltext, Source::graph, Source::table};
  double alpha = 0.5;
  FusionMode fusion = FusionMode::rrf;
  std::optional<table_store::Query> table_query;
  vector_index::PayloadFilter filters;
};

struct Hit {
  std::string chunk_id;
  Source source = Source::vector;
  double raw_score = 0.0;
  double norm_score = 0.0;
  int rank = 0;  // 1-based within the source list
};

struct SourceTrace {
  Source source = Source::vector;
  std::vector<Hit> hits;
  std::string error;  // nonempty when the store failed; hits empty then
};

struct Contribution {
  Source source = Source::vector;
  double norm_score = 0.0;  // min-max norm (alpha mode) or 1/(60+rank) (rrf)
  int rank = 0;
};

struct RankedChunk {
  std::string chunk_id;
  double fused_score = 0.0;
  std::vector<Contribution> contributions;
};

struct FusedResult {
  std::vector<RankedChunk> ranking;
  std::vector<SourceTrace> trace;
};

// Borrowed store handles; null entries make the matching source error out.
struct StoreContext {
  const embed::Embedder* embedder = nullptr;
  const vector_index::VectorCollection* vectors = nullptr;
  const fulltext::InvertedIndex* fulltext = nullptr;
  fulltext::Bm25Params bm25;
  const graph_store::GraphStore* graph = nullptr;
  const table_store::TableStore* tables = nullptr;
};

// Queries each requested source in enum order. A store failure is recorded
// in that source's trace and leaves the other sources untouched.
std::vector<SourceTrace> fanout_search(const StoreContext& ctx, const RetrievalRequest& req);

// alpha_blend: per-list min-max normalization (all-equal lists normalize to
// 1.0); fused = alpha * vector_norm + (1-alpha) * mean of the nonempty
// non-vector lists' norms, where a chunk missing from a list contributes 0.
// rrf: fused = sum over listing sources of 1/(60 + rank).
FusedResult fuse_hybrid(const std::vector<SourceTrace>& traces, double alpha, FusionMode mode);

enum class RerankKind { none, lexical_overlap, remote_http };
const char* to_string(RerankKind kind);
RerankKind rerank_kind_from_string(const std::string& name);  // MalformedInput

struct RerankSpec {
  RerankKind kind = RerankKind::lexical_overlap;
  std::string endpoint;
  int timeout_ms = 10000;
  int max_retries = 1;
};

// lexical_overlap: Jaccard similarity between query and chunk token sets,
// stable-sorted descending so ties keep the fused order. remote_http posts
// {query, documents} and expects {scores: [...]}; on failure the input order
// comes back with a warning.
std::vector<RankedChunk> rerank(const std::string& query, std::vector<RankedChunk> candidates,
                                const RerankSpec& spec, const ingest::Corpus& corpus);

struct ExpandedHit {
  std::string chunk_id;
  std::string context_text;
  std::vector<std::string> context_chunk_ids;  // span order within the document
};

// Parent-document expansion: all same-document chunks whose token spans
// overlap [start - 256, end + 256) around the hit, joined in span order.
std::vector<ExpandedHit> expand_parents(const std::vector<std::string>& chunk_ids,
                                        const ingest::Corpus& corpus,
                                        std::int64_t radius = kParentRadius);

// fanout + fuse + truncate to k + optional rerank, as one call.
FusedResult retrieve(const StoreContext& ctx, const RetrievalRequest& req,
                     const RerankSpec* rerank_spec = nullptr,
                     const ingest::Corpus* corpus = nullptr);

}  // namespace heta::retrieval
