#pragma once

// Report generation: plan an outline, retrieve context per section, draft
// with citations, place image/table assets by embedding relevance, assemble
// globally renumbered Markdown, and fact-check every cited sentence.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "heta/embed.hpp"
#include "heta/gateway.hpp"
#include "heta/ingest.hpp"
#include "heta/retrieval.hpp"

namespace heta::writer {

struct SectionPlan {
  std::string heading;
  std::string section_query;
};

struct ReportPlan {
  std::string title;
  std::vector<SectionPlan> sections;
};

struct SectionDraft {
  std::string heading;
  std::string body_markdown;                    // local [n] markers into context
  std::vector<std::string> context_chunk_ids;   // 1-based marker targets
  std::vector<std::string> used_chunk_ids;      // cited subset, first-citation order
  std::vector<std::string> visual_markdown;     // placed assets, rendered; kept out of
                                                // the body so renumbering never sees them
};

struct VisualAsset {
  std::string chunk_id;
  ingest::Modality modality = ingest::Modality::image;
  std::string caption;
  std::string media_path;  // image assets
  std::string table_text;  // table assets, raw grid text
};

struct FactCheckEntry {
  std::string claim;
  std::string verdict;  // "supported" or "unsupported"
  std::string evidence_chunk_id;
};

struct Report {
  std::string markdown;
  std::map<std::string, std::string> bibliography;  // global marker -> chunk_id
  std::vector<FactCheckEntry> factcheck;
};

struct WriterConfig {
  int sections_min = 3;
  int sections_max = 8;
  int doc_finder_k = 6;
  double visual_threshold = 0.15;
};

// Parses the `outline_plan` completion; a malformed reply falls back to a
// single section named after the query. Parsed plans are clipped to
// sections_max sections and padded to sections_min with Conclusion sections.
ReportPlan plan_outline(const std::string& query, gateway::Gateway& gw,
                        const WriterConfig& config = {});

// Vector-only retrieval with parent expansion, per the section query.
std::vector<retrieval::ExpandedHit> doc_finder(const retrieval::StoreContext& ctx,
                                               const ingest::Corpus& corpus,
                                               const std::string& section_query, int k);

// Empty context yields the stub body "No evidence found." without a model
// call. Markers outside 1..|context| are stripped with a warning.
SectionDraft draft_section(const SectionPlan& section,
                           const std::vector<retrieval::ExpandedHit>& context,
                           gateway::Gateway& gw);

std::vector<VisualAsset> collect_assets(const ingest::Corpus& corpus);

// Appends each asset to the section whose body embedding is most similar to
// the asset caption, when that cosine is at least the threshold; earlier
// sections win ties and every asset is placed at most once. Returns the
// assets that stayed unplaced.
std::vector<VisualAsset> place_visuals(std::vector<SectionDraft>& drafts,
                                       const std::vector<VisualAsset>& assets,
                                       const embed::Embedder& embedder, double threshold);

// H1 title, H2 sections, global citation renumbering by first appearance, a
// References section mapping each marker to "doc_id, chunk_id", and an
// Unplaced assets appendix when needed.
Report assemble_report(const ReportPlan& plan, const std::vector<SectionDraft>& drafts,
                       const std::vector<VisualAsset>& unplaced, const ingest::Corpus& corpus);

// Every sentence carrying a citation marker becomes a claim checked against
// its cited chunks. With a gateway the `fact_check` prompt decides; without
// one (or on provider failure) the claim is supported iff at least 30% of its
// tokens appear in the cited text. Unsupported sentences get an inline
// " ⚠unverified" annotation.
Report fact_check(Report report, const ingest::Corpus& corpus, gateway::Gateway* gw);

// The full pipeline.
Report write_report(const retrieval::StoreContext& ctx, const ingest::Corpus& corpus,
                    const std::string& query, gateway::Gateway& gw,
                    const WriterConfig& config = {}, bool llm_fact_check = true);

nlohmann::json report_to_json(const Report& report);

}  // namespace heta::writer
