#pragma once

// Multi-hop QA agent: rewrite the question once, then loop retrieve -> take
// notes -> judge sufficiency until the judge is satisfied or the step budget
// runs out. Every step is recorded so a run can be replayed and diffed.

#include <string>
#include <vector>

#include <json.hpp>

#include "heta/gateway.hpp"
#include "heta/ingest.hpp"
#include "heta/retrieval.hpp"

namespace heta::agent {

struct AgentConfig {
  int max_steps = 5;
  int k = 8;
  double alpha = 0.5;
  retrieval::FusionMode fusion = retrieval::FusionMode::rrf;
  std::vector<retrieval::Source> sources{retrieval::Source::vector, retrieval::Source::fulltext,
                                         retrieval::Source::graph, retrieval::Source::table};
  retrieval::RerankSpec rerank;  // lexical_overlap by default
};

struct Note {
  std::string text;
  std::vector<std::string> supporting;  // chunk ids the note was extracted from
};

struct StepRecord {
  int step = 0;
  std::vector<std::string> queries;
  std::vector<std::string> hits;  // fused chunk ids, deduplicated across queries
  std::vector<Note> notes;
  std::string verdict;  // "sufficient" or "insufficient"
  std::vector<std::string> followups;
};

struct Answer {
  std::string question;
  std::string rewritten_query;
  std::string text;
  std::vector<std::string> citations;  // sorted unique chunk ids
  std::vector<StepRecord> trace;
  std::string terminated_by;  // "sufficient" or "budget"
};

// Renders `query_rewrite` and returns the trimmed completion; falls back to
// the original question on provider failure.
std::string rewrite_query(const std::string& question, gateway::Gateway& gw);

// Renders `extract_notes` over the question plus parent-expanded hit texts.
// The reply must be a JSON array of strings; anything else (or a provider
// failure) yields no notes and a warning. Every note is supported by all of
// the step's hit ids.
std::vector<Note> extract_key_info(const std::string& question,
                                   const std::vector<std::string>& hit_ids,
                                   const ingest::Corpus& corpus, gateway::Gateway& gw);

struct Verdict {
  bool sufficient = true;
  std::vector<std::string> followups;
};

// Renders `judge_sufficiency` over the question and accumulated notes.
// Insufficient with no followups is coerced to sufficient; provider failure
// degrades to sufficient. Both paths warn.
Verdict judge_sufficiency(const std::string& question, const std::vector<Note>& memory,
                          gateway::Gateway& gw);

Answer run_agent(const retrieval::StoreContext& ctx, const ingest::Corpus& corpus,
                 const std::string& question, const AgentConfig& config, gateway::Gateway& gw);

// Stable serialization (no timestamps): identical runs produce identical
// bytes. Shared by the CLI --json output and the HTTP /v1/ask response.
nlohmann::json answer_to_json(const Answer& answer);

}  // namespace heta::agent
