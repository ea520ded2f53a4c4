#pragma once

// Scoring: the challenge composite Score = R/3 + G, binary hit@k retrieval
// credit, a 3-level answer judge with a lexical fallback, and the
// four-dimension 1-5 report rubric.

#include <string>
#include <vector>

#include "heta/gateway.hpp"

namespace heta::evaluation {

struct QARecord {
  std::string question;
  std::string gold_answer;
  std::string answer_kind;  // number | name | boolean | names
  std::vector<std::string> gold_chunk_ids;
};

std::vector<QARecord> load_qa_jsonl(const std::string& path);  // MalformedInput

struct ChallengeScore {
  double R = 0.0;
  double G = 0.0;
  double total = 0.0;  // R/3 + G, maximum 400/3
};

ChallengeScore score_challenge(double R, double G);  // RangeError outside [0,100]

// Per-question credit is 1 when any gold chunk id appears in that question's
// retrieved ids; R = 100 x mean. MisalignedRun when the lists differ in size.
double compute_R(const std::vector<std::vector<std::string>>& retrieved,
                 const std::vector<std::vector<std::string>>& gold);

// Gateway mode expects {"score": 0|0.5|1} from the `gen_judge` prompt. The
// lexical fallback (null gateway or provider failure) normalizes both answers
// and scores number/boolean by exact match, name by containment, and names by
// the matched fraction of gold parts (1, 0.5 or 0).
double judge_answer(const std::string& question, const std::string& answer,
                    const QARecord& record, gateway::Gateway* gw);

// Strips punctuation, lowercases and collapses whitespace.
std::string normalize_answer(const std::string& text);

struct RubricScore {
  int interest = 0;
  int coherence = 0;
  int relevance = 0;
  int coverage = 0;
  double average = 0.0;
};

// One `rubric_judge` call per dimension; replies outside 1..5 are clipped
// with a warning, unparseable replies raise ParseError.
RubricScore rubric_score(const std::string& article_markdown, const std::string& query,
                         gateway::Gateway& gw);

}  // namespace heta::evaluation
