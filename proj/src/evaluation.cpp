#include "heta/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

#include <json.hpp>

namespace heta::evaluation {

std::vector<QARecord> load_qa_jsonl(const std::string& path) {
  std::string text = read_file(path);
  std::vector<QARecord> records;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      QARecord record;
      record.question = j.at("question").get<std::string>();
      record.gold_answer = j.at("gold_answer").get<std::string>();
      record.answer_kind = j.at("answer_kind").get<std::string>();
      if (j.contains("gold_chunk_ids"))
        record.gold_chunk_ids = j.at("gold_chunk_ids").get<std::vector<std::string>>();
      if (record.gold_answer.empty())
        raise(ErrorKind::MalformedInput,
              "qa record " + std::to_string(line_no) + " has an empty gold answer");
      static const std::set<std::string> kKinds = {"number", "name", "boolean", "names"};
      if (!kKinds.count(record.answer_kind))
        raise(ErrorKind::MalformedInput, "qa record " + std::to_string(line_no) +
                                             " has unknown answer_kind " + record.answer_kind);
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::MalformedInput,
            "qa line " + std::to_string(line_no) + " is not a valid record: " + e.what());
    }
  }
  return records;
}

ChallengeScore score_challenge(double R, double G) {
  if (R < 0.0 || R > 100.0) raise(ErrorKind::RangeError, "R must lie in [0,100]");
  if (G < 0.0 || G > 100.0) raise(ErrorKind::RangeError, "G must lie in [0,100]");
  ChallengeScore score;
  score.R = R;
  score.G = G;
  score.total = R / 3.0 + G;
  return score;
}

double compute_R(const std::vector<std::vector<std::string>>& retrieved,
                 const std::vector<std::vector<std::string>>& gold) {
  if (retrieved.size() != gold.size())
    raise(ErrorKind::MisalignedRun, "retrieved runs and gold differ in question count");
  if (retrieved.empty()) {
    warn("compute_R over zero questions, returning 0");
    return 0.0;
  }
  std::int64_t hits = 0;
  for (std::size_t q = 0; q < retrieved.size(); ++q) {
    std::set<std::string> got(retrieved[q].begin(), retrieved[q].end());
    bool hit = false;
    for (const auto& id : gold[q])
      if (got.count(id)) hit = true;
    if (hit) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(retrieved.size());
}

std::string normalize_answer(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

namespace {

double lexical_judge(const std::string& answer, const QARecord& record) {
  std::string got = normalize_answer(answer);
  std::string want = normalize_answer(record.gold_answer);
  if (record.answer_kind == "number" || record.answer_kind == "boolean")
    return got == want ? 1.0 : 0.0;
  if (record.answer_kind == "name") {
    if (want.empty()) return 0.0;
    return got.find(want) != std::string::npos ? 1.0 : 0.0;
  }
  // names: split the gold on commas/semicolons, credit the matched fraction.
  std::vector<std::string> parts;
  std::string current;
  for (char c : record.gold_answer) {
    if (c == ',' || c == ';') {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  int total = 0;
  int matched = 0;
  for (const auto& part : parts) {
    std::string norm = normalize_answer(part);
    if (norm.empty()) continue;
    ++total;
    if (got.find(norm) != std::string::npos) ++matched;
  }
  if (total == 0) return 0.0;
  if (matched == total) return 1.0;
  return matched > 0 ? 0.5 : 0.0;
}

}  // namespace

double judge_answer(const std::string& question, const std::string& answer,
                    const QARecord& record, gateway::Gateway* gw) {
  if (gw != nullptr) {
    try {
      auto reply =
          gw->ask("gen_judge",
                  {{"question", question}, {"gold", record.gold_answer}, {"answer", answer}})
              .text;
      auto parsed = nlohmann::json::parse(reply);
      double score = parsed.at("score").get<double>();
      if (score != 0.0 && score != 0.5 && score != 1.0) {
        warn("judge returned a score outside {0, 0.5, 1}, clipping");
        score = std::clamp(score, 0.0, 1.0);
      }
      return score;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ProviderUnavailable && e.kind() != ErrorKind::FixtureMissing)
        throw;
      warn(std::string("answer judge falling back to lexical matching: ") + e.what());
    } catch (const nlohmann::json::exception&) {
      warn("answer judge reply malformed, falling back to lexical matching");
    }
  }
  return lexical_judge(answer, record);
}

RubricScore rubric_score(const std::string& article_markdown, const std::string& query,
                         gateway::Gateway& gw) {
  if (trim(article_markdown).empty())
    raise(ErrorKind::MalformedInput, "rubric scoring needs a nonempty article");

  struct Dimension {
    const char* name;
    const char* criteria;
  };
  static const Dimension kDimensions[] = {
      {"Interest Level", "How engaging and insightful the report is for a curious reader."},
      {"Coherence and Organization", "How logically the report is structured from start to end."},
      {"Relevance", "How directly the report addresses the query it was written for."},
      {"Broad Coverage", "How completely the report covers the breadth of the topic."},
  };

  int values[4] = {0, 0, 0, 0};
  for (int d = 0; d < 4; ++d) {
    std::string reply = trim(gw.ask("rubric_judge", {{"dimension", kDimensions[d].name},
                                                     {"criteria", kDimensions[d].criteria},
                                                     {"report", article_markdown},
                                                     {"query", query}})
                                 .text);
    char* end = nullptr;
    long value = std::strtol(reply.c_str(), &end, 10);
    if (end == reply.c_str())
      raise(ErrorKind::ParseError,
            std::string("rubric judge reply for ") + kDimensions[d].name + " is not an integer");
    if (value < 1 || value > 5) {
      warn(std::string("rubric value for ") + kDimensions[d].name + " clipped into 1..5");
      value = std::clamp(value, 1L, 5L);
    }
    values[d] = static_cast<int>(value);
  }

  RubricScore score;
  score.interest = values[0];
  score.coherence = values[1];
  score.relevance = values[2];
  score.coverage = values[3];
  score.average = (values[0] + values[1] + values[2] + values[3]) / 4.0;
  return score;
}

}  // namespace heta::evaluation
