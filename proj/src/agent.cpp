#include "heta/agent.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

namespace heta::agent {

namespace {

bool is_degraded_provider(const Error& e) {
  return e.kind() == ErrorKind::ProviderUnavailable || e.kind() == ErrorKind::FixtureMissing;
}

}  // namespace

std::string rewrite_query(const std::string& question, gateway::Gateway& gw) {
  try {
    std::string rewritten = trim(gw.ask("query_rewrite", {{"question", question}}).text);
    if (rewritten.empty()) {
      warn("query rewrite returned empty text, keeping the original question");
      return question;
    }
    return rewritten;
  } catch (const Error& e) {
    if (!is_degraded_provider(e)) throw;
    warn(std::string("query rewrite unavailable, keeping the original question: ") + e.what());
    return question;
  }
}

std::vector<Note> extract_key_info(const std::string& question,
                                   const std::vector<std::string>& hit_ids,
                                   const ingest::Corpus& corpus, gateway::Gateway& gw) {
  auto expanded = retrieval::expand_parents(hit_ids, corpus);
  std::string context;
  for (const auto& hit : expanded) {
    if (!context.empty()) context += "\n\n";
    context += hit.context_text;
  }
  std::string reply;
  try {
    reply = gw.ask("extract_notes", {{"question", question}, {"context", context}}).text;
  } catch (const Error& e) {
    if (!is_degraded_provider(e)) throw;
    warn(std::string("note extraction unavailable: ") + e.what());
    return {};
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    warn("note extraction reply is not JSON, recording no notes");
    return {};
  }
  if (!parsed.is_array()) {
    warn("note extraction reply is not a JSON array, recording no notes");
    return {};
  }
  std::vector<Note> notes;
  for (const auto& item : parsed) {
    if (!item.is_string()) {
      warn("note extraction reply holds a non-string entry, recording no notes");
      return {};
    }
    notes.push_back(Note{item.get<std::string>(), hit_ids});
  }
  return notes;
}

Verdict judge_sufficiency(const std::string& question, const std::vector<Note>& memory,
                          gateway::Gateway& gw) {
  std::string notes_text;
  for (const auto& note : memory) notes_text += "- " + note.text + "\n";
  std::string reply;
  try {
    reply = gw.ask("judge_sufficiency", {{"question", question}, {"notes", notes_text}}).text;
  } catch (const Error& e) {
    if (!is_degraded_provider(e)) throw;
    warn(std::string("sufficiency judge unavailable, proceeding to answer: ") + e.what());
    return Verdict{true, {}};
  }
  Verdict verdict;
  try {
    auto parsed = nlohmann::json::parse(reply);
    verdict.sufficient = parsed.at("sufficient").get<bool>();
    if (parsed.contains("followup_queries"))
      verdict.followups = parsed.at("followup_queries").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    warn("sufficiency judge reply malformed, proceeding to answer");
    return Verdict{true, {}};
  }
  if (!verdict.sufficient && verdict.followups.empty()) {
    warn("judge said insufficient without followups, coercing to sufficient");
    verdict.sufficient = true;
  }
  if (verdict.sufficient) verdict.followups.clear();
  return verdict;
}

Answer run_agent(const retrieval::StoreContext& ctx, const ingest::Corpus& corpus,
                 const std::string& question, const AgentConfig& config, gateway::Gateway& gw) {
  if (config.max_steps < 1) raise(ErrorKind::InvalidPolicy, "max_steps must be at least 1");

  Answer answer;
  answer.question = question;
  answer.rewritten_query = rewrite_query(question, gw);
  answer.terminated_by = "budget";

  std::vector<Note> memory;
  std::vector<std::string> current_queries{answer.rewritten_query};

  for (int step = 0; step < config.max_steps; ++step) {
    StepRecord record;
    record.step = step;
    record.queries = current_queries;

    std::set<std::string> seen;
    for (const auto& query : current_queries) {
      retrieval::RetrievalRequest req;
      req.query = query;
      req.k = config.k;
      req.alpha = config.alpha;
      req.fusion = config.fusion;
      req.sources = config.sources;
      auto fused = retrieval::retrieve(ctx, req, &config.rerank, &corpus);
      for (const auto& ranked : fused.ranking)
        if (seen.insert(ranked.chunk_id).second) record.hits.push_back(ranked.chunk_id);
    }

    if (record.hits.empty()) {
      warn("step " + std::to_string(step) + " retrieved nothing");
    } else {
      record.notes = extract_key_info(question, record.hits, corpus, gw);
      memory.insert(memory.end(), record.notes.begin(), record.notes.end());
    }

    auto verdict = judge_sufficiency(question, memory, gw);
    record.verdict = verdict.sufficient ? "sufficient" : "insufficient";
    record.followups = verdict.followups;
    answer.trace.push_back(record);

    if (verdict.sufficient) {
      answer.terminated_by = "sufficient";
      break;
    }
    current_queries = verdict.followups;
  }

  std::string numbered_notes;
  for (std::size_t i = 0; i < memory.size(); ++i)
    numbered_notes += std::to_string(i + 1) + ". " + memory[i].text + "\n";
  try {
    answer.text =
        trim(gw.ask("final_answer", {{"question", question}, {"notes", numbered_notes}}).text);
  } catch (const Error& e) {
    if (!is_degraded_provider(e)) throw;
    warn(std::string("final answer unavailable, concatenating notes: ") + e.what());
    for (const auto& note : memory) {
      if (!answer.text.empty()) answer.text += "\n";
      answer.text += note.text;
    }
  }

  // Citations: notes referenced by [n] markers in the final text.
  std::set<std::string> citations;
  for (std::size_t i = 0; i + 2 < answer.text.size(); ++i) {
    if (answer.text[i] != '[') continue;
    std::size_t j = i + 1;
    while (j < answer.text.size() && std::isdigit(static_cast<unsigned char>(answer.text[j]))) ++j;
    if (j == i + 1 || j >= answer.text.size() || answer.text[j] != ']') continue;
    long n = std::strtol(answer.text.substr(i + 1, j - i - 1).c_str(), nullptr, 10);
    if (n < 1 || static_cast<std::size_t>(n) > memory.size()) {
      warn("final answer cites note " + std::to_string(n) + " which does not exist");
      continue;
    }
    const auto& supporting = memory[static_cast<std::size_t>(n - 1)].supporting;
    citations.insert(supporting.begin(), supporting.end());
  }
  answer.citations.assign(citations.begin(), citations.end());
  return answer;
}

nlohmann::json answer_to_json(const Answer& answer) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& record : answer.trace) {
    nlohmann::json notes = nlohmann::json::array();
    for (const auto& note : record.notes)
      notes.push_back({{"text", note.text}, {"supporting", note.supporting}});
    trace.push_back({{"step", record.step},
                     {"queries", record.queries},
                     {"hits", record.hits},
                     {"notes", std::move(notes)},
                     {"verdict", record.verdict},
                     {"followups", record.followups}});
  }
  return nlohmann::json{{"question", answer.question},
                        {"rewritten_query", answer.rewritten_query},
                        {"answer", answer.text},
                        {"citations", answer.citations},
                        {"terminated_by", answer.terminated_by},
                        {"trace", std::move(trace)}};
}

}  // namespace heta::agent
