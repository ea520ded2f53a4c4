#pragma once

// Shared test scaffolding: a rule-driven chat provider that answers prompts
// by matching distinctive template phrases, and small filesystem helpers.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "heta/common.hpp"
#include "heta/gateway.hpp"

namespace testsupport {

// Answers a prompt via the first rule whose needle occurs in the last message
// content. Every exchange is recorded under its fixture key so the same
// conversation can later be replayed from a ScriptedProvider with no rules.
class RuleProvider : public heta::gateway::ChatProvider {
public:
  using Responder = std::function<std::string(const std::string& content)>;

  void add_rule(std::string needle, Responder responder) {
    rules_.emplace_back(std::move(needle), std::move(responder));
  }
  void add_rule(std::string needle, std::string fixed) {
    add_rule(std::move(needle), [fixed](const std::string&) { return fixed; });
  }

  heta::gateway::ChatResult complete(const std::vector<heta::gateway::ChatMessage>& messages,
                                     const heta::gateway::ChatParams&) override {
    const std::string& content = messages.back().content;
    for (const auto& [needle, responder] : rules_) {
      if (content.find(needle) == std::string::npos) continue;
      std::string text = responder(content);
      recorded_[heta::gateway::fixture_key(messages)] = text;
      return {text, {}};
    }
    heta::raise(heta::ErrorKind::FixtureMissing, "no rule matches prompt: " + content.substr(0, 80));
  }

  const std::map<std::string, std::string>& recorded() const { return recorded_; }

  std::shared_ptr<heta::gateway::ScriptedProvider> freeze() const {
    auto scripted = std::make_shared<heta::gateway::ScriptedProvider>();
    for (const auto& [key, response] : recorded_) scripted->add_raw(key, response);
    return scripted;
  }

private:
  std::vector<std::pair<std::string, Responder>> rules_;
  std::map<std::string, std::string> recorded_;
};

// Needles that identify each builtin prompt template by a distinctive phrase.
namespace needle {
inline constexpr const char* triple_extract = "Extract factual (subject, predicate, object)";
inline constexpr const char* community_summary = "Write a short summary describing how";
inline constexpr const char* query_rewrite = "Rewrite the question below as a concise search query";
inline constexpr const char* extract_notes = "record every fact";
inline constexpr const char* judge_sufficiency = "Decide whether the notes below contain enough";
inline constexpr const char* final_answer = "using only the numbered notes below";
inline constexpr const char* outline_plan = "Plan a report that answers the request below";
inline constexpr const char* section_draft = "Write the report section titled";
inline constexpr const char* fact_check = "Decide whether the evidence fully supports the claim";
inline constexpr const char* gen_judge = "Grade the candidate answer against the reference";
inline constexpr const char* rubric_judge = "Rate the report on the dimension";
}  // namespace needle

// Creates a unique directory under the system temp root and removes it on
// scope exit.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "heta_test") {
    static std::atomic<int> counter{0};
    const int n = counter.fetch_add(1);
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(n));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string sub(const std::string& rel) const { return (path_ / rel).string(); }

private:
  std::filesystem::path path_;
};

inline std::vector<heta::gateway::ChatMessage> user_message(const std::string& content) {
  return {{"user", content}};
}

}  // namespace testsupport
