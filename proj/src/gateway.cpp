#include "heta/gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <httplib.h>

namespace heta::gateway {

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::remote_chat: return "remote_chat";
    case ProviderKind::scripted: return "scripted";
  }
  return "?";
}

ProviderKind provider_kind_from_string(const std::string& name) {
  if (name == "remote_chat") return ProviderKind::remote_chat;
  if (name == "scripted") return ProviderKind::scripted;
  raise(ErrorKind::ConfigError, "unknown provider kind: " + name);
}

std::string canonical_messages(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& message : messages) {
    out += message.role;
    out += ':';
    out += message.content;
    out += '\n';
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    raise(ErrorKind::ProviderUnavailable, "sha256 digest failed");
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<std::size_t>(len) * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string fixture_key(const std::vector<ChatMessage>& messages) {
  return sha256_hex(canonical_messages(messages));
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::string& path) {
  auto provider = std::make_shared<ScriptedProvider>();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::MalformedInput, std::string("fixtures file is not JSON: ") + e.what());
  }
  if (!j.is_object()) raise(ErrorKind::MalformedInput, "fixtures file must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string())
      raise(ErrorKind::MalformedInput, "fixture value for " + key + " must be a string");
    provider->fixtures_[key] = value.get<std::string>();
  }
  return provider;
}

void ScriptedProvider::add_fixture(const std::vector<ChatMessage>& messages,
                                   const std::string& response) {
  fixtures_[fixture_key(messages)] = response;
}

void ScriptedProvider::add_raw(const std::string& key, const std::string& response) {
  fixtures_[key] = response;
}

nlohmann::json ScriptedProvider::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, response] : fixtures_) j[key] = response;
  return j;
}

ChatResult ScriptedProvider::complete(const std::vector<ChatMessage>& messages,
                                      const ChatParams&) {
  std::string canonical = canonical_messages(messages);
  std::string key = sha256_hex(canonical);
  auto it = fixtures_.find(key);
  if (it == fixtures_.end()) {
    std::string tail = messages.empty() ? std::string("<no messages>") : messages.back().content;
    if (tail.size() > 80) tail = tail.substr(0, 80) + "...";
    raise(ErrorKind::FixtureMissing, "no fixture for key " + key + " (last message: " + tail + ")");
  }
  ChatResult result;
  result.text = it->second;
  result.usage.prompt_tokens = static_cast<std::int64_t>(tokenize(canonical).size());
  result.usage.completion_tokens = static_cast<std::int64_t>(tokenize(result.text).size());
  return result;
}

RemoteProvider::RemoteProvider(ProviderSpec spec) : spec_(std::move(spec)) {
  if (spec_.endpoint.empty())
    raise(ErrorKind::ConfigError, "remote chat provider requires an endpoint");
}

ChatResult RemoteProvider::complete(const std::vector<ChatMessage>& messages,
                                    const ChatParams& params) {
  nlohmann::json wire_messages = nlohmann::json::array();
  for (const auto& message : messages)
    wire_messages.push_back({{"role", message.role}, {"content", message.content}});
  nlohmann::json body{{"model", spec_.model},
                      {"messages", std::move(wire_messages)},
                      {"temperature", params.temperature},
                      {"max_tokens", params.max_tokens}};
  std::string bearer = spec_.api_key;
  if (bearer.empty()) {
    if (const char* env = std::getenv("HETA_LLM_API_KEY")) bearer = env;
  }
  auto reply = http_post_json_retry(spec_.endpoint, body, spec_.timeout_ms, spec_.max_retries,
                                    spec_.backoff_base_ms, bearer);
  ChatResult result;
  try {
    result.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::ProviderUnavailable, std::string("malformed chat reply: ") + e.what());
  }
  if (reply.contains("usage") && reply["usage"].is_object()) {
    const auto& usage = reply["usage"];
    if (usage.contains("prompt_tokens"))
      result.usage.prompt_tokens = usage["prompt_tokens"].get<std::int64_t>();
    if (usage.contains("completion_tokens"))
      result.usage.completion_tokens = usage["completion_tokens"].get<std::int64_t>();
  } else {
    result.usage.prompt_tokens =
        static_cast<std::int64_t>(tokenize(canonical_messages(messages)).size());
    result.usage.completion_tokens = static_cast<std::int64_t>(tokenize(result.text).size());
  }
  return result;
}

std::shared_ptr<ChatProvider> make_provider(const ProviderSpec& spec) {
  if (spec.kind == ProviderKind::scripted) {
    if (spec.fixtures_path.empty()) return std::make_shared<ScriptedProvider>();
    return ScriptedProvider::from_file(spec.fixtures_path);
  }
  return std::make_shared<RemoteProvider>(spec);
}

std::vector<int> backoff_delays(int max_retries, int base_ms) {
  std::vector<int> delays;
  delays.reserve(static_cast<std::size_t>(std::max(0, max_retries)));
  int delay = base_ms;
  for (int i = 0; i < max_retries; ++i) {
    delays.push_back(delay);
    delay *= 2;
  }
  return delays;
}

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl parse_http_url(const std::string& endpoint) {
  const std::string prefix = "http://";
  if (endpoint.rfind(prefix, 0) != 0)
    raise(ErrorKind::ConfigError, "only plain http endpoints are supported: " + endpoint);
  std::string rest = endpoint.substr(prefix.size());
  ParsedUrl url;
  auto slash = rest.find('/');
  if (slash != std::string::npos) {
    url.path = rest.substr(slash);
    rest = rest.substr(0, slash);
  }
  auto colon = rest.find(':');
  if (colon != std::string::npos) {
    url.host = rest.substr(0, colon);
    std::string port_text = rest.substr(colon + 1);
    char* end = nullptr;
    long port = std::strtol(port_text.c_str(), &end, 10);
    if (port_text.empty() || end != port_text.c_str() + port_text.size() || port <= 0 ||
        port > 65535)
      raise(ErrorKind::ConfigError, "bad port in endpoint: " + endpoint);
    url.port = static_cast<int>(port);
  } else {
    url.host = rest;
  }
  if (url.host.empty()) raise(ErrorKind::ConfigError, "empty host in endpoint: " + endpoint);
  return url;
}

}  // namespace

nlohmann::json http_post_json_retry(const std::string& endpoint, const nlohmann::json& body,
                                    int timeout_ms, int max_retries, int backoff_base_ms,
                                    const std::string& bearer) {
  auto url = parse_http_url(endpoint);
  auto delays = backoff_delays(max_retries, backoff_base_ms);
  std::string payload = body.dump();
  std::string last_error = "no attempts made";
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(delays[static_cast<std::size_t>(attempt - 1)]));
    httplib::Client client(url.host, url.port);
    time_t seconds = timeout_ms / 1000;
    time_t micros = static_cast<time_t>(timeout_ms % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
    auto res = client.Post(url.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400)
      raise(ErrorKind::ProviderUnavailable,
            "request rejected with status " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::ProviderUnavailable, std::string("response is not JSON: ") + e.what());
    }
  }
  raise(ErrorKind::ProviderUnavailable, "retries exhausted: " + last_error);
}

PromptCatalog PromptCatalog::builtin() {
  PromptCatalog catalog;
  catalog.set_template("triple_extract", R"(Extract factual (subject, predicate, object) triples from the passage below.
Respond with a JSON array only; each element must be an object with keys
"subject", "predicate", and "object". Use [] when nothing can be extracted.

Passage:
{text}
)");
  catalog.set_template("community_summary", R"(Write a short summary describing how the following entities relate to each
other. Respond with one plain-text paragraph and nothing else.

Entities:
{members}

Relations:
{relations}
)");
  catalog.set_template("query_rewrite", R"(Rewrite the question below as a concise search query that keeps every
distinctive term. Respond with the query text only.

Question:
{question}
)");
  catalog.set_template("extract_notes", R"(Read the context passages and record every fact that helps answer the
question. Respond with a JSON array of strings; each string is one
self-contained note. Use [] when nothing is relevant.

Question:
{question}

Context:
{context}
)");
  catalog.set_template("judge_sufficiency", R"(Decide whether the notes below contain enough information to answer the
question. Respond with a JSON object {"sufficient": true or false,
"followup_queries": [...]}. Propose one to three followup queries when the
notes are not sufficient.

Question:
{question}

Notes:
{notes}
)");
  catalog.set_template("final_answer", R"(Answer the question using only the numbered notes below. Cite supporting
notes inline with bracketed numbers like [1]. Respond with the answer text
only.

Question:
{question}

Notes:
{notes}
)");
  catalog.set_template("outline_plan", R"(Plan a report that answers the request below. Respond with a JSON object
{"title": "...", "sections": [{"heading": "...", "section_query": "..."}]}
and nothing else. Use between three and eight sections.

Request:
{query}
)");
  catalog.set_template("section_draft", R"(Write the report section titled "{heading}" using only the numbered context
passages. Cite passages inline with bracketed numbers like [2]. Respond with
Markdown paragraphs only; do not repeat the heading.

Section focus:
{section_query}

Context:
{context}
)");
  catalog.set_template("fact_check", R"(Decide whether the evidence fully supports the claim. Respond with a JSON
object {"supported": true or false} and nothing else.

Claim:
{claim}

Evidence:
{evidence}
)");
  catalog.set_template("gen_judge", R"(Grade the candidate answer against the reference answer. Respond with a JSON
object {"score": 1} for a correct answer, {"score": 0.5} for a partially
correct answer, or {"score": 0} for an incorrect one.

Question:
{question}

Reference answer:
{gold}

Candidate answer:
{answer}
)");
  catalog.set_template("rubric_judge", R"(Rate the report on the dimension described below. Respond with a single
integer from 1 to 5 and nothing else.

Dimension: {dimension}
Criteria: {criteria}

Query the report answers:
{query}

Report:
{report}
)");
  return catalog;
}

void PromptCatalog::load_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir) || !fs::is_directory(dir)) {
    warn("prompt directory not found: " + dir);
    return;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) templates_[path.stem().string()] = read_file(path.string());
}

void PromptCatalog::set_template(const std::string& template_id, const std::string& text) {
  templates_[template_id] = text;
}

bool PromptCatalog::has_template(const std::string& template_id) const {
  return templates_.count(template_id) > 0;
}

const std::string& PromptCatalog::template_text(const std::string& template_id) const {
  auto it = templates_.find(template_id);
  if (it == templates_.end()) raise(ErrorKind::UnknownTemplate, "no template: " + template_id);
  return it->second;
}

std::vector<std::string> PromptCatalog::template_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, text] : templates_) ids.push_back(id);
  return ids;
}

std::string PromptCatalog::render(const std::string& template_id,
                                  const std::map<std::string, std::string>& bindings) const {
  const std::string& text = template_text(template_id);
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    // A placeholder is '{', an identifier, '}'. Anything else is literal.
    std::size_t j = i + 1;
    if (j < text.size() &&
        (std::isalpha(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
      std::size_t k = j + 1;
      while (k < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[k])) || text[k] == '_'))
        ++k;
      if (k < text.size() && text[k] == '}') {
        std::string name = text.substr(j, k - j);
        auto it = bindings.find(name);
        if (it == bindings.end())
          raise(ErrorKind::MissingBinding,
                "template " + template_id + " needs a binding for {" + name + "}");
        out += it->second;
        i = k + 1;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

Gateway::Gateway(PromptCatalog catalog, std::shared_ptr<ChatProvider> provider)
    : catalog_(std::move(catalog)), provider_(std::move(provider)) {
  if (!provider_) raise(ErrorKind::ConfigError, "gateway requires a provider");
}

std::string Gateway::render(const std::string& template_id,
                            const std::map<std::string, std::string>& bindings) const {
  return catalog_.render(template_id, bindings);
}

ChatResult Gateway::complete(const std::vector<ChatMessage>& messages, const ChatParams& params) {
  return provider_->complete(messages, params);
}

ChatResult Gateway::ask(const std::string& template_id,
                        const std::map<std::string, std::string>& bindings,
                        const ChatParams& params) {
  std::vector<ChatMessage> messages{{"user", render(template_id, bindings)}};
  return provider_->complete(messages, params);
}

}  // namespace heta::gateway
