#pragma once

// LLM access layer: chat-completions wire format, a scripted provider that
// replays canned responses keyed by a hash of the exact message sequence, and
// a prompt template catalog. All HTTP in the project funnels through
// http_post_json_retry so retry/backoff behavior is uniform.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "heta/common.hpp"

namespace heta::gateway {

struct ChatMessage {
  std::string role;
  std::string content;
};

enum class ProviderKind { remote_chat, scripted };
const char* to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& name);  // ConfigError

struct ProviderSpec {
  ProviderKind kind = ProviderKind::scripted;
  std::string endpoint;
  std::string model = "default";
  int timeout_ms = 30000;
  int max_retries = 2;
  int backoff_base_ms = 250;
  std::string fixtures_path;  // scripted only
  std::string api_key;        // remote only; falls back to HETA_LLM_API_KEY
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResult {
  std::string text;
  Usage usage;
};

struct ChatParams {
  double temperature = 0.0;
  int max_tokens = 1024;
};

// One line per message: "<role>:<content>\n". The fixture key hashes this.
std::string canonical_messages(const std::vector<ChatMessage>& messages);
std::string sha256_hex(std::string_view data);
std::string fixture_key(const std::vector<ChatMessage>& messages);

class ChatProvider {
public:
  virtual ~ChatProvider() = default;
  virtual ChatResult complete(const std::vector<ChatMessage>& messages,
                              const ChatParams& params) = 0;
};

class ScriptedProvider : public ChatProvider {
public:
  ScriptedProvider() = default;
  static std::shared_ptr<ScriptedProvider> from_file(const std::string& path);  // MalformedInput

  void add_fixture(const std::vector<ChatMessage>& messages, const std::string& response);
  void add_raw(const std::string& key, const std::string& response);
  nlohmann::json to_json() const;
  std::size_t size() const { return fixtures_.size(); }

  // FixtureMissing when no fixture matches; the message carries the key.
  ChatResult complete(const std::vector<ChatMessage>& messages, const ChatParams& params) override;

private:
  std::map<std::string, std::string> fixtures_;
};

class RemoteProvider : public ChatProvider {
public:
  explicit RemoteProvider(ProviderSpec spec);
  ChatResult complete(const std::vector<ChatMessage>& messages, const ChatParams& params) override;

private:
  ProviderSpec spec_;
};

std::shared_ptr<ChatProvider> make_provider(const ProviderSpec& spec);

// Delay before retry attempt i is base_ms * 2^i; the sequence is monotone.
std::vector<int> backoff_delays(int max_retries, int base_ms);

// POST body as JSON, parse the JSON reply. Retries connection failures,
// timeouts, and 5xx responses max_retries times with exponential backoff;
// 4xx fails immediately. ProviderUnavailable on exhaustion.
nlohmann::json http_post_json_retry(const std::string& endpoint, const nlohmann::json& body,
                                    int timeout_ms, int max_retries, int backoff_base_ms = 250,
                                    const std::string& bearer = "");

class PromptCatalog {
public:
  static PromptCatalog builtin();

  // Reads <dir>/*.txt, template id = filename stem; overrides builtins.
  void load_dir(const std::string& dir);
  void set_template(const std::string& template_id, const std::string& text);
  bool has_template(const std::string& template_id) const;
  const std::string& template_text(const std::string& template_id) const;  // UnknownTemplate
  std::vector<std::string> template_ids() const;

  // Placeholders look like {name} where name is an identifier; anything else
  // (JSON braces and such) passes through. MissingBinding when a placeholder
  // has no binding; extra bindings are ignored.
  std::string render(const std::string& template_id,
                     const std::map<std::string, std::string>& bindings) const;

private:
  std::map<std::string, std::string> templates_;
};

class Gateway {
public:
  Gateway(PromptCatalog catalog, std::shared_ptr<ChatProvider> provider);

  const PromptCatalog& catalog() const { return catalog_; }
  ChatProvider& provider() { return *provider_; }

  std::string render(const std::string& template_id,
                     const std::map<std::string, std::string>& bindings) const;
  ChatResult complete(const std::vector<ChatMessage>& messages, const ChatParams& params = {});
  // Renders the template and sends it as a single user message.
  ChatResult ask(const std::string& template_id, const std::map<std::string, std::string>& bindings,
                 const ChatParams& params = {});

private:
  PromptCatalog catalog_;
  std::shared_ptr<ChatProvider> provider_;
};

}  // namespace heta::gateway
