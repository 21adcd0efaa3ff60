#pragma once

// Chat-completions backends. The HTTP backend speaks the OpenAI-compatible
// /chat/completions protocol with function calling; the scripted backend
// replays canned replies for deterministic runs.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "offscript/error.hpp"

namespace offscript {

enum class ChatRole { system, user, assistant, tool };

std::string_view to_string(ChatRole r);
std::optional<ChatRole> parse_chat_role(std::string_view s);

struct ToolCall {
  std::string id;
  std::string name;
  std::string arguments;  // raw argument text, byte-for-byte as received

  bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::optional<std::string> content;
  std::vector<ToolCall> tool_calls;      // assistant turns only
  std::optional<std::string> tool_call_id;  // tool turns only

  bool operator==(const ChatMessage&) const = default;
};

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters = nlohmann::json::object();

  bool operator==(const ToolSchema&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  std::vector<ToolSchema> tools;
  std::optional<double> temperature;

  bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
  std::optional<std::string> content;
  std::vector<ToolCall> tool_calls;
  std::string finish_reason;

  bool operator==(const ChatResponse&) const = default;
};

// Throws validation_error when messages are empty.
void validate(const ChatRequest& request);

// Request body for POST <base>/chat/completions.
nlohmann::json serialize_request(const ChatRequest& request);
ChatRequest parse_request(const nlohmann::json& body);

// Parses a complete chat-completions response document. Tool-call argument
// text is preserved exactly; parsing it is the caller's job. Throws
// protocol_error on malformed or ill-typed bodies.
ChatResponse parse_tool_calls(std::string_view response_body);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  // Next assistant turn for the request. Implementations must tolerate
  // concurrent calls.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};  // doubles per retry: 1s, 2s, 4s
  std::chrono::seconds request_timeout{60};
};

struct HttpBackendConfig {
  std::string base_url = "https://openrouter.ai/api/v1";
  std::string api_key;
  RetryPolicy retry;
  // Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

inline constexpr const char* kApiKeyEnv = "OFFSCRIPT_API_KEY";
inline constexpr const char* kBaseUrlEnv = "OFFSCRIPT_BASE_URL";

// Reads OFFSCRIPT_API_KEY / OFFSCRIPT_BASE_URL. Throws backend_unconfigured
// when the key is absent.
HttpBackendConfig http_config_from_environment();

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  ~HttpChatBackend() override;

  ChatResponse complete(const ChatRequest& request) override;

  // HTTP attempts made so far, retries included.
  std::size_t total_attempts() const { return attempts_.load(); }

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::atomic<std::size_t> attempts_{0};
};

// Replays a fixed list of responses in order. Requests are recorded so tests
// can inspect what the engine sent.
class ScriptedChatBackend final : public ChatBackend {
 public:
  enum class WhenExhausted { fail, cycle };

  explicit ScriptedChatBackend(std::vector<ChatResponse> script,
                               WhenExhausted when_exhausted = WhenExhausted::fail);

  // Plain assistant text replies (a typical target-model script).
  static std::unique_ptr<ScriptedChatBackend> from_replies(
      const std::vector<std::string>& replies, WhenExhausted when_exhausted = WhenExhausted::fail);

  ChatResponse complete(const ChatRequest& request) override;

  std::vector<ChatRequest> requests() const;
  std::size_t consumed() const;

 private:
  std::vector<ChatResponse> script_;
  WhenExhausted when_exhausted_;
  mutable std::mutex mutex_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> requests_;
};

// Convenience for building scripted auditor turns.
ChatResponse tool_call_response(std::string name, const nlohmann::json& arguments,
                                std::string call_id = {});
ChatResponse text_response(std::string content);

// Mock scripts keyed by instruction id, with "*" as the fallback entry.
//
//   {"<instruction id>": {"auditor": [<turn>, ...], "target": ["reply", ...]}}
//
// An auditor turn is {"content": "...", "tool_calls": [{"name": ..,
// "arguments": {..} | "raw text"}]}. Target replies cycle when exhausted.
struct MockScript {
  std::vector<ChatResponse> auditor;
  std::vector<std::string> target;
};

class MockScriptBook {
 public:
  MockScriptBook() = default;
  explicit MockScriptBook(std::map<std::string, MockScript> scripts);

  static MockScriptBook from_json(const nlohmann::json& document);
  static MockScriptBook load(const std::string& path);
  // start_conversation -> flag_for_review -> end_audit for every instruction.
  static MockScriptBook builtin();

  const MockScript& for_instruction(const std::string& instruction_id) const;

 private:
  std::map<std::string, MockScript> scripts_;
};

}  // namespace offscript
