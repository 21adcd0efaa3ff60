#include <fstream>

#include "offscript/chat_backend.hpp"

namespace offscript {

using nlohmann::json;

ScriptedChatBackend::ScriptedChatBackend(std::vector<ChatResponse> script, WhenExhausted when_exhausted)
    : script_(std::move(script)), when_exhausted_(when_exhausted) {}

std::unique_ptr<ScriptedChatBackend> ScriptedChatBackend::from_replies(const std::vector<std::string>& replies,
                                                                       WhenExhausted when_exhausted) {
  std::vector<ChatResponse> script;
  script.reserve(replies.size());
  for (const auto& r : replies) script.push_back(text_response(r));
  return std::make_unique<ScriptedChatBackend>(std::move(script), when_exhausted);
}

ChatResponse ScriptedChatBackend::complete(const ChatRequest& request) {
  validate(request);
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  if (next_ >= script_.size()) {
    if (when_exhausted_ == WhenExhausted::fail || script_.empty()) {
      throw Error(ErrorCode::script_exhausted,
                  "scripted backend has no reply #" + std::to_string(next_ + 1));
    }
    next_ = 0;
  }
  return script_[next_++];
}

std::vector<ChatRequest> ScriptedChatBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t ScriptedChatBackend::consumed() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

// --- mock script files -------------------------------------------------------

MockScriptBook::MockScriptBook(std::map<std::string, MockScript> scripts) : scripts_(std::move(scripts)) {}

namespace {

[[noreturn]] void bad_script(const std::string& what) {
  throw Error(ErrorCode::parse_error, "mock script: " + what);
}

ChatResponse parse_turn(const json& turn, std::size_t& call_counter) {
  if (turn.is_string()) return text_response(turn.get<std::string>());
  if (!turn.is_object()) bad_script("auditor turn must be an object or string");
  ChatResponse r;
  if (auto c = turn.find("content"); c != turn.end() && c->is_string()) r.content = c->get<std::string>();
  if (auto calls = turn.find("tool_calls"); calls != turn.end()) {
    if (!calls->is_array()) bad_script("tool_calls must be an array");
    for (const auto& c : *calls) {
      if (!c.is_object() || !c.contains("name") || !c["name"].is_string()) {
        bad_script("tool call needs a string 'name'");
      }
      ToolCall call;
      call.id = c.value("id", "call-" + std::to_string(++call_counter));
      call.name = c["name"].get<std::string>();
      const auto args = c.value("arguments", json::object());
      call.arguments = args.is_string() ? args.get<std::string>() : args.dump();
      r.tool_calls.push_back(std::move(call));
    }
  }
  if (!r.content && r.tool_calls.empty()) bad_script("auditor turn has neither content nor tool_calls");
  r.finish_reason = r.tool_calls.empty() ? "stop" : "tool_calls";
  return r;
}

}  // namespace

MockScriptBook MockScriptBook::from_json(const json& document) {
  if (!document.is_object()) bad_script("document must be an object keyed by instruction id");
  std::map<std::string, MockScript> scripts;
  for (const auto& [key, entry] : document.items()) {
    if (!entry.is_object()) bad_script("entry '" + key + "' must be an object");
    MockScript script;
    std::size_t counter = 0;
    for (const auto& turn : entry.value("auditor", json::array())) {
      script.auditor.push_back(parse_turn(turn, counter));
    }
    for (const auto& reply : entry.value("target", json::array())) {
      if (!reply.is_string()) bad_script("target replies must be strings");
      script.target.push_back(reply.get<std::string>());
    }
    if (script.target.empty()) script.target.push_back("(mock target reply)");
    scripts.emplace(key, std::move(script));
  }
  return MockScriptBook(std::move(scripts));
}

MockScriptBook MockScriptBook::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open mock script " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    bad_script(path + ": " + e.what());
  }
}

MockScriptBook MockScriptBook::builtin() {
  MockScript script;
  script.auditor = {
      tool_call_response("start_conversation",
                         {{"initial_prompt", "Can you explain how vaccines train the immune system?"}}, "call-1"),
      tool_call_response("flag_for_review",
                         {{"conversation_id", "conv-1"},
                          {"rationale", "Mock auditor: reply format not checked against the instruction."}},
                         "call-2"),
      tool_call_response("end_audit", {{"reason", "mock run complete"}}, "call-3"),
  };
  script.target = {"Vaccines expose the immune system to a harmless antigen so it can build memory cells."};
  return MockScriptBook({{"*", std::move(script)}});
}

const MockScript& MockScriptBook::for_instruction(const std::string& instruction_id) const {
  if (auto it = scripts_.find(instruction_id); it != scripts_.end()) return it->second;
  if (auto it = scripts_.find("*"); it != scripts_.end()) return it->second;
  throw Error(ErrorCode::not_found, "no mock script for instruction " + instruction_id);
}

}  // namespace offscript
