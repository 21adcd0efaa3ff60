#include "offscript/chat_backend.hpp"

namespace offscript {

using nlohmann::json;

std::string_view to_string(ChatRole r) {
  switch (r) {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
    case ChatRole::tool: return "tool";
  }
  return "user";
}

std::optional<ChatRole> parse_chat_role(std::string_view s) {
  for (auto r : {ChatRole::system, ChatRole::user, ChatRole::assistant, ChatRole::tool}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

void validate(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw Error(ErrorCode::validation_error, "chat request has no messages");
  }
}

json serialize_request(const ChatRequest& request) {
  validate(request);
  json messages = json::array();
  for (const auto& m : request.messages) {
    json msg{{"role", to_string(m.role)}};
    msg["content"] = m.content ? json(*m.content) : json(nullptr);
    if (!m.tool_calls.empty()) {
      json calls = json::array();
      for (const auto& c : m.tool_calls) {
        calls.push_back({{"id", c.id},
                         {"type", "function"},
                         {"function", {{"name", c.name}, {"arguments", c.arguments}}}});
      }
      msg["tool_calls"] = std::move(calls);
    }
    if (m.tool_call_id) msg["tool_call_id"] = *m.tool_call_id;
    messages.push_back(std::move(msg));
  }

  json body{{"model", request.model}, {"messages", std::move(messages)}};
  if (!request.tools.empty()) {
    json tools = json::array();
    for (const auto& t : request.tools) {
      tools.push_back({{"type", "function"},
                       {"function",
                        {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    }
    body["tools"] = std::move(tools);
  }
  if (request.temperature) body["temperature"] = *request.temperature;
  return body;
}

namespace {

[[noreturn]] void protocol(const std::string& what) { throw Error(ErrorCode::protocol_error, what); }

std::string require_string(const json& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    protocol(std::string(where) + ": '" + key + "' missing or not a string");
  }
  return it->get<std::string>();
}

ToolCall parse_call(const json& c) {
  if (!c.is_object()) protocol("tool_calls entry is not an object");
  ToolCall call;
  if (auto id = c.find("id"); id != c.end() && id->is_string()) call.id = id->get<std::string>();
  auto fn = c.find("function");
  if (fn == c.end() || !fn->is_object()) protocol("tool call lacks a 'function' object");
  call.name = require_string(*fn, "name", "tool call function");
  auto args = fn->find("arguments");
  if (args == fn->end() || args->is_null()) {
    call.arguments = "";
  } else if (args->is_string()) {
    call.arguments = args->get<std::string>();
  } else if (args->is_object()) {
    // Some providers inline the object instead of a JSON-encoded string.
    call.arguments = args->dump();
  } else {
    protocol("tool call arguments must be a string");
  }
  return call;
}

}  // namespace

ChatRequest parse_request(const json& body) {
  ChatRequest req;
  try {
    req.model = body.at("model").get<std::string>();
    for (const auto& m : body.at("messages")) {
      ChatMessage msg;
      auto role = parse_chat_role(m.at("role").get<std::string>());
      if (!role) protocol("unknown message role");
      msg.role = *role;
      if (auto c = m.find("content"); c != m.end() && !c->is_null()) msg.content = c->get<std::string>();
      if (auto calls = m.find("tool_calls"); calls != m.end()) {
        for (const auto& c : *calls) msg.tool_calls.push_back(parse_call(c));
      }
      if (auto id = m.find("tool_call_id"); id != m.end()) msg.tool_call_id = id->get<std::string>();
      req.messages.push_back(std::move(msg));
    }
    if (auto tools = body.find("tools"); tools != body.end()) {
      for (const auto& t : *tools) {
        const auto& fn = t.at("function");
        ToolSchema schema;
        schema.name = fn.at("name").get<std::string>();
        if (auto d = fn.find("description"); d != fn.end()) schema.description = d->get<std::string>();
        if (auto p = fn.find("parameters"); p != fn.end()) schema.parameters = *p;
        req.tools.push_back(std::move(schema));
      }
    }
    if (auto t = body.find("temperature"); t != body.end() && !t->is_null()) req.temperature = t->get<double>();
  } catch (const json::exception& e) {
    protocol(std::string("malformed chat request: ") + e.what());
  }
  return req;
}

ChatResponse parse_tool_calls(std::string_view response_body) {
  json doc;
  try {
    doc = json::parse(response_body);
  } catch (const json::parse_error& e) {
    protocol(std::string("response body is not JSON: ") + e.what());
  }
  if (!doc.is_object()) protocol("response body is not an object");
  if (auto err = doc.find("error"); err != doc.end() && !err->is_null()) {
    protocol("provider returned an error: " + err->dump());
  }
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    protocol("response has no choices");
  }
  const auto& choice = (*choices)[0];
  if (!choice.is_object()) protocol("choices[0] is not an object");
  auto message = choice.find("message");
  if (message == choice.end() || !message->is_object()) protocol("choices[0].message missing");

  ChatResponse out;
  if (auto content = message->find("content"); content != message->end() && !content->is_null()) {
    if (!content->is_string()) protocol("message content is not a string");
    out.content = content->get<std::string>();
  }
  if (auto calls = message->find("tool_calls"); calls != message->end() && !calls->is_null()) {
    if (!calls->is_array()) protocol("message tool_calls is not an array");
    for (const auto& c : *calls) out.tool_calls.push_back(parse_call(c));
  }
  if (auto reason = choice.find("finish_reason"); reason != choice.end() && reason->is_string()) {
    out.finish_reason = reason->get<std::string>();
  }
  if (!out.content && out.tool_calls.empty()) protocol("message has neither content nor tool_calls");
  return out;
}

ChatResponse tool_call_response(std::string name, const json& arguments, std::string call_id) {
  ChatResponse r;
  r.tool_calls.push_back(
      {std::move(call_id), std::move(name), arguments.is_string() ? arguments.get<std::string>() : arguments.dump()});
  r.finish_reason = "tool_calls";
  return r;
}

ChatResponse text_response(std::string content) {
  ChatResponse r;
  r.content = std::move(content);
  r.finish_reason = "stop";
  return r;
}

}  // namespace offscript
