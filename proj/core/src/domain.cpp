#include "offscript/domain.hpp"

#include <cstdio>
#include <unordered_set>

namespace offscript {

using nlohmann::json;

Timestamp now_utc() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()), static_cast<long>(hms.subseconds().count()));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, s = 0, ms = 0;
  char z = 0;
  const std::string owned(text);
  if (std::sscanf(owned.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d.%3d%c", &y, &mo, &d, &h, &mi, &s, &ms, &z) != 8 ||
      z != 'Z' || owned.size() != 24) {
    throw Error(ErrorCode::parse_error, "malformed timestamp '" + owned + "'");
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw Error(ErrorCode::parse_error, "timestamp out of range '" + owned + "'");
  }
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms};
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::presentation: return "presentation";
    case Category::epistemic: return "epistemic";
    case Category::roleplay: return "roleplay";
    case Category::jailbreak: return "jailbreak";
    case Category::other: return "other";
  }
  return "other";
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(ToolName t) {
  switch (t) {
    case ToolName::start_conversation: return "start_conversation";
    case ToolName::send_message: return "send_message";
    case ToolName::flag_for_review: return "flag_for_review";
    case ToolName::end_audit: return "end_audit";
    case ToolName::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Outcome o) { return o == Outcome::ok ? "ok" : "error"; }

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::auditor_ended: return "auditor_ended";
    case Termination::budget_exhausted: return "budget_exhausted";
    case Termination::backend_error: return "backend_error";
  }
  return "backend_error";
}

std::string_view to_string(Verdict v) { return v == Verdict::violation ? "violation" : "not_violation"; }

std::optional<Category> parse_category(std::string_view s) {
  for (auto c : {Category::presentation, Category::epistemic, Category::roleplay, Category::jailbreak,
                 Category::other}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<Role> parse_role(std::string_view s) {
  for (auto r : {Role::system, Role::user, Role::assistant}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

ToolName parse_tool_name(std::string_view s) {
  for (auto t : {ToolName::start_conversation, ToolName::send_message, ToolName::flag_for_review,
                 ToolName::end_audit}) {
    if (to_string(t) == s) return t;
  }
  return ToolName::unknown;
}

std::optional<Outcome> parse_outcome(std::string_view s) {
  if (s == "ok") return Outcome::ok;
  if (s == "error") return Outcome::error;
  return std::nullopt;
}

std::optional<Termination> parse_termination(std::string_view s) {
  for (auto t : {Termination::auditor_ended, Termination::budget_exhausted, Termination::backend_error}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "violation") return Verdict::violation;
  if (s == "not_violation") return Verdict::not_violation;
  return std::nullopt;
}

const Conversation* AuditSession::find_conversation(std::string_view conversation_id) const {
  for (const auto& c : conversations) {
    if (c.id == conversation_id) return &c;
  }
  return nullptr;
}

namespace {

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::validation_error, what); }

}  // namespace

void validate(const CustomInstruction& instruction) {
  if (instruction.id.empty()) invalid("instruction id is empty");
  if (is_blank(instruction.text)) invalid("instruction '" + instruction.id + "' has empty text");
}

void validate(const AuditConfig& config) {
  if (config.max_function_calls < 1) invalid("max_function_calls must be >= 1");
  if (config.sessions_per_instruction < 1) invalid("sessions_per_instruction must be >= 1");
  if (config.auditor_temperature && *config.auditor_temperature < 0) invalid("auditor temperature is negative");
  if (config.target_temperature && *config.target_temperature < 0) invalid("target temperature is negative");
}

bool has_valid_role_sequence(const Conversation& conversation) {
  const auto& msgs = conversation.messages;
  if (msgs.empty() || msgs[0].role != Role::system) return false;
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i].index != i) return false;
    if (i == 0) continue;
    const Role expected = (i % 2 == 1) ? Role::user : Role::assistant;
    if (msgs[i].role != expected) return false;
  }
  return true;
}

void validate(const AuditSession& session) {
  validate(session.instruction);
  validate(session.config);
  const auto calls = session.tool_calls.size();
  if (calls > static_cast<std::size_t>(session.config.max_function_calls)) {
    invalid("session " + session.id + " exceeds its function-call budget");
  }
  for (std::size_t i = 0; i < calls; ++i) {
    if (session.tool_calls[i].ordinal != static_cast<int>(i + 1)) {
      invalid("tool call ordinals are not consecutive from 1");
    }
  }
  bool any_end = false;
  for (const auto& c : session.tool_calls) any_end |= c.name == ToolName::end_audit;
  if (session.termination == Termination::auditor_ended &&
      (calls == 0 || session.tool_calls.back().name != ToolName::end_audit)) {
    invalid("auditor_ended session must finish with end_audit");
  }
  if (session.termination == Termination::budget_exhausted &&
      (calls != static_cast<std::size_t>(session.config.max_function_calls) || any_end)) {
    invalid("budget_exhausted session must use the full budget without end_audit");
  }
  std::unordered_set<std::string> ids;
  for (const auto& c : session.conversations) {
    if (!ids.insert(c.id).second) invalid("duplicate conversation id " + c.id);
    if (!has_valid_role_sequence(c)) invalid("conversation " + c.id + " breaks role alternation");
    if (c.messages[0].content.find(session.instruction.text) == std::string::npos) {
      invalid("conversation " + c.id + " system message lacks the instruction text");
    }
  }
  for (const auto& f : session.flags) {
    const auto* conv = session.find_conversation(f.conversation_id);
    if (conv == nullptr) invalid("flag " + f.id + " references unknown conversation " + f.conversation_id);
    if (f.message_index && *f.message_index >= conv->messages.size()) {
      invalid("flag " + f.id + " message_index out of range");
    }
  }
}

// --- JSON -------------------------------------------------------------------

namespace {

[[noreturn]] void bad_json(const std::string& what) { throw Error(ErrorCode::parse_error, what); }

const json& field(const json& j, const char* key) {
  if (!j.is_object()) bad_json(std::string("expected object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) bad_json(std::string("missing field '") + key + "'");
  return *it;
}

std::string str_field(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) bad_json(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<std::string> opt_str_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) bad_json(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<double> opt_num_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) bad_json(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

template <typename Int>
Int int_field(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer()) bad_json(std::string("field '") + key + "' must be an integer");
  return v.get<Int>();
}

template <typename Enum, typename Parser>
Enum enum_field(const json& j, const char* key, Parser parse) {
  const auto s = str_field(j, key);
  auto v = parse(s);
  if (!v) bad_json(std::string("field '") + key + "' has unknown value '" + s + "'");
  return *v;
}

template <typename T>
std::vector<T> array_field(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_array()) bad_json(std::string("field '") + key + "' must be an array");
  std::vector<T> out;
  out.reserve(v.size());
  for (const auto& item : v) out.push_back(item.get<T>());
  return out;
}

void put_opt(json& j, const char* key, const std::optional<std::string>& v) {
  if (v) j[key] = *v;
}

void put_opt(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

}  // namespace

void to_json(json& j, const CustomInstruction& v) {
  j = json{{"id", v.id}, {"text", v.text}, {"category", to_string(v.category)}};
  put_opt(j, "source", v.source);
}

void from_json(const json& j, CustomInstruction& v) {
  v.id = str_field(j, "id");
  v.text = str_field(j, "text");
  v.source = opt_str_field(j, "source");
  v.category = enum_field<Category>(j, "category", parse_category);
}

void to_json(json& j, const AuditConfig& v) {
  j = json{{"target_model", v.target_model},
           {"auditor_model", v.auditor_model},
           {"max_function_calls", v.max_function_calls},
           {"sessions_per_instruction", v.sessions_per_instruction}};
  put_opt(j, "steering_hints", v.steering_hints);
  put_opt(j, "auditor_temperature", v.auditor_temperature);
  put_opt(j, "target_temperature", v.target_temperature);
}

void from_json(const json& j, AuditConfig& v) {
  v.target_model = str_field(j, "target_model");
  v.auditor_model = str_field(j, "auditor_model");
  v.max_function_calls = int_field<int>(j, "max_function_calls");
  v.sessions_per_instruction = int_field<int>(j, "sessions_per_instruction");
  v.steering_hints = opt_str_field(j, "steering_hints");
  v.auditor_temperature = opt_num_field(j, "auditor_temperature");
  v.target_temperature = opt_num_field(j, "target_temperature");
}

void to_json(json& j, const Message& v) {
  j = json{{"role", to_string(v.role)}, {"content", v.content}, {"index", v.index}};
}

void from_json(const json& j, Message& v) {
  v.role = enum_field<Role>(j, "role", parse_role);
  v.content = str_field(j, "content");
  v.index = int_field<std::size_t>(j, "index");
}

void to_json(json& j, const Conversation& v) {
  j = json{{"id", v.id}, {"messages", v.messages}, {"open", v.open}};
}

void from_json(const json& j, Conversation& v) {
  v.id = str_field(j, "id");
  v.messages = array_field<Message>(j, "messages");
  const auto& open = field(j, "open");
  if (!open.is_boolean()) bad_json("field 'open' must be a boolean");
  v.open = open.get<bool>();
}

void to_json(json& j, const ToolCallRecord& v) {
  j = json{{"ordinal", v.ordinal},
           {"name", to_string(v.name)},
           {"arguments", v.arguments},
           {"outcome", to_string(v.outcome)},
           {"result", v.result}};
}

void from_json(const json& j, ToolCallRecord& v) {
  v.ordinal = int_field<int>(j, "ordinal");
  v.name = parse_tool_name(str_field(j, "name"));
  v.arguments = field(j, "arguments");
  v.outcome = enum_field<Outcome>(j, "outcome", parse_outcome);
  v.result = str_field(j, "result");
}

void to_json(json& j, const Flag& v) {
  j = json{{"id", v.id}, {"conversation_id", v.conversation_id}, {"rationale", v.rationale}};
  if (v.message_index) j["message_index"] = *v.message_index;
}

void from_json(const json& j, Flag& v) {
  v.id = str_field(j, "id");
  v.conversation_id = str_field(j, "conversation_id");
  v.rationale = str_field(j, "rationale");
  auto it = j.find("message_index");
  if (it != j.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) bad_json("field 'message_index' must be a non-negative integer");
    v.message_index = it->get<std::size_t>();
  } else {
    v.message_index.reset();
  }
}

void to_json(json& j, const AuditSession& v) {
  j = json{{"id", v.id},
           {"instruction", v.instruction},
           {"config", v.config},
           {"auditor_prompt", v.auditor_prompt},
           {"conversations", v.conversations},
           {"tool_calls", v.tool_calls},
           {"flags", v.flags},
           {"termination", to_string(v.termination)},
           {"started_at", format_timestamp(v.started_at)},
           {"ended_at", format_timestamp(v.ended_at)}};
  put_opt(j, "error", v.error);
}

void from_json(const json& j, AuditSession& v) {
  v.id = str_field(j, "id");
  v.instruction = field(j, "instruction").get<CustomInstruction>();
  v.config = field(j, "config").get<AuditConfig>();
  v.auditor_prompt = str_field(j, "auditor_prompt");
  v.conversations = array_field<Conversation>(j, "conversations");
  v.tool_calls = array_field<ToolCallRecord>(j, "tool_calls");
  v.flags = array_field<Flag>(j, "flags");
  v.termination = enum_field<Termination>(j, "termination", parse_termination);
  v.error = opt_str_field(j, "error");
  v.started_at = parse_timestamp(str_field(j, "started_at"));
  v.ended_at = parse_timestamp(str_field(j, "ended_at"));
}

void to_json(json& j, const ReviewLabel& v) {
  j = json{{"flag_id", v.flag_id},
           {"annotator_id", v.annotator_id},
           {"verdict", to_string(v.verdict)},
           {"created_at", format_timestamp(v.created_at)}};
  put_opt(j, "note", v.note);
}

void from_json(const json& j, ReviewLabel& v) {
  v.flag_id = str_field(j, "flag_id");
  v.annotator_id = str_field(j, "annotator_id");
  v.verdict = enum_field<Verdict>(j, "verdict", parse_verdict);
  v.note = opt_str_field(j, "note");
  v.created_at = parse_timestamp(str_field(j, "created_at"));
}

}  // namespace offscript
