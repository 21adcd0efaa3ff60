#pragma once

// Core data model: instructions, audit configuration, conversations with the
// target model, the auditor's tool-call log, flags and review labels.
//
// All types are plain values. JSON conversion follows nlohmann's ADL
// convention; parsing is strict and reports problems as Error{parse_error}.

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "offscript/error.hpp"

namespace offscript {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now_utc();
std::string format_timestamp(Timestamp t);  // 2026-10-16T09:59:00.123Z
Timestamp parse_timestamp(std::string_view text);

enum class Category { presentation, epistemic, roleplay, jailbreak, other };
enum class Role { system, user, assistant };
enum class ToolName { start_conversation, send_message, flag_for_review, end_audit, unknown };
enum class Outcome { ok, error };
enum class Termination { auditor_ended, budget_exhausted, backend_error };
enum class Verdict { violation, not_violation };

std::string_view to_string(Category c);
std::string_view to_string(Role r);
std::string_view to_string(ToolName t);
std::string_view to_string(Outcome o);
std::string_view to_string(Termination t);
std::string_view to_string(Verdict v);

std::optional<Category> parse_category(std::string_view s);
std::optional<Role> parse_role(std::string_view s);
ToolName parse_tool_name(std::string_view s);  // unknown for anything else
std::optional<Outcome> parse_outcome(std::string_view s);
std::optional<Termination> parse_termination(std::string_view s);
std::optional<Verdict> parse_verdict(std::string_view s);

struct CustomInstruction {
  std::string id;
  std::string text;
  std::optional<std::string> source;
  Category category = Category::other;

  bool operator==(const CustomInstruction&) const = default;
};

struct AuditConfig {
  std::string target_model;
  std::string auditor_model;
  int max_function_calls = 20;
  int sessions_per_instruction = 1;
  std::optional<std::string> steering_hints;
  std::optional<double> auditor_temperature;
  std::optional<double> target_temperature;

  bool operator==(const AuditConfig&) const = default;
};

struct Message {
  Role role = Role::user;
  std::string content;
  std::size_t index = 0;

  bool operator==(const Message&) const = default;
};

struct Conversation {
  std::string id;
  std::vector<Message> messages;
  bool open = true;

  bool operator==(const Conversation&) const = default;
};

struct ToolCallRecord {
  int ordinal = 0;
  ToolName name = ToolName::unknown;
  // Parsed argument object, or the raw argument text as a JSON string when
  // it did not parse.
  nlohmann::json arguments = nlohmann::json::object();
  Outcome outcome = Outcome::ok;
  std::string result;

  bool operator==(const ToolCallRecord&) const = default;
};

struct Flag {
  std::string id;
  std::string conversation_id;
  std::optional<std::size_t> message_index;
  std::string rationale;

  bool operator==(const Flag&) const = default;
};

struct AuditSession {
  std::string id;
  CustomInstruction instruction;
  AuditConfig config;
  std::string auditor_prompt;
  std::vector<Conversation> conversations;
  std::vector<ToolCallRecord> tool_calls;
  std::vector<Flag> flags;
  Termination termination = Termination::auditor_ended;
  std::optional<std::string> error;
  Timestamp started_at{};
  Timestamp ended_at{};

  const Conversation* find_conversation(std::string_view conversation_id) const;

  bool operator==(const AuditSession&) const = default;
};

struct ReviewLabel {
  std::string flag_id;
  std::string annotator_id;
  Verdict verdict = Verdict::not_violation;
  std::optional<std::string> note;
  Timestamp created_at{};

  bool operator==(const ReviewLabel&) const = default;
};

// Validation. Each throws Error{validation_error} naming the broken invariant.
void validate(const CustomInstruction& instruction);
void validate(const AuditConfig& config);
void validate(const AuditSession& session);

// system first, then user/assistant strictly alternating, index == position.
bool has_valid_role_sequence(const Conversation& conversation);

void to_json(nlohmann::json& j, const CustomInstruction& v);
void from_json(const nlohmann::json& j, CustomInstruction& v);
void to_json(nlohmann::json& j, const AuditConfig& v);
void from_json(const nlohmann::json& j, AuditConfig& v);
void to_json(nlohmann::json& j, const Message& v);
void from_json(const nlohmann::json& j, Message& v);
void to_json(nlohmann::json& j, const Conversation& v);
void from_json(const nlohmann::json& j, Conversation& v);
void to_json(nlohmann::json& j, const ToolCallRecord& v);
void from_json(const nlohmann::json& j, ToolCallRecord& v);
void to_json(nlohmann::json& j, const Flag& v);
void from_json(const nlohmann::json& j, Flag& v);
void to_json(nlohmann::json& j, const AuditSession& v);
void from_json(const nlohmann::json& j, AuditSession& v);
void to_json(nlohmann::json& j, const ReviewLabel& v);
void from_json(const nlohmann::json& j, ReviewLabel& v);

}  // namespace offscript
