#pragma once

// The audit loop. An auditor model drives conversations with the target model
// through four tools (start_conversation, send_message, flag_for_review,
// end_audit) until it ends the audit or spends its function-call budget.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "offscript/chat_backend.hpp"
#include "offscript/domain.hpp"

namespace offscript {

// Declarations of the four auditor tools, in a fixed order.
std::vector<ToolSchema> auditor_tool_schemas();

// System prompt handed to the auditor. Contains the instruction verbatim, the
// tool descriptions, the budget, and any steering hints as the final section.
std::string build_auditor_prompt(const CustomInstruction& instruction, const AuditConfig& config);

// Sent to the auditor when it answers with plain text instead of a tool call.
extern const char* const kToolNudge;

struct EngineOptions {
  std::string session_id;  // random when empty
  std::function<Timestamp()> clock = now_utc;
  int max_consecutive_plain_replies = 3;
};

std::string random_session_id();

// One audit session. Not thread-safe; run separate engines concurrently.
class AuditEngine {
 public:
  AuditEngine(CustomInstruction instruction, AuditConfig config, ChatBackend& auditor, ChatBackend& target,
              EngineOptions options = {});

  // Runs the loop to completion. Backend failures end the session with
  // termination=backend_error rather than throwing.
  AuditSession run();

  // Executes one auditor tool call against the session state and records it.
  // Argument and id errors come back as error outcomes; a target-model
  // failure is recorded and then rethrown as backend_error.
  const ToolCallRecord& dispatch(const ToolCall& call);

  const AuditSession& session() const { return session_; }
  const std::vector<ChatMessage>& auditor_context() const { return auditor_context_; }
  int calls_used() const { return static_cast<int>(session_.tool_calls.size()); }
  bool end_requested() const { return end_requested_; }

 private:
  std::string start_conversation(const nlohmann::json& args);
  std::string send_message(const nlohmann::json& args);
  std::string flag_for_review(const nlohmann::json& args);
  std::string end_audit(const nlohmann::json& args);

  std::string ask_target(Conversation& conversation);
  Conversation* find_conversation(const std::string& id);
  void finish(Termination termination, std::optional<std::string> error = std::nullopt);

  AuditSession session_;
  ChatBackend& auditor_;
  ChatBackend& target_;
  EngineOptions options_;
  std::vector<ChatMessage> auditor_context_;
  bool end_requested_ = false;
  std::size_t next_conversation_ = 1;
  std::size_t next_call_id_ = 1;
};

AuditSession run_audit(const CustomInstruction& instruction, const AuditConfig& config, ChatBackend& auditor,
                       ChatBackend& target, EngineOptions options = {});

// config.sessions_per_instruction independent sessions, each with fresh state.
// `id_for(k)` names session k (0-based); random ids when null.
std::vector<AuditSession> run_audits(const CustomInstruction& instruction, const AuditConfig& config,
                                     ChatBackend& auditor, ChatBackend& target,
                                     const std::function<std::string(int)>& id_for = nullptr,
                                     const std::function<Timestamp()>& clock = now_utc);

}  // namespace offscript
