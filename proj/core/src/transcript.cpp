#include <cctype>

#include "offscript/persistence.hpp"

namespace offscript {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string export_transcript(const AuditSession& session, std::string_view conversation_id) {
  const auto* conv = session.find_conversation(conversation_id);
  if (conv == nullptr) {
    throw Error(ErrorCode::unknown_conversation, "no conversation '" + std::string(conversation_id) + "'");
  }

  std::string doc;
  doc += "# Audit transcript\n\n";
  doc += "Session: " + session.id + "\n";
  doc += "Conversation: " + conv->id + "\n";
  doc += "Instruction " + session.instruction.id + " (" + std::string(to_string(session.instruction.category)) +
         "):\n";
  doc += session.instruction.text + "\n";
  doc += "Target model: " + session.config.target_model + "\n";
  doc += "Auditor model: " + session.config.auditor_model + "\n";
  doc += "Termination: " + std::string(to_string(session.termination)) + "\n";

  std::vector<const Flag*> whole_conversation;
  for (const auto& f : session.flags) {
    if (f.conversation_id == conv->id && !f.message_index) whole_conversation.push_back(&f);
  }

  for (const auto& m : conv->messages) {
    doc += "\n[" + std::to_string(m.index) + "] " + upper(to_string(m.role)) + ":\n";
    doc += m.content + "\n";
    for (const auto& f : session.flags) {
      if (f.conversation_id == conv->id && f.message_index && *f.message_index == m.index) {
        doc += ">> FLAGGED " + f.id + ": " + f.rationale + "\n";
      }
    }
  }
  for (const auto* f : whole_conversation) {
    doc += "\n>> FLAGGED " + f->id + " (whole conversation): " + f->rationale + "\n";
  }
  return doc;
}

}  // namespace offscript
