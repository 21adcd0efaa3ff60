#include "offscript/error.hpp"

namespace offscript {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::validation_error: return "validation_error";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::transport_error: return "transport_error";
    case ErrorCode::protocol_error: return "protocol_error";
    case ErrorCode::script_exhausted: return "script_exhausted";
    case ErrorCode::unknown_conversation: return "unknown_conversation";
    case ErrorCode::malformed_arguments: return "malformed_arguments";
    case ErrorCode::unknown_tool: return "unknown_tool";
    case ErrorCode::backend_error: return "backend_error";
    case ErrorCode::backend_unconfigured: return "backend_unconfigured";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::degenerate_marginals: return "degenerate_marginals";
    case ErrorCode::no_coannotated_items: return "no_coannotated_items";
    case ErrorCode::too_many_annotators: return "too_many_annotators";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::invalid_verdict: return "invalid_verdict";
    case ErrorCode::unknown_instruction: return "unknown_instruction";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

namespace {

std::string decorate(const std::string& message, std::optional<std::size_t> line) {
  if (!line) return message;
  return "line " + std::to_string(*line) + ": " + message;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(decorate(message, line)), code_(code), line_(line) {}

}  // namespace offscript
