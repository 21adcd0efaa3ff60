#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace offscript {

enum class ErrorCode {
  io_error,
  parse_error,
  validation_error,
  duplicate_id,
  transport_error,
  protocol_error,
  script_exhausted,
  unknown_conversation,
  malformed_arguments,
  unknown_tool,
  backend_error,
  backend_unconfigured,
  empty_input,
  degenerate_marginals,
  no_coannotated_items,
  too_many_annotators,
  not_found,
  invalid_verdict,
  unknown_instruction,
  usage,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library. `line()` is set for errors tied to a
// position in a line-oriented input (dataset rows, store records).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace offscript
