#pragma once

// Custom-instruction datasets: one JSON object per line,
//   {"id": "...", "text": "...", "source": "...", "category": "presentation"}

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <vector>

#include "offscript/domain.hpp"

namespace offscript {

// Errors: io_error, parse_error(line), validation_error(line), duplicate_id.
// Blank lines are skipped; line numbers are 1-based.
std::vector<CustomInstruction> load_instructions(const std::filesystem::path& path);
std::vector<CustomInstruction> parse_instructions(std::istream& in);

struct FilterReport {
  std::size_t kept = 0;
  std::map<Category, std::size_t> dropped;  // only excluded categories appear

  std::size_t dropped_total() const;
};

struct FilterResult {
  std::vector<CustomInstruction> instructions;
  FilterReport report;
};

// Information-seeking instructions only: presentation and epistemic rows are
// kept in input order, roleplay/jailbreak/other are dropped.
bool is_retained(Category category);
FilterResult filter_instructions(const std::vector<CustomInstruction>& rows);

}  // namespace offscript
