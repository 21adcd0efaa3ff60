#include "offscript/dataset.hpp"

#include <fstream>
#include <string>
#include <unordered_map>

namespace offscript {

using nlohmann::json;

std::vector<CustomInstruction> parse_instructions(std::istream& in) {
  std::vector<CustomInstruction> rows;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse_error, e.what(), line_no);
    }
    if (!doc.is_object()) throw Error(ErrorCode::parse_error, "row is not a JSON object", line_no);

    CustomInstruction row;
    try {
      row = doc.get<CustomInstruction>();
      validate(row);
    } catch (const Error& e) {
      throw Error(ErrorCode::validation_error, e.what(), line_no);
    }

    auto [it, inserted] = first_seen.emplace(row.id, line_no);
    if (!inserted) {
      throw Error(ErrorCode::duplicate_id,
                  "duplicate id '" + row.id + "' (first seen on line " + std::to_string(it->second) + ")", line_no);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CustomInstruction> load_instructions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open instructions file " + path.string());
  return parse_instructions(in);
}

std::size_t FilterReport::dropped_total() const {
  std::size_t total = 0;
  for (const auto& [_, n] : dropped) total += n;
  return total;
}

bool is_retained(Category category) {
  return category == Category::presentation || category == Category::epistemic;
}

FilterResult filter_instructions(const std::vector<CustomInstruction>& rows) {
  FilterResult result;
  for (const auto& row : rows) {
    if (is_retained(row.category)) {
      result.instructions.push_back(row);
      ++result.report.kept;
    } else {
      ++result.report.dropped[row.category];
    }
  }
  return result;
}

}  // namespace offscript
