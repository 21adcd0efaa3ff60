#include <cstdio>

#include "offscript/metrics.hpp"

namespace offscript {

using nlohmann::json;

namespace {

json rate_json(const Rate& r) {
  return {{"value", r.value()}, {"numerator", r.numerator}, {"denominator", r.denominator}};
}

Rate rate_from(const json& j) {
  return {j.at("numerator").get<std::size_t>(), j.at("denominator").get<std::size_t>()};
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

void put(json& j, const char* key, const std::optional<Rate>& v) {
  if (v) j[key] = rate_json(*v);
}

template <typename T>
std::optional<T> get(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

std::optional<Rate> get_rate(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return rate_from(*it);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(double fraction, int digits) { return fixed(fraction * 100.0, digits) + "%"; }

std::string rate_cell(const std::optional<Rate>& r) {
  if (!r) return "n/a";
  return percent(r->value(), 1) + " (" + std::to_string(r->numerator) + "/" + std::to_string(r->denominator) + ")";
}

template <typename T>
std::string count_cell(const std::optional<T>& v) {
  return v ? std::to_string(*v) : "n/a";
}

}  // namespace

json report_to_json(const ReportMetrics& m) {
  json j = json::object();
  put(j, "instructions", m.instructions);
  put(j, "sessions", m.sessions);
  put(j, "conversations", m.conversations);
  put(j, "flags", m.flags);
  put(j, "flag_rate_instructions", m.flag_rate_instructions);
  put(j, "flag_rate_conversations", m.flag_rate_conversations);
  put(j, "mean_conversations_per_instruction", m.mean_conversations_per_instruction);
  put(j, "coannotated_flags", m.coannotated_flags);
  put(j, "unanimous_violation_rate", m.unanimous_violation_rate);
  put(j, "any_annotator_rate", m.any_annotator_rate);
  if (!m.annotator_rates.empty()) {
    json rates = json::array();
    for (const auto& a : m.annotator_rates) {
      auto r = rate_json(a.rate);
      r["annotator_id"] = a.annotator_id;
      rates.push_back(std::move(r));
    }
    j["annotator_rates"] = std::move(rates);
  }
  put(j, "percent_agreement", m.percent_agreement);
  put(j, "kappa", m.kappa);
  j["notes"] = m.notes;
  return j;
}

ReportMetrics report_from_json(const json& j) {
  ReportMetrics m;
  try {
    m.instructions = get<std::size_t>(j, "instructions");
    m.sessions = get<std::size_t>(j, "sessions");
    m.conversations = get<std::size_t>(j, "conversations");
    m.flags = get<std::size_t>(j, "flags");
    m.flag_rate_instructions = get_rate(j, "flag_rate_instructions");
    m.flag_rate_conversations = get_rate(j, "flag_rate_conversations");
    m.mean_conversations_per_instruction = get<double>(j, "mean_conversations_per_instruction");
    m.coannotated_flags = get<std::size_t>(j, "coannotated_flags");
    m.unanimous_violation_rate = get_rate(j, "unanimous_violation_rate");
    m.any_annotator_rate = get_rate(j, "any_annotator_rate");
    if (auto it = j.find("annotator_rates"); it != j.end()) {
      for (const auto& a : *it) m.annotator_rates.push_back({a.at("annotator_id").get<std::string>(), rate_from(a)});
    }
    m.percent_agreement = get<double>(j, "percent_agreement");
    m.kappa = get<double>(j, "kappa");
    if (auto it = j.find("notes"); it != j.end()) m.notes = it->get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed report document: ") + e.what());
  }
  return m;
}

std::string build_report(const ReportMetrics& m, ReportFormat format) {
  if (format == ReportFormat::json) return report_to_json(m).dump(2) + "\n";

  std::string md = "# Audit report\n\n";

  md += "## Inter-rater reliability for flagged conversations\n\n";
  if (m.percent_agreement) {
    const auto& a = m.annotator_rates.at(0);
    const auto& b = m.annotator_rates.at(1);
    md += "| Cohen's Kappa (κ) | Percent Agreement | Annotator " + a.annotator_id + " | Annotator " + b.annotator_id +
          " |\n";
    md += "|---|---|---|---|\n";
    md += "| " + (m.kappa ? fixed(*m.kappa, 2) : std::string("n/a")) + " | " + percent(*m.percent_agreement, 0) +
          " | " + percent(a.rate.value(), 0) + " | " + percent(b.rate.value(), 0) + " |\n\n";
    md += "| Co-annotated flags | Unanimous violations | Violation per at least one annotator |\n";
    md += "|---|---|---|\n";
    md += "| " + count_cell(m.coannotated_flags) + " | " + rate_cell(m.unanimous_violation_rate) + " | " +
          rate_cell(m.any_annotator_rate) + " |\n\n";
  } else {
    md += "No flag has been labelled by both annotators yet.\n\n";
  }

  md += "## Audit volume\n\n";
  md += "| Instructions | Sessions | Conversations | Flags | Instructions flagged | Conversations flagged | "
        "Conversations per instruction |\n";
  md += "|---|---|---|---|---|---|---|\n";
  md += "| " + count_cell(m.instructions) + " | " + count_cell(m.sessions) + " | " + count_cell(m.conversations) +
        " | " + count_cell(m.flags) + " | " + rate_cell(m.flag_rate_instructions) + " | " +
        rate_cell(m.flag_rate_conversations) + " | " +
        (m.mean_conversations_per_instruction ? fixed(*m.mean_conversations_per_instruction, 2) : "n/a") + " |\n";

  if (!m.notes.empty()) {
    md += "\n## Notes\n\n";
    for (const auto& n : m.notes) md += "- " + n + "\n";
  }
  return md;
}

}  // namespace offscript
