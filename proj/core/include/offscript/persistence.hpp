#pragma once

// Append-only JSONL store for audit sessions and review labels.
//
// Layout of a store directory:
//   sessions.jsonl  one serialized AuditSession per line
//   sessions.idx    one {"id", "offset", "length"} entry per session record
//   labels.jsonl    one serialized ReviewLabel per line; later lines for the
//                   same (flag_id, annotator_id) supersede earlier ones
//
// A record is complete only once its terminating newline is on disk. A
// trailing record without one is a crash artifact: readers skip it and the
// writer discards it before its next append.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "offscript/domain.hpp"

namespace offscript {

std::string serialize_session(const AuditSession& session);  // one line, no newline
AuditSession parse_session(std::string_view record);

struct SessionLoad {
  std::vector<AuditSession> sessions;
  std::size_t partial_records = 0;  // truncated trailing records skipped
};

struct IndexEntry {
  std::string id;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

// Single writer per directory; readers may run concurrently with it.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path sessions_path() const { return dir_ / "sessions.jsonl"; }
  std::filesystem::path index_path() const { return dir_ / "sessions.idx"; }
  std::filesystem::path labels_path() const { return dir_ / "labels.jsonl"; }

  // Validates, then appends. Throws validation_error, duplicate_id, io_error.
  std::string append_session(const AuditSession& session);

  // Throws parse_error (record number as line) for corrupt complete records.
  SessionLoad load_sessions() const;
  std::optional<AuditSession> find_session(std::string_view id) const;
  std::vector<IndexEntry> load_index() const;

  void append_label(const ReviewLabel& label);
  // Effective labels after upsert, in order of first submission.
  std::vector<ReviewLabel> load_labels() const;

 private:
  const std::unordered_set<std::string>& known_ids();

  std::filesystem::path dir_;
  std::mutex write_mutex_;
  std::optional<std::unordered_set<std::string>> known_ids_;
};

// Human-readable transcript of one conversation: header with the instruction,
// models and termination, then every message with its role, flagged assistant
// messages followed by the auditor's rationale. Throws unknown_conversation.
std::string export_transcript(const AuditSession& session, std::string_view conversation_id);

}  // namespace offscript
