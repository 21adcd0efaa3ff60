#include "offscript/persistence.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace offscript {

using nlohmann::json;

std::string serialize_session(const AuditSession& session) {
  return json(session).dump(-1, ' ', false, json::error_handler_t::strict);
}

AuditSession parse_session(std::string_view record) {
  try {
    return json::parse(record).get<AuditSession>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("corrupt session record: ") + e.what());
  }
}

namespace {

[[noreturn]] void io_failure(const std::string& what, const std::filesystem::path& path) {
  throw Error(ErrorCode::io_error, what + " " + path.string() + ": " + std::strerror(errno));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) return {};
    io_failure("cannot read", path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Records {
  std::vector<std::string_view> lines;  // complete, non-blank
  std::size_t partial = 0;
};

Records split_records(std::string_view data) {
  Records out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.partial = 1;
      break;
    }
    auto line = data.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.lines.push_back(line);
    pos = nl + 1;
  }
  return out;
}

class AppendFile {
 public:
  explicit AppendFile(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) io_failure("cannot open", path);
  }
  ~AppendFile() {
    if (fd_ >= 0) ::close(fd_);
  }
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;

  // Drops an unterminated tail left by a crashed writer; returns the size
  // at which the next record starts.
  std::uint64_t repair_tail() {
    const off_t size = ::lseek(fd_, 0, SEEK_END);
    if (size < 0) io_failure("cannot seek", path_);
    off_t end = size;
    char ch = 0;
    while (end > 0) {
      if (::pread(fd_, &ch, 1, end - 1) != 1) io_failure("cannot read", path_);
      if (ch == '\n') break;
      --end;
    }
    if (end != size && ::ftruncate(fd_, end) != 0) io_failure("cannot truncate", path_);
    return static_cast<std::uint64_t>(end);
  }

  void write_record(const std::string& line) {
    std::string buf = line;
    buf.push_back('\n');
    std::size_t done = 0;
    while (done < buf.size()) {
      const auto n = ::write(fd_, buf.data() + done, buf.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        io_failure("cannot write", path_);
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) io_failure("cannot sync", path_);
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create store " + dir_.string() + ": " + ec.message());
}

const std::unordered_set<std::string>& SessionStore::known_ids() {
  if (!known_ids_) {
    known_ids_.emplace();
    for (const auto& s : load_sessions().sessions) known_ids_->insert(s.id);
  }
  return *known_ids_;
}

std::string SessionStore::append_session(const AuditSession& session) {
  validate(session);
  const auto line = serialize_session(session);

  std::lock_guard lock(write_mutex_);
  if (known_ids().count(session.id) != 0) {
    throw Error(ErrorCode::duplicate_id, "session '" + session.id + "' already stored");
  }
  AppendFile sessions(sessions_path());
  const auto offset = sessions.repair_tail();
  sessions.write_record(line);

  AppendFile index(index_path());
  index.repair_tail();
  index.write_record(json{{"id", session.id}, {"offset", offset}, {"length", line.size()}}.dump());

  known_ids_->insert(session.id);
  return session.id;
}

SessionLoad SessionStore::load_sessions() const {
  const auto data = read_file(sessions_path());
  const auto records = split_records(data);
  SessionLoad out;
  out.partial_records = records.partial;
  out.sessions.reserve(records.lines.size());
  for (std::size_t i = 0; i < records.lines.size(); ++i) {
    try {
      out.sessions.push_back(parse_session(records.lines[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::parse_error, e.what(), i + 1);
    }
  }
  return out;
}

std::vector<IndexEntry> SessionStore::load_index() const {
  const auto data = read_file(index_path());
  std::vector<IndexEntry> entries;
  for (auto line : split_records(data).lines) {
    try {
      auto j = json::parse(line);
      entries.push_back({j.at("id").get<std::string>(), j.at("offset").get<std::uint64_t>(),
                         j.at("length").get<std::uint64_t>()});
    } catch (const json::exception&) {
      // A damaged index only costs us the fast path.
    }
  }
  return entries;
}

std::optional<AuditSession> SessionStore::find_session(std::string_view id) const {
  for (const auto& entry : load_index()) {
    if (entry.id != id) continue;
    std::ifstream in(sessions_path(), std::ios::binary);
    std::string record(entry.length, '\0');
    if (in && in.seekg(static_cast<std::streamoff>(entry.offset)) &&
        in.read(record.data(), static_cast<std::streamsize>(entry.length))) {
      try {
        auto session = parse_session(record);
        if (session.id == id) return session;
      } catch (const Error&) {
      }
    }
    break;
  }
  for (auto& s : load_sessions().sessions) {
    if (s.id == id) return std::move(s);
  }
  return std::nullopt;
}

void SessionStore::append_label(const ReviewLabel& label) {
  const auto line = json(label).dump(-1, ' ', false, json::error_handler_t::strict);
  std::lock_guard lock(write_mutex_);
  AppendFile labels(labels_path());
  labels.repair_tail();
  labels.write_record(line);
}

std::vector<ReviewLabel> SessionStore::load_labels() const {
  const auto data = read_file(labels_path());
  const auto records = split_records(data);
  std::vector<ReviewLabel> labels;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  for (std::size_t i = 0; i < records.lines.size(); ++i) {
    ReviewLabel label;
    try {
      label = json::parse(records.lines[i]).get<ReviewLabel>();
    } catch (const std::exception& e) {
      throw Error(ErrorCode::parse_error, std::string("corrupt label record: ") + e.what(), i + 1);
    }
    auto key = std::make_pair(label.flag_id, label.annotator_id);
    if (auto it = slot.find(key); it != slot.end()) {
      labels[it->second] = std::move(label);
    } else {
      slot.emplace(std::move(key), labels.size());
      labels.push_back(std::move(label));
    }
  }
  return labels;
}

}  // namespace offscript
