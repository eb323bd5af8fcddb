#include "p2c/judgment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "p2c/error.hpp"

namespace p2c {
namespace {

using json = nlohmann::json;

std::string string_field(const json& j, const char* key, bool allow_empty = false) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    fail(ErrorCode::kInvalidInput, std::string("judgment: '") + key + "' must be a string");
  }
  auto s = j.at(key).get<std::string>();
  if (!allow_empty && s.empty()) fail(ErrorCode::kInvalidInput, std::string("judgment: '") + key + "' is empty");
  return s;
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCode::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      fail(ErrorCode::kIo, "write to " + path.string() + " failed: " + std::strerror(err));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    fail(ErrorCode::kIo, "fsync of " + path.string() + " failed: " + std::strerror(err));
  }
  ::close(fd);
}

}  // namespace

std::string_view to_string(Decision d) { return d == Decision::kAccept ? "accept" : "reject"; }

Decision parse_decision(std::string_view text) {
  if (text == "accept") return Decision::kAccept;
  if (text == "reject") return Decision::kReject;
  fail(ErrorCode::kInvalidInput, "unknown decision '" + std::string(text) + "'");
}

json JudgmentRecord::to_json() const {
  return json{{"id", id},
              {"policy_text", policy_text},
              {"snippet_id", snippet_id},
              {"facet", std::string(p2c::to_string(facet))},
              {"model_tag", model_tag},
              {"decision", std::string(p2c::to_string(decision))},
              {"timestamp", timestamp},
              {"reviewer", reviewer}};
}

JudgmentRecord JudgmentRecord::from_json(const json& j) {
  require(j.is_object(), "judgment must be a JSON object");
  JudgmentRecord r;
  r.id = string_field(j, "id");
  r.policy_text = string_field(j, "policy_text");
  r.snippet_id = string_field(j, "snippet_id");
  r.facet = parse_facet(string_field(j, "facet"));
  r.model_tag = string_field(j, "model_tag");
  r.decision = parse_decision(string_field(j, "decision"));
  if (!j.contains("timestamp") || !j.at("timestamp").is_number_integer()) {
    fail(ErrorCode::kInvalidInput, "judgment: 'timestamp' must be an integer (UTC seconds)");
  }
  r.timestamp = j.at("timestamp").get<std::int64_t>();
  r.reviewer = j.contains("reviewer") ? string_field(j, "reviewer", true) : std::string{};
  return r;
}

JudgmentStore::JudgmentStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const bool terminated = end != std::string::npos;
    const std::string line = text.substr(pos, terminated ? end - pos : std::string::npos);
    ++line_no;
    JudgmentRecord r;
    try {
      if (line.empty()) {
        pos = terminated ? end + 1 : text.size();
        continue;
      }
      r = JudgmentRecord::from_json(json::parse(line));
      if (!terminated) throw std::runtime_error("unterminated line");
    } catch (const std::exception& e) {
      if (!terminated || end + 1 == text.size()) {
        std::filesystem::resize_file(path_, pos);
        break;
      }
      fail(ErrorCode::kInvalidInput, path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    pos = end + 1;
    if (by_id_.contains(r.id)) continue;
    by_id_.emplace(r.id, records_.size());
    records_.push_back(std::move(r));
  }
}

JudgmentStore::RecordResult JudgmentStore::record(const JudgmentRecord& r) {
  std::lock_guard lock(mutex_);
  if (const auto it = by_id_.find(r.id); it != by_id_.end()) {
    if (records_[it->second] == r) return {r.id, false};
    fail(ErrorCode::kConflict, "judgment '" + r.id + "' already recorded with a different payload");
  }
  append_line(path_, r.to_json().dump() + "\n");
  by_id_.emplace(r.id, records_.size());
  records_.push_back(r);
  return {r.id, true};
}

std::vector<JudgmentRecord> JudgmentStore::all() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::vector<JudgmentRecord> JudgmentStore::for_tag(std::string_view model_tag) const {
  std::lock_guard lock(mutex_);
  std::vector<JudgmentRecord> out;
  for (const auto& r : records_) {
    if (r.model_tag == model_tag) out.push_back(r);
  }
  return out;
}

std::size_t JudgmentStore::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

}  // namespace p2c
