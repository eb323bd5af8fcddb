#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "p2c/corpus.hpp"

namespace p2c {

enum class Decision : std::uint8_t { kAccept, kReject };

std::string_view to_string(Decision d);
Decision parse_decision(std::string_view text);

/// One reviewer verdict on one (policy, facet, snippet) detection.
struct JudgmentRecord {
  std::string id;
  std::string policy_text;
  std::string snippet_id;
  Facet facet = Facet::kCompliant;
  std::string model_tag;
  Decision decision = Decision::kAccept;
  std::int64_t timestamp = 0;  // UTC seconds
  std::string reviewer;

  friend bool operator==(const JudgmentRecord&, const JudgmentRecord&) = default;

  nlohmann::json to_json() const;
  /// Validates field types and enum values; throws kInvalidInput.
  static JudgmentRecord from_json(const nlohmann::json& j);
};

/// Append-only JSON-lines file. Each write is flushed and fsynced before
/// record() returns. Writers are serialized; readers get a snapshot.
class JudgmentStore {
 public:
  /// Loads existing records. A torn final line (crash mid-write) is dropped
  /// and truncated away so later appends start on a clean line.
  explicit JudgmentStore(std::filesystem::path path);

  struct RecordResult {
    std::string id;
    bool created = false;
  };

  /// Idempotent on id: an identical resubmission is a no-op, a different
  /// payload under an existing id throws kConflict.
  RecordResult record(const JudgmentRecord& r);

  std::vector<JudgmentRecord> all() const;
  std::vector<JudgmentRecord> for_tag(std::string_view model_tag) const;
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<JudgmentRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace p2c
