#pragma once

#include <cstddef>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace p2c {

using TokenId = std::int32_t;

// Reserved ids occupy the front of every vocabulary and are never produced by
// a merge.
namespace reserved {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kFacetCompliant = 3;
inline constexpr TokenId kFacetNoncompliant = 4;
inline constexpr TokenId kCount = 5;
}  // namespace reserved

inline constexpr std::size_t kDefaultMaxSeqLen = 128;

/// Splits text into the chunks BPE operates on. A chunk is a whitespace run,
/// a run of ASCII letters/digits (or non-ASCII bytes), or a run of other
/// punctuation; a single space directly before a word or punctuation run is
/// attached to it. Concatenating the chunks reproduces the input exactly.
std::vector<std::string_view> pretokenize(std::string_view text);

/// Byte-level BPE vocabulary. Immutable once trained or loaded.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary() = default;

  /// Learns merges over `texts` until the vocabulary holds `vocab_size`
  /// entries or no adjacent pair remains. Merge ties go to the
  /// lexicographically smaller (left, right) pair.
  static Vocabulary train(std::span<const std::string> texts, std::size_t vocab_size);

  std::vector<TokenId> tokenize(std::string_view text,
                                std::size_t max_len = kDefaultMaxSeqLen) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::vector<unsigned char>& alphabet() const { return alphabet_; }
  const std::string& token(TokenId id) const;
  /// Returns reserved::kUnk for strings outside the vocabulary.
  TokenId id_of(std::string_view token) const;

  /// Hex digest over the alphabet and merge list; models record it so a
  /// mismatched vocabulary is detected at load time.
  std::string hash() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<TokenId, TokenId>& p) const noexcept {
      return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 32) ^
                                        static_cast<std::uint32_t>(p.second));
    }
  };
  struct MergeRule {
    std::size_t rank;
    TokenId result;
  };

  static Vocabulary build(std::vector<unsigned char> alphabet, std::vector<Merge> merges);
  TokenId intern(const std::string& token);

  std::vector<unsigned char> alphabet_;
  std::vector<Merge> merges_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::array<TokenId, 256> byte_ids_{};
  std::unordered_map<std::pair<TokenId, TokenId>, MergeRule, PairHash> rules_;
};

inline Vocabulary train_bpe(std::span<const std::string> texts, std::size_t vocab_size) {
  return Vocabulary::train(texts, vocab_size);
}

inline std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab,
                                     std::size_t max_len = kDefaultMaxSeqLen) {
  return vocab.tokenize(text, max_len);
}

}  // namespace p2c
