#include "p2c/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "p2c/digest.hpp"
#include "p2c/error.hpp"

namespace p2c {
namespace {

constexpr int kVocabFormat = 1;

const std::array<std::string, reserved::kCount> kReservedNames = {
    "[PAD]", "[UNK]", "[SEP]", "[FACET+]", "[FACET-]"};

enum class CharClass { kSpace, kWord, kPunct };

CharClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return CharClass::kSpace;
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80) {
    return CharClass::kWord;
  }
  return CharClass::kPunct;
}

nlohmann::json token_to_json(const std::string& token) {
  if (is_valid_utf8(token)) return token;
  auto bytes = nlohmann::json::array();
  for (unsigned char c : token) bytes.push_back(static_cast<int>(c));
  return bytes;
}

std::string token_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  require(j.is_array(), "vocab: merge token must be a string or byte array");
  std::string out;
  for (const auto& b : j) {
    const int v = b.get<int>();
    require(v >= 0 && v < 256, "vocab: byte value out of range");
    out.push_back(static_cast<char>(v));
  }
  return out;
}

// Replaces every non-overlapping (left, right) occurrence, scanning left to
// right. Shared by training and tokenization so both segment identically.
void apply_merge(std::vector<TokenId>& symbols, TokenId left, TokenId right, TokenId result) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      symbols[out++] = result;
      i += 2;
    } else {
      symbols[out++] = symbols[i++];
    }
  }
  symbols.resize(out);
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const CharClass cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == CharClass::kSpace) {
      while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == CharClass::kSpace) ++i;
      // Leave a trailing single ' ' for the following non-space chunk.
      if (i < text.size() && text[i - 1] == ' ') {
        if (i - 1 > start) chunks.push_back(text.substr(start, i - 1 - start));
        const std::size_t word_start = i - 1;
        const CharClass next = classify(static_cast<unsigned char>(text[i]));
        while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == next) ++i;
        chunks.push_back(text.substr(word_start, i - word_start));
      } else {
        chunks.push_back(text.substr(start, i - start));
      }
      continue;
    }
    while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == cls) ++i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

TokenId Vocabulary::intern(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

Vocabulary Vocabulary::build(std::vector<unsigned char> alphabet, std::vector<Merge> merges) {
  Vocabulary v;
  v.tokens_.assign(kReservedNames.begin(), kReservedNames.end());
  v.byte_ids_.fill(reserved::kUnk);
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  for (unsigned char c : alphabet) v.byte_ids_[c] = v.intern(std::string(1, static_cast<char>(c)));
  for (std::size_t rank = 0; rank < merges.size(); ++rank) {
    const auto& [l, r] = merges[rank];
    const auto lit = v.ids_.find(l);
    const auto rit = v.ids_.find(r);
    require(lit != v.ids_.end() && rit != v.ids_.end(),
            "vocab: merge " + std::to_string(rank) + " references an unknown token");
    const TokenId result = v.intern(l + r);
    v.rules_.try_emplace({lit->second, rit->second}, MergeRule{rank, result});
  }
  v.alphabet_ = std::move(alphabet);
  v.merges_ = std::move(merges);
  return v;
}

Vocabulary Vocabulary::train(std::span<const std::string> texts, std::size_t vocab_size) {
  std::map<std::string, long long> word_counts;
  std::set<unsigned char> alphabet;
  for (const auto& text : texts) {
    for (auto chunk : pretokenize(text)) {
      ++word_counts[std::string(chunk)];
      for (unsigned char c : chunk) alphabet.insert(c);
    }
  }
  if (word_counts.empty()) fail(ErrorCode::kInvalidInput, "train_bpe: empty corpus");
  if (vocab_size <= alphabet.size() + reserved::kCount) {
    fail(ErrorCode::kInvalidInput,
         "train_bpe: vocab_size " + std::to_string(vocab_size) + " must exceed " +
             std::to_string(alphabet.size()) + " distinct bytes + " +
             std::to_string(reserved::kCount) + " reserved tokens");
  }

  Vocabulary v = build({alphabet.begin(), alphabet.end()}, {});
  std::vector<std::pair<std::vector<TokenId>, long long>> words;
  words.reserve(word_counts.size());
  for (const auto& [word, count] : word_counts) {
    std::vector<TokenId> symbols;
    symbols.reserve(word.size());
    for (unsigned char c : word) symbols.push_back(v.byte_ids_[c]);
    words.emplace_back(std::move(symbols), count);
  }

  std::unordered_map<std::pair<TokenId, TokenId>, long long, PairHash> pair_counts;
  while (v.tokens_.size() < vocab_size) {
    pair_counts.clear();
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pair_counts[{symbols[i], symbols[i + 1]}] += count;
    }
    if (pair_counts.empty()) break;

    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) {
        best = it;
      } else if (it->second == best->second) {
        const auto key = [&](const auto& p) {
          return std::tie(v.tokens_[p.first.first], v.tokens_[p.first.second]);
        };
        if (key(*it) < key(*best)) best = it;
      }
    }
    const auto [left, right] = best->first;
    Merge merge{v.tokens_[left], v.tokens_[right]};
    const TokenId result = v.intern(merge.first + merge.second);
    v.rules_.try_emplace({left, right}, MergeRule{v.merges_.size(), result});
    v.merges_.push_back(std::move(merge));
    for (auto& [symbols, count] : words) apply_merge(symbols, left, right, result);
  }
  return v;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text, std::size_t max_len) const {
  std::vector<TokenId> out;
  std::vector<TokenId> symbols;
  for (auto chunk : pretokenize(text)) {
    if (out.size() >= max_len) break;
    symbols.clear();
    for (unsigned char c : chunk) symbols.push_back(byte_ids_[c]);
    while (symbols.size() > 1) {
      const MergeRule* best = nullptr;
      std::pair<TokenId, TokenId> best_pair{};
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = rules_.find({symbols[i], symbols[i + 1]});
        if (it != rules_.end() && (best == nullptr || it->second.rank < best->rank)) {
          best = &it->second;
          best_pair = it->first;
        }
      }
      if (best == nullptr) break;
      apply_merge(symbols, best_pair.first, best_pair.second, best->result);
    }
    for (TokenId id : symbols) {
      if (out.size() >= max_len) break;
      out.push_back(id);
    }
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < reserved::kCount) continue;
    out += token(id);
  }
  return out;
}

const std::string& Vocabulary::token(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(),
          "vocab: token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? reserved::kUnk : it->second;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["format"] = kVocabFormat;
  auto reserved_map = nlohmann::json::object();
  for (std::size_t i = 0; i < kReservedNames.size(); ++i) reserved_map[kReservedNames[i]] = i;
  j["reserved"] = reserved_map;
  auto alpha = nlohmann::json::array();
  for (unsigned char c : alphabet_) alpha.push_back(static_cast<int>(c));
  j["alphabet"] = alpha;
  auto merges = nlohmann::json::array();
  for (const auto& [l, r] : merges_) merges.push_back({token_to_json(l), token_to_json(r)});
  j["merges"] = merges;
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  require(j.is_object() && j.value("format", 0) == kVocabFormat, "vocab: unsupported format");
  for (std::size_t i = 0; i < kReservedNames.size(); ++i) {
    require(j.at("reserved").value(kReservedNames[i], -1) == static_cast<int>(i),
            "vocab: reserved id table does not match " + kReservedNames[i]);
  }
  std::vector<unsigned char> alphabet;
  for (const auto& b : j.at("alphabet")) {
    const int v = b.get<int>();
    require(v >= 0 && v < 256, "vocab: alphabet byte out of range");
    alphabet.push_back(static_cast<unsigned char>(v));
  }
  std::vector<Merge> merges;
  for (const auto& m : j.at("merges")) {
    require(m.is_array() && m.size() == 2, "vocab: each merge must be a pair");
    merges.emplace_back(token_from_json(m[0]), token_from_json(m[1]));
  }
  return build(std::move(alphabet), std::move(merges));
}

std::string Vocabulary::hash() const {
  nlohmann::json j{{"alphabet", to_json()["alphabet"]}, {"merges", to_json()["merges"]}};
  return sha256_hex(j.dump());
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "vocab: cannot write " + path.string());
  out << to_json().dump() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "vocab: cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidInput, "vocab: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace p2c
