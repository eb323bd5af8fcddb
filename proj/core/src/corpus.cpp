#include "p2c/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>

#include "p2c/error.hpp"

namespace p2c {
namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string> lowercase_alnum_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) != 0) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

std::string_view to_string(Facet f) {
  return f == Facet::kCompliant ? "compliant" : "noncompliant";
}

Facet parse_facet(std::string_view text) {
  if (text == "compliant" || text == "+") return Facet::kCompliant;
  if (text == "noncompliant" || text == "non-compliant" || text == "-") return Facet::kNoncompliant;
  fail(ErrorCode::kInvalidInput, "unknown facet '" + std::string(text) + "'");
}

std::string_view to_string(PolicySource s) {
  switch (s) {
    case PolicySource::kCwe: return "cwe";
    case PolicySource::kCbp: return "cbp";
    case PolicySource::kBugfixComment: return "bugfix_comment";
    case PolicySource::kSynthetic: return "synthetic";
    case PolicySource::kUser: return "user";
  }
  return "user";
}

PolicySource parse_policy_source(std::string_view text) {
  for (auto s : {PolicySource::kCwe, PolicySource::kCbp, PolicySource::kBugfixComment,
                 PolicySource::kSynthetic, PolicySource::kUser}) {
    if (to_string(s) == text) return s;
  }
  fail(ErrorCode::kInvalidInput, "unknown policy source '" + std::string(text) + "'");
}

Corpus::Corpus(std::vector<Policy> policies, std::vector<CodeSnippet> snippets) {
  for (auto& p : policies) add_policy(std::move(p));
  for (auto& s : snippets) add_snippet(std::move(s));
}

void Corpus::add_policy(Policy p) {
  require(!p.id.empty(), "policy id must be non-empty");
  require(!is_blank(p.text), "policy '" + p.id + "' has blank text");
  if (policy_index_.contains(p.id)) fail(ErrorCode::kConflict, "duplicate policy id '" + p.id + "'");
  policy_index_.emplace(p.id, policies_.size());
  policies_.push_back(std::move(p));
}

void Corpus::check_snippet(const CodeSnippet& s) const {
  require(!s.id.empty(), "snippet id must be non-empty");
  require(!s.code.empty(), "snippet '" + s.id + "' has empty code");
  for (const auto& gt : s.ground_truth) {
    if (!policy_index_.contains(gt.policy_id)) {
      fail(ErrorCode::kNotFound,
           "snippet '" + s.id + "' references unknown policy '" + gt.policy_id + "'");
    }
  }
}

void Corpus::add_snippet(CodeSnippet s) {
  check_snippet(s);
  if (snippet_index_.contains(s.id)) fail(ErrorCode::kConflict, "duplicate snippet id '" + s.id + "'");
  snippet_index_.emplace(s.id, snippets_.size());
  snippets_.push_back(std::move(s));
}

const Policy* Corpus::find_policy(std::string_view id) const {
  auto it = policy_index_.find(std::string(id));
  return it == policy_index_.end() ? nullptr : &policies_[it->second];
}

const CodeSnippet* Corpus::find_snippet(std::string_view id) const {
  auto it = snippet_index_.find(std::string(id));
  return it == snippet_index_.end() ? nullptr : &snippets_[it->second];
}

const Policy& Corpus::policy(std::string_view id) const {
  if (const auto* p = find_policy(id)) return *p;
  fail(ErrorCode::kNotFound, "unknown policy '" + std::string(id) + "'");
}

const CodeSnippet& Corpus::snippet(std::string_view id) const {
  if (const auto* s = find_snippet(id)) return *s;
  fail(ErrorCode::kNotFound, "unknown snippet '" + std::string(id) + "'");
}

std::vector<std::string> Corpus::labeled_snippets(std::string_view policy_id, Facet facet) const {
  std::vector<std::string> ids;
  for (const auto& s : snippets_) {
    for (const auto& gt : s.ground_truth) {
      if (gt.policy_id == policy_id && gt.facet == facet) {
        ids.push_back(s.id);
        break;
      }
    }
  }
  return ids;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) != 0) ++i;
    const std::size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) == 0) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::vector<LabeledItem> segment_documentation(std::span<const std::string> paragraphs,
                                               std::size_t passage_len, Label first_label) {
  require(passage_len >= 8, "segment_documentation: passage_len must be >= 8");
  std::vector<LabeledItem> items;
  Label label = first_label;
  for (std::size_t p = 0; p < paragraphs.size(); ++p) {
    const auto words = split_words(paragraphs[p]);
    bool emitted = false;
    for (std::size_t start = 0; start < words.size(); start += passage_len) {
      const std::size_t len = std::min(passage_len, words.size() - start);
      // Integer form of len >= passage_len / 2.
      if (2 * len < passage_len) break;
      std::string content;
      for (std::size_t w = start; w < start + len; ++w) {
        if (w > start) content.push_back(' ');
        content.append(words[w]);
      }
      items.push_back(LabeledItem{std::move(content), Modality::kText, std::nullopt, label,
                                  "doc:" + std::to_string(p)});
      emitted = true;
    }
    if (emitted) ++label;
  }
  return items;
}

std::string bugfix_policy_id(std::string_view record_id) { return "bugfix:" + std::string(record_id); }
std::string bugfix_before_id(std::string_view record_id) { return std::string(record_id) + "/before"; }
std::string bugfix_after_id(std::string_view record_id) { return std::string(record_id) + "/after"; }

BugFixReinterpretation reinterpret_bugfix(const BugFixRecord& record) {
  require(!record.id.empty(), "bug-fix record id must be non-empty");
  if (is_blank(record.comment)) {
    fail(ErrorCode::kInvalidInput, "bug-fix record '" + record.id + "' has an empty comment");
  }
  require(!record.code_before.empty() && !record.code_after.empty(),
          "bug-fix record '" + record.id + "' is missing code");
  if (record.code_before == record.code_after) {
    fail(ErrorCode::kInvalidInput, "bug-fix record '" + record.id + "' has identical code before and after");
  }
  BugFixReinterpretation out;
  out.policy = Policy{bugfix_policy_id(record.id), record.comment, PolicySource::kBugfixComment};
  out.before = CodeSnippet{bugfix_before_id(record.id), record.code_before,
                           {GroundTruth{out.policy.id, Facet::kNoncompliant}}};
  out.after = CodeSnippet{bugfix_after_id(record.id), record.code_after,
                          {GroundTruth{out.policy.id, Facet::kCompliant}}};
  out.noncompliant = Quadruplet{out.policy.id, Facet::kNoncompliant, out.before.id, out.after.id, std::nullopt};
  out.compliant = Quadruplet{out.policy.id, Facet::kCompliant, out.after.id, out.before.id, std::nullopt};
  return out;
}

std::string mine_irrelevant(std::string_view record_id, std::span<const BugFixRecord> pool,
                            std::uint64_t rng_seed) {
  if (pool.size() < 2) fail(ErrorCode::kInvalidInput, "mine_irrelevant: pool needs at least 2 records");
  std::vector<std::size_t> candidates;
  candidates.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].id != record_id) candidates.push_back(i);
  }
  if (candidates.empty()) fail(ErrorCode::kInvalidInput, "mine_irrelevant: no unrelated record in pool");
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  const auto& chosen = pool[candidates[pick(rng)]];
  std::bernoulli_distribution take_after(0.5);
  return take_after(rng) ? bugfix_after_id(chosen.id) : bugfix_before_id(chosen.id);
}

bool default_policy_likeness(std::string_view comment) {
  if (split_words(comment).size() < 4) return false;
  static const std::array<std::string_view, 6> kCues = {"should", "must", "avoid", "use", "never", "prefer"};
  const auto words = lowercase_alnum_words(comment);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (std::find(kCues.begin(), kCues.end(), words[i]) != kCues.end()) return true;
    if (words[i] == "do" && i + 1 < words.size() && words[i + 1] == "not") return true;
  }
  return false;
}

FilterResult filter_policy_like(std::span<const std::string> comments, const PolicyLikeness& predicate) {
  FilterResult out;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    if (predicate(comments[i])) {
      out.kept_indices.push_back(i);
      out.kept.push_back(comments[i]);
    }
  }
  out.retained_fraction =
      comments.empty() ? 0.0 : static_cast<double>(out.kept.size()) / static_cast<double>(comments.size());
  return out;
}

std::vector<LabeledItem> unpivot(std::span<const QuadrupletPair> pairs, const Corpus& corpus,
                                 Label first_label) {
  std::vector<LabeledItem> items;
  Label next = first_label;

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [pos, neg] = pairs[i];
    const std::string where = "unpivot: pair " + std::to_string(i);
    require(pos.has_value() || neg.has_value(), where + " is empty");
    if (pos && pos->facet != Facet::kCompliant) fail(ErrorCode::kInvalidInput, where + ": facet mismatch in compliant slot");
    if (neg && neg->facet != Facet::kNoncompliant) fail(ErrorCode::kInvalidInput, where + ": facet mismatch in non-compliant slot");
    if (pos && neg && pos->policy_id != neg->policy_id) {
      fail(ErrorCode::kInvalidInput, where + " references two different policies");
    }

    const auto merge_slot = [&](const std::optional<std::string>& a, const std::optional<std::string>& b,
                                const char* name) -> std::optional<std::string> {
      if (a && b && *a != b.value()) fail(ErrorCode::kInvalidInput, where + ": inconsistent " + name + " code");
      return a ? a : b;
    };
    const auto c_pos = merge_slot(pos ? pos->matching_code_id : std::nullopt,
                                  neg ? neg->opposite_code_id : std::nullopt, "compliant");
    const auto c_neg = merge_slot(neg ? neg->matching_code_id : std::nullopt,
                                  pos ? pos->opposite_code_id : std::nullopt, "non-compliant");
    const auto c_irr = merge_slot(pos ? pos->irrelevant_code_id : std::nullopt,
                                  neg ? neg->irrelevant_code_id : std::nullopt, "irrelevant");

    const Policy& policy = corpus.policy(pos ? pos->policy_id : neg->policy_id);
    const auto emit_facet = [&](bool has_policy, Facet facet, const std::optional<std::string>& code) {
      if (!has_policy && !code) return;
      const Label label = next++;
      if (has_policy) items.push_back({policy.text, Modality::kText, facet, label, policy.id});
      if (code) items.push_back({corpus.snippet(*code).code, Modality::kCode, std::nullopt, label, *code});
    };
    emit_facet(pos.has_value(), Facet::kCompliant, c_pos);
    emit_facet(neg.has_value(), Facet::kNoncompliant, c_neg);
    if (c_irr) items.push_back({corpus.snippet(*c_irr).code, Modality::kCode, std::nullopt, next++, *c_irr});
  }
  return items;
}

}  // namespace p2c
