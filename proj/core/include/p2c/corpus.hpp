#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace p2c {

/// Compliance facet of a policy. Irrelevance is the absence of a facet, not a
/// third value.
enum class Facet : std::uint8_t { kCompliant = 0, kNoncompliant = 1 };

inline constexpr Facet opposite(Facet f) {
  return f == Facet::kCompliant ? Facet::kNoncompliant : Facet::kCompliant;
}
std::string_view to_string(Facet f);
Facet parse_facet(std::string_view text);

enum class PolicySource { kCwe, kCbp, kBugfixComment, kSynthetic, kUser };

std::string_view to_string(PolicySource s);
PolicySource parse_policy_source(std::string_view text);

struct Policy {
  std::string id;
  std::string text;
  PolicySource source = PolicySource::kUser;
};

struct GroundTruth {
  std::string policy_id;
  Facet facet = Facet::kCompliant;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct CodeSnippet {
  std::string id;
  std::string code;
  std::vector<GroundTruth> ground_truth;
};

/// (r^y, c^y, c^{not y}, c~). Code slots are optional so partially labelled
/// sources (bug-fixes before mining, single-facet datasets) fit the same type.
struct Quadruplet {
  std::string policy_id;
  Facet facet = Facet::kCompliant;
  std::optional<std::string> matching_code_id;
  std::optional<std::string> opposite_code_id;
  std::optional<std::string> irrelevant_code_id;
};

/// A code snippet with a review comment made on it.
struct CodeCommentPair {
  std::string code;
  std::string comment;
};

struct BugFixRecord {
  std::string id;
  std::string comment;
  std::string code_before;
  std::string code_after;
};

enum class Modality : std::uint8_t { kText, kCode };

using Label = std::uint64_t;

/// One un-pivoted training item. `facet` is set for faceted policy text and
/// selects the facet mechanism at encode time; plain text and code leave it
/// empty.
struct LabeledItem {
  std::string content;
  Modality modality = Modality::kText;
  std::optional<Facet> facet;
  Label label = 0;
  std::string origin;  // source id, used in error reports and group splits
};

/// Policies plus snippets with id lookup. Enforces the cross-record
/// invariants: unique ids, non-blank text, resolvable ground truth.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Policy> policies, std::vector<CodeSnippet> snippets);

  const std::vector<Policy>& policies() const { return policies_; }
  const std::vector<CodeSnippet>& snippets() const { return snippets_; }

  const Policy* find_policy(std::string_view id) const;
  const CodeSnippet* find_snippet(std::string_view id) const;
  const Policy& policy(std::string_view id) const;
  const CodeSnippet& snippet(std::string_view id) const;

  void add_policy(Policy p);
  void add_snippet(CodeSnippet s);

  /// Snippet ids carrying `facet` ground truth for `policy_id`, in corpus order.
  std::vector<std::string> labeled_snippets(std::string_view policy_id, Facet facet) const;

 private:
  void check_snippet(const CodeSnippet& s) const;

  std::vector<Policy> policies_;
  std::vector<CodeSnippet> snippets_;
  std::unordered_map<std::string, std::size_t> policy_index_;
  std::unordered_map<std::string, std::size_t> snippet_index_;
};

/// Whitespace-delimited words; the unit segment_documentation counts in.
std::vector<std::string_view> split_words(std::string_view text);

/// Splits each paragraph into non-overlapping passages of `passage_len`
/// words. Passages of one paragraph share a label; a trailing remainder is
/// kept only if it has at least passage_len/2 words.
std::vector<LabeledItem> segment_documentation(std::span<const std::string> paragraphs,
                                               std::size_t passage_len, Label first_label = 0);

struct BugFixReinterpretation {
  Policy policy;
  CodeSnippet before;  // c-
  CodeSnippet after;   // c+
  Quadruplet noncompliant;
  Quadruplet compliant;
};

/// Mints a policy from the review comment and reads code-before/code-after
/// as its non-compliant/compliant examples.
BugFixReinterpretation reinterpret_bugfix(const BugFixRecord& record);

std::string bugfix_policy_id(std::string_view record_id);
std::string bugfix_before_id(std::string_view record_id);
std::string bugfix_after_id(std::string_view record_id);

/// Uniformly picks a record other than `record_id`, then one of its two code
/// versions. Deterministic in `rng_seed`.
std::string mine_irrelevant(std::string_view record_id, std::span<const BugFixRecord> pool,
                            std::uint64_t rng_seed);

using PolicyLikeness = std::function<bool(std::string_view)>;

/// Modal/imperative cue + at least four words.
bool default_policy_likeness(std::string_view comment);

struct FilterResult {
  std::vector<std::size_t> kept_indices;
  std::vector<std::string> kept;
  double retained_fraction = 0.0;
};

FilterResult filter_policy_like(std::span<const std::string> comments,
                                const PolicyLikeness& predicate = default_policy_likeness);

/// Both facet views of one policy. Either side may be absent for partially
/// labelled data.
struct QuadrupletPair {
  std::optional<Quadruplet> compliant;
  std::optional<Quadruplet> noncompliant;
};

/// Flattens quadruplet pairs into (content, label) items:
/// [(r+,l1),(c+,l1),(r-,l2),(c-,l2),(c~,l~)] per pair, fresh labels throughout
/// and a unique label per irrelevant item. Labels start at `first_label`.
std::vector<LabeledItem> unpivot(std::span<const QuadrupletPair> pairs, const Corpus& corpus,
                                 Label first_label = 0);

}  // namespace p2c
