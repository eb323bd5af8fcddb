#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "p2c/corpus.hpp"

namespace p2c {

// Desk-scale benchmark generator. Every policy family owns an API stem
// (e.g. "vexlor") and a marker pair drawn from fixed good/bad pools
// (e.g. "checked"/"blind"). Compliant snippets call `<good>_<stem>(...)`,
// non-compliant ones `<bad>_<stem>(...)`; distractors only touch stems that
// belong to no family. Families are split into train and held-out sets so
// evaluation on held-out families is zero-shot.

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n_policy_families = 30;
  /// Families reserved for zero-shot evaluation; taken from n_policy_families.
  std::size_t n_heldout_families = 10;
  std::size_t snippets_per_family = 20;
  std::size_t n_distractors = 1000;
};

struct SyntheticFamily {
  std::string policy_id;
  std::string stem;
  std::string good_marker;
  std::string bad_marker;
  bool heldout = false;

  std::string good_call() const { return good_marker + "_" + stem; }
  std::string bad_call() const { return bad_marker + "_" + stem; }
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<SyntheticFamily> families;
  std::vector<std::string> train_policy_ids;
  std::vector<std::string> heldout_policy_ids;
  std::vector<std::string> distractor_ids;
  std::vector<std::string> distractor_stems;
};

SyntheticCorpus synth_corpus(const SynthOptions& options);

struct PretrainingOptions {
  std::uint64_t seed = 0;
  std::size_t paragraphs_per_stem = 2;
  std::size_t cc_pairs_per_stem = 4;
  std::size_t bugfixes_per_family = 12;
  /// Share of bug-fix records that are noise: non-policy-like comments over
  /// facet-swapped or unrelated code.
  double bugfix_noise_fraction = 0.4;
};

struct PretrainingData {
  std::vector<std::string> doc_paragraphs;
  std::vector<CodeCommentPair> code_comment_pairs;
  std::vector<BugFixRecord> bugfixes;
};

/// General-purpose corpora for the pre-training stages. Documentation and
/// code reviews cover every stem; bug-fix records come from train families
/// only, so held-out policies never appear in any training stage.
PretrainingData synth_pretraining(const SyntheticCorpus& corpus, const PretrainingOptions& options);

}  // namespace p2c
