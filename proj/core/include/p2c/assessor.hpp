#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "p2c/corpus.hpp"
#include "p2c/encoder.hpp"
#include "p2c/index.hpp"
#include "p2c/judgment.hpp"
#include "p2c/model.hpp"

namespace p2c {

enum class VerdictLabel : std::uint8_t { kCompliant, kNoncompliant, kIrrelevant };

std::string_view to_string(VerdictLabel v);
VerdictLabel parse_verdict_label(std::string_view text);
inline VerdictLabel to_verdict(Facet f) {
  return f == Facet::kCompliant ? VerdictLabel::kCompliant : VerdictLabel::kNoncompliant;
}

struct Verdict {
  VerdictLabel label = VerdictLabel::kIrrelevant;
  /// Present iff the code is relevant.
  std::optional<double> p_compliant;
  std::optional<double> p_noncompliant;
  double d_avg = 0.0;
  double d_compliant = 0.0;
  double d_noncompliant = 0.0;

  nlohmann::json to_json() const;
};

/// Verdict from embeddings: the averaged facet embedding is re-normalised,
/// the code is irrelevant beyond `alpha`, otherwise the nearer facet wins
/// (ties to compliant) with a two-way softmax over negative distances.
Verdict classify_embeddings(const Vector& code, const Vector& r_compliant, const Vector& r_noncompliant,
                            double alpha);

Verdict classify(std::string_view policy_text, std::string_view code, const Model& model, double alpha);

/// (1/Q) sum 1/rank. Throws on an empty list or a rank below 1.
double mrr(std::span<const std::size_t> first_hit_ranks);

double accuracy(std::span<const VerdictLabel> predictions, std::span<const VerdictLabel> truth);

struct FacetRate {
  std::size_t accepted = 0;
  std::size_t total = 0;
  /// Percentage; absent when total is 0.
  std::optional<double> percent() const;
};

struct AcceptanceRates {
  FacetRate compliant;
  FacetRate noncompliant;
  /// Pooled over every judgment, not the mean of the facet rates.
  FacetRate overall;

  nlohmann::json to_json() const;
};

AcceptanceRates acceptance_rate(std::span<const JudgmentRecord> judgments);

/// One (policy, snippet) classification case.
struct EvalPair {
  std::string policy_id;
  std::string snippet_id;
  VerdictLabel truth = VerdictLabel::kIrrelevant;
};

/// Every labelled snippet of each policy plus, per policy, a seeded sample
/// of as many unlabelled distractors (snippets with no ground truth at all).
std::vector<EvalPair> evaluation_pairs(const Corpus& corpus, std::span<const std::string> policy_ids,
                                       std::uint64_t seed);

/// Maps (policy id, facet) to a unit policy embedding.
using PolicyEmbedder = std::function<Vector(const Policy&, Facet)>;

struct EvalReport {
  double accuracy = 0.0;
  double mrr_compliant = 0.0;
  double mrr_noncompliant = 0.0;
  std::size_t n_policies = 0;
  std::size_t n_snippets = 0;
  double alpha = 0.0;
  std::string model_hash;
  std::size_t n_pairs = 0;
  /// Queries dropped from a facet's MRR because that facet has no ground truth.
  std::size_t excluded_compliant = 0;
  std::size_t excluded_noncompliant = 0;

  nlohmann::json to_json() const;
};

/// Accuracy over evaluation_pairs and per-facet MRR of the first ground-truth
/// hit in a full ranking of the index. Policies minted from bug-fix comments
/// are rejected since they are training material.
EvalReport evaluate_embeddings(const Corpus& corpus, std::span<const std::string> policy_ids,
                               const EmbeddingIndex& index, const PolicyEmbedder& embed, double alpha,
                               std::uint64_t seed);

EvalReport evaluate(const Corpus& corpus, std::span<const std::string> policy_ids, const EmbeddingIndex& index,
                    const Model& model, double alpha, std::uint64_t seed);

/// Threshold maximising 3-class accuracy on the given policies (midpoints
/// between consecutive sorted d_avg values).
double calibrate_alpha(const Corpus& corpus, std::span<const std::string> policy_ids, const EmbeddingIndex& index,
                       const Model& model, std::uint64_t seed);

}  // namespace p2c
