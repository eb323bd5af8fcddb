#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "p2c/corpus.hpp"
#include "p2c/encoder.hpp"

namespace p2c {

/// What the hinges consume as "d(.,.)^2". Both forms give the squared
/// Euclidean distance; the second computes it literally as a Euclidean
/// distance that is then squared.
enum class DistanceForm { kSquaredEuclidean, kEuclideanThenSquare };

std::string_view to_string(DistanceForm f);
DistanceForm parse_distance_form(std::string_view text);

/// Squared Euclidean distance. Throws on dimension mismatch.
double sq_dist(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);
double distance_term(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, DistanceForm form);

struct MarginConfig {
  double alpha1 = 0.2;  // compliance margin
  double alpha2 = 0.4;  // relevance margin
  double alpha = 0.2;   // BMT margin and relevance threshold

  void validate() const;
};

enum class Reduction { kMean, kSum };

/// Training objective: faceted quadruplets, or BMT over un-pivoted items.
enum class LossMode { kQuadruplet, kBmt };

std::string_view to_string(LossMode m);
LossMode parse_loss_mode(std::string_view text);

/// Row indices of one faceted quadruplet (r^y, c^y, c^{not y}, c~) inside an
/// embedding matrix.
struct QuadrupletEntry {
  Facet facet = Facet::kCompliant;
  std::size_t anchor = 0;
  std::size_t matching = 0;
  std::size_t opposite = 0;
  std::size_t irrelevant = 0;
};

struct QuadrupletLossValue {
  double compliant = 0.0;     // L+
  double noncompliant = 0.0;  // L-
  double total = 0.0;         // (L+ + L-) / 2
  RowMatrix grad;             // d total / d embeddings
};

/// Per entry: [d(r,c^y) - d(r,c^{not y}) + a1]+ + [d(r,c^{not y}) - d(r,c~) + a2]+,
/// summed into L+ or L- by facet. kMean divides every component by the
/// number of entries.
QuadrupletLossValue quadruplet_loss(const RowMatrix& embeddings, std::span<const QuadrupletEntry> entries,
                                    const MarginConfig& margins, Reduction reduction = Reduction::kSum,
                                    DistanceForm form = DistanceForm::kSquaredEuclidean);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Every (a, p, n) with l(a) = l(p), a != p, l(a) != l(n), in lexicographic
/// order.
std::vector<Triplet> enumerate_valid_triplets(std::span<const Label> labels);

enum class Mining { kBatchAll, kBatchHard, kBatchSemiHard, kBatchHardSoftMargin };

std::string_view to_string(Mining m);
Mining parse_mining(std::string_view text);

struct BmtOptions {
  double margin = 0.2;
  Mining mining = Mining::kBatchAll;
  /// kMean averages over contributing terms (positive triplets for batch_all,
  /// anchors for the hard variants); kSum is the literal sum.
  Reduction reduction = Reduction::kMean;
  DistanceForm distance = DistanceForm::kSquaredEuclidean;
};

struct BmtLossValue {
  double value = 0.0;
  RowMatrix grad;
  std::size_t contributing_terms = 0;
  /// Set when the batch holds no valid triplet; value is then 0.
  bool no_valid_triplets = false;
  /// Hard and soft-margin mining: the selected term per anchor (empty for
  /// anchors without a valid triplet).
  std::vector<std::optional<double>> anchor_terms;
};

BmtLossValue bmt_loss(const RowMatrix& embeddings, std::span<const Label> labels, const BmtOptions& options);

enum class Difficulty { kEasy, kMedium, kHard };

std::string_view to_string(Difficulty d);

/// easy: d_ap + a < d_an; hard: d_an < d_ap; medium otherwise (both
/// boundaries included).
Difficulty partition_difficulty(double d_ap, double d_an, double margin);

struct DistanceHistogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;

  std::string to_csv() const;
};

/// Histograms of within-label and cross-label pair distances over unordered
/// pairs. Values outside [lo, hi] land in the end bins.
DistanceHistogram distance_histogram(const RowMatrix& embeddings, std::span<const Label> labels, std::size_t bins,
                                     double lo = 0.0, double hi = 4.0,
                                     DistanceForm form = DistanceForm::kSquaredEuclidean);

}  // namespace p2c
