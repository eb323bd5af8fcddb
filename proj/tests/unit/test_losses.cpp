#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "p2c/error.hpp"
#include "p2c/losses.hpp"
#include "test_support.hpp"

namespace p2c {
namespace {

using testing::random_unit_rows;

double hinge(double x) { return x > 0.0 ? x : 0.0; }

double oracle_sq(const RowMatrix& e, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < e.cols(); ++k) {
    const double diff = e(static_cast<Eigen::Index>(i), k) - e(static_cast<Eigen::Index>(j), k);
    s += diff * diff;
  }
  return s;
}

struct OracleTerms {
  std::vector<double> hinges;
};

// Independent triple loop over (a, p, n).
OracleTerms oracle_all_hinges(const RowMatrix& e, const std::vector<Label>& labels, double margin) {
  OracleTerms out;
  const std::size_t n = labels.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        if (a != p && labels[a] == labels[p] && labels[a] != labels[q])
          out.hinges.push_back(hinge(oracle_sq(e, a, p) - oracle_sq(e, a, q) + margin));
  return out;
}

TEST(SqDist, Examples) {
  Vector a(3), b(3);
  a << 1, 0, 0;
  b << 0, 1, 0;
  EXPECT_EQ(sq_dist(a, a), 0.0);
  EXPECT_EQ(sq_dist(a, b), 2.0);
  EXPECT_EQ(sq_dist(a, b), sq_dist(b, a));
  Vector c(2);
  EXPECT_THROW(sq_dist(a, c), Error);
}

TEST(SqDist, UnitVectorIdentity) {
  std::mt19937_64 rng(1);
  const RowMatrix rows = random_unit_rows(rng, 20, 16);
  for (Eigen::Index i = 0; i + 1 < rows.rows(); ++i) {
    const Vector a = rows.row(i).transpose();
    const Vector b = rows.row(i + 1).transpose();
    EXPECT_NEAR(sq_dist(a, b), 2.0 - 2.0 * a.dot(b), 1e-12);
  }
}

TEST(SqDist, DistanceFormsAgree) {
  std::mt19937_64 rng(2);
  const RowMatrix rows = random_unit_rows(rng, 2, 8);
  const Vector a = rows.row(0).transpose(), b = rows.row(1).transpose();
  EXPECT_NEAR(distance_term(a, b, DistanceForm::kSquaredEuclidean),
              distance_term(a, b, DistanceForm::kEuclideanThenSquare), 1e-12);
  EXPECT_EQ(parse_distance_form(to_string(DistanceForm::kEuclideanThenSquare)), DistanceForm::kEuclideanThenSquare);
}

RowMatrix rows_at_distances(double d_match, double d_opp, double d_irr) {
  // anchor at origin; others along separate axes at the requested squared distance.
  RowMatrix e = RowMatrix::Zero(4, 3);
  e(1, 0) = std::sqrt(d_match);
  e(2, 1) = std::sqrt(d_opp);
  e(3, 2) = std::sqrt(d_irr);
  return e;
}

TEST(QuadrupletLoss, IdenticalEmbeddingsGiveSumOfMargins) {
  const RowMatrix e = RowMatrix::Ones(4, 5) / std::sqrt(5.0);
  const MarginConfig m{0.2, 0.4, 0.2};
  const std::vector<QuadrupletEntry> entries = {{Facet::kCompliant, 0, 1, 2, 3}};
  const auto v = quadruplet_loss(e, entries, m);
  EXPECT_NEAR(v.compliant, 0.6, 1e-15);
  EXPECT_EQ(v.noncompliant, 0.0);
  EXPECT_NEAR(v.total, 0.3, 1e-15);
}

TEST(QuadrupletLoss, ScalarOracleExample) {
  const RowMatrix e = rows_at_distances(0.1, 0.3, 0.5);
  const MarginConfig m{0.1, 0.3, 0.2};
  const std::vector<QuadrupletEntry> entries = {{Facet::kCompliant, 0, 1, 2, 3}};
  const auto v = quadruplet_loss(e, entries, m);
  const double expected = hinge(0.1 - 0.3 + 0.1) + hinge(0.3 - 0.5 + 0.3);
  EXPECT_NEAR(v.compliant, expected, 1e-12);
  EXPECT_NEAR(v.compliant, 0.1, 1e-12);
  EXPECT_NEAR(v.total, 0.05, 1e-12);
}

TEST(QuadrupletLoss, WellSeparatedIsZero) {
  const RowMatrix e = rows_at_distances(0.01, 1.0, 3.0);
  const std::vector<QuadrupletEntry> entries = {{Facet::kNoncompliant, 0, 1, 2, 3}};
  const auto v = quadruplet_loss(e, entries, MarginConfig{});
  EXPECT_EQ(v.total, 0.0);
  EXPECT_EQ(v.grad.norm(), 0.0);
}

TEST(QuadrupletLoss, ReducesToTripletWhenRelevanceTermInactive) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix e = random_unit_rows(rng, 4, 6);
    e.row(3) = -e.row(0) * 10.0;  // irrelevant far away
    const MarginConfig m{0.3, 0.1, 0.2};
    const std::vector<QuadrupletEntry> entries = {{Facet::kCompliant, 0, 1, 2, 3}};
    const auto v = quadruplet_loss(e, entries, m);
    EXPECT_NEAR(v.compliant, hinge(oracle_sq(e, 0, 1) - oracle_sq(e, 0, 2) + 0.3), 1e-12);
  }
}

TEST(QuadrupletLoss, MeanReductionDividesByEntries) {
  std::mt19937_64 rng(4);
  const RowMatrix e = random_unit_rows(rng, 8, 6);
  const std::vector<QuadrupletEntry> entries = {{Facet::kCompliant, 0, 1, 2, 3}, {Facet::kNoncompliant, 4, 5, 6, 7}};
  const auto sum = quadruplet_loss(e, entries, MarginConfig{}, Reduction::kSum);
  const auto mean = quadruplet_loss(e, entries, MarginConfig{}, Reduction::kMean);
  EXPECT_NEAR(mean.total * 2.0, sum.total, 1e-12);
  EXPECT_GE(sum.compliant, 0.0);
  EXPECT_GE(sum.noncompliant, 0.0);
}

TEST(EnumerateTriplets, Examples) {
  const std::vector<Label> a = {1, 1, 2};
  EXPECT_EQ(enumerate_valid_triplets(a), (std::vector<Triplet>{{0, 1, 2}, {1, 0, 2}}));
  const std::vector<Label> b = {1, 2, 3, 4};
  EXPECT_TRUE(enumerate_valid_triplets(b).empty());
  const std::vector<Label> c = {1, 1, 2, 2};
  EXPECT_EQ(enumerate_valid_triplets(c).size(), 8u);
}

TEST(EnumerateTriplets, LexicographicAndMatchesOracleCount) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<Label> lab(0, 3);
  std::vector<Label> labels(15);
  for (auto& l : labels) l = lab(rng);
  const auto t = enumerate_valid_triplets(labels);
  EXPECT_TRUE(std::is_sorted(t.begin(), t.end(), [](const Triplet& x, const Triplet& y) {
    return std::tie(x.anchor, x.positive, x.negative) < std::tie(y.anchor, y.positive, y.negative);
  }));
  std::size_t expected = 0;
  for (Label l = 0; l <= 3; ++l) {
    const auto k = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
    if (k >= 2) expected += k * (k - 1) * (labels.size() - k);
  }
  EXPECT_EQ(t.size(), expected);
}

TEST(BmtLoss, IdenticalEmbeddingsBatchAllIsMargin) {
  const RowMatrix e = RowMatrix::Ones(6, 4) * 0.5;
  const std::vector<Label> labels = {0, 0, 1, 1, 2, 2};
  EXPECT_NEAR(bmt_loss(e, labels, {0.2, Mining::kBatchAll}).value, 0.2, 1e-15);
}

TEST(BmtLoss, SeparatedBatchIsZero) {
  RowMatrix e = RowMatrix::Zero(3, 2);
  e(0, 0) = e(1, 0) = 1.0;
  e(2, 1) = 1.0;  // sq distance 2 > margin
  const std::vector<Label> labels = {1, 1, 2};
  const auto v = bmt_loss(e, labels, {0.2, Mining::kBatchAll});
  EXPECT_EQ(v.value, 0.0);
  EXPECT_FALSE(v.no_valid_triplets);
}

TEST(BmtLoss, NoValidTripletsFlagged) {
  const RowMatrix e = RowMatrix::Ones(3, 2);
  const std::vector<Label> labels = {1, 2, 3};
  const auto v = bmt_loss(e, labels, {});
  EXPECT_TRUE(v.no_valid_triplets);
  EXPECT_EQ(v.value, 0.0);
}

TEST(BmtLoss, BatchAllSumEqualsBruteForce) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const RowMatrix e = random_unit_rows(rng, 12, 8);
    std::vector<Label> labels(12);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(i % 3);
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto oracle = oracle_all_hinges(e, labels, 0.5);
    double sum = 0.0;
    std::size_t positive = 0;
    for (double h : oracle.hinges) {
      sum += h;
      positive += h > 0.0 ? 1 : 0;
    }
    const auto s = bmt_loss(e, labels, {0.5, Mining::kBatchAll, Reduction::kSum});
    EXPECT_NEAR(s.value, sum, 1e-9);
    const auto m = bmt_loss(e, labels, {0.5, Mining::kBatchAll, Reduction::kMean});
    EXPECT_EQ(m.contributing_terms, positive);
    if (positive > 0) EXPECT_NEAR(m.value, sum / static_cast<double>(positive), 1e-9);
  }
}

TEST(BmtLoss, BatchHardMatchesOracle) {
  std::mt19937_64 rng(7);
  const RowMatrix e = random_unit_rows(rng, 10, 6);
  const std::vector<Label> labels = {0, 0, 0, 1, 1, 1, 2, 2, 3, 4};
  const double margin = 0.3;
  const auto v = bmt_loss(e, labels, {margin, Mining::kBatchHard, Reduction::kSum});
  double expected = 0.0;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    double dap = -1.0, dan = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (j != a && labels[j] == labels[a]) dap = std::max(dap, oracle_sq(e, a, j));
      if (labels[j] != labels[a]) dan = std::min(dan, oracle_sq(e, a, j));
    }
    if (dap < 0.0) {
      EXPECT_FALSE(v.anchor_terms[a].has_value());
      continue;
    }
    const double term = hinge(dap - dan + margin);
    ASSERT_TRUE(v.anchor_terms[a].has_value());
    EXPECT_NEAR(*v.anchor_terms[a], term, 1e-12);
    expected += term;
  }
  EXPECT_NEAR(v.value, expected, 1e-12);
}

TEST(BmtLoss, PerAnchorDominance) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const RowMatrix e = random_unit_rows(rng, 9, 5);
    const std::vector<Label> labels = {0, 0, 0, 1, 1, 1, 2, 2, 2};
    const auto hard = bmt_loss(e, labels, {0.2, Mining::kBatchHard});
    for (const auto& t : enumerate_valid_triplets(labels)) {
      const double h = hinge(oracle_sq(e, t.anchor, t.positive) - oracle_sq(e, t.anchor, t.negative) + 0.2);
      EXPECT_GE(*hard.anchor_terms[t.anchor] + 1e-12, h);
    }
  }
}

TEST(BmtLoss, SemiHardUsesOnlyBandNegatives) {
  // anchor 0, positive 1 at d=0.5; negatives at 0.3 (hard), 0.6 (semi), 2.0 (easy).
  RowMatrix e = RowMatrix::Zero(5, 4);
  e(1, 0) = std::sqrt(0.5);
  e(2, 1) = std::sqrt(0.3);
  e(3, 2) = std::sqrt(0.6);
  e(4, 3) = std::sqrt(2.0);
  const std::vector<Label> labels = {0, 0, 1, 2, 3};
  const auto v = bmt_loss(e, labels, {0.2, Mining::kBatchSemiHard, Reduction::kSum});
  // Only (0, 1, 3) lies in the band; from anchor 1 every negative is beyond 0.7.
  EXPECT_EQ(v.contributing_terms, 1u);
  EXPECT_NEAR(v.value, 0.5 - 0.6 + 0.2, 1e-12);
  const auto all = bmt_loss(e, labels, {0.2, Mining::kBatchAll, Reduction::kSum});
  EXPECT_GT(all.contributing_terms, v.contributing_terms);
}

TEST(BmtLoss, SoftMarginIsSoftplus) {
  std::mt19937_64 rng(9);
  const RowMatrix e = random_unit_rows(rng, 6, 4);
  const std::vector<Label> labels = {0, 0, 1, 1, 2, 2};
  const auto v = bmt_loss(e, labels, {0.2, Mining::kBatchHardSoftMargin, Reduction::kSum});
  double expected = 0.0;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    double dap = -1.0, dan = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (j != a && labels[j] == labels[a]) dap = std::max(dap, oracle_sq(e, a, j));
      if (labels[j] != labels[a]) dan = std::min(dan, oracle_sq(e, a, j));
    }
    expected += std::log1p(std::exp(dap - dan));
  }
  EXPECT_NEAR(v.value, expected, 1e-12);
}

TEST(BmtLoss, TranslationInvariance) {
  std::mt19937_64 rng(10);
  const RowMatrix e = random_unit_rows(rng, 10, 6);
  std::vector<Label> labels = {0, 0, 1, 1, 1, 2, 2, 3, 3, 3};
  Eigen::RowVectorXd shift = Eigen::RowVectorXd::Random(6) * 3.0;
  const RowMatrix shifted = e.rowwise() + shift;
  for (Mining m : {Mining::kBatchAll, Mining::kBatchHard, Mining::kBatchSemiHard, Mining::kBatchHardSoftMargin}) {
    EXPECT_NEAR(bmt_loss(e, labels, {0.4, m}).value, bmt_loss(shifted, labels, {0.4, m}).value, 1e-9)
        << to_string(m);
  }
  const std::vector<QuadrupletEntry> q = {{Facet::kCompliant, 0, 1, 2, 3}, {Facet::kNoncompliant, 4, 5, 6, 7}};
  EXPECT_NEAR(quadruplet_loss(e, q, MarginConfig{}).total, quadruplet_loss(shifted, q, MarginConfig{}).total, 1e-9);
}

TEST(BmtLoss, NonNegativeAndZeroIffAllSatisfied) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const RowMatrix e = random_unit_rows(rng, 8, 3);
    const std::vector<Label> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    const double margin = 0.05 * (trial + 1);
    const auto v = bmt_loss(e, labels, {margin, Mining::kBatchAll});
    EXPECT_GE(v.value, 0.0);
    bool all_ok = true;
    for (const auto& t : enumerate_valid_triplets(labels))
      all_ok = all_ok && oracle_sq(e, t.anchor, t.positive) + margin <= oracle_sq(e, t.anchor, t.negative);
    EXPECT_EQ(v.value == 0.0, all_ok);
  }
}

TEST(BmtLoss, UnknownMiningNameRejected) { EXPECT_THROW(parse_mining("batch_random"), Error); }

TEST(PartitionDifficulty, Examples) {
  EXPECT_EQ(partition_difficulty(0.1, 0.5, 0.2), Difficulty::kEasy);
  EXPECT_EQ(partition_difficulty(0.5, 0.3, 0.2), Difficulty::kHard);
  EXPECT_EQ(partition_difficulty(0.3, 0.4, 0.2), Difficulty::kMedium);
  EXPECT_EQ(partition_difficulty(0.3, 0.3, 0.2), Difficulty::kMedium);
  EXPECT_EQ(partition_difficulty(0.25, 0.5, 0.25), Difficulty::kMedium);
}

TEST(PartitionDifficulty, MonotoneInNegativeDistance) {
  const double dap = 0.4, margin = 0.3;
  int last = 2;
  for (double dan = 0.0; dan < 1.5; dan += 0.01) {
    const int rank = partition_difficulty(dap, dan, margin) == Difficulty::kHard     ? 2
                     : partition_difficulty(dap, dan, margin) == Difficulty::kMedium ? 1
                                                                                     : 0;
    EXPECT_LE(rank, last);
    last = rank;
  }
  EXPECT_EQ(last, 0);
}

TEST(DistanceHistogram, CountsMatchPairEnumeration) {
  std::mt19937_64 rng(12);
  const RowMatrix e = random_unit_rows(rng, 14, 6);
  const std::vector<Label> labels = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2, 3, 4};
  const auto h = distance_histogram(e, labels, 8);
  ASSERT_EQ(h.edges.size(), 9u);
  std::vector<std::size_t> pos(8, 0), neg(8, 0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const double d = oracle_sq(e, i, j);
      const auto bin = std::min<std::size_t>(7, static_cast<std::size_t>(d / 0.5));
      (labels[i] == labels[j] ? pos : neg)[bin]++;
    }
  EXPECT_EQ(h.positive, pos);
  EXPECT_EQ(h.negative, neg);
  EXPECT_NE(h.to_csv().find("bin_lo,bin_hi,pos_count,neg_count"), std::string::npos);
}

TEST(DistanceHistogram, EdgeCases) {
  const auto empty = distance_histogram(RowMatrix(0, 4), {}, 4);
  for (auto c : empty.positive) EXPECT_EQ(c, 0u);
  for (auto c : empty.negative) EXPECT_EQ(c, 0u);
  const std::vector<Label> same = {1, 1, 1};
  const auto single = distance_histogram(RowMatrix::Random(3, 4), same, 4);
  std::size_t total = 0;
  for (auto c : single.negative) total += c;
  EXPECT_EQ(total, 0u);
  EXPECT_THROW(distance_histogram(RowMatrix::Random(3, 4), same, 1), Error);
}

}  // namespace
}  // namespace p2c
