#include "p2c/losses.hpp"

#include <cmath>
#include <sstream>

#include "p2c/error.hpp"

namespace p2c {
namespace {

// Pairwise distance terms plus an accumulator of d loss / d D(i, j); the
// embedding gradient follows from dD(i,j)/dE_i = 2 (E_i - E_j).
class PairTerms {
 public:
  PairTerms(const RowMatrix& e, DistanceForm form)
      : e_(e), n_(static_cast<std::size_t>(e.rows())), dist_(e.rows(), e.rows()), weight_(RowMatrix::Zero(e.rows(), e.rows())) {
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      dist_(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < e.rows(); ++j) {
        const double d = distance_term(e.row(i).transpose(), e.row(j).transpose(), form);
        dist_(i, j) = d;
        dist_(j, i) = d;
      }
    }
  }

  double operator()(std::size_t i, std::size_t j) const {
    return dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  void add(std::size_t i, std::size_t j, double w) {
    weight_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += w;
  }
  std::size_t size() const { return n_; }

  RowMatrix gradient(double scale) const {
    const RowMatrix sym = (weight_ + weight_.transpose()) * (2.0 * scale);
    // grad_i = sum_j sym_ij (E_i - E_j) = (rowsum_i) E_i - (sym E)_i
    RowMatrix g = sym.rowwise().sum().asDiagonal() * e_;
    g.noalias() -= sym * e_;
    return g;
  }

 private:
  const RowMatrix& e_;
  std::size_t n_;
  RowMatrix dist_;
  RowMatrix weight_;
};

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

std::string_view to_string(DistanceForm f) {
  return f == DistanceForm::kSquaredEuclidean ? "sq_euclidean" : "euclidean_then_square";
}

DistanceForm parse_distance_form(std::string_view text) {
  if (text == "sq_euclidean") return DistanceForm::kSquaredEuclidean;
  if (text == "euclidean_then_square") return DistanceForm::kEuclideanThenSquare;
  fail(ErrorCode::kInvalidInput, "unknown distance form '" + std::string(text) + "'");
}

double sq_dist(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kInvalidInput, "sq_dist: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                       std::to_string(b.size()) + ")");
  }
  return (a - b).squaredNorm();
}

double distance_term(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, DistanceForm form) {
  if (form == DistanceForm::kSquaredEuclidean) return sq_dist(a, b);
  const double d = std::sqrt(sq_dist(a, b));
  return d * d;
}

std::string_view to_string(LossMode m) { return m == LossMode::kQuadruplet ? "quadruplet" : "bmt"; }

LossMode parse_loss_mode(std::string_view text) {
  if (text == "quadruplet") return LossMode::kQuadruplet;
  if (text == "bmt") return LossMode::kBmt;
  fail(ErrorCode::kInvalidInput, "unknown loss mode '" + std::string(text) + "'");
}

void MarginConfig::validate() const {
  require(alpha1 > 0.0, "margins: alpha1 must be > 0");
  require(alpha2 > alpha1, "margins: alpha2 must exceed alpha1");
  require(alpha > 0.0, "margins: alpha must be > 0");
}

QuadrupletLossValue quadruplet_loss(const RowMatrix& embeddings, std::span<const QuadrupletEntry> entries,
                                    const MarginConfig& margins, Reduction reduction, DistanceForm form) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  QuadrupletLossValue out;
  out.grad = RowMatrix::Zero(embeddings.rows(), embeddings.cols());
  if (entries.empty()) return out;

  const auto row = [&](std::size_t i) {
    require(i < n, "quadruplet_loss: entry index out of range");
    return embeddings.row(static_cast<Eigen::Index>(i)).transpose();
  };
  const double scale = reduction == Reduction::kMean ? 1.0 / static_cast<double>(entries.size()) : 1.0;
  // d total / d L-facet = 1/2.
  const double g = 0.5 * scale;
  const auto add_term_grad = [&](std::size_t a, std::size_t b, double w) {
    const Vector diff = 2.0 * (row(a) - row(b));
    out.grad.row(static_cast<Eigen::Index>(a)) += w * diff.transpose();
    out.grad.row(static_cast<Eigen::Index>(b)) -= w * diff.transpose();
  };

  for (const auto& q : entries) {
    const double d_match = distance_term(row(q.anchor), row(q.matching), form);
    const double d_opp = distance_term(row(q.anchor), row(q.opposite), form);
    const double d_irr = distance_term(row(q.anchor), row(q.irrelevant), form);
    const double h1 = d_match - d_opp + margins.alpha1;
    const double h2 = d_opp - d_irr + margins.alpha2;
    double entry = 0.0;
    if (h1 > 0.0) {
      entry += h1;
      add_term_grad(q.anchor, q.matching, g);
      add_term_grad(q.anchor, q.opposite, -g);
    }
    if (h2 > 0.0) {
      entry += h2;
      add_term_grad(q.anchor, q.opposite, g);
      add_term_grad(q.anchor, q.irrelevant, -g);
    }
    (q.facet == Facet::kCompliant ? out.compliant : out.noncompliant) += entry * scale;
  }
  out.total = 0.5 * (out.compliant + out.noncompliant);
  return out;
}

std::vector<Triplet> enumerate_valid_triplets(std::span<const Label> labels) {
  std::vector<Triplet> out;
  const std::size_t n = labels.size();
  if (n < 3) return out;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] != labels[a]) out.push_back({a, p, k});
      }
    }
  }
  return out;
}

std::string_view to_string(Mining m) {
  switch (m) {
    case Mining::kBatchAll: return "batch_all";
    case Mining::kBatchHard: return "batch_hard";
    case Mining::kBatchSemiHard: return "batch_semi_hard";
    case Mining::kBatchHardSoftMargin: return "batch_hard_soft_margin";
  }
  return "batch_all";
}

Mining parse_mining(std::string_view text) {
  for (auto m : {Mining::kBatchAll, Mining::kBatchHard, Mining::kBatchSemiHard, Mining::kBatchHardSoftMargin}) {
    if (to_string(m) == text) return m;
  }
  fail(ErrorCode::kInvalidInput, "unknown mining strategy '" + std::string(text) + "'");
}

BmtLossValue bmt_loss(const RowMatrix& embeddings, std::span<const Label> labels, const BmtOptions& options) {
  require(static_cast<std::size_t>(embeddings.rows()) == labels.size(), "bmt_loss: one label per embedding required");
  require(options.margin > 0.0 || options.mining == Mining::kBatchHardSoftMargin, "bmt_loss: margin must be > 0");
  const std::size_t n = labels.size();
  BmtLossValue out;
  PairTerms d(embeddings, options.distance);
  const double alpha = options.margin;

  double sum = 0.0;
  bool any_valid = false;

  switch (options.mining) {
    case Mining::kBatchAll:
    case Mining::kBatchSemiHard: {
      const bool semi = options.mining == Mining::kBatchSemiHard;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t p = 0; p < n; ++p) {
          if (p == a || labels[p] != labels[a]) continue;
          const double d_ap = d(a, p);
          for (std::size_t k = 0; k < n; ++k) {
            if (labels[k] == labels[a]) continue;
            any_valid = true;
            const double d_an = d(a, k);
            if (semi && !(d_ap < d_an && d_an < d_ap + alpha)) continue;
            const double h = d_ap - d_an + alpha;
            if (h <= 0.0) continue;
            sum += h;
            ++out.contributing_terms;
            d.add(a, p, 1.0);
            d.add(a, k, -1.0);
          }
        }
      }
      break;
    }
    case Mining::kBatchHard:
    case Mining::kBatchHardSoftMargin: {
      const bool soft = options.mining == Mining::kBatchHardSoftMargin;
      out.anchor_terms.assign(n, std::nullopt);
      for (std::size_t a = 0; a < n; ++a) {
        std::optional<std::size_t> hardest_p;
        std::optional<std::size_t> hardest_n;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == a) continue;
          if (labels[k] == labels[a]) {
            if (!hardest_p || d(a, k) > d(a, *hardest_p)) hardest_p = k;
          } else if (!hardest_n || d(a, k) < d(a, *hardest_n)) {
            hardest_n = k;
          }
        }
        if (!hardest_p || !hardest_n) continue;
        any_valid = true;
        ++out.contributing_terms;
        const double x = d(a, *hardest_p) - d(a, *hardest_n);
        if (soft) {
          const double term = softplus(x);
          out.anchor_terms[a] = term;
          sum += term;
          const double w = sigmoid(x);
          d.add(a, *hardest_p, w);
          d.add(a, *hardest_n, -w);
        } else {
          const double h = x + alpha;
          out.anchor_terms[a] = std::max(0.0, h);
          if (h > 0.0) {
            sum += h;
            d.add(a, *hardest_p, 1.0);
            d.add(a, *hardest_n, -1.0);
          }
        }
      }
      break;
    }
  }
  if (!any_valid) {
    out.no_valid_triplets = true;
    out.grad = RowMatrix::Zero(embeddings.rows(), embeddings.cols());
    return out;
  }
  double scale = 1.0;
  if (options.reduction == Reduction::kMean && out.contributing_terms > 0) {
    scale = 1.0 / static_cast<double>(out.contributing_terms);
  }
  out.value = sum * scale;
  out.grad = d.gradient(scale);
  return out;
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
  }
  return "medium";
}

Difficulty partition_difficulty(double d_ap, double d_an, double margin) {
  require(d_ap >= 0.0 && d_an >= 0.0, "partition_difficulty: distances must be non-negative");
  if (d_ap + margin < d_an) return Difficulty::kEasy;
  if (d_an < d_ap) return Difficulty::kHard;
  return Difficulty::kMedium;
}

std::string DistanceHistogram::to_csv() const {
  std::ostringstream os;
  os << "bin_lo,bin_hi,pos_count,neg_count\n";
  for (std::size_t b = 0; b < positive.size(); ++b) {
    os << edges[b] << ',' << edges[b + 1] << ',' << positive[b] << ',' << negative[b] << '\n';
  }
  return os.str();
}

DistanceHistogram distance_histogram(const RowMatrix& embeddings, std::span<const Label> labels, std::size_t bins,
                                     double lo, double hi, DistanceForm form) {
  require(bins >= 2, "distance_histogram: bins must be >= 2");
  require(hi > lo, "distance_histogram: empty range");
  require(static_cast<std::size_t>(embeddings.rows()) == labels.size(), "distance_histogram: one label per embedding");
  DistanceHistogram h;
  h.positive.assign(bins, 0);
  h.negative.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
  const auto n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = distance_term(embeddings.row(static_cast<Eigen::Index>(i)).transpose(),
                                     embeddings.row(static_cast<Eigen::Index>(j)).transpose(), form);
      auto b = static_cast<long long>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
      b = std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1);
      (labels[i] == labels[j] ? h.positive : h.negative)[static_cast<std::size_t>(b)]++;
    }
  }
  return h;
}

}  // namespace p2c
