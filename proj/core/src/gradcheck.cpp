#include "p2c/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>
#include <vector>

#include "p2c/error.hpp"

namespace p2c {

double evaluate_objective(std::span<const EncoderInput> batch, const BatchLoss& loss, const EncoderParams& params,
                          const RegularizerWeights& reg) {
  if (params.facet_mode == FacetMode::kMasked) {
    // Regularizers need the raw norms; forward_backward is their single source.
    return forward_backward(batch, loss, params, reg).loss;
  }
  return loss(encode_batch(batch, params)).value;
}

GradCheckReport grad_check_against(const EncoderParams& params, std::span<const EncoderInput> batch,
                                   const BatchLoss& loss, const GradientBundle& analytic,
                                   const GradCheckOptions& options) {
  require(options.epsilon > 0.0, "grad_check: epsilon must be positive");
  require(analytic.same_shape(params.weights), "grad_check: gradient shape mismatch");

  EncoderParams probe = params;
  std::vector<std::span<double>> probe_blocks;
  std::vector<std::span<const double>> analytic_blocks;
  std::vector<std::string> names;
  probe.weights.for_each_block([&](const char* name, std::span<double> s) {
    names.emplace_back(name);
    probe_blocks.push_back(s);
  });
  analytic.for_each_block([&](const char*, std::span<const double> s) { analytic_blocks.push_back(s); });

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    for (std::size_t i = 0; i < probe_blocks[b].size(); ++i) coords.emplace_back(b, i);
  }
  if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
    const std::size_t n = std::max<std::size_t>(options.max_coordinates, std::min<std::size_t>(200, coords.size()));
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(n);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  for (const auto& [b, i] : coords) {
    double& slot = probe_blocks[b][i];
    const double original = slot;
    slot = original + options.epsilon;
    const double plus = evaluate_objective(batch, loss, probe, options.regularizers);
    slot = original - options.epsilon;
    const double minus = evaluate_objective(batch, loss, probe, options.regularizers);
    slot = original;

    const double h = options.epsilon / 2.0;
    slot = original + h;
    const double plus_half = evaluate_objective(batch, loss, probe, options.regularizers);
    slot = original - h;
    const double minus_half = evaluate_objective(batch, loss, probe, options.regularizers);
    slot = original;

    const double coarse = (plus - minus) / (2.0 * options.epsilon);
    const double fine = (plus_half - minus_half) / (2.0 * h);
    // Richardson extrapolation cancels the eps^2 truncation term.
    const double numeric = (4.0 * fine - coarse) / 3.0;
    const double a = analytic_blocks[b][i];
    if (std::abs(fine - coarse) > 1e-3 * std::max({std::abs(coarse), std::abs(fine), 1e-8})) {
      ++report.nonsmooth;
      continue;
    }
    if (std::abs(a) < options.skip_below && std::abs(numeric) < options.skip_below) {
      ++report.skipped;
      continue;
    }
    ++report.checked;
    double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
    if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
    if (rel > report.max_relative_error || report.checked == 1) {
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_block = names[b];
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const EncoderParams& params, std::span<const EncoderInput> batch, const BatchLoss& loss,
                           const GradCheckOptions& options) {
  const auto fb = forward_backward(batch, loss, params, options.regularizers);
  return grad_check_against(params, batch, loss, fb.grads, options);
}

}  // namespace p2c

namespace p2c {
namespace {

std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t vocab_size) {
  std::uniform_int_distribution<std::size_t> len(1, 10);
  std::uniform_int_distribution<TokenId> tok(reserved::kCount, static_cast<TokenId>(vocab_size - 1));
  std::vector<TokenId> out(len(rng));
  for (auto& t : out) t = tok(rng);
  return out;
}

}  // namespace

std::vector<GradientSuiteCase> run_gradient_suite(LossMode loss_mode, FacetMode facet_mode,
                                                  const GradientSuiteOptions& options) {
  require(options.vocab_size > static_cast<std::size_t>(reserved::kCount), "gradient suite: vocabulary too small");
  constexpr Mining kMinings[] = {Mining::kBatchAll, Mining::kBatchHard, Mining::kBatchSemiHard,
                                 Mining::kBatchHardSoftMargin};
  std::vector<GradientSuiteCase> cases;
  for (std::size_t c = 0; c < options.configs; ++c) {
   for (std::size_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng((options.seed * 1000003ULL + c) * 131ULL + attempt);
    const EncoderShape shape{options.vocab_size, options.dim, options.hidden};
    EncoderParams params = EncoderParams::initialize(shape, facet_mode, rng(), {}, 0.5);
    if (facet_mode == FacetMode::kMasked) {
      // Keep gates away from the relu kink.
      std::uniform_real_distribution<double> beta(0.3, 1.5);
      for (Eigen::Index i = 0; i < params.weights.mask_beta.size(); ++i) params.weights.mask_beta.data()[i] = beta(rng);
    }

    GradientSuiteCase out;
    out.index = c;
    out.loss_mode = loss_mode;
    out.facet_mode = facet_mode;
    std::uniform_real_distribution<double> margin(0.1, 0.6);
    std::vector<EncoderInput> batch;
    BatchLoss loss;

    if (loss_mode == LossMode::kBmt) {
      out.mining = kMinings[c % 4];
      std::uniform_int_distribution<int> n_items(6, 12);
      std::uniform_int_distribution<int> kind(0, 2);
      std::uniform_int_distribution<Label> label(0, 3);
      std::vector<Label> labels;
      const int n = n_items(rng);
      for (int i = 0; i < n; ++i) {
        EncoderInput in{random_tokens(rng, options.vocab_size), std::nullopt, "item" + std::to_string(i)};
        if (kind(rng) == 2) in.facet = (rng() & 1U) ? Facet::kCompliant : Facet::kNoncompliant;
        batch.push_back(std::move(in));
        // The first two items share a label so a valid triplet always exists.
        labels.push_back(i < 2 ? 0 : (i == 2 ? 1 : label(rng)));
      }
      const BmtOptions opts{margin(rng), out.mining, (rng() & 1U) ? Reduction::kMean : Reduction::kSum,
                            DistanceForm::kSquaredEuclidean};
      loss = [labels, opts](const RowMatrix& e) {
        auto v = bmt_loss(e, labels, opts);
        return LossEvaluation{v.value, std::move(v.grad)};
      };
    } else {
      std::uniform_int_distribution<int> n_entries(2, 5);
      std::vector<QuadrupletEntry> entries;
      const int n = n_entries(rng);
      for (int i = 0; i < n; ++i) {
        const Facet f = (i % 2 == 0) ? Facet::kCompliant : Facet::kNoncompliant;
        const std::size_t base = batch.size();
        batch.push_back({random_tokens(rng, options.vocab_size), f, "policy" + std::to_string(i)});
        for (int k = 0; k < 3; ++k) batch.push_back({random_tokens(rng, options.vocab_size), std::nullopt, "code"});
        entries.push_back({f, base, base + 1, base + 2, base + 3});
      }
      MarginConfig margins;
      margins.alpha1 = margin(rng);
      margins.alpha2 = margin(rng);
      loss = [entries, margins](const RowMatrix& e) {
        auto q = quadruplet_loss(e, entries, margins, Reduction::kMean);
        return LossEvaluation{q.total, std::move(q.grad)};
      };
    }
    out.batch_size = batch.size();

    GradCheckOptions check;
    check.epsilon = options.epsilon;
    check.seed = options.seed + c;
    auto fb = forward_backward(batch, loss, params, check.regularizers);
    if (options.perturbation != 0.0) fb.grads.b2(0) += options.perturbation;
    out.report = grad_check_against(params, batch, loss, fb.grads, check);
    out.attempts = attempt + 1;
    if (out.report.nonsmooth > 0 && attempt + 1 < 100) continue;
    cases.push_back(std::move(out));
    break;
   }
  }
  return cases;
}

}  // namespace p2c
