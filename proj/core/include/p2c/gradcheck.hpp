#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include <vector>

#include "p2c/encoder.hpp"
#include "p2c/losses.hpp"

namespace p2c {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// 0 checks every coordinate; otherwise a seeded sample of at least 200.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Coordinates where both gradients are below this magnitude are skipped.
  double skip_below = 1e-8;
  RegularizerWeights regularizers;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  /// Coordinates where the step-eps and step-eps/2 estimates disagree: the
  /// loss is not differentiable there (a mining selection flips within eps).
  /// They are excluded from max_relative_error.
  std::size_t nonsmooth = 0;
};

/// Total objective (batch loss plus active regularizers) without gradients.
double evaluate_objective(std::span<const EncoderInput> batch, const BatchLoss& loss, const EncoderParams& params,
                          const RegularizerWeights& reg = {});

/// Compares forward_backward against central differences at eps and eps/2,
/// Richardson-combined, scoring |a - n| / max(|a|, |n|) per coordinate.
GradCheckReport grad_check(const EncoderParams& params, std::span<const EncoderInput> batch, const BatchLoss& loss,
                           const GradCheckOptions& options = {});

/// Same comparison against caller-supplied analytic gradients.
GradCheckReport grad_check_against(const EncoderParams& params, std::span<const EncoderInput> batch,
                                   const BatchLoss& loss, const GradientBundle& analytic,
                                   const GradCheckOptions& options = {});

struct GradientSuiteOptions {
  std::size_t configs = 20;
  std::size_t vocab_size = 50;
  std::size_t dim = 8;
  std::size_t hidden = 16;
  std::uint64_t seed = 0;
  double epsilon = 1e-4;
  /// Added to one analytic coordinate before comparing. Non-zero values
  /// simulate a broken backward pass.
  double perturbation = 0.0;
};

struct GradientSuiteCase {
  std::size_t index = 0;
  LossMode loss_mode = LossMode::kBmt;
  FacetMode facet_mode = FacetMode::kPrefixed;
  Mining mining = Mining::kBatchAll;
  std::size_t batch_size = 0;
  /// Draws needed to land on a point where the loss is differentiable.
  std::size_t attempts = 1;
  GradCheckReport report;
};

/// Random small encoders and batches (mixed code, text and faceted policy
/// items) checked coordinate by coordinate. BMT cases cycle through every
/// mining strategy. A draw with a non-differentiable coordinate is replaced
/// by a fresh one.
std::vector<GradientSuiteCase> run_gradient_suite(LossMode loss_mode, FacetMode facet_mode,
                                                  const GradientSuiteOptions& options = {});

}  // namespace p2c
