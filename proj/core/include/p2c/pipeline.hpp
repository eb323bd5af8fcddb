#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2c/assessor.hpp"
#include "p2c/model.hpp"
#include "p2c/synth.hpp"
#include "p2c/trainer.hpp"

namespace p2c {

/// End-to-end run on the synthetic benchmark: vocabulary, optional Doc/CC
/// pre-training, bug-fix pre-fine-tuning, held-out evaluation.
struct PipelineConfig {
  std::uint64_t seed = 0;
  SynthOptions synth;
  PretrainingOptions pretraining;
  std::size_t vocab_size = 1200;
  EncoderShape shape{0, 64, 128};
  double embedding_init = 1.0;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  std::size_t passage_len = 8;
  bool doc = true;
  bool cc = true;
  /// Interleave Doc and CC in one stage instead of Doc then CC.
  bool joint = false;
  bool filter = true;
  TrainConfig pretrain;
  TrainConfig finetune;
  /// Relevance threshold for evaluation. Unset: calibrated on the training
  /// families' benchmark policies.
  std::optional<double> alpha;

  /// Benchmark settings: larger pre-training corpora, SGD with momentum,
  /// 100 epochs, BMT margin 1.0.
  PipelineConfig();
};

struct PipelineResult {
  Model model;
  std::vector<std::string> stages;
  std::vector<TrainReport> reports;
  double retained_fraction = 1.0;
  double alpha = 0.0;
  EvalReport eval;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Fully determined by the config; sub-seeds are derived from `seed`.
PipelineResult run_synthetic_pipeline(const PipelineConfig& config);

/// Texts the vocabulary is trained on: pre-training corpora and bug-fix
/// records. Benchmark policies and snippets are excluded.
std::vector<std::string> vocabulary_texts(const PretrainingData& data);

}  // namespace p2c
