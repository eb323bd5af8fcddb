#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "p2c/corpus.hpp"
#include "p2c/encoder.hpp"
#include "p2c/losses.hpp"
#include "p2c/model.hpp"
#include "p2c/synth.hpp"

namespace p2c {

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  MarginConfig margins;
  FacetMode facet_mode = FacetMode::kPrefixed;
  LossMode loss_mode = LossMode::kBmt;
  Mining mining = Mining::kBatchAll;
  Reduction reduction = Reduction::kMean;
  DistanceForm distance = DistanceForm::kSquaredEuclidean;
  std::uint64_t seed = 0;
  RegularizerWeights regularizers;
  std::size_t patience = 5;
  double momentum = 0.0;
  /// Share of groups held out for validation. 0 validates on the training
  /// groups themselves.
  double validation_fraction = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mrr = 0.0;
};

struct TrainReport {
  std::string stage;
  /// Validation metrics of the incoming params.
  EpochStats initial;
  std::vector<EpochStats> epochs;
  /// 0 when no epoch beat the incoming params.
  std::size_t best_epoch = 0;
  double best_val_mrr = 0.0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  std::size_t train_groups = 0;
  std::size_t validation_groups = 0;
  std::size_t train_items = 0;
  std::vector<std::string> notes;
  std::string params_hash;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
  /// epoch,train_loss,val_loss,val_mrr; epoch 0 is the incoming params.
  std::string to_csv() const;
};

/// Items that travel together: one split side, one batch. Labels are local to
/// the unit and re-based when batches are composed.
struct TrainingUnit {
  std::string group;
  std::vector<LabeledItem> items;
  /// Quadruplet mode only; indices into `items`.
  std::vector<QuadrupletEntry> quadruplets;
};

struct SplitResult {
  std::vector<TrainingUnit> train;
  std::vector<TrainingUnit> validation;
};

/// Seeded shuffle of the distinct groups, then round(ratio * groups) of them
/// (clamped to leave one on each side) go to training.
SplitResult split(std::vector<TrainingUnit> units, double ratio, std::uint64_t seed);

/// params - lr * grads. Throws kNonFinite if the update is not finite.
EncoderParams sgd_step(const EncoderParams& params, const GradientBundle& grads, double learning_rate);

class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum);
  void step(EncoderParams& params, const GradientBundle& grads);

 private:
  double lr_;
  double momentum_;
  GradientBundle velocity_;
  bool has_velocity_ = false;
};

struct StageResult {
  EncoderParams params;
  TrainReport report;
};

/// Generic loop shared by every stage. `model` supplies the vocabulary and
/// the starting params.
StageResult train_units(std::string stage, const Model& model, const std::vector<TrainingUnit>& train,
                        const std::vector<TrainingUnit>& validation, const TrainConfig& config);

/// Passages sharing a label come from the same paragraph.
StageResult pretrain_doc(const Model& model, std::span<const LabeledItem> passages, const TrainConfig& config);
StageResult pretrain_cc(const Model& model, std::span<const CodeCommentPair> pairs, const TrainConfig& config);
/// Doc and CC batches interleaved in one loop.
StageResult pretrain_joint(const Model& model, std::span<const LabeledItem> passages,
                           std::span<const CodeCommentPair> pairs, const TrainConfig& config);

/// Policies and snippets reinterpreted from bug-fix records, one quadruplet
/// pair per kept record.
struct BugfixDataset {
  Corpus corpus;
  std::vector<QuadrupletPair> pairs;
  std::size_t total_records = 0;
  double retained_fraction = 0.0;
};

/// Irrelevant code is mined per record from the full pool with a seed fixed
/// by the record position, so a filtered dataset is a subset of the
/// unfiltered one.
BugfixDataset build_bugfix_dataset(std::span<const BugFixRecord> records, bool filter, std::uint64_t seed,
                                   const PolicyLikeness& predicate = default_policy_likeness);

StageResult prefinetune(const Model& model, const BugfixDataset& dataset, const TrainConfig& config);

struct GridSearchEntry {
  TrainConfig config;
  TrainReport report;
};

struct GridSearchResult {
  std::size_t best_index = 0;
  TrainConfig best_config;
  EncoderParams best_params;
  std::vector<GridSearchEntry> entries;

  /// alpha1,alpha2,alpha,mining,loss_mode,val_mrr,val_loss
  std::string margin_table_csv() const;
  nlohmann::json to_json() const;
};

using TrainFn = std::function<StageResult(const TrainConfig&)>;

/// Highest validation MRR wins; ties go to lower validation loss, then to
/// the earlier config.
GridSearchResult grid_search(std::span<const TrainConfig> configs, const TrainFn& train_fn);

/// Records which stages ran and rejects pre-training after pre-fine-tuning.
class TrainingPipeline {
 public:
  explicit TrainingPipeline(Model model) : model_(std::move(model)) {}

  const Model& model() const { return model_; }
  const std::vector<std::string>& stages() const { return stages_; }
  const std::vector<TrainReport>& reports() const { return reports_; }

  const TrainReport& run_doc(std::span<const LabeledItem> passages, const TrainConfig& config);
  const TrainReport& run_cc(std::span<const CodeCommentPair> pairs, const TrainConfig& config);
  const TrainReport& run_joint(std::span<const LabeledItem> passages, std::span<const CodeCommentPair> pairs,
                               const TrainConfig& config);
  const TrainReport& run_prefinetune(const BugfixDataset& dataset, const TrainConfig& config);

 private:
  const TrainReport& record(std::string stage, StageResult result);
  void require_pretraining_allowed(std::string_view stage) const;

  Model model_;
  std::vector<std::string> stages_;
  std::vector<TrainReport> reports_;
};

}  // namespace p2c
