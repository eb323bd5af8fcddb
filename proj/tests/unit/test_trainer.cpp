#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "p2c/error.hpp"
#include "p2c/pipeline.hpp"
#include "p2c/trainer.hpp"
#include "test_support.hpp"

namespace p2c {
namespace {

struct Fixture {
  SyntheticCorpus synth;
  PretrainingData data;
  Model model;
};

Fixture make_fixture(std::uint64_t seed, FacetMode mode = FacetMode::kPrefixed) {
  SynthOptions so;
  so.seed = seed;
  so.n_policy_families = 8;
  so.n_heldout_families = 2;
  so.snippets_per_family = 4;
  so.n_distractors = 20;
  Fixture f;
  f.synth = synth_corpus(so);
  PretrainingOptions po;
  po.seed = seed + 1;
  po.bugfixes_per_family = 6;
  f.data = synth_pretraining(f.synth, po);
  f.model.vocab = train_bpe(vocabulary_texts(f.data), 300);
  f.model.params = EncoderParams::initialize({f.model.vocab.size(), 16, 32}, mode, seed, f.model.vocab.hash());
  return f;
}

TrainConfig quick_config(std::size_t epochs, std::uint64_t seed = 0) {
  TrainConfig c;
  c.epochs = epochs;
  c.seed = seed;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.momentum = 0.9;
  c.patience = epochs + 1;
  return c;
}

std::vector<TrainingUnit> groups(std::size_t n) {
  std::vector<TrainingUnit> units;
  for (std::size_t g = 0; g < n; ++g) {
    for (int k = 0; k < 3; ++k) {
      TrainingUnit u;
      u.group = "policy-" + std::to_string(g);
      u.items.push_back(LabeledItem{"item", Modality::kText, std::nullopt, 0, u.group});
      units.push_back(u);
    }
  }
  return units;
}

std::set<std::string> group_names(const std::vector<TrainingUnit>& units) {
  std::set<std::string> out;
  for (const auto& u : units) out.insert(u.group);
  return out;
}

TEST(Split, TenGroupsEightTwo) {
  const auto s = split(groups(10), 0.8, 3);
  EXPECT_EQ(group_names(s.train).size(), 8u);
  EXPECT_EQ(group_names(s.validation).size(), 2u);
  EXPECT_EQ(s.train.size() + s.validation.size(), 30u);
}

TEST(Split, SeedDeterminesSplit) {
  const auto a = split(groups(10), 0.8, 42);
  const auto b = split(groups(10), 0.8, 42);
  EXPECT_EQ(group_names(a.validation), group_names(b.validation));
  bool differs = false;
  for (std::uint64_t s = 0; s < 10 && !differs; ++s) {
    differs = group_names(split(groups(10), 0.8, s).validation) != group_names(a.validation);
  }
  EXPECT_TRUE(differs);
}

TEST(Split, NoGroupOnBothSides) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split(groups(7), 0.7, seed);
    const auto t = group_names(s.train);
    for (const auto& g : group_names(s.validation)) EXPECT_EQ(t.count(g), 0u) << g;
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split(groups(1), 0.8, 0), Error);
  EXPECT_THROW(split(groups(5), 1.0, 0), Error);
  EXPECT_THROW(split(groups(5), 0.0, 0), Error);
}

TEST(PretrainDoc, TwoParagraphsHaveTriplets) {
  const std::vector<std::string> paragraphs = {
      "always close the handle after use so descriptors are not leaked by the service when many requests "
      "arrive at once and the process keeps running for days",
      "never log the raw password because logs are shipped to many readers outside the team and are kept "
      "for months in storage that nobody audits"};
  const auto passages = segment_documentation(paragraphs, 8);
  std::vector<Label> labels;
  for (const auto& p : passages) labels.push_back(p.label);
  EXPECT_EQ(passages.size(), 6u);
  EXPECT_FALSE(enumerate_valid_triplets(labels).empty());
}

TEST(PretrainDoc, ZeroEpochsLeavesParamsUnchanged) {
  const Fixture f = make_fixture(1);
  const auto passages = segment_documentation(f.data.doc_paragraphs, 8);
  const auto r = pretrain_doc(f.model, passages, quick_config(0));
  EXPECT_EQ(model_hash(r.params), f.model.hash());
  EXPECT_TRUE(r.report.epochs.empty());
}

TEST(PretrainDoc, LossDecreasesMedianOverSeeds) {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture f = make_fixture(seed);
    const auto passages = segment_documentation(f.data.doc_paragraphs, 8);
    const auto r = pretrain_doc(f.model, passages, quick_config(20, seed));
    ASSERT_EQ(r.report.epochs.size(), 20u);
    ratios.push_back(r.report.epochs.back().train_loss / r.report.epochs.front().train_loss);
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LT(ratios[2], 1.0);
}

TEST(PretrainDoc, DegenerateCorpusRejected) {
  const Fixture f = make_fixture(2);
  // One passage per paragraph: no positive exists for any anchor.
  std::vector<LabeledItem> passages;
  for (Label l = 0; l < 6; ++l) passages.push_back({"passage text " + std::to_string(l), Modality::kText, {}, l, "p"});
  TrainConfig c = quick_config(1);
  c.validation_fraction = 0.0;
  try {
    pretrain_doc(f.model, passages, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
    EXPECT_NE(std::string(e.what()).find("degenerate corpus"), std::string::npos);
  }
}

TEST(PretrainCc, TwoPairsGiveEightTriplets) {
  // Labels as the trainer composes them: one shared label per pair.
  const std::vector<Label> labels = {0, 0, 1, 1};
  EXPECT_EQ(enumerate_valid_triplets(labels).size(), 8u);
}

TEST(PretrainCc, DuplicateCommentsFlagged) {
  const Fixture f = make_fixture(3);
  std::vector<CodeCommentPair> pairs(f.data.code_comment_pairs.begin(), f.data.code_comment_pairs.begin() + 10);
  pairs[1].comment = pairs[0].comment;
  TrainConfig c = quick_config(1);
  const auto r = pretrain_cc(f.model, pairs, c);
  ASSERT_FALSE(r.report.notes.empty());
  EXPECT_NE(r.report.notes.front().find("identical comment"), std::string::npos);
  EXPECT_THROW(pretrain_cc(f.model, std::span(pairs.data(), 1), c), Error);
}

TEST(PretrainCc, LossDecreases) {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture f = make_fixture(seed + 10);
    const auto r = pretrain_cc(f.model, f.data.code_comment_pairs, quick_config(20, seed));
    ratios.push_back(r.report.epochs.back().train_loss / r.report.epochs.front().train_loss);
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LT(ratios[2], 1.0);
}

TEST(Prefinetune, BmtUsesUnpivotAndZeroEpochsIsIdentity) {
  const Fixture f = make_fixture(4);
  const auto ds = build_bugfix_dataset(f.data.bugfixes, false, 7);
  const auto r = prefinetune(f.model, ds, quick_config(0));
  EXPECT_EQ(model_hash(r.params), f.model.hash());
  EXPECT_EQ(r.report.train_items % 5, 0u);  // five unpivoted items per record
}

TEST(Prefinetune, BeatsUntrainedBaselineMedianOverSeeds) {
  std::vector<double> gains;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture f = make_fixture(seed + 20);
    const auto ds = build_bugfix_dataset(f.data.bugfixes, true, seed);
    TrainConfig c = quick_config(15, seed);
    c.margins.alpha = 1.0;
    const auto r = prefinetune(f.model, ds, c);
    gains.push_back(r.report.best_val_mrr - r.report.initial.val_mrr);
  }
  std::sort(gains.begin(), gains.end());
  EXPECT_GT(gains[2], 0.0);
}

TEST(Prefinetune, QuadrupletModeRequiresFacetCoverage) {
  const Fixture f = make_fixture(5);
  BugfixDataset ds = build_bugfix_dataset(f.data.bugfixes, false, 1);
  for (auto& p : ds.pairs) p.noncompliant.reset();
  TrainConfig c = quick_config(1);
  c.loss_mode = LossMode::kQuadruplet;
  try {
    prefinetune(f.model, ds, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("facet coverage absent"), std::string::npos);
  }
  const auto full = build_bugfix_dataset(f.data.bugfixes, false, 1);
  EXPECT_NO_THROW(prefinetune(f.model, full, c));
}

TEST(Prefinetune, FilteredDatasetIsSubset) {
  const Fixture f = make_fixture(6);
  const auto all = build_bugfix_dataset(f.data.bugfixes, false, 9);
  const auto kept = build_bugfix_dataset(f.data.bugfixes, true, 9);
  EXPECT_LT(kept.pairs.size(), all.pairs.size());
  for (const auto& p : kept.pairs) {
    const bool found = std::any_of(all.pairs.begin(), all.pairs.end(), [&](const QuadrupletPair& q) {
      return q.compliant->policy_id == p.compliant->policy_id &&
             q.compliant->irrelevant_code_id == p.compliant->irrelevant_code_id;
    });
    EXPECT_TRUE(found) << p.compliant->policy_id;
  }
}

TEST(Prefinetune, ValidationGroupsNeverTrained) {
  const Fixture f = make_fixture(7);
  const auto ds = build_bugfix_dataset(f.data.bugfixes, false, 2);
  const auto r = prefinetune(f.model, ds, quick_config(1));
  EXPECT_GT(r.report.validation_groups, 0u);
  EXPECT_EQ(r.report.train_groups + r.report.validation_groups, ds.pairs.size());
}

TEST(Prefinetune, FacetModeMustMatchModel) {
  const Fixture f = make_fixture(8, FacetMode::kMasked);
  const auto ds = build_bugfix_dataset(f.data.bugfixes, false, 2);
  EXPECT_THROW(prefinetune(f.model, ds, quick_config(1)), Error);
  TrainConfig c = quick_config(1);
  c.facet_mode = FacetMode::kMasked;
  EXPECT_NO_THROW(prefinetune(f.model, ds, c));
}

TEST(GridSearch, SingleConfigIsItself) {
  const Fixture f = make_fixture(9);
  const auto ds = build_bugfix_dataset(f.data.bugfixes, false, 3);
  const std::vector<TrainConfig> configs = {quick_config(2)};
  const auto g = grid_search(configs, [&](const TrainConfig& c) { return prefinetune(f.model, ds, c); });
  EXPECT_EQ(g.best_index, 0u);
  EXPECT_EQ(g.entries.size(), 1u);
  EXPECT_EQ(g.best_config.to_json(), configs[0].to_json());
}

TEST(GridSearch, TrainedConfigBeatsZeroEpochs) {
  const Fixture f = make_fixture(10);
  const auto ds = build_bugfix_dataset(f.data.bugfixes, true, 3);
  TrainConfig trained = quick_config(15);
  trained.margins.alpha = 1.0;
  const std::vector<TrainConfig> configs = {quick_config(0), trained};
  const auto g = grid_search(configs, [&](const TrainConfig& c) { return prefinetune(f.model, ds, c); });
  EXPECT_EQ(g.best_index, 1u);
  EXPECT_EQ(model_hash(g.best_params), g.entries[1].report.params_hash);
}

TEST(GridSearch, MarginTableHasOneRowPerConfig) {
  GridSearchResult g;
  for (double a : {0.1, 0.5}) {
    TrainConfig c;
    c.margins.alpha = a;
    TrainReport r;
    r.best_val_mrr = a;
    g.entries.push_back({c, r});
  }
  const std::string csv = g.margin_table_csv();
  EXPECT_EQ(csv.rfind("alpha1,alpha2,alpha,mining,loss_mode,val_mrr,val_loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(GridSearch, TiesGoToLowerLossThenEarlierConfig) {
  std::vector<TrainConfig> configs(3);
  for (std::size_t i = 0; i < 3; ++i) configs[i].seed = i;
  const double losses[] = {0.5, 0.3, 0.3};
  const auto g = grid_search(configs, [&](const TrainConfig& c) {
    StageResult r{EncoderParams::initialize({10, 4, 4}, FacetMode::kPrefixed, c.seed), {}};
    r.report.best_val_mrr = 0.7;
    r.report.best_val_loss = losses[c.seed];
    return r;
  });
  EXPECT_EQ(g.best_index, 1u);
  EXPECT_THROW(grid_search({}, [](const TrainConfig&) { return StageResult{}; }), Error);
}

TEST(SgdStep, ZeroGradientsAndZeroRateAreIdentity) {
  const auto p = EncoderParams::initialize({20, 4, 6}, FacetMode::kMasked, 1);
  GradientBundle zero = p.weights.zeros_like();
  EXPECT_EQ(model_hash(sgd_step(p, zero, 0.1)), model_hash(p));
  GradientBundle ones = p.weights.zeros_like();
  ones.b2.setOnes();
  EXPECT_EQ(model_hash(sgd_step(p, ones, 0.0)), model_hash(p));
}

TEST(SgdStep, QuadraticToyLossDecreasesByClosedForm) {
  // L = 0.5 * ||b2||^2, grad = b2, so one step scales b2 by (1 - lr).
  auto p = EncoderParams::initialize({20, 4, 6}, FacetMode::kPrefixed, 2);
  p.weights.b2 << 1.0, -2.0, 0.5, 3.0;
  GradientBundle g = p.weights.zeros_like();
  g.b2 = p.weights.b2;
  const auto q = sgd_step(p, g, 0.1);
  EXPECT_NEAR(0.5 * q.weights.b2.squaredNorm(), 0.5 * 0.81 * p.weights.b2.squaredNorm(), 1e-12);
}

TEST(SgdStep, NonFiniteRejected) {
  const auto p = EncoderParams::initialize({20, 4, 6}, FacetMode::kPrefixed, 3);
  GradientBundle g = p.weights.zeros_like();
  g.w1(0, 0) = std::numeric_limits<double>::infinity();
  try {
    sgd_step(p, g, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
  g.w1(0, 0) = 1e308;
  EXPECT_THROW(sgd_step(p, g, 1e10), Error);
}

TEST(Pipeline, StageOrderEnforced) {
  const Fixture f = make_fixture(11);
  TrainingPipeline pipe(f.model);
  const auto passages = segment_documentation(f.data.doc_paragraphs, 8);
  pipe.run_doc(passages, quick_config(1));
  pipe.run_cc(f.data.code_comment_pairs, quick_config(1));
  pipe.run_prefinetune(build_bugfix_dataset(f.data.bugfixes, true, 1), quick_config(1));
  EXPECT_EQ(pipe.stages(), (std::vector<std::string>{"doc", "cc", "prefinetune"}));
  EXPECT_THROW(pipe.run_doc(passages, quick_config(1)), Error);
  EXPECT_THROW(pipe.run_cc(f.data.code_comment_pairs, quick_config(1)), Error);
}

TEST(Pipeline, ReproducibleParamsHash) {
  const auto run = [] {
    const Fixture f = make_fixture(12);
    TrainingPipeline pipe(f.model);
    pipe.run_cc(f.data.code_comment_pairs, quick_config(2, 5));
    pipe.run_prefinetune(build_bugfix_dataset(f.data.bugfixes, true, 5), quick_config(2, 5));
    return pipe.model().hash();
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainConfigJson, RoundTripAndUnknownKeys) {
  TrainConfig c = quick_config(7, 9);
  c.mining = Mining::kBatchHard;
  c.margins.alpha1 = 0.33;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["learning_rat"] = 0.1;
  EXPECT_THROW(TrainConfig::from_json(j), Error);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"margins", {{"beta", 1.0}}}}), Error);
  EXPECT_EQ(TrainConfig::from_json(nlohmann::json::object()).epochs, TrainConfig{}.epochs);
}

TEST(TrainReport, CsvHasInitialRow) {
  const Fixture f = make_fixture(13);
  const auto r = pretrain_cc(f.model, f.data.code_comment_pairs, quick_config(3));
  const std::string csv = r.report.to_csv();
  EXPECT_EQ(csv.rfind("epoch,train_loss,val_loss,val_mrr\n0,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

}  // namespace
}  // namespace p2c
