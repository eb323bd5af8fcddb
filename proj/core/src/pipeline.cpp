#include "p2c/pipeline.hpp"

#include <chrono>

#include "p2c/corpus.hpp"
#include "p2c/index.hpp"

namespace p2c {

PipelineConfig::PipelineConfig() {
  pretraining.paragraphs_per_stem = 6;
  pretraining.cc_pairs_per_stem = 12;
  pretraining.bugfixes_per_family = 30;
  for (TrainConfig* c : {&pretrain, &finetune}) {
    c->learning_rate = 0.05;
    c->momentum = 0.9;
    c->epochs = 100;
    c->patience = 100;
    c->margins.alpha = 1.0;
  }
}

nlohmann::json PipelineResult::to_json() const {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : reports) reps.push_back(r.to_json());
  return {{"stages", stages},
          {"reports", reps},
          {"retained_fraction", retained_fraction},
          {"alpha", alpha},
          {"eval", eval.to_json()},
          {"model_hash", model.hash()},
          {"wall_seconds", wall_seconds}};
}

std::vector<std::string> vocabulary_texts(const PretrainingData& data) {
  std::vector<std::string> texts = data.doc_paragraphs;
  for (const auto& p : data.code_comment_pairs) {
    texts.push_back(p.code);
    texts.push_back(p.comment);
  }
  for (const auto& r : data.bugfixes) {
    texts.push_back(r.comment);
    texts.push_back(r.code_before);
    texts.push_back(r.code_after);
  }
  return texts;
}

PipelineResult run_synthetic_pipeline(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = config.seed;

  SynthOptions synth_options = config.synth;
  synth_options.seed = seed;
  const SyntheticCorpus bench = synth_corpus(synth_options);
  PretrainingOptions pre_options = config.pretraining;
  pre_options.seed = seed + 1;
  const PretrainingData data = synth_pretraining(bench, pre_options);

  Model model;
  model.vocab = train_bpe(vocabulary_texts(data), config.vocab_size);
  model.max_seq_len = config.max_seq_len;
  EncoderShape shape = config.shape;
  shape.vocab_size = model.vocab.size();
  model.params = EncoderParams::initialize(shape, config.finetune.facet_mode, seed + 2, model.vocab.hash(),
                                             config.embedding_init);

  TrainConfig pre = config.pretrain;
  pre.seed = seed + 3;
  pre.facet_mode = config.finetune.facet_mode;
  TrainConfig fine = config.finetune;
  fine.seed = seed + 4;

  TrainingPipeline pipeline(std::move(model));
  const auto passages = segment_documentation(data.doc_paragraphs, config.passage_len);
  if (config.doc && config.cc && config.joint) {
    pipeline.run_joint(passages, data.code_comment_pairs, pre);
  } else {
    if (config.doc) pipeline.run_doc(passages, pre);
    if (config.cc) pipeline.run_cc(data.code_comment_pairs, pre);
  }
  const BugfixDataset dataset = build_bugfix_dataset(data.bugfixes, config.filter, seed + 5);
  pipeline.run_prefinetune(dataset, fine);

  PipelineResult result;
  result.model = pipeline.model();
  result.stages = pipeline.stages();
  result.reports = pipeline.reports();
  result.retained_fraction = dataset.retained_fraction;

  const EmbeddingIndex index = build_index(bench.corpus.snippets(), result.model);
  result.alpha = config.alpha ? *config.alpha
                              : calibrate_alpha(bench.corpus, bench.train_policy_ids, index, result.model, seed + 6);
  result.eval = evaluate(bench.corpus, bench.heldout_policy_ids, index, result.model, result.alpha, seed + 7);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace p2c
