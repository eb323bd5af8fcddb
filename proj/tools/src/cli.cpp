#include "p2c/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "p2c/assessor.hpp"
#include "p2c/corpus_io.hpp"
#include "p2c/error.hpp"
#include "p2c/gradcheck.hpp"
#include "p2c/index.hpp"
#include "p2c/model.hpp"
#include "p2c/service.hpp"
#include "p2c/synth.hpp"
#include "p2c/trainer.hpp"

// After the Eigen-based headers: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace p2c::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct SplitIds {
  std::vector<std::string> train;
  std::vector<std::string> heldout;
};

SplitIds read_split(const fs::path& path) {
  const json j = read_json_file(path);
  try {
    return {j.at("train_policy_ids").get<std::vector<std::string>>(),
            j.at("heldout_policy_ids").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
}

// Model source shared by the training subcommands: continue from a model
// file, or initialise fresh params over a vocabulary.
struct ModelFlags {
  std::string model;
  std::string vocab;
  std::size_t dim = 64;
  std::size_t hidden = 128;
  double init_scale = 1.0;
  std::size_t max_seq_len = kDefaultMaxSeqLen;

  void add(CLI::App& app) {
    auto* m = app.add_option("--model", model, "Starting model file");
    auto* v = app.add_option("--vocab", vocab, "Vocabulary file for a freshly initialised model");
    m->excludes(v);
    app.add_option("--dim", dim, "Embedding dimension (fresh model)")->capture_default_str();
    app.add_option("--hidden", hidden, "Hidden width (fresh model)")->capture_default_str();
    app.add_option("--init-scale", init_scale, "Token embedding init range (fresh model)")->capture_default_str();
    app.add_option("--max-seq-len", max_seq_len, "Token budget per item (fresh model)")->capture_default_str();
  }

  Model obtain(FacetMode mode, std::uint64_t seed) const {
    if (!model.empty()) return load_model(model);
    require(!vocab.empty(), "pass --model or --vocab");
    Model m;
    m.vocab = Vocabulary::load(vocab);
    m.max_seq_len = max_seq_len;
    m.params = EncoderParams::initialize({m.vocab.size(), dim, hidden}, mode, seed, m.vocab.hash(), init_scale);
    return m;
  }
};

struct TrainFlags {
  std::string config;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<double> momentum;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> patience;
  std::optional<std::string> loss_mode;
  std::optional<std::string> mining;
  std::optional<std::string> facet_mode;
  std::string report;
  std::string curve;

  void add(CLI::App& app) {
    app.add_option("--config", config, "TrainConfig JSON file");
    app.add_option("--epochs", epochs);
    app.add_option("--lr", learning_rate);
    app.add_option("--momentum", momentum);
    app.add_option("--batch-size", batch_size);
    app.add_option("--patience", patience);
    app.add_option("--loss-mode", loss_mode, "bmt or quadruplet");
    app.add_option("--mining", mining, "batch_all, batch_hard, semi_hard or soft_margin");
    app.add_option("--facet-mode", facet_mode, "prefixed or masked");
    app.add_option("--report", report, "Write the training report JSON here");
    app.add_option("--curve", curve, "Write the per-epoch CSV here");
  }

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig c = config.empty() ? TrainConfig{} : TrainConfig::from_json(read_json_file(config));
    c.seed = seed;
    if (epochs) c.epochs = *epochs;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (momentum) c.momentum = *momentum;
    if (batch_size) c.batch_size = *batch_size;
    if (patience) c.patience = *patience;
    if (loss_mode) c.loss_mode = parse_loss_mode(*loss_mode);
    if (mining) c.mining = parse_mining(*mining);
    if (facet_mode) c.facet_mode = parse_facet_mode(*facet_mode);
    c.validate();
    return c;
  }

  void write_outputs(const TrainReport& r) const {
    if (!report.empty()) write_text_file(report, r.to_json().dump(2) + "\n");
    if (!curve.empty()) write_text_file(curve, r.to_csv());
  }
};

// Fresh models take their facet mode from the config; loaded models impose
// theirs on it.
TrainConfig align_facet_mode(TrainConfig c, const Model& m) {
  c.facet_mode = m.params.facet_mode;
  return c;
}

void print_summary(std::ostream& out, const TrainReport& r) {
  json j = r.to_json();
  j.erase("epochs");
  out << j.dump() << "\n";
}

std::vector<std::string> bpe_texts(const std::vector<std::string>& inputs) {
  std::vector<std::string> texts;
  for (const auto& input : inputs) {
    const fs::path path(input);
    if (path.extension() == ".jsonl") {
      for (const auto& row : read_jsonl(path)) {
        for (const char* key : {"text", "code", "comment", "code_before", "code_after"}) {
          if (row.contains(key) && row.at(key).is_string()) texts.push_back(row.at(key).get<std::string>());
        }
      }
    } else {
      for (auto& p : read_paragraphs(path)) texts.push_back(std::move(p));
    }
  }
  return texts;
}

std::vector<TrainConfig> grid_configs(const json& grid, std::uint64_t seed) {
  const auto with_seed = [&](const json& j) {
    TrainConfig c = TrainConfig::from_json(j);
    if (!j.contains("seed")) c.seed = seed;
    return c;
  };
  std::vector<TrainConfig> configs;
  if (grid.is_array()) {
    for (const auto& j : grid) configs.push_back(with_seed(j));
    return configs;
  }
  require(grid.is_object(), "grid: expected an array of configs or an object of axes");
  for (const auto& [key, value] : grid.items()) {
    if (key != "base" && key != "alpha1" && key != "alpha2" && key != "alpha" && key != "mining" &&
        key != "loss_mode") {
      fail(ErrorCode::kInvalidInput, "grid: unknown axis '" + key + "'");
    }
    require(key == "base" || value.is_array(), "grid: axis '" + key + "' must be an array");
  }
  const json base = grid.value("base", json::object());
  const auto axis = [&](const char* key, const json& fallback) {
    return grid.contains(key) ? grid.at(key) : json::array({fallback});
  };
  const TrainConfig b = with_seed(base);
  for (const auto& a1 : axis("alpha1", b.margins.alpha1)) {
    for (const auto& a2 : axis("alpha2", b.margins.alpha2)) {
      for (const auto& a : axis("alpha", b.margins.alpha)) {
        for (const auto& mining : axis("mining", std::string(to_string(b.mining)))) {
          for (const auto& loss : axis("loss_mode", std::string(to_string(b.loss_mode)))) {
            TrainConfig c = b;
            c.margins.alpha1 = a1.get<double>();
            c.margins.alpha2 = a2.get<double>();
            c.margins.alpha = a.get<double>();
            c.mining = parse_mining(mining.get<std::string>());
            c.loss_mode = parse_loss_mode(loss.get<std::string>());
            c.validate();
            configs.push_back(c);
          }
        }
      }
    }
  }
  return configs;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

service::ServedModel load_served(std::string tag, const std::string& model_path, const std::string& index_path) {
  auto model = std::make_shared<const Model>(load_model(model_path));
  auto index = std::make_shared<const EmbeddingIndex>(load_index(index_path));
  return {std::move(tag), std::move(model), std::move(index)};
}

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::kNonFinite ? kExitInternalError : kExitUserError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"p2c: policy-to-code embedding pipeline, search and review service"};
  app.name("p2c");
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Seed for all randomness")->capture_default_str(); };

  // train-bpe
  auto* bpe_cmd = app.add_subcommand("train-bpe", "Train a byte-level BPE vocabulary");
  std::vector<std::string> bpe_inputs;
  std::size_t vocab_size = 1200;
  std::string bpe_out;
  bpe_cmd->add_option("--input", bpe_inputs, "Text (blank-line paragraphs) or JSONL files")->required();
  bpe_cmd->add_option("--vocab-size", vocab_size)->capture_default_str();
  bpe_cmd->add_option("--out", bpe_out)->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic benchmark and pre-training corpora");
  add_seed(synth_cmd);
  SynthOptions synth_opts;
  PretrainingOptions pre_opts;
  pre_opts.paragraphs_per_stem = 6;
  pre_opts.cc_pairs_per_stem = 12;
  pre_opts.bugfixes_per_family = 30;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--families", synth_opts.n_policy_families)->capture_default_str();
  synth_cmd->add_option("--heldout", synth_opts.n_heldout_families)->capture_default_str();
  synth_cmd->add_option("--snippets-per-family", synth_opts.snippets_per_family)->capture_default_str();
  synth_cmd->add_option("--distractors", synth_opts.n_distractors)->capture_default_str();
  synth_cmd->add_option("--paragraphs-per-stem", pre_opts.paragraphs_per_stem)->capture_default_str();
  synth_cmd->add_option("--cc-pairs-per-stem", pre_opts.cc_pairs_per_stem)->capture_default_str();
  synth_cmd->add_option("--bugfixes-per-family", pre_opts.bugfixes_per_family)->capture_default_str();
  synth_cmd->add_option("--noise", pre_opts.bugfix_noise_fraction)->capture_default_str();

  // pretrain-doc / pretrain-cc / finetune
  ModelFlags doc_model, cc_model, ft_model;
  TrainFlags doc_train, cc_train, ft_train;
  std::string doc_docs, doc_out, cc_pairs, cc_out, ft_bugfixes, ft_out;
  std::size_t passage_len = 8;
  bool no_filter = false;

  auto* doc_cmd = app.add_subcommand("pretrain-doc", "BMT pre-training on documentation passages");
  add_seed(doc_cmd);
  doc_model.add(*doc_cmd);
  doc_train.add(*doc_cmd);
  doc_cmd->add_option("--docs", doc_docs, "Paragraph file")->required();
  doc_cmd->add_option("--passage-len", passage_len, "Words per passage")->capture_default_str();
  doc_cmd->add_option("--out", doc_out)->required();

  auto* cc_cmd = app.add_subcommand("pretrain-cc", "BMT pre-training on code-comment pairs");
  add_seed(cc_cmd);
  cc_model.add(*cc_cmd);
  cc_train.add(*cc_cmd);
  cc_cmd->add_option("--pairs", cc_pairs, "cc_pairs.jsonl")->required();
  cc_cmd->add_option("--out", cc_out)->required();

  auto* ft_cmd = app.add_subcommand("finetune", "Pre-fine-tune on bug-fix records");
  add_seed(ft_cmd);
  ft_model.add(*ft_cmd);
  ft_train.add(*ft_cmd);
  ft_cmd->add_option("--bugfixes", ft_bugfixes, "bugfixes.jsonl")->required();
  ft_cmd->add_flag("--no-filter", no_filter, "Keep comments that are not policy-like");
  ft_cmd->add_option("--out", ft_out)->required();

  // gridsearch
  auto* grid_cmd = app.add_subcommand("gridsearch", "Train one stage per config and keep the best");
  add_seed(grid_cmd);
  ModelFlags grid_model;
  grid_model.add(*grid_cmd);
  std::string grid_file, grid_stage = "finetune", grid_data, grid_out, grid_table, grid_report;
  grid_cmd->add_option("--grid", grid_file, "Array of TrainConfigs, or {base, alpha1, alpha2, alpha, mining, loss_mode}")
      ->required();
  grid_cmd->add_option("--stage", grid_stage, "doc, cc or finetune")
      ->check(CLI::IsMember({"doc", "cc", "finetune"}))
      ->capture_default_str();
  grid_cmd->add_option("--data", grid_data, "Stage input: docs.txt, cc_pairs.jsonl or bugfixes.jsonl")->required();
  grid_cmd->add_option("--passage-len", passage_len)->capture_default_str();
  grid_cmd->add_flag("--no-filter", no_filter);
  grid_cmd->add_option("--out", grid_out, "Best model")->required();
  grid_cmd->add_option("--table", grid_table, "Margin table CSV");
  grid_cmd->add_option("--report", grid_report, "All reports as JSON");

  // index
  auto* index_cmd = app.add_subcommand("index", "Embed snippets into an index file");
  std::string idx_model, idx_snippets, idx_out;
  index_cmd->add_option("--model", idx_model)->required();
  index_cmd->add_option("--snippets", idx_snippets)->required();
  index_cmd->add_option("--out", idx_out)->required();

  // search
  auto* search_cmd = app.add_subcommand("search", "Top-k snippets for one faceted policy");
  std::string s_model, s_index, s_policy, s_facet;
  std::size_t s_k = 5;
  search_cmd->add_option("--model", s_model)->required();
  search_cmd->add_option("--index", s_index)->required();
  search_cmd->add_option("--policy", s_policy, "Policy text")->required();
  search_cmd->add_option("--facet", s_facet, "compliant or noncompliant")->required();
  search_cmd->add_option("--k", s_k)->capture_default_str();

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Compliant, non-compliant or irrelevant verdict");
  std::string c_model, c_policy, c_code, c_code_file;
  double alpha = 1.0;
  classify_cmd->add_option("--model", c_model)->required();
  classify_cmd->add_option("--policy", c_policy)->required();
  auto* code_opt = classify_cmd->add_option("--code", c_code);
  auto* code_file_opt = classify_cmd->add_option("--code-file", c_code_file);
  code_opt->excludes(code_file_opt);
  classify_cmd->add_option("--alpha", alpha, "Relevance threshold")->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy and per-facet MRR on a labelled corpus");
  add_seed(eval_cmd);
  std::string e_model, e_policies, e_snippets, e_index, e_split, e_ids;
  std::optional<double> e_alpha;
  eval_cmd->add_option("--model", e_model)->required();
  eval_cmd->add_option("--policies", e_policies)->required();
  eval_cmd->add_option("--snippets", e_snippets)->required();
  eval_cmd->add_option("--index", e_index, "Prebuilt index (built from --snippets if absent)");
  eval_cmd->add_option("--split", e_split, "split.json: evaluate held-out ids, calibrate on train ids");
  eval_cmd->add_option("--policy-ids", e_ids, "Comma-separated policy ids to evaluate");
  eval_cmd->add_option("--alpha", e_alpha, "Relevance threshold (calibrated when omitted)");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  add_seed(gc_cmd);
  GradientSuiteOptions gc_opts;
  std::string gc_loss = "all", gc_facet = "all";
  double tolerance = 1e-4;
  gc_cmd->add_option("--configs", gc_opts.configs)->capture_default_str();
  gc_cmd->add_option("--vocab-size", gc_opts.vocab_size)->capture_default_str();
  gc_cmd->add_option("--dim", gc_opts.dim)->capture_default_str();
  gc_cmd->add_option("--hidden", gc_opts.hidden)->capture_default_str();
  gc_cmd->add_option("--epsilon", gc_opts.epsilon)->capture_default_str();
  gc_cmd->add_option("--tolerance", tolerance)->capture_default_str();
  gc_cmd->add_option("--loss-mode", gc_loss)->check(CLI::IsMember({"all", "bmt", "quadruplet"}))->capture_default_str();
  gc_cmd->add_option("--facet-mode", gc_facet)->check(CLI::IsMember({"all", "prefixed", "masked"}))->capture_default_str();
  gc_cmd->add_option("--inject-error", gc_opts.perturbation, "Added to one analytic gradient coordinate");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP search, classify and judgment service");
  std::string sv_model = env_or("P2C_MODEL", ""), sv_index = env_or("P2C_INDEX", ""),
              sv_judgments = env_or("P2C_JUDGMENTS", ""), sv_snippets = env_or("P2C_SNIPPETS", ""),
              sv_tag = "default", sv_host = "127.0.0.1";
  int sv_port = std::stoi(env_or("P2C_PORT", "8080"));
  std::vector<std::string> sv_extra;
  service::ServiceOptions sv_opts;
  serve_cmd->add_option("--model", sv_model, "Model file [P2C_MODEL]");
  serve_cmd->add_option("--index", sv_index, "Index file [P2C_INDEX]");
  serve_cmd->add_option("--snippets", sv_snippets, "Snippet JSONL supplying code bodies [P2C_SNIPPETS]");
  serve_cmd->add_option("--judgments", sv_judgments, "Judgment store [P2C_JUDGMENTS]");
  serve_cmd->add_option("--port", sv_port, "0 picks a free port [P2C_PORT]");
  serve_cmd->add_option("--host", sv_host)->capture_default_str();
  serve_cmd->add_option("--tag", sv_tag, "model_tag of --model")->capture_default_str();
  serve_cmd->add_option("--extra-model", sv_extra, "Additional model as tag=model.json:index.bin");
  serve_cmd->add_option("--alpha", sv_opts.alpha, "Relevance threshold for /classify")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUserError;
  }

  try {
    if (*bpe_cmd) {
      const auto texts = bpe_texts(bpe_inputs);
      require(!texts.empty(), "train-bpe: no input text");
      const Vocabulary vocab = train_bpe(texts, vocab_size);
      vocab.save(bpe_out);
      out << "vocabulary " << vocab.size() << " tokens, hash " << vocab.hash() << "\n";
    } else if (*synth_cmd) {
      synth_opts.seed = seed;
      pre_opts.seed = seed + 1;
      const SyntheticCorpus bench = synth_corpus(synth_opts);
      const PretrainingData data = synth_pretraining(bench, pre_opts);
      const fs::path dir(synth_out);
      fs::create_directories(dir);
      write_policies(dir / "policies.jsonl", bench.corpus.policies());
      write_snippets(dir / "snippets.jsonl", bench.corpus.snippets());
      write_paragraphs(dir / "docs.txt", data.doc_paragraphs);
      write_cc_pairs(dir / "cc_pairs.jsonl", data.code_comment_pairs);
      write_bugfixes(dir / "bugfixes.jsonl", data.bugfixes);
      write_text_file(dir / "split.json",
                      json{{"train_policy_ids", bench.train_policy_ids}, {"heldout_policy_ids", bench.heldout_policy_ids}}
                              .dump(2) +
                          "\n");
      out << "policies " << bench.corpus.policies().size() << ", snippets " << bench.corpus.snippets().size()
          << ", paragraphs " << data.doc_paragraphs.size() << ", cc pairs " << data.code_comment_pairs.size()
          << ", bug-fixes " << data.bugfixes.size() << "\n";
    } else if (*doc_cmd) {
      TrainConfig config = doc_train.resolve(seed);
      Model model = doc_model.obtain(config.facet_mode, seed);
      config = align_facet_mode(config, model);
      const auto passages = segment_documentation(read_paragraphs(doc_docs), passage_len);
      TrainingPipeline pipeline(std::move(model));
      const TrainReport& r = pipeline.run_doc(passages, config);
      save_model(doc_out, pipeline.model());
      doc_train.write_outputs(r);
      print_summary(out, r);
    } else if (*cc_cmd) {
      TrainConfig config = cc_train.resolve(seed);
      Model model = cc_model.obtain(config.facet_mode, seed);
      config = align_facet_mode(config, model);
      const auto pairs = read_cc_pairs(cc_pairs);
      TrainingPipeline pipeline(std::move(model));
      const TrainReport& r = pipeline.run_cc(pairs, config);
      save_model(cc_out, pipeline.model());
      cc_train.write_outputs(r);
      print_summary(out, r);
    } else if (*ft_cmd) {
      TrainConfig config = ft_train.resolve(seed);
      Model model = ft_model.obtain(config.facet_mode, seed);
      config = align_facet_mode(config, model);
      const auto records = read_bugfixes(ft_bugfixes);
      const BugfixDataset dataset = build_bugfix_dataset(records, !no_filter, seed);
      TrainingPipeline pipeline(std::move(model));
      const TrainReport& r = pipeline.run_prefinetune(dataset, config);
      save_model(ft_out, pipeline.model());
      ft_train.write_outputs(r);
      print_summary(out, r);
    } else if (*grid_cmd) {
      auto configs = grid_configs(read_json_file(grid_file), seed);
      require(!configs.empty(), "gridsearch: the grid is empty");
      Model model = grid_model.obtain(configs.front().facet_mode, seed);
      for (auto& c : configs) c = align_facet_mode(c, model);
      TrainFn train_fn;
      std::vector<LabeledItem> passages;
      std::vector<CodeCommentPair> pairs;
      BugfixDataset dataset;
      if (grid_stage == "doc") {
        passages = segment_documentation(read_paragraphs(grid_data), passage_len);
        train_fn = [&](const TrainConfig& c) { return pretrain_doc(model, passages, c); };
      } else if (grid_stage == "cc") {
        pairs = read_cc_pairs(grid_data);
        train_fn = [&](const TrainConfig& c) { return pretrain_cc(model, pairs, c); };
      } else {
        dataset = build_bugfix_dataset(read_bugfixes(grid_data), !no_filter, seed);
        train_fn = [&](const TrainConfig& c) { return prefinetune(model, dataset, c); };
      }
      const GridSearchResult result = grid_search(configs, train_fn);
      Model best = model;
      best.params = result.best_params;
      save_model(grid_out, best);
      if (!grid_table.empty()) write_text_file(grid_table, result.margin_table_csv());
      if (!grid_report.empty()) write_text_file(grid_report, result.to_json().dump(2) + "\n");
      out << result.margin_table_csv();
      out << "best config " << result.best_index << ": " << result.best_config.to_json().dump() << "\n";
    } else if (*index_cmd) {
      const Model model = load_model(idx_model);
      const auto snippets = read_snippets(idx_snippets);
      const EmbeddingIndex index = build_index(snippets, model);
      save_index(idx_out, index);
      out << "indexed " << index.size() << " snippets, model " << index.model_hash() << "\n";
    } else if (*search_cmd) {
      const Model model = load_model(s_model);
      const EmbeddingIndex index = load_index(s_index);
      const auto hits = search(s_policy, parse_facet(s_facet), index, s_k, model);
      for (const auto& h : hits) out << h.rank << "\t" << h.snippet_id << "\t" << h.distance << "\n";
    } else if (*classify_cmd) {
      const Model model = load_model(c_model);
      std::string code = c_code;
      if (!c_code_file.empty()) {
        std::ifstream in(c_code_file, std::ios::binary);
        if (!in) fail(ErrorCode::kIo, "cannot read " + c_code_file);
        code.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      }
      require(!code.empty(), "classify: pass --code or --code-file");
      out << classify(c_policy, code, model, alpha).to_json().dump() << "\n";
    } else if (*eval_cmd) {
      const Model model = load_model(e_model);
      const Corpus corpus(read_policies(e_policies), read_snippets(e_snippets));
      const EmbeddingIndex index = e_index.empty() ? build_index(corpus.snippets(), model) : load_index(e_index);
      require_fresh(index, model);
      std::vector<std::string> ids;
      std::optional<SplitIds> split_ids;
      if (!e_split.empty()) split_ids = read_split(e_split);
      if (!e_ids.empty()) {
        ids = split_csv(e_ids);
      } else if (split_ids) {
        ids = split_ids->heldout;
      } else {
        for (const auto& p : corpus.policies()) {
          if (p.source != PolicySource::kBugfixComment) ids.push_back(p.id);
        }
      }
      double a = 0.0;
      if (e_alpha) {
        a = *e_alpha;
      } else {
        require(split_ids.has_value(), "eval: pass --alpha, or --split to calibrate on its train ids");
        a = calibrate_alpha(corpus, split_ids->train, index, model, seed);
      }
      out << evaluate(corpus, ids, index, model, a, seed).to_json().dump() << "\n";
    } else if (*gc_cmd) {
      gc_opts.seed = seed;
      bool ok = true;
      for (const LossMode lm : {LossMode::kBmt, LossMode::kQuadruplet}) {
        if (gc_loss != "all" && gc_loss != to_string(lm)) continue;
        for (const FacetMode fm : {FacetMode::kPrefixed, FacetMode::kMasked}) {
          if (gc_facet != "all" && gc_facet != to_string(fm)) continue;
          double worst = 0.0;
          std::size_t checked = 0;
          for (const auto& c : run_gradient_suite(lm, fm, gc_opts)) {
            worst = std::max(worst, c.report.max_relative_error);
            checked += c.report.checked;
          }
          const bool pass = worst <= tolerance;
          ok = ok && pass;
          out << to_string(lm) << "\t" << to_string(fm) << "\tconfigs=" << gc_opts.configs << "\tchecked=" << checked
              << "\tmax_rel_error=" << worst << "\t" << (pass ? "ok" : "FAILED") << "\n";
        }
      }
      return ok ? kExitOk : kExitInternalError;
    } else if (*serve_cmd) {
      require(!sv_model.empty() && !sv_index.empty(), "serve: --model and --index (or P2C_MODEL, P2C_INDEX) are required");
      require(!sv_snippets.empty(), "serve: --snippets (or P2C_SNIPPETS) is required");
      require(!sv_judgments.empty(), "serve: --judgments (or P2C_JUDGMENTS) is required");
      std::vector<service::ServedModel> models;
      models.push_back(load_served(sv_tag, sv_model, sv_index));
      for (const auto& entry : sv_extra) {
        const auto eq = entry.find('=');
        const auto colon = entry.rfind(':');
        require(eq != std::string::npos && colon != std::string::npos && colon > eq,
                "serve: --extra-model expects tag=model.json:index.bin");
        models.push_back(
            load_served(entry.substr(0, eq), entry.substr(eq + 1, colon - eq - 1), entry.substr(colon + 1)));
      }
      const auto snippets = read_snippets(sv_snippets);
      const service::Service svc(std::move(models), snippets, std::make_shared<JudgmentStore>(sv_judgments), sv_opts);
      httplib::Server server;
      svc.mount(server);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      int port = sv_port;
      if (port == 0) {
        port = server.bind_to_any_port(sv_host);
      } else if (!server.bind_to_port(sv_host, port)) {
        fail(ErrorCode::kIo, "cannot bind " + sv_host + ":" + std::to_string(port));
      }
      out << "listening on " << sv_host << ":" << port << " model " << svc.default_model().model->hash()
          << std::endl;
      server.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  }
  return kExitOk;
}

}  // namespace p2c::cli
