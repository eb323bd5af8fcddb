#include "p2c/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "p2c/error.hpp"

namespace p2c {
namespace {

using json = nlohmann::json;

struct PreparedUnit {
  std::vector<EncoderInput> inputs;
  std::vector<Label> labels;
  std::vector<Modality> modalities;
  std::vector<QuadrupletEntry> quadruplets;
};

struct Batch {
  std::vector<EncoderInput> inputs;
  std::vector<Label> labels;
  std::vector<Modality> modalities;
  std::vector<QuadrupletEntry> quadruplets;
};

EncoderInput make_input(const Model& model, const LabeledItem& item) {
  if (item.modality == Modality::kCode) return model.code_input(item.content, item.origin);
  if (item.facet) return model.policy_input(item.content, *item.facet, item.origin);
  return model.text_input(item.content, item.origin);
}

PreparedUnit prepare(const Model& model, const TrainingUnit& unit) {
  PreparedUnit out;
  for (const auto& item : unit.items) {
    out.inputs.push_back(make_input(model, item));
    out.labels.push_back(item.label);
    out.modalities.push_back(item.modality);
  }
  out.quadruplets = unit.quadruplets;
  return out;
}

// Whole units are appended until a batch holds at least batch_size items.
// A short tail is folded into the previous batch so it is never alone.
std::vector<Batch> compose(const std::vector<PreparedUnit>& units, std::span<const std::size_t> order,
                           std::size_t batch_size) {
  std::vector<Batch> batches;
  Batch current;
  Label next_label = 0;
  const auto append = [&](Batch& b, const PreparedUnit& u) {
    const std::size_t offset = b.inputs.size();
    std::map<Label, Label> relabel;
    for (std::size_t i = 0; i < u.inputs.size(); ++i) {
      auto [it, inserted] = relabel.try_emplace(u.labels[i], next_label);
      if (inserted) ++next_label;
      b.inputs.push_back(u.inputs[i]);
      b.labels.push_back(it->second);
      b.modalities.push_back(u.modalities[i]);
    }
    for (auto q : u.quadruplets) {
      q.anchor += offset;
      q.matching += offset;
      q.opposite += offset;
      q.irrelevant += offset;
      b.quadruplets.push_back(q);
    }
  };
  for (std::size_t idx : order) {
    append(current, units[idx]);
    if (current.inputs.size() >= batch_size) {
      batches.push_back(std::move(current));
      current = Batch{};
    }
  }
  if (!current.inputs.empty()) {
    if (!batches.empty() && 2 * current.inputs.size() < batch_size) {
      Batch& last = batches.back();
      const std::size_t offset = last.inputs.size();
      for (auto& q : current.quadruplets) {
        q.anchor += offset;
        q.matching += offset;
        q.opposite += offset;
        q.irrelevant += offset;
      }
      last.inputs.insert(last.inputs.end(), current.inputs.begin(), current.inputs.end());
      last.labels.insert(last.labels.end(), current.labels.begin(), current.labels.end());
      last.modalities.insert(last.modalities.end(), current.modalities.begin(), current.modalities.end());
      last.quadruplets.insert(last.quadruplets.end(), current.quadruplets.begin(), current.quadruplets.end());
    } else {
      batches.push_back(std::move(current));
    }
  }
  return batches;
}

bool has_valid_triplet(std::span<const Label> labels) {
  std::unordered_map<Label, std::size_t> counts;
  for (Label l : labels) ++counts[l];
  if (counts.size() < 2) return false;
  return std::any_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; });
}

LossEvaluation objective(const Batch& batch, const TrainConfig& config, const RowMatrix& e) {
  if (config.loss_mode == LossMode::kQuadruplet) {
    auto q = quadruplet_loss(e, batch.quadruplets, config.margins, Reduction::kMean, config.distance);
    return {q.total, std::move(q.grad)};
  }
  BmtOptions opts{config.margins.alpha, config.mining, config.reduction, config.distance};
  auto b = bmt_loss(e, batch.labels, opts);
  return {b.value, std::move(b.grad)};
}

// Text items query code items when both modalities are present; otherwise
// every item queries all others. Queries without a same-label candidate are
// skipped.
double retrieval_mrr(const RowMatrix& e, std::span<const Label> labels, std::span<const Modality> modalities) {
  const auto n = static_cast<std::size_t>(e.rows());
  const bool has_text = std::find(modalities.begin(), modalities.end(), Modality::kText) != modalities.end();
  const bool has_code = std::find(modalities.begin(), modalities.end(), Modality::kCode) != modalities.end();
  const bool cross = has_text && has_code;
  double sum = 0.0;
  std::size_t queries = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (cross && modalities[q] != Modality::kText) continue;
    double best_hit = std::numeric_limits<double>::infinity();
    std::size_t best_hit_index = n;
    for (std::size_t c = 0; c < n; ++c) {
      if (c == q || (cross && modalities[c] != Modality::kCode) || labels[c] != labels[q]) continue;
      const double d = (e.row(static_cast<Eigen::Index>(q)) - e.row(static_cast<Eigen::Index>(c))).squaredNorm();
      if (d < best_hit || (d == best_hit && c < best_hit_index)) {
        best_hit = d;
        best_hit_index = c;
      }
    }
    if (best_hit_index == n) continue;
    std::size_t rank = 1;
    for (std::size_t c = 0; c < n; ++c) {
      if (c == q || (cross && modalities[c] != Modality::kCode) || labels[c] == labels[q]) continue;
      const double d = (e.row(static_cast<Eigen::Index>(q)) - e.row(static_cast<Eigen::Index>(c))).squaredNorm();
      if (d < best_hit || (d == best_hit && c < best_hit_index)) ++rank;
    }
    sum += 1.0 / static_cast<double>(rank);
    ++queries;
  }
  return queries == 0 ? 0.0 : sum / static_cast<double>(queries);
}

struct Validation {
  std::vector<Batch> batches;
  Batch pool;
};

Validation make_validation(const std::vector<PreparedUnit>& units, std::size_t batch_size) {
  std::vector<std::size_t> order(units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Validation v;
  v.batches = compose(units, order, batch_size);
  if (!units.empty()) v.pool = compose(units, order, std::numeric_limits<std::size_t>::max()).front();
  return v;
}

std::pair<double, double> validate(const Validation& v, const EncoderParams& params, const TrainConfig& config) {
  double loss = 0.0;
  for (const auto& b : v.batches) loss += objective(b, config, encode_batch(b.inputs, params)).value;
  if (!v.batches.empty()) loss /= static_cast<double>(v.batches.size());
  const double mrr = v.pool.inputs.empty() ? 0.0
                                           : retrieval_mrr(encode_batch(v.pool.inputs, params), v.pool.labels,
                                                           v.pool.modalities);
  return {loss, mrr};
}

std::pair<std::vector<TrainingUnit>, std::vector<TrainingUnit>> split_for(std::vector<TrainingUnit> units,
                                                                          const TrainConfig& config) {
  if (config.validation_fraction == 0.0) return {units, units};
  auto s = split(std::move(units), 1.0 - config.validation_fraction, config.seed);
  return {std::move(s.train), std::move(s.validation)};
}

std::vector<TrainingUnit> doc_units(std::span<const LabeledItem> passages) {
  std::vector<TrainingUnit> units;
  std::unordered_map<Label, std::size_t> by_label;
  for (const auto& p : passages) {
    auto [it, inserted] = by_label.try_emplace(p.label, units.size());
    if (inserted) units.push_back(TrainingUnit{"paragraph:" + std::to_string(p.label), {}, {}});
    units[it->second].items.push_back(p);
  }
  return units;
}

std::vector<TrainingUnit> cc_units(std::span<const CodeCommentPair> pairs) {
  std::vector<TrainingUnit> units;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string id = "pair:" + std::to_string(i);
    units.push_back(TrainingUnit{id,
                                 {LabeledItem{pairs[i].code, Modality::kCode, std::nullopt, 0, id + "/code"},
                                  LabeledItem{pairs[i].comment, Modality::kText, std::nullopt, 0, id + "/comment"}},
                                 {}});
  }
  return units;
}

std::string duplicate_comment_note(std::span<const CodeCommentPair> pairs) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& p : pairs) ++counts[p.comment];
  std::size_t shared = 0;
  for (const auto& [comment, count] : counts) {
    if (count > 1) shared += count;
  }
  return shared == 0 ? std::string{} : std::to_string(shared) + " pairs share an identical comment";
}

TrainConfig as_bmt(TrainConfig config) {
  config.loss_mode = LossMode::kBmt;
  return config;
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  require(j.is_object(), std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::kInvalidInput, std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "config: learning_rate must be > 0");
  require(batch_size >= 2, "config: batch_size must be >= 2");
  require(patience >= 1, "config: patience must be >= 1");
  require(momentum >= 0.0 && momentum < 1.0, "config: momentum must be in [0, 1)");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "config: validation_fraction must be in [0, 1)");
  require(regularizers.lambda_w >= 0.0 && regularizers.lambda_m >= 0.0, "config: regularizer weights must be >= 0");
  margins.validate();
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"epochs", epochs},
              {"margins", {{"alpha1", margins.alpha1}, {"alpha2", margins.alpha2}, {"alpha", margins.alpha}}},
              {"facet_mode", std::string(p2c::to_string(facet_mode))},
              {"loss_mode", std::string(p2c::to_string(loss_mode))},
              {"mining", std::string(p2c::to_string(mining))},
              {"reduction", reduction == Reduction::kMean ? "mean" : "sum"},
              {"distance", std::string(p2c::to_string(distance))},
              {"seed", seed},
              {"regularizers", {{"lambda_w", regularizers.lambda_w}, {"lambda_m", regularizers.lambda_m}}},
              {"patience", patience},
              {"momentum", momentum},
              {"validation_fraction", validation_fraction}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown_keys(j,
                      {"learning_rate", "batch_size", "epochs", "margins", "facet_mode", "loss_mode", "mining",
                       "reduction", "distance", "seed", "regularizers", "patience", "momentum",
                       "validation_fraction"},
                      "config");
  TrainConfig c;
  try {
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("margins")) {
      const auto& m = j.at("margins");
      reject_unknown_keys(m, {"alpha1", "alpha2", "alpha"}, "config.margins");
      if (m.contains("alpha1")) c.margins.alpha1 = m.at("alpha1").get<double>();
      if (m.contains("alpha2")) c.margins.alpha2 = m.at("alpha2").get<double>();
      if (m.contains("alpha")) c.margins.alpha = m.at("alpha").get<double>();
    }
    if (j.contains("facet_mode")) c.facet_mode = parse_facet_mode(j.at("facet_mode").get<std::string>());
    if (j.contains("loss_mode")) c.loss_mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
    if (j.contains("mining")) c.mining = parse_mining(j.at("mining").get<std::string>());
    if (j.contains("reduction")) {
      const auto r = j.at("reduction").get<std::string>();
      require(r == "mean" || r == "sum", "config: reduction must be 'mean' or 'sum'");
      c.reduction = r == "mean" ? Reduction::kMean : Reduction::kSum;
    }
    if (j.contains("distance")) c.distance = parse_distance_form(j.at("distance").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("regularizers")) {
      const auto& r = j.at("regularizers");
      reject_unknown_keys(r, {"lambda_w", "lambda_m"}, "config.regularizers");
      if (r.contains("lambda_w")) c.regularizers.lambda_w = r.at("lambda_w").get<double>();
      if (r.contains("lambda_m")) c.regularizers.lambda_m = r.at("lambda_m").get<double>();
    }
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
    if (j.contains("validation_fraction")) c.validation_fraction = j.at("validation_fraction").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidInput, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json TrainReport::to_json() const {
  const auto stats = [](const EpochStats& s) {
    return json{{"epoch", s.epoch}, {"train_loss", s.train_loss}, {"val_loss", s.val_loss}, {"val_mrr", s.val_mrr}};
  };
  json rows = json::array();
  for (const auto& e : epochs) rows.push_back(stats(e));
  return json{{"stage", stage},
              {"initial", stats(initial)},
              {"epochs", rows},
              {"best_epoch", best_epoch},
              {"best_val_mrr", best_val_mrr},
              {"best_val_loss", best_val_loss},
              {"early_stopped", early_stopped},
              {"train_groups", train_groups},
              {"validation_groups", validation_groups},
              {"train_items", train_items},
              {"notes", notes},
              {"params_hash", params_hash},
              {"wall_seconds", wall_seconds}};
}

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,train_loss,val_loss,val_mrr\n";
  out << 0 << ",," << initial.val_loss << ',' << initial.val_mrr << '\n';
  for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_mrr << '\n';
  return out.str();
}

SplitResult split(std::vector<TrainingUnit> units, double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, "split: ratio must be in (0, 1)");
  std::vector<std::string> groups;
  std::unordered_set<std::string> seen;
  for (const auto& u : units) {
    if (seen.insert(u.group).second) groups.push_back(u.group);
  }
  if (groups.size() < 2) {
    fail(ErrorCode::kInvalidInput, "split: too few groups to split (" + std::to_string(groups.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(groups.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, groups.size() - 1);
  const std::unordered_set<std::string> train_groups(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_train));

  SplitResult out;
  for (auto& u : units) (train_groups.contains(u.group) ? out.train : out.validation).push_back(std::move(u));
  return out;
}

EncoderParams sgd_step(const EncoderParams& params, const GradientBundle& grads, double learning_rate) {
  require(params.weights.same_shape(grads), "sgd_step: gradient shape mismatch");
  if (!grads.all_finite()) fail(ErrorCode::kNonFinite, "sgd_step: non-finite gradient");
  EncoderParams out = params;
  out.weights.token_embeddings -= learning_rate * grads.token_embeddings;
  out.weights.w1 -= learning_rate * grads.w1;
  out.weights.b1 -= learning_rate * grads.b1;
  out.weights.w2 -= learning_rate * grads.w2;
  out.weights.b2 -= learning_rate * grads.b2;
  out.weights.mask_beta -= learning_rate * grads.mask_beta;
  if (!out.weights.all_finite()) fail(ErrorCode::kNonFinite, "sgd_step: non-finite update");
  return out;
}

SgdOptimizer::SgdOptimizer(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

void SgdOptimizer::step(EncoderParams& params, const GradientBundle& grads) {
  if (momentum_ == 0.0) {
    params = sgd_step(params, grads, lr_);
    return;
  }
  if (!has_velocity_) {
    velocity_ = grads.zeros_like();
    has_velocity_ = true;
  }
  velocity_.token_embeddings = momentum_ * velocity_.token_embeddings + grads.token_embeddings;
  velocity_.w1 = momentum_ * velocity_.w1 + grads.w1;
  velocity_.b1 = momentum_ * velocity_.b1 + grads.b1;
  velocity_.w2 = momentum_ * velocity_.w2 + grads.w2;
  velocity_.b2 = momentum_ * velocity_.b2 + grads.b2;
  velocity_.mask_beta = momentum_ * velocity_.mask_beta + grads.mask_beta;
  params = sgd_step(params, velocity_, lr_);
}

StageResult train_units(std::string stage, const Model& model, const std::vector<TrainingUnit>& train,
                        const std::vector<TrainingUnit>& validation, const TrainConfig& config) {
  config.validate();
  if (config.facet_mode != model.params.facet_mode) {
    fail(ErrorCode::kInvalidInput, "config facet_mode '" + std::string(to_string(config.facet_mode)) +
                                       "' does not match the model's '" +
                                       std::string(to_string(model.params.facet_mode)) + "'");
  }
  require(!train.empty(), stage + ": no training data");
  const auto start = std::chrono::steady_clock::now();

  std::vector<PreparedUnit> train_units;
  for (const auto& u : train) train_units.push_back(prepare(model, u));
  std::vector<PreparedUnit> val_units;
  for (const auto& u : validation) val_units.push_back(prepare(model, u));

  std::vector<std::size_t> order(train_units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  {
    const auto probe = compose(train_units, order, config.batch_size);
    if (config.loss_mode == LossMode::kQuadruplet) {
      const bool any = std::any_of(probe.begin(), probe.end(), [](const Batch& b) { return !b.quadruplets.empty(); });
      if (!any) fail(ErrorCode::kDegenerate, stage + ": facet coverage absent (no quadruplet has both c+ and c-)");
    } else {
      const bool any = std::any_of(probe.begin(), probe.end(), [](const Batch& b) { return has_valid_triplet(b.labels); });
      if (!any) fail(ErrorCode::kDegenerate, stage + ": degenerate corpus (no valid triplets in any batch)");
    }
  }

  StageResult result{model.params, {}};
  TrainReport& report = result.report;
  report.stage = std::move(stage);
  std::unordered_set<std::string> tg, vg;
  for (const auto& u : train) {
    tg.insert(u.group);
    report.train_items += u.items.size();
  }
  for (const auto& u : validation) vg.insert(u.group);
  report.train_groups = tg.size();
  report.validation_groups = vg.size();

  const Validation val = make_validation(val_units, config.batch_size);
  auto [init_loss, init_mrr] = validate(val, result.params, config);
  report.initial = EpochStats{0, 0.0, init_loss, init_mrr};
  report.best_val_mrr = init_mrr;
  report.best_val_loss = init_loss;

  EncoderParams params = model.params;
  SgdOptimizer optimizer(config.learning_rate, config.momentum);
  std::mt19937_64 rng(config.seed);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto batches = compose(train_units, order, config.batch_size);
    double total = 0.0;
    std::size_t used = 0;
    for (const auto& b : batches) {
      if (config.loss_mode == LossMode::kBmt ? !has_valid_triplet(b.labels) : b.quadruplets.empty()) continue;
      const BatchLoss loss = [&](const RowMatrix& e) { return objective(b, config, e); };
      auto fb = forward_backward(b.inputs, loss, params, config.regularizers);
      optimizer.step(params, fb.grads);
      total += fb.loss;
      ++used;
    }
    auto [val_loss, val_mrr] = validate(val, params, config);
    report.epochs.push_back(EpochStats{epoch, used == 0 ? 0.0 : total / static_cast<double>(used), val_loss, val_mrr});

    const bool better = val_mrr > report.best_val_mrr + 1e-12 ||
                        (std::abs(val_mrr - report.best_val_mrr) <= 1e-12 && val_loss < report.best_val_loss - 1e-12);
    if (better) {
      report.best_epoch = epoch;
      report.best_val_mrr = val_mrr;
      report.best_val_loss = val_loss;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      report.early_stopped = epoch < config.epochs;
      break;
    }
  }

  report.params_hash = model_hash(result.params);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

StageResult pretrain_doc(const Model& model, std::span<const LabeledItem> passages, const TrainConfig& config) {
  auto [train, val] = split_for(doc_units(passages), config);
  return train_units("doc", model, train, val, as_bmt(config));
}

StageResult pretrain_cc(const Model& model, std::span<const CodeCommentPair> pairs, const TrainConfig& config) {
  require(pairs.size() >= 2, "pretrain_cc: at least 2 code-comment pairs required");
  auto [train, val] = split_for(cc_units(pairs), config);
  auto result = train_units("cc", model, train, val, as_bmt(config));
  if (auto note = duplicate_comment_note(pairs); !note.empty()) result.report.notes.push_back(std::move(note));
  return result;
}

StageResult pretrain_joint(const Model& model, std::span<const LabeledItem> passages,
                           std::span<const CodeCommentPair> pairs, const TrainConfig& config) {
  auto units = doc_units(passages);
  auto cc = cc_units(pairs);
  units.insert(units.end(), std::make_move_iterator(cc.begin()), std::make_move_iterator(cc.end()));
  auto [train, val] = split_for(std::move(units), config);
  auto result = train_units("doc+cc", model, train, val, as_bmt(config));
  if (auto note = duplicate_comment_note(pairs); !note.empty()) result.report.notes.push_back(std::move(note));
  return result;
}

BugfixDataset build_bugfix_dataset(std::span<const BugFixRecord> records, bool filter, std::uint64_t seed,
                                   const PolicyLikeness& predicate) {
  require(records.size() >= 2, "bug-fix dataset needs at least 2 records");
  std::vector<std::size_t> kept;
  if (filter) {
    std::vector<std::string> comments;
    comments.reserve(records.size());
    for (const auto& r : records) comments.push_back(r.comment);
    kept = filter_policy_like(comments, predicate).kept_indices;
  } else {
    kept.resize(records.size());
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
  }

  BugfixDataset out;
  out.total_records = records.size();
  std::vector<BugFixReinterpretation> views;
  views.reserve(records.size());
  for (const auto& r : records) {
    views.push_back(reinterpret_bugfix(r));
    out.corpus.add_policy(views.back().policy);
    out.corpus.add_snippet(views.back().before);
    out.corpus.add_snippet(views.back().after);
  }
  for (std::size_t i : kept) {
    auto& v = views[i];
    const auto irrelevant = mine_irrelevant(records[i].id, records, seed ^ ((i + 1) * 0x9e3779b97f4a7c15ULL));
    v.compliant.irrelevant_code_id = irrelevant;
    v.noncompliant.irrelevant_code_id = irrelevant;
    out.pairs.push_back(QuadrupletPair{v.compliant, v.noncompliant});
  }
  out.retained_fraction = static_cast<double>(kept.size()) / static_cast<double>(records.size());
  return out;
}

StageResult prefinetune(const Model& model, const BugfixDataset& dataset, const TrainConfig& config) {
  require(!dataset.pairs.empty(), "prefinetune: empty dataset");
  std::vector<TrainingUnit> units;
  units.reserve(dataset.pairs.size());
  for (const auto& pair : dataset.pairs) {
    TrainingUnit unit;
    unit.group = pair.compliant ? pair.compliant->policy_id : pair.noncompliant->policy_id;
    unit.items = unpivot(std::span(&pair, 1), dataset.corpus);
    if (config.loss_mode == LossMode::kQuadruplet) {
      std::optional<std::size_t> r_pos, r_neg, c_pos, c_neg, c_irr;
      for (std::size_t i = 0; i < unit.items.size(); ++i) {
        const auto& it = unit.items[i];
        if (it.modality == Modality::kText) {
          (it.facet == Facet::kCompliant ? r_pos : r_neg) = i;
        }
      }
      for (std::size_t i = 0; i < unit.items.size(); ++i) {
        const auto& it = unit.items[i];
        if (it.modality != Modality::kCode) continue;
        if (r_pos && it.label == unit.items[*r_pos].label) {
          c_pos = i;
        } else if (r_neg && it.label == unit.items[*r_neg].label) {
          c_neg = i;
        } else {
          c_irr = i;
        }
      }
      if (c_pos && c_neg && c_irr) {
        if (r_pos) unit.quadruplets.push_back({Facet::kCompliant, *r_pos, *c_pos, *c_neg, *c_irr});
        if (r_neg) unit.quadruplets.push_back({Facet::kNoncompliant, *r_neg, *c_neg, *c_pos, *c_irr});
      }
    }
    units.push_back(std::move(unit));
  }
  auto [train, val] = split_for(std::move(units), config);
  auto result = train_units("prefinetune", model, train, val, config);
  std::ostringstream note;
  note << "bug-fix records retained: " << dataset.pairs.size() << "/" << dataset.total_records;
  result.report.notes.push_back(note.str());
  return result;
}

std::string GridSearchResult::margin_table_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "alpha1,alpha2,alpha,mining,loss_mode,val_mrr,val_loss\n";
  for (const auto& e : entries) {
    out << e.config.margins.alpha1 << ',' << e.config.margins.alpha2 << ',' << e.config.margins.alpha << ','
        << to_string(e.config.mining) << ',' << to_string(e.config.loss_mode) << ',' << e.report.best_val_mrr << ','
        << e.report.best_val_loss << '\n';
  }
  return out.str();
}

json GridSearchResult::to_json() const {
  json runs = json::array();
  for (const auto& e : entries) runs.push_back(json{{"config", e.config.to_json()}, {"report", e.report.to_json()}});
  return json{{"best_index", best_index}, {"best_config", best_config.to_json()}, {"runs", runs}};
}

GridSearchResult grid_search(std::span<const TrainConfig> configs, const TrainFn& train_fn) {
  require(!configs.empty(), "grid_search: at least one config required");
  GridSearchResult out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto result = train_fn(configs[i]);
    const auto& r = result.report;
    bool better = i == 0;
    if (!better) {
      const auto& best = out.entries[out.best_index].report;
      better = r.best_val_mrr > best.best_val_mrr ||
               (r.best_val_mrr == best.best_val_mrr && r.best_val_loss < best.best_val_loss);
    }
    if (better) {
      out.best_index = i;
      out.best_config = configs[i];
      out.best_params = std::move(result.params);
    }
    out.entries.push_back(GridSearchEntry{configs[i], std::move(result.report)});
  }
  return out;
}

void TrainingPipeline::require_pretraining_allowed(std::string_view stage) const {
  if (std::find(stages_.begin(), stages_.end(), "prefinetune") != stages_.end()) {
    fail(ErrorCode::kInvalidInput, "stage order: " + std::string(stage) + " cannot run after prefinetune");
  }
}

const TrainReport& TrainingPipeline::record(std::string stage, StageResult result) {
  model_.params = std::move(result.params);
  stages_.push_back(std::move(stage));
  reports_.push_back(std::move(result.report));
  return reports_.back();
}

const TrainReport& TrainingPipeline::run_doc(std::span<const LabeledItem> passages, const TrainConfig& config) {
  require_pretraining_allowed("doc");
  return record("doc", pretrain_doc(model_, passages, config));
}

const TrainReport& TrainingPipeline::run_cc(std::span<const CodeCommentPair> pairs, const TrainConfig& config) {
  require_pretraining_allowed("cc");
  return record("cc", pretrain_cc(model_, pairs, config));
}

const TrainReport& TrainingPipeline::run_joint(std::span<const LabeledItem> passages,
                                               std::span<const CodeCommentPair> pairs, const TrainConfig& config) {
  require_pretraining_allowed("doc+cc");
  return record("doc+cc", pretrain_joint(model_, passages, pairs, config));
}

const TrainReport& TrainingPipeline::run_prefinetune(const BugfixDataset& dataset, const TrainConfig& config) {
  return record("prefinetune", prefinetune(model_, dataset, config));
}

}  // namespace p2c
