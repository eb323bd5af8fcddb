#include "p2c/assessor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "p2c/error.hpp"

namespace p2c {
namespace {

using json = nlohmann::json;

struct FacetEmbeddings {
  Vector compliant;
  Vector noncompliant;
};

std::vector<FacetEmbeddings> embed_policies(const Corpus& corpus, std::span<const std::string> policy_ids,
                                            const PolicyEmbedder& embed) {
  std::vector<FacetEmbeddings> out;
  out.reserve(policy_ids.size());
  for (const auto& id : policy_ids) {
    const Policy& p = corpus.policy(id);
    out.push_back({embed(p, Facet::kCompliant), embed(p, Facet::kNoncompliant)});
  }
  return out;
}

Vector snippet_row(const EmbeddingIndex& index, const std::string& id) {
  const std::size_t pos = index.position_of(id);
  if (pos == index.size()) fail(ErrorCode::kNotFound, "snippet '" + id + "' is not in the index");
  return index.embeddings().row(static_cast<Eigen::Index>(pos)).transpose();
}

// Rank of the best ground-truth row under the (distance, id) total order.
std::size_t first_hit_rank(const EmbeddingIndex& index, const Vector& query, std::span<const std::size_t> truth_rows) {
  const RowMatrix& x = index.embeddings();
  const auto& ids = index.ids();
  std::vector<double> d(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) d[i] = (x.row(static_cast<Eigen::Index>(i)).transpose() - query).squaredNorm();
  std::size_t best = truth_rows.front();
  for (std::size_t r : truth_rows) {
    if (d[r] < d[best] || (d[r] == d[best] && ids[r] < ids[best])) best = r;
  }
  std::size_t rank = 1;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (d[i] < d[best] || (d[i] == d[best] && ids[i] < ids[best])) ++rank;
  }
  return rank;
}

void require_benchmark_policies(const Corpus& corpus, std::span<const std::string> policy_ids) {
  require(!policy_ids.empty(), "evaluate: no policies");
  for (const auto& id : policy_ids) {
    if (corpus.policy(id).source == PolicySource::kBugfixComment) {
      fail(ErrorCode::kInvalidInput, "evaluate: policy '" + id + "' was minted from a bug-fix comment (training data)");
    }
  }
}

}  // namespace

std::string_view to_string(VerdictLabel v) {
  switch (v) {
    case VerdictLabel::kCompliant: return "compliant";
    case VerdictLabel::kNoncompliant: return "noncompliant";
    case VerdictLabel::kIrrelevant: return "irrelevant";
  }
  return "irrelevant";
}

VerdictLabel parse_verdict_label(std::string_view text) {
  for (auto v : {VerdictLabel::kCompliant, VerdictLabel::kNoncompliant, VerdictLabel::kIrrelevant}) {
    if (to_string(v) == text) return v;
  }
  fail(ErrorCode::kInvalidInput, "unknown verdict label '" + std::string(text) + "'");
}

json Verdict::to_json() const {
  json j{{"label", std::string(to_string(label))},
         {"d_avg", d_avg},
         {"d_compliant", d_compliant},
         {"d_noncompliant", d_noncompliant}};
  j["p_compliant"] = p_compliant ? json(*p_compliant) : json(nullptr);
  j["p_noncompliant"] = p_noncompliant ? json(*p_noncompliant) : json(nullptr);
  return j;
}

Verdict classify_embeddings(const Vector& code, const Vector& r_compliant, const Vector& r_noncompliant,
                            double alpha) {
  require(alpha > 0.0, "classify: alpha must be > 0");
  require(code.size() == r_compliant.size() && code.size() == r_noncompliant.size(),
          "classify: embedding dimensions differ");
  const Vector sum = r_compliant + r_noncompliant;
  const double scale = std::max(r_compliant.norm(), r_noncompliant.norm());
  if (sum.norm() <= 1e-12 * std::max(scale, 1.0)) {
    fail(ErrorCode::kDegenerate, "antipodal facets: the averaged policy embedding is the zero vector");
  }
  Verdict v;
  v.d_avg = (code - sum.normalized()).squaredNorm();
  v.d_compliant = (code - r_compliant).squaredNorm();
  v.d_noncompliant = (code - r_noncompliant).squaredNorm();
  if (v.d_avg > alpha) return v;
  v.label = v.d_compliant <= v.d_noncompliant ? VerdictLabel::kCompliant : VerdictLabel::kNoncompliant;
  // e^{-d+} / (e^{-d+} + e^{-d-}) = 1 / (1 + e^{d+ - d-})
  v.p_compliant = 1.0 / (1.0 + std::exp(v.d_compliant - v.d_noncompliant));
  v.p_noncompliant = 1.0 / (1.0 + std::exp(v.d_noncompliant - v.d_compliant));
  return v;
}

Verdict classify(std::string_view policy_text, std::string_view code, const Model& model, double alpha) {
  return classify_embeddings(model.encode_code(code), model.encode_policy(policy_text, Facet::kCompliant),
                             model.encode_policy(policy_text, Facet::kNoncompliant), alpha);
}

double mrr(std::span<const std::size_t> first_hit_ranks) {
  if (first_hit_ranks.empty()) fail(ErrorCode::kInvalidInput, "mrr: empty query set");
  double sum = 0.0;
  for (std::size_t r : first_hit_ranks) {
    require(r >= 1, "mrr: ranks are 1-based");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(first_hit_ranks.size());
}

double accuracy(std::span<const VerdictLabel> predictions, std::span<const VerdictLabel> truth) {
  if (predictions.size() != truth.size()) {
    fail(ErrorCode::kInvalidInput, "accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                                       std::to_string(truth.size()) + " labels");
  }
  require(!truth.empty(), "accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::optional<double> FacetRate::percent() const {
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(accepted) / static_cast<double>(total);
}

json AcceptanceRates::to_json() const {
  const auto rate = [](const FacetRate& r) {
    const auto p = r.percent();
    return json{{"accepted", r.accepted}, {"total", r.total}, {"percent", p ? json(*p) : json(nullptr)}};
  };
  return json{{"compliant", rate(compliant)}, {"noncompliant", rate(noncompliant)}, {"overall", rate(overall)}};
}

AcceptanceRates acceptance_rate(std::span<const JudgmentRecord> judgments) {
  if (judgments.empty()) fail(ErrorCode::kInvalidInput, "acceptance_rate: no judgments");
  AcceptanceRates out;
  for (const auto& j : judgments) {
    FacetRate& f = j.facet == Facet::kCompliant ? out.compliant : out.noncompliant;
    const std::size_t accepted = j.decision == Decision::kAccept ? 1 : 0;
    f.accepted += accepted;
    ++f.total;
    out.overall.accepted += accepted;
    ++out.overall.total;
  }
  return out;
}

json EvalReport::to_json() const {
  return json{{"accuracy", accuracy},
              {"mrr_compliant", mrr_compliant},
              {"mrr_noncompliant", mrr_noncompliant},
              {"n_policies", n_policies},
              {"n_snippets", n_snippets},
              {"alpha", alpha},
              {"model_hash", model_hash},
              {"n_pairs", n_pairs},
              {"excluded_compliant", excluded_compliant},
              {"excluded_noncompliant", excluded_noncompliant}};
}

std::vector<EvalPair> evaluation_pairs(const Corpus& corpus, std::span<const std::string> policy_ids,
                                       std::uint64_t seed) {
  std::vector<std::string> distractors;
  for (const auto& s : corpus.snippets()) {
    if (s.ground_truth.empty()) distractors.push_back(s.id);
  }
  std::vector<EvalPair> out;
  for (std::size_t p = 0; p < policy_ids.size(); ++p) {
    const auto& pid = policy_ids[p];
    std::size_t labeled = 0;
    for (const auto& s : corpus.snippets()) {
      for (const auto& gt : s.ground_truth) {
        if (gt.policy_id != pid) continue;
        out.push_back({pid, s.id, to_verdict(gt.facet)});
        ++labeled;
        break;
      }
    }
    std::vector<std::string> pool = distractors;
    std::mt19937_64 rng(seed ^ ((p + 1) * 0x9e3779b97f4a7c15ULL));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(labeled, pool.size()));
    std::sort(pool.begin(), pool.end());
    for (auto& id : pool) out.push_back({pid, std::move(id), VerdictLabel::kIrrelevant});
  }
  return out;
}

EvalReport evaluate_embeddings(const Corpus& corpus, std::span<const std::string> policy_ids,
                               const EmbeddingIndex& index, const PolicyEmbedder& embed, double alpha,
                               std::uint64_t seed) {
  require_benchmark_policies(corpus, policy_ids);
  const auto policies = embed_policies(corpus, policy_ids, embed);
  std::unordered_map<std::string, std::size_t> policy_pos;
  for (std::size_t i = 0; i < policy_ids.size(); ++i) policy_pos.emplace(policy_ids[i], i);

  const auto pairs = evaluation_pairs(corpus, policy_ids, seed);
  const bool any_labeled = std::any_of(pairs.begin(), pairs.end(), [](const EvalPair& p) {
    return p.truth != VerdictLabel::kIrrelevant;
  });
  if (!any_labeled) fail(ErrorCode::kDegenerate, "evaluate: no labeled examples for the given policies");

  std::vector<VerdictLabel> predicted;
  std::vector<VerdictLabel> truth;
  for (const auto& pair : pairs) {
    const auto& fe = policies[policy_pos.at(pair.policy_id)];
    predicted.push_back(classify_embeddings(snippet_row(index, pair.snippet_id), fe.compliant, fe.noncompliant, alpha).label);
    truth.push_back(pair.truth);
  }

  EvalReport report;
  report.accuracy = accuracy(predicted, truth);
  report.n_pairs = pairs.size();
  report.n_policies = policy_ids.size();
  report.n_snippets = index.size();
  report.alpha = alpha;
  report.model_hash = index.model_hash();

  for (Facet facet : {Facet::kCompliant, Facet::kNoncompliant}) {
    std::vector<std::size_t> ranks;
    std::size_t excluded = 0;
    for (std::size_t p = 0; p < policy_ids.size(); ++p) {
      std::vector<std::size_t> rows;
      for (const auto& id : corpus.labeled_snippets(policy_ids[p], facet)) {
        if (const auto pos = index.position_of(id); pos != index.size()) rows.push_back(pos);
      }
      if (rows.empty()) {
        ++excluded;
        continue;
      }
      const Vector& q = facet == Facet::kCompliant ? policies[p].compliant : policies[p].noncompliant;
      ranks.push_back(first_hit_rank(index, q, rows));
    }
    const double value = ranks.empty() ? 0.0 : mrr(ranks);
    if (facet == Facet::kCompliant) {
      report.mrr_compliant = value;
      report.excluded_compliant = excluded;
    } else {
      report.mrr_noncompliant = value;
      report.excluded_noncompliant = excluded;
    }
  }
  return report;
}

EvalReport evaluate(const Corpus& corpus, std::span<const std::string> policy_ids, const EmbeddingIndex& index,
                    const Model& model, double alpha, std::uint64_t seed) {
  require_fresh(index, model);
  return evaluate_embeddings(
      corpus, policy_ids, index,
      [&](const Policy& p, Facet f) { return model.encode_policy(p.text, f); }, alpha, seed);
}

double calibrate_alpha(const Corpus& corpus, std::span<const std::string> policy_ids, const EmbeddingIndex& index,
                       const Model& model, std::uint64_t seed) {
  require_fresh(index, model);
  const auto policies = embed_policies(corpus, policy_ids, [&](const Policy& p, Facet f) {
    return model.encode_policy(p.text, f);
  });
  std::unordered_map<std::string, std::size_t> policy_pos;
  for (std::size_t i = 0; i < policy_ids.size(); ++i) policy_pos.emplace(policy_ids[i], i);

  struct Case {
    double d_avg;
    bool relevant;
    bool facet_correct;
  };
  std::vector<Case> cases;
  for (const auto& pair : evaluation_pairs(corpus, policy_ids, seed)) {
    const auto& fe = policies[policy_pos.at(pair.policy_id)];
    // Any alpha above d_avg makes the pair relevant; the facet call itself
    // does not depend on alpha.
    const Verdict v = classify_embeddings(snippet_row(index, pair.snippet_id), fe.compliant, fe.noncompliant, 1e9);
    cases.push_back({v.d_avg, pair.truth != VerdictLabel::kIrrelevant, v.label == pair.truth});
  }
  require(!cases.empty(), "calibrate_alpha: no evaluation pairs");
  std::sort(cases.begin(), cases.end(), [](const Case& a, const Case& b) { return a.d_avg < b.d_avg; });

  // Threshold below all cases: everything irrelevant.
  std::size_t irrelevant_above = 0;
  for (const auto& c : cases) irrelevant_above += c.relevant ? 0 : 1;
  std::size_t best_hits = irrelevant_above;
  double best_alpha = cases.front().d_avg > 0.0 ? cases.front().d_avg / 2.0 : 1e-9;
  std::size_t correct_below = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    correct_below += cases[i].relevant && cases[i].facet_correct ? 1 : 0;
    irrelevant_above -= cases[i].relevant ? 0 : 1;
    if (i + 1 < cases.size() && cases[i + 1].d_avg == cases[i].d_avg) continue;
    const std::size_t hits = correct_below + irrelevant_above;
    if (hits > best_hits) {
      best_hits = hits;
      best_alpha = i + 1 < cases.size() ? 0.5 * (cases[i].d_avg + cases[i + 1].d_avg) : cases[i].d_avg + 1e-6;
    }
  }
  return std::max(best_alpha, 1e-9);
}

}  // namespace p2c
