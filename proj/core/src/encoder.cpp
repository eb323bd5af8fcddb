#include "p2c/encoder.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "p2c/digest.hpp"
#include "p2c/error.hpp"

namespace p2c {
namespace {

TokenId facet_token(Facet f) {
  return f == Facet::kCompliant ? reserved::kFacetCompliant : reserved::kFacetNoncompliant;
}

int facet_column(Facet f) { return f == Facet::kCompliant ? 0 : 1; }

// Activations kept for the backward pass.
struct ItemTrace {
  std::vector<TokenId> tokens;
  Vector x, hidden, z, u;
  double norm = 0.0;
  std::optional<int> mask_column;
  Vector mask;
  Embedding e;
};

ItemTrace forward_item(const EncoderInput& input, const EncoderParams& params) {
  const Weights& w = params.weights;
  if (input.tokens.empty()) {
    fail(ErrorCode::kInvalidInput, "encode: empty token sequence" + (input.id.empty() ? "" : " for '" + input.id + "'"));
  }
  ItemTrace t;
  t.tokens = effective_tokens(input, params.facet_mode);
  const auto vocab = static_cast<TokenId>(w.token_embeddings.rows());
  t.x = Vector::Zero(w.token_embeddings.cols());
  for (TokenId id : t.tokens) {
    if (id < 0 || id >= vocab) {
      fail(ErrorCode::kInvalidInput, "encode: token id " + std::to_string(id) + " outside vocabulary of " +
                                         std::to_string(vocab));
    }
    t.x += w.token_embeddings.row(id).transpose();
  }
  t.x /= static_cast<double>(t.tokens.size());

  t.hidden = (w.w1 * t.x + w.b1).array().tanh().matrix();
  t.z = t.x + w.w2 * t.hidden + w.b2;

  if (params.facet_mode == FacetMode::kMasked && input.facet) {
    const int k = facet_column(*input.facet);
    t.mask_column = k;
    t.mask = w.mask_beta.col(k).cwiseMax(0.0);
    if ((t.mask.array() == 0.0).all()) {
      fail(ErrorCode::kDegenerate, "encode: degenerate mask for facet " + std::string(to_string(*input.facet)));
    }
    t.u = t.z.cwiseProduct(t.mask);
  } else {
    t.u = t.z;
  }
  t.norm = t.u.norm();
  if (!(t.norm > 0.0)) {
    fail(ErrorCode::kDegenerate, "encode: zero-norm embedding" + (input.id.empty() ? "" : " for '" + input.id + "'"));
  }
  t.e = t.u / t.norm;
  return t;
}

void backward_item(const ItemTrace& t, const Vector& grad_e, const Vector& extra_grad_u, const Weights& w,
                   GradientBundle& g) {
  Vector gu = (grad_e - t.e * t.e.dot(grad_e)) / t.norm + extra_grad_u;
  Vector gz;
  if (t.mask_column) {
    const int k = *t.mask_column;
    gz = gu.cwiseProduct(t.mask);
    for (Eigen::Index j = 0; j < gu.size(); ++j) {
      if (w.mask_beta(j, k) > 0.0) g.mask_beta(j, k) += gu(j) * t.z(j);
    }
  } else {
    gz = std::move(gu);
  }
  g.b2 += gz;
  g.w2.noalias() += gz * t.hidden.transpose();
  const Vector ga = (w.w2.transpose() * gz).cwiseProduct((1.0 - t.hidden.array().square()).matrix());
  g.b1 += ga;
  g.w1.noalias() += ga * t.x.transpose();
  const Vector gx = (gz + w.w1.transpose() * ga) / static_cast<double>(t.tokens.size());
  for (TokenId id : t.tokens) g.token_embeddings.row(id) += gx.transpose();
}

std::string describe_ids(std::span<const EncoderInput> batch, const std::vector<std::size_t>& rows) {
  std::ostringstream os;
  const std::size_t shown = std::min<std::size_t>(rows.size(), 8);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i > 0) os << ", ";
    const auto& id = batch[rows[i]].id;
    os << (id.empty() ? "#" + std::to_string(rows[i]) : id);
  }
  if (rows.size() > shown) os << ", ... (" << rows.size() << " items)";
  return os.str();
}

}  // namespace

std::string_view to_string(FacetMode m) { return m == FacetMode::kPrefixed ? "prefixed" : "masked"; }

FacetMode parse_facet_mode(std::string_view text) {
  if (text == "prefixed") return FacetMode::kPrefixed;
  if (text == "masked") return FacetMode::kMasked;
  fail(ErrorCode::kInvalidInput, "unknown facet mode '" + std::string(text) + "'");
}

Weights Weights::zeros(const EncoderShape& s) {
  const auto v = static_cast<Eigen::Index>(s.vocab_size);
  const auto d = static_cast<Eigen::Index>(s.dim);
  const auto h = static_cast<Eigen::Index>(s.hidden);
  return Weights{RowMatrix::Zero(v, d), RowMatrix::Zero(h, d), Vector::Zero(h),
                 RowMatrix::Zero(d, h), Vector::Zero(d), RowMatrix::Zero(d, static_cast<Eigen::Index>(kFacetCount))};
}

Weights Weights::zeros_like() const { return zeros(shape()); }

EncoderShape Weights::shape() const {
  return {static_cast<std::size_t>(token_embeddings.rows()), static_cast<std::size_t>(token_embeddings.cols()),
          static_cast<std::size_t>(w1.rows())};
}

bool Weights::same_shape(const Weights& o) const {
  const auto eq = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  return eq(token_embeddings, o.token_embeddings) && eq(w1, o.w1) && eq(b1, o.b1) && eq(w2, o.w2) &&
         eq(b2, o.b2) && eq(mask_beta, o.mask_beta);
}

bool Weights::all_finite() const {
  bool ok = true;
  for_each_block([&](const char*, std::span<const double> s) {
    for (double v : s) ok = ok && std::isfinite(v);
  });
  return ok;
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](const char*, std::span<const double> s) { n += s.size(); });
  return n;
}

EncoderParams EncoderParams::initialize(const EncoderShape& shape, FacetMode mode, std::uint64_t seed,
                                        std::string vocab_hash, double embedding_scale) {
  require(embedding_scale > 0.0, "encoder: embedding_scale must be > 0");
  require(shape.vocab_size > static_cast<std::size_t>(reserved::kCount) && shape.dim > 0 && shape.hidden > 0,
          "encoder: invalid shape");
  EncoderParams p{Weights::zeros(shape), mode, std::move(vocab_hash)};
  std::mt19937_64 rng(seed);
  const auto fill = [&](auto& m, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  fill(p.weights.token_embeddings, embedding_scale);
  fill(p.weights.w1, 1.0 / std::sqrt(static_cast<double>(shape.dim)));
  fill(p.weights.w2, 1.0 / std::sqrt(static_cast<double>(shape.hidden)));
  p.weights.mask_beta.setOnes();
  return p;
}

std::string model_hash(const EncoderParams& params) {
  Sha256 h;
  const auto s = params.weights.shape();
  h.update("p2c-model/1;v=" + std::to_string(s.vocab_size) + ";d=" + std::to_string(s.dim) + ";h=" +
           std::to_string(s.hidden) + ";mode=" + std::string(to_string(params.facet_mode)) + ";vocab=" +
           params.vocab_hash + ";");
  params.weights.for_each_block([&](const char*, std::span<const double> block) { h.update_values(block); });
  return h.hex();
}

std::vector<TokenId> effective_tokens(const EncoderInput& input, FacetMode mode) {
  if (mode == FacetMode::kPrefixed && input.facet) {
    std::vector<TokenId> seq;
    seq.reserve(input.tokens.size() + 1);
    seq.push_back(facet_token(*input.facet));
    seq.insert(seq.end(), input.tokens.begin(), input.tokens.end());
    return seq;
  }
  return input.tokens;
}

Embedding encode(const EncoderInput& input, const EncoderParams& params) {
  return forward_item(input, params).e;
}

Embedding encode_code(std::span<const TokenId> tokens, const EncoderParams& params) {
  return encode(EncoderInput{{tokens.begin(), tokens.end()}, std::nullopt, {}}, params);
}

Embedding encode_text(std::span<const TokenId> tokens, const EncoderParams& params) {
  return encode_code(tokens, params);
}

Embedding encode_policy(std::span<const TokenId> tokens, Facet facet, const EncoderParams& params) {
  return encode(EncoderInput{{tokens.begin(), tokens.end()}, facet, {}}, params);
}

Embedding encode_policy_prefixed(std::span<const TokenId> tokens, Facet facet, const EncoderParams& params) {
  if (params.facet_mode == FacetMode::kPrefixed) return encode_policy(tokens, facet, params);
  EncoderParams view{params.weights, FacetMode::kPrefixed, params.vocab_hash};
  return encode_policy(tokens, facet, view);
}

Embedding encode_policy_masked(std::span<const TokenId> tokens, Facet facet, const EncoderParams& params) {
  if (params.facet_mode == FacetMode::kMasked) return encode_policy(tokens, facet, params);
  EncoderParams view{params.weights, FacetMode::kMasked, params.vocab_hash};
  return encode_policy(tokens, facet, view);
}

MaskRegularizers mask_regularizers(const EncoderParams& params, std::span<const double> raw_norms) {
  MaskRegularizers r;
  if (!raw_norms.empty()) {
    for (double n : raw_norms) r.unit_ball += (n - 1.0) * (n - 1.0);
    r.unit_ball /= static_cast<double>(raw_norms.size());
  }
  const auto& beta = params.weights.mask_beta;
  if (beta.size() > 0) r.mask_l1 = beta.cwiseMax(0.0).sum() / static_cast<double>(beta.size());
  return r;
}

RowMatrix encode_batch(std::span<const EncoderInput> batch, const EncoderParams& params) {
  RowMatrix out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(params.dim()));
  for (std::size_t i = 0; i < batch.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encode(batch[i], params).transpose();
  return out;
}

ForwardBackwardResult forward_backward(std::span<const EncoderInput> batch, const BatchLoss& loss,
                                       const EncoderParams& params, const RegularizerWeights& reg) {
  require(!batch.empty(), "forward_backward: empty batch");
  const Weights& w = params.weights;
  const auto n = static_cast<Eigen::Index>(batch.size());
  std::vector<ItemTrace> traces;
  traces.reserve(batch.size());
  ForwardBackwardResult out;
  out.embeddings.resize(n, static_cast<Eigen::Index>(params.dim()));
  std::vector<double> raw_norms;
  raw_norms.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    traces.push_back(forward_item(batch[i], params));
    out.embeddings.row(static_cast<Eigen::Index>(i)) = traces.back().e.transpose();
    raw_norms.push_back(traces.back().norm);
  }

  LossEvaluation eval = loss(out.embeddings);
  require(eval.grad.rows() == n && eval.grad.cols() == out.embeddings.cols(),
          "forward_backward: loss gradient has the wrong shape");
  std::vector<std::size_t> bad;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!out.embeddings.row(i).allFinite() || !eval.grad.row(i).allFinite()) bad.push_back(static_cast<std::size_t>(i));
  }
  if (!std::isfinite(eval.value) || !bad.empty()) {
    if (bad.empty()) {
      for (std::size_t i = 0; i < batch.size(); ++i) bad.push_back(i);
    }
    fail(ErrorCode::kNonFinite, "forward_backward: non-finite loss involving items: " + describe_ids(batch, bad));
  }

  const bool masked = params.facet_mode == FacetMode::kMasked;
  out.batch_loss = eval.value;
  out.loss = eval.value;
  if (masked) {
    out.regularizers = mask_regularizers(params, raw_norms);
    out.loss += reg.lambda_w * out.regularizers.unit_ball + reg.lambda_m * out.regularizers.mask_l1;
  }

  out.grads = w.zeros_like();
  const Vector no_extra = Vector::Zero(static_cast<Eigen::Index>(params.dim()));
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const Vector grad_e = eval.grad.row(static_cast<Eigen::Index>(i)).transpose();
    if (masked && reg.lambda_w != 0.0) {
      const Vector extra = reg.lambda_w * 2.0 * (t.norm - 1.0) / static_cast<double>(n) * t.e;
      backward_item(t, grad_e, extra, w, out.grads);
    } else {
      backward_item(t, grad_e, no_extra, w, out.grads);
    }
  }
  if (masked && reg.lambda_m != 0.0) {
    const double scale = reg.lambda_m / static_cast<double>(w.mask_beta.size());
    for (Eigen::Index i = 0; i < w.mask_beta.size(); ++i) {
      if (w.mask_beta.data()[i] > 0.0) out.grads.mask_beta.data()[i] += scale;
    }
  }
  return out;
}

}  // namespace p2c
