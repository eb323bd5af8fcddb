#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "p2c/bpe.hpp"
#include "p2c/corpus.hpp"

namespace p2c {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
/// Unit-length output of the encoder.
using Embedding = Eigen::VectorXd;

/// How a policy's facet enters the encoder: as a prepended reserved token, or
/// as a learned ReLU gate on the unfaceted policy vector.
enum class FacetMode : std::uint8_t { kPrefixed, kMasked };

std::string_view to_string(FacetMode m);
FacetMode parse_facet_mode(std::string_view text);

inline constexpr std::size_t kFacetCount = 2;

struct EncoderShape {
  std::size_t vocab_size = 0;
  std::size_t dim = 64;
  std::size_t hidden = 128;
};

/// Trainable tensors. GradientBundle reuses the layout, so every optimizer or
/// checker walks both through the same `for_each_block`.
struct Weights {
  RowMatrix token_embeddings;  // |V| x d
  RowMatrix w1;                // h x d
  Vector b1;                   // h
  RowMatrix w2;                // d x h
  Vector b2;                   // d
  RowMatrix mask_beta;         // d x 2, column k gates facet k

  static Weights zeros(const EncoderShape& shape);
  Weights zeros_like() const;
  EncoderShape shape() const;
  bool same_shape(const Weights& other) const;
  bool all_finite() const;
  std::size_t parameter_count() const;

  /// Visits blocks in serialization order: token_embeddings, w1, b1, w2, b2,
  /// mask_beta. Each block is a contiguous row-major array.
  template <typename F>
  void for_each_block(F&& f) {
    f("token_embeddings", std::span<double>(token_embeddings.data(), static_cast<std::size_t>(token_embeddings.size())));
    f("w1", std::span<double>(w1.data(), static_cast<std::size_t>(w1.size())));
    f("b1", std::span<double>(b1.data(), static_cast<std::size_t>(b1.size())));
    f("w2", std::span<double>(w2.data(), static_cast<std::size_t>(w2.size())));
    f("b2", std::span<double>(b2.data(), static_cast<std::size_t>(b2.size())));
    f("mask_beta", std::span<double>(mask_beta.data(), static_cast<std::size_t>(mask_beta.size())));
  }
  template <typename F>
  void for_each_block(F&& f) const {
    const_cast<Weights*>(this)->for_each_block([&](const char* name, std::span<double> s) {
      f(name, std::span<const double>(s.data(), s.size()));
    });
  }
};

using GradientBundle = Weights;

struct EncoderParams {
  Weights weights;
  FacetMode facet_mode = FacetMode::kPrefixed;
  std::string vocab_hash;

  std::size_t dim() const { return static_cast<std::size_t>(weights.b2.size()); }

  /// Seeded initialisation: embeddings ~ U(-s, s), dense layers
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, mask_beta = 1.
  static EncoderParams initialize(const EncoderShape& shape, FacetMode mode, std::uint64_t seed,
                                  std::string vocab_hash = {}, double embedding_scale = 1.0);
};

/// SHA-256 over shape, facet mode, vocabulary hash and the raw little-endian
/// parameter bytes. Bit-identical params produce identical hashes.
std::string model_hash(const EncoderParams& params);

/// Tokens of one item plus, for policy text, the facet it is encoded under.
struct EncoderInput {
  std::vector<TokenId> tokens;
  std::optional<Facet> facet;
  std::string id;
};

/// Pipeline: mean-pool token rows -> z = x + W2 tanh(W1 x + b1) + b2 ->
/// (masked facet mode only) z * relu(beta[:, facet]) -> L2 normalise.
Embedding encode(const EncoderInput& input, const EncoderParams& params);

Embedding encode_code(std::span<const TokenId> tokens, const EncoderParams& params);
Embedding encode_text(std::span<const TokenId> tokens, const EncoderParams& params);
Embedding encode_policy_prefixed(std::span<const TokenId> tokens, Facet facet, const EncoderParams& params);
Embedding encode_policy_masked(std::span<const TokenId> tokens, Facet facet, const EncoderParams& params);
/// Dispatches on params.facet_mode.
Embedding encode_policy(std::span<const TokenId> tokens, Facet facet, const EncoderParams& params);

/// The token sequence actually pooled for an input under params.facet_mode.
std::vector<TokenId> effective_tokens(const EncoderInput& input, FacetMode mode);

struct RegularizerWeights {
  double lambda_w = 5e-4;
  double lambda_m = 5e-4;
};

struct MaskRegularizers {
  double unit_ball = 0.0;  // L_W: mean over items of (||raw|| - 1)^2
  double mask_l1 = 0.0;    // L_M: mean |relu(beta)| over all entries
};

MaskRegularizers mask_regularizers(const EncoderParams& params, std::span<const double> raw_norms);

/// Loss over a batch of embeddings (one row per item) together with its
/// gradient with respect to those rows.
struct LossEvaluation {
  double value = 0.0;
  RowMatrix grad;
};
using BatchLoss = std::function<LossEvaluation(const RowMatrix& embeddings)>;

struct ForwardBackwardResult {
  double loss = 0.0;  // batch loss plus any active regularizers
  double batch_loss = 0.0;
  MaskRegularizers regularizers;
  GradientBundle grads;
  RowMatrix embeddings;
};

/// Encodes the batch, evaluates `loss`, and back-propagates exactly. The mask
/// regularizers are added in masked facet mode only. Throws kNonFinite naming
/// the offending items when the loss or any embedding is not finite.
ForwardBackwardResult forward_backward(std::span<const EncoderInput> batch, const BatchLoss& loss,
                                       const EncoderParams& params, const RegularizerWeights& reg = {});

/// Forward only; returns one embedding row per input.
RowMatrix encode_batch(std::span<const EncoderInput> batch, const EncoderParams& params);

}  // namespace p2c
