#pragma once

// Decoupled spatial/temporal text-video cross attention with a token selector
// and a single-layer matching head.
//
// Spatial pass, per frame t:
//   z_{t,1} = Block(Concat(Q, X), V_t), z_{t,l} = Block(z_{t,l-1}, V_t)
//   X_spatial(t) = mean of the first N_Q rows of z_{t,L}
// Temporal pass over the selected tokens of every frame:
//   z_1 = Block(X_spatial, Concat_t V_select(t)), z_l = Block(z_{l-1}, ...)
// Each Block is pre-layernorm self-attention over its whole input sequence,
// cross-attention from the query rows into the visual tokens, then an MLP.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crosstvr/encoders.hpp"
#include "crosstvr/ops.hpp"
#include "crosstvr/tensor.hpp"

namespace crosstvr {

struct CrossAttnConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t num_queries = 8;
  std::size_t mlp_hidden = 256;
  std::size_t select_tokens = 4;  // M
  bool share_blocks = true;
  double layernorm_eps = 1e-5;

  void validate() const;
};

// Index of the "match" class in the two matching logits.
inline constexpr std::size_t kMatchClass = 0;

template <typename Real>
struct AttentionWeights {
  Tensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename Real>
struct BlockParams {
  Tensor<Real> ln1_gamma, ln1_beta;
  AttentionWeights<Real> self_attn;
  Tensor<Real> ln2_gamma, ln2_beta;
  AttentionWeights<Real> cross_attn;
  Tensor<Real> ln3_gamma, ln3_beta;
  Tensor<Real> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename Real>
using NamedTensors = std::vector<std::pair<std::string, Tensor<Real>>>;

template <typename Real>
struct CrossAttnParams {
  CrossAttnConfig config;
  Tensor<Real> queries;                          // [N_Q×d]
  std::vector<BlockParams<Real>> spatial_blocks;  // also the temporal stack when shared
  std::vector<BlockParams<Real>> temporal_blocks; // empty when shared
  Tensor<Real> selector_w1, selector_b1, selector_w2, selector_b2;  // d → d/2 → 1
  Tensor<Real> head_w, head_b;                                     // d → 2

  // Random init, deterministic in seed. Every tensor requires grad.
  static CrossAttnParams init(const CrossAttnConfig& config, std::uint64_t seed);

  const std::vector<BlockParams<Real>>& temporal_stack() const {
    return config.share_blocks ? spatial_blocks : temporal_blocks;
  }

  // Stable-ordered view of every trainable tensor (handles share storage).
  NamedTensors<Real> named() const;
  std::size_t parameter_count() const;
};

// Trainable values in one stack of `layers` blocks.
std::size_t block_stack_parameter_count(const CrossAttnConfig& config);

// Rebuilds params from named tensors of any precision (checkpoints, 64-bit checks).
template <typename Real, typename Other>
CrossAttnParams<Real> convert_params(const CrossAttnParams<Other>& src) {
  auto out = CrossAttnParams<Real>::init(src.config, 0);
  auto dst = out.named();
  const auto from = src.named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto values = dst[i].second.mutable_data();
    const auto in = from[i].second.data();
    for (std::size_t j = 0; j < values.size(); ++j) values[j] = static_cast<Real>(in[j]);
  }
  return out;
}

// Spatial enhanced queries [T×d] for text [S×d] and video [T×N×d].
template <typename Real>
Tensor<Real> spatial_text_attention(const Tensor<Real>& text, const Tensor<Real>& video,
                                    const CrossAttnParams<Real>& params,
                                    ops::AttentionTrace<Real>* trace = nullptr);

template <typename Real>
struct TokenSelection {
  Tensor<Real> tokens;  // [T×M×d], scaled by M × renormalized selector score
  Tensor<Real> scores;  // [T×M] selector softmax scores of the kept tokens
  std::vector<std::vector<std::size_t>> indices;  // per frame, by descending score
};

// Top-M tokens per frame under the selector MLP + softmax. Ties go to the lower
// token index.
template <typename Real>
TokenSelection<Real> token_select(const Tensor<Real>& video, std::size_t m, const CrossAttnParams<Real>& params);

// Fused video-level queries [T×d] from spatial queries [T×d] and selected tokens [T×M×d].
template <typename Real>
Tensor<Real> temporal_text_attention(const Tensor<Real>& spatial, const Tensor<Real>& selected,
                                     const CrossAttnParams<Real>& params,
                                     ops::AttentionTrace<Real>* trace = nullptr);

template <typename Real>
struct MatchOutput {
  Tensor<Real> logits;  // [2]
  Real p_match = 0;
};

template <typename Real>
MatchOutput<Real> matching_score(const Tensor<Real>& fused, const CrossAttnParams<Real>& params);

template <typename Real>
MatchOutput<Real> forward_pair(const Tensor<Real>& text, const Tensor<Real>& video,
                               const CrossAttnParams<Real>& params, ops::AttentionTrace<Real>* trace = nullptr);

inline MatchOutput<float> forward_pair(const TextTokens& text, const VideoTokens& video,
                                       const CrossAttnParams<float>& params) {
  return forward_pair(text.tokens, video.tokens, params);
}

}  // namespace crosstvr
