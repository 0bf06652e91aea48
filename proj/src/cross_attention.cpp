#include "crosstvr/cross_attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crosstvr/errors.hpp"
#include "crosstvr/rng.hpp"

namespace crosstvr {

void CrossAttnConfig::validate() const {
  if (dim == 0 || layers == 0 || heads == 0 || num_queries == 0 || mlp_hidden == 0) {
    throw ConfigError("cross attention: dim, layers, heads, num_queries and mlp_hidden must be positive");
  }
  if (dim % heads != 0) {
    throw ConfigError("cross attention: dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (dim < 2) throw ConfigError("cross attention: dim must be ≥ 2 for the d/2 selector layer");
  if (select_tokens == 0) throw ConfigError("cross attention: select_tokens (M) must be ≥ 1");
  if (!(layernorm_eps > 0)) throw ConfigError("cross attention: layernorm_eps must be positive");
}

namespace {

template <typename Real>
Tensor<Real> random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double stddev = std::sqrt(2.0 / double(rows + cols));
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(rng.normal() * stddev);
  return Tensor<Real>::from({rows, cols}, std::move(v), true);
}

template <typename Real>
Tensor<Real> filled(std::size_t n, Real value) {
  return Tensor<Real>::from({n}, std::vector<Real>(n, value), true);
}

template <typename Real>
AttentionWeights<Real> init_attention(Rng& rng, std::size_t d) {
  return {random_matrix<Real>(rng, d, d), filled<Real>(d, 0), random_matrix<Real>(rng, d, d), filled<Real>(d, 0),
          random_matrix<Real>(rng, d, d), filled<Real>(d, 0), random_matrix<Real>(rng, d, d), filled<Real>(d, 0)};
}

template <typename Real>
BlockParams<Real> init_block(Rng& rng, const CrossAttnConfig& c) {
  BlockParams<Real> b;
  b.ln1_gamma = filled<Real>(c.dim, 1);
  b.ln1_beta = filled<Real>(c.dim, 0);
  b.self_attn = init_attention<Real>(rng, c.dim);
  b.ln2_gamma = filled<Real>(c.dim, 1);
  b.ln2_beta = filled<Real>(c.dim, 0);
  b.cross_attn = init_attention<Real>(rng, c.dim);
  b.ln3_gamma = filled<Real>(c.dim, 1);
  b.ln3_beta = filled<Real>(c.dim, 0);
  b.mlp_w1 = random_matrix<Real>(rng, c.dim, c.mlp_hidden);
  b.mlp_b1 = filled<Real>(c.mlp_hidden, 0);
  b.mlp_w2 = random_matrix<Real>(rng, c.mlp_hidden, c.dim);
  b.mlp_b2 = filled<Real>(c.dim, 0);
  return b;
}

template <typename Real>
void append_block(NamedTensors<Real>& out, const std::string& prefix, const BlockParams<Real>& b) {
  auto attn = [&](const std::string& p, const AttentionWeights<Real>& a) {
    out.emplace_back(p + ".wq", a.wq);
    out.emplace_back(p + ".bq", a.bq);
    out.emplace_back(p + ".wk", a.wk);
    out.emplace_back(p + ".bk", a.bk);
    out.emplace_back(p + ".wv", a.wv);
    out.emplace_back(p + ".bv", a.bv);
    out.emplace_back(p + ".wo", a.wo);
    out.emplace_back(p + ".bo", a.bo);
  };
  out.emplace_back(prefix + ".ln1.gamma", b.ln1_gamma);
  out.emplace_back(prefix + ".ln1.beta", b.ln1_beta);
  attn(prefix + ".self_attn", b.self_attn);
  out.emplace_back(prefix + ".ln2.gamma", b.ln2_gamma);
  out.emplace_back(prefix + ".ln2.beta", b.ln2_beta);
  attn(prefix + ".cross_attn", b.cross_attn);
  out.emplace_back(prefix + ".ln3.gamma", b.ln3_gamma);
  out.emplace_back(prefix + ".ln3.beta", b.ln3_beta);
  out.emplace_back(prefix + ".mlp.w1", b.mlp_w1);
  out.emplace_back(prefix + ".mlp.b1", b.mlp_b1);
  out.emplace_back(prefix + ".mlp.w2", b.mlp_w2);
  out.emplace_back(prefix + ".mlp.b2", b.mlp_b2);
}

template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& xq, const Tensor<Real>& xkv, const AttentionWeights<Real>& w,
                                  std::size_t heads, ops::AttentionTrace<Real>* trace) {
  const auto q = ops::linear(xq, w.wq, w.bq);
  const auto k = ops::linear(xkv, w.wk, w.bk);
  const auto v = ops::linear(xkv, w.wv, w.bv);
  if (heads == 1) return ops::linear(ops::scaled_dot_attention(q, k, v, trace), w.wo, w.bo);
  const std::size_t dh = q.dim(1) / heads;
  std::vector<Tensor<Real>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(ops::scaled_dot_attention(ops::slice_cols(q, h * dh, dh), ops::slice_cols(k, h * dh, dh),
                                             ops::slice_cols(v, h * dh, dh), trace));
  }
  return ops::linear(ops::concat_cols(outs), w.wo, w.bo);
}

template <typename Real>
Tensor<Real> self_attention_sublayer(const Tensor<Real>& h, const BlockParams<Real>& b, const CrossAttnConfig& c,
                                     ops::AttentionTrace<Real>* trace) {
  const auto a = ops::layernorm(h, b.ln1_gamma, b.ln1_beta, Real(c.layernorm_eps));
  return ops::add(h, multi_head_attention(a, a, b.self_attn, c.heads, trace));
}

template <typename Real>
Tensor<Real> cross_attention_sublayer(const Tensor<Real>& hq, const Tensor<Real>& visual, const BlockParams<Real>& b,
                                      const CrossAttnConfig& c, ops::AttentionTrace<Real>* trace) {
  const auto a = ops::layernorm(hq, b.ln2_gamma, b.ln2_beta, Real(c.layernorm_eps));
  return ops::add(hq, multi_head_attention(a, visual, b.cross_attn, c.heads, trace));
}

template <typename Real>
Tensor<Real> mlp_sublayer(const Tensor<Real>& h, const BlockParams<Real>& b, const CrossAttnConfig& c) {
  const auto a = ops::layernorm(h, b.ln3_gamma, b.ln3_beta, Real(c.layernorm_eps));
  return ops::add(h, ops::linear(ops::gelu(ops::linear(a, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2));
}

void check_width(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + " width " + std::to_string(got) + " does not match model width " +
                     std::to_string(want));
  }
}

}  // namespace

template <typename Real>
CrossAttnParams<Real> CrossAttnParams<Real>::init(const CrossAttnConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(hash_combine(seed, 0x63726f7373ULL));
  CrossAttnParams p;
  p.config = config;
  std::vector<Real> q(config.num_queries * config.dim);
  for (auto& x : q) x = static_cast<Real>(rng.normal() / std::sqrt(double(config.dim)));
  p.queries = Tensor<Real>::from({config.num_queries, config.dim}, std::move(q), true);
  for (std::size_t l = 0; l < config.layers; ++l) p.spatial_blocks.push_back(init_block<Real>(rng, config));
  if (!config.share_blocks) {
    for (std::size_t l = 0; l < config.layers; ++l) p.temporal_blocks.push_back(init_block<Real>(rng, config));
  }
  const std::size_t half = config.dim / 2;
  p.selector_w1 = random_matrix<Real>(rng, config.dim, half);
  p.selector_b1 = filled<Real>(half, 0);
  p.selector_w2 = random_matrix<Real>(rng, half, 1);
  p.selector_b2 = filled<Real>(1, 0);
  p.head_w = random_matrix<Real>(rng, config.dim, 2);
  p.head_b = filled<Real>(2, 0);
  return p;
}

template <typename Real>
NamedTensors<Real> CrossAttnParams<Real>::named() const {
  NamedTensors<Real> out;
  out.emplace_back("queries", queries);
  for (std::size_t l = 0; l < spatial_blocks.size(); ++l)
    append_block(out, "spatial." + std::to_string(l), spatial_blocks[l]);
  for (std::size_t l = 0; l < temporal_blocks.size(); ++l)
    append_block(out, "temporal." + std::to_string(l), temporal_blocks[l]);
  out.emplace_back("selector.w1", selector_w1);
  out.emplace_back("selector.b1", selector_b1);
  out.emplace_back("selector.w2", selector_w2);
  out.emplace_back("selector.b2", selector_b2);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

template <typename Real>
std::size_t CrossAttnParams<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t.numel();
  return n;
}

std::size_t block_stack_parameter_count(const CrossAttnConfig& c) {
  const std::size_t d = c.dim;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t norms = 3 * 2 * d;
  const std::size_t mlp = d * c.mlp_hidden + c.mlp_hidden + c.mlp_hidden * d + d;
  return c.layers * (2 * attention + norms + mlp);
}

template <typename Real>
Tensor<Real> spatial_text_attention(const Tensor<Real>& text, const Tensor<Real>& video,
                                    const CrossAttnParams<Real>& params, ops::AttentionTrace<Real>* trace) {
  const auto& c = params.config;
  if (text.rank() != 2 || video.rank() != 3) {
    throw ShapeError("spatial_text_attention: expected text [S×d] and video [T×N×d], got " +
                     shape_str(text.shape()) + " and " + shape_str(video.shape()));
  }
  check_width(text.dim(1), c.dim, "text");
  check_width(video.dim(2), c.dim, "video");
  const std::size_t nq = c.num_queries;
  const auto& blocks = params.spatial_blocks;

  // The first block's self-attention sees only Q and X, so it is shared by
  // every frame; so is the first block's MLP on the text rows.
  const auto h0 = self_attention_sublayer(ops::concat_rows<Real>({params.queries, text}), blocks[0], c, trace);
  const auto shared_q = ops::slice_rows(h0, 0, nq);
  Tensor<Real> shared_text = ops::slice_rows(h0, nq, text.dim(0));
  if (blocks.size() > 1) shared_text = mlp_sublayer(shared_text, blocks[0], c);

  std::vector<Tensor<Real>> rows;
  rows.reserve(video.dim(0));
  for (std::size_t t = 0; t < video.dim(0); ++t) {
    const auto frame = ops::index_first(video, t);
    auto hq = mlp_sublayer(cross_attention_sublayer(shared_q, frame, blocks[0], c, trace), blocks[0], c);
    auto ht = shared_text;
    for (std::size_t l = 1; l < blocks.size(); ++l) {
      const auto h = self_attention_sublayer(ops::concat_rows<Real>({hq, ht}), blocks[l], c, trace);
      hq = ops::slice_rows(h, 0, nq);
      ht = ops::slice_rows(h, nq, text.dim(0));
      hq = mlp_sublayer(cross_attention_sublayer(hq, frame, blocks[l], c, trace), blocks[l], c);
      // Text rows of the last block are discarded, so their MLP is skipped.
      if (l + 1 < blocks.size()) ht = mlp_sublayer(ht, blocks[l], c);
    }
    rows.push_back(ops::mean_rows(hq));
  }
  return ops::concat_rows(rows);
}

template <typename Real>
TokenSelection<Real> token_select(const Tensor<Real>& video, std::size_t m, const CrossAttnParams<Real>& params) {
  if (video.rank() != 3) throw ShapeError("token_select: expected video [T×N×d], got " + shape_str(video.shape()));
  check_width(video.dim(2), params.config.dim, "video");
  const std::size_t T = video.dim(0), N = video.dim(1);
  if (m < 1 || m > N) {
    throw std::invalid_argument("token_select: M=" + std::to_string(m) + " outside [1, " + std::to_string(N) + "]");
  }
  TokenSelection<Real> out;
  std::vector<Tensor<Real>> frames, score_rows;
  for (std::size_t t = 0; t < T; ++t) {
    const auto frame = ops::index_first(video, t);
    const auto hidden = ops::gelu(ops::linear(frame, params.selector_w1, params.selector_b1));
    const auto logits = ops::linear(hidden, params.selector_w2, params.selector_b2);  // [N×1]
    const auto probs = ops::softmax_lastdim(ops::reshape(logits, {1, N}));
    const auto pd = probs.data();
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pd[a] > pd[b]; });
    order.resize(m);
    // Renormalized kept scores equal a softmax over the kept logits.
    const auto kept_logits = ops::reshape(ops::gather_rows(logits, order), {1, m});
    const auto weights = ops::scale(ops::softmax_lastdim(kept_logits), Real(m));
    frames.push_back(ops::scale_rows(ops::gather_rows(frame, order), weights));
    score_rows.push_back(ops::reshape(ops::gather_rows(ops::reshape(probs, {N, 1}), order), {1, m}));
    out.indices.push_back(std::move(order));
  }
  out.tokens = ops::reshape(ops::concat_rows(frames), {T, m, video.dim(2)});
  out.scores = ops::concat_rows(score_rows);
  return out;
}

template <typename Real>
Tensor<Real> temporal_text_attention(const Tensor<Real>& spatial, const Tensor<Real>& selected,
                                     const CrossAttnParams<Real>& params, ops::AttentionTrace<Real>* trace) {
  const auto& c = params.config;
  if (spatial.rank() != 2 || selected.rank() != 3 || spatial.dim(0) != selected.dim(0)) {
    throw ShapeError("temporal_text_attention: expected spatial [T×d] and selected [T×M×d], got " +
                     shape_str(spatial.shape()) + " and " + shape_str(selected.shape()));
  }
  check_width(spatial.dim(1), c.dim, "spatial queries");
  check_width(selected.dim(2), c.dim, "selected tokens");
  const auto visual = ops::reshape(selected, {selected.dim(0) * selected.dim(1), selected.dim(2)});
  auto h = spatial;
  for (const auto& block : params.temporal_stack()) {
    h = self_attention_sublayer(h, block, c, trace);
    h = cross_attention_sublayer(h, visual, block, c, trace);
    h = mlp_sublayer(h, block, c);
  }
  return h;
}

template <typename Real>
MatchOutput<Real> matching_score(const Tensor<Real>& fused, const CrossAttnParams<Real>& params) {
  if (fused.rank() != 2) throw ShapeError("matching_score: expected [T×d], got " + shape_str(fused.shape()));
  check_width(fused.dim(1), params.config.dim, "fused queries");
  MatchOutput<Real> out;
  out.logits = ops::reshape(ops::linear(ops::mean_rows(fused), params.head_w, params.head_b), {2});
  const Real a = out.logits[0], b = out.logits[1];
  const Real mx = std::max(a, b);
  const Real ea = std::exp(a - mx), eb = std::exp(b - mx);
  out.p_match = (kMatchClass == 0 ? ea : eb) / (ea + eb);
  return out;
}

template <typename Real>
MatchOutput<Real> forward_pair(const Tensor<Real>& text, const Tensor<Real>& video,
                               const CrossAttnParams<Real>& params, ops::AttentionTrace<Real>* trace) {
  const auto spatial = spatial_text_attention(text, video, params, trace);
  const auto selection = token_select(video, params.config.select_tokens, params);
  return matching_score(temporal_text_attention(spatial, selection.tokens, params, trace), params);
}

#define CROSSTVR_INSTANTIATE_HEAD(Real)                                                                             \
  template struct CrossAttnParams<Real>;                                                                            \
  template Tensor<Real> spatial_text_attention(const Tensor<Real>&, const Tensor<Real>&,                            \
                                               const CrossAttnParams<Real>&, ops::AttentionTrace<Real>*);           \
  template TokenSelection<Real> token_select(const Tensor<Real>&, std::size_t, const CrossAttnParams<Real>&);       \
  template Tensor<Real> temporal_text_attention(const Tensor<Real>&, const Tensor<Real>&,                           \
                                                const CrossAttnParams<Real>&, ops::AttentionTrace<Real>*);          \
  template MatchOutput<Real> matching_score(const Tensor<Real>&, const CrossAttnParams<Real>&);                     \
  template MatchOutput<Real> forward_pair(const Tensor<Real>&, const Tensor<Real>&, const CrossAttnParams<Real>&,   \
                                          ops::AttentionTrace<Real>*);

CROSSTVR_INSTANTIATE_HEAD(float)
CROSSTVR_INSTANTIATE_HEAD(double)

}  // namespace crosstvr
