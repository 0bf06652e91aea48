#include "crosstvr/similarity.hpp"

#include <algorithm>
#include <numeric>

#include "crosstvr/errors.hpp"
#include "crosstvr/ops.hpp"
#include "crosstvr/rng.hpp"
#include "crosstvr/tvtk.hpp"

namespace crosstvr {

void Stage1Config::validate() const {
  if (dim == 0 || embed_dim == 0) throw ConfigError("stage 1: dim and embed_dim must be positive");
  if (!(temperature_init > 0)) throw ConfigError("stage 1: temperature_init must be positive");
}

namespace {

template <typename Real>
Tensor<Real> projection(Rng& rng, std::size_t rows, std::size_t cols) {
  const double stddev = std::sqrt(1.0 / double(rows));
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(rng.normal() * stddev);
  return Tensor<Real>::from({rows, cols}, std::move(v), true);
}

}  // namespace

template <typename Real>
Stage1Params<Real> Stage1Params<Real>::init(const Stage1Config& config, std::uint64_t seed) {
  config.validate();
  Rng rng(hash_combine(seed, 0x737461676531ULL));
  Stage1Params p;
  p.config = config;
  p.video_w = projection<Real>(rng, config.dim, config.embed_dim);
  p.video_b = Tensor<Real>::zeros({config.embed_dim}, true);
  p.text_w = projection<Real>(rng, config.dim, config.embed_dim);
  p.text_b = Tensor<Real>::zeros({config.embed_dim}, true);
  p.logit_scale = Tensor<Real>::from({1}, {static_cast<Real>(std::log(1.0 / config.temperature_init))}, true);
  return p;
}

template <typename Real>
NamedTensors<Real> Stage1Params<Real>::named() const {
  return {{"video.w", video_w}, {"video.b", video_b}, {"text.w", text_w}, {"text.b", text_b},
          {"logit_scale", logit_scale}};
}

template <typename Real>
Tensor<Real> embed_videos(const std::vector<Tensor<Real>>& videos, const Stage1Params<Real>& params) {
  if (videos.empty()) throw ShapeError("embed_videos: no videos");
  std::vector<Tensor<Real>> pooled;
  pooled.reserve(videos.size());
  for (const auto& v : videos) {
    if (v.rank() != 3 || v.dim(2) != params.config.dim) {
      throw ShapeError("embed_videos: expected [T×N×" + std::to_string(params.config.dim) + "], got " +
                       shape_str(v.shape()));
    }
    const std::size_t T = v.dim(0), N = v.dim(1);
    std::vector<std::size_t> cls(T);
    for (std::size_t t = 0; t < T; ++t) cls[t] = t * N;
    pooled.push_back(ops::mean_rows(ops::gather_rows(ops::reshape(v, {T * N, v.dim(2)}), cls)));
  }
  return ops::l2_normalize_rows(ops::linear(ops::concat_rows(pooled), params.video_w, params.video_b));
}

template <typename Real>
Tensor<Real> embed_texts(const std::vector<Tensor<Real>>& texts, const Stage1Params<Real>& params) {
  if (texts.empty()) throw ShapeError("embed_texts: no texts");
  std::vector<Tensor<Real>> sentence;
  sentence.reserve(texts.size());
  for (const auto& t : texts) {
    if (t.rank() != 2 || t.dim(1) != params.config.dim) {
      throw ShapeError("embed_texts: expected [S×" + std::to_string(params.config.dim) + "], got " +
                       shape_str(t.shape()));
    }
    sentence.push_back(ops::slice_rows(t, 0, 1));
  }
  return ops::l2_normalize_rows(ops::linear(ops::concat_rows(sentence), params.text_w, params.text_b));
}

template <typename Real>
Tensor<Real> cosine_similarity_matrix(const Tensor<Real>& texts, const Tensor<Real>& videos) {
  return ops::matmul_nt(texts, videos);
}

template <typename Real>
Tensor<Real> info_nce_loss(const Tensor<Real>& similarity, const Tensor<Real>& inv_temperature) {
  if (similarity.rank() != 2 || similarity.dim(0) != similarity.dim(1)) {
    throw ShapeError("info_nce_loss: needs a square similarity matrix, got " + shape_str(similarity.shape()));
  }
  std::vector<std::size_t> diag(similarity.dim(0));
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  const auto logits = ops::mul_scalar(similarity, inv_temperature);
  const auto rows = ops::cross_entropy_rows(logits, diag);
  const auto cols = ops::cross_entropy_rows(ops::transpose(logits), diag);
  return ops::scale(ops::add(rows, cols), Real(0.5));
}

std::vector<std::size_t> top_k_candidates(std::span<const float> row, std::size_t k) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min(k, row.size());
  auto before = [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);
  order.resize(keep);
  return order;
}

EmbeddingIndex::EmbeddingIndex(TensorF video_embeddings, TensorF text_embeddings, std::vector<std::string> video_ids,
                               std::vector<std::string> text_ids, float temperature)
    : videos_(std::move(video_embeddings)),
      texts_(std::move(text_embeddings)),
      video_ids_(std::move(video_ids)),
      text_ids_(std::move(text_ids)),
      temperature_(temperature) {
  if (videos_.dim(0) != video_ids_.size() || texts_.dim(0) != text_ids_.size()) {
    throw ShapeError("EmbeddingIndex: id lists do not match embedding rows");
  }
  videos_.freeze();
  texts_.freeze();
}

EmbeddingIndex EmbeddingIndex::build(const Stage1Params<float>& params, const TokenCache& cache,
                                     std::vector<std::string> video_ids, std::vector<std::string> text_ids) {
  std::vector<TensorF> videos, texts;
  for (const auto& id : video_ids) videos.push_back(cache.video(id).tokens);
  for (const auto& id : text_ids) texts.push_back(cache.text(id).tokens);
  auto v = embed_videos(videos, params).detach();
  auto t = embed_texts(texts, params).detach();
  return EmbeddingIndex(std::move(v), std::move(t), std::move(video_ids), std::move(text_ids),
                        params.temperature());
}

TensorF EmbeddingIndex::similarity() const { return ops::matmul_nt(texts_, videos_); }

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  tvtk::Bundle b;
  b.kind = tvtk::Kind::index;
  b.tensors = {{"video_emb", videos_}, {"text_emb", texts_}, {"temperature", TensorF::from({1}, {temperature_})}};
  b.lists = {{"video_ids", video_ids_}, {"text_ids", text_ids_}};
  tvtk::save(b, path);
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  auto b = tvtk::load_bundle(path);
  if (b.kind != tvtk::Kind::index) throw FormatError(FormatErrc::wrong_kind, path.string() + " is not an index");
  return EmbeddingIndex(b.tensor("video_emb"), b.tensor("text_emb"), b.list("video_ids"), b.list("text_ids"),
                        b.tensor("temperature")[0]);
}

#define CROSSTVR_INSTANTIATE_STAGE1(Real)                                                                 \
  template struct Stage1Params<Real>;                                                                     \
  template Tensor<Real> embed_videos(const std::vector<Tensor<Real>>&, const Stage1Params<Real>&);         \
  template Tensor<Real> embed_texts(const std::vector<Tensor<Real>>&, const Stage1Params<Real>&);          \
  template Tensor<Real> cosine_similarity_matrix(const Tensor<Real>&, const Tensor<Real>&);               \
  template Tensor<Real> info_nce_loss(const Tensor<Real>&, const Tensor<Real>&);

CROSSTVR_INSTANTIATE_STAGE1(float)
CROSSTVR_INSTANTIATE_STAGE1(double)

}  // namespace crosstvr
