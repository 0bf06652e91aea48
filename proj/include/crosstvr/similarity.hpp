#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crosstvr/cross_attention.hpp"
#include "crosstvr/encoders.hpp"
#include "crosstvr/tensor.hpp"

namespace crosstvr {

struct Stage1Config {
  std::size_t dim = 64;        // encoder width
  std::size_t embed_dim = 64;  // d_e
  double temperature_init = 0.07;

  void validate() const;
};

// Pooled-projection dual encoder. The temperature is learned as
// logit_scale = log(1/τ).
template <typename Real>
struct Stage1Params {
  Stage1Config config;
  Tensor<Real> video_w, video_b;  // [d×d_e], [d_e]
  Tensor<Real> text_w, text_b;
  Tensor<Real> logit_scale;       // [1]

  static Stage1Params init(const Stage1Config& config, std::uint64_t seed);
  NamedTensors<Real> named() const;
  Real temperature() const { return static_cast<Real>(std::exp(-double(logit_scale[0]))); }
};

// Mean of the frame [CLS] tokens → affine → L2 normalize. Rows: one per video.
template <typename Real>
Tensor<Real> embed_videos(const std::vector<Tensor<Real>>& videos, const Stage1Params<Real>& params);
// Sentence token → affine → L2 normalize.
template <typename Real>
Tensor<Real> embed_texts(const std::vector<Tensor<Real>>& texts, const Stage1Params<Real>& params);

template <typename Real>
Tensor<Real> embed_video(const Tensor<Real>& video, const Stage1Params<Real>& params) {
  return embed_videos(std::vector<Tensor<Real>>{video}, params);
}
template <typename Real>
Tensor<Real> embed_text(const Tensor<Real>& text, const Stage1Params<Real>& params) {
  return embed_texts(std::vector<Tensor<Real>>{text}, params);
}

// S[i][j] = ⟨t_i, v_j⟩ for unit text rows [B_t×d_e] and video rows [B_v×d_e].
template <typename Real>
Tensor<Real> cosine_similarity_matrix(const Tensor<Real>& texts, const Tensor<Real>& videos);

// ½·(mean row CE + mean column CE) of S·inv_temperature with matches on the
// diagonal. inv_temperature holds one value.
template <typename Real>
Tensor<Real> info_nce_loss(const Tensor<Real>& similarity, const Tensor<Real>& inv_temperature);

template <typename Real>
Tensor<Real> info_nce_loss(const Tensor<Real>& similarity, Real temperature) {
  return info_nce_loss(similarity, Tensor<Real>::scalar(Real(1) / temperature));
}

// Indices of the k largest scores, descending, ties to the lower index.
// k beyond the row length returns the full ordering.
std::vector<std::size_t> top_k_candidates(std::span<const float> row, std::size_t k);

// Unit embeddings of a whole corpus under fixed stage-1 params. Immutable once built.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  EmbeddingIndex(TensorF video_embeddings, TensorF text_embeddings, std::vector<std::string> video_ids,
                 std::vector<std::string> text_ids, float temperature);

  static EmbeddingIndex build(const Stage1Params<float>& params, const TokenCache& cache,
                              std::vector<std::string> video_ids, std::vector<std::string> text_ids);

  // [texts × videos]
  TensorF similarity() const;

  const TensorF& video_embeddings() const { return videos_; }
  const TensorF& text_embeddings() const { return texts_; }
  const std::vector<std::string>& video_ids() const { return video_ids_; }
  const std::vector<std::string>& text_ids() const { return text_ids_; }
  float temperature() const { return temperature_; }

  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

 private:
  TensorF videos_, texts_;
  std::vector<std::string> video_ids_, text_ids_;
  float temperature_ = 0.07f;
};

}  // namespace crosstvr
