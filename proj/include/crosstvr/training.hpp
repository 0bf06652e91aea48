#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crosstvr/corpus.hpp"
#include "crosstvr/cross_attention.hpp"
#include "crosstvr/encoders.hpp"
#include "crosstvr/optim.hpp"
#include "crosstvr/rng.hpp"
#include "crosstvr/similarity.hpp"

namespace crosstvr {

struct HardNegatives {
  std::vector<std::size_t> text_for_video;  // per video column j: a row i ≠ j
  std::vector<std::size_t> video_for_text;  // per text row i: a column j ≠ i
};

// Exact sampling distributions over off-diagonal entries: for column j,
// P(i) ∝ exp(S[i][j]/τ) over i ≠ j (and the transpose for rows). Entry [j][j]
// is 0. Computed in double with max-subtraction.
std::vector<std::vector<double>> negative_text_distribution(const TensorF& similarity, double temperature);
std::vector<std::vector<double>> negative_video_distribution(const TensorF& similarity, double temperature);

// One negative text per video and one negative video per text, drawn from the
// distributions above. The matched pair is never returned.
HardNegatives sample_hard_negatives(const TensorF& similarity, double temperature, Rng& rng);

// B matched pairs (text i ↔ video i) with their mined negatives.
struct TrainBatch {
  std::vector<TensorF> texts;
  std::vector<TensorF> videos;
  HardNegatives negatives;
};

struct LabeledPair {
  std::size_t text = 0;
  std::size_t video = 0;
  bool match = false;
};

// Positives first, then (negative text, video j) per video, then (text i,
// negative video) per text: 3B pairs.
std::vector<LabeledPair> tvm_pairs(const TrainBatch& batch);

struct TvmResult {
  TensorF loss;  // mean two-class cross entropy over every pair
  std::vector<LabeledPair> pairs;
  std::vector<float> p_match;
};

TvmResult tvm_loss(const TrainBatch& batch, const CrossAttnParams<float>& params);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 1;
  // Stage 2 only; 0 reuses the learned stage-1 temperature.
  double mining_temperature = 0;

  void validate() const;
};

// Plain-text training log, one tab-separated key=value record per line:
//   stage=<1|2> kind=step epoch=<e> step=<s> lr=<lr> loss=<loss>
//   stage=<1|2> kind=epoch epoch=<e> loss=<mean> probe=<name> value=<v>
// Reals are printed with %.9e, so identical runs give identical bytes.
class TrainLog {
 public:
  void step(int stage, std::size_t epoch, std::size_t step, double lr, double loss);
  void epoch(int stage, std::size_t epoch, double mean_loss, const std::string& probe, double value);

  const std::vector<std::string>& lines() const { return lines_; }
  std::vector<double> epoch_losses(int stage) const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> lines_;
};

std::size_t steps_per_epoch(std::size_t n_videos, std::size_t batch_size);

// Contrastive training of the pooled dual encoder on InfoNCE.
Stage1Params<float> train_stage1(const Corpus& corpus, const TokenCache& cache, const Stage1Config& model,
                                 const TrainConfig& train, TrainLog& log);

// Trains the cross-attention head on the TVM loss with hard negatives mined
// from the frozen stage-1 similarities. `stage1` and every encoder output are
// frozen for the duration; a change to either is a hard failure.
CrossAttnParams<float> train_stage2(const Corpus& corpus, const TokenCache& cache, const TokenCache& stage1_cache,
                                    const Stage1Params<float>& stage1, const CrossAttnConfig& model,
                                    const TrainConfig& train, TrainLog& log);

// CRC32 over the values of a parameter set.
std::uint32_t params_checksum(const NamedTensors<float>& params);

}  // namespace crosstvr
