#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "crosstvr/cross_attention.hpp"
#include "crosstvr/encoders.hpp"
#include "crosstvr/similarity.hpp"

namespace crosstvr {

struct FusionWeights {
  double cosine = 1.0;
  double match = 1.0;
};

// cosine + p_match under the default weights.
double fuse_scores(double cosine, double p_match, FusionWeights weights = {});

struct RankedCandidate {
  std::size_t index = 0;
  float stage1 = 0;
  std::optional<float> stage2;  // p_match, present for re-ranked candidates
  std::optional<double> fused;
};

struct QueryResult {
  std::size_t query = 0;
  std::vector<RankedCandidate> ranking;  // every candidate, final order
};

// Stage-1 ordering of the whole row, then the top k re-scored by `p_match`
// and reordered by fused score (ties to the lower index). Candidates past k
// keep their stage-1 order after the re-ranked block.
QueryResult rerank(std::size_t query, std::span<const float> stage1_row, std::size_t k,
                   const std::function<float(std::size_t candidate)>& p_match, FusionWeights weights = {});

// S′[i][j] = S[i][j] · softmax_i(S[·][j] / temperature).
TensorF dsl_postprocess(const TensorF& similarity, double temperature = 1.0);

struct Metrics {
  double r1 = 0, r5 = 0, r10 = 0;
  double median_rank = 0, mean_rank = 0;
  std::size_t queries = 0;
};

// Ranks are 1-indexed; an empty list or a rank of 0 (ground truth missing)
// is rejected. MdR averages the two middle ranks for even counts.
Metrics compute_metrics(std::span<const std::size_t> ranks);

// 1-indexed position of the best-ranked member of `targets`.
std::size_t rank_of(const QueryResult& result, std::span<const std::size_t> targets);

struct RetrievalSettings {
  std::size_t k = 15;
  bool rerank = true;
  bool dsl = false;
  double dsl_temperature = 1.0;
  FusionWeights fusion;
};

struct RetrievalRun {
  std::vector<QueryResult> queries;
  std::vector<std::size_t> ranks;  // ground-truth rank per query
  Metrics metrics;
};

// Two-stage retrieval over an embedded corpus. Stage-2 scores are memoized
// per (text, video) pair, so sweeps over k reuse earlier work.
class RetrievalEngine {
 public:
  RetrievalEngine(const EmbeddingIndex& index, const TokenCache& cache, std::vector<std::size_t> caption_video,
                  const CrossAttnParams<float>* head);

  // Query = caption i, candidates = videos.
  RetrievalRun text_to_video(const RetrievalSettings& settings);
  // Query = video j, candidates = captions; a video's rank is that of its best caption.
  RetrievalRun video_to_text(const RetrievalSettings& settings);

  QueryResult retrieve_text(std::size_t text, const RetrievalSettings& settings);

  float p_match(std::size_t text, std::size_t video);
  std::size_t pairs_scored() const;

 private:
  const TensorF& stage1_matrix(bool dsl, double temperature, bool transposed);

  const EmbeddingIndex& index_;
  const TokenCache& cache_;
  std::vector<std::size_t> caption_video_;
  const CrossAttnParams<float>* head_;
  TensorF similarity_;
  std::map<std::pair<bool, double>, TensorF> adjusted_;
  std::map<std::pair<std::size_t, std::size_t>, float> memo_;
  mutable std::mutex memo_mutex_;
};

// Ad hoc text query against an index: embed with stage 1, re-rank with the head.
QueryResult retrieve_query(const TextTokens& query, const Stage1Params<float>& stage1, const EmbeddingIndex& index,
                           const TokenCache& cache, const CrossAttnParams<float>* head,
                           const RetrievalSettings& settings);

// Line-delimited export:
//   query <TAB> query_id <TAB> ground_truth_rank
//   cand <TAB> rank <TAB> id <TAB> stage1 <TAB> stage2|- <TAB> fused|-
// limited to the first `depth` candidates of each query.
void write_run(std::ostream& out, const RetrievalRun& run, const std::vector<std::string>& query_ids,
               const std::vector<std::string>& candidate_ids, std::size_t depth);

// "metrics <TAB> label <TAB> R@1=… <TAB> R@5=… <TAB> R@10=… <TAB> MdR=… <TAB> MnR=…"
std::string metrics_line(const std::string& label, const Metrics& m);

}  // namespace crosstvr
