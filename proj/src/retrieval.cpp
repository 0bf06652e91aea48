#include "crosstvr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "crosstvr/errors.hpp"
#include "crosstvr/ops.hpp"

namespace crosstvr {

double fuse_scores(double cosine, double p_match, FusionWeights weights) {
  return weights.cosine * cosine + weights.match * p_match;
}

QueryResult rerank(std::size_t query, std::span<const float> stage1_row, std::size_t k,
                   const std::function<float(std::size_t)>& p_match, FusionWeights weights) {
  if (stage1_row.empty()) throw std::invalid_argument("rerank: empty corpus");
  if (k < 1) throw std::invalid_argument("rerank: k must be ≥ 1");
  QueryResult out;
  out.query = query;
  for (auto idx : top_k_candidates(stage1_row, stage1_row.size())) out.ranking.push_back({idx, stage1_row[idx], {}, {}});
  const std::size_t top = std::min(k, out.ranking.size());
  if (!p_match) return out;
  for (std::size_t r = 0; r < top; ++r) {
    auto& c = out.ranking[r];
    c.stage2 = p_match(c.index);
    c.fused = fuse_scores(c.stage1, *c.stage2, weights);
  }
  std::sort(out.ranking.begin(), out.ranking.begin() + static_cast<std::ptrdiff_t>(top),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              return *a.fused > *b.fused || (*a.fused == *b.fused && a.index < b.index);
            });
  return out;
}

TensorF dsl_postprocess(const TensorF& s, double temperature) {
  if (s.rank() != 2) throw ShapeError("dsl_postprocess: expected a matrix, got " + shape_str(s.shape()));
  if (!(temperature > 0)) throw std::invalid_argument("dsl_postprocess: temperature must be positive");
  const std::size_t rows = s.dim(0), cols = s.dim(1);
  std::vector<float> out(rows * cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < rows; ++i) mx = std::max(mx, double(s[i * cols + j]) / temperature);
    double z = 0;
    for (std::size_t i = 0; i < rows; ++i) z += std::exp(double(s[i * cols + j]) / temperature - mx);
    for (std::size_t i = 0; i < rows; ++i) {
      const double w = std::exp(double(s[i * cols + j]) / temperature - mx) / z;
      out[i * cols + j] = static_cast<float>(double(s[i * cols + j]) * w);
    }
  }
  return TensorF::from({rows, cols}, std::move(out));
}

Metrics compute_metrics(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("compute_metrics: no queries");
  Metrics m;
  m.queries = ranks.size();
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  double total = 0;
  for (auto r : sorted) {
    if (r == 0) throw std::invalid_argument("compute_metrics: query without a ground-truth rank");
    m.r1 += r <= 1;
    m.r5 += r <= 5;
    m.r10 += r <= 10;
    total += double(r);
  }
  const double n = double(sorted.size());
  m.r1 /= n;
  m.r5 /= n;
  m.r10 /= n;
  m.mean_rank = total / n;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  m.median_rank = sorted.size() % 2 ? double(sorted[mid]) : 0.5 * double(sorted[mid - 1] + sorted[mid]);
  return m;
}

std::size_t rank_of(const QueryResult& result, std::span<const std::size_t> targets) {
  for (std::size_t r = 0; r < result.ranking.size(); ++r) {
    if (std::find(targets.begin(), targets.end(), result.ranking[r].index) != targets.end()) return r + 1;
  }
  throw std::invalid_argument("rank_of: ground truth missing from ranking of query " + std::to_string(result.query));
}

RetrievalEngine::RetrievalEngine(const EmbeddingIndex& index, const TokenCache& cache,
                                 std::vector<std::size_t> caption_video, const CrossAttnParams<float>* head)
    : index_(index), cache_(cache), caption_video_(std::move(caption_video)), head_(head) {
  if (index.video_ids().empty()) throw std::invalid_argument("retrieval: empty corpus");
  if (caption_video_.size() != index.text_ids().size()) {
    throw std::invalid_argument("retrieval: ground truth list does not match the indexed captions");
  }
  similarity_ = index.similarity();
}

const TensorF& RetrievalEngine::stage1_matrix(bool dsl, double temperature, bool transposed) {
  const auto key = std::make_pair(transposed, dsl ? temperature : 0.0);
  if (auto it = adjusted_.find(key); it != adjusted_.end()) return it->second;
  TensorF m = transposed ? ops::transpose(similarity_) : similarity_;
  if (dsl) m = dsl_postprocess(m, temperature);
  return adjusted_.emplace(key, std::move(m)).first->second;
}

float RetrievalEngine::p_match(std::size_t text, std::size_t video) {
  {
    std::lock_guard lock(memo_mutex_);
    if (auto it = memo_.find({text, video}); it != memo_.end()) return it->second;
  }
  const auto& t = cache_.text(index_.text_ids().at(text));
  const auto& v = cache_.video(index_.video_ids().at(video));
  const float p = forward_pair(t, v, *head_).p_match;
  std::lock_guard lock(memo_mutex_);
  memo_.emplace(std::make_pair(text, video), p);
  return p;
}

std::size_t RetrievalEngine::pairs_scored() const {
  std::lock_guard lock(memo_mutex_);
  return memo_.size();
}

QueryResult RetrievalEngine::retrieve_text(std::size_t text, const RetrievalSettings& settings) {
  const auto& s = stage1_matrix(settings.dsl, settings.dsl_temperature, false);
  const std::size_t nv = s.dim(1);
  std::function<float(std::size_t)> scorer;
  if (settings.rerank && head_) scorer = [this, text](std::size_t video) { return p_match(text, video); };
  return rerank(text, s.data().subspan(text * nv, nv), settings.k, scorer, settings.fusion);
}

RetrievalRun RetrievalEngine::text_to_video(const RetrievalSettings& settings) {
  RetrievalRun run;
  for (std::size_t i = 0; i < caption_video_.size(); ++i) {
    run.queries.push_back(retrieve_text(i, settings));
    const std::size_t gt[] = {caption_video_[i]};
    run.ranks.push_back(rank_of(run.queries.back(), gt));
  }
  run.metrics = compute_metrics(run.ranks);
  return run;
}

RetrievalRun RetrievalEngine::video_to_text(const RetrievalSettings& settings) {
  const auto& s = stage1_matrix(settings.dsl, settings.dsl_temperature, true);
  const std::size_t nv = s.dim(0), nt = s.dim(1);
  std::vector<std::vector<std::size_t>> captions(nv);
  for (std::size_t c = 0; c < caption_video_.size(); ++c) captions[caption_video_[c]].push_back(c);
  RetrievalRun run;
  for (std::size_t j = 0; j < nv; ++j) {
    std::function<float(std::size_t)> scorer;
    if (settings.rerank && head_) scorer = [this, j](std::size_t text) { return p_match(text, j); };
    run.queries.push_back(rerank(j, s.data().subspan(j * nt, nt), settings.k, scorer, settings.fusion));
    run.ranks.push_back(rank_of(run.queries.back(), captions[j]));
  }
  run.metrics = compute_metrics(run.ranks);
  return run;
}

QueryResult retrieve_query(const TextTokens& query, const Stage1Params<float>& stage1, const EmbeddingIndex& index,
                           const TokenCache& cache, const CrossAttnParams<float>* head,
                           const RetrievalSettings& settings) {
  if (index.video_ids().empty()) throw std::invalid_argument("retrieve: empty corpus");
  const auto q = embed_text(query.tokens, stage1);
  const auto row = cosine_similarity_matrix(q, index.video_embeddings());
  std::function<float(std::size_t)> scorer;
  if (settings.rerank && head) {
    scorer = [&](std::size_t video) {
      return forward_pair(query, cache.video(index.video_ids()[video]), *head).p_match;
    };
  }
  return rerank(0, row.data(), settings.k, scorer, settings.fusion);
}

namespace {
std::string num(double v, const char* f = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}
}  // namespace

void write_run(std::ostream& out, const RetrievalRun& run, const std::vector<std::string>& query_ids,
               const std::vector<std::string>& candidate_ids, std::size_t depth) {
  for (std::size_t q = 0; q < run.queries.size(); ++q) {
    const auto& result = run.queries[q];
    out << "query\t" << query_ids.at(result.query) << '\t' << run.ranks.at(q) << '\n';
    const std::size_t n = std::min(depth, result.ranking.size());
    for (std::size_t r = 0; r < n; ++r) {
      const auto& c = result.ranking[r];
      out << "cand\t" << r + 1 << '\t' << candidate_ids.at(c.index) << '\t' << num(c.stage1, "%.9e") << '\t'
          << (c.stage2 ? num(*c.stage2, "%.9e") : "-") << '\t' << (c.fused ? num(*c.fused, "%.9e") : "-") << '\n';
    }
  }
}

std::string metrics_line(const std::string& label, const Metrics& m) {
  return "metrics\t" + label + "\tR@1=" + num(m.r1) + "\tR@5=" + num(m.r5) + "\tR@10=" + num(m.r10) +
         "\tMdR=" + num(m.median_rank, "%.1f") + "\tMnR=" + num(m.mean_rank, "%.3f");
}

}  // namespace crosstvr
