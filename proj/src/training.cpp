#include "crosstvr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "crosstvr/errors.hpp"
#include "crosstvr/ops.hpp"
#include "crosstvr/tvtk.hpp"

namespace crosstvr {
namespace {

void check_square(const TensorF& s) {
  if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
    throw ShapeError("hard negative mining needs a square batch matrix, got " + shape_str(s.shape()));
  }
  if (s.dim(0) < 2) throw std::invalid_argument("hard negative mining needs a batch of at least 2 pairs");
}

// Softmax over `logits` skipping index `skip`.
std::vector<double> softmax_excluding(const std::vector<double>& logits, std::size_t skip) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != skip) mx = std::max(mx, logits[i]);
  std::vector<double> p(logits.size(), 0.0);
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i == skip) continue;
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& x : p) x /= z;
  return p;
}

std::size_t draw(const std::vector<double>& probs, std::size_t excluded, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  std::size_t last = excluded;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (i == excluded || probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  // Rounding left u above the accumulated mass.
  return last;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

// Video indices per batch for one epoch; a trailing singleton joins the
// previous batch so every batch has at least two pairs.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

double t2v_recall_at_1(const TensorF& similarity, const std::vector<std::size_t>& caption_video) {
  const std::size_t nv = similarity.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < caption_video.size(); ++i) {
    const auto row = similarity.data().subspan(i * nv, nv);
    if (top_k_candidates(row, 1).front() == caption_video[i]) ++hits;
  }
  return double(hits) / double(caption_video.size());
}

}  // namespace

std::vector<std::vector<double>> negative_text_distribution(const TensorF& s, double temperature) {
  check_square(s);
  const std::size_t b = s.dim(0);
  std::vector<std::vector<double>> out;
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<double> logits(b);
    for (std::size_t i = 0; i < b; ++i) logits[i] = double(s[i * b + j]) / temperature;
    out.push_back(softmax_excluding(logits, j));
  }
  return out;
}

std::vector<std::vector<double>> negative_video_distribution(const TensorF& s, double temperature) {
  check_square(s);
  const std::size_t b = s.dim(0);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> logits(b);
    for (std::size_t j = 0; j < b; ++j) logits[j] = double(s[i * b + j]) / temperature;
    out.push_back(softmax_excluding(logits, i));
  }
  return out;
}

HardNegatives sample_hard_negatives(const TensorF& similarity, double temperature, Rng& rng) {
  if (!(temperature > 0)) throw std::invalid_argument("hard negative mining needs a positive temperature");
  const auto texts = negative_text_distribution(similarity, temperature);
  const auto videos = negative_video_distribution(similarity, temperature);
  HardNegatives out;
  for (std::size_t j = 0; j < texts.size(); ++j) out.text_for_video.push_back(draw(texts[j], j, rng));
  for (std::size_t i = 0; i < videos.size(); ++i) out.video_for_text.push_back(draw(videos[i], i, rng));
  return out;
}

std::vector<LabeledPair> tvm_pairs(const TrainBatch& batch) {
  const std::size_t b = batch.texts.size();
  if (batch.videos.size() != b || batch.negatives.text_for_video.size() != b ||
      batch.negatives.video_for_text.size() != b) {
    throw ShapeError("tvm batch: texts, videos and negatives must all have B entries");
  }
  std::vector<LabeledPair> pairs;
  pairs.reserve(3 * b);
  for (std::size_t i = 0; i < b; ++i) pairs.push_back({i, i, true});
  for (std::size_t j = 0; j < b; ++j) pairs.push_back({batch.negatives.text_for_video[j], j, false});
  for (std::size_t i = 0; i < b; ++i) pairs.push_back({i, batch.negatives.video_for_text[i], false});
  return pairs;
}

TvmResult tvm_loss(const TrainBatch& batch, const CrossAttnParams<float>& params) {
  TvmResult out;
  out.pairs = tvm_pairs(batch);
  std::vector<TensorF> logits;
  std::vector<std::size_t> labels;
  for (const auto& pair : out.pairs) {
    const auto m = forward_pair(batch.texts.at(pair.text), batch.videos.at(pair.video), params);
    logits.push_back(ops::reshape(m.logits, {1, 2}));
    labels.push_back(pair.match ? kMatchClass : 1 - kMatchClass);
    out.p_match.push_back(m.p_match);
  }
  out.loss = ops::cross_entropy_rows(ops::concat_rows(logits), labels);
  return out;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be ≥ 1");
  if (batch_size < 2) throw ConfigError("train.batch_size: must be ≥ 2 (in-batch negatives)");
  if (!(lr > 0)) throw ConfigError("train: learning rate must be positive");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw ConfigError("train.warmup_fraction: must be in [0, 1)");
  if (!(mining_temperature >= 0)) throw ConfigError("train.mining_temperature: must be ≥ 0");
}

void TrainLog::step(int stage, std::size_t epoch, std::size_t step, double lr, double loss) {
  lines_.push_back("stage=" + std::to_string(stage) + "\tkind=step\tepoch=" + std::to_string(epoch) +
                   "\tstep=" + std::to_string(step) + "\tlr=" + fmt(lr) + "\tloss=" + fmt(loss));
}

void TrainLog::epoch(int stage, std::size_t epoch, double mean_loss, const std::string& probe, double value) {
  lines_.push_back("stage=" + std::to_string(stage) + "\tkind=epoch\tepoch=" + std::to_string(epoch) +
                   "\tloss=" + fmt(mean_loss) + "\tprobe=" + probe + "\tvalue=" + fmt(value));
}

std::vector<double> TrainLog::epoch_losses(int stage) const {
  std::vector<double> out;
  const auto prefix = "stage=" + std::to_string(stage) + "\tkind=epoch\t";
  for (const auto& l : lines_) {
    if (l.rfind(prefix, 0) != 0) continue;
    const auto at = l.find("\tloss=");
    out.push_back(std::stod(l.substr(at + 6)));
  }
  return out;
}

void TrainLog::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines_) out << l << '\n';
}

std::size_t steps_per_epoch(std::size_t n_videos, std::size_t batch_size) {
  std::size_t n = (n_videos + batch_size - 1) / batch_size;
  if (n > 1 && n_videos % batch_size == 1) --n;
  return n;
}

std::uint32_t params_checksum(const NamedTensors<float>& params) {
  std::vector<std::uint8_t> bytes;
  for (const auto& [name, t] : params) {
    bytes.insert(bytes.end(), name.begin(), name.end());
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    bytes.insert(bytes.end(), p, p + t.numel() * sizeof(float));
  }
  return tvtk::crc32(bytes);
}

Stage1Params<float> train_stage1(const Corpus& corpus, const TokenCache& cache, const Stage1Config& model,
                                 const TrainConfig& train, TrainLog& log) {
  model.validate();
  train.validate();
  if (corpus.video_ids.size() < 2) throw ConfigError("stage 1 training needs at least 2 videos");
  auto params = Stage1Params<float>::init(model, train.seed);
  Adam adam(params.named());
  const auto per_epoch = steps_per_epoch(corpus.video_ids.size(), train.batch_size);
  const auto schedule = make_schedule(train.epochs * per_epoch, train.warmup_fraction, train.lr);
  const auto by_video = corpus.captions_by_video();
  const auto caption_video = corpus.caption_video_index();

  std::vector<TensorF> videos, texts;
  for (const auto& id : corpus.video_ids) videos.push_back(cache.video(id).tokens);
  for (const auto& c : corpus.captions) texts.push_back(cache.text(c.caption_id).tokens);

  const float max_logit_scale = static_cast<float>(std::log(100.0));
  Rng rng(hash_combine(train.seed, 0x7374616765316261ULL));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    double epoch_loss = 0;
    const auto batches = epoch_batches(videos.size(), train.batch_size, rng);
    for (const auto& batch : batches) {
      std::vector<TensorF> bv, bt;
      for (auto v : batch) {
        bv.push_back(videos[v]);
        bt.push_back(texts[by_video[v][rng.index(by_video[v].size())]]);
      }
      Tape<float> tape;
      TensorF loss;
      {
        TapeScope<float> scope(tape);
        const auto s = cosine_similarity_matrix(embed_texts(bt, params), embed_videos(bv, params));
        loss = info_nce_loss(s, ops::exp(params.logit_scale));
      }
      backward(loss, tape);
      const double lr = lr_at(step + 1, schedule);
      adam.step(lr);
      adam.zero_grad();
      auto ls = params.logit_scale.mutable_data();
      ls[0] = std::min(ls[0], max_logit_scale);
      log.step(1, epoch, step, lr, loss.item());
      epoch_loss += loss.item();
      ++step;
    }
    const auto s = cosine_similarity_matrix(embed_texts(texts, params), embed_videos(videos, params));
    log.epoch(1, epoch, epoch_loss / double(batches.size()), "t2v_r1", t2v_recall_at_1(s, caption_video));
  }
  return params;
}

CrossAttnParams<float> train_stage2(const Corpus& corpus, const TokenCache& cache, const TokenCache& stage1_cache,
                                    const Stage1Params<float>& stage1, const CrossAttnConfig& model,
                                    const TrainConfig& train, TrainLog& log) {
  model.validate();
  train.validate();
  if (corpus.video_ids.size() < 2) throw ConfigError("stage 2 training needs at least 2 videos");
  for (const auto& [name, t] : stage1.named()) TensorF(t).freeze();
  const auto stage1_crc = params_checksum(stage1.named());

  std::vector<TensorF> videos, texts;
  for (const auto& id : corpus.video_ids) videos.push_back(cache.video(id).tokens);
  for (const auto& c : corpus.captions) texts.push_back(cache.text(c.caption_id).tokens);
  const auto tokens_crc = cache.checksum();
  if (videos.front().dim(2) != model.dim) {
    throw ConfigError("stage 2: token width " + std::to_string(videos.front().dim(2)) + " differs from model.dim " +
                      std::to_string(model.dim));
  }

  // Mining similarities come from the frozen stage-1 snapshot.
  const auto index = EmbeddingIndex::build(stage1, stage1_cache, corpus.video_ids, corpus.caption_ids());
  const auto full = index.similarity();
  const double tau = train.mining_temperature > 0 ? train.mining_temperature : index.temperature();
  const std::size_t nv = corpus.video_ids.size();

  auto params = CrossAttnParams<float>::init(model, train.seed);
  Adam adam(params.named());
  const auto per_epoch = steps_per_epoch(nv, train.batch_size);
  const auto schedule = make_schedule(train.epochs * per_epoch, train.warmup_fraction, train.lr);
  const auto by_video = corpus.captions_by_video();

  Rng rng(hash_combine(train.seed, 0x7374616765326261ULL));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    double epoch_loss = 0;
    std::size_t correct = 0, judged = 0;
    const auto batches = epoch_batches(nv, train.batch_size, rng);
    for (const auto& members : batches) {
      TrainBatch batch;
      std::vector<std::size_t> caption_rows;
      for (auto v : members) {
        const auto c = by_video[v][rng.index(by_video[v].size())];
        caption_rows.push_back(c);
        batch.texts.push_back(texts[c]);
        batch.videos.push_back(videos[v]);
      }
      const std::size_t b = members.size();
      std::vector<float> sub(b * b);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j) sub[i * b + j] = full[caption_rows[i] * nv + members[j]];
      batch.negatives = sample_hard_negatives(TensorF::from({b, b}, std::move(sub)), tau, rng);

      Tape<float> tape;
      TvmResult result;
      {
        TapeScope<float> scope(tape);
        result = tvm_loss(batch, params);
      }
      backward(result.loss, tape);
      const double lr = lr_at(step + 1, schedule);
      adam.step(lr);
      adam.zero_grad();
      for (std::size_t k = 0; k < result.pairs.size(); ++k) {
        correct += (result.p_match[k] > 0.5f) == result.pairs[k].match;
        ++judged;
      }
      log.step(2, epoch, step, lr, result.loss.item());
      epoch_loss += result.loss.item();
      ++step;
    }
    log.epoch(2, epoch, epoch_loss / double(batches.size()), "pair_accuracy", double(correct) / double(judged));
  }

  if (params_checksum(stage1.named()) != stage1_crc) throw FrozenError("stage-1 weights changed during stage 2");
  if (cache.checksum() != tokens_crc) throw FrozenError("encoder outputs changed during stage 2");
  return params;
}

}  // namespace crosstvr
