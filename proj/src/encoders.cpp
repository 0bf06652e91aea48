#include "crosstvr/encoders.hpp"

#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "crosstvr/errors.hpp"
#include "crosstvr/rng.hpp"
#include "crosstvr/tvtk.hpp"

namespace crosstvr {
namespace {

void normalize(std::span<float> v) {
  double ss = 0;
  for (float x : v) ss += double(x) * x;
  const double norm = std::sqrt(ss);
  if (norm < 1e-12) return;
  for (auto& x : v) x = static_cast<float>(x / norm);
}

void check_dims(const EncoderConfig& c) {
  if (c.frames < 1 || c.frames > 4096) throw std::invalid_argument("encoder: frames must be in [1, 4096]");
  if (c.tokens_per_frame < 2 || c.tokens_per_frame > 4096) {
    throw std::invalid_argument("encoder: tokens_per_frame must be in [2, 4096] (CLS + patches)");
  }
  if (c.dim < 1 || c.dim > 4096) throw std::invalid_argument("encoder: dim must be in [1, 4096]");
  if (c.max_text_len < 1) throw std::invalid_argument("encoder: max_text_len must be ≥ 1");
}

}  // namespace

std::vector<float> concept_vector(std::string_view word, std::size_t dim, std::uint64_t seed) {
  Rng rng(hash_combine(hash_combine(seed, 0x776f7264ULL), hash_string(word)));
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  normalize(v);
  return v;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

VideoTokens encode_video(const VideoDescriptor& video, const EncoderConfig& config) {
  check_dims(config);
  if (video.video_id.empty()) throw std::invalid_argument("encode_video: descriptor without video id");
  const std::size_t T = config.frames, N = config.tokens_per_frame, d = config.dim;
  for (const auto& p : video.placements) {
    if (p.frame >= T || p.token >= N || p.concept_word.empty()) {
      throw std::invalid_argument("encode_video: placement (" + std::to_string(p.frame) + ", " +
                                  std::to_string(p.token) + ", '" + p.concept_word + "') does not fit video " +
                                  video.video_id);
    }
  }
  const auto& key = video.noise_key.empty() ? video.video_id : video.noise_key;
  const std::uint64_t base = hash_combine(hash_combine(config.seed, 0x766964ULL), hash_string(key));
  std::vector<float> data(T * N * d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      Rng rng(hash_combine(hash_combine(base, t), n));
      float* tok = data.data() + (t * N + n) * d;
      const float scale = video.noise / std::sqrt(static_cast<float>(d));
      for (std::size_t j = 0; j < d; ++j) tok[j] = static_cast<float>(rng.normal()) * scale;
    }
  }
  for (const auto& p : video.placements) {
    const auto c = concept_vector(p.concept_word, d, config.seed);
    float* tok = data.data() + (p.frame * N + p.token) * d;
    for (std::size_t j = 0; j < d; ++j) tok[j] += p.weight * c[j];
  }
  for (std::size_t i = 0; i < T * N; ++i) normalize(std::span(data).subspan(i * d, d));
  return {video.video_id, TensorF::from({T, N, d}, std::move(data))};
}

VideoTokens encode_video(const std::filesystem::path& token_file, const EncoderConfig& config) {
  auto item = load_tokens(token_file);
  auto* video = std::get_if<VideoTokens>(&item);
  if (!video) throw std::invalid_argument("encode_video: " + token_file.string() + " is not a video token file");
  if (video->dim() != config.dim) {
    throw std::invalid_argument("encode_video: " + token_file.string() + " has width " +
                                std::to_string(video->dim()) + ", expected " + std::to_string(config.dim));
  }
  return std::move(*video);
}

TextTokens encode_text(std::string_view text, const EncoderConfig& config, std::string text_id) {
  check_dims(config);
  const auto words = split_words(text);
  if (words.empty()) throw std::invalid_argument("encode_text: empty text");
  const std::size_t d = config.dim;
  const std::size_t S = std::min(words.size() + 1, config.max_text_len);
  std::vector<float> data(S * d, 0.0f);
  std::vector<double> pooled(d, 0.0);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto v = concept_vector(words[w], d, config.seed);
    for (std::size_t j = 0; j < d; ++j) pooled[j] += v[j];
    if (w + 1 < S) std::copy(v.begin(), v.end(), data.begin() + (w + 1) * d);
  }
  for (std::size_t j = 0; j < d; ++j) data[j] = static_cast<float>(pooled[j] / double(words.size()));
  normalize(std::span(data).subspan(0, d));
  if (text_id.empty()) text_id = std::string(text);
  return {std::move(text_id), TensorF::from({S, d}, std::move(data))};
}

void save_tokens(const VideoTokens& item, const std::filesystem::path& path) {
  const auto values = item.tokens.data();
  tvtk::save(tvtk::Record{tvtk::Kind::video, item.tokens.shape(), {values.begin(), values.end()}}, path);
}

void save_tokens(const TextTokens& item, const std::filesystem::path& path) {
  const auto values = item.tokens.data();
  tvtk::save(tvtk::Record{tvtk::Kind::text, item.tokens.shape(), {values.begin(), values.end()}}, path);
}

std::variant<VideoTokens, TextTokens> load_tokens(const std::filesystem::path& path) {
  auto rec = tvtk::load(path);
  const auto id = path.stem().string();
  if (rec.kind == tvtk::Kind::video) {
    if (rec.shape.size() != 3) throw FormatError(FormatErrc::wrong_kind, "video tokens must have rank 3");
    return VideoTokens{id, TensorF::from(rec.shape, std::move(rec.data))};
  }
  if (rec.shape.size() != 2) throw FormatError(FormatErrc::wrong_kind, "text tokens must have rank 2");
  return TextTokens{id, TensorF::from(rec.shape, std::move(rec.data))};
}

TokenCache::TokenCache(std::filesystem::path root, std::string video_dir)
    : root_(std::move(root)), video_dir_(std::move(video_dir)) {}

std::filesystem::path TokenCache::video_path(const std::string& id) const {
  return root_ / video_dir_ / (id + ".tvtk");
}

std::filesystem::path TokenCache::text_path(const std::string& id) const {
  return root_ / "texts" / (id + ".tvtk");
}

const VideoTokens& TokenCache::video(const std::string& id) const {
  {
    std::shared_lock lock(mutex_);
    if (auto it = videos_.find(id); it != videos_.end()) return it->second;
  }
  auto item = load_tokens(video_path(id));
  auto* video = std::get_if<VideoTokens>(&item);
  if (!video) throw FormatError(FormatErrc::wrong_kind, video_path(id).string() + " is not a video");
  video->tokens.freeze();
  std::unique_lock lock(mutex_);
  return videos_.try_emplace(id, std::move(*video)).first->second;
}

const TextTokens& TokenCache::text(const std::string& id) const {
  {
    std::shared_lock lock(mutex_);
    if (auto it = texts_.find(id); it != texts_.end()) return it->second;
  }
  auto item = load_tokens(text_path(id));
  auto* text = std::get_if<TextTokens>(&item);
  if (!text) throw FormatError(FormatErrc::wrong_kind, text_path(id).string() + " is not a text");
  text->tokens.freeze();
  std::unique_lock lock(mutex_);
  return texts_.try_emplace(id, std::move(*text)).first->second;
}

void TokenCache::put(VideoTokens item) {
  std::unique_lock lock(mutex_);
  save_tokens(item, video_path(item.video_id));
  item.tokens.freeze();
  videos_.insert_or_assign(item.video_id, std::move(item));
}

void TokenCache::put(TextTokens item) {
  std::unique_lock lock(mutex_);
  save_tokens(item, text_path(item.text_id));
  item.tokens.freeze();
  texts_.insert_or_assign(item.text_id, std::move(item));
}

std::uint32_t TokenCache::checksum() const {
  std::shared_lock lock(mutex_);
  std::vector<std::uint8_t> bytes;
  auto append = [&bytes](const std::string& id, const TensorF& t) {
    bytes.insert(bytes.end(), id.begin(), id.end());
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    bytes.insert(bytes.end(), p, p + t.numel() * sizeof(float));
  };
  for (const auto& [id, v] : videos_) append(id, v.tokens);
  for (const auto& [id, t] : texts_) append(id, t.tokens);
  return tvtk::crc32(bytes);
}

std::size_t TokenCache::size() const {
  std::shared_lock lock(mutex_);
  return videos_.size() + texts_.size();
}

}  // namespace crosstvr
