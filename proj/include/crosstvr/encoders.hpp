#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "crosstvr/tensor.hpp"

namespace crosstvr {

// Frame-major token grid [T×N×d]; token 0 of each frame is the [CLS] slot.
struct VideoTokens {
  std::string video_id;
  TensorF tokens;

  std::size_t frames() const { return tokens.dim(0); }
  std::size_t tokens_per_frame() const { return tokens.dim(1); }
  std::size_t dim() const { return tokens.dim(2); }
};

// [S×d]; token 0 is the sentence-level token.
struct TextTokens {
  std::string text_id;
  TensorF tokens;

  std::size_t length() const { return tokens.dim(0); }
  std::size_t dim() const { return tokens.dim(1); }
};

struct EncoderConfig {
  std::uint64_t seed = 7;
  std::size_t frames = 12;
  std::size_t tokens_per_frame = 17;
  std::size_t dim = 64;
  std::size_t max_text_len = 32;
};

// A concept vector added into one token slot of one frame.
struct Placement {
  std::size_t frame = 0;
  std::size_t token = 0;
  std::string concept_word;
  float weight = 1.0f;
};

// Synthetic stand-in for a raw video. Background noise is keyed by
// `noise_key` (the video id unless a distractor shares its source's noise).
struct VideoDescriptor {
  std::string video_id;
  std::string noise_key;
  float noise = 1.0f;
  std::vector<Placement> placements;
};

// Unit vector for a vocabulary word; shared by the text encoder and the
// planted video signal.
std::vector<float> concept_vector(std::string_view word, std::size_t dim, std::uint64_t seed);

std::vector<std::string> split_words(std::string_view text);

VideoTokens encode_video(const VideoDescriptor& video, const EncoderConfig& config);
// Raw token file input: a TVTK video record whose stem is the video id.
VideoTokens encode_video(const std::filesystem::path& token_file, const EncoderConfig& config);
TextTokens encode_text(std::string_view text, const EncoderConfig& config, std::string text_id = {});

void save_tokens(const VideoTokens& item, const std::filesystem::path& path);
void save_tokens(const TextTokens& item, const std::filesystem::path& path);
// Item id is taken from the file stem.
std::variant<VideoTokens, TextTokens> load_tokens(const std::filesystem::path& path);

// Encoder outputs backed by <root>/<video_dir>/<id>.tvtk and <root>/texts/<id>.tvtk.
// Reads are safe from several threads; put() takes an exclusive lock.
class TokenCache {
 public:
  explicit TokenCache(std::filesystem::path root, std::string video_dir = "videos");

  const VideoTokens& video(const std::string& id) const;
  const TextTokens& text(const std::string& id) const;

  void put(VideoTokens item);
  void put(TextTokens item);

  // CRC32 over every cached payload, in id order per kind.
  std::uint32_t checksum() const;
  std::size_t size() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path video_path(const std::string& id) const;
  std::filesystem::path text_path(const std::string& id) const;

  std::filesystem::path root_;
  std::string video_dir_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::string, VideoTokens> videos_;
  mutable std::map<std::string, TextTokens> texts_;
};

}  // namespace crosstvr
