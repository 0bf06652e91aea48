#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crosstvr/encoders.hpp"

namespace crosstvr {

enum class DistractorMode { coarse, fine_grained };

const char* to_string(DistractorMode mode);
DistractorMode parse_distractor_mode(const std::string& text);

// Planted-signal corpus. Every video carries `coarse_per_video` coarse
// concepts (in its [CLS] slots and in patch slots) and one detail concept
// that sits at full strength in a single patch slot per frame and leaks into
// [CLS] with weight `detail_leak`. In fine-grained mode videos come in pairs
// that share noise and coarse concepts and differ only in the detail concept,
// so each pair differs in at most two token slots per frame.
struct SyntheticCorpusSpec {
  std::size_t n_videos = 200;
  std::size_t captions_per_video = 2;
  std::size_t frames = 12;
  std::size_t tokens_per_frame = 17;
  std::size_t dim = 64;
  std::size_t n_concept_axes = 48;
  DistractorMode distractor_mode = DistractorMode::fine_grained;
  std::uint64_t seed = 1;

  std::size_t coarse_per_video = 2;
  float noise = 0.8f;
  float detail_leak = 0.3f;
  std::size_t filler_words = 2;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t detail_concepts() const;
  std::size_t coarse_concepts() const { return n_concept_axes - detail_concepts(); }
};

struct CaptionEntry {
  std::string caption_id;
  std::string video_id;
  std::string text;
};

// Caption → video ground truth plus the planted distractor pairing.
struct Corpus {
  std::vector<std::string> video_ids;
  std::vector<CaptionEntry> captions;
  std::map<std::string, std::string> distractor_of;

  std::vector<std::string> caption_ids() const;
  // Video index (into video_ids) of each caption.
  std::vector<std::size_t> caption_video_index() const;
  // Caption indices of each video.
  std::vector<std::vector<std::size_t>> captions_by_video() const;

  void save(const std::filesystem::path& dir) const;
  // Throws MissingInputError when the manifest is absent.
  static Corpus load(const std::filesystem::path& dir);
};

struct GeneratedCorpus {
  Corpus corpus;
  std::vector<VideoDescriptor> descriptors;
};

// Builds descriptors and captions only; nothing is written.
GeneratedCorpus plan_corpus(const SyntheticCorpusSpec& spec);

// Writes manifest.tsv, distractors.tsv, corpus.txt, videos/, texts/ and, when
// `separate_stage1_encoder` is set, videos_stage1/ from an independent noise
// stream with the same planted signal.
Corpus generate_corpus(const SyntheticCorpusSpec& spec, const EncoderConfig& encoder,
                       const std::filesystem::path& dir, bool separate_stage1_encoder = false);

}  // namespace crosstvr
