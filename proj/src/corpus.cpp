#include "crosstvr/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "crosstvr/errors.hpp"
#include "crosstvr/rng.hpp"

namespace crosstvr {

const char* to_string(DistractorMode mode) {
  return mode == DistractorMode::coarse ? "coarse" : "fine-grained";
}

DistractorMode parse_distractor_mode(const std::string& text) {
  if (text == "coarse") return DistractorMode::coarse;
  if (text == "fine-grained" || text == "fine_grained") return DistractorMode::fine_grained;
  throw ConfigError("corpus.distractor_mode: expected 'coarse' or 'fine-grained', got '" + text + "'");
}

std::size_t SyntheticCorpusSpec::detail_concepts() const { return std::max<std::size_t>(2, n_concept_axes / 3); }

void SyntheticCorpusSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("corpus." + field + ": " + why); };
  if (n_videos < 2) fail("n_videos", "must be ≥ 2");
  if (distractor_mode == DistractorMode::fine_grained && n_videos % 2 != 0) {
    fail("n_videos", "must be even in fine-grained mode (videos come in distractor pairs)");
  }
  if (captions_per_video < 1) fail("captions_per_video", "must be ≥ 1");
  if (frames < 1) fail("frames", "must be ≥ 1");
  if (dim < 2) fail("dim", "must be ≥ 2");
  if (coarse_per_video < 1) fail("coarse_per_video", "must be ≥ 1");
  if (tokens_per_frame < coarse_per_video + 2) {
    fail("tokens_per_frame", "needs a [CLS] slot plus " + std::to_string(coarse_per_video + 1) + " patch slots");
  }
  if (n_concept_axes < 6) fail("n_concept_axes", "must be ≥ 6");
  if (coarse_concepts() < coarse_per_video) fail("n_concept_axes", "too few coarse concepts for coarse_per_video");
  if (!(noise >= 0.0f)) fail("noise", "must be ≥ 0");
  if (!(detail_leak >= 0.0f)) fail("detail_leak", "must be ≥ 0");
}

namespace {

constexpr const char* kFillers[] = {"a", "the", "with", "and", "in", "scene", "clip", "shows", "of", "video"};

std::string word(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02zu", prefix, i);
  return buf;
}

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t pool, std::size_t count) {
  std::vector<std::size_t> all(pool);
  std::iota(all.begin(), all.end(), std::size_t{0});
  rng.shuffle(all);
  all.resize(count);
  return all;
}

struct VideoPlan {
  std::vector<std::size_t> coarse;
  std::size_t detail = 0;
  // Per frame: patch slots for each coarse concept, then the detail slot.
  std::vector<std::vector<std::size_t>> slots;
};

VideoDescriptor describe_video(const SyntheticCorpusSpec& spec, const std::string& id, const std::string& noise_key,
                               const VideoPlan& plan) {
  VideoDescriptor d;
  d.video_id = id;
  d.noise_key = noise_key;
  d.noise = spec.noise;
  const auto detail = word("det", plan.detail);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t c = 0; c < plan.coarse.size(); ++c) {
      const auto w = word("obj", plan.coarse[c]);
      d.placements.push_back({t, 0, w, 1.0f});
      d.placements.push_back({t, plan.slots[t][c], w, 1.0f});
    }
    if (spec.detail_leak > 0.0f) d.placements.push_back({t, 0, detail, spec.detail_leak});
    d.placements.push_back({t, plan.slots[t].back(), detail, 1.0f});
  }
  return d;
}

std::string caption_text(Rng& rng, const SyntheticCorpusSpec& spec, const VideoPlan& plan) {
  std::vector<std::string> words;
  for (auto c : plan.coarse) words.push_back(word("obj", c));
  words.push_back(word("det", plan.detail));
  for (std::size_t f = 0; f < spec.filler_words; ++f) words.push_back(kFillers[rng.index(std::size(kFillers))]);
  rng.shuffle(words);
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  return text;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

GeneratedCorpus plan_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(hash_combine(spec.seed, 0x636f72707573ULL));
  GeneratedCorpus out;
  auto& corpus = out.corpus;
  const bool paired = spec.distractor_mode == DistractorMode::fine_grained;
  const std::size_t groups = paired ? spec.n_videos / 2 : spec.n_videos;
  std::vector<VideoPlan> plans;
  std::vector<std::string> noise_keys;
  // Concept signatures are unique so no caption matches two videos.
  std::set<std::pair<std::vector<std::size_t>, std::size_t>> used;
  for (std::size_t g = 0; g < groups; ++g) {
    VideoPlan plan;
    std::vector<std::size_t> details;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt == 10000) {
        throw ConfigError("corpus.n_videos: " + std::to_string(spec.n_videos) +
                          " videos do not fit in the concept space; raise corpus.n_concept_axes");
      }
      plan.coarse = sample_distinct(rng, spec.coarse_concepts(), spec.coarse_per_video);
      std::sort(plan.coarse.begin(), plan.coarse.end());
      details = sample_distinct(rng, spec.detail_concepts(), 2);
      if (used.count({plan.coarse, details[0]}) || (paired && used.count({plan.coarse, details[1]}))) continue;
      used.insert({plan.coarse, details[0]});
      if (paired) used.insert({plan.coarse, details[1]});
      break;
    }
    plan.detail = details[0];
    for (std::size_t t = 0; t < spec.frames; ++t) {
      auto slots = sample_distinct(rng, spec.tokens_per_frame - 1, spec.coarse_per_video + 1);
      for (auto& s : slots) s += 1;  // skip [CLS]
      plan.slots.push_back(std::move(slots));
    }
    const auto id = numbered("vid", plans.size(), 4);
    plans.push_back(plan);
    noise_keys.push_back(id);
    if (paired) {
      auto twin = plan;
      twin.detail = details[1];
      const auto twin_id = numbered("vid", plans.size(), 4);
      plans.push_back(std::move(twin));
      noise_keys.push_back(id);
      corpus.distractor_of[id] = twin_id;
      corpus.distractor_of[twin_id] = id;
    }
  }
  for (std::size_t v = 0; v < plans.size(); ++v) {
    const auto id = numbered("vid", v, 4);
    corpus.video_ids.push_back(id);
    out.descriptors.push_back(describe_video(spec, id, noise_keys[v], plans[v]));
    for (std::size_t c = 0; c < spec.captions_per_video; ++c) {
      corpus.captions.push_back({numbered("cap", corpus.captions.size(), 5), id, caption_text(rng, spec, plans[v])});
    }
  }
  return out;
}

Corpus generate_corpus(const SyntheticCorpusSpec& spec, const EncoderConfig& encoder, const std::filesystem::path& dir,
                       bool separate_stage1_encoder) {
  auto planned = plan_corpus(spec);
  EncoderConfig enc = encoder;
  enc.frames = spec.frames;
  enc.tokens_per_frame = spec.tokens_per_frame;
  enc.dim = spec.dim;
  std::filesystem::create_directories(dir);
  for (const auto& d : planned.descriptors) {
    save_tokens(encode_video(d, enc), dir / "videos" / (d.video_id + ".tvtk"));
    if (separate_stage1_encoder) {
      auto other = d;
      other.noise_key = "stage1:" + (d.noise_key.empty() ? d.video_id : d.noise_key);
      save_tokens(encode_video(other, enc), dir / "videos_stage1" / (d.video_id + ".tvtk"));
    }
  }
  for (const auto& c : planned.corpus.captions) {
    save_tokens(encode_text(c.text, enc, c.caption_id), dir / "texts" / (c.caption_id + ".tvtk"));
  }
  planned.corpus.save(dir);
  write_lines(dir / "corpus.txt",
              {"n_videos = " + std::to_string(spec.n_videos),
               "captions_per_video = " + std::to_string(spec.captions_per_video),
               "frames = " + std::to_string(spec.frames), "tokens_per_frame = " + std::to_string(spec.tokens_per_frame),
               "dim = " + std::to_string(spec.dim), "n_concept_axes = " + std::to_string(spec.n_concept_axes),
               std::string("distractor_mode = ") + to_string(spec.distractor_mode),
               "seed = " + std::to_string(spec.seed), "encoder_seed = " + std::to_string(encoder.seed),
               std::string("separate_stage1_encoder = ") + (separate_stage1_encoder ? "true" : "false")});
  return std::move(planned.corpus);
}

std::vector<std::string> Corpus::caption_ids() const {
  std::vector<std::string> ids;
  for (const auto& c : captions) ids.push_back(c.caption_id);
  return ids;
}

std::vector<std::size_t> Corpus::caption_video_index() const {
  std::map<std::string, std::size_t> where;
  for (std::size_t v = 0; v < video_ids.size(); ++v) where[video_ids[v]] = v;
  std::vector<std::size_t> out;
  for (const auto& c : captions) {
    auto it = where.find(c.video_id);
    if (it == where.end()) throw std::runtime_error("caption " + c.caption_id + " refers to unknown video " + c.video_id);
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::vector<std::size_t>> Corpus::captions_by_video() const {
  std::vector<std::vector<std::size_t>> out(video_ids.size());
  const auto idx = caption_video_index();
  for (std::size_t c = 0; c < idx.size(); ++c) out[idx[c]].push_back(c);
  return out;
}

void Corpus::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<std::string> manifest;
  for (const auto& c : captions) manifest.push_back(c.caption_id + '\t' + c.video_id + '\t' + c.text);
  write_lines(dir / "manifest.tsv", manifest);
  std::vector<std::string> pairs;
  for (const auto& v : video_ids)
    if (auto it = distractor_of.find(v); it != distractor_of.end()) pairs.push_back(v + '\t' + it->second);
  write_lines(dir / "distractors.tsv", pairs);
}

Corpus Corpus::load(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.tsv";
  std::ifstream in(manifest);
  if (!in) throw MissingInputError(MissingInputError::Input::corpus, "no corpus manifest at " + manifest.string());
  Corpus corpus;
  std::set<std::string> seen_videos, seen_captions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw FormatError(FormatErrc::truncated, manifest.string() + ":" + std::to_string(line_no) +
                                                   ": expected caption_id<TAB>video_id<TAB>text");
    }
    CaptionEntry e{line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)};
    if (!seen_captions.insert(e.caption_id).second) {
      throw FormatError(FormatErrc::wrong_kind, manifest.string() + ": duplicate caption id " + e.caption_id);
    }
    if (seen_videos.insert(e.video_id).second) corpus.video_ids.push_back(e.video_id);
    corpus.captions.push_back(std::move(e));
  }
  if (corpus.captions.empty()) throw MissingInputError(MissingInputError::Input::corpus, manifest.string() + " is empty");
  std::ifstream pairs(dir / "distractors.tsv");
  while (std::getline(pairs, line)) {
    const auto a = line.find('\t');
    if (a == std::string::npos) continue;
    corpus.distractor_of[line.substr(0, a)] = line.substr(a + 1);
  }
  return corpus;
}

}  // namespace crosstvr
