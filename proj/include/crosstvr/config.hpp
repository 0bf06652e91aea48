#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crosstvr/corpus.hpp"
#include "crosstvr/cross_attention.hpp"
#include "crosstvr/encoders.hpp"
#include "crosstvr/retrieval.hpp"
#include "crosstvr/similarity.hpp"
#include "crosstvr/training.hpp"

namespace crosstvr {

// Every knob of a run, persisted as flat `key = value` lines (`#` starts a
// comment). to_text() followed by parse() reproduces the same config.
struct RunConfig {
  std::uint64_t seed = 1;

  SyntheticCorpusSpec corpus;
  std::uint64_t encoder_seed = 7;
  std::size_t max_text_len = 32;
  bool separate_stage1_encoder = false;

  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t num_queries = 8;
  std::size_t mlp_hidden = 256;
  std::size_t select_tokens = 4;
  bool share_blocks = true;
  std::size_t embed_dim = 64;
  double temperature_init = 0.07;

  std::size_t batch_size = 32;
  double warmup_fraction = 0.1;
  std::size_t stage1_epochs = 30;
  double stage1_lr = 1e-3;
  std::size_t stage2_epochs = 10;
  double stage2_lr = 1e-4;
  double mining_temperature = 0;

  std::size_t rerank_k = 15;
  bool dsl = false;
  double dsl_temperature = 1.0;
  double fuse_cosine_weight = 1.0;
  double fuse_match_weight = 1.0;
  std::vector<std::size_t> k_sweep = {2, 5, 10, 15};
  std::size_t export_depth = 20;

  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path eval_corpus_dir;  // empty: evaluate on corpus_dir
  std::filesystem::path out_dir = "run";

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  // Throws ConfigError naming the first inconsistent field.
  void validate() const;

  EncoderConfig encoder() const;
  CrossAttnConfig head() const;
  Stage1Config stage1() const;
  TrainConfig stage1_training() const;
  TrainConfig stage2_training() const;
  RetrievalSettings retrieval() const;
  std::filesystem::path evaluation_corpus() const { return eval_corpus_dir.empty() ? corpus_dir : eval_corpus_dir; }
};

}  // namespace crosstvr
