#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crosstvr/config.hpp"
#include "crosstvr/corpus.hpp"
#include "crosstvr/retrieval.hpp"

namespace crosstvr {

// Files under RunConfig::out_dir.
struct RunPaths {
  std::filesystem::path out;
  std::filesystem::path config() const { return out / "config.txt"; }
  std::filesystem::path stage1() const { return out / "stage1.tvtk"; }
  std::filesystem::path head() const { return out / "head.tvtk"; }
  std::filesystem::path stage1_log() const { return out / "stage1_log.txt"; }
  std::filesystem::path stage2_log() const { return out / "stage2_log.txt"; }
  std::filesystem::path index() const { return out / "index.tvtk"; }
  std::filesystem::path metrics() const { return out / "metrics.txt"; }
  std::filesystem::path results(const std::string& direction) const { return out / ("results_" + direction + ".txt"); }
};

Corpus cmd_gen(const RunConfig& config);

// Stage 1 writes stage1.tvtk and stage1_log.txt; stage 2 needs stage1.tvtk and
// writes head.tvtk and stage2_log.txt. Both persist config.txt.
void cmd_train(const RunConfig& config, int stage);

struct EvalOptions {
  bool rerank = true;
  bool dsl = false;
};

struct EvalRow {
  std::string label;
  Metrics t2v;
  Metrics v2t;
};

struct SweepPoint {
  std::size_t k = 0;
  Metrics t2v;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<SweepPoint> sweep;  // re-rank budget curve, empty without re-ranking
  std::size_t pairs_scored = 0;
};

// Stage-1-only rows always; two-stage rows when re-ranking; DSL variants of
// each when requested. Writes metrics.txt, index.tvtk and per-direction
// results for the last row.
EvalReport cmd_eval(const RunConfig& config, const EvalOptions& options);

// Text/Video blocks plus the K sweep with its monotonicity report.
std::string format_report(const EvalReport& report);

struct RetrievedVideo {
  std::string video_id;
  float stage1 = 0;
  std::optional<float> stage2;
  std::optional<double> fused;
};

std::vector<RetrievedVideo> cmd_retrieve(const RunConfig& config, const std::string& query, std::size_t top,
                                         bool rerank = true);

}  // namespace crosstvr
