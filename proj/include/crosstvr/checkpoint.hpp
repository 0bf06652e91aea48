#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "crosstvr/cross_attention.hpp"
#include "crosstvr/similarity.hpp"

namespace crosstvr {

// Named tensors in a TVTK params bundle (kind 2). `meta` holds key=value lines
// describing the model that produced them.
void save_checkpoint(const NamedTensors<float>& tensors, const std::vector<std::string>& meta,
                     const std::filesystem::path& path);

// Copies stored values into `tensors` by name; every name and shape must match.
// Returns the stored meta lines.
std::vector<std::string> load_checkpoint_into(const NamedTensors<float>& tensors, const std::filesystem::path& path);

std::vector<std::string> describe(const CrossAttnConfig& config);
std::vector<std::string> describe(const Stage1Config& config);

void save_head(const CrossAttnParams<float>& params, const std::filesystem::path& path);
CrossAttnParams<float> load_head(const CrossAttnConfig& config, const std::filesystem::path& path);
void save_stage1(const Stage1Params<float>& params, const std::filesystem::path& path);
Stage1Params<float> load_stage1(const Stage1Config& config, const std::filesystem::path& path);

}  // namespace crosstvr
