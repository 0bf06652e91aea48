#include "crosstvr/checkpoint.hpp"

#include <algorithm>

#include "crosstvr/errors.hpp"
#include "crosstvr/tvtk.hpp"

namespace crosstvr {

void save_checkpoint(const NamedTensors<float>& tensors, const std::vector<std::string>& meta,
                     const std::filesystem::path& path) {
  tvtk::Bundle b;
  b.kind = tvtk::Kind::params;
  b.tensors = tensors;
  b.lists = {{"meta", meta}};
  tvtk::save(b, path);
}

std::vector<std::string> load_checkpoint_into(const NamedTensors<float>& tensors, const std::filesystem::path& path) {
  const auto b = tvtk::load_bundle(path);
  if (b.kind != tvtk::Kind::params) {
    throw FormatError(FormatErrc::wrong_kind, path.string() + " is not a parameter checkpoint");
  }
  if (b.tensors.size() != tensors.size()) {
    throw ConfigError(path.string() + " holds " + std::to_string(b.tensors.size()) + " tensors, model expects " +
                      std::to_string(tensors.size()));
  }
  for (const auto& [name, target] : tensors) {
    const auto& stored = b.tensor(name);
    if (stored.shape() != target.shape()) {
      throw ConfigError(path.string() + ": tensor '" + name + "' is " + shape_str(stored.shape()) +
                        ", model expects " + shape_str(target.shape()));
    }
    auto dst = TensorF(target).mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
  return b.list("meta");
}

std::vector<std::string> describe(const CrossAttnConfig& c) {
  return {"model=cross_attention_head",
          "dim=" + std::to_string(c.dim),
          "layers=" + std::to_string(c.layers),
          "heads=" + std::to_string(c.heads),
          "num_queries=" + std::to_string(c.num_queries),
          "mlp_hidden=" + std::to_string(c.mlp_hidden),
          "select_tokens=" + std::to_string(c.select_tokens),
          std::string("share_blocks=") + (c.share_blocks ? "true" : "false")};
}

std::vector<std::string> describe(const Stage1Config& c) {
  return {"model=stage1_dual_encoder", "dim=" + std::to_string(c.dim), "embed_dim=" + std::to_string(c.embed_dim)};
}

void save_head(const CrossAttnParams<float>& params, const std::filesystem::path& path) {
  save_checkpoint(params.named(), describe(params.config), path);
}

CrossAttnParams<float> load_head(const CrossAttnConfig& config, const std::filesystem::path& path) {
  auto params = CrossAttnParams<float>::init(config, 0);
  load_checkpoint_into(params.named(), path);
  return params;
}

void save_stage1(const Stage1Params<float>& params, const std::filesystem::path& path) {
  save_checkpoint(params.named(), describe(params.config), path);
}

Stage1Params<float> load_stage1(const Stage1Config& config, const std::filesystem::path& path) {
  auto params = Stage1Params<float>::init(config, 0);
  load_checkpoint_into(params.named(), path);
  return params;
}

}  // namespace crosstvr
