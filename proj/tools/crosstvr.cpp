// crosstvr: generate a planted corpus, train both stages, evaluate, query.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 usage or config, 3 missing
// corpus, 4 missing checkpoint, 5 malformed token or checkpoint file.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "crosstvr/config.hpp"
#include "crosstvr/encoders.hpp"
#include "crosstvr/errors.hpp"
#include "crosstvr/pipeline.hpp"

namespace {

enum Exit { ok = 0, failure = 1, usage = 2, no_corpus = 3, no_checkpoint = 4, bad_format = 5 };

int report(const char* category, const std::string& what, int code) {
  std::cerr << "crosstvr: " << category << ": " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage text-video retrieval with a cross-attention re-ranker"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  app.add_option("--config", config_path, "key = value run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "run seed (overrides the config)");
  app.add_option("--out", out, "output directory (corpus directory for gen)");

  auto* gen = app.add_subcommand("gen", "write the synthetic corpus");

  auto* train = app.add_subcommand("train", "train stage 1 or stage 2");
  int stage = 1;
  train->add_option("--stage", stage, "1: dual encoder, 2: cross-attention head")
      ->required()
      ->check(CLI::IsMember({1, 2}));

  auto* eval = app.add_subcommand("eval", "metrics table for both directions");
  bool no_rerank = false, dsl = false;
  eval->add_flag("--no-rerank", no_rerank, "stage-1 rows only");
  eval->add_flag("--dsl", dsl, "add dual-softmax rows");

  auto* retrieve = app.add_subcommand("retrieve", "rank videos for a text query");
  std::string query;
  std::size_t top = 10;
  bool retrieve_no_rerank = false;
  retrieve->add_option("--query", query, "query text")->required();
  retrieve->add_option("--top", top, "number of results")->check(CLI::PositiveNumber);
  retrieve->add_flag("--no-rerank", retrieve_no_rerank, "stage-1 scores only");

  for (auto* sub : {gen, train, eval, retrieve}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  if (retrieve->parsed() && crosstvr::split_words(query).empty()) {
    return report("usage", "--query needs at least one word", usage);
  }

  try {
    auto config = config_path.empty() ? crosstvr::RunConfig{} : crosstvr::RunConfig::load(config_path);
    if (seed) config.seed = *seed;
    if (!out.empty()) (gen->parsed() ? config.corpus_dir : config.out_dir) = out;

    if (gen->parsed()) {
      const auto corpus = crosstvr::cmd_gen(config);
      std::printf("wrote %zu videos and %zu captions to %s\n", corpus.video_ids.size(), corpus.captions.size(),
                  config.corpus_dir.string().c_str());
    } else if (train->parsed()) {
      crosstvr::cmd_train(config, stage);
      std::printf("stage %d trained, outputs in %s\n", stage, config.out_dir.string().c_str());
    } else if (eval->parsed()) {
      config.dsl = dsl;
      const auto report = crosstvr::cmd_eval(config, {!no_rerank, dsl});
      std::fputs(crosstvr::format_report(report).c_str(), stdout);
    } else if (retrieve->parsed()) {
      const auto hits = crosstvr::cmd_retrieve(config, query, top, !retrieve_no_rerank);
      std::printf("%-5s %-10s %10s %10s %10s\n", "rank", "video", "stage1", "stage2", "fused");
      for (std::size_t r = 0; r < hits.size(); ++r) {
        const auto& h = hits[r];
        std::printf("%-5zu %-10s %10.6f", r + 1, h.video_id.c_str(), h.stage1);
        if (h.stage2) std::printf(" %10.6f %10.6f\n", *h.stage2, *h.fused);
        else std::printf(" %10s %10s\n", "-", "-");
      }
    }
    return ok;
  } catch (const crosstvr::ConfigError& e) {
    return report("config", e.what(), usage);
  } catch (const crosstvr::MissingInputError& e) {
    const bool corpus = e.input() == crosstvr::MissingInputError::Input::corpus;
    return report(corpus ? "missing corpus" : "missing checkpoint", e.what(), corpus ? no_corpus : no_checkpoint);
  } catch (const crosstvr::FormatError& e) {
    return report("format", e.what(), bad_format);
  } catch (const std::exception& e) {
    return report("error", e.what(), failure);
  }
}
