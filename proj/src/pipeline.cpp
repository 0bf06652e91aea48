#include "crosstvr/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "crosstvr/checkpoint.hpp"
#include "crosstvr/errors.hpp"
#include "crosstvr/training.hpp"

namespace crosstvr {
namespace {

std::unique_ptr<TokenCache> stage1_cache_for(const RunConfig& config, const std::filesystem::path& dir) {
  return std::make_unique<TokenCache>(dir, config.separate_stage1_encoder ? "videos_stage1" : "videos");
}

void require_checkpoint(const std::filesystem::path& path, const char* what) {
  if (!std::filesystem::exists(path)) {
    throw MissingInputError(MissingInputError::Input::checkpoint,
                            std::string("no ") + what + " checkpoint at " + path.string());
  }
}

Stage1Params<float> load_trained_stage1(const RunConfig& config, const RunPaths& paths) {
  require_checkpoint(paths.stage1(), "stage-1");
  return load_stage1(config.stage1(), paths.stage1());
}

CrossAttnParams<float> load_trained_head(const RunConfig& config, const RunPaths& paths) {
  require_checkpoint(paths.head(), "stage-2");
  return load_head(config.head(), paths.head());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, "cannot write " + path.string());
  out << text;
}

std::string table_row(const std::string& label, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "  %-24s %7.1f %7.1f %7.1f %7.1f %8.2f\n", label.c_str(), 100 * m.r1, 100 * m.r5,
                100 * m.r10, m.median_rank, m.mean_rank);
  return buf;
}

}  // namespace

Corpus cmd_gen(const RunConfig& config) {
  config.validate();
  return generate_corpus(config.corpus, config.encoder(), config.corpus_dir, config.separate_stage1_encoder);
}

void cmd_train(const RunConfig& config, int stage) {
  config.validate();
  if (stage != 1 && stage != 2) throw ConfigError("train: stage must be 1 or 2, got " + std::to_string(stage));
  const RunPaths paths{config.out_dir};
  const auto corpus = Corpus::load(config.corpus_dir);
  std::filesystem::create_directories(paths.out);
  config.save(paths.config());
  const auto s1_cache = stage1_cache_for(config, config.corpus_dir);
  TrainLog log;
  if (stage == 1) {
    const auto params = train_stage1(corpus, *s1_cache, config.stage1(), config.stage1_training(), log);
    save_stage1(params, paths.stage1());
    log.write(paths.stage1_log());
    return;
  }
  const auto stage1 = load_trained_stage1(config, paths);
  const TokenCache cache(config.corpus_dir);
  const auto head = train_stage2(corpus, cache, *s1_cache, stage1, config.head(), config.stage2_training(), log);
  save_head(head, paths.head());
  log.write(paths.stage2_log());
}

EvalReport cmd_eval(const RunConfig& config, const EvalOptions& options) {
  config.validate();
  const RunPaths paths{config.out_dir};
  const auto dir = config.evaluation_corpus();
  const auto corpus = Corpus::load(dir);
  const auto stage1 = load_trained_stage1(config, paths);
  std::optional<CrossAttnParams<float>> head;
  if (options.rerank) head = load_trained_head(config, paths);

  const auto s1_cache = stage1_cache_for(config, dir);
  const TokenCache cache(dir);
  const auto index = EmbeddingIndex::build(stage1, *s1_cache, corpus.video_ids, corpus.caption_ids());
  index.save(paths.index());
  RetrievalEngine engine(index, cache, corpus.caption_video_index(), head ? &*head : nullptr);

  auto settings = config.retrieval();
  EvalReport report;
  RetrievalRun last_t2v, last_v2t;
  auto add_row = [&](const std::string& label, bool rerank, bool dsl) {
    settings.rerank = rerank;
    settings.dsl = dsl;
    last_t2v = engine.text_to_video(settings);
    last_v2t = engine.video_to_text(settings);
    report.rows.push_back({label, last_t2v.metrics, last_v2t.metrics});
  };
  const std::string k_label = "(K=" + std::to_string(settings.k) + ")";
  add_row("stage-1", false, false);
  if (options.dsl) add_row("stage-1 + DSL", false, true);
  if (options.rerank) {
    add_row("two-stage " + k_label, true, false);
    if (options.dsl) add_row("two-stage + DSL " + k_label, true, true);
  }

  if (options.rerank) {
    auto sweep = settings;
    sweep.rerank = true;
    sweep.dsl = false;
    for (auto k : config.k_sweep) {
      sweep.k = k;
      report.sweep.push_back({k, engine.text_to_video(sweep).metrics});
    }
  }
  report.pairs_scored = engine.pairs_scored();

  std::string metrics;
  for (const auto& row : report.rows) {
    metrics += metrics_line("t2v " + row.label, row.t2v) + "\n";
    metrics += metrics_line("v2t " + row.label, row.v2t) + "\n";
  }
  for (const auto& p : report.sweep) metrics += metrics_line("t2v sweep K=" + std::to_string(p.k), p.t2v) + "\n";
  write_text(paths.metrics(), metrics);

  std::ofstream t2v(paths.results("t2v"), std::ios::binary | std::ios::trunc);
  write_run(t2v, last_t2v, corpus.caption_ids(), corpus.video_ids, config.export_depth);
  t2v << metrics_line("t2v " + report.rows.back().label, last_t2v.metrics) << '\n';
  std::ofstream v2t(paths.results("v2t"), std::ios::binary | std::ios::trunc);
  write_run(v2t, last_v2t, corpus.video_ids, corpus.caption_ids(), config.export_depth);
  v2t << metrics_line("v2t " + report.rows.back().label, last_v2t.metrics) << '\n';
  if (!t2v || !v2t) throw FormatError(FormatErrc::io, "cannot write results under " + paths.out.string());
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  const std::string header = "  " + std::string(24, ' ') + "     R@1     R@5    R@10     MdR      MnR\n";
  out += "Text-to-Video\n" + header;
  for (const auto& row : report.rows) out += table_row(row.label, row.t2v);
  out += "Video-to-Text\n" + header;
  for (const auto& row : report.rows) out += table_row(row.label, row.v2t);
  if (!report.sweep.empty()) {
    out += "Re-rank budget (Text-to-Video)\n" + header;
    for (const auto& p : report.sweep) out += table_row("K=" + std::to_string(p.k), p.t2v);
    std::size_t drops = 0;
    for (std::size_t i = 1; i < report.sweep.size(); ++i) {
      const auto& a = report.sweep[i - 1].t2v;
      const auto& b = report.sweep[i].t2v;
      drops += (b.r1 < a.r1) + (b.r5 < a.r5) + (b.r10 < a.r10);
    }
    out += drops == 0 ? "  monotone in K: yes\n" : "  monotone in K: no (" + std::to_string(drops) + " decreases)\n";
    out += "  stage-2 pairs scored: " + std::to_string(report.pairs_scored) + "\n";
  }
  return out;
}

std::vector<RetrievedVideo> cmd_retrieve(const RunConfig& config, const std::string& query, std::size_t top,
                                         bool rerank) {
  config.validate();
  if (top < 1) throw ConfigError("retrieve: --top must be ≥ 1");
  const RunPaths paths{config.out_dir};
  const auto dir = config.evaluation_corpus();
  const auto corpus = Corpus::load(dir);
  const auto stage1 = load_trained_stage1(config, paths);
  std::optional<CrossAttnParams<float>> head;
  if (rerank) head = load_trained_head(config, paths);

  const auto s1_cache = stage1_cache_for(config, dir);
  const TokenCache cache(dir);
  const auto index = EmbeddingIndex::build(stage1, *s1_cache, corpus.video_ids, corpus.caption_ids());
  auto settings = config.retrieval();
  settings.rerank = rerank;
  const auto tokens = encode_text(query, config.encoder(), "query");
  const auto result = retrieve_query(tokens, stage1, index, cache, head ? &*head : nullptr, settings);

  std::vector<RetrievedVideo> out;
  for (std::size_t r = 0; r < std::min(top, result.ranking.size()); ++r) {
    const auto& c = result.ranking[r];
    out.push_back({corpus.video_ids[c.index], c.stage1, c.stage2, c.fused});
  }
  return out;
}

}  // namespace crosstvr
