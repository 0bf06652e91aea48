#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crosstvr/config.hpp"
#include "crosstvr/corpus.hpp"
#include "crosstvr/errors.hpp"
#include "crosstvr/tvtk.hpp"

using namespace crosstvr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

SyntheticCorpusSpec small_spec() {
  SyntheticCorpusSpec s;
  s.n_videos = 50;
  s.captions_per_video = 2;
  s.frames = 3;
  s.tokens_per_frame = 6;
  s.dim = 16;
  s.n_concept_axes = 24;
  s.seed = 4;
  return s;
}

EncoderConfig encoder_for(const SyntheticCorpusSpec& s) {
  EncoderConfig e;
  e.frames = s.frames;
  e.tokens_per_frame = s.tokens_per_frame;
  e.dim = s.dim;
  return e;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = s.str();
  }
  return out;
}

std::string expect_config_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

}  // namespace

TEST_CASE("generated corpus layout") {
  TempDir dir("crosstvr_corpus_layout");
  const auto spec = small_spec();
  const auto corpus = generate_corpus(spec, encoder_for(spec), dir.path);
  CHECK(count_files(dir.path / "texts") == 100);
  CHECK(count_files(dir.path / "videos") == 50);
  std::ifstream manifest(dir.path / "manifest.tsv");
  std::size_t rows = 0;
  for (std::string line; std::getline(manifest, line);) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), '\t') == 2);
  }
  CHECK(rows == 100);

  const auto loaded = Corpus::load(dir.path);
  CHECK(loaded.video_ids == corpus.video_ids);
  CHECK(loaded.captions.size() == corpus.captions.size());
  CHECK(loaded.distractor_of == corpus.distractor_of);
  for (std::size_t i = 0; i < corpus.captions.size(); ++i) CHECK(loaded.captions[i].text == corpus.captions[i].text);
}

TEST_CASE("same spec twice gives byte-identical trees") {
  TempDir a("crosstvr_corpus_a"), b("crosstvr_corpus_b");
  const auto spec = small_spec();
  generate_corpus(spec, encoder_for(spec), a.path, true);
  generate_corpus(spec, encoder_for(spec), b.path, true);
  const auto ta = tree_bytes(a.path), tb = tree_bytes(b.path);
  CHECK(ta.size() == 50 * 2 + 100 + 3);
  CHECK(ta == tb);

  SUBCASE("a different seed changes the tree") {
    TempDir c("crosstvr_corpus_c");
    auto other = spec;
    other.seed = 5;
    generate_corpus(other, encoder_for(other), c.path, true);
    CHECK(tree_bytes(c.path) != ta);
  }
}

TEST_CASE("fine-grained twins differ in at most two token slots per frame") {
  const auto spec = small_spec();
  const auto enc = encoder_for(spec);
  const auto planned = plan_corpus(spec);
  std::map<std::string, TensorF> tokens;
  for (const auto& d : planned.descriptors) tokens[d.video_id] = encode_video(d, enc).tokens;
  REQUIRE(planned.corpus.distractor_of.size() == spec.n_videos);
  for (const auto& [a, b] : planned.corpus.distractor_of) {
    CHECK(planned.corpus.distractor_of.at(b) == a);
    const auto& x = tokens.at(a);
    const auto& y = tokens.at(b);
    std::size_t differing = 0;
    for (std::size_t slot = 0; slot < spec.frames * spec.tokens_per_frame; ++slot) {
      bool same = true;
      for (std::size_t j = 0; j < spec.dim; ++j) same = same && x[slot * spec.dim + j] == y[slot * spec.dim + j];
      differing += !same;
    }
    CHECK(differing >= 1);
    CHECK(differing <= 2 * spec.frames);
  }
}

TEST_CASE("ground truth is unambiguous") {
  for (auto mode : {DistractorMode::fine_grained, DistractorMode::coarse}) {
    auto spec = small_spec();
    spec.n_videos = 120;
    spec.distractor_mode = mode;
    const auto planned = plan_corpus(spec);
    // A caption names exactly the concepts of its video, so distinct concept
    // sets per video mean no caption fits a second video.
    std::map<std::multiset<std::string>, std::string> owner;
    for (const auto& c : planned.corpus.captions) {
      std::multiset<std::string> concepts;
      std::istringstream words(c.text);
      for (std::string w; words >> w;)
        if (w.rfind("obj", 0) == 0 || w.rfind("det", 0) == 0) concepts.insert(w);
      const auto [it, fresh] = owner.emplace(concepts, c.video_id);
      CHECK(it->second == c.video_id);
    }
    CHECK(owner.size() == spec.n_videos);
  }
}

TEST_CASE("corpus spec validation names the field") {
  auto spec = small_spec();
  spec.n_videos = 7;
  CHECK(expect_config_error([&] { spec.validate(); }).find("corpus.n_videos") == 0);
  spec = small_spec();
  spec.tokens_per_frame = 3;
  CHECK(expect_config_error([&] { spec.validate(); }).find("corpus.tokens_per_frame") == 0);
  spec = small_spec();
  spec.captions_per_video = 0;
  CHECK(expect_config_error([&] { spec.validate(); }).find("corpus.captions_per_video") == 0);
  spec = small_spec();
  spec.noise = -1;
  CHECK(expect_config_error([&] { spec.validate(); }).find("corpus.noise") == 0);
  spec = small_spec();
  spec.n_videos = 4000;
  CHECK(expect_config_error([&] { plan_corpus(spec); }).find("corpus.n_videos") == 0);
  CHECK_THROWS_AS(parse_distractor_mode("medium"), ConfigError);
}

TEST_CASE("missing manifest") {
  TempDir dir("crosstvr_corpus_missing");
  try {
    Corpus::load(dir.path);
    FAIL("expected MissingInputError");
  } catch (const MissingInputError& e) {
    CHECK(e.input() == MissingInputError::Input::corpus);
  }
}

TEST_CASE("run config") {
  RunConfig c;
  c.seed = 99;
  c.corpus.distractor_mode = DistractorMode::coarse;
  c.corpus.noise = 0.3f;
  c.stage2_lr = 3.25e-4;
  c.k_sweep = {1, 7, 30};
  c.dsl = true;
  c.eval_corpus_dir = "held out";

  SUBCASE("text round trip") {
    const auto back = RunConfig::parse(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.seed == 99);
    CHECK(back.corpus.distractor_mode == DistractorMode::coarse);
    CHECK(back.corpus.noise == 0.3f);
    CHECK(back.stage2_lr == 3.25e-4);
    CHECK(back.k_sweep == std::vector<std::size_t>{1, 7, 30});
    CHECK(back.dsl);
    CHECK(back.evaluation_corpus() == fs::path("held out"));
  }
  SUBCASE("comments and blank lines") {
    const auto parsed = RunConfig::parse("# header\n\nseed = 5   # trailing\n  model.layers=3\n");
    CHECK(parsed.seed == 5);
    CHECK(parsed.layers == 3);
  }
  SUBCASE("errors carry the line and key") {
    CHECK(expect_config_error([] { RunConfig::parse("seed = 1\nmodel.colour = red\n"); }).find("line 2") !=
          std::string::npos);
    CHECK(expect_config_error([] { RunConfig::parse("seed = many\n"); }).find("seed") != std::string::npos);
    CHECK_THROWS_AS(RunConfig::parse("just words\n"), ConfigError);
  }
  SUBCASE("validation") {
    RunConfig bad;
    bad.select_tokens = bad.corpus.tokens_per_frame + 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RunConfig{};
    bad.rerank_k = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RunConfig{};
    bad.batch_size = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_NOTHROW(RunConfig{}.validate());
  }
  SUBCASE("derived settings") {
    const RunConfig d;
    CHECK(d.head().dim == d.corpus.dim);
    CHECK(d.stage1().dim == d.corpus.dim);
    CHECK(d.stage1_training().seed != d.stage2_training().seed);
    CHECK(d.retrieval().k == 15);
  }
}

#ifdef CROSSTVR_CLI
TEST_CASE("command line exit codes") {
  TempDir dir("crosstvr_cli_codes");
  fs::create_directories(dir.path);
  const std::string cli = CROSSTVR_CLI;
  auto run = [&](const std::string& args) {
    const std::string cmd = "cd '" + dir.path.string() + "' && '" + cli + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  {
    std::ofstream cfg(dir.path / "tiny.txt");
    cfg << "corpus.n_videos = 4\ncorpus.frames = 2\ncorpus.tokens_per_frame = 5\ncorpus.dim = 8\n"
           "model.heads = 2\nmodel.num_queries = 2\nmodel.mlp_hidden = 8\nmodel.select_tokens = 2\n"
           "model.embed_dim = 8\nmodel.layers = 1\ntrain.batch_size = 4\ntrain.stage1_epochs = 1\n"
           "train.stage2_epochs = 1\neval.k_sweep = 2\neval.rerank_k = 2\n";
    std::ofstream(dir.path / "bad.txt") << "model.colour = red\n";
  }
  CHECK(run("") == 2);
  CHECK(run("train") == 2);
  CHECK(run("train --stage 3") == 2);
  CHECK(run("--config missing.txt gen") == 2);
  CHECK(run("--config bad.txt gen") == 2);
  CHECK(run("--config tiny.txt train --stage 1") == 3);
  CHECK(run("--config tiny.txt gen") == 0);
  CHECK(run("--config tiny.txt train --stage 2") == 4);
  CHECK(run("--config tiny.txt eval") == 4);
  CHECK(run("--config tiny.txt train --stage 1") == 0);
  CHECK(run("--config tiny.txt eval") == 4);
  CHECK(run("--config tiny.txt eval --no-rerank") == 0);
  CHECK(run("--config tiny.txt train --stage 2") == 0);
  CHECK(run("--config tiny.txt eval --dsl") == 0);
  CHECK(run("--config tiny.txt retrieve --query 'obj01 det02' --top 3") == 0);
  CHECK(run("--config tiny.txt retrieve --query '  '") == 2);
  std::ofstream(dir.path / "run" / "head.tvtk", std::ios::trunc) << "JUNK";
  CHECK(run("--config tiny.txt eval") == 5);
}
#endif
