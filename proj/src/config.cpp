#include "crosstvr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "crosstvr/errors.hpp"

namespace crosstvr {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(T RunConfig::*member) {
  return {[member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_u64("", v)); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = RunConfig;
  auto sz = [](std::size_t C::*m) { return size_field(m); };
  auto real = [](double C::*m) {
    return Field{[m](const C& c) { return real_text(c.*m); }, [m](C& c, const std::string& v) { c.*m = parse_real("", v); }};
  };
  auto flag = [](bool C::*m) {
    return Field{[m](const C& c) { return std::string(c.*m ? "true" : "false"); },
                 [m](C& c, const std::string& v) { c.*m = parse_bool("", v); }};
  };
  auto path = [](std::filesystem::path C::*m) {
    return Field{[m](const C& c) { return (c.*m).string(); }, [m](C& c, const std::string& v) { c.*m = v; }};
  };
  auto corpus_sz = [](std::size_t SyntheticCorpusSpec::*m) {
    return Field{[m](const C& c) { return std::to_string(c.corpus.*m); },
                 [m](C& c, const std::string& v) { c.corpus.*m = parse_u64("", v); }};
  };
  auto corpus_real = [](float SyntheticCorpusSpec::*m) {
    return Field{[m](const C& c) { return real_text(c.corpus.*m); },
                 [m](C& c, const std::string& v) { c.corpus.*m = static_cast<float>(parse_real("", v)); }};
  };
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", size_field(&C::seed)},
      {"corpus.n_videos", corpus_sz(&SyntheticCorpusSpec::n_videos)},
      {"corpus.captions_per_video", corpus_sz(&SyntheticCorpusSpec::captions_per_video)},
      {"corpus.frames", corpus_sz(&SyntheticCorpusSpec::frames)},
      {"corpus.tokens_per_frame", corpus_sz(&SyntheticCorpusSpec::tokens_per_frame)},
      {"corpus.dim", corpus_sz(&SyntheticCorpusSpec::dim)},
      {"corpus.n_concept_axes", corpus_sz(&SyntheticCorpusSpec::n_concept_axes)},
      {"corpus.distractor_mode",
       {[](const C& c) { return std::string(to_string(c.corpus.distractor_mode)); },
        [](C& c, const std::string& v) { c.corpus.distractor_mode = parse_distractor_mode(v); }}},
      {"corpus.seed",
       {[](const C& c) { return std::to_string(c.corpus.seed); },
        [](C& c, const std::string& v) { c.corpus.seed = parse_u64("", v); }}},
      {"corpus.coarse_per_video", corpus_sz(&SyntheticCorpusSpec::coarse_per_video)},
      {"corpus.noise", corpus_real(&SyntheticCorpusSpec::noise)},
      {"corpus.detail_leak", corpus_real(&SyntheticCorpusSpec::detail_leak)},
      {"corpus.filler_words", corpus_sz(&SyntheticCorpusSpec::filler_words)},
      {"encoder.seed", size_field(&C::encoder_seed)},
      {"encoder.max_text_len", sz(&C::max_text_len)},
      {"encoder.separate_stage1", flag(&C::separate_stage1_encoder)},
      {"model.layers", sz(&C::layers)},
      {"model.heads", sz(&C::heads)},
      {"model.num_queries", sz(&C::num_queries)},
      {"model.mlp_hidden", sz(&C::mlp_hidden)},
      {"model.select_tokens", sz(&C::select_tokens)},
      {"model.share_blocks", flag(&C::share_blocks)},
      {"model.embed_dim", sz(&C::embed_dim)},
      {"model.temperature_init", real(&C::temperature_init)},
      {"train.batch_size", sz(&C::batch_size)},
      {"train.warmup_fraction", real(&C::warmup_fraction)},
      {"train.mining_temperature", real(&C::mining_temperature)},
      {"train.stage1_epochs", sz(&C::stage1_epochs)},
      {"train.stage1_lr", real(&C::stage1_lr)},
      {"train.stage2_epochs", sz(&C::stage2_epochs)},
      {"train.stage2_lr", real(&C::stage2_lr)},
      {"eval.rerank_k", sz(&C::rerank_k)},
      {"eval.dsl", flag(&C::dsl)},
      {"eval.dsl_temperature", real(&C::dsl_temperature)},
      {"eval.fuse_cosine_weight", real(&C::fuse_cosine_weight)},
      {"eval.fuse_match_weight", real(&C::fuse_match_weight)},
      {"eval.k_sweep",
       {[](const C& c) {
          std::string s;
          for (auto k : c.k_sweep) s += (s.empty() ? "" : ",") + std::to_string(k);
          return s;
        },
        [](C& c, const std::string& v) {
          c.k_sweep.clear();
          std::stringstream in(v);
          for (std::string item; std::getline(in, item, ',');) c.k_sweep.push_back(parse_u64("", trim(item)));
        }}},
      {"eval.export_depth", sz(&C::export_depth)},
      {"paths.corpus", path(&C::corpus_dir)},
      {"paths.eval_corpus", path(&C::eval_corpus_dir)},
      {"paths.out", path(&C::out_dir)},
  };
  return table;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
    if (it == table.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    try {
      it->second.set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_text();
}

void RunConfig::validate() const {
  corpus.validate();
  head().validate();
  stage1().validate();
  stage1_training().validate();
  stage2_training().validate();
  if (max_text_len < 1) throw ConfigError("encoder.max_text_len: must be ≥ 1");
  if (select_tokens > corpus.tokens_per_frame) {
    throw ConfigError("model.select_tokens: M=" + std::to_string(select_tokens) + " exceeds corpus.tokens_per_frame=" +
                      std::to_string(corpus.tokens_per_frame));
  }
  if (rerank_k < 1) throw ConfigError("eval.rerank_k: must be ≥ 1");
  for (auto k : k_sweep)
    if (k < 1) throw ConfigError("eval.k_sweep: entries must be ≥ 1");
  if (!(dsl_temperature > 0)) throw ConfigError("eval.dsl_temperature: must be positive");
}

EncoderConfig RunConfig::encoder() const {
  return {encoder_seed, corpus.frames, corpus.tokens_per_frame, corpus.dim, max_text_len};
}

CrossAttnConfig RunConfig::head() const {
  CrossAttnConfig c;
  c.dim = corpus.dim;
  c.layers = layers;
  c.heads = heads;
  c.num_queries = num_queries;
  c.mlp_hidden = mlp_hidden;
  c.select_tokens = select_tokens;
  c.share_blocks = share_blocks;
  return c;
}

Stage1Config RunConfig::stage1() const { return {corpus.dim, embed_dim, temperature_init}; }

TrainConfig RunConfig::stage1_training() const {
  return {stage1_epochs, batch_size, stage1_lr, warmup_fraction, hash_combine(seed, 1)};
}

TrainConfig RunConfig::stage2_training() const {
  return {stage2_epochs, batch_size, stage2_lr, warmup_fraction, hash_combine(seed, 2), mining_temperature};
}

RetrievalSettings RunConfig::retrieval() const {
  RetrievalSettings s;
  s.k = rerank_k;
  s.dsl = dsl;
  s.dsl_temperature = dsl_temperature;
  s.fusion = {fuse_cosine_weight, fuse_match_weight};
  return s;
}

}  // namespace crosstvr
