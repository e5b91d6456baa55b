#include "mctt/config.h"

#include <fstream>
#include <sstream>

#include "mctt/errors.h"

namespace mctt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ContextBound bound_from(const json& v, const std::string& key) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) return parse_context_bound(v.get<std::string>());
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n == -1) return std::nullopt;
    if (n < 0) throw ConfigError(key + ": context bound must be >= 0 or \"inf\"");
    return static_cast<std::size_t>(n);
  }
  throw ConfigError(key + ": context bound must be an integer or \"inf\"");
}

json bound_to(ContextBound b) { return b ? json(*b) : json("inf"); }

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

// Reads key into out when present, reporting type errors with the key name.
template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key " + section + "." + key);
  }
}

SynthSpec synth_from(const json& j) {
  check_keys(j, "data.synth",
             {"n_utts", "channels", "vocab_size", "min_tokens", "max_tokens", "snr_db",
              "channel_snr_step_db", "max_delay_samples", "gain", "token_ms", "pad_ms",
              "amplitude", "seed"});
  SynthSpec s;
  const std::string sec = "data.synth";
  read(j, "n_utts", s.n_utts, sec);
  read(j, "channels", s.channels, sec);
  read(j, "vocab_size", s.vocab_size, sec);
  read(j, "min_tokens", s.min_tokens, sec);
  read(j, "max_tokens", s.max_tokens, sec);
  if (j.contains("snr_db")) {
    auto r = j["snr_db"].get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("data.synth.snr_db must be [lo, hi]");
    s.snr_db_lo = r[0];
    s.snr_db_hi = r[1];
  }
  if (j.contains("gain")) {
    auto r = j["gain"].get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("data.synth.gain must be [lo, hi]");
    s.gain_lo = r[0];
    s.gain_hi = r[1];
  }
  read(j, "channel_snr_step_db", s.channel_snr_step_db, sec);
  read(j, "max_delay_samples", s.max_delay_samples, sec);
  read(j, "token_ms", s.token_ms, sec);
  read(j, "pad_ms", s.pad_ms, sec);
  read(j, "amplitude", s.amplitude, sec);
  read(j, "seed", s.seed, sec);
  return s;
}

json synth_to(const SynthSpec& s) {
  return {{"n_utts", s.n_utts},
          {"channels", s.channels},
          {"vocab_size", s.vocab_size},
          {"min_tokens", s.min_tokens},
          {"max_tokens", s.max_tokens},
          {"snr_db", {s.snr_db_lo, s.snr_db_hi}},
          {"channel_snr_step_db", s.channel_snr_step_db},
          {"max_delay_samples", s.max_delay_samples},
          {"gain", {s.gain_lo, s.gain_hi}},
          {"token_ms", s.token_ms},
          {"pad_ms", s.pad_ms},
          {"amplitude", s.amplitude},
          {"seed", s.seed}};
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig cfg;
  if (name == "desk") return cfg;
  if (name == "full") {
    cfg.model.d_model = 512;
    cfg.model.n_heads = 8;
    cfg.model.n_layers_csa = 6;
    cfg.model.n_layers_cca = 6;
    cfg.model.n_layers_label = 4;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
  check_keys(j, "config", {"preset", "model", "features", "train", "data"});
  RunConfig cfg = preset(j.value("preset", std::string("desk")));
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model",
               {"d_model", "n_heads", "d_ff", "n_layers_csa", "n_layers_cca", "n_layers_label",
                "d_joint", "combiner", "avg_divisor", "l_audio", "r_audio", "l_label",
                "max_symbols_per_frame", "vocab"});
    auto& o = cfg.model;
    read(m, "d_model", o.d_model, "model");
    read(m, "n_heads", o.n_heads, "model");
    read(m, "d_ff", o.d_ff, "model");
    read(m, "n_layers_csa", o.n_layers_csa, "model");
    read(m, "n_layers_cca", o.n_layers_cca, "model");
    read(m, "n_layers_label", o.n_layers_label, "model");
    read(m, "d_joint", o.d_joint, "model");
    read(m, "max_symbols_per_frame", o.max_symbols_per_frame, "model");
    if (m.contains("combiner")) o.combiner = parse_combiner(m["combiner"].get<std::string>());
    if (m.contains("avg_divisor")) {
      const auto d = m["avg_divisor"].get<std::string>();
      if (d == "channels") {
        o.avg_divisor = AvgDivisor::kChannels;
      } else if (d == "other_channels") {
        o.avg_divisor = AvgDivisor::kOtherChannels;
      } else {
        throw ConfigError("model.avg_divisor must be channels or other_channels");
      }
    }
    if (m.contains("l_audio")) o.l_audio = bound_from(m["l_audio"], "model.l_audio");
    if (m.contains("r_audio")) o.r_audio = bound_from(m["r_audio"], "model.r_audio");
    if (m.contains("l_label")) o.l_label = bound_from(m["l_label"], "model.l_label");
    if (m.contains("vocab")) o.vocab = resolve(m["vocab"].get<std::string>(), base);
  }
  if (j.contains("features")) {
    const auto& f = j["features"];
    check_keys(f, "features", {"window_ms", "hop_ms", "n_fft", "log_floor"});
    read(f, "window_ms", cfg.features.window_ms, "features");
    read(f, "hop_ms", cfg.features.hop_ms, "features");
    read(f, "n_fft", cfg.features.n_fft, "features");
    read(f, "log_floor", cfg.features.log_floor, "features");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train",
               {"lr", "beta1", "beta2", "eps", "batch_size", "steps", "seed", "checkpoint_dir",
                "checkpoint_every", "log"});
    auto& o = cfg.train;
    read(t, "lr", o.lr, "train");
    read(t, "beta1", o.beta1, "train");
    read(t, "beta2", o.beta2, "train");
    read(t, "eps", o.eps, "train");
    read(t, "batch_size", o.batch_size, "train");
    read(t, "steps", o.steps, "train");
    read(t, "seed", o.seed, "train");
    read(t, "checkpoint_every", o.checkpoint_every, "train");
    if (t.contains("checkpoint_dir")) {
      o.checkpoint_dir = t["checkpoint_dir"].get<std::string>();
    }
    if (t.contains("log")) o.log = t["log"].get<std::string>();
  }
  cfg.train.checkpoint_dir = resolve(cfg.train.checkpoint_dir, base);
  cfg.train.log = resolve(cfg.train.log, base);
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"corpus", "channels", "normalize", "synth"});
    if (d.contains("corpus")) cfg.data.corpus = d["corpus"].get<std::string>();
    read(d, "channels", cfg.data.channels, "data");
    read(d, "normalize", cfg.data.normalize, "data");
    if (d.contains("synth")) cfg.data.synth = synth_from(d["synth"]);
  }
  cfg.data.corpus = resolve(cfg.data.corpus, base);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
  json j;
  j["model"] = {{"d_model", model.d_model},
                {"n_heads", model.n_heads},
                {"d_ff", model.d_ff},
                {"n_layers_csa", model.n_layers_csa},
                {"n_layers_cca", model.n_layers_cca},
                {"n_layers_label", model.n_layers_label},
                {"d_joint", model.d_joint},
                {"combiner", combiner_str(model.combiner)},
                {"avg_divisor", model.avg_divisor == AvgDivisor::kChannels ? "channels"
                                                                           : "other_channels"},
                {"l_audio", bound_to(model.l_audio)},
                {"r_audio", bound_to(model.r_audio)},
                {"l_label", bound_to(model.l_label)},
                {"max_symbols_per_frame", model.max_symbols_per_frame}};
  if (!model.vocab.empty()) j["model"]["vocab"] = model.vocab.string();
  j["features"] = {{"window_ms", features.window_ms},
                   {"hop_ms", features.hop_ms},
                   {"n_fft", features.n_fft},
                   {"log_floor", features.log_floor}};
  j["train"] = {{"lr", train.lr},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"eps", train.eps},
                {"batch_size", train.batch_size},
                {"steps", train.steps},
                {"seed", train.seed},
                {"checkpoint_dir", train.checkpoint_dir.string()},
                {"checkpoint_every", train.checkpoint_every},
                {"log", train.log.string()}};
  j["data"] = {{"corpus", data.corpus.string()},
               {"channels", data.channels},
               {"normalize", data.normalize}};
  if (data.synth) j["data"]["synth"] = synth_to(*data.synth);
  return j;
}

void RunConfig::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json().dump(2) << '\n';
}

fs::path RunConfig::vocab_path() const {
  return model.vocab.empty() ? data.corpus / "vocab.txt" : model.vocab;
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig mc;
  mc.encoder.feature_dim = features.feature_dim();
  mc.encoder.mha = {model.d_model, model.n_heads, model.d_ff ? model.d_ff : 4 * model.d_model};
  mc.encoder.n_layers_csa = model.n_layers_csa;
  mc.encoder.n_layers_cca = model.n_layers_cca;
  mc.encoder.combiner = model.combiner;
  mc.encoder.avg_divisor = model.avg_divisor;
  mc.encoder.context = audio_window();
  mc.n_layers_label = model.n_layers_label;
  mc.l_label = model.l_label;
  mc.d_joint = model.d_joint;
  mc.vocab_size = vocab_size;
  mc.decode.max_symbols_per_frame = model.max_symbols_per_frame;
  return mc;
}

void RunConfig::validate() const {
  model_config(3).validate();
  if (train.lr < 0.0) throw ConfigError("train.lr must be >= 0");
  if (train.beta1 < 0.0 || train.beta1 >= 1.0 || train.beta2 < 0.0 || train.beta2 >= 1.0) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (train.eps <= 0.0) throw ConfigError("train.eps must be positive");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (features.hop_ms <= 0.0 || features.window_ms < features.hop_ms) {
    throw ConfigError("features: need window_ms >= hop_ms > 0");
  }
  if (data.synth) data.synth->validate();
}

void RunConfig::check_inputs() const {
  if (!fs::exists(manifest_path())) {
    throw ConfigError("corpus manifest not found: " + manifest_path().string());
  }
  if (!fs::exists(vocab_path())) throw ConfigError("vocabulary not found: " + vocab_path().string());
}

std::vector<std::size_t> parse_channel_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      const long v = std::stol(item, &pos);
      if (pos != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad channel index '" + item + "' in '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty channel list '" + text + "'");
  return out;
}

}  // namespace mctt
