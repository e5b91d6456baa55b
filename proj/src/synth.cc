#include "mctt/synth.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mctt/errors.h"
#include "mctt/wav.h"

namespace mctt {

namespace {

constexpr double kFadeMs = 10.0;

double mean_square(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

std::string utt_id(std::size_t index) {
  std::ostringstream os;
  os << "utt" << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

// JSON has no infinity; a clean channel is written as null.
double json_db(const nlohmann::json& v) {
  return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
}

}  // namespace

void SynthSpec::validate() const {
  if (n_utts == 0) throw ConfigError("synth: n_utts must be positive");
  if (channels == 0) throw ConfigError("synth: need at least one channel");
  if (vocab_size == 0 || vocab_size > 26) throw ConfigError("synth: vocab_size must be 1..26");
  if (min_tokens == 0 || min_tokens > max_tokens) {
    throw ConfigError("synth: need 1 <= min_tokens <= max_tokens");
  }
  if (snr_db_lo > snr_db_hi) throw ConfigError("synth: snr range lo > hi");
  if (gain_lo <= 0.0 || gain_lo > gain_hi) throw ConfigError("synth: bad gain range");
  if (token_ms <= 2 * kFadeMs) throw ConfigError("synth: token_ms too short for the fades");
  if (sample_rate <= 0) throw ConfigError("synth: sample_rate must be positive");
  const auto window = static_cast<std::size_t>(std::lround(0.025 * sample_rate));
  if (max_delay_samples >= window) {
    throw ConfigError("synth: max delay " + std::to_string(max_delay_samples) +
                      " must stay below the " + std::to_string(window) + "-sample window");
  }
}

double token_frequency(std::size_t k) { return 250.0 + 125.0 * static_cast<double>(k); }

SynthUtterance synth_utterance(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                    static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::mt19937_64 rng(seq);
  const double sr = spec.sample_rate;

  SynthUtterance u;
  u.id = utt_id(index);
  std::uniform_int_distribution<std::size_t> count(spec.min_tokens, spec.max_tokens);
  std::uniform_int_distribution<std::size_t> pick(0, spec.vocab_size - 1);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const std::size_t n_tokens = count(rng);

  const auto pad = static_cast<std::size_t>(std::lround(spec.pad_ms * sr / 1000.0));
  const auto per_token = static_cast<std::size_t>(std::lround(spec.token_ms * sr / 1000.0));
  const auto fade = static_cast<std::size_t>(std::lround(kFadeMs * sr / 1000.0));
  u.source.assign(2 * pad + n_tokens * per_token, 0.0);
  for (std::size_t k = 0; k < n_tokens; ++k) {
    const std::size_t tok = pick(rng);
    u.tokens.push_back(static_cast<TokenId>(tok + 2));
    const double f = token_frequency(tok);
    const double p1 = phase(rng), p2 = phase(rng);
    for (std::size_t n = 0; n < per_token; ++n) {
      // Raised-cosine fades keep repeated tokens audibly separate.
      double env = 1.0;
      if (n < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * n / fade);
      if (n >= per_token - fade) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * (per_token - n) / fade);
      }
      const double w = 2.0 * std::numbers::pi * f * static_cast<double>(n) / sr;
      u.source[pad + k * per_token + n] =
          spec.amplitude * env * (std::sin(w + p1) + 0.5 * std::sin(2.0 * w + p2));
    }
  }

  std::uniform_real_distribution<double> snr(spec.snr_db_lo, spec.snr_db_hi);
  u.snr_db = spec.snr_db_lo == spec.snr_db_hi ? spec.snr_db_lo : snr(rng);
  std::uniform_int_distribution<std::size_t> delay(0, spec.max_delay_samples);
  std::uniform_real_distribution<double> gain(spec.gain_lo, spec.gain_hi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = u.source.size();
  for (std::size_t c = 0; c < spec.channels; ++c) {
    const std::size_t d = delay(rng);
    const double g = spec.gain_lo == spec.gain_hi ? spec.gain_lo : gain(rng);
    const double target = u.snr_db - static_cast<double>(spec.channels - 1 - c) *
                                          spec.channel_snr_step_db;
    Waveform clean{std::vector<double>(n, 0.0), spec.sample_rate};
    for (std::size_t i = d; i < n; ++i) clean.samples[i] = g * u.source[i - d];
    std::vector<double> noise(n);
    for (auto& v : noise) v = gauss(rng);
    // Scale the noise so the realized energy ratio hits the target exactly.
    double sigma = 0.0;
    if (std::isfinite(target)) {
      sigma = std::sqrt(mean_square(clean.samples) / std::pow(10.0, target / 10.0) /
                        mean_square(noise));
    }
    Waveform noisy = clean;
    for (std::size_t i = 0; i < n; ++i) noisy.samples[i] += sigma * noise[i];
    u.delays.push_back(d);
    u.gains.push_back(g);
    u.channel_snr_db.push_back(target);
    u.clean.push_back(std::move(clean));
    u.channels.push_back(std::move(noisy));
  }
  return u;
}

double measure_snr_db(const Waveform& clean, const Waveform& noisy) {
  if (clean.samples.size() != noisy.samples.size()) {
    throw InputError("measure_snr_db: length mismatch");
  }
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double e = noisy.samples[i] - clean.samples[i];
    ps += clean.samples[i] * clean.samples[i];
    pn += e * e;
  }
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / pn);
}

std::string split_str(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "dev") return Split::kDev;
  if (text == "test") return Split::kTest;
  throw ConfigError("unknown split '" + text + "' (expected train, dev or test)");
}

Split split_of(std::size_t index, std::size_t n_utts) {
  if (index < n_utts * 8 / 10) return Split::kTrain;
  if (index < n_utts * 9 / 10) return Split::kDev;
  return Split::kTest;
}

std::vector<ManifestEntry> write_corpus(const SynthSpec& spec,
                                        const std::filesystem::path& dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir / "wav", ec);
  if (ec) throw IoError("cannot create " + (dir / "wav").string() + ": " + ec.message());

  const auto vocab = Vocabulary::letters(spec.vocab_size);
  vocab.save(dir / "vocab.txt");
  std::ofstream manifest(dir / "manifest.jsonl");
  std::ofstream transcripts(dir / "transcripts.txt");
  if (!manifest || !transcripts) throw IoError("cannot write corpus files in " + dir.string());

  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < spec.n_utts; ++i) {
    auto u = synth_utterance(spec, i);
    ManifestEntry e;
    e.id = u.id;
    e.split = split_of(i, spec.n_utts);
    e.transcript = vocab.decode(u.tokens);
    e.snr_db = u.snr_db;
    e.channel_snr_db = u.channel_snr_db;
    e.delays = u.delays;
    nlohmann::json rec;
    rec["id"] = e.id;
    rec["split"] = split_str(e.split);
    std::vector<std::string> rel;
    for (std::size_t c = 0; c < u.channels.size(); ++c) {
      const auto name = std::filesystem::path("wav") / (u.id + "_ch" + std::to_string(c) + ".wav");
      write_wav(dir / name, std::span<const Waveform>(&u.channels[c], 1));
      rel.push_back(name.generic_string());
      e.channel_paths.push_back(dir / name);
    }
    rec["channels"] = rel;
    rec["transcript"] = e.transcript;
    rec["snr_db"] = e.snr_db;
    rec["channel_snr_db"] = e.channel_snr_db;
    rec["delays"] = e.delays;
    rec["gains"] = u.gains;
    manifest << rec.dump() << '\n';
    transcripts << e.id << ' ' << e.transcript << '\n';
    entries.push_back(std::move(e));
  }
  if (!manifest || !transcripts) throw IoError("failed writing corpus files in " + dir.string());
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = rec.at("id").get<std::string>();
      e.split = parse_split(rec.value("split", std::string("train")));
      for (const auto& p : rec.at("channels")) {
        std::filesystem::path cp = p.get<std::string>();
        e.channel_paths.push_back(cp.is_absolute() ? cp : base / cp);
      }
      e.transcript = rec.at("transcript").get<std::string>();
      if (rec.contains("snr_db")) e.snr_db = json_db(rec["snr_db"]);
      if (rec.contains("channel_snr_db")) {
        for (const auto& v : rec["channel_snr_db"]) e.channel_snr_db.push_back(json_db(v));
      }
      if (rec.contains("delays")) e.delays = rec["delays"].get<std::vector<std::size_t>>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return entries;
}

}  // namespace mctt
