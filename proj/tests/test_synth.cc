#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "doctest.h"
#include "mctt/errors.h"
#include "mctt/synth.h"
#include "mctt/wav.h"

using namespace mctt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mctt_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("synth: clean, undelayed, unit-gain spec copies the source") {
  SynthSpec spec;
  spec.channels = 3;
  spec.snr_db_lo = spec.snr_db_hi = std::numeric_limits<double>::infinity();
  spec.max_delay_samples = 0;
  spec.gain_lo = spec.gain_hi = 1.0;
  auto u = synth_utterance(spec, 4);
  REQUIRE(u.channels.size() == 3);
  for (const auto& ch : u.channels) CHECK(ch.samples == u.source);
}

TEST_CASE("synth: realized channel SNR matches the drawn target") {
  SynthSpec spec;
  spec.channels = 2;
  spec.snr_db_lo = -5.0;
  spec.snr_db_hi = 15.0;
  for (std::size_t i = 0; i < 20; ++i) {
    auto u = synth_utterance(spec, i);
    CHECK(u.snr_db >= -5.0);
    CHECK(u.snr_db <= 15.0);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(measure_snr_db(u.clean[c], u.channels[c]) - u.channel_snr_db[c]) < 0.5);
      CHECK(u.delays[c] <= spec.max_delay_samples);
      CHECK(u.gains[c] >= 0.7);
      CHECK(u.gains[c] <= 1.0);
    }
    // Channel 0 is the noisiest.
    CHECK(u.channel_snr_db[0] < u.channel_snr_db[1]);
    CHECK(u.channel_snr_db[1] == u.snr_db);
  }
}

TEST_CASE("synth: utterances depend only on (seed, index)") {
  SynthSpec spec;
  auto a = synth_utterance(spec, 7);
  auto b = synth_utterance(spec, 7);
  CHECK(a.tokens == b.tokens);
  CHECK(a.channels[1].samples == b.channels[1].samples);
  spec.seed = 2;
  auto c = synth_utterance(spec, 7);
  CHECK(c.channels[1].samples != a.channels[1].samples);
}

TEST_CASE("synth: a spectral-peak classifier recovers clean transcripts") {
  SynthSpec spec;
  spec.n_utts = 30;
  const std::size_t per_token = 1600, pad = 800;
  for (std::size_t i = 0; i < spec.n_utts; ++i) {
    auto u = synth_utterance(spec, i);
    for (std::size_t k = 0; k < u.tokens.size(); ++k) {
      // Direct DFT magnitude at every candidate fundamental over the middle
      // of the token.
      const std::size_t begin = pad + k * per_token + 200, len = 1200;
      std::size_t best = 0;
      double best_mag = -1.0;
      for (std::size_t cand = 0; cand < spec.vocab_size; ++cand) {
        const double f = token_frequency(cand);
        double re = 0.0, im = 0.0;
        for (std::size_t n = 0; n < len; ++n) {
          const double w = 2.0 * M_PI * f * static_cast<double>(n) / 16000.0;
          re += u.source[begin + n] * std::cos(w);
          im -= u.source[begin + n] * std::sin(w);
        }
        const double mag = re * re + im * im;
        if (mag > best_mag) {
          best_mag = mag;
          best = cand;
        }
      }
      CHECK(static_cast<TokenId>(best + 2) == u.tokens[k]);
    }
  }
}

TEST_CASE("write_corpus: manifest, splits, re-measured SNR and byte determinism") {
  SynthSpec spec;
  spec.n_utts = 10;
  spec.snr_db_lo = 0.0;
  spec.snr_db_hi = 20.0;
  auto dir = scratch("a");
  auto entries = write_corpus(spec, dir);
  REQUIRE(entries.size() == 10);
  auto loaded = load_manifest(dir / "manifest.jsonl");
  REQUIRE(loaded.size() == 10);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : loaded) ++counts[static_cast<int>(e.split)];
  CHECK(counts[0] == 8);
  CHECK(counts[1] == 1);
  CHECK(counts[2] == 1);

  auto vocab = Vocabulary::load(dir / "vocab.txt");
  CHECK(vocab.size() == spec.vocab_size + 2);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& e = loaded[i];
    auto u = synth_utterance(spec, i);
    CHECK(e.id == u.id);
    CHECK(vocab.encode(e.transcript) == u.tokens);
    REQUIRE(e.channel_paths.size() == 2);
    for (std::size_t c = 0; c < 2; ++c) {
      auto wav = read_wav(e.channel_paths[c]);
      REQUIRE(wav.size() == 1);
      CHECK(std::abs(measure_snr_db(u.clean[c], wav[0]) - e.channel_snr_db[c]) < 0.5);
    }
  }

  auto again = scratch("b");
  write_corpus(spec, again);
  CHECK(slurp(dir / "manifest.jsonl") == slurp(again / "manifest.jsonl"));
  for (const auto& e : loaded) {
    for (const auto& p : e.channel_paths) CHECK(slurp(p) == slurp(again / "wav" / p.filename()));
  }
  // Re-running into the same directory rewrites identical content.
  const auto before = slurp(dir / "manifest.jsonl");
  write_corpus(spec, dir);
  CHECK(slurp(dir / "manifest.jsonl") == before);
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST_CASE("synth: invalid specs are rejected") {
  SynthSpec spec;
  spec.max_delay_samples = 400;
  CHECK_THROWS_AS(synth_utterance(spec, 0), ConfigError);
  spec = {};
  spec.snr_db_lo = 10;
  spec.snr_db_hi = 0;
  CHECK_THROWS_AS(synth_utterance(spec, 0), ConfigError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.jsonl"), IoError);
}
