#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "mctt/checkpoint.h"
#include "mctt/config.h"
#include "mctt/dataset.h"
#include "mctt/errors.h"
#include "mctt/synth.h"
#include "mctt/train.h"

using namespace mctt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mctt_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Ten short utterances over a three-letter alphabet and a tiny model.
RunConfig tiny_run(const fs::path& dir) {
  SynthSpec spec;
  spec.n_utts = 10;
  spec.vocab_size = 3;
  spec.min_tokens = 1;
  spec.max_tokens = 2;
  spec.snr_db_lo = 10.0;
  spec.snr_db_hi = 20.0;
  write_corpus(spec, dir / "corpus");

  RunConfig cfg;
  cfg.model.d_model = 8;
  cfg.model.n_heads = 2;
  cfg.model.n_layers_csa = 1;
  cfg.model.n_layers_cca = 1;
  cfg.model.n_layers_label = 1;
  cfg.data.corpus = dir / "corpus";
  cfg.train.checkpoint_dir = dir / "ckpt";
  cfg.train.log = dir / "log.csv";
  cfg.train.batch_size = 3;
  cfg.train.lr = 3e-3;
  return cfg;
}

std::vector<Utterance> train_split(const RunConfig& cfg, const Vocabulary& vocab) {
  return load_utterances(cfg, vocab, Split::kTrain);
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

}  // namespace

TEST_CASE("config: JSON round trip preserves every field") {
  RunConfig cfg;
  cfg.model.d_model = 16;
  cfg.model.combiner = Combiner::kConcat;
  cfg.model.avg_divisor = AvgDivisor::kOtherChannels;
  cfg.model.l_audio = 7;
  cfg.model.r_audio = 0;
  cfg.model.l_label = std::nullopt;
  cfg.train.lr = 0.25;
  cfg.train.seed = 99;
  cfg.data.channels = {1, 0};
  cfg.data.normalize = true;
  cfg.data.synth = SynthSpec{};
  cfg.data.synth->n_utts = 33;
  const auto j = cfg.to_json();
  const auto back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.model.l_audio == ContextBound{7});
  CHECK(back.model.r_audio == ContextBound{0});
  CHECK_FALSE(back.model.l_label.has_value());
  CHECK(back.data.synth->n_utts == 33);
  CHECK(back.data.channels == std::vector<std::size_t>{1, 0});
}

TEST_CASE("config: bad input is reported") {
  CHECK_THROWS_AS(RunConfig::from_json(json{{"model", {{"d_modle", 8}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"model", {{"l_audio", -3}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"model", {{"d_model", 10}, {"n_heads", 4}}}}),
                  Error);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"train", {{"lr", "fast"}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"preset", "huge"}}), ConfigError);
  CHECK_THROWS_AS(parse_channel_list("0,x"), ConfigError);
  CHECK(parse_channel_list("2,0") == std::vector<std::size_t>{2, 0});
  CHECK(RunConfig::from_json(json{{"model", {{"r_audio", "inf"}}}}).model.r_audio ==
        std::nullopt);

  RunConfig cfg;
  cfg.data.corpus = "/nonexistent/corpus";
  CHECK_THROWS_AS(cfg.check_inputs(), ConfigError);
}

TEST_CASE("config: relative paths resolve against the config file") {
  const auto dir = scratch("paths");
  {
    std::ofstream out(dir / "run.json");
    out << R"({"data": {"corpus": "c"}, "train": {"checkpoint_dir": "ck"}})";
  }
  const auto cfg = RunConfig::load(dir / "run.json");
  CHECK(cfg.data.corpus == dir / "c");
  CHECK(cfg.train.checkpoint_dir == dir / "ck");
  CHECK(cfg.vocab_path() == dir / "c" / "vocab.txt");
  CHECK(RunConfig::preset("full").model.d_model == 512);
}

TEST_CASE("dataset: channel selection keeps the requested order") {
  const auto dir = scratch("dataset");
  auto cfg = tiny_run(dir);
  const auto vocab = Vocabulary::load(cfg.vocab_path());
  const auto all = load_utterances(cfg, vocab, std::nullopt);
  REQUIRE(all.size() == 10);
  CHECK(all[0].feats.channels == 2);
  CHECK(train_split(cfg, vocab).size() == 8);
  cfg.data.channels = {1};
  const auto one = load_utterances(cfg, vocab, Split::kTrain);
  CHECK(one[0].feats.channels == 1);
  CHECK(std::equal(one[0].feats.data.begin(), one[0].feats.data.end(),
                   all[0].feats.data.begin() + static_cast<std::ptrdiff_t>(
                                                   all[0].feats.frames * all[0].feats.dim)));
  cfg.data.channels = {5};
  CHECK_THROWS_AS(load_utterances(cfg, vocab, Split::kTrain), Error);
}

TEST_CASE("train: batch membership depends only on seed and step") {
  CHECK(batch_indices(3, 7, 10, 4) == batch_indices(3, 7, 10, 4));
  CHECK(batch_indices(3, 7, 10, 4) != batch_indices(3, 8, 10, 4));
  CHECK(batch_indices(1, 0, 3, 8) == std::vector<std::size_t>{0, 1, 2});
  auto b = batch_indices(5, 2, 10, 10);
  CHECK(b.size() == 10);
  auto p = batch_indices(5, 2, 10, 6);
  std::sort(p.begin(), p.end());
  CHECK(std::adjacent_find(p.begin(), p.end()) == p.end());
}

TEST_CASE("train: lr = 0 leaves the loss constant") {
  const auto dir = scratch("lr0");
  auto cfg = tiny_run(dir);
  cfg.train.lr = 0.0;
  cfg.train.batch_size = 100;  // whole training set every step
  auto vocab = Vocabulary::load(cfg.vocab_path());
  Trainer t(cfg, vocab, train_split(cfg, vocab));
  const auto recs = t.run(5, false);
  REQUIRE(recs.size() == 5);
  for (const auto& r : recs) CHECK(same_bits(r.loss, recs[0].loss));
}

TEST_CASE("train: the loss falls on a tiny corpus") {
  const auto dir = scratch("falls");
  auto cfg = tiny_run(dir);
  cfg.train.batch_size = 100;
  auto vocab = Vocabulary::load(cfg.vocab_path());
  Trainer t(cfg, vocab, train_split(cfg, vocab));
  const auto recs = t.run(30, false);
  CHECK(recs.back().loss < 0.5 * recs.front().loss);
}

TEST_CASE("train: resuming from a checkpoint retraces the uninterrupted run") {
  const auto dir = scratch("resume");
  auto cfg = tiny_run(dir);
  cfg.data.normalize = true;
  auto vocab = Vocabulary::load(cfg.vocab_path());

  Trainer straight(cfg, vocab, train_split(cfg, vocab));
  const auto full = straight.run(8, false);

  Trainer first(cfg, vocab, train_split(cfg, vocab));
  first.run(4, false);
  first.save(dir / "mid.ckpt");
  Trainer second(load_checkpoint(dir / "mid.ckpt"), train_split(cfg, vocab));
  CHECK(second.steps_done() == 4);
  const auto rest = second.run(8, false);
  REQUIRE(rest.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rest[i].step == full[4 + i].step);
    CHECK(same_bits(rest[i].loss, full[4 + i].loss));
  }
  const auto& a = straight.model().params().items();
  const auto& b = second.model().params().items();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto va = a[i].tensor.values();
    const auto vb = b[i].tensor.values();
    CHECK(std::equal(va.begin(), va.end(), vb.begin(), vb.end(), same_bits));
  }
}

TEST_CASE("checkpoint: reload reproduces losses and decodes bit for bit") {
  const auto dir = scratch("ckpt");
  auto cfg = tiny_run(dir);
  cfg.train.checkpoint_every = 2;
  auto vocab = Vocabulary::load(cfg.vocab_path());
  const auto utts = train_split(cfg, vocab);
  Trainer t(cfg, vocab, utts);
  t.run(3, true);
  CHECK(fs::exists(cfg.train.checkpoint_dir / "step_000002.ckpt"));
  CHECK(fs::exists(cfg.train.checkpoint_dir / "step_000003.ckpt"));

  const auto ck = load_checkpoint(cfg.train.checkpoint_dir / "latest.ckpt");
  CHECK(ck.step == 3);
  CHECK(ck.vocab.tokens() == vocab.tokens());
  CHECK(ck.config.to_json() == t.config().to_json());
  CHECK(ck.adam.step == 3);
  for (const auto& u : utts) {
    CHECK(same_bits(ck.model->loss(u.feats, u.tokens).item(),
                    t.model().loss(u.feats, u.tokens).item()));
    CHECK(ck.model->decode(u.feats).tokens == t.model().decode(u.feats).tokens);
  }
}

TEST_CASE("checkpoint: damaged or foreign files are rejected") {
  const auto dir = scratch("bad");
  {
    std::ofstream out(dir / "junk.ckpt");
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  auto cfg = tiny_run(dir);
  auto vocab = Vocabulary::load(cfg.vocab_path());
  Trainer t(cfg, vocab, train_split(cfg, vocab));
  t.save(dir / "ok.ckpt");
  const auto size = fs::file_size(dir / "ok.ckpt");
  fs::resize_file(dir / "ok.ckpt", size / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "ok.ckpt"), IoError);
}

TEST_CASE("train: a non-finite loss aborts with the step number") {
  const auto dir = scratch("nan");
  auto cfg = tiny_run(dir);
  auto vocab = Vocabulary::load(cfg.vocab_path());
  Trainer t(cfg, vocab, train_split(cfg, vocab));
  t.run(2, false);
  Tensor w = t.model().params().items().front().tensor;
  w.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    INFO(std::string(e.what()));
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("train: loss log has a fixed header and appends on resume") {
  const auto dir = scratch("log");
  const auto path = dir / "log.csv";
  write_loss_log(path, {{1, 2.5, 0.5}}, true);
  write_loss_log(path, {{2, 2.0, 0.4}}, false);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,loss,loss_per_token");
  std::getline(in, line);
  CHECK(line.rfind("1,2.5,", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("2,2,", 0) == 0);
}
