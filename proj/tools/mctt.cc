// Command-line front end: corpus synthesis, training, evaluation, decoding
// and the latency benchmark.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mctt/bench.h"
#include "mctt/checkpoint.h"
#include "mctt/config.h"
#include "mctt/dataset.h"
#include "mctt/errors.h"
#include "mctt/metrics.h"
#include "mctt/synth.h"
#include "mctt/train.h"

namespace fs = std::filesystem;
using namespace mctt;

namespace {

// Flags shared by every subcommand that reads a config or checkpoint.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> channels;
  std::optional<std::string> combiner;
  std::optional<std::string> l_audio, r_audio, l_label;

  void attach(CLI::App* app) {
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--channels", channels, "Comma-separated channel indices, e.g. 0,1");
    app->add_option("--combiner", combiner, "Cross-channel combiner")
        ->check(CLI::IsMember({"avg", "concat"}));
    app->add_option("--l-audio", l_audio, "Audio left context per layer (integer or inf)");
    app->add_option("--r-audio", r_audio, "Audio right context per layer (integer or inf)");
    app->add_option("--l-label", l_label, "Label left context per layer (integer or inf)");
  }

  void apply(RunConfig& cfg) const {
    if (seed) cfg.train.seed = *seed;
    if (channels) cfg.data.channels = parse_channel_list(*channels);
    if (combiner) cfg.model.combiner = parse_combiner(*combiner);
    if (l_audio) cfg.model.l_audio = parse_context_bound(*l_audio);
    if (r_audio) cfg.model.r_audio = parse_context_bound(*r_audio);
    if (l_label) cfg.model.l_label = parse_context_bound(*l_label);
    cfg.validate();
  }
};

std::optional<Split> split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  return parse_split(s);
}

// Loads a checkpoint with the overrides applied, plus the utterances of one
// split normalized the way the model was trained.
struct Loaded {
  Checkpoint ck;
  std::vector<Utterance> utts;
};

Loaded load_for_inference(const fs::path& checkpoint, const Overrides& ov,
                          const std::optional<fs::path>& corpus, const std::string& split) {
  Loaded out;
  out.ck = load_checkpoint(checkpoint, [&](RunConfig& cfg) {
    ov.apply(cfg);
    if (corpus) cfg.data.corpus = *corpus;
  });
  if (!fs::exists(out.ck.config.manifest_path())) {
    throw ConfigError("corpus manifest not found: " + out.ck.config.manifest_path().string());
  }
  out.utts = load_utterances(out.ck.config, out.ck.vocab, split_option(split));
  normalize_all(out.utts, out.ck.normalizer);
  return out;
}

DecodeResult run_decode(const TransducerModel& model, const MultiChannelFeatures& f,
                        bool streaming) {
  return streaming ? model.decode_streaming(f) : model.decode(f);
}

int cmd_synth(const fs::path& config_path, const std::optional<fs::path>& out_dir,
              std::optional<std::size_t> n_utts, std::optional<std::size_t> channels,
              std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  SynthSpec spec = cfg.data.synth.value_or(SynthSpec{});
  if (n_utts) spec.n_utts = *n_utts;
  if (channels) spec.channels = *channels;
  if (seed) spec.seed = *seed;
  const fs::path dir = out_dir ? *out_dir : cfg.data.corpus;
  const auto entries = write_corpus(spec, dir);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : entries) ++counts[static_cast<int>(e.split)];
  std::cout << "wrote " << entries.size() << " utterances (" << spec.channels
            << " channels) to " << dir.string() << ": train " << counts[0] << ", dev "
            << counts[1] << ", test " << counts[2] << '\n';
  return 0;
}

int cmd_train(const fs::path& config_path, const Overrides& ov,
              const std::optional<fs::path>& resume, std::optional<std::size_t> steps,
              std::size_t log_every) {
  std::unique_ptr<Trainer> trainer;
  if (resume) {
    auto ck = load_checkpoint(*resume, [&](RunConfig& cfg) { ov.apply(cfg); });
    ck.config.check_inputs();
    auto train_set = load_utterances(ck.config, ck.vocab, Split::kTrain);
    trainer = std::make_unique<Trainer>(std::move(ck), std::move(train_set));
    std::cout << "resuming at step " << trainer->steps_done() << '\n';
  } else {
    if (config_path.empty()) throw ConfigError("train needs --config or --resume");
    RunConfig cfg = RunConfig::load(config_path);
    ov.apply(cfg);
    cfg.check_inputs();
    Vocabulary vocab = Vocabulary::load(cfg.vocab_path());
    auto train_set = load_utterances(cfg, vocab, Split::kTrain);
    trainer = std::make_unique<Trainer>(cfg, std::move(vocab), std::move(train_set));
  }
  const auto& cfg = trainer->config();
  const std::uint64_t target = steps ? *steps : cfg.train.steps;
  std::cout << "training on " << trainer->train_set().size() << " utterances, "
            << trainer->model().params().total_elements() << " parameters, steps "
            << trainer->steps_done() << " -> " << target << '\n';
  if (!cfg.train.checkpoint_dir.empty()) fs::create_directories(cfg.train.checkpoint_dir);
  // Resumed runs append to the existing log so the curve stays in one file.
  bool truncate = !resume;
  auto records = trainer->run(target, true, [&](const LossRecord& r) {
    write_loss_log(cfg.train.log, {r}, truncate);
    truncate = false;
    if (log_every && (r.step % log_every == 0 || r.step == target)) {
      std::cout << "step " << r.step << "  loss " << std::setprecision(6) << r.loss
                << "  per token " << r.loss_per_token << '\n';
    }
  });
  std::cout << "done; checkpoints in " << cfg.train.checkpoint_dir.string() << '\n';
  return 0;
}

int cmd_evaluate(const fs::path& checkpoint, const Overrides& ov,
                 const std::optional<fs::path>& corpus, const std::string& split,
                 bool streaming, const std::optional<fs::path>& csv,
                 std::optional<double> baseline) {
  auto loaded = load_for_inference(checkpoint, ov, corpus, split);
  WerAccumulator acc;
  for (const auto& u : loaded.utts) {
    const auto hyp = run_decode(*loaded.ck.model, u.feats, streaming).tokens;
    if (!acc.add(u.id, u.snr_db, u.tokens, hyp)) {
      std::cerr << "warning: " << u.id << " has an empty reference; excluded\n";
    }
  }
  const auto& rep = acc.report();
  if (rep.utts.empty()) throw InputError("no scorable utterances in split " + split);
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "split " << split << ": " << rep.utts.size() << " utterances, " << rep.ref_tokens
            << " reference tokens\n";
  std::cout << "WER " << rep.wer() << " (" << rep.errors << " errors)\n";
  for (const auto& [bucket, counts] : rep.buckets) {
    std::cout << "  snr " << bucket << ": WER " << rep.bucket_wer(bucket) << " over "
              << counts.second << " tokens\n";
  }
  if (baseline) std::cout << "WERR vs " << *baseline << ": " << werr(*baseline, rep.wer()) << "%\n";
  if (csv) write_wer_csv(*csv, rep);
  return 0;
}

int cmd_decode(const fs::path& checkpoint, const Overrides& ov,
               const std::optional<fs::path>& corpus, const std::string& split,
               const std::optional<std::string>& utt, bool streaming) {
  auto loaded = load_for_inference(checkpoint, ov, corpus, split);
  bool found = false;
  for (const auto& u : loaded.utts) {
    if (utt && u.id != *utt) continue;
    found = true;
    const auto res = run_decode(*loaded.ck.model, u.feats, streaming);
    std::cout << u.id << '\t' << loaded.ck.vocab.decode(res.tokens) << '\n';
  }
  if (utt && !found) throw InputError("utterance " + *utt + " not in split " + split);
  return 0;
}

int cmd_bench(const fs::path& checkpoint, const Overrides& ov,
              const std::optional<fs::path>& corpus, const std::string& split,
              std::size_t n_utts, bool scaling) {
  const bool pinned = pin_to_current_cpu();
  auto loaded = load_for_inference(checkpoint, ov, corpus, split);
  auto& model = *loaded.ck.model;
  const auto lat = time_utterances(model, loaded.utts, n_utts);
  const auto& ctx = model.config().encoder.context;
  std::cout << "# decode latency, greedy, single thread"
            << (pinned ? ", pinned to one CPU" : ", CPU pinning unavailable") << '\n'
            << "# percentiles: nearest rank, the ceil(p/100*n)-th smallest time\n"
            << "# context L=" << context_bound_str(ctx.left) << " R=" << context_bound_str(ctx.right)
            << (ctx.right ? " (streaming)" : " (offline)") << ", " << lat.seconds.size()
            << " utterances\n";
  if (!lat.warning.empty()) std::cerr << "warning: " << lat.warning << '\n';
  if (!lat.seconds.empty()) {
    std::cout << std::fixed << std::setprecision(3) << "TP50 " << lat.tp50 * 1e3 << " ms\n"
              << "TP90 " << lat.tp90 * 1e3 << " ms\n"
              << "TP99 " << lat.tp99 * 1e3 << " ms\n";
  }
  if (scaling) {
    ScalingOptions opt;
    opt.channels = loaded.utts.empty() ? 2 : loaded.utts.front().feats.channels;
    const auto rep = measure_scaling(model, opt);
    std::cout << std::setprecision(4) << "# per-frame cost vs length, random input, best of "
              << opt.repeats << '\n'
              << "finite L=20 R=10: T=" << opt.short_frames << " "
              << rep.finite_short_per_frame * 1e3 << " ms/frame, T=" << opt.long_frames << " "
              << rep.finite_long_per_frame * 1e3 << " ms/frame, ratio " << rep.finite_ratio()
              << '\n'
              << "infinite context: T=" << opt.short_frames << " " << rep.full_short_total * 1e3
              << " ms, T=" << opt.long_frames << " " << rep.full_long_total * 1e3
              << " ms, total ratio " << rep.full_ratio() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-channel transformer transducer toolkit"};
  app.require_subcommand(1);

  fs::path config;
  fs::path checkpoint;
  std::optional<fs::path> corpus, out_dir, resume, csv;
  std::optional<std::size_t> n_synth, synth_channels, steps;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::string> utt;
  std::optional<double> baseline;
  std::string split = "test";
  bool streaming = false, no_scaling = false;
  std::size_t log_every = 10, n_bench = 20;
  Overrides ov;

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic multi-channel corpus");
  synth->add_option("--config", config, "Run config (JSON); its data.synth section is used");
  synth->add_option("--out", out_dir, "Output directory (default: data.corpus)");
  synth->add_option("--n-utts", n_synth, "Number of utterances");
  synth->add_option("--channels", synth_channels, "Number of microphones");
  synth->add_option("--seed", synth_seed, "Corpus seed");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Run config (JSON)");
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--steps", steps, "Target step count (default: train.steps)");
  train->add_option("--log-every", log_every, "Print every N steps (0: quiet)");
  ov.attach(train);

  auto* evaluate = app.add_subcommand("evaluate", "Score greedy decodes against references");
  auto* decode = app.add_subcommand("decode", "Print greedy decodes");
  auto* bench = app.add_subcommand("bench-latency", "Decode latency benchmark");
  for (auto* sub : {evaluate, decode, bench}) {
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sub->add_option("--corpus", corpus, "Corpus directory (default: the training corpus)");
    sub->add_option("--split", split, "train, dev, test or all")
        ->check(CLI::IsMember({"train", "dev", "test", "all"}));
    ov.attach(sub);
  }
  for (auto* sub : {evaluate, decode}) {
    sub->add_flag("--streaming", streaming, "Decode frame by frame with finite lookahead");
  }
  evaluate->add_option("--wer-csv", csv, "Write per-utterance WER (utt_id,wer,snr_bucket)");
  evaluate->add_option("--baseline-wer", baseline, "Also report WERR against this WER");
  decode->add_option("--utt", utt, "Decode only this utterance id");
  bench->add_option("--n-utts", n_bench, "Utterances to time");
  bench->add_flag("--no-scaling", no_scaling, "Skip the per-frame scaling measurement");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config, out_dir, n_synth, synth_channels, synth_seed);
    if (train->parsed()) return cmd_train(config, ov, resume, steps, log_every);
    if (evaluate->parsed()) {
      return cmd_evaluate(checkpoint, ov, corpus, split, streaming, csv, baseline);
    }
    if (decode->parsed()) return cmd_decode(checkpoint, ov, corpus, split, utt, streaming);
    if (bench->parsed()) return cmd_bench(checkpoint, ov, corpus, split, n_bench, !no_scaling);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
