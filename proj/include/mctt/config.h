#pragma once

// Run configuration, read from and written to JSON. Relative paths in a
// config file are resolved against the file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mctt/adam.h"
#include "mctt/features.h"
#include "mctt/model.h"
#include "mctt/synth.h"

namespace mctt {

struct ModelSection {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 0;  // 0 means 4 * d_model
  std::size_t n_layers_csa = 2;
  std::size_t n_layers_cca = 2;
  std::size_t n_layers_label = 2;
  std::size_t d_joint = 0;  // 0 means d_model
  Combiner combiner = Combiner::kAvg;
  AvgDivisor avg_divisor = AvgDivisor::kChannels;
  ContextBound l_audio;
  ContextBound r_audio;
  ContextBound l_label;
  std::size_t max_symbols_per_frame = 5;
  std::filesystem::path vocab;  // empty: <corpus>/vocab.txt
};

struct TrainSection {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t steps = 300;
  std::uint64_t seed = 1;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::size_t checkpoint_every = 100;  // 0: only the final checkpoint
  std::filesystem::path log = "train_log.csv";
};

struct DataSection {
  std::filesystem::path corpus = "corpus";
  std::vector<std::size_t> channels;  // empty: every channel in the corpus
  bool normalize = false;             // per-dimension feature standardization
  std::optional<SynthSpec> synth;
};

struct RunConfig {
  ModelSection model;
  FeatureConfig features;
  TrainSection train;
  DataSection data;

  // Named presets: "desk" (the defaults) and "full" (full-size model, not
  // meant for desk runs).
  static RunConfig preset(const std::string& name);

  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base = {});
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  std::filesystem::path vocab_path() const;
  std::filesystem::path manifest_path() const { return data.corpus / "manifest.jsonl"; }

  // Model configuration for inputs with the given feature width and
  // vocabulary size.
  ModelConfig model_config(std::size_t vocab_size) const;
  ContextWindow audio_window() const { return {model.l_audio, model.r_audio}; }
  AdamOptions adam() const { return {train.lr, train.beta1, train.beta2, train.eps}; }

  void validate() const;
  // Throws ConfigError naming the first referenced input that does not exist.
  void check_inputs() const;
};

// Parses "0,1,2" into channel indices.
std::vector<std::size_t> parse_channel_list(const std::string& text);

}  // namespace mctt
