#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "mctt/adam.h"
#include "mctt/checkpoint.h"
#include "mctt/config.h"
#include "mctt/dataset.h"
#include "mctt/model.h"

namespace mctt {

struct LossRecord {
  std::uint64_t step = 0;  // 1-based index of the optimizer step
  double loss = 0.0;       // mean utterance loss of the batch, in nats
  double loss_per_token = 0.0;
};

// Batch membership is a pure function of (seed, step), which is what makes a
// resumed run retrace the uninterrupted one exactly.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t step,
                                       std::size_t n_utts, std::size_t batch_size);

class Trainer {
 public:
  // Fresh model initialized from cfg.train.seed. Fits the feature normalizer
  // on the training set when cfg.data.normalize is set.
  Trainer(const RunConfig& cfg, Vocabulary vocab, std::vector<Utterance> train_set);
  // Continues from a checkpoint; train_set must be the raw (unnormalized)
  // utterances of the original run.
  Trainer(Checkpoint checkpoint, std::vector<Utterance> train_set);

  LossRecord step();

  // Steps until steps_done() == target. Each record is passed to on_step;
  // checkpoints land in cfg.train.checkpoint_dir every checkpoint_every steps
  // and at the end when write_checkpoints is set.
  std::vector<LossRecord> run(std::uint64_t target, bool write_checkpoints,
                              const std::function<void(const LossRecord&)>& on_step = {});

  void save(const std::filesystem::path& path) const;

  std::uint64_t steps_done() const { return step_; }
  const RunConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  TransducerModel& model() { return *model_; }
  const FeatureNormalizer& normalizer() const { return normalizer_; }
  const std::vector<Utterance>& train_set() const { return train_; }
  Adam& optimizer() { return *adam_; }

 private:
  RunConfig cfg_;
  Vocabulary vocab_;
  std::unique_ptr<TransducerModel> model_;
  std::unique_ptr<Adam> adam_;
  FeatureNormalizer normalizer_;
  std::vector<Utterance> train_;
  std::uint64_t step_ = 0;
};

// Appends records as CSV rows (step,loss,loss_per_token); writes the header
// when the file is new or truncate is set.
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& records,
                    bool truncate);

}  // namespace mctt
