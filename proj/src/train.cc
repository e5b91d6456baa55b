#include "mctt/train.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "mctt/errors.h"

namespace mctt {

namespace fs = std::filesystem;

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t step,
                                       std::size_t n_utts, std::size_t batch_size) {
  std::vector<std::size_t> idx(n_utts);
  std::iota(idx.begin(), idx.end(), 0);
  if (batch_size >= n_utts) return idx;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  // Partial Fisher-Yates: the first batch_size slots form the batch.
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_utts - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch_size);
  return idx;
}

Trainer::Trainer(const RunConfig& cfg, Vocabulary vocab, std::vector<Utterance> train_set)
    : cfg_(cfg), vocab_(std::move(vocab)), train_(std::move(train_set)) {
  if (train_.empty()) throw InputError("training set is empty");
  model_ = std::make_unique<TransducerModel>(cfg_.model_config(vocab_.size()), cfg_.train.seed);
  adam_ = std::make_unique<Adam>(model_->params(), cfg_.adam());
  if (cfg_.data.normalize) {
    std::vector<MultiChannelFeatures> feats;
    for (const auto& u : train_) feats.push_back(u.feats);
    normalizer_ = FeatureNormalizer::fit(feats);
  }
  normalize_all(train_, normalizer_);
}

Trainer::Trainer(Checkpoint checkpoint, std::vector<Utterance> train_set)
    : cfg_(std::move(checkpoint.config)),
      vocab_(std::move(checkpoint.vocab)),
      model_(std::move(checkpoint.model)),
      normalizer_(std::move(checkpoint.normalizer)),
      train_(std::move(train_set)),
      step_(checkpoint.step) {
  if (train_.empty()) throw InputError("training set is empty");
  adam_ = std::make_unique<Adam>(model_->params(), cfg_.adam());
  if (!checkpoint.adam.m.empty()) adam_->restore(std::move(checkpoint.adam));
  normalize_all(train_, normalizer_);
}

LossRecord Trainer::step() {
  const auto batch = batch_indices(cfg_.train.seed, step_, train_.size(), cfg_.train.batch_size);
  model_->params().zero_grads();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::size_t tokens = 0;
  for (auto i : batch) {
    const auto& u = train_[i];
    const std::string where = " at step " + std::to_string(step_ + 1) + " (utterance " + u.id + ")";
    double value = 0.0;
    try {
      Tensor loss = model_->loss(u.feats, u.tokens);
      value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: loss is " + std::to_string(value) + where);
      }
      scale(loss, inv).backward();
    } catch (const NumericError& e) {
      // NaNs usually trip a guard inside the forward pass first.
      if (std::string_view(e.what()).find(where) != std::string_view::npos) throw;
      throw NumericError(std::string("training diverged") + where + ": " + e.what());
    }
    total += value;
    tokens += u.tokens.size();
  }
  adam_->step();
  ++step_;
  LossRecord rec;
  rec.step = step_;
  rec.loss = total * inv;
  rec.loss_per_token = tokens ? total / static_cast<double>(tokens) : rec.loss;
  return rec;
}

std::vector<LossRecord> Trainer::run(std::uint64_t target, bool write_checkpoints,
                                     const std::function<void(const LossRecord&)>& on_step) {
  std::vector<LossRecord> records;
  const auto every = cfg_.train.checkpoint_every;
  while (step_ < target) {
    records.push_back(step());
    if (on_step) on_step(records.back());
    if (write_checkpoints && ((every && step_ % every == 0) || step_ == target)) {
      std::ostringstream name;
      name << "step_" << std::setw(6) << std::setfill('0') << step_ << ".ckpt";
      save(cfg_.train.checkpoint_dir / name.str());
      save(cfg_.train.checkpoint_dir / "latest.ckpt");
    }
  }
  return records;
}

void Trainer::save(const fs::path& path) const {
  save_checkpoint(path, cfg_, vocab_, *model_, adam_->state(), step_, normalizer_);
}

void write_loss_log(const fs::path& path, const std::vector<LossRecord>& records,
                    bool truncate) {
  const bool fresh = truncate || !fs::exists(path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) throw IoError("cannot write loss log " + path.string());
  if (fresh) out << "step,loss,loss_per_token\n";
  out << std::setprecision(17);
  for (const auto& r : records) out << r.step << ',' << r.loss << ',' << r.loss_per_token << '\n';
  if (!out) throw IoError("failed writing loss log " + path.string());
}

}  // namespace mctt
