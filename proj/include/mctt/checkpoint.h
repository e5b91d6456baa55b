#pragma once

// Binary checkpoint: every parameter array, the optimizer moments, the step
// counter, the feature normalizer and a JSON echo of the run configuration
// and vocabulary. Values are stored as raw IEEE doubles, so a reload
// reproduces forward passes bit for bit.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>

#include "mctt/adam.h"
#include "mctt/config.h"
#include "mctt/features.h"
#include "mctt/model.h"
#include "mctt/vocab.h"

namespace mctt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  Vocabulary vocab;
  std::unique_ptr<TransducerModel> model;
  AdamState adam;
  std::uint64_t step = 0;
  FeatureNormalizer normalizer;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg,
                     const Vocabulary& vocab, const TransducerModel& model,
                     const AdamState& adam, std::uint64_t step,
                     const FeatureNormalizer& normalizer);

// adjust may edit the echoed configuration before the model is rebuilt, for
// settings that leave parameter shapes alone (context bounds, combiner,
// channel selection).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::function<void(RunConfig&)>& adjust = {});

}  // namespace mctt
