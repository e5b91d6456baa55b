#include "mctt/dataset.h"

#include "mctt/errors.h"
#include "mctt/wav.h"

namespace mctt {

MultiChannelFeatures load_features(const ManifestEntry& entry, const FeatureConfig& cfg,
                                   const std::vector<std::size_t>& channels) {
  std::vector<Waveform> waves;
  for (const auto& p : entry.channel_paths) {
    for (auto& w : read_wav(p)) waves.push_back(std::move(w));
  }
  if (!channels.empty()) {
    std::vector<Waveform> picked;
    for (auto c : channels) {
      if (c >= waves.size()) {
        throw InputError(entry.id + ": channel " + std::to_string(c) + " requested, only " +
                         std::to_string(waves.size()) + " available");
      }
      picked.push_back(waves[c]);
    }
    waves = std::move(picked);
  }
  return extract(waves, cfg);
}

std::vector<Utterance> load_utterances(const RunConfig& cfg, const Vocabulary& vocab,
                                       std::optional<Split> split) {
  auto entries = load_manifest(cfg.manifest_path());
  std::vector<Utterance> out;
  for (const auto& e : entries) {
    if (split && e.split != *split) continue;
    Utterance u;
    u.id = e.id;
    u.tokens = vocab.encode(e.transcript);
    u.snr_db = e.snr_db;
    u.feats = load_features(e, cfg.features, cfg.data.channels);
    out.push_back(std::move(u));
  }
  return out;
}

void normalize_all(std::vector<Utterance>& utts, const FeatureNormalizer& norm) {
  if (norm.empty()) return;
  for (auto& u : utts) norm.apply(u.feats);
}

}  // namespace mctt
