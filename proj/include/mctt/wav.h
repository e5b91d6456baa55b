#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "mctt/features.h"

namespace mctt {

// 16-bit PCM RIFF/WAVE. Multi-channel files are read as one waveform per
// channel (de-interleaved).
std::vector<Waveform> read_wav(const std::filesystem::path& path);

// Writes the channels interleaved; all channels must have equal length and
// sample rate. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path,
               std::span<const Waveform> channels);

}  // namespace mctt
