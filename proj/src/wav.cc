#include "mctt/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mctt/errors.h"

namespace mctt {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

std::vector<Waveform> read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(path.string() + ": not a RIFF/WAVE file");
  }
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    if (pos + 8 + len > bytes.size()) throw IoError(path.string() + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (format != 1 || bits != 16 || channels == 0) {
    throw IoError(path.string() + ": only 16-bit PCM is supported");
  }
  if (!data) throw IoError(path.string() + ": no data chunk");
  const std::size_t frames = data_len / (2 * channels);
  std::vector<Waveform> out(channels);
  for (auto& w : out) {
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(frames);
  }
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * (i * channels + c)));
      out[c].samples[i] = raw / 32767.0;
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path,
               std::span<const Waveform> channels) {
  if (channels.empty()) throw InputError("write_wav: no channels");
  const std::size_t frames = channels[0].samples.size();
  for (const auto& w : channels) {
    if (w.samples.size() != frames || w.sample_rate != channels[0].sample_rate) {
      throw InputError("write_wav: channels differ in length or rate");
    }
  }
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const auto rate = static_cast<std::uint32_t>(channels[0].sample_rate);
  const auto data_len = static_cast<std::uint32_t>(frames * nch * 2);
  std::string buf;
  buf.reserve(44 + data_len);
  buf += "RIFF";
  put_u32(buf, 36 + data_len);
  buf += "WAVEfmt ";
  put_u32(buf, 16);
  put_u16(buf, 1);
  put_u16(buf, nch);
  put_u32(buf, rate);
  put_u32(buf, rate * nch * 2);
  put_u16(buf, static_cast<std::uint16_t>(nch * 2));
  put_u16(buf, 16);
  buf += "data";
  put_u32(buf, data_len);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& w : channels) {
      const double x = std::clamp(w.samples[i], -1.0, 1.0);
      put_u16(buf, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(x * 32767.0))));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mctt
