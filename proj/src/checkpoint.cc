#include "mctt/checkpoint.h"

#include <cstring>
#include <fstream>

#include "mctt/errors.h"

namespace mctt {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'M', 'C', 'T', 'T', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const fs::path& path) : in_(in), path_(path) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    std::string s(checked_size(u64(), 1), '\0');
    raw(s.data(), s.size());
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(checked_size(u64(), sizeof(double)));
    raw(v.data(), v.size() * sizeof(double));
    return v;
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("checkpoint " + path_.string() + " is truncated");
  }

 private:
  std::size_t checked_size(std::uint64_t n, std::size_t width) {
    if (n > (std::uint64_t{1} << 34) / width) {
      throw IoError("checkpoint " + path_.string() + " is corrupt (bad length)");
    }
    return static_cast<std::size_t>(n);
  }

  std::ifstream& in_;
  fs::path path_;
};

}  // namespace

void save_checkpoint(const fs::path& path, const RunConfig& cfg, const Vocabulary& vocab,
                     const TransducerModel& model, const AdamState& adam, std::uint64_t step,
                     const FeatureNormalizer& normalizer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    Writer w(out);
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    nlohmann::json header;
    header["config"] = cfg.to_json();
    header["vocab"] = vocab.tokens();
    w.str(header.dump());
    w.u64(step);

    const auto& items = model.params().items();
    w.u64(items.size());
    for (const auto& item : items) {
      w.str(item.name);
      w.u64(item.tensor.rank());
      for (auto d : item.tensor.shape()) w.u64(d);
      w.doubles(item.tensor.values());
    }

    w.u64(adam.step);
    w.u64(adam.m.size());
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
      w.doubles(adam.m[i]);
      w.doubles(adam.v[i]);
    }

    w.doubles(normalizer.mean());
    w.doubles(normalizer.inv_std());
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path,
                           const std::function<void(RunConfig&)>& adjust) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + " has version " + std::to_string(version) +
                  ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() + " header: " + e.what());
  }
  ck.config = RunConfig::from_json(header.at("config"));
  if (adjust) {
    adjust(ck.config);
    ck.config.validate();
  }
  ck.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
  ck.step = r.u64();
  ck.model = std::make_unique<TransducerModel>(ck.config.model_config(ck.vocab.size()),
                                               ck.config.train.seed);

  const auto& items = ck.model->params().items();
  const auto n = r.u64();
  if (n != items.size()) {
    throw IoError("checkpoint " + path.string() + " holds " + std::to_string(n) +
                  " parameters, model has " + std::to_string(items.size()));
  }
  for (const auto& item : items) {
    const auto name = r.str();
    if (name != item.name) {
      throw IoError("checkpoint parameter '" + name + "' where '" + item.name + "' expected");
    }
    Shape shape(r.u64());
    for (auto& d : shape) d = r.u64();
    auto values = r.doubles();
    if (shape != item.tensor.shape() || values.size() != item.tensor.numel()) {
      throw IoError("checkpoint parameter " + name + " has shape " + shape_str(shape) +
                    ", model expects " + shape_str(item.tensor.shape()));
    }
    Tensor t = item.tensor;
    std::copy(values.begin(), values.end(), t.mutable_values().begin());
  }

  ck.adam.step = r.u64();
  const auto moments = r.u64();
  if (moments != 0 && moments != items.size()) {
    throw IoError("checkpoint optimizer state covers " + std::to_string(moments) +
                  " parameters, model has " + std::to_string(items.size()));
  }
  for (std::uint64_t i = 0; i < moments; ++i) {
    ck.adam.m.push_back(r.doubles());
    ck.adam.v.push_back(r.doubles());
  }
  auto mean = r.doubles();
  auto inv_std = r.doubles();
  if (!mean.empty()) ck.normalizer = FeatureNormalizer(std::move(mean), std::move(inv_std));
  return ck;
}

}  // namespace mctt
