#include "mctt/metrics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mctt/errors.h"

namespace mctt {

EditCounts align_tokens(const TokenSequence& ref, const TokenSequence& hyp) {
  const std::size_t n = ref.size(), m = hyp.size(), w = m + 1;
  std::vector<std::size_t> d((n + 1) * w);
  for (std::size_t i = 0; i <= n; ++i) d[i * w] = i;
  for (std::size_t j = 0; j <= m; ++j) d[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = d[(i - 1) * w + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i * w + j] = std::min({diag, d[(i - 1) * w + j] + 1, d[i * w + j - 1] + 1});
    }
  }
  // Walk back preferring the diagonal, so ties resolve to substitutions.
  EditCounts c;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i * w + j] == d[(i - 1) * w + j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] == hyp[j - 1]) {
        ++c.hits;
      } else {
        ++c.substitutions;
      }
      --i;
      --j;
    } else if (i > 0 && d[i * w + j] == d[(i - 1) * w + j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

std::size_t edit_distance(const TokenSequence& ref, const TokenSequence& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1]);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double word_error_rate(const TokenSequence& ref, const TokenSequence& hyp) {
  if (ref.empty()) throw InputError("word error rate needs a non-empty reference");
  return static_cast<double>(align_tokens(ref, hyp).errors()) / static_cast<double>(ref.size());
}

double werr(double wer_base, double wer_new) {
  if (!(wer_base > 0.0)) {
    throw InputError("WERR is undefined for a baseline WER of " + std::to_string(wer_base));
  }
  return 100.0 * (wer_base - wer_new) / wer_base;
}

double WerReport::wer() const {
  return ref_tokens ? static_cast<double>(errors) / static_cast<double>(ref_tokens) : 0.0;
}

double WerReport::bucket_wer(const std::string& bucket) const {
  auto it = buckets.find(bucket);
  if (it == buckets.end() || it->second.second == 0) return 0.0;
  return static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
}

std::string snr_bucket(double snr_db, double bucket_db) {
  if (!std::isfinite(snr_db)) return "clean";
  const double lo = std::floor(snr_db / bucket_db) * bucket_db;
  std::ostringstream os;
  os << '[' << lo << ',' << lo + bucket_db << ')';
  return os.str();
}

bool WerAccumulator::add(const std::string& id, double snr_db, const TokenSequence& ref,
                         const TokenSequence& hyp) {
  if (ref.empty()) {
    ++report_.skipped;
    return false;
  }
  UttScore s;
  s.id = id;
  s.snr_db = snr_db;
  s.snr_bucket = snr_bucket(snr_db, bucket_db_);
  s.counts = align_tokens(ref, hyp);
  s.ref_len = ref.size();
  s.wer = static_cast<double>(s.counts.errors()) / static_cast<double>(ref.size());
  report_.errors += s.counts.errors();
  report_.ref_tokens += ref.size();
  auto& b = report_.buckets[s.snr_bucket];
  b.first += s.counts.errors();
  b.second += ref.size();
  report_.utts.push_back(std::move(s));
  return true;
}

void write_wer_csv(const std::filesystem::path& path, const WerReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write WER report " + path.string());
  out << "utt_id,wer,snr_bucket\n" << std::setprecision(10);
  for (const auto& u : report.utts) out << u.id << ',' << u.wer << ',' << u.snr_bucket << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

double percentile_nearest_rank(std::vector<double> samples, double p) {
  if (samples.empty()) throw InputError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw InputError("percentile must lie in (0, 100]");
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(p / 100.0 * static_cast<double>(samples.size()) - 1e-9));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace mctt
