#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mctt/vocab.h"

namespace mctt {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t hits = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

// Full Levenshtein table with a backtrace that splits the distance into
// substitutions, deletions and insertions.
EditCounts align_tokens(const TokenSequence& ref, const TokenSequence& hyp);

// Distance only, two rolling rows. Kept separate so the two can check
// each other.
std::size_t edit_distance(const TokenSequence& ref, const TokenSequence& hyp);

// (S + D + I) / N; throws InputError on an empty reference.
double word_error_rate(const TokenSequence& ref, const TokenSequence& hyp);

// 100 (base - new) / base. Negative means the new system is worse.
double werr(double wer_base, double wer_new);

struct UttScore {
  std::string id;
  double snr_db = 0.0;
  std::string snr_bucket;
  EditCounts counts;
  std::size_t ref_len = 0;
  double wer = 0.0;
};

struct WerReport {
  std::vector<UttScore> utts;
  std::size_t errors = 0;
  std::size_t ref_tokens = 0;
  std::size_t skipped = 0;  // utterances with empty references
  std::map<std::string, std::pair<std::size_t, std::size_t>> buckets;  // errors, tokens

  double wer() const;
  double bucket_wer(const std::string& bucket) const;
};

// Buckets of width bucket_db: "[lo,hi)".
std::string snr_bucket(double snr_db, double bucket_db = 5.0);

class WerAccumulator {
 public:
  explicit WerAccumulator(double bucket_db = 5.0) : bucket_db_(bucket_db) {}
  // Returns false (and counts the utterance as skipped) on an empty reference.
  bool add(const std::string& id, double snr_db, const TokenSequence& ref,
           const TokenSequence& hyp);
  const WerReport& report() const { return report_; }

 private:
  double bucket_db_;
  WerReport report_;
};

// utt_id,wer,snr_bucket rows.
void write_wer_csv(const std::filesystem::path& path, const WerReport& report);

// Nearest-rank percentile: the ceil(p / 100 * n)-th smallest sample.
double percentile_nearest_rank(std::vector<double> samples, double p);

}  // namespace mctt
