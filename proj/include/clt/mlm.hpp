#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clt/encode.hpp"
#include "clt/rng.hpp"
#include "clt/vocab.hpp"

namespace clt {

struct MlmConfig {
  double rate = 0.15;         // selection probability per content position
  double mask_frac = 0.8;     // of selected: replaced by [MASK]
  double random_frac = 0.1;   // of selected: replaced by a random non-special token
};

struct MlmRow {
  std::vector<std::int32_t> input_ids;  // corrupted
  std::vector<std::int32_t> labels;     // original ids at selected positions, kIgnoreIndex elsewhere
};

struct MlmBatch {
  std::int64_t batch = 0;
  std::int64_t len = 0;
  std::vector<std::int32_t> input_ids;       // [B, L]
  std::vector<std::int32_t> labels;          // [B, L]
  std::vector<std::uint8_t> attention_mask;  // [B, L]
  std::vector<std::int32_t> segment_ids;     // [B, L]
};

// Each non-special, non-pad position is independently selected with
// probability cfg.rate; selected positions are replaced by [MASK], a random
// non-special token, or kept, in proportions mask_frac / random_frac /
// remainder. Labels carry the original id at selected positions only.
MlmRow apply_mlm_masking(const EncodedSequence& seq, const Vocabulary& vocab, const MlmConfig& cfg,
                         Rng& rng);

// Shuffled, fixed-length MLM batches over a newline-delimited corpus. The
// epoch order and every corruption draw are pure functions of
// (seed, epoch, position), so any point of a run can be reproduced exactly.
class CorpusBatcher {
 public:
  CorpusBatcher(const std::string& corpus_path, const Vocabulary& vocab, int max_len,
                int batch_size, std::uint64_t seed, MlmConfig mlm = {}, bool lowercase = false);

  std::size_t num_lines() const { return rows_.size(); }
  std::int64_t batches_per_epoch() const;
  std::vector<std::size_t> epoch_order(std::int64_t epoch) const;
  MlmBatch batch(std::int64_t epoch, std::int64_t index) const;

 private:
  const Vocabulary* vocab_;
  int max_len_;
  int batch_size_;
  std::uint64_t seed_;
  MlmConfig mlm_;
  std::vector<EncodedSequence> rows_;
};

}  // namespace clt
