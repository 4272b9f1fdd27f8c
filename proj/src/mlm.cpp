#include "clt/mlm.hpp"

#include <fstream>

#include "clt/tokenizer.hpp"

namespace clt {

MlmRow apply_mlm_masking(const EncodedSequence& seq, const Vocabulary& vocab, const MlmConfig& cfg,
                         Rng& rng) {
  if (cfg.rate < 0.0 || cfg.rate > 1.0) throw ValueError("mlm: rate must be in [0, 1]");
  if (cfg.mask_frac + cfg.random_frac > 1.0 + 1e-12) {
    throw ValueError("mlm: mask_frac + random_frac must be <= 1");
  }
  MlmRow row;
  row.input_ids = seq.ids;
  row.labels.assign(seq.ids.size(), kIgnoreIndex);
  const auto& pool = vocab.non_special_ids();
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (!seq.attention_mask[i]) continue;
    const std::int32_t original = seq.ids[i];
    if (vocab.is_special(original)) continue;
    if (rng.uniform() >= cfg.rate) continue;
    row.labels[i] = original;
    const double u = rng.uniform();
    if (u < cfg.mask_frac) {
      row.input_ids[i] = vocab.mask_id();
    } else if (u < cfg.mask_frac + cfg.random_frac) {
      row.input_ids[i] = pool[static_cast<std::size_t>(rng.uniform_int(
          static_cast<std::int64_t>(pool.size())))];
    }
    // otherwise kept as-is, still labeled
  }
  return row;
}

CorpusBatcher::CorpusBatcher(const std::string& corpus_path, const Vocabulary& vocab, int max_len,
                             int batch_size, std::uint64_t seed, MlmConfig mlm, bool lowercase)
    : vocab_(&vocab), max_len_(max_len), batch_size_(batch_size), seed_(seed), mlm_(mlm) {
  std::ifstream in(corpus_path);
  if (!in) throw IoError("corpus: cannot open " + corpus_path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tokens = tokenize(line, vocab, lowercase);
    rows_.push_back(encode(tokens, nullptr, vocab, max_len));
  }
  if (rows_.empty()) throw ValueError("corpus: " + corpus_path + " contains no usable lines");
}

std::int64_t CorpusBatcher::batches_per_epoch() const {
  const std::int64_t n = static_cast<std::int64_t>(rows_.size());
  return (n + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> CorpusBatcher::epoch_order(std::int64_t epoch) const {
  std::vector<std::size_t> order(rows_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix64(seed_, 0x5u, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

MlmBatch CorpusBatcher::batch(std::int64_t epoch, std::int64_t index) const {
  const std::int64_t nb = batches_per_epoch();
  if (index < 0 || index >= nb) {
    throw ValueError("corpus: batch index " + std::to_string(index) + " out of range [0, " +
                     std::to_string(nb) + ")");
  }
  const auto order = epoch_order(epoch);
  const std::int64_t begin = index * batch_size_;
  const std::int64_t end =
      std::min<std::int64_t>(begin + batch_size_, static_cast<std::int64_t>(rows_.size()));
  MlmBatch out;
  out.batch = end - begin;
  out.len = max_len_;
  for (std::int64_t r = begin; r < end; ++r) {
    const EncodedSequence& seq = rows_[order[static_cast<std::size_t>(r)]];
    Rng rng(mix64(seed_, static_cast<std::uint64_t>(epoch) + 1, static_cast<std::uint64_t>(r)));
    MlmRow row = apply_mlm_masking(seq, *vocab_, mlm_, rng);
    out.input_ids.insert(out.input_ids.end(), row.input_ids.begin(), row.input_ids.end());
    out.labels.insert(out.labels.end(), row.labels.begin(), row.labels.end());
    out.attention_mask.insert(out.attention_mask.end(), seq.attention_mask.begin(),
                              seq.attention_mask.end());
    out.segment_ids.insert(out.segment_ids.end(), seq.segment_ids.begin(), seq.segment_ids.end());
  }
  return out;
}

}  // namespace clt
