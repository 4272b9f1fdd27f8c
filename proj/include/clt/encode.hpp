#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clt/vocab.hpp"

namespace clt {

// Fixed-length model input: [CLS] a [SEP] (b [SEP]) right-padded with [PAD].
struct EncodedSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> attention_mask;  // 1 on the content prefix
  std::vector<std::int32_t> segment_ids;     // 0 for segment a, 1 for segment b
};

// Pairs are truncated longest-segment-first until they fit; both segments
// stay nonempty. max_len must be >= 3 for single sequences, >= 5 for pairs.
EncodedSequence encode(const std::vector<std::string>& tokens_a,
                       const std::vector<std::string>* tokens_b, const Vocabulary& vocab,
                       int max_len);

}  // namespace clt
