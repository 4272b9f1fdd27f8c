#include "clt/encode.hpp"

namespace clt {

EncodedSequence encode(const std::vector<std::string>& tokens_a,
                       const std::vector<std::string>* tokens_b, const Vocabulary& vocab,
                       int max_len) {
  const bool pair = tokens_b != nullptr;
  const int min_len = pair ? 5 : 3;
  if (max_len < min_len) {
    throw ValueError("encode: max_len " + std::to_string(max_len) + " below minimum " +
                     std::to_string(min_len));
  }
  std::vector<std::int32_t> a;
  for (const auto& t : tokens_a) a.push_back(vocab.id_or_unk(t));
  std::vector<std::int32_t> b;
  if (pair)
    for (const auto& t : *tokens_b) b.push_back(vocab.id_or_unk(t));

  const std::size_t budget = static_cast<std::size_t>(max_len) - (pair ? 3 : 2);
  while (a.size() + b.size() > budget) {
    if (pair && b.size() > a.size() && b.size() > 1) {
      b.pop_back();
    } else if (a.size() > 1 || !pair) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }

  EncodedSequence seq;
  seq.ids.reserve(static_cast<std::size_t>(max_len));
  seq.ids.push_back(vocab.cls_id());
  seq.segment_ids.assign(1, 0);
  for (std::int32_t id : a) {
    seq.ids.push_back(id);
    seq.segment_ids.push_back(0);
  }
  seq.ids.push_back(vocab.sep_id());
  seq.segment_ids.push_back(0);
  if (pair) {
    for (std::int32_t id : b) {
      seq.ids.push_back(id);
      seq.segment_ids.push_back(1);
    }
    seq.ids.push_back(vocab.sep_id());
    seq.segment_ids.push_back(1);
  }
  seq.attention_mask.assign(seq.ids.size(), 1);
  while (static_cast<int>(seq.ids.size()) < max_len) {
    seq.ids.push_back(vocab.pad_id());
    seq.attention_mask.push_back(0);
    seq.segment_ids.push_back(0);
  }
  return seq;
}

}  // namespace clt
