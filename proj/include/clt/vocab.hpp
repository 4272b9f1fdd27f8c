#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clt/common.hpp"

namespace clt {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr const char* kContinuationPrefix = "##";

// Dense token <-> id mapping with the five BERT special tokens resolved.
class Vocabulary {
 public:
  // one token per line; the line number is the id
  static Vocabulary load(const std::string& path);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }
  bool contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }
  // -1 when absent
  std::int32_t find(std::string_view token) const;
  // falls back to [UNK] when absent
  std::int32_t id_or_unk(std::string_view token) const;
  const std::string& token(std::int32_t id) const;

  std::int32_t pad_id() const { return pad_id_; }
  std::int32_t unk_id() const { return unk_id_; }
  std::int32_t cls_id() const { return cls_id_; }
  std::int32_t sep_id() const { return sep_id_; }
  std::int32_t mask_id() const { return mask_id_; }

  bool is_special(std::int32_t id) const;
  // ids eligible as random replacement tokens during corruption
  const std::vector<std::int32_t>& non_special_ids() const { return non_special_ids_; }

 private:
  void resolve_specials();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::int32_t> non_special_ids_;
  std::int32_t pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1, mask_id_ = -1;
};

}  // namespace clt
