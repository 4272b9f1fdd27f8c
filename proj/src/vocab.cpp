#include "clt/vocab.hpp"

#include <fstream>

namespace clt {

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("vocab: cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.ids_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    auto [it, inserted] = v.ids_.emplace(v.tokens_[i], static_cast<std::int32_t>(i));
    if (!inserted) {
      throw ValueError("vocab: duplicate token '" + v.tokens_[i] + "' at line " +
                       std::to_string(i + 1) + " (first at line " + std::to_string(it->second + 1) +
                       ")");
    }
  }
  v.resolve_specials();
  return v;
}

void Vocabulary::resolve_specials() {
  auto need = [&](const char* tok) {
    auto it = ids_.find(tok);
    if (it == ids_.end()) throw ValueError(std::string("vocab: missing special token ") + tok);
    return it->second;
  };
  pad_id_ = need(kPadToken);
  unk_id_ = need(kUnkToken);
  cls_id_ = need(kClsToken);
  sep_id_ = need(kSepToken);
  mask_id_ = need(kMaskToken);
  non_special_ids_.clear();
  for (std::int32_t i = 0; i < size(); ++i) {
    if (!is_special(i)) non_special_ids_.push_back(i);
  }
}

std::int32_t Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

std::int32_t Vocabulary::id_or_unk(std::string_view token) const {
  std::int32_t id = find(token);
  return id < 0 ? unk_id_ : id;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || id >= size()) {
    throw ValueError("vocab: id " + std::to_string(id) + " out of range [0, " +
                     std::to_string(size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::is_special(std::int32_t id) const {
  return id == pad_id_ || id == unk_id_ || id == cls_id_ || id == sep_id_ || id == mask_id_;
}

}  // namespace clt
