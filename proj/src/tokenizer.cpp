#include "clt/tokenizer.hpp"

#include <cctype>

namespace clt {

namespace {

bool is_punct(unsigned char c) {
  return std::ispunct(c) != 0;
}

// byte offsets of UTF-8 codepoint starts, plus one-past-the-end
std::vector<std::size_t> codepoint_starts(std::string_view s) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  starts.push_back(s.size());
  return starts;
}

}  // namespace

std::vector<std::string> basic_tokenize(std::string_view text, bool lowercase) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(lowercase ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

std::vector<std::string> wordpiece_word(std::string_view word, const Vocabulary& vocab,
                                        std::size_t max_chars) {
  const auto starts = codepoint_starts(word);
  const std::size_t nchars = starts.size() - 1;
  if (nchars == 0) return {};
  if (nchars > max_chars) return {kUnkToken};

  std::vector<std::string> pieces;
  std::size_t begin = 0;
  while (begin < nchars) {
    std::size_t end = nchars;
    std::string match;
    while (begin < end) {
      std::string candidate(word.substr(starts[begin], starts[end] - starts[begin]));
      if (begin > 0) candidate = std::string(kContinuationPrefix) + candidate;
      if (vocab.contains(candidate)) {
        match = std::move(candidate);
        break;
      }
      --end;
    }
    if (match.empty()) return {kUnkToken};
    pieces.push_back(std::move(match));
    begin = end;
  }
  return pieces;
}

std::vector<std::string> wordpiece_tokenize(std::string_view text, const Vocabulary& vocab,
                                            std::size_t max_chars) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      auto pieces = wordpiece_word(text.substr(i, j - i), vocab, max_chars);
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
    i = j;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const Vocabulary& vocab, bool lowercase,
                                  std::size_t max_chars) {
  std::vector<std::string> out;
  for (const std::string& word : basic_tokenize(text, lowercase)) {
    auto pieces = wordpiece_word(word, vocab, max_chars);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::vector<std::int32_t> tokens_to_ids(const std::vector<std::string>& tokens,
                                        const Vocabulary& vocab) {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(vocab.id_or_unk(t));
  return ids;
}

}  // namespace clt
