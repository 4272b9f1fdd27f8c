#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "clt/vocab.hpp"

namespace clt {

// Splits on whitespace and breaks punctuation characters out into their own
// tokens. Lowercasing is ASCII-only and off by default; the default matches
// cased vocabularies.
std::vector<std::string> basic_tokenize(std::string_view text, bool lowercase = false);

// Greedy longest-match-first decomposition of a single word into a vocab
// prefix plus "##"-prefixed continuations. Words with no decomposition, or
// longer than max_chars (codepoints), collapse to [UNK].
std::vector<std::string> wordpiece_word(std::string_view word, const Vocabulary& vocab,
                                        std::size_t max_chars = 100);

// WordPiece over whitespace-separated, already pre-split text.
std::vector<std::string> wordpiece_tokenize(std::string_view text, const Vocabulary& vocab,
                                            std::size_t max_chars = 100);

// basic_tokenize + wordpiece in one step
std::vector<std::string> tokenize(std::string_view text, const Vocabulary& vocab,
                                  bool lowercase = false, std::size_t max_chars = 100);

std::vector<std::int32_t> tokens_to_ids(const std::vector<std::string>& tokens,
                                        const Vocabulary& vocab);

}  // namespace clt
