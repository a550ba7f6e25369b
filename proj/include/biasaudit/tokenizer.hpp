#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biasaudit {

/// Word-level tokenizer used for prefix construction and lexicon counting.
///
/// Text is split on whitespace; leading and trailing punctuation of each
/// whitespace chunk become single-character tokens; English clitics
/// ('s, n't, 'll, 're, 've, 'm, 'd, with either ASCII or typographic
/// apostrophe) are split off the word they close. Case is preserved.
/// Typographic quotes, dashes and the ellipsis count as punctuation.
std::vector<std::string> tokenize(std::string_view text);

/// True when every character of the token is punctuation.
bool is_punctuation_token(std::string_view token);

/// True for the clitic suffixes the tokenizer splits off ("'s", "n't", ...).
bool is_clitic_token(std::string_view token);

/// Joins tokens with single spaces, except that punctuation-only and clitic
/// tokens attach to the preceding token. tokenize(detokenize(tokenize(x)))
/// equals tokenize(x).
std::string detokenize(std::span<const std::string> tokens);

/// ASCII lowercase copy.
std::string to_lower(std::string_view s);

}  // namespace biasaudit
