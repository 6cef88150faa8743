#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Shared answer normalization used by accuracy, String-EM, hit rate and the
/// preference labeler: lowercase, strip punctuation, drop the articles
/// a/an/the, collapse whitespace to single spaces.
std::string normalize_answer(std::string_view text);

/// True iff any normalized alias is a substring of the normalized text.
bool contains_normalized(std::string_view text, const std::vector<std::string>& aliases);

/// Rouge-L tokenization: lowercase, strip punctuation, whitespace split.
/// Articles are kept; they are ordinary tokens for LCS purposes.
std::vector<std::string> rouge_tokens(std::string_view text);

/// Index tokenization: lowercase, split on non-alphanumeric runs.
/// No stemming, no stopword removal.
std::vector<std::string> bm25_tokenize(std::string_view text);

std::string trim(std::string_view text);

std::string to_lower(std::string_view text);

}  // namespace forge
