#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace eco {

// Lowercase alphanumeric word tokens in source order.
using TokenSequence = std::vector<std::string>;

// Occurrence counts of every n-gram at one level, sorted by key. A key is the
// n tokens joined with single spaces; tokens never contain spaces so the
// encoding is unambiguous.
using NGramCounts = std::vector<std::pair<std::string, int>>;

struct NGramProfile {
  std::vector<NGramCounts> levels;  // levels[n - 1] holds the n-grams
  int token_length = 0;

  int n_max() const { return static_cast<int>(levels.size()); }
  const NGramCounts& level(int n) const { return levels.at(static_cast<std::size_t>(n - 1)); }

  // Occurrences of `key` at level n, 0 when absent.
  int count(int n, std::string_view key) const;
};

struct RawStats {
  int periods = 0;
  int commas = 0;
  int words = 0;

  friend bool operator==(const RawStats&, const RawStats&) = default;
};

// Lowercases `raw`, turns every code point that is not a Unicode letter or
// digit into a separator, and splits. Malformed UTF-8 bytes act as separators.
TokenSequence tokenize(std::string_view raw);

std::string join_ngram(std::span<const std::string> tokens);

// Sliding-window n-grams for n = 1..n_max with exact multiplicity.
// Throws ValidationError if n_max < 1.
NGramProfile extract_ngrams(const TokenSequence& tokens, int n_max);

// Convenience: extract_ngrams(tokenize(raw), n_max).
NGramProfile profile_caption(std::string_view raw, int n_max);

// Surface statistics of the raw caption: '.' and ',' counts, and the number
// of whitespace-separated fragments before any punctuation stripping.
RawStats raw_stats(std::string_view raw);

}  // namespace eco
