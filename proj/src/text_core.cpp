#include "eco/text_core.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>

#include "eco/error.hpp"

namespace eco {

namespace {

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

void append_utf8(std::string& out, UChar32 cp) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, cp, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

int NGramProfile::count(int n, std::string_view key) const {
  if (n < 1 || n > n_max()) return 0;
  const NGramCounts& counts = level(n);
  auto it = std::lower_bound(counts.begin(), counts.end(), key,
                             [](const auto& entry, std::string_view k) { return entry.first < k; });
  if (it == counts.end() || it->first != key) return 0;
  return it->second;
}

TokenSequence tokenize(std::string_view raw) {
  TokenSequence tokens;
  std::string current;
  const auto* bytes = reinterpret_cast<const uint8_t*>(raw.data());
  const auto length = static_cast<int32_t>(raw.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 cp = 0;
    if (bytes[i] < 0x80) {
      cp = bytes[i++];
      // ASCII fast path.
      if ((cp >= 'a' && cp <= 'z') || (cp >= '0' && cp <= '9')) {
        current.push_back(static_cast<char>(cp));
        continue;
      }
      if (cp >= 'A' && cp <= 'Z') {
        current.push_back(static_cast<char>(cp - 'A' + 'a'));
        continue;
      }
    } else {
      U8_NEXT(bytes, i, length, cp);
      if (cp >= 0 && u_isalnum(cp)) {
        append_utf8(current, u_tolower(cp));
        continue;
      }
    }
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string join_ngram(std::span<const std::string> tokens) {
  std::string key;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) key.push_back(' ');
    key += tokens[i];
  }
  return key;
}

NGramProfile extract_ngrams(const TokenSequence& tokens, int n_max) {
  if (n_max < 1) throw ValidationError("extract_ngrams: n_max must be >= 1");
  NGramProfile profile;
  profile.token_length = static_cast<int>(tokens.size());
  profile.levels.resize(static_cast<std::size_t>(n_max));
  const std::span<const std::string> all(tokens);
  std::vector<std::string> keys;
  for (int n = 1; n <= n_max; ++n) {
    keys.clear();
    const auto width = static_cast<std::size_t>(n);
    for (std::size_t start = 0; start + width <= tokens.size(); ++start) {
      keys.push_back(join_ngram(all.subspan(start, width)));
    }
    std::sort(keys.begin(), keys.end());
    NGramCounts& counts = profile.levels[width - 1];
    for (auto& key : keys) {
      if (!counts.empty() && counts.back().first == key) {
        ++counts.back().second;
      } else {
        counts.emplace_back(std::move(key), 1);
      }
    }
  }
  return profile;
}

NGramProfile profile_caption(std::string_view raw, int n_max) {
  return extract_ngrams(tokenize(raw), n_max);
}

RawStats raw_stats(std::string_view raw) {
  RawStats stats;
  bool in_word = false;
  for (char c : raw) {
    if (c == '.') ++stats.periods;
    if (c == ',') ++stats.commas;
    if (is_ascii_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++stats.words;
    }
  }
  return stats;
}

}  // namespace eco
