#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eco/candidate_set.hpp"
#include "eco/similarity.hpp"

namespace eco {

enum class FormatViolation { too_many_periods, too_many_commas, too_few_words };

std::string_view to_string(FormatViolation v);

// Rule thresholds: a caption fails with more than two periods, more than
// three commas, or fewer than five whitespace-separated words.
inline constexpr int kMaxPeriods = 2;
inline constexpr int kMaxCommas = 3;
inline constexpr int kMinWords = 5;

struct FormatVerdict {
  bool passed = true;
  std::vector<FormatViolation> reasons;  // every violated rule, in enum order
};

FormatVerdict bad_format_filter(std::string_view raw);

struct FilterVerdict {
  std::size_t index = 0;
  bool passed_format = true;
  std::vector<FormatViolation> format_reasons;
  std::optional<bool> passed_itm;  // unset when ITM was not evaluated for this caption
};

enum class FallbackLevel { none, format_only, full_pool };

std::string_view to_string(FallbackLevel level);

struct PoolSelection {
  std::vector<std::size_t> reference_pool;  // strictly increasing, never empty
  FallbackLevel fallback_level = FallbackLevel::none;
};

struct FilterConfig {
  double keep_fraction = 0.5;
  bool format_filter = true;
  bool itm_filter = true;

  void validate() const;
};

// Number of captions kept from `eligible` captions: ceil(eligible * keep).
// A 1e-9 slack absorbs binary representation error, so 10 * 0.7 keeps 7.
std::size_t itm_keep_count(std::size_t eligible, double keep_fraction);

// The itm_keep_count(|eligible|) eligible indices with the highest ITM score,
// ties to the lower index, returned in ascending index order.
std::vector<std::size_t> itm_filter(const ScoreVector& itm_scores, std::span<const std::size_t> eligible,
                                    double keep_fraction);

struct ReferencePool {
  PoolSelection selection;
  std::vector<FilterVerdict> verdicts;  // one per candidate, in index order
};

// Format filter over all captions, then ITM top fraction over the survivors.
// Fewer than two format survivors falls back to the full candidate list;
// absent ITM scores leave the format survivors as the pool.
ReferencePool build_reference_pool(const CandidateSet& candidates, const ScoreVector* itm_scores,
                                   const FilterConfig& cfg);

}  // namespace eco
