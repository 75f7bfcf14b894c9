#include "eco/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eco/error.hpp"
#include "eco/text_core.hpp"

namespace eco {

std::string_view to_string(FormatViolation v) {
  switch (v) {
    case FormatViolation::too_many_periods:
      return "too_many_periods";
    case FormatViolation::too_many_commas:
      return "too_many_commas";
    case FormatViolation::too_few_words:
      return "too_few_words";
  }
  return "unknown";
}

std::string_view to_string(FallbackLevel level) {
  switch (level) {
    case FallbackLevel::none:
      return "none";
    case FallbackLevel::format_only:
      return "format_only";
    case FallbackLevel::full_pool:
      return "full_pool";
  }
  return "unknown";
}

void FilterConfig::validate() const {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ValidationError("keep_fraction must be in (0, 1]");
  }
}

FormatVerdict bad_format_filter(std::string_view raw) {
  const RawStats stats = raw_stats(raw);
  FormatVerdict verdict;
  if (stats.periods > kMaxPeriods) verdict.reasons.push_back(FormatViolation::too_many_periods);
  if (stats.commas > kMaxCommas) verdict.reasons.push_back(FormatViolation::too_many_commas);
  if (stats.words < kMinWords) verdict.reasons.push_back(FormatViolation::too_few_words);
  verdict.passed = verdict.reasons.empty();
  return verdict;
}

std::size_t itm_keep_count(std::size_t eligible, double keep_fraction) {
  if (eligible == 0) return 0;
  const double raw = std::ceil(static_cast<double>(eligible) * keep_fraction - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, eligible);
}

std::vector<std::size_t> itm_filter(const ScoreVector& itm_scores, std::span<const std::size_t> eligible,
                                    double keep_fraction) {
  if (eligible.empty()) throw ValidationError("itm_filter: empty eligible set");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ValidationError("keep_fraction must be in (0, 1]");
  for (std::size_t idx : eligible) {
    if (idx >= itm_scores.size()) {
      throw ValidationError("itm_filter: no ITM score for candidate " + std::to_string(idx));
    }
  }
  std::vector<std::size_t> order(eligible.begin(), eligible.end());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = itm_scores.scores[a];
    const double sb = itm_scores.scores[b];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  order.resize(itm_keep_count(eligible.size(), keep_fraction));
  std::sort(order.begin(), order.end());
  return order;
}

ReferencePool build_reference_pool(const CandidateSet& candidates, const ScoreVector* itm_scores,
                                   const FilterConfig& cfg) {
  cfg.validate();
  const std::size_t n = candidates.size();
  if (n == 0) throw ValidationError("image '" + candidates.image_id + "' has no candidate captions");
  ReferencePool result;
  result.verdicts.resize(n);

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < n; ++i) {
    FilterVerdict& v = result.verdicts[i];
    v.index = i;
    if (cfg.format_filter) {
      FormatVerdict f = bad_format_filter(candidates.captions[i]);
      v.passed_format = f.passed;
      v.format_reasons = std::move(f.reasons);
    }
    if (v.passed_format) survivors.push_back(i);
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});

  FallbackLevel level = FallbackLevel::none;
  std::vector<std::size_t> eligible = survivors;
  if (cfg.format_filter && survivors.size() < 2) {
    level = FallbackLevel::full_pool;
    eligible = all;
  }

  const bool use_itm = cfg.itm_filter && itm_scores != nullptr;
  if (cfg.itm_filter && itm_scores == nullptr && level == FallbackLevel::none) {
    level = cfg.format_filter ? FallbackLevel::format_only : FallbackLevel::full_pool;
  }

  if (use_itm) {
    if (itm_scores->size() != n) {
      throw ValidationError("image '" + candidates.image_id + "': itm channel has " +
                            std::to_string(itm_scores->size()) + " scores for " + std::to_string(n) + " captions");
    }
    std::vector<std::size_t> kept = itm_filter(*itm_scores, eligible, cfg.keep_fraction);
    for (std::size_t idx : eligible) {
      FilterVerdict& v = result.verdicts[idx];
      if (!v.passed_format) continue;
      v.passed_itm = std::binary_search(kept.begin(), kept.end(), idx);
    }
    result.selection.reference_pool = std::move(kept);
  } else {
    result.selection.reference_pool = std::move(eligible);
  }
  result.selection.fallback_level = level;
  return result;
}

}  // namespace eco
