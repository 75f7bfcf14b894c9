#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eco/candidate_set.hpp"
#include "eco/consensus.hpp"
#include "eco/filtering.hpp"
#include "eco/similarity.hpp"

namespace eco {

// Weights of the final linear combination of the two normalized scores.
struct CombinationWeights {
  double lambda_ensemble = 3.52;
  double lambda_consensus = 1.0;

  void validate() const;
};

enum class SelectFrom { all, filtered };
enum class NormalizationScope { per_image, dataset };
enum class SelectionReason { clear_margin, short_caption_swap, degenerate_single };

std::string_view to_string(SelectFrom v);
std::string_view to_string(NormalizationScope v);
std::string_view to_string(SelectionReason v);

struct SelectionConfig {
  double theta = 0.39;  // on the combined-score scale of the configured weights
  SelectFrom select_from = SelectFrom::all;
  bool short_caption_enabled = true;

  void validate() const;
};

struct PipelineConfig {
  CombinationWeights weights;
  SelectionConfig selection;
  ConsensusConfig consensus;
  FilterConfig filter;
  NormalizationScope normalization = NormalizationScope::per_image;

  void validate() const;
};

struct Selection {
  std::size_t selected = 0;
  std::optional<std::size_t> runner_up;
  SelectionReason reason = SelectionReason::degenerate_single;
};

// z-normalizes both inputs and returns lambda_e * ens' + lambda_c * cons'.
ScoreVector combine(const ScoreVector& ensemble, const ScoreVector& consensus, const CombinationWeights& w);

// Weighted sum of already-normalized inputs.
ScoreVector combine_normalized(const ScoreVector& ensemble_z, const ScoreVector& consensus_z,
                               const CombinationWeights& w);

// Picks the top eligible caption by combined score (ties to the lower index).
// When the top two are closer than theta, the one with fewer raw words wins;
// equal word counts keep the top one.
Selection short_caption_select(const ScoreVector& combined, std::span<const int> word_counts,
                               std::span<const std::size_t> eligible, const SelectionConfig& cfg);

// Everything needed to rank one image.
struct ImageInput {
  CandidateSet candidates;
  ChannelSet channels;                          // similarity channels, one per model
  std::optional<ScoreVector> itm;               // higher is a better match
  std::optional<ScoreVector> consensus_override;  // precomputed consensus channel
};

struct RankResult {
  std::string image_id;
  std::vector<FilterVerdict> verdicts;
  PoolSelection pool;
  std::vector<std::size_t> selection_pool;
  // Raw channels, their normalized forms (suffix ".z"), then ensemble,
  // ensemble.z, consensus, consensus.z, combined.
  std::vector<ScoreVector> channels;
  std::size_t selected_index = 0;
  std::string selected_caption;
  std::optional<std::size_t> runner_up_index;
  SelectionReason selection_reason = SelectionReason::degenerate_single;

  const ScoreVector* channel(std::string_view name) const;
};

// Throws ValidationError on zero candidates, missing channels, or channel
// length mismatches. Always uses per-image normalization.
RankResult rank_image(const ImageInput& image, const PipelineConfig& cfg);

// Ranks every image on `threads` workers (>= 1). Results come back in input
// order and do not depend on the thread count. Honors cfg.normalization.
std::vector<RankResult> rank_batch(std::span<const ImageInput> images, const PipelineConfig& cfg, int threads);

}  // namespace eco
