#include "eco/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "eco/error.hpp"
#include "eco/text_core.hpp"

namespace eco {

std::string_view to_string(SelectFrom v) { return v == SelectFrom::all ? "all" : "filtered"; }

std::string_view to_string(NormalizationScope v) {
  return v == NormalizationScope::per_image ? "per_image" : "dataset";
}

std::string_view to_string(SelectionReason v) {
  switch (v) {
    case SelectionReason::clear_margin:
      return "clear_margin";
    case SelectionReason::short_caption_swap:
      return "short_caption_swap";
    case SelectionReason::degenerate_single:
      return "degenerate_single";
  }
  return "unknown";
}

void CombinationWeights::validate() const {
  if (!std::isfinite(lambda_ensemble) || !std::isfinite(lambda_consensus)) {
    throw ValidationError("combination weights must be finite");
  }
  if (lambda_ensemble == 0.0 && lambda_consensus == 0.0) {
    throw ValidationError("combination weights must not both be zero");
  }
}

void SelectionConfig::validate() const {
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ValidationError("theta must be >= 0");
}

void PipelineConfig::validate() const {
  weights.validate();
  selection.validate();
  consensus.validate();
  filter.validate();
}

ScoreVector combine_normalized(const ScoreVector& ensemble_z, const ScoreVector& consensus_z,
                               const CombinationWeights& w) {
  if (ensemble_z.size() != consensus_z.size()) throw ValidationError("combine: length mismatch");
  if (ensemble_z.scores.empty()) throw ValidationError("combine: empty score vectors");
  ScoreVector out{"combined", std::vector<double>(ensemble_z.size())};
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.scores[i] = w.lambda_ensemble * ensemble_z.scores[i] + w.lambda_consensus * consensus_z.scores[i];
  }
  return out;
}

ScoreVector combine(const ScoreVector& ensemble, const ScoreVector& consensus, const CombinationWeights& w) {
  if (ensemble.size() != consensus.size()) throw ValidationError("combine: length mismatch");
  return combine_normalized(z_normalize(ensemble), z_normalize(consensus), w);
}

Selection short_caption_select(const ScoreVector& combined, std::span<const int> word_counts,
                               std::span<const std::size_t> eligible, const SelectionConfig& cfg) {
  if (eligible.empty()) throw ValidationError("short_caption_select: empty eligible set");
  for (std::size_t idx : eligible) {
    if (idx >= combined.size() || idx >= word_counts.size()) {
      throw ValidationError("short_caption_select: candidate " + std::to_string(idx) + " has no score");
    }
  }
  if (eligible.size() == 1) return {eligible.front(), std::nullopt, SelectionReason::degenerate_single};

  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = combined.scores[a];
    const double sb = combined.scores[b];
    if (sa != sb) return sa > sb;
    return a < b;
  };
  std::size_t top1 = eligible[0];
  std::size_t top2 = eligible[1];
  if (better(top2, top1)) std::swap(top1, top2);
  for (std::size_t k = 2; k < eligible.size(); ++k) {
    const std::size_t idx = eligible[k];
    if (better(idx, top1)) {
      top2 = top1;
      top1 = idx;
    } else if (better(idx, top2)) {
      top2 = idx;
    }
  }

  const double margin = combined.scores[top1] - combined.scores[top2];
  if (cfg.short_caption_enabled && margin < cfg.theta && word_counts[top2] < word_counts[top1]) {
    return {top2, top1, SelectionReason::short_caption_swap};
  }
  return {top1, top2, SelectionReason::clear_margin};
}

const ScoreVector* RankResult::channel(std::string_view name) const {
  for (const auto& c : channels) {
    if (c.channel == name) return &c;
  }
  return nullptr;
}

namespace {

using StatsLookup = std::function<ChannelStats(const ScoreVector&)>;

ChannelStats own_stats(const ScoreVector& s) { return channel_stats(s.scores); }

// Stage state for one image between normalization passes.
struct Work {
  RankResult result;
  std::vector<int> word_counts;
  ScoreVector consensus;
  ScoreVector ensemble;
};

void check_inputs(const ImageInput& image, const PipelineConfig& cfg) {
  const std::string& id = image.candidates.image_id;
  const std::size_t n = image.candidates.size();
  if (n == 0) throw ValidationError("image '" + id + "' has no candidate captions");
  if (image.channels.empty() && cfg.weights.lambda_ensemble != 0.0) {
    throw ValidationError("image '" + id + "' has no similarity channels");
  }
  for (const auto& c : image.channels.channels()) {
    if (c.size() != n) {
      throw ValidationError("image '" + id + "' channel '" + c.channel + "' has " + std::to_string(c.size()) +
                            " scores for " + std::to_string(n) + " captions");
    }
  }
  if (image.consensus_override && image.consensus_override->size() != n) {
    throw ValidationError("image '" + id + "' consensus channel length mismatch");
  }
}

// Filters, consensus, and surface word counts; independent of normalization.
Work prepare(const ImageInput& image, const PipelineConfig& cfg) {
  check_inputs(image, cfg);
  const CandidateSet& cands = image.candidates;
  Work w;
  w.result.image_id = cands.image_id;

  ReferencePool pool = build_reference_pool(cands, image.itm ? &*image.itm : nullptr, cfg.filter);
  w.result.verdicts = std::move(pool.verdicts);
  w.result.pool = std::move(pool.selection);

  w.word_counts.reserve(cands.size());
  for (const auto& caption : cands.captions) w.word_counts.push_back(raw_stats(caption).words);

  if (image.consensus_override) {
    w.consensus = *image.consensus_override;
    w.consensus.channel = "consensus";
  } else {
    std::vector<NGramProfile> profiles;
    profiles.reserve(cands.size());
    for (const auto& caption : cands.captions) profiles.push_back(profile_caption(caption, cfg.consensus.n_max));
    w.consensus = consensus_scores(profiles, w.result.pool.reference_pool, cfg.consensus);
  }
  return w;
}

void ensemble_stage(const ImageInput& image, Work& w, const StatsLookup& stats) {
  std::vector<ScoreVector> normalized;
  normalized.reserve(image.channels.size());
  for (const auto& c : image.channels.channels()) {
    w.result.channels.push_back(c);
    normalized.push_back(z_normalize(c, stats(c)));
    normalized.back().channel = c.channel + ".z";
  }
  if (normalized.empty()) {
    w.ensemble = ScoreVector{"ensemble", std::vector<double>(image.candidates.size(), 0.0)};
  } else {
    w.ensemble = sum_channels(normalized, "ensemble");
  }
  for (auto& z : normalized) w.result.channels.push_back(std::move(z));
}

RankResult finish_stage(const ImageInput& image, Work& w, const PipelineConfig& cfg, const StatsLookup& stats) {
  ScoreVector ensemble_z = z_normalize(w.ensemble, stats(w.ensemble));
  ensemble_z.channel = "ensemble.z";
  ScoreVector consensus_z = z_normalize(w.consensus, stats(w.consensus));
  consensus_z.channel = "consensus.z";
  ScoreVector combined = combine_normalized(ensemble_z, consensus_z, cfg.weights);

  RankResult& r = w.result;
  if (cfg.selection.select_from == SelectFrom::filtered) {
    r.selection_pool = r.pool.reference_pool;
  } else {
    r.selection_pool.resize(image.candidates.size());
    for (std::size_t i = 0; i < r.selection_pool.size(); ++i) r.selection_pool[i] = i;
  }
  const Selection sel = short_caption_select(combined, w.word_counts, r.selection_pool, cfg.selection);
  r.selected_index = sel.selected;
  r.runner_up_index = sel.runner_up;
  r.selection_reason = sel.reason;
  r.selected_caption = image.candidates.captions[sel.selected];

  r.channels.push_back(std::move(w.ensemble));
  r.channels.push_back(std::move(ensemble_z));
  r.channels.push_back(std::move(w.consensus));
  r.channels.push_back(std::move(consensus_z));
  r.channels.push_back(std::move(combined));
  return std::move(r);
}

// Runs fn(i) for i in [0, count) on `threads` workers. If any call throws,
// the exception from the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = count;
  auto body = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(std::min(workers, count));
  for (std::size_t t = 0; t < std::min(workers, count); ++t) pool.emplace_back(body);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// Population statistics per channel name over every image, reduced in input order.
class DatasetStats {
 public:
  void accumulate(const ScoreVector& s) {
    auto& acc = acc_[s.channel];
    acc.insert(acc.end(), s.scores.begin(), s.scores.end());
  }
  void finalize() {
    for (auto& [name, values] : acc_) stats_[name] = channel_stats(values);
    acc_.clear();
  }
  ChannelStats operator()(const ScoreVector& s) const { return stats_.at(s.channel); }

 private:
  std::map<std::string, std::vector<double>> acc_;
  std::map<std::string, ChannelStats> stats_;
};

}  // namespace

RankResult rank_image(const ImageInput& image, const PipelineConfig& cfg) {
  cfg.validate();
  Work w = prepare(image, cfg);
  const StatsLookup stats = own_stats;
  ensemble_stage(image, w, stats);
  return finish_stage(image, w, cfg, stats);
}

std::vector<RankResult> rank_batch(std::span<const ImageInput> images, const PipelineConfig& cfg, int threads) {
  cfg.validate();
  if (threads < 1) throw ValidationError("thread count must be >= 1");
  std::vector<RankResult> results(images.size());
  if (cfg.normalization == NormalizationScope::per_image) {
    parallel_for(images.size(), threads, [&](std::size_t i) { results[i] = rank_image(images[i], cfg); });
    return results;
  }

  std::vector<Work> work(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) { work[i] = prepare(images[i], cfg); });

  DatasetStats raw_stats_by_channel;
  for (const auto& image : images) {
    for (const auto& c : image.channels.channels()) raw_stats_by_channel.accumulate(c);
  }
  raw_stats_by_channel.finalize();
  const StatsLookup raw_lookup = [&](const ScoreVector& s) { return raw_stats_by_channel(s); };
  parallel_for(images.size(), threads, [&](std::size_t i) { ensemble_stage(images[i], work[i], raw_lookup); });

  DatasetStats fused;
  for (const auto& w : work) {
    fused.accumulate(w.ensemble);
    fused.accumulate(w.consensus);
  }
  fused.finalize();
  const StatsLookup fused_lookup = [&](const ScoreVector& s) { return fused(s); };
  parallel_for(images.size(), threads,
               [&](std::size_t i) { results[i] = finish_stage(images[i], work[i], cfg, fused_lookup); });
  return results;
}

}  // namespace eco
