#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eco {

// Scores of one image's candidates under one named channel.
struct ScoreVector {
  std::string channel;
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
};

// Named channels for one image, kept sorted by name so every traversal
// (and every floating-point sum over channels) has a fixed order.
class ChannelSet {
 public:
  // Throws ValidationError on a duplicate name, a length mismatch with the
  // channels already present, or a non-finite score.
  void add(ScoreVector channel);

  const std::vector<ScoreVector>& channels() const { return channels_; }
  const ScoreVector* find(std::string_view name) const;
  bool empty() const { return channels_.empty(); }
  std::size_t size() const { return channels_.size(); }
  std::size_t candidate_count() const { return channels_.empty() ? 0 : channels_.front().size(); }

 private:
  std::vector<ScoreVector> channels_;
};

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // one side had zero norm; value is 0 by definition
};

// Plain cosine in [-1, 1], computed in double precision. Negative values are
// kept. Throws ValidationError on a dimension mismatch.
CosineResult cosine(std::span<const double> a, std::span<const double> b);
CosineResult cosine(std::span<const float> a, std::span<const float> b);

struct ChannelStats {
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by N)
};

// Below this population standard deviation a channel is treated as constant
// and normalizes to all zeros.
inline constexpr double kDegenerateStddev = 1e-12;

ChannelStats channel_stats(std::span<const double> values);

// (s - mean) / std with population std over `s` itself.
// Throws ValidationError on an empty vector.
ScoreVector z_normalize(const ScoreVector& s);

// Same transform with externally supplied statistics (dataset-wide scope).
ScoreVector z_normalize(const ScoreVector& s, const ChannelStats& stats);

// Element-wise sum of the given vectors. Throws on length mismatch or empty input.
ScoreVector sum_channels(std::span<const ScoreVector> channels, std::string name);

// Sum of per-channel z-scores, named "ensemble".
ScoreVector ensemble(const ChannelSet& channels);

}  // namespace eco
