#include "eco/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "eco/error.hpp"

namespace eco {

namespace {

template <typename T>
CosineResult cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = static_cast<double>(a[i]);
    const auto y = static_cast<double>(b[i]);
    dot += x * y;
    norm_a += x * x;
    norm_b += y * y;
  }
  if (norm_a == 0.0 || norm_b == 0.0) return {0.0, true};
  const double value = dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
  return {std::clamp(value, -1.0, 1.0), false};
}

}  // namespace

void ChannelSet::add(ScoreVector channel) {
  if (find(channel.channel) != nullptr) {
    throw ValidationError("duplicate channel '" + channel.channel + "'");
  }
  if (!channels_.empty() && channel.size() != candidate_count()) {
    throw ValidationError("channel '" + channel.channel + "' has " + std::to_string(channel.size()) +
                          " scores, expected " + std::to_string(candidate_count()));
  }
  for (double v : channel.scores) {
    if (!std::isfinite(v)) throw ValidationError("channel '" + channel.channel + "' has a non-finite score");
  }
  auto pos = std::lower_bound(channels_.begin(), channels_.end(), channel.channel,
                              [](const ScoreVector& c, const std::string& name) { return c.channel < name; });
  channels_.insert(pos, std::move(channel));
}

const ScoreVector* ChannelSet::find(std::string_view name) const {
  for (const auto& c : channels_) {
    if (c.channel == name) return &c;
  }
  return nullptr;
}

CosineResult cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }
CosineResult cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

ChannelStats channel_stats(std::span<const double> values) {
  if (values.empty()) throw ValidationError("cannot normalize an empty score vector");
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

ScoreVector z_normalize(const ScoreVector& s, const ChannelStats& stats) {
  if (s.scores.empty()) throw ValidationError("cannot normalize an empty score vector");
  ScoreVector out{s.channel, std::vector<double>(s.size(), 0.0)};
  if (stats.stddev < kDegenerateStddev) return out;
  for (std::size_t i = 0; i < s.size(); ++i) out.scores[i] = (s.scores[i] - stats.mean) / stats.stddev;
  return out;
}

ScoreVector z_normalize(const ScoreVector& s) { return z_normalize(s, channel_stats(s.scores)); }

ScoreVector sum_channels(std::span<const ScoreVector> channels, std::string name) {
  if (channels.empty()) throw ValidationError("ensemble needs at least one channel");
  ScoreVector out{std::move(name), std::vector<double>(channels.front().size(), 0.0)};
  for (const auto& c : channels) {
    if (c.size() != out.size()) throw ValidationError("channel '" + c.channel + "' length mismatch");
    for (std::size_t i = 0; i < c.size(); ++i) out.scores[i] += c.scores[i];
  }
  return out;
}

ScoreVector ensemble(const ChannelSet& channels) {
  std::vector<ScoreVector> normalized;
  normalized.reserve(channels.size());
  for (const auto& c : channels.channels()) normalized.push_back(z_normalize(c));
  return sum_channels(normalized, "ensemble");
}

}  // namespace eco
