#include "eco/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "eco/error.hpp"

namespace eco {

void ConsensusConfig::validate() const {
  if (n_max < 1) throw ValidationError("consensus: n_max must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("consensus: sigma must be > 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("consensus: scale must be > 0");
  if (idf_fallback_df < 1) throw ValidationError("consensus: idf_fallback_df must be >= 1");
}

DocumentFrequencies::DocumentFrequencies(int n_max, int pool_size)
    : df_by_n_(static_cast<std::size_t>(n_max)), pool_size_(pool_size) {}

int DocumentFrequencies::df(int n, const std::string& ngram) const {
  if (n < 1 || n > n_max()) return 0;
  const auto& table = level(n);
  auto it = table.find(ngram);
  return it == table.end() ? 0 : it->second;
}

double DocumentFrequencies::idf(int n, const std::string& ngram, int fallback_df) const {
  int d = df(n, ngram);
  // Clamped so idf stays non-negative even for an oversized fallback.
  if (d == 0) d = std::min(fallback_df, pool_size_);
  return std::log(static_cast<double>(pool_size_) / static_cast<double>(d));
}

void DocumentFrequencies::add_document(const NGramProfile& document) {
  const int levels = std::min(n_max(), document.n_max());
  for (int n = 1; n <= levels; ++n) {
    auto& table = df_by_n_[static_cast<std::size_t>(n - 1)];
    // Profile levels hold distinct keys, so each counts once.
    for (const auto& [key, count] : document.level(n)) ++table[key];
  }
}

void DocumentFrequencies::add_document(std::span<const NGramProfile> document) {
  for (int n = 1; n <= n_max(); ++n) {
    std::unordered_set<std::string> seen;
    for (const auto& caption : document) {
      if (n > caption.n_max()) continue;
      for (const auto& entry : caption.level(n)) seen.insert(entry.first);
    }
    auto& table = df_by_n_[static_cast<std::size_t>(n - 1)];
    for (const auto& key : seen) ++table[key];
  }
}

DocumentFrequencies compute_df(std::span<const NGramProfile> pool, int n_max) {
  if (pool.empty()) throw ValidationError("compute_df: empty pool");
  DocumentFrequencies df(n_max, static_cast<int>(pool.size()));
  for (const auto& p : pool) df.add_document(p);
  return df;
}

DocumentFrequencies compute_df(std::span<const NGramProfile> profiles, std::span<const std::size_t> members,
                               int n_max) {
  if (members.empty()) throw ValidationError("compute_df: empty pool");
  DocumentFrequencies df(n_max, static_cast<int>(members.size()));
  for (std::size_t m : members) df.add_document(profiles[m]);
  return df;
}

TfIdfVector::TfIdfVector(const NGramProfile& profile, const DocumentFrequencies& df, const ConsensusConfig& cfg)
    : profile_(&profile) {
  if (profile.n_max() < cfg.n_max) {
    throw ValidationError("profile has " + std::to_string(profile.n_max()) + " n-gram levels, config needs " +
                          std::to_string(cfg.n_max));
  }
  weights_.resize(static_cast<std::size_t>(cfg.n_max));
  norms_.assign(static_cast<std::size_t>(cfg.n_max), 0.0);
  for (int n = 1; n <= cfg.n_max; ++n) {
    auto& w = weights_[static_cast<std::size_t>(n - 1)];
    w.reserve(profile.level(n).size());
    double sq = 0.0;
    for (const auto& [key, count] : profile.level(n)) {
      const double weight = static_cast<double>(count) * df.idf(n, key, cfg.idf_fallback_df);
      w.push_back(weight);
      sq += weight * weight;
    }
    norms_[static_cast<std::size_t>(n - 1)] = std::sqrt(sq);
  }
}

double cider_d_pair(const TfIdfVector& candidate, const TfIdfVector& reference, const ConsensusConfig& cfg) {
  const double gap = static_cast<double>(candidate.profile().token_length - reference.profile().token_length);
  const double penalty = std::exp(-(gap * gap) / (2.0 * cfg.sigma * cfg.sigma));
  double total = 0.0;
  for (int n = 1; n <= cfg.n_max; ++n) {
    const double denom = candidate.norm(n) * reference.norm(n);
    if (denom == 0.0) continue;
    const NGramCounts& c_keys = candidate.profile().level(n);
    const NGramCounts& r_keys = reference.profile().level(n);
    const auto c_w = candidate.weights(n);
    const auto r_w = reference.weights(n);
    // Both levels are sorted by key: merge-join the shared n-grams.
    // With a common idf, min(h_c, h_r) * h_r * idf^2 == min(w_c, w_r) * w_r.
    double dot = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < c_keys.size() && j < r_keys.size()) {
      const int cmp = c_keys[i].first.compare(r_keys[j].first);
      if (cmp < 0) {
        ++i;
      } else if (cmp > 0) {
        ++j;
      } else {
        dot += std::min(c_w[i], r_w[j]) * r_w[j];
        ++i;
        ++j;
      }
    }
    total += penalty * (dot / denom);
  }
  return total / static_cast<double>(cfg.n_max);
}

double cider_d(const NGramProfile& candidate, std::span<const NGramProfile> refs, const DocumentFrequencies& df,
               const ConsensusConfig& cfg) {
  cfg.validate();
  if (refs.empty()) throw ValidationError("cider_d: empty reference list");
  const TfIdfVector cand(candidate, df, cfg);
  double sum = 0.0;
  for (const auto& r : refs) sum += cider_d_pair(cand, TfIdfVector(r, df, cfg), cfg);
  return cfg.scale * sum / static_cast<double>(refs.size());
}

ScoreVector consensus_scores(std::span<const NGramProfile> candidates, std::span<const std::size_t> reference_pool,
                             const ConsensusConfig& cfg) {
  cfg.validate();
  if (candidates.empty()) throw ValidationError("consensus_scores: no candidates");
  if (reference_pool.empty()) throw ValidationError("consensus_scores: empty reference pool");
  for (std::size_t m : reference_pool) {
    if (m >= candidates.size()) throw ValidationError("consensus_scores: reference index out of range");
  }
  const DocumentFrequencies df = compute_df(candidates, reference_pool, cfg.n_max);

  std::vector<TfIdfVector> vectors;
  vectors.reserve(candidates.size());
  for (const auto& c : candidates) vectors.emplace_back(c, df, cfg);

  ScoreVector out{"consensus", std::vector<double>(candidates.size(), 0.0)};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double sum = 0.0;
    std::size_t refs = 0;
    for (std::size_t m : reference_pool) {
      if (m == i) continue;
      sum += cider_d_pair(vectors[i], vectors[m], cfg);
      ++refs;
    }
    if (refs > 0) out.scores[i] = cfg.scale * sum / static_cast<double>(refs);
  }
  return out;
}

}  // namespace eco
