#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eco/similarity.hpp"
#include "eco/text_core.hpp"

namespace eco {

// CIDEr-D constants. Defaults are the conventional CIDEr-D settings.
struct ConsensusConfig {
  int n_max = 4;
  double sigma = 6.0;    // Gaussian length-penalty width
  double scale = 10.0;
  int idf_fallback_df = 1;  // df assumed for n-grams absent from the corpus

  // Throws ValidationError when a field is out of range.
  void validate() const;
};

// Per-level document frequencies over a caption corpus: df counts the
// documents containing an n-gram at least once.
class DocumentFrequencies {
 public:
  DocumentFrequencies(int n_max, int pool_size);

  int pool_size() const { return pool_size_; }
  int n_max() const { return static_cast<int>(df_by_n_.size()); }

  // 0 when the n-gram never occurs in the corpus.
  int df(int n, const std::string& ngram) const;

  // ln(pool_size / df), with `fallback_df` standing in for missing n-grams.
  double idf(int n, const std::string& ngram, int fallback_df) const;

  // Counts each distinct n-gram of `document` once.
  void add_document(const NGramProfile& document);
  // Counts the union of the documents' n-grams once (one multi-caption document).
  void add_document(std::span<const NGramProfile> document);

  const std::unordered_map<std::string, int>& level(int n) const { return df_by_n_.at(static_cast<std::size_t>(n - 1)); }

 private:
  std::vector<std::unordered_map<std::string, int>> df_by_n_;
  int pool_size_;
};

// df over the given pool: one document per profile.
// Throws ValidationError on an empty pool.
DocumentFrequencies compute_df(std::span<const NGramProfile> pool, int n_max);
// df over the members of `profiles` selected by `members`.
DocumentFrequencies compute_df(std::span<const NGramProfile> profiles, std::span<const std::size_t> members, int n_max);

// TF-IDF weights (raw count times idf) aligned with a profile's sorted
// n-gram levels. Holds a reference to the profile, which must outlive it.
class TfIdfVector {
 public:
  TfIdfVector(const NGramProfile& profile, const DocumentFrequencies& df, const ConsensusConfig& cfg);

  const NGramProfile& profile() const { return *profile_; }
  std::span<const double> weights(int n) const { return weights_.at(static_cast<std::size_t>(n - 1)); }
  double norm(int n) const { return norms_.at(static_cast<std::size_t>(n - 1)); }

 private:
  const NGramProfile* profile_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> norms_;
};

// Unscaled CIDEr-D kernel for one candidate/reference pair:
// penalty(length gap) * mean over n of the count-clipped TF-IDF cosine.
double cider_d_pair(const TfIdfVector& candidate, const TfIdfVector& reference, const ConsensusConfig& cfg);

// scale * mean over refs of cider_d_pair. Throws ValidationError if refs is empty.
double cider_d(const NGramProfile& candidate, std::span<const NGramProfile> refs, const DocumentFrequencies& df,
               const ConsensusConfig& cfg);

// Leave-one-out consensus: df is computed once over the reference pool, and
// each candidate is scored against the pool minus itself. A candidate left
// with no references scores 0. Output channel is named "consensus".
ScoreVector consensus_scores(std::span<const NGramProfile> candidates, std::span<const std::size_t> reference_pool,
                             const ConsensusConfig& cfg);

}  // namespace eco
