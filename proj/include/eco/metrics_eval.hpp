#pragma once

#include <array>
#include <string>
#include <vector>

#include "eco/consensus.hpp"

namespace eco {

struct EvalItem {
  std::string image_id;
  std::string candidate;
  std::vector<std::string> references;
};

// Validated evaluation corpus: unique ids, non-empty reference lists.
class EvalCorpus {
 public:
  EvalCorpus() = default;
  // Throws ValidationError on a duplicate id or an empty reference list.
  explicit EvalCorpus(std::vector<EvalItem> items);

  const std::vector<EvalItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

 private:
  std::vector<EvalItem> items_;
};

struct PerImageMetrics {
  std::string image_id;
  double cider = 0.0;
  double rouge_l = 0.0;
};

struct MetricReport {
  double cider = 0.0;
  std::array<double, 4> bleu{};  // BLEU-1..4
  double bleu_avg = 0.0;
  double rouge_l = 0.0;
  std::vector<PerImageMetrics> per_image;
};

// ROUGE-L F-measure weighting of recall over precision.
inline constexpr double kRougeBeta = 1.2;

// Mean CIDEr-D over images; df counts images whose reference set contains
// the n-gram. Throws ValidationError on an empty corpus.
double eval_cider(const EvalCorpus& corpus, const ConsensusConfig& cfg);
std::vector<double> eval_cider_per_image(const EvalCorpus& corpus, const ConsensusConfig& cfg);

// Corpus BLEU-n, no smoothing, closest reference length (ties to shorter).
// Throws ValidationError unless 1 <= n <= 4.
double eval_bleu(const EvalCorpus& corpus, int n);

// ROUGE-L F for one candidate against one reference token sequence.
double rouge_l_pair(const TokenSequence& candidate, const TokenSequence& reference);

// Mean over images of the best ROUGE-L F across references.
double eval_rouge_l(const EvalCorpus& corpus);
std::vector<double> eval_rouge_l_per_image(const EvalCorpus& corpus);

MetricReport evaluate(const EvalCorpus& corpus, const ConsensusConfig& cfg = {});

// Fixed field order, four decimals, METEOR and SPICE marked unavailable.
std::string format_report(const MetricReport& report, bool include_per_image);

}  // namespace eco
