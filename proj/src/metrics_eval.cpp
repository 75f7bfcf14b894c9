#include "eco/metrics_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <json.hpp>
#include <set>

#include "eco/error.hpp"
#include "eco/text_core.hpp"

namespace eco {

EvalCorpus::EvalCorpus(std::vector<EvalItem> items) : items_(std::move(items)) {
  std::set<std::string> seen;
  for (const auto& item : items_) {
    if (!seen.insert(item.image_id).second) throw ValidationError("duplicate image_id '" + item.image_id + "'");
    if (item.references.empty()) throw ValidationError("image '" + item.image_id + "' has no references");
  }
}

namespace {

void require_non_empty(const EvalCorpus& corpus) {
  if (corpus.empty()) throw ValidationError("evaluation corpus is empty");
}

}  // namespace

std::vector<double> eval_cider_per_image(const EvalCorpus& corpus, const ConsensusConfig& cfg) {
  require_non_empty(corpus);
  cfg.validate();
  std::vector<NGramProfile> candidates;
  std::vector<std::vector<NGramProfile>> references;
  candidates.reserve(corpus.size());
  references.reserve(corpus.size());
  DocumentFrequencies df(cfg.n_max, static_cast<int>(corpus.size()));
  for (const auto& item : corpus.items()) {
    candidates.push_back(profile_caption(item.candidate, cfg.n_max));
    auto& refs = references.emplace_back();
    for (const auto& r : item.references) refs.push_back(profile_caption(r, cfg.n_max));
    df.add_document(refs);
  }
  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) scores.push_back(cider_d(candidates[i], references[i], df, cfg));
  return scores;
}

double eval_cider(const EvalCorpus& corpus, const ConsensusConfig& cfg) {
  const auto scores = eval_cider_per_image(corpus, cfg);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double eval_bleu(const EvalCorpus& corpus, int n) {
  if (n < 1 || n > 4) throw ValidationError("BLEU order must be in 1..4");
  require_non_empty(corpus);
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (const auto& item : corpus.items()) {
    const NGramProfile cand = profile_caption(item.candidate, n);
    std::vector<NGramProfile> refs;
    refs.reserve(item.references.size());
    for (const auto& r : item.references) refs.push_back(profile_caption(r, n));

    cand_len += cand.token_length;
    int best_len = refs.front().token_length;
    for (const auto& r : refs) {
      const int diff = std::abs(r.token_length - cand.token_length);
      const int best_diff = std::abs(best_len - cand.token_length);
      if (diff < best_diff || (diff == best_diff && r.token_length < best_len)) best_len = r.token_length;
    }
    ref_len += best_len;

    for (int k = 1; k <= n; ++k) {
      for (const auto& [key, count] : cand.level(k)) {
        int max_ref = 0;
        for (const auto& r : refs) max_ref = std::max(max_ref, r.count(k, key));
        matched[static_cast<std::size_t>(k - 1)] += std::min(count, max_ref);
        total[static_cast<std::size_t>(k - 1)] += count;
      }
    }
  }
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (matched[static_cast<std::size_t>(k)] == 0.0) return 0.0;
    log_sum += std::log(matched[static_cast<std::size_t>(k)] / total[static_cast<std::size_t>(k)]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / n);
}

double rouge_l_pair(const TokenSequence& candidate, const TokenSequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  // Rolling-row LCS table.
  std::vector<int> prev(reference.size() + 1, 0);
  std::vector<int> cur(reference.size() + 1, 0);
  for (const auto& c : candidate) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = c == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const int lcs = prev[reference.size()];
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

std::vector<double> eval_rouge_l_per_image(const EvalCorpus& corpus) {
  require_non_empty(corpus);
  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const auto& item : corpus.items()) {
    const TokenSequence cand = tokenize(item.candidate);
    double best = 0.0;
    for (const auto& r : item.references) best = std::max(best, rouge_l_pair(cand, tokenize(r)));
    scores.push_back(best);
  }
  return scores;
}

double eval_rouge_l(const EvalCorpus& corpus) {
  const auto scores = eval_rouge_l_per_image(corpus);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

MetricReport evaluate(const EvalCorpus& corpus, const ConsensusConfig& cfg) {
  MetricReport report;
  const auto cider = eval_cider_per_image(corpus, cfg);
  const auto rouge = eval_rouge_l_per_image(corpus);
  double cider_sum = 0.0;
  double rouge_sum = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    report.per_image.push_back({corpus.items()[i].image_id, cider[i], rouge[i]});
    cider_sum += cider[i];
    rouge_sum += rouge[i];
  }
  report.cider = cider_sum / static_cast<double>(corpus.size());
  report.rouge_l = rouge_sum / static_cast<double>(corpus.size());
  double bleu_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    report.bleu[static_cast<std::size_t>(n - 1)] = eval_bleu(corpus, n);
    bleu_sum += report.bleu[static_cast<std::size_t>(n - 1)];
  }
  report.bleu_avg = bleu_sum / 4.0;
  return report;
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string format_report(const MetricReport& report, bool include_per_image) {
  std::string out = "{\n";
  auto field = [&](const char* name, const std::string& value, bool last = false) {
    out += "  \"";
    out += name;
    out += "\": ";
    out += value;
    out += last ? "\n" : ",\n";
  };
  field("images", std::to_string(report.per_image.size()));
  field("cider", fixed4(report.cider));
  field("bleu_1", fixed4(report.bleu[0]));
  field("bleu_2", fixed4(report.bleu[1]));
  field("bleu_3", fixed4(report.bleu[2]));
  field("bleu_4", fixed4(report.bleu[3]));
  field("bleu_avg", fixed4(report.bleu_avg));
  field("rouge_l", fixed4(report.rouge_l));
  field("meteor", "\"unavailable\"");
  field("spice", "\"unavailable\"", !include_per_image);
  if (include_per_image) {
    out += "  \"per_image\": [";
    for (std::size_t i = 0; i < report.per_image.size(); ++i) {
      const auto& p = report.per_image[i];
      out += i == 0 ? "\n" : ",\n";
      out += "    {\"image_id\": " + nlohmann::json(p.image_id).dump() + ", \"cider\": " + fixed4(p.cider) +
             ", \"rouge_l\": " + fixed4(p.rouge_l) + "}";
    }
    out += report.per_image.empty() ? "]\n" : "\n  ]\n";
  }
  out += "}\n";
  return out;
}

}  // namespace eco
