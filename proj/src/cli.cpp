#include "eco/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

#include "eco/clipscore.hpp"
#include "eco/error.hpp"
#include "eco/io_formats.hpp"
#include "eco/metrics_eval.hpp"
#include "eco/pipeline.hpp"
#include "eco/run_config.hpp"
#include "eco/text_core.hpp"

namespace eco::cli {

namespace {

namespace fs = std::filesystem;

// Tunables given on the command line; unset ones fall back to --config, then
// to the built-in defaults.
struct Overrides {
  std::optional<fs::path> config;
  std::optional<fs::path> config_out;
  std::optional<double> lambda_ensemble;
  std::optional<double> lambda_consensus;
  std::optional<double> theta;
  std::optional<std::string> select_from;
  std::optional<double> keep_fraction;
  std::optional<int> n_max;
  std::optional<double> sigma;
  std::optional<double> scale;
  std::optional<int> idf_fallback_df;
  std::optional<std::string> normalization;
  std::optional<int> threads;
  std::optional<std::string> verbosity;
  bool format_filter = true;
  bool itm_filter = true;
  bool short_caption = true;
  // One entry per subcommand registering the flag; only the parsed one counts.
  std::vector<CLI::Option*> format_flags;
  std::vector<CLI::Option*> itm_flags;
  std::vector<CLI::Option*> short_flags;
};

bool given(const std::vector<CLI::Option*>& flags) {
  return std::any_of(flags.begin(), flags.end(), [](const CLI::Option* f) { return f->count() > 0; });
}

void add_config_options(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "Load tunables from a config file written by a previous run");
  app.add_option("--config-out", o.config_out, "Where to write the resolved config (default <out>.config.json)");
}

void add_filter_options(CLI::App& app, Overrides& o) {
  app.add_option("--keep-fraction", o.keep_fraction, "Fraction of captions kept by the ITM filter");
  o.format_flags.push_back(app.add_flag("--format-filter,!--no-format-filter", o.format_filter, "Toggle the format filter"));
  o.itm_flags.push_back(app.add_flag("--itm-filter,!--no-itm-filter", o.itm_filter, "Toggle the ITM filter"));
}

void add_consensus_options(CLI::App& app, Overrides& o) {
  app.add_option("--n-max", o.n_max, "Largest n-gram order");
  app.add_option("--sigma", o.sigma, "Length penalty width");
  app.add_option("--scale", o.scale, "Score scale factor");
  app.add_option("--idf-fallback-df", o.idf_fallback_df, "Document frequency assumed for unseen n-grams");
}

void add_rank_options(CLI::App& app, Overrides& o) {
  app.add_option("--lambda-ensemble", o.lambda_ensemble, "Weight of the normalized ensemble score");
  app.add_option("--lambda-consensus", o.lambda_consensus, "Weight of the normalized consensus score");
  app.add_option("--theta", o.theta, "Margin below which the shorter of the top two captions wins");
  o.short_flags.push_back(app.add_flag("--short-caption,!--no-short-caption", o.short_caption, "Toggle short caption selection"));
  app.add_option("--select-from", o.select_from, "Selection pool: all or filtered")
      ->check(CLI::IsMember({"all", "filtered"}));
  app.add_option("--normalization", o.normalization, "Normalization scope: per_image or dataset")
      ->check(CLI::IsMember({"per_image", "dataset"}));
  app.add_option("--threads", o.threads, "Worker threads (default: ECO_THREADS or 1)");
  app.add_option("--verbosity", o.verbosity, "Result detail: minimal or full")->check(CLI::IsMember({"minimal", "full"}));
}

RunConfig resolve(const Overrides& o) {
  RunConfig c;
  c.threads = default_thread_count();
  if (o.config) c = RunConfig::load(*o.config, c);
  PipelineConfig& p = c.pipeline;
  if (o.lambda_ensemble) p.weights.lambda_ensemble = *o.lambda_ensemble;
  if (o.lambda_consensus) p.weights.lambda_consensus = *o.lambda_consensus;
  if (o.theta) p.selection.theta = *o.theta;
  if (o.select_from) p.selection.select_from = *o.select_from == "filtered" ? SelectFrom::filtered : SelectFrom::all;
  if (o.keep_fraction) p.filter.keep_fraction = *o.keep_fraction;
  if (o.n_max) p.consensus.n_max = *o.n_max;
  if (o.sigma) p.consensus.sigma = *o.sigma;
  if (o.scale) p.consensus.scale = *o.scale;
  if (o.idf_fallback_df) p.consensus.idf_fallback_df = *o.idf_fallback_df;
  if (o.normalization) {
    p.normalization = *o.normalization == "dataset" ? NormalizationScope::dataset : NormalizationScope::per_image;
  }
  if (o.threads) c.threads = *o.threads;
  if (o.verbosity) c.verbosity = *o.verbosity == "full" ? Verbosity::full : Verbosity::minimal;
  if (given(o.format_flags)) p.filter.format_filter = o.format_filter;
  if (given(o.itm_flags)) p.filter.itm_filter = o.itm_filter;
  if (given(o.short_flags)) p.selection.short_caption_enabled = o.short_caption;
  c.validate();
  return c;
}

void emit_config(const RunConfig& c, const Overrides& o, const fs::path& out) {
  c.save(o.config_out ? *o.config_out : fs::path(out.string() + ".config.json"));
}

std::string id_list(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
  return s;
}

// ITM channel for every image, or none at all.
std::map<std::string, ScoreVector> load_itm(std::span<const CandidateSet> captions,
                                            const std::optional<fs::path>& itm_path) {
  if (!itm_path) return {};
  ScoreTable table = read_score_table(*itm_path);
  table.validate_against(captions);
  auto itm = table.extract_channel("itm");
  if (!table.empty()) throw ValidationError(itm_path->string() + ": expected only channel 'itm'");
  std::vector<std::string> missing;
  for (const auto& cs : captions) {
    if (!itm.contains(cs.image_id)) missing.push_back(cs.image_id);
  }
  if (!missing.empty()) throw ValidationError("no itm scores for images: " + id_list(missing));
  return itm;
}

ReferencePool pool_for(const CandidateSet& cs, const std::map<std::string, ScoreVector>& itm, const FilterConfig& f) {
  auto it = itm.find(cs.image_id);
  return build_reference_pool(cs, it == itm.end() ? nullptr : &it->second, f);
}

// --------------------------------------------------------------------------- rank

struct RankArgs {
  fs::path captions;
  std::optional<fs::path> embeddings_dir;
  std::vector<fs::path> scores;
  std::optional<fs::path> itm_scores;
  std::optional<fs::path> consensus_scores;
  fs::path out;
};

int cmd_rank(const RankArgs& a, const Overrides& o, std::ostream& err) {
  const RunConfig cfg = resolve(o);
  if (!a.embeddings_dir && a.scores.empty()) {
    throw ValidationError("rank needs --embeddings-dir or --scores");
  }
  const auto captions = read_captions(a.captions);
  ScoreTable table = read_score_tables(a.scores);
  table.validate_against(captions);
  auto itm = table.extract_channel("itm");
  auto consensus = table.extract_channel("consensus");
  if (a.itm_scores) {
    if (!itm.empty()) throw ValidationError("itm channel given both in --scores and --itm-scores");
    itm = load_itm(captions, a.itm_scores);
  }
  if (a.consensus_scores) {
    if (!consensus.empty()) throw ValidationError("consensus channel given twice");
    ScoreTable ct = read_score_table(*a.consensus_scores);
    ct.validate_against(captions);
    consensus = ct.extract_channel("consensus");
    if (!ct.empty()) throw ValidationError(a.consensus_scores->string() + ": expected only channel 'consensus'");
  }
  if (a.embeddings_dir) {
    ClipScoreOutput clip = clip_scores(captions, *a.embeddings_dir);
    if (clip.degenerate_pairs > 0) {
      err << "warning: " << clip.degenerate_pairs << " image/caption pairs had a zero-norm embedding (scored 0)\n";
    }
    for (auto& rec : clip.records) table.add(std::move(rec), a.embeddings_dir->string());
  }

  std::set<std::string> channel_names;
  for (const auto& [id, set] : table.images()) {
    for (const auto& c : set.channels()) channel_names.insert(c.channel);
  }
  std::vector<std::string> missing;
  std::vector<ImageInput> inputs;
  inputs.reserve(captions.size());
  for (const auto& cs : captions) {
    ImageInput in;
    in.candidates = cs;
    if (const ChannelSet* set = table.find(cs.image_id)) in.channels = *set;
    if (in.channels.size() != channel_names.size() || in.channels.empty()) missing.push_back(cs.image_id);
    if (auto it = itm.find(cs.image_id); it != itm.end()) in.itm = it->second;
    if (auto it = consensus.find(cs.image_id); it != consensus.end()) in.consensus_override = it->second;
    inputs.push_back(std::move(in));
  }
  if (!missing.empty()) throw ValidationError("missing similarity channels for images: " + id_list(missing));
  if (!itm.empty() && itm.size() != captions.size()) {
    std::vector<std::string> no_itm;
    for (const auto& cs : captions) {
      if (!itm.contains(cs.image_id)) no_itm.push_back(cs.image_id);
    }
    throw ValidationError("no itm scores for images: " + id_list(no_itm));
  }
  if (!consensus.empty() && consensus.size() != captions.size()) {
    throw ValidationError("consensus scores cover only some images");
  }

  const auto results = rank_batch(inputs, cfg.pipeline, cfg.threads);
  write_results(results, a.out, cfg.verbosity);
  emit_config(cfg, o, a.out);
  return kExitOk;
}

// --------------------------------------------------------------------------- stages

int cmd_filter(const fs::path& captions_path, const std::optional<fs::path>& itm_path, const fs::path& out_path,
               const Overrides& o) {
  const RunConfig cfg = resolve(o);
  const auto captions = read_captions(captions_path);
  const auto itm = load_itm(captions, itm_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + out_path.string() + "' for writing");
  for (const auto& cs : captions) {
    const ReferencePool pool = pool_for(cs, itm, cfg.pipeline.filter);
    out << format_pool_record(cs.image_id, pool.selection, pool.verdicts) << '\n';
  }
  if (!out.flush()) throw IoError("write to '" + out_path.string() + "' failed");
  emit_config(cfg, o, out_path);
  return kExitOk;
}

int cmd_consensus(const fs::path& captions_path, const std::optional<fs::path>& pool_path,
                  const std::optional<fs::path>& itm_path, const fs::path& out_path, const Overrides& o) {
  const RunConfig cfg = resolve(o);
  const auto captions = read_captions(captions_path);
  std::map<std::string, PoolSelection> pools;
  if (pool_path) {
    if (itm_path) throw ValidationError("--pool and --itm-scores are mutually exclusive");
    pools = read_pool_file(*pool_path);
  }
  const auto itm = load_itm(captions, itm_path);
  std::vector<ScoreTableRecord> records;
  records.reserve(captions.size());
  for (const auto& cs : captions) {
    std::vector<std::size_t> reference_pool;
    if (pool_path) {
      auto it = pools.find(cs.image_id);
      if (it == pools.end()) throw ValidationError("pool file has no entry for image '" + cs.image_id + "'");
      reference_pool = it->second.reference_pool;
    } else {
      reference_pool = pool_for(cs, itm, cfg.pipeline.filter).selection.reference_pool;
    }
    std::vector<NGramProfile> profiles;
    profiles.reserve(cs.size());
    for (const auto& caption : cs.captions) profiles.push_back(profile_caption(caption, cfg.pipeline.consensus.n_max));
    ScoreVector s = consensus_scores(profiles, reference_pool, cfg.pipeline.consensus);
    records.push_back({cs.image_id, s.channel, std::move(s.scores)});
  }
  write_score_table(out_path, records);
  emit_config(cfg, o, out_path);
  return kExitOk;
}

int cmd_clipscore(const fs::path& captions_path, const fs::path& dir, const fs::path& out_path, const Overrides& o,
                  std::ostream& err) {
  const RunConfig cfg = resolve(o);
  const auto captions = read_captions(captions_path);
  const ClipScoreOutput clip = clip_scores(captions, dir);
  if (clip.degenerate_pairs > 0) {
    err << "warning: " << clip.degenerate_pairs << " image/caption pairs had a zero-norm embedding (scored 0)\n";
  }
  write_score_table(out_path, clip.records);
  emit_config(cfg, o, out_path);
  return kExitOk;
}

int cmd_eval(const fs::path& selected_path, const fs::path& references_path, const fs::path& out_path,
             bool per_image, const Overrides& o) {
  const RunConfig cfg = resolve(o);
  const auto selected = read_selected(selected_path);
  const auto references = read_references(references_path);
  std::vector<std::string> missing;
  std::vector<EvalItem> items;
  items.reserve(selected.size());
  for (const auto& s : selected) {
    auto it = references.find(s.image_id);
    if (it == references.end()) {
      missing.push_back(s.image_id);
      continue;
    }
    items.push_back({s.image_id, s.caption, it->second});
  }
  if (!missing.empty()) throw ValidationError("no references for images: " + id_list(missing));
  const MetricReport report = evaluate(EvalCorpus(std::move(items)), cfg.pipeline.consensus);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + out_path.string() + "' for writing");
  out << format_report(report, per_image);
  if (!out.flush()) throw IoError("write to '" + out_path.string() + "' failed");
  emit_config(cfg, o, out_path);
  return kExitOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Caption re-ranking by ensembled similarity and consensus scores", "eco"};
  app.require_subcommand(1);

  Overrides o;
  RankArgs rank;
  fs::path captions;
  fs::path out_path;
  std::optional<fs::path> itm_path;
  std::optional<fs::path> pool_path;
  fs::path embeddings_dir;
  fs::path selected;
  fs::path references;
  bool per_image = false;

  auto* rank_cmd = app.add_subcommand("rank", "Select one caption per image");
  rank_cmd->add_option("--captions", rank.captions, "Captions file (JSON lines)")->required();
  rank_cmd->add_option("--embeddings-dir", rank.embeddings_dir, "Directory of <model>.{images,captions}.{bin,idx}");
  rank_cmd->add_option("--scores", rank.scores, "Score table files with similarity channels");
  rank_cmd->add_option("--itm-scores", rank.itm_scores, "Score table with the 'itm' channel");
  rank_cmd->add_option("--consensus-scores", rank.consensus_scores, "Precomputed 'consensus' channel");
  rank_cmd->add_option("--out", rank.out, "Results file")->required();
  add_rank_options(*rank_cmd, o);
  add_filter_options(*rank_cmd, o);
  add_consensus_options(*rank_cmd, o);
  add_config_options(*rank_cmd, o);

  auto* filter_cmd = app.add_subcommand("filter", "Write filter verdicts and reference pools");
  filter_cmd->add_option("--captions", captions, "Captions file")->required();
  filter_cmd->add_option("--itm-scores", itm_path, "Score table with the 'itm' channel");
  filter_cmd->add_option("--out", out_path, "Pool file")->required();
  add_filter_options(*filter_cmd, o);
  add_config_options(*filter_cmd, o);

  auto* consensus_cmd = app.add_subcommand("consensus", "Write the leave-one-out consensus channel");
  consensus_cmd->add_option("--captions", captions, "Captions file")->required();
  consensus_cmd->add_option("--pool", pool_path, "Pool file from 'filter'");
  consensus_cmd->add_option("--itm-scores", itm_path, "Score table with the 'itm' channel");
  consensus_cmd->add_option("--out", out_path, "Score table output")->required();
  add_filter_options(*consensus_cmd, o);
  add_consensus_options(*consensus_cmd, o);
  add_config_options(*consensus_cmd, o);

  auto* clip_cmd = app.add_subcommand("clipscore", "Write per-model cosine channels from embeddings");
  clip_cmd->add_option("--captions", captions, "Captions file")->required();
  clip_cmd->add_option("--embeddings-dir", embeddings_dir, "Embeddings directory")->required();
  clip_cmd->add_option("--out", out_path, "Score table output")->required();
  add_config_options(*clip_cmd, o);

  auto* eval_cmd = app.add_subcommand("eval", "Score selected captions against references");
  eval_cmd->add_option("--selected", selected, "Results file or image_id<TAB>caption lines")->required();
  eval_cmd->add_option("--references", references, "References file (JSON lines)")->required();
  eval_cmd->add_option("--out", out_path, "Report output")->required();
  eval_cmd->add_flag("--per-image", per_image, "Include per-image CIDEr and ROUGE-L");
  add_consensus_options(*eval_cmd, o);
  add_config_options(*eval_cmd, o);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*rank_cmd) return cmd_rank(rank, o, err);
    if (*filter_cmd) return cmd_filter(captions, itm_path, out_path, o);
    if (*consensus_cmd) return cmd_consensus(captions, pool_path, itm_path, out_path, o);
    if (*clip_cmd) return cmd_clipscore(captions, embeddings_dir, out_path, o, err);
    if (*eval_cmd) return cmd_eval(selected, references, out_path, per_image, o);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitValidation;
}

}  // namespace eco::cli
