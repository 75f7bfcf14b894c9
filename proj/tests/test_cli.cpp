#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "eco/cli.hpp"
#include "eco/error.hpp"
#include "eco/io_formats.hpp"
#include "eco/run_config.hpp"
#include "oracle/brute_force.hpp"
#include "support/synthetic.hpp"

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome eco_run(std::vector<std::string> args) {
  args.insert(args.begin(), "eco");
  std::ostringstream out;
  std::ostringstream err;
  const int code = eco::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// Small dataset written as captions + one similarity table + an itm table.
struct Dataset {
  synth::TempDir dir{"cli"};
  std::vector<eco::CandidateSet> captions;
  synth::Channels channels;

  std::string path(const std::string& name) const { return (dir / name).string(); }

  explicit Dataset(std::size_t images = 8, std::size_t per_image = 7, std::uint32_t seed = 31) {
    captions = synth::random_captions(images, per_image, seed);
    channels = synth::random_channels(captions, 2, seed + 1);
    synth::write_captions(dir / "captions.jsonl", captions);
    std::vector<eco::ScoreTableRecord> sim;
    std::vector<eco::ScoreTableRecord> itm;
    for (std::size_t i = 0; i < captions.size(); ++i) {
      for (const auto& c : channels.similarity[i].channels()) sim.push_back({captions[i].image_id, c.channel, c.scores});
      itm.push_back({captions[i].image_id, "itm", channels.itm[i].scores});
    }
    eco::write_score_table(dir / "sim.jsonl", sim);
    eco::write_score_table(dir / "itm.jsonl", itm);
  }
};

}  // namespace

TEST_CASE("cli: help and usage errors") {
  CHECK(eco_run({"--help"}).code == 0);
  CHECK(eco_run({"rank", "--help"}).code == 0);
  CHECK(eco_run({}).code == eco::cli::kExitValidation);
  CHECK(eco_run({"rank", "--captions", "x"}).code == eco::cli::kExitValidation);
  CHECK(eco_run({"rank", "--captions", "x", "--out", "y", "--bogus"}).code == eco::cli::kExitValidation);
  CHECK(eco_run({"rank", "--captions", "x", "--out", "y", "--select-from", "some"}).code ==
        eco::cli::kExitValidation);
}

TEST_CASE("cli rank: results match the oracle pipeline") {
  Dataset d;
  const auto r = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"),
                          "--itm-scores", d.path("itm.jsonl"), "--out", d.path("out.jsonl")});
  REQUIRE_MESSAGE(r.code == 0, r.err);

  std::string golden;
  for (std::size_t i = 0; i < d.captions.size(); ++i) {
    std::vector<std::vector<double>> ch;
    for (const auto& c : d.channels.similarity[i].channels()) ch.push_back(c.scores);
    const auto t = oracle::rank(d.captions[i].captions, ch, d.channels.itm[i].scores, {});
    golden += nlohmann::json{{"image_id", d.captions[i].image_id}}.dump();
    golden.pop_back();
    golden += ",\"caption\":" + nlohmann::json(d.captions[i].captions[t.selected]).dump() +
              ",\"index\":" + std::to_string(t.selected) + "}\n";
  }
  CHECK(synth::slurp(d.dir / "out.jsonl") == golden);
  CHECK(std::filesystem::exists(d.dir / "out.jsonl.config.json"));
}

TEST_CASE("cli rank: pure consensus without filters") {
  Dataset d;
  const auto r = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"),
                          "--itm-scores", d.path("itm.jsonl"), "--out", d.path("e.jsonl"), "--lambda-ensemble", "0",
                          "--lambda-consensus", "1", "--theta", "0", "--no-format-filter", "--no-itm-filter"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream lines(synth::slurp(d.dir / "e.jsonl"));
  std::string line;
  for (const auto& cs : d.captions) {
    REQUIRE(std::getline(lines, line));
    std::vector<std::size_t> all(cs.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    const auto cons = oracle::consensus(cs.captions, all, {});
    const auto best = static_cast<std::size_t>(std::max_element(cons.begin(), cons.end()) - cons.begin());
    CHECK(nlohmann::json::parse(line)["index"].get<std::size_t>() == best);
  }
}

TEST_CASE("cli rank: absent ITM scores fall back to the format filter") {
  Dataset d;
  const auto r = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"), "--out",
                          d.path("f.jsonl"), "--select-from", "filtered", "--verbosity", "full"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string text = synth::slurp(d.dir / "f.jsonl");
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    const auto level = j["fallback_level"].get<std::string>();
    CHECK((level == "format_only" || level == "full_pool"));
  }
  CHECK(contains(text, "\"fallback_level\":\"format_only\""));
}

TEST_CASE("cli rank: input validation and exit codes") {
  Dataset d;
  CHECK(eco_run({"rank", "--captions", d.path("nope.jsonl"), "--scores", d.path("sim.jsonl"), "--out",
                 d.path("o.jsonl")})
            .code == eco::cli::kExitIo);
  CHECK(eco_run({"rank", "--captions", d.path("captions.jsonl"), "--out", d.path("o.jsonl")}).code ==
        eco::cli::kExitValidation);

  // Drop one image's similarity rows entirely.
  std::vector<eco::ScoreTableRecord> partial;
  for (std::size_t i = 1; i < d.captions.size(); ++i) {
    for (const auto& c : d.channels.similarity[i].channels()) partial.push_back({d.captions[i].image_id, c.channel, c.scores});
  }
  eco::write_score_table(d.dir / "partial.jsonl", partial);
  const auto r = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("partial.jsonl"), "--out",
                          d.path("o.jsonl")});
  CHECK(r.code == eco::cli::kExitValidation);
  CHECK(contains(r.err, d.captions[0].image_id));

  // Wrong score count for an image.
  synth::spit(d.dir / "short.jsonl", "{\"image_id\":\"img0\",\"channel\":\"m\",\"scores\":[1,2]}\n");
  CHECK(eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("short.jsonl"), "--out",
                 d.path("o.jsonl")})
            .code == eco::cli::kExitValidation);

  CHECK(eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"), "--out",
                 d.path("o.jsonl"), "--theta", "-1"})
            .code == eco::cli::kExitValidation);
}

TEST_CASE("cli: emitted config reproduces the run") {
  Dataset d;
  const auto first = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"),
                              "--itm-scores", d.path("itm.jsonl"), "--out", d.path("a.jsonl"), "--theta", "0.8",
                              "--keep-fraction", "0.7", "--verbosity", "full", "--no-short-caption"});
  REQUIRE_MESSAGE(first.code == 0, first.err);
  const auto cfg = eco::RunConfig::load(d.dir / "a.jsonl.config.json", {});
  CHECK(cfg.pipeline.selection.theta == 0.8);
  CHECK(cfg.pipeline.filter.keep_fraction == 0.7);
  CHECK_FALSE(cfg.pipeline.selection.short_caption_enabled);
  CHECK(cfg.verbosity == eco::Verbosity::full);

  const auto second = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"),
                               "--itm-scores", d.path("itm.jsonl"), "--out", d.path("b.jsonl"), "--config",
                               d.path("a.jsonl.config.json")});
  REQUIRE_MESSAGE(second.code == 0, second.err);
  CHECK(synth::slurp(d.dir / "a.jsonl") == synth::slurp(d.dir / "b.jsonl"));
  CHECK(synth::slurp(d.dir / "a.jsonl.config.json") == synth::slurp(d.dir / "b.jsonl.config.json"));

  // Flags win over the loaded config.
  const auto third = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"),
                              "--out", d.path("c.jsonl"), "--config", d.path("a.jsonl.config.json"),
                              "--short-caption", "--config-out", d.path("c.cfg")});
  REQUIRE_MESSAGE(third.code == 0, third.err);
  CHECK(eco::RunConfig::load(d.dir / "c.cfg", {}).pipeline.selection.short_caption_enabled);
  CHECK(eco::RunConfig::load(d.dir / "c.cfg", {}).pipeline.selection.theta == 0.8);
}

TEST_CASE("RunConfig json") {
  eco::RunConfig c;
  c.pipeline.weights = {2.0, 0.5};
  c.pipeline.normalization = eco::NormalizationScope::dataset;
  c.pipeline.selection.select_from = eco::SelectFrom::filtered;
  c.pipeline.filter.itm_filter = false;
  c.pipeline.consensus.n_max = 3;
  c.threads = 4;
  const auto back = eco::RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.pipeline.weights.lambda_consensus == 0.5);
  CHECK(back.pipeline.normalization == eco::NormalizationScope::dataset);
  CHECK(back.threads == 4);

  CHECK(eco::RunConfig::from_json("{}").to_json() == eco::RunConfig{}.to_json());
  CHECK_THROWS_AS(eco::RunConfig::from_json("{\"lambda\": 1}"), eco::ValidationError);
  CHECK_THROWS_AS(eco::RunConfig::from_json("{\"theta\": \"big\"}"), eco::ValidationError);
  CHECK_THROWS_AS(eco::RunConfig::from_json("{\"keep_fraction\": 0}"), eco::ValidationError);
  CHECK_THROWS_AS(eco::RunConfig::from_json("{\"threads\": 0}"), eco::ValidationError);
  CHECK_THROWS_AS(eco::RunConfig::from_json("[1]"), eco::ValidationError);
  CHECK_THROWS_AS(eco::RunConfig::from_json("{"), eco::ValidationError);
}

TEST_CASE("cli rank: thread count does not change output") {
  Dataset d(30, 9, 77);
  std::string reference;
  for (const char* threads : {"1", "2", "4", "8"}) {
    const std::string out = d.path(std::string("t") + threads + ".jsonl");
    const auto r = eco_run({"rank", "--captions", d.path("captions.jsonl"), "--scores", d.path("sim.jsonl"),
                            "--itm-scores", d.path("itm.jsonl"), "--out", out, "--threads", threads, "--verbosity",
                            "full"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string text = synth::slurp(out);
    if (reference.empty()) reference = text;
    CHECK(text == reference);
  }
}

TEST_CASE("cli clipscore") {
  synth::TempDir dir("clip");
  const std::vector<eco::CandidateSet> caps{{"im", {"first caption", "second caption", "third caption"}}};
  synth::write_captions(dir / "c.jsonl", caps);
  eco::EmbeddingMatrix images{3, {1, 0, 0}};
  std::vector<eco::EmbeddingIndexEntry> image_index{{"im", std::nullopt, false}};
  eco::EmbeddingMatrix texts{3, {1, 0, 0, 0, 1, 0, -2, 0, 0}};
  std::vector<eco::EmbeddingIndexEntry> text_index{{"im", 0u, false}, {"im", 1u, false}, {"im", 2u, false}};
  eco::write_embeddings(dir / "vit.images.bin", dir / "vit.images.idx", images, image_index);
  eco::write_embeddings(dir / "vit.captions.bin", dir / "vit.captions.idx", texts, text_index);

  const auto r = eco_run({"clipscore", "--captions", (dir / "c.jsonl").string(), "--embeddings-dir",
                          dir.path().string(), "--out", (dir / "s.jsonl").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(synth::slurp(dir / "s.jsonl") == "{\"image_id\":\"im\",\"channel\":\"vit\",\"scores\":[1,0,-1]}\n");

  // A second model sorts after the first and a missing caption row is an error.
  eco::write_embeddings(dir / "alpha.images.bin", dir / "alpha.images.idx", images, image_index);
  eco::EmbeddingMatrix two{3, {1, 0, 0, 0, 1, 0}};
  const std::vector<eco::EmbeddingIndexEntry> two_index{text_index[0], text_index[1]};
  eco::write_embeddings(dir / "alpha.captions.bin", dir / "alpha.captions.idx", two, two_index);
  const auto missing = eco_run({"clipscore", "--captions", (dir / "c.jsonl").string(), "--embeddings-dir",
                                dir.path().string(), "--out", (dir / "s2.jsonl").string()});
  CHECK(missing.code == eco::cli::kExitValidation);
  CHECK(contains(missing.err, "im"));

  // Zero-norm embeddings are scored 0 with a warning.
  eco::write_embeddings(dir / "alpha.captions.bin", dir / "alpha.captions.idx",
                        eco::EmbeddingMatrix{3, {0, 0, 0, 0, 1, 0, 1, 1, 0}}, text_index);
  const auto zero = eco_run({"clipscore", "--captions", (dir / "c.jsonl").string(), "--embeddings-dir",
                             dir.path().string(), "--out", (dir / "s3.jsonl").string()});
  REQUIRE_MESSAGE(zero.code == 0, zero.err);
  CHECK(contains(zero.err, "zero-norm"));
  const auto table = eco::read_score_table(dir / "s3.jsonl");
  CHECK(table.find("im")->find("alpha")->scores[0] == 0.0);
  CHECK(table.find("im")->channels()[0].channel == "alpha");

  // Mismatched dims between image and caption files.
  eco::write_embeddings(dir / "alpha.images.bin", dir / "alpha.images.idx", eco::EmbeddingMatrix{2, {1, 0}},
                        image_index);
  CHECK(eco_run({"clipscore", "--captions", (dir / "c.jsonl").string(), "--embeddings-dir", dir.path().string(),
                 "--out", (dir / "s4.jsonl").string()})
            .code == eco::cli::kExitValidation);
}

TEST_CASE("cli consensus and filter stages") {
  synth::TempDir dir("stage");
  const std::vector<eco::CandidateSet> caps{
      {"same", {"a dog runs in the park", "a dog runs in the park", "a dog runs in the park"}}};
  synth::write_captions(dir / "c.jsonl", caps);
  const auto r = eco_run({"consensus", "--captions", (dir / "c.jsonl").string(), "--out", (dir / "k.jsonl").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(synth::slurp(dir / "k.jsonl") == "{\"image_id\":\"same\",\"channel\":\"consensus\",\"scores\":[0,0,0]}\n");

  const auto f = eco_run({"filter", "--captions", (dir / "c.jsonl").string(), "--out", (dir / "p.jsonl").string()});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  const auto pools = eco::read_pool_file(dir / "p.jsonl");
  CHECK(pools.at("same").fallback_level == eco::FallbackLevel::format_only);
  CHECK(pools.at("same").reference_pool.size() == 3);

  CHECK(eco_run({"consensus", "--captions", (dir / "c.jsonl").string(), "--pool", (dir / "p.jsonl").string(),
                 "--itm-scores", (dir / "p.jsonl").string(), "--out", (dir / "k2.jsonl").string()})
            .code == eco::cli::kExitValidation);
}

TEST_CASE("cli: staged run equals the monolithic run") {
  Dataset d(10, 8, 5);
  synth::write_embedding_model(d.dir.path(), "alpha", d.captions, 16, 1);
  synth::write_embedding_model(d.dir.path(), "beta", d.captions, 8, 2);
  const std::string caps = d.path("captions.jsonl");
  const std::string emb = d.dir.path().string();
  REQUIRE(eco_run({"clipscore", "--captions", caps, "--embeddings-dir", emb, "--out", d.path("clip.jsonl")}).code == 0);
  REQUIRE(eco_run({"filter", "--captions", caps, "--itm-scores", d.path("itm.jsonl"), "--out", d.path("pool.jsonl")})
              .code == 0);
  REQUIRE(eco_run({"consensus", "--captions", caps, "--pool", d.path("pool.jsonl"), "--out", d.path("cons.jsonl")})
              .code == 0);
  REQUIRE(eco_run({"rank", "--captions", caps, "--scores", d.path("clip.jsonl"), "--consensus-scores",
                   d.path("cons.jsonl"), "--itm-scores", d.path("itm.jsonl"), "--verbosity", "full", "--out",
                   d.path("staged.jsonl")})
              .code == 0);
  REQUIRE(eco_run({"rank", "--captions", caps, "--embeddings-dir", emb, "--itm-scores", d.path("itm.jsonl"),
                   "--verbosity", "full", "--out", d.path("mono.jsonl")})
              .code == 0);
  CHECK(synth::slurp(d.dir / "staged.jsonl") == synth::slurp(d.dir / "mono.jsonl"));

  // The consensus stage computing its own pool agrees with the filter stage.
  REQUIRE(eco_run({"consensus", "--captions", caps, "--itm-scores", d.path("itm.jsonl"), "--out",
                   d.path("cons2.jsonl")})
              .code == 0);
  CHECK(synth::slurp(d.dir / "cons.jsonl") == synth::slurp(d.dir / "cons2.jsonl"));
}

TEST_CASE("cli eval") {
  synth::TempDir dir("ev");
  synth::spit(dir / "refs.jsonl",
              "{\"image_id\":\"a\",\"references\":[\"a man rides a horse on the beach\"]}\n"
              "{\"image_id\":\"b\",\"references\":[\"two dogs play in the snow\"]}\n");
  synth::spit(dir / "sel.tsv", "a\ta man rides a horse on the beach\nb\ttwo dogs play in the snow\n");
  const auto r = eco_run({"eval", "--selected", (dir / "sel.tsv").string(), "--references",
                          (dir / "refs.jsonl").string(), "--out", (dir / "report.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string report = synth::slurp(dir / "report.json");
  CHECK(contains(report, "\"cider\": 10.0000"));
  CHECK(contains(report, "\"bleu_avg\": 1.0000"));
  CHECK(contains(report, "\"rouge_l\": 1.0000"));

  synth::spit(dir / "sel2.tsv", "a\ta man\nz\tnobody\ny\tnothing\n");
  const auto bad = eco_run({"eval", "--selected", (dir / "sel2.tsv").string(), "--references",
                            (dir / "refs.jsonl").string(), "--out", (dir / "r2.json").string()});
  CHECK(bad.code == eco::cli::kExitValidation);
  CHECK(contains(bad.err, "z, y"));

  const auto per = eco_run({"eval", "--selected", (dir / "sel.tsv").string(), "--references",
                            (dir / "refs.jsonl").string(), "--out", (dir / "r3.json").string(), "--per-image"});
  REQUIRE(per.code == 0);
  CHECK(contains(synth::slurp(dir / "r3.json"), "per_image"));
}

TEST_CASE("cli rank: shipped fixture reproduces the golden results") {
  const std::filesystem::path fx = ECO_FIXTURE_DIR;
  synth::TempDir dir("golden");
  const auto r = eco_run({"rank", "--captions", (fx / "captions.jsonl").string(), "--scores",
                          (fx / "similarity.jsonl").string(), "--itm-scores", (fx / "itm.jsonl").string(), "--out",
                          (dir / "out.jsonl").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(synth::slurp(dir / "out.jsonl") == synth::slurp(fx / "golden_results.jsonl"));
}

TEST_CASE("cli eval: shipped fixture report matches the oracle") {
  const std::filesystem::path fx = ECO_FIXTURE_DIR;
  synth::TempDir dir("golden_eval");
  const auto r = eco_run({"eval", "--selected", (fx / "golden_results.jsonl").string(), "--references",
                          (fx / "references.jsonl").string(), "--out", (dir / "report.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);

  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> refs;
  const auto selected = eco::read_selected(fx / "golden_results.jsonl");
  const auto references = eco::read_references(fx / "references.jsonl");
  std::vector<eco::EvalItem> items;
  for (const auto& s : selected) {
    candidates.push_back(s.caption);
    refs.push_back(references.at(s.image_id));
    items.push_back({s.image_id, s.caption, refs.back()});
  }
  double cider = 0.0;
  double rouge = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cider += oracle::cider_d(candidates[i], refs[i], refs, {});
    rouge += oracle::rouge_l(candidates[i], refs[i]);
  }
  cider /= static_cast<double>(candidates.size());
  rouge /= static_cast<double>(candidates.size());
  double bleu_avg = 0.0;
  for (int n = 1; n <= 4; ++n) bleu_avg += oracle::bleu(candidates, refs, n) / 4.0;

  const auto report = eco::evaluate(eco::EvalCorpus(std::move(items)));
  CHECK(std::abs(report.cider - cider) < 1e-9);
  CHECK(std::abs(report.rouge_l - rouge) < 1e-9);
  CHECK(std::abs(report.bleu_avg - bleu_avg) < 1e-9);

  const auto j = nlohmann::json::parse(synth::slurp(dir / "report.json"));
  CHECK(std::abs(j["cider"].get<double>() - cider) <= 5e-5);
  CHECK(std::abs(j["rouge_l"].get<double>() - rouge) <= 5e-5);
  CHECK(std::abs(j["bleu_avg"].get<double>() - bleu_avg) <= 5e-5);
  CHECK(j["images"].get<int>() == 4);
  CHECK(synth::slurp(dir / "report.json") == synth::slurp(fx / "golden_report.json"));
}
