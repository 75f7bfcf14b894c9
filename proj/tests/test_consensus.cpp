#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "eco/consensus.hpp"
#include "eco/error.hpp"
#include "oracle/brute_force.hpp"

namespace {

std::vector<eco::NGramProfile> profiles(const std::vector<std::string>& captions, int n_max = 4) {
  std::vector<eco::NGramProfile> out;
  for (const auto& c : captions) out.push_back(eco::profile_caption(c, n_max));
  return out;
}

const std::vector<std::string> kHorsePool = {
    "a man rides a horse on a beach",       "a horse is ridden by a man",
    "a man riding a brown horse on the beach", "a person on a horse near the ocean",
    "two dogs play in the snow",            "a man rides a horse along the sand",
};

const std::vector<std::string> kDogPool = {
    "a dog runs in the park",   "a brown dog runs on the grass", "a brown dog runs in the park on the grass",
    "a dog in the park",        "a cat sleeping on a sofa",      "a brown dog plays in the park",
};

std::vector<std::size_t> all_of(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("compute_df counts presence, not multiplicity") {
  const auto pool = profiles({"a dog", "a cat"});
  const auto df = eco::compute_df(pool, 4);
  CHECK(df.pool_size() == 2);
  CHECK(df.df(1, "a") == 2);
  CHECK(df.df(1, "dog") == 1);
  CHECK(df.df(1, "cat") == 1);
  CHECK(df.df(2, "a dog") == 1);
  CHECK(df.df(1, "horse") == 0);

  const auto same = eco::compute_df(profiles({"a a dog", "a a dog", "a a dog"}), 4);
  CHECK(same.pool_size() == 3);
  CHECK(same.df(1, "a") == 3);
  CHECK(same.df(2, "a a") == 3);

  const auto single = eco::compute_df(profiles({"a lone caption"}), 4);
  CHECK(single.df(1, "lone") == 1);
  CHECK(single.idf(1, "lone", 1) == 0.0);
  CHECK(single.idf(1, "missing", 1) == 0.0);

  CHECK_THROWS_AS(eco::compute_df(std::vector<eco::NGramProfile>{}, 4), eco::ValidationError);
}

TEST_CASE("TF-IDF vectors are non-negative with consistent norms") {
  const auto pool = profiles(kHorsePool);
  const auto df = eco::compute_df(pool, 4);
  const eco::ConsensusConfig cfg;
  for (const auto& p : pool) {
    const eco::TfIdfVector v(p, df, cfg);
    for (int n = 1; n <= 4; ++n) {
      double sq = 0.0;
      for (double w : v.weights(n)) {
        CHECK(w >= 0.0);
        sq += w * w;
      }
      CHECK(std::abs(std::sqrt(sq) - v.norm(n)) < 1e-9);
    }
  }
}

TEST_CASE("cider_d identity scores the scale") {
  const auto pool = profiles(kHorsePool);
  const auto df = eco::compute_df(pool, 4);
  const eco::ConsensusConfig cfg;
  // Every level of caption 0 has an n-gram unique to it, so all norms are nonzero.
  const double s = eco::cider_d(pool[0], std::span(pool).subspan(0, 1), df, cfg);
  CHECK(std::abs(s - 10.0) < 1e-9);
}

TEST_CASE("cider_d is zero without shared tokens") {
  const auto pool = profiles(kHorsePool);
  const auto df = eco::compute_df(pool, 4);
  CHECK(eco::cider_d(pool[4], std::span(pool).subspan(0, 1), df, {}) == 0.0);
}

TEST_CASE("cider_d matches the brute-force oracle on the horse fixture") {
  const auto pool = profiles(kHorsePool);
  const auto df = eco::compute_df(pool, 4);
  const auto cand = eco::profile_caption("a man rides a horse", 4);
  const auto refs = profiles({"a man rides a horse on a beach", "a horse is ridden by a man"});
  const double got = eco::cider_d(cand, refs, df, {});

  std::vector<std::vector<std::string>> docs;
  for (const auto& c : kHorsePool) docs.push_back({c});
  const double expected = oracle::cider_d("a man rides a horse", {kHorsePool[0], kHorsePool[1]}, docs, {});
  CHECK(std::abs(expected - 2.6415055805046146) < 1e-12);  // frozen oracle value
  CHECK(std::abs(got - expected) < 1e-9);

  CHECK_THROWS_AS(eco::cider_d(cand, {}, df, {}), eco::ValidationError);
}

TEST_CASE("cider_d properties: order, duplicates, scale") {
  const auto pool = profiles(kHorsePool);
  const auto df = eco::compute_df(pool, 4);
  const eco::ConsensusConfig cfg;
  const std::vector<eco::NGramProfile> refs{pool[1], pool[2], pool[3]};
  const std::vector<eco::NGramProfile> reversed{pool[3], pool[2], pool[1]};
  CHECK(std::abs(eco::cider_d(pool[5], refs, df, cfg) - eco::cider_d(pool[5], reversed, df, cfg)) < 1e-12);

  const std::vector<eco::NGramProfile> one{pool[1]};
  const std::vector<eco::NGramProfile> dup{pool[1], pool[1]};
  CHECK(eco::cider_d(pool[5], one, df, cfg) == eco::cider_d(pool[5], dup, df, cfg));

  eco::ConsensusConfig doubled = cfg;
  doubled.scale = 20.0;
  CHECK(eco::cider_d(pool[5], refs, df, doubled) == 2.0 * eco::cider_d(pool[5], refs, df, cfg));

  // Exact match dominates any other candidate against a single reference.
  for (const auto& ref : pool) {
    const std::vector<eco::NGramProfile> sole{ref};
    const double self = eco::cider_d(ref, sole, df, cfg);
    for (const auto& c : pool) CHECK(eco::cider_d(c, sole, df, cfg) <= self + 1e-12);
  }
}

TEST_CASE("ConsensusConfig validation") {
  eco::ConsensusConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_max = 0;
  CHECK_THROWS_AS(c.validate(), eco::ValidationError);
  c = {};
  c.sigma = 0.0;
  CHECK_THROWS_AS(c.validate(), eco::ValidationError);
  c = {};
  c.scale = -1.0;
  CHECK_THROWS_AS(c.validate(), eco::ValidationError);
}

TEST_CASE("consensus_scores: identical captions all score zero") {
  const auto cands = profiles({"a cat on a mat", "a cat on a mat", "a cat on a mat"});
  const auto s = eco::consensus_scores(cands, all_of(3), {});
  CHECK(s.channel == "consensus");
  CHECK(s.scores == std::vector<double>{0, 0, 0});
}

TEST_CASE("consensus_scores: two candidates score against each other") {
  const auto cands = profiles({"a dog runs fast", "a dog sleeps"});
  const auto s = eco::consensus_scores(cands, all_of(2), {});
  const auto df = eco::compute_df(cands, 4);
  CHECK(s.scores[0] == eco::cider_d(cands[0], std::span(cands).subspan(1, 1), df, {}));
  CHECK(s.scores[1] == eco::cider_d(cands[1], std::span(cands).subspan(0, 1), df, {}));
}

TEST_CASE("consensus_scores: dog fixture argmax and oracle values") {
  const auto cands = profiles(kDogPool);
  const auto s = eco::consensus_scores(cands, all_of(6), {});
  const auto expected = oracle::consensus(kDogPool, all_of(6), {});
  // Frozen oracle values.
  const std::vector<double> frozen{1.5061714723559294, 1.2663875829857558, 1.7665670764342429,
                                   0.91124081235364562, 0.079337567701033895, 0.7076299841046042};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(expected[i] - frozen[i]) < 1e-12);
    CHECK(std::abs(s.scores[i] - expected[i]) < 1e-9);
  }
  CHECK(std::max_element(s.scores.begin(), s.scores.end()) - s.scores.begin() == 2);
}

TEST_CASE("consensus_scores: candidates outside the pool score against the whole pool") {
  const auto cands = profiles(kDogPool);
  const std::vector<std::size_t> pool{0, 1, 2};
  const auto s = eco::consensus_scores(cands, pool, {});
  const auto df = eco::compute_df(cands, pool, 4);
  const std::vector<eco::NGramProfile> refs{cands[0], cands[1], cands[2]};
  CHECK(std::abs(s.scores[5] - eco::cider_d(cands[5], refs, df, {})) < 1e-12);
  const std::vector<eco::NGramProfile> refs_without_1{cands[0], cands[2]};
  CHECK(std::abs(s.scores[1] - eco::cider_d(cands[1], refs_without_1, df, {})) < 1e-12);
  CHECK(std::abs(s.scores[4] - oracle::consensus(kDogPool, pool, {})[4]) < 1e-9);
}

TEST_CASE("consensus_scores: singleton pool leaves its member without references") {
  const auto cands = profiles(kDogPool);
  const std::vector<std::size_t> pool{2};
  const auto s = eco::consensus_scores(cands, pool, {});
  CHECK(s.scores[2] == 0.0);
  CHECK_THROWS_AS(eco::consensus_scores(cands, {}, {}), eco::ValidationError);
  const std::vector<std::size_t> bad{9};
  CHECK_THROWS_AS(eco::consensus_scores(cands, bad, {}), eco::ValidationError);
}

TEST_CASE("consensus_scores: permutation equivariance and non-negativity") {
  std::mt19937 rng(17);
  const std::vector<std::string> words{"a", "dog", "cat", "runs", "park", "the", "red", "ball"};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng() % 5;
    std::vector<std::string> captions;
    for (std::size_t i = 0; i < n; ++i) {
      std::string c;
      const int len = 1 + static_cast<int>(rng() % 7);
      for (int k = 0; k < len; ++k) c += (k ? " " : "") + words[rng() % words.size()];
      captions.push_back(c);
    }
    std::vector<std::size_t> perm = all_of(n);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> shuffled;
    for (std::size_t i = 0; i < n; ++i) shuffled.push_back(captions[perm[i]]);
    const auto a = eco::consensus_scores(profiles(captions), all_of(n), {});
    const auto b = eco::consensus_scores(profiles(shuffled), all_of(n), {});
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(a.scores[i] >= 0.0);
      CHECK(std::abs(b.scores[i] - a.scores[perm[i]]) < 1e-9);
    }
  }
}
