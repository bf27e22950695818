// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lmslice/features.hpp"
#include "test_util.hpp"

using namespace lmslice::features;
using lmslice::corpus::WordRecord;
using lmslice::testing::TempDir;

namespace {

lmslice::sae::ActivationList acts(std::initializer_list<double> values) {
  lmslice::sae::ActivationList out;
  std::uint64_t id = 0;
  for (double v : values) out.emplace_back(id++, v);
  return out;
}

lmslice::sae::ActivationList ramp(std::size_t n) {
  lmslice::sae::ActivationList out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(i, 1.0 + static_cast<double>(i));
  return out;
}

FeatureSlice slice_of(std::initializer_list<double> values) {
  FeatureSlice s;
  std::uint64_t id = 0;
  for (double v : values) s.samples.push_back({id++, v});
  s.max_activation = s.samples.empty() ? 0.0 : s.samples.front().activation;
  return s;
}

// Lookup whose record i has the given probabilities.
CorpusLookup lookup_with(const std::vector<std::pair<double, double>>& probs) {
  CorpusLookup l;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto r = lmslice::testing::make_record(i, 2, std::log(probs[i].first), std::log(probs[i].second));
    l.add(r);
  }
  return l;
}

FeatureSlice ids_slice(std::size_t n) {
  FeatureSlice s;
  for (std::size_t i = 0; i < n; ++i) s.samples.push_back({i, 1.0});
  s.max_activation = 1.0;
  return s;
}

}  // namespace

TEST(Collect, DropsRareLatents) {
  FilterThresholds t;
  EXPECT_FALSE(collect_top_samples(0, ramp(8), t).has_value());
  EXPECT_TRUE(collect_top_samples(0, ramp(10), t).has_value());
}

TEST(Collect, KeepsTopFiftyInActivationOrder) {
  FilterThresholds t;
  const auto s = collect_top_samples(3, ramp(60), t);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->feature_id, 3u);
  ASSERT_EQ(s->samples.size(), 50u);
  EXPECT_EQ(s->samples.front().activation, 60.0);
  EXPECT_EQ(s->samples.back().activation, 11.0);
  EXPECT_EQ(s->max_activation, 60.0);
  EXPECT_EQ(collect_top_samples(0, ramp(12), t)->samples.size(), 12u);
}

TEST(Collect, TiesOrderByWordId) {
  FilterThresholds t;
  t.min_nonzero = 1;
  lmslice::sae::ActivationList a{{9, 1.0}, {3, 1.0}, {5, 2.0}};
  const auto s = collect_top_samples(0, a, t);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->samples, (std::vector<Sample>{{5, 2.0}, {3, 1.0}, {9, 1.0}}));
}

TEST(Collect, StreamingCollectorMatchesBatch) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  FilterThresholds t;
  const std::size_t latents = 20;
  std::vector<lmslice::sae::ActivationList> lists(latents);
  TopSampleCollector c(latents, t.top_n);
  for (std::uint64_t w = 0; w < 2000; ++w) {
    for (std::size_t j = 0; j < latents; ++j) {
      if (rng() % (j + 2) != 0) continue;
      // quantized so ties occur
      const double a = std::round(u(rng) * 20) / 20;
      if (a == 0.0) continue;
      lists[j].emplace_back(w, a);
      c.add(w, j, a);
    }
  }
  for (std::size_t j = 0; j < latents; ++j) {
    EXPECT_EQ(c.nonzero_count(j), lists[j].size());
    EXPECT_EQ(c.slice(j, t), collect_top_samples(j, lists[j], t)) << "latent " << j;
  }
}

TEST(Cutoff, DropsSmallTail) {
  const auto out = apply_activation_cutoff(slice_of({1.0, 0.3, 0.2, 0.01}), FilterThresholds{});
  ASSERT_EQ(out.samples.size(), 3u);
  EXPECT_EQ(out.samples.back().activation, 0.2);
}

TEST(Cutoff, ValueClauseAloneKeepsSample) {
  // rank clause keeps 3 of 4; the fourth survives on value (0.3 >= 0.25).
  const auto out = apply_activation_cutoff(slice_of({1.0, 0.9, 0.8, 0.3}), FilterThresholds{});
  EXPECT_EQ(out.samples.size(), 4u);
}

TEST(Cutoff, RankLimitIsCeilWithoutRoundingUp) {
  // 0.75 * 8 = 6 exactly: ranks 1..6 survive, not 7.
  std::vector<double> v{1.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2};
  FeatureSlice s;
  for (std::size_t i = 0; i < v.size(); ++i) s.samples.push_back({i, v[i]});
  s.max_activation = 1.0;
  EXPECT_EQ(apply_activation_cutoff(s, FilterThresholds{}).samples.size(), 6u);
}

TEST(Cutoff, NeverRemovesTheMaximum) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 200; ++c) {
    FeatureSlice s;
    const auto n = 1 + rng() % 50;
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng) + 1e-6;
    std::sort(v.begin(), v.end(), std::greater<>());
    for (std::size_t i = 0; i < n; ++i) s.samples.push_back({i, v[i]});
    s.max_activation = v[0];
    FilterThresholds t;
    t.rank_frac = u(rng);
    t.value_frac = 1.0;
    const auto out = apply_activation_cutoff(s, t);
    ASSERT_FALSE(out.samples.empty());
    EXPECT_EQ(out.samples.front(), s.samples.front());
  }
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(median({7}), 7.0);
  EXPECT_THROW(median({}), FeatureError);
}

TEST(Stats, HandExample) {
  // diffs 0.3, 0.2, -0.1
  const auto l = lookup_with({{0.5, 0.2}, {0.6, 0.4}, {0.3, 0.4}});
  const auto st = compute_feature_stats(ids_slice(3), l);
  EXPECT_EQ(st.n, 3u);
  EXPECT_NEAR(st.median_prob_diff, 0.2, 1e-12);
  EXPECT_NEAR(st.median_logprob_diff, std::log(0.6 / 0.4), 1e-12);
  EXPECT_NEAR(st.consistency, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(st.favored_model, FavoredModel::kA);
}

TEST(Stats, EqualDiffsAreFullyConsistent) {
  const auto l = lookup_with({{0.7, 0.2}, {0.9, 0.4}, {0.6, 0.1}});
  const auto st = compute_feature_stats(ids_slice(3), l);
  EXPECT_NEAR(st.median_prob_diff, 0.5, 1e-12);
  EXPECT_EQ(st.consistency, 1.0);
}

TEST(Stats, ZeroMedianMatchesOnlyZeroDiffs) {
  const auto l = lookup_with({{0.5, 0.5}, {0.6, 0.4}, {0.4, 0.6}});
  const auto st = compute_feature_stats(ids_slice(3), l);
  EXPECT_EQ(st.median_prob_diff, 0.0);
  EXPECT_EQ(st.favored_model, FavoredModel::kNone);
  EXPECT_NEAR(st.consistency, 1.0 / 3.0, 1e-12);
}

TEST(Stats, SwappingModelsNegatesMedians) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int c = 0; c < 50; ++c) {
    std::vector<std::pair<double, double>> probs, swapped;
    const auto n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      probs.emplace_back(u(rng), u(rng));
      swapped.emplace_back(probs.back().second, probs.back().first);
    }
    const auto a = compute_feature_stats(ids_slice(n), lookup_with(probs));
    const auto b = compute_feature_stats(ids_slice(n), lookup_with(swapped));
    EXPECT_NEAR(a.median_prob_diff, -b.median_prob_diff, 1e-12);
    EXPECT_NEAR(a.median_logprob_diff, -b.median_logprob_diff, 1e-12);
    EXPECT_EQ(a.consistency, b.consistency);
    const auto flip = a.favored_model == FavoredModel::kA   ? FavoredModel::kB
                      : a.favored_model == FavoredModel::kB ? FavoredModel::kA
                                                            : FavoredModel::kNone;
    EXPECT_EQ(b.favored_model, flip);
  }
}

TEST(Filter, EitherThresholdKeeps) {
  FilterThresholds t;
  auto st = [](double p, double lp) {
    FeatureStats s;
    s.median_prob_diff = p;
    s.median_logprob_diff = lp;
    return s;
  };
  EXPECT_TRUE(passes_filter(st(0.999, 9.27), t));
  EXPECT_FALSE(passes_filter(st(0.05, 0.5), t));
  EXPECT_TRUE(passes_filter(st(0.02, 1.5), t));
  EXPECT_TRUE(passes_filter(st(-0.2, -0.1), t));
  EXPECT_TRUE(passes_filter(st(0.0, -1.01), t));
  // strict inequalities
  EXPECT_FALSE(passes_filter(st(0.1, 1.0), t));
  std::vector<FeatureStats> all{st(0.05, 0.5), st(0.5, 0), st(0, 0), st(0, 2)};
  EXPECT_EQ(filter_features(all, t), (std::vector<std::size_t>{1, 3}));
}

TEST(Dispersion, TwoPointsAtDistanceTwo) {
  CorpusLookup l;
  auto r0 = lmslice::testing::make_record(0, 2, std::log(0.5), std::log(0.5));
  auto r1 = lmslice::testing::make_record(1, 2, std::log(0.5), std::log(0.5));
  r0.embedding = {0, 0};
  r1.embedding = {2, 0};
  l.add(r0);
  l.add(r1);
  const auto d = compute_dispersion(ids_slice(2), l);
  EXPECT_NEAR(d.word_dist, 1.0, 1e-12);
  EXPECT_NEAR(d.prob_dist, 0.0, 1e-12);
}

TEST(Dispersion, ProbabilityPairs) {
  // (0.9, 0.1) and (0.1, 0.9): centroid (0.5, 0.5), each at distance sqrt(0.32).
  const auto l = lookup_with({{0.9, 0.1}, {0.1, 0.9}});
  EXPECT_NEAR(compute_dispersion(ids_slice(2), l).prob_dist, std::sqrt(0.32), 1e-12);
}

TEST(Thresholds, Validate) {
  FilterThresholds t;
  t.top_n = 0;
  EXPECT_THROW(t.validate(), lmslice::Error);
  t = {};
  t.rank_frac = 1.5;
  EXPECT_THROW(t.validate(), lmslice::Error);
}

TEST(FeatureDump, RoundTrip) {
  TempDir d;
  FeatureRecord f;
  f.feature_id = 17;
  f.stats = {3, 0.999, 9.27, 1.0, FavoredModel::kA};
  f.dispersion = {0.5, 0.25};
  f.samples.push_back({4, 2.5, "cat", "the cat sat", 4});
  f.samples.push_back({9, 1.5, "\t", "a\tb", std::nullopt});
  FeatureRecord g;
  g.feature_id = 20;
  g.stats = {1, -0.5, -2.0, 1.0, FavoredModel::kB};
  std::vector<FeatureRecord> all{f, g};
  write_feature_dump(d / "f.jsonl", all);
  const auto text = lmslice::testing::slurp(d / "f.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  for (const char* key : {"\"feature_id\"", "\"median_prob_diff\"", "\"median_logprob_diff\"",
                          "\"consistency\"", "\"favored_model\"", "\"word_dist\"", "\"prob_dist\"",
                          "\"samples\"", "\"word_id\"", "\"activation\"", "\"context\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  const auto back = read_feature_dump(d / "f.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].feature_id, 17u);
  EXPECT_EQ(back[0].stats.median_logprob_diff, 9.27);
  EXPECT_EQ(back[0].stats.favored_model, FavoredModel::kA);
  EXPECT_EQ(back[0].samples[1].word, "\t");
  EXPECT_EQ(back[0].samples[0].context_offset, 4u);
  EXPECT_FALSE(back[0].samples[1].context_offset.has_value());
  EXPECT_EQ(back[1].stats.favored_model, FavoredModel::kB);
  EXPECT_EQ(favored_from_string("none"), FavoredModel::kNone);
}
