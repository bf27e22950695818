// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "json.hpp"
#include "lmslice/generation.hpp"
#include "lmslice/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lmslice::gen;
using lmslice::testing::TempDir;

namespace {

GenerationDoc doc(ModelTag tag, std::size_t words, const std::string& id = "d") {
  GenerationDoc d;
  d.model_tag = tag;
  d.doc_id = id;
  for (std::size_t i = 0; i < words; ++i) d.text += i ? " w" : "w";
  d.word_count = words;
  return d;
}

std::vector<double> vals(std::initializer_list<double> v) { return v; }

}  // namespace

TEST(Count, NonOverlapping) {
  EXPECT_EQ(count_occurrences("aaa", "aa"), 1u);
  EXPECT_EQ(count_occurrences("aaaa", "aa"), 2u);
  EXPECT_EQ(count_occurrences("abc", "x"), 0u);
  EXPECT_THROW(count_occurrences("abc", ""), GenerationError);
}

TEST(Count, PeriodQuoteVariants) {
  const std::string text = "He said \"go.” She said \"stop.” Then \"fine.\"";
  EXPECT_EQ(count_occurrences(text, ".”"), 2u);
  const auto h = make_hypothesis("period+quote", Direction::kBGreater);
  ASSERT_EQ(h.variants.size(), 2u);
  std::size_t total = 0;
  for (const auto& v : h.variants) total += count_occurrences(text, v);
  EXPECT_EQ(total, 3u);
}

TEST(Count, NamedPatternsResolveToBytes) {
  EXPECT_EQ(make_hypothesis("tab", Direction::kAGreater).variants, (std::vector<std::string>{"\x09"}));
  EXPECT_EQ(make_hypothesis("double-space", Direction::kAGreater).variants,
            (std::vector<std::string>{"\x20\x20"}));
  EXPECT_EQ(make_hypothesis("period+quote", Direction::kAGreater).variants,
            (std::vector<std::string>{".\"", ".\xE2\x80\x9D"}));
  EXPECT_EQ(make_hypothesis("foo", Direction::kAGreater).variants, (std::vector<std::string>{"foo"}));
  EXPECT_THROW(make_hypothesis("", Direction::kAGreater), GenerationError);
}

TEST(Count, BoundedByLength) {
  std::mt19937 rng(1);
  for (int c = 0; c < 300; ++c) {
    std::string text, target;
    for (int i = 0; i < 30; ++i) text.push_back("ab"[rng() % 2]);
    for (int i = 0, n = 1 + rng() % 3; i < n; ++i) target.push_back("ab"[rng() % 2]);
    EXPECT_LE(count_occurrences(text, target) * target.size(), text.size());
  }
}

TEST(Filter, LengthBounds) {
  std::vector<GenerationDoc> docs{doc(ModelTag::kA, 399), doc(ModelTag::kA, 400),
                                  doc(ModelTag::kA, 600), doc(ModelTag::kA, 601),
                                  doc(ModelTag::kB, 500)};
  FilterConfig cfg;
  cfg.sample_n = 2;
  const auto f = filter_generations(docs, cfg);
  ASSERT_EQ(f.a.size(), 2u);
  EXPECT_EQ(f.a[0].word_count, 400u);
  EXPECT_EQ(f.a[1].word_count, 600u);
  EXPECT_EQ(f.b.size(), 1u);
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(Filter, SamplesReproducibly) {
  std::vector<GenerationDoc> docs;
  for (int i = 0; i < 700; ++i) docs.push_back(doc(ModelTag::kA, 450, std::to_string(i)));
  for (int i = 0; i < 700; ++i) docs.push_back(doc(ModelTag::kB, 450, "b" + std::to_string(i)));
  FilterConfig cfg;
  cfg.seed = 3;
  const auto x = filter_generations(docs, cfg);
  const auto y = filter_generations(docs, cfg);
  ASSERT_EQ(x.a.size(), 500u);
  ASSERT_EQ(x.b.size(), 500u);
  EXPECT_TRUE(x.warnings.empty());
  for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(x.a[i].doc_id, y.a[i].doc_id);
  cfg.seed = 4;
  const auto z = filter_generations(docs, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < 500; ++i) differs = differs || z.a[i].doc_id != x.a[i].doc_id;
  EXPECT_TRUE(differs);
}

TEST(Filter, SmallPoolWarns) {
  std::vector<GenerationDoc> docs;
  for (int i = 0; i < 20; ++i) docs.push_back(doc(ModelTag::kA, 450));
  for (int i = 0; i < 20; ++i) docs.push_back(doc(ModelTag::kB, 450));
  const auto f = filter_generations(docs);
  EXPECT_EQ(f.a.size(), 20u);
  EXPECT_EQ(f.warnings.size(), 2u);
  EXPECT_NE(f.warnings[0].find("only 20"), std::string::npos);
}

TEST(Read, WordCountsAndIds) {
  TempDir d;
  lmslice::testing::spit(d / "g.jsonl",
                         "{\"doc_id\": 3, \"text\": \"a b\\tc\"}\n{\"doc_id\": \"x\", \"text\": \"\"}\n");
  const auto g = read_generations(d / "g.jsonl", ModelTag::kB);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].doc_id, "3");
  EXPECT_EQ(g[0].word_count, 4u);
  EXPECT_EQ(g[0].model_tag, ModelTag::kB);
  EXPECT_EQ(g[1].word_count, 0u);
  lmslice::testing::spit(d / "bad.jsonl", "{\"text\": 1}\n");
  EXPECT_THROW(read_generations(d / "bad.jsonl", ModelTag::kA), GenerationError);
}

TEST(MannWhitney, ExactSmallCase) {
  const auto a = vals({1, 2, 3}), b = vals({0, 0, 0});
  const auto r = mann_whitney_u(a, b, Alternative::kGreater);
  EXPECT_EQ(r.method, Method::kExact);
  EXPECT_EQ(r.p, 0.05);
  EXPECT_EQ(r.u, 9.0);
  EXPECT_EQ(mann_whitney_u(a, b, Alternative::kLess).p, 1.0);
}

TEST(MannWhitney, AllTiesGiveOne) {
  const auto a = vals({1, 1}), b = vals({1, 1});
  EXPECT_EQ(mann_whitney_u(a, b, Alternative::kGreater).p, 1.0);
  EXPECT_EQ(mann_whitney_u(a, b, Alternative::kGreater, Method::kNormal).p, 1.0);
  EXPECT_EQ(mann_whitney_u(a, b, Alternative::kGreater).u, 2.0);
}

TEST(MannWhitney, Errors) {
  const auto a = vals({1}), empty = std::vector<double>{};
  EXPECT_THROW(mann_whitney_u(a, empty, Alternative::kGreater), GenerationError);
  const auto nan = vals({std::nan("")});
  EXPECT_THROW(mann_whitney_u(a, nan, Alternative::kGreater), GenerationError);
}

TEST(MannWhitney, ExactMatchesPermutationOracle) {
  std::mt19937 rng(2);
  for (int c = 0; c < 400; ++c) {
    std::vector<double> a(1 + rng() % 7), b(1 + rng() % 7);
    for (auto& x : a) x = static_cast<double>(rng() % 4);
    for (auto& x : b) x = static_cast<double>(rng() % 4);
    for (bool greater : {true, false}) {
      const auto r = mann_whitney_u(a, b, greater ? Alternative::kGreater : Alternative::kLess,
                                    Method::kExact);
      ASSERT_EQ(r.p, lmslice::oracle::mann_whitney_permutation_p(a, b, greater)) << "case " << c;
      ASSERT_EQ(r.u * 2, static_cast<double>(lmslice::oracle::u2_pairwise(a, b)));
    }
  }
}

TEST(MannWhitney, URangeAndComplement) {
  std::mt19937 rng(3);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> a(1 + rng() % 30), b(1 + rng() % 30);
    for (auto& x : a) x = static_cast<double>(rng() % 5);
    for (auto& x : b) x = static_cast<double>(rng() % 5);
    const auto ua = mann_whitney_u(a, b, Alternative::kGreater).u;
    const auto ub = mann_whitney_u(b, a, Alternative::kGreater).u;
    const double nn = static_cast<double>(a.size() * b.size());
    EXPECT_GE(ua, 0);
    EXPECT_LE(ua, nn);
    EXPECT_EQ(ua + ub, nn);
  }
}

TEST(MannWhitney, SwapAntisymmetry) {
  std::mt19937 rng(4);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> a(1 + rng() % 8), b(1 + rng() % 8);
    for (auto& x : a) x = static_cast<double>(rng() % 100);
    for (auto& x : b) x = static_cast<double>(rng() % 100);
    const auto g = mann_whitney_u(a, b, Alternative::kGreater);
    const auto l = mann_whitney_u(b, a, Alternative::kLess);
    EXPECT_NEAR(g.p, l.p, 1e-12);
  }
}

TEST(MannWhitney, LargeSamplesUseNormal) {
  std::vector<double> a(25, 1.0), b(25, 0.0);
  a[0] = 0.0;
  const auto r = mann_whitney_u(a, b, Alternative::kGreater);
  EXPECT_EQ(r.method, Method::kNormal);
  EXPECT_LT(r.p, 1e-6);
}

TEST(MannWhitney, NormalCloseToExactForModerateSamples) {
  // Both methods on 20 x 20 samples with mild ties: the product is at the
  // exact limit, so both are available.
  std::mt19937 rng(5);
  for (int c = 0; c < 30; ++c) {
    std::vector<double> a(20), b(20);
    for (auto& x : a) x = static_cast<double>(rng() % 10);
    for (auto& x : b) x = static_cast<double>(rng() % 10 + (c % 3));
    const auto ex = mann_whitney_u(a, b, Alternative::kLess, Method::kExact);
    const auto no = mann_whitney_u(a, b, Alternative::kLess, Method::kNormal);
    EXPECT_NEAR(ex.p, no.p, 0.02) << "case " << c;
  }
}

TEST(Hypotheses, RunAndReport) {
  std::vector<GenerationDoc> a, b;
  for (int i = 0; i < 10; ++i) {
    GenerationDoc x;
    x.text = "a\tb\tc\td\te\t and  x";
    a.push_back(x);
    GenerationDoc y;
    y.text = "plain text and  x";
    b.push_back(y);
  }
  std::vector<StringHypothesis> hs{make_hypothesis("tab", Direction::kAGreater),
                                   make_hypothesis("double-space", Direction::kAGreater),
                                   make_hypothesis("tab", Direction::kBGreater)};
  const auto rows = run_hypotheses(a, b, hs);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].significant);
  EXPECT_EQ(rows[0].mean_a, 5.0);
  EXPECT_EQ(rows[0].mean_b, 0.0);
  EXPECT_EQ(rows[0].u, 100.0);
  EXPECT_FALSE(rows[1].significant);
  EXPECT_EQ(rows[1].p, 1.0);
  EXPECT_FALSE(rows[2].significant);
  EXPECT_TRUE(run_hypotheses(a, b, std::vector<StringHypothesis>{}).empty());

  TempDir d;
  const std::vector<std::string> warns{"w"};
  write_hypothesis_report(d / "r.json", rows, warns);
  const auto j = nlohmann::json::parse(lmslice::testing::slurp(d / "r.json"));
  ASSERT_EQ(j["rows"].size(), 3u);
  const auto& r0 = j["rows"][0];
  EXPECT_EQ(r0["target"], "tab");
  EXPECT_EQ(r0["direction"], "A_greater");
  EXPECT_EQ(r0["n_a"], 10);
  EXPECT_EQ(r0["U"], 100.0);
  EXPECT_EQ(r0["method"], "exact");
  EXPECT_EQ(r0["significant"], true);
  EXPECT_TRUE(r0.contains("p"));
  EXPECT_EQ(j["warnings"][0], "w");
}

TEST(Hypotheses, ReadFile) {
  TempDir d;
  lmslice::testing::spit(d / "h.json",
                         "[{\"target\":\"tab\",\"direction\":\"A_greater\"},"
                         "{\"target\":\"ok\",\"direction\":\"B_greater\"}]");
  const auto hs = read_hypotheses(d / "h.json");
  ASSERT_EQ(hs.size(), 2u);
  EXPECT_EQ(hs[0].variants[0], "\t");
  EXPECT_EQ(hs[1].direction, Direction::kBGreater);
  lmslice::testing::spit(d / "bad.json", "[{\"target\":\"tab\",\"direction\":\"up\"}]");
  EXPECT_THROW(read_hypotheses(d / "bad.json"), GenerationError);
}

TEST(Hypotheses, SyntheticFixtureFindsPlantedTabs) {
  TempDir d;
  lmslice::synth::write_generation_fixture(d.path());
  const auto ga = read_generations(d / "gen_a.jsonl", ModelTag::kA);
  const auto gb = read_generations(d / "gen_b.jsonl", ModelTag::kB);
  std::vector<GenerationDoc> all(ga);
  all.insert(all.end(), gb.begin(), gb.end());
  const auto f = filter_generations(all);
  const auto rows = run_hypotheses(f.a, f.b, read_hypotheses(d / "hypotheses.json"));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0].target, "tab");
  EXPECT_TRUE(rows[0].significant);
  EXPECT_EQ(f.a.size(), 40u);
}
