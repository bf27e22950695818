// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lmslice/aligner.hpp"
#include "test_util.hpp"

using namespace lmslice::align;
using lmslice::corpus::ByteSpan;
using lmslice::dump::StreamRole;
using lmslice::dump::TokenDumpWriter;
using lmslice::testing::make_record;
using lmslice::testing::TempDir;

namespace {

std::vector<std::string> word_texts(const std::string& doc) {
  std::vector<std::string> out;
  for (const auto& w : pretokenize(doc)) out.push_back(doc.substr(w.span.start, w.span.size()));
  return out;
}

TokenPiece tok(const std::string& doc, std::uint64_t s, std::uint64_t e, double lp = -0.1) {
  TokenPiece t;
  t.text = doc.substr(s, e - s);
  t.span = {s, e};
  t.logprob = lp;
  return t;
}

// Independent segmentation: classify every byte, then cut runs, then drop
// lone interior spaces.
std::vector<WordSpan> oracle_pretokenize(const std::string& doc) {
  std::vector<WordSpan> runs;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const bool ws = doc[i] == ' ' || doc[i] == '\t' || doc[i] == '\n';
    const auto kind = ws ? WordKind::kWhitespace : WordKind::kContent;
    if (!runs.empty() && runs.back().kind == kind && runs.back().span.end == i) {
      runs.back().span.end = i + 1;
    } else {
      runs.push_back({{i, i + 1}, kind});
    }
  }
  std::vector<WordSpan> out;
  for (const auto& r : runs) {
    const bool lone_space = r.kind == WordKind::kWhitespace && r.span.size() == 1 &&
                            doc[r.span.start] == ' ';
    if (lone_space && r.span.start > 0 && r.span.end < doc.size()) continue;
    out.push_back(r);
  }
  return out;
}

// Word owning the first byte of the token that lies inside some word.
std::size_t oracle_owner(const std::vector<WordSpan>& words, ByteSpan t) {
  for (auto b = t.start; b < t.end; ++b) {
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (words[w].span.start <= b && b < words[w].span.end) return w;
    }
  }
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].span.start >= t.end) return w;
  }
  return words.size() - 1;
}

}  // namespace

TEST(Pretokenize, SingleSpaceIsDropped) {
  EXPECT_EQ(word_texts("a b"), (std::vector<std::string>{"a", "b"}));
}

TEST(Pretokenize, TabBecomesAWord) {
  EXPECT_EQ(word_texts("a\tb"), (std::vector<std::string>{"a", "\t", "b"}));
  EXPECT_EQ(pretokenize("a\tb")[1].kind, WordKind::kWhitespace);
}

TEST(Pretokenize, DoubleSpaceBecomesAWord) {
  EXPECT_EQ(word_texts("a  b"), (std::vector<std::string>{"a", "  ", "b"}));
  EXPECT_EQ(word_texts("a \nb"), (std::vector<std::string>{"a", " \n", "b"}));
}

TEST(Pretokenize, EdgeSpacesAreWords) {
  EXPECT_EQ(word_texts(" a b "), (std::vector<std::string>{" ", "a", "b", " "}));
  EXPECT_TRUE(pretokenize("").empty());
  EXPECT_EQ(word_texts(" "), (std::vector<std::string>{" "}));
}

TEST(Pretokenize, MatchesOracleExhaustively) {
  const char alphabet[] = {'a', ' ', '\t'};
  for (int len = 0; len <= 7; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::string doc;
      for (int i = 0, c = code; i < len; ++i, c /= 3) doc.push_back(alphabet[c % 3]);
      ASSERT_EQ(pretokenize(doc), oracle_pretokenize(doc)) << "doc=[" << doc << "]";
      ASSERT_EQ(count_words(doc), oracle_pretokenize(doc).size());
    }
  }
}

TEST(MapTokens, LeadingSpaceTokenGoesToFollowingWord) {
  const std::string doc = "the cat";
  const auto words = pretokenize(doc);
  std::vector<TokenPiece> toks{tok(doc, 0, 3), tok(doc, 3, 7)};
  const auto m = map_tokens_to_words(words, toks, doc.size());
  EXPECT_EQ(m.word_tokens[0], (std::vector<std::size_t>{0}));
  EXPECT_EQ(m.word_tokens[1], (std::vector<std::size_t>{1}));
  EXPECT_TRUE(m.zero_token_words.empty());
}

TEST(MapTokens, StraddlingTokenGoesToWordOfFirstByte) {
  const std::string doc = "hello world";
  const auto words = pretokenize(doc);
  // "lo w" starts inside "hello".
  std::vector<TokenPiece> toks{tok(doc, 0, 3), tok(doc, 3, 7), tok(doc, 7, 11)};
  const auto m = map_tokens_to_words(words, toks, doc.size());
  EXPECT_EQ(m.word_tokens[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(m.word_tokens[1], (std::vector<std::size_t>{2}));
}

TEST(MapTokens, ZeroTokenWordsAndEmptyTokens) {
  const std::string doc = "ab cd ef";
  const auto words = pretokenize(doc);
  std::vector<TokenPiece> toks{tok(doc, 0, 5), tok(doc, 5, 5), tok(doc, 5, 8)};
  const auto m = map_tokens_to_words(words, toks, doc.size());
  EXPECT_EQ(m.zero_token_words, (std::vector<std::size_t>{1}));
  EXPECT_EQ(m.empty_tokens, 1u);
  EXPECT_EQ(m.word_tokens[2], (std::vector<std::size_t>{2}));
}

TEST(MapTokens, TokenPastEndThrows) {
  const std::string doc = "ab";
  const auto words = pretokenize(doc);
  std::vector<TokenPiece> toks{tok("abc", 0, 3)};
  EXPECT_THROW(map_tokens_to_words(words, toks, doc.size()), AlignError);
}

TEST(MapTokens, MatchesOracleOnRandomTokenizations) {
  std::mt19937 rng(5);
  const char alphabet[] = {'a', 'b', ' ', ' ', '\t'};
  for (int trial = 0; trial < 3000; ++trial) {
    std::string doc;
    const int len = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < len; ++i) doc.push_back(alphabet[rng() % 5]);
    const auto words = pretokenize(doc);
    if (words.empty()) continue;
    std::vector<TokenPiece> toks;
    std::uint64_t pos = 0;
    while (pos < doc.size()) {
      const std::uint64_t e = std::min<std::uint64_t>(doc.size(), pos + 1 + rng() % 4);
      toks.push_back(tok(doc, pos, e));
      pos = e;
    }
    const auto m = map_tokens_to_words(words, toks, doc.size());
    std::size_t assigned = 0;
    for (std::size_t w = 0; w < words.size(); ++w) {
      for (auto t : m.word_tokens[w]) {
        ASSERT_EQ(w, oracle_owner(oracle_pretokenize(doc), toks[t].span)) << "doc=[" << doc << "]";
        ++assigned;
      }
    }
    ASSERT_EQ(assigned, toks.size());
  }
}

TEST(Aggregate, EmbeddingIsMean) {
  std::vector<std::vector<float>> e{{1, 2}, {3, 4}, {5, 9}};
  EXPECT_EQ(aggregate_word_embedding(e), (std::vector<float>{3, 5}));
}

TEST(Aggregate, MeanOfFiveRowsMatchesSumOverFive) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<std::vector<float>> e(5, std::vector<float>(8));
  for (auto& row : e)
    for (auto& x : row) x = u(rng);
  const auto m = aggregate_word_embedding(e);
  for (int i = 0; i < 8; ++i) {
    double s = 0;
    for (const auto& row : e) s += row[i];
    EXPECT_NEAR(m[i], s / 5.0, 1e-6);
  }
}

TEST(Aggregate, LogprobIsLogOfProduct) {
  const std::vector<double> lp{std::log(0.5), std::log(0.25), std::log(0.8)};
  long double prod = 0.5L * 0.25L * 0.8L;
  EXPECT_NEAR(aggregate_word_logprob(lp), static_cast<double>(std::log(prod)), 1e-12);
  const std::vector<double> bad{0.1};
  EXPECT_THROW(aggregate_word_logprob(bad), AlignError);
}

TEST(Scale, ClosedForm) {
  // |e| = 2 for both records; |p| = hypot(exp(lpa), exp(lpb)).
  std::vector<WordRecord> rs(2);
  rs[0].embedding = {2, 0};
  rs[1].embedding = {0, 2};
  rs[0].logprob_a = rs[1].logprob_a = std::log(0.6);
  rs[0].logprob_b = rs[1].logprob_b = std::log(0.8);
  AlignConfig cfg;
  cfg.prob_weight = 0.7;
  const auto s = compute_probability_scale(rs, cfg);
  // (0.7/0.3) * (2 / 1) = 14/3
  EXPECT_NEAR(s.scale, 14.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.mean_prob_norm, 1.0, 1e-12);
  cfg.prob_weight = 0.5;
  EXPECT_NEAR(compute_probability_scale(rs, cfg).scale, 2.0, 1e-12);
}

TEST(Scale, ScaledShareMatchesWeight) {
  std::vector<WordRecord> rs;
  for (int i = 0; i < 50; ++i) rs.push_back(make_record(i, 6, -0.1 * (i % 7), -0.05 * (i % 11)));
  AlignConfig cfg;
  cfg.prob_weight = 0.7;
  const auto s = compute_probability_scale(rs, cfg);
  const double share = s.scale * s.mean_prob_norm / (s.scale * s.mean_prob_norm + s.mean_embedding_norm);
  EXPECT_NEAR(share, 0.7, 1e-12);
  cfg.prob_weight = 0.5;
  const auto h = compute_probability_scale(rs, cfg);
  EXPECT_NEAR(h.scale * h.mean_prob_norm, h.mean_embedding_norm, 1e-9);
}

TEST(Scale, DegenerateProbabilitiesForceUnitScale) {
  std::vector<WordRecord> rs(1);
  rs[0].embedding = {1};
  rs[0].logprob_a = rs[0].logprob_b = -1000.0;
  const auto s = compute_probability_scale(rs, AlignConfig{});
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.scale, 1.0);
  AlignConfig bad;
  bad.prob_weight = 1.0;
  EXPECT_THROW(compute_probability_scale(rs, bad), AlignError);
}

TEST(FeatureVector, AppendsScaledProbabilities) {
  WordRecord r;
  r.embedding = {1, 0};
  r.logprob_a = std::log(0.6);
  r.logprob_b = std::log(0.2);
  const auto v = build_feature_vector(r, 3.0);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_FLOAT_EQ(v[0], 1);
  EXPECT_FLOAT_EQ(v[1], 0);
  EXPECT_NEAR(v[2], 1.8, 1e-6);
  EXPECT_NEAR(v[3], 0.6, 1e-6);
}

TEST(Context, ClipsToRadiusAndDocument) {
  std::string doc(1000, 'x');
  auto c = make_context(doc, {500, 503});
  EXPECT_EQ(c.text.size(), 603u);
  EXPECT_EQ(c.word_offset, 300u);
  c = make_context(doc, {10, 12});
  EXPECT_EQ(c.word_offset, 10u);
  EXPECT_EQ(c.text.size(), 312u);
  c = make_context(doc, {995, 1000});
  EXPECT_EQ(c.text.size(), 305u);
}

TEST(Context, RespectsCodePointBoundaries) {
  // "é" is two bytes; a 1-byte radius must not cut it.
  const std::string doc = "\xC3\xA9" "ab" "\xC3\xA9";
  auto c = make_context(doc, {2, 4}, 1);
  EXPECT_EQ(c.text, "ab");
  EXPECT_EQ(c.word_offset, 0u);
  c = make_context(doc, {2, 4}, 2);
  EXPECT_EQ(c.text, doc);
}

namespace {

struct ThreeStreams {
  AlignInputs in;
};

// Document "hello world  end": embed splits "hello" 2/... ; lm_a splits "world"
// into three pieces; lm_b has one token per word.
ThreeStreams write_streams(const lmslice::testing::TempDir& d, const std::string& doc,
                           const std::vector<std::pair<int, int>>& e_spans,
                           const std::vector<std::pair<int, int>>& a_spans,
                           const std::vector<std::pair<int, int>>& b_spans,
                           bool drop_doc_from_b = false) {
  ThreeStreams s{{d / "embed", d / "lm_a", d / "lm_b"}};
  {
    TokenDumpWriter w(s.in.embed_dir, StreamRole::kEmbed, "emb", 2);
    std::vector<TokenPiece> toks;
    float v = 1;
    for (auto [a, b] : e_spans) {
      TokenPiece t = tok(doc, a, b);
      t.logprob.reset();
      t.embedding = std::vector<float>{v, -v};
      v += 1;
      toks.push_back(t);
    }
    w.add_document(7, "src", doc, toks);
    w.finish();
  }
  auto lm = [&](const std::filesystem::path& dir, StreamRole role,
                const std::vector<std::pair<int, int>>& spans, double lp, bool skip) {
    TokenDumpWriter w(dir, role, role == StreamRole::kLmA ? "A" : "B");
    std::vector<TokenPiece> toks;
    for (auto [a, b] : spans) toks.push_back(tok(doc, a, b, lp));
    if (!skip) w.add_document(7, "src", doc, toks);
    w.finish();
  };
  lm(s.in.lm_a_dir, StreamRole::kLmA, a_spans, -0.2, false);
  lm(s.in.lm_b_dir, StreamRole::kLmB, b_spans, -0.3, drop_doc_from_b);
  return s;
}

}  // namespace

TEST(AlignCorpus, TwoWordDocument) {
  TempDir d;
  const std::string doc = "a b";
  auto s = write_streams(d, doc, {{0, 1}, {1, 3}}, {{0, 1}, {1, 3}}, {{0, 1}, {2, 3}});
  const auto stats = align_corpus(s.in, d / "c.bbx");
  EXPECT_EQ(stats.documents, 1u);
  EXPECT_EQ(stats.words, 2u);
  EXPECT_EQ(stats.records, 2u);
  auto [h, recs] = lmslice::corpus::read_corpus(d / "c.bbx");
  EXPECT_EQ(h.model_a_name, "A");
  EXPECT_EQ(h.embed_model_name, "emb");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].word, "a");
  EXPECT_EQ(recs[1].word, "b");
  EXPECT_EQ(recs[1].word_id, 1u);
  EXPECT_EQ(recs[1].doc_id, 7u);
  EXPECT_EQ(recs[1].source, "src");
  EXPECT_EQ(recs[1].context, "a b");
  EXPECT_EQ(recs[1].context_offset, 2u);
  EXPECT_EQ(recs[1].span, (ByteSpan{2, 3}));
}

TEST(AlignCorpus, SplitTokensAreAggregated) {
  TempDir d;
  const std::string doc = "hello world";
  // embed: he|llo| world (2 + 1), lm_a: hello| w|or|ld (1 + 3), lm_b: one each.
  auto s = write_streams(d, doc, {{0, 2}, {2, 5}, {5, 11}}, {{0, 5}, {5, 7}, {7, 9}, {9, 11}},
                         {{0, 5}, {5, 11}});
  align_corpus(s.in, d / "c.bbx");
  auto [h, recs] = lmslice::corpus::read_corpus(d / "c.bbx");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_FLOAT_EQ(recs[0].embedding[0], 1.5f);
  EXPECT_FLOAT_EQ(recs[0].embedding[1], -1.5f);
  EXPECT_FLOAT_EQ(recs[1].embedding[0], 3.0f);
  EXPECT_DOUBLE_EQ(recs[0].logprob_a, -0.2);
  EXPECT_NEAR(recs[1].logprob_a, -0.6, 1e-12);
  EXPECT_DOUBLE_EQ(recs[1].logprob_b, -0.3);
}

TEST(AlignCorpus, WordsMissingAStreamAreSkippedAndCounted) {
  TempDir d;
  const std::string doc = "ab cd ef";
  // lm_b covers "ab cd" with one token, leaving "cd" without tokens.
  auto s = write_streams(d, doc, {{0, 2}, {2, 5}, {5, 8}}, {{0, 2}, {2, 5}, {5, 8}},
                         {{0, 5}, {5, 8}});
  const auto stats = align_corpus(s.in, d / "c.bbx");
  EXPECT_EQ(stats.words, 3u);
  EXPECT_EQ(stats.records, 2u);
  EXPECT_EQ(stats.skipped_words, 1u);
  EXPECT_EQ(stats.skipped_missing_lm_b, 1u);
  EXPECT_EQ(stats.words, stats.records + stats.skipped_words);
  auto [h, recs] = lmslice::corpus::read_corpus(d / "c.bbx");
  EXPECT_EQ(recs[1].word, "ef");
  EXPECT_EQ(recs[1].word_id, 1u);
}

TEST(AlignCorpus, MissingDocumentNamesIt) {
  TempDir d;
  const std::string doc = "x y";
  auto s = write_streams(d, doc, {{0, 1}, {1, 3}}, {{0, 1}, {1, 3}}, {{0, 1}, {1, 3}}, true);
  try {
    align_corpus(s.in, d / "c.bbx");
    FAIL() << "expected AlignError";
  } catch (const AlignError& e) {
    EXPECT_NE(std::string(e.what()).find("doc 7"), std::string::npos) << e.what();
  }
}
