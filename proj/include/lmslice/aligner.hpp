// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Word segmentation and token-to-word alignment.
//
// Three token streams (an embedding model and two LMs) tokenize the same
// document differently. Words are defined once from the raw bytes, each
// stream's tokens are assigned to words, and per-word values are aggregated:
// embeddings by mean, log-probabilities by sum (a product of probabilities).

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmslice/corpus.hpp"
#include "lmslice/error.hpp"
#include "lmslice/token_dump.hpp"

namespace lmslice::align {

using corpus::ByteSpan;
using corpus::WordRecord;
using dump::TokenPiece;

enum class WordKind { kContent, kWhitespace };

struct WordSpan {
  ByteSpan span;
  WordKind kind = WordKind::kContent;

  bool operator==(const WordSpan&) const = default;
};

struct AlignConfig {
  // Fraction of the mean input magnitude carried by the probability pair.
  double prob_weight = 0.7;
  double epsilon = 1e-12;

  void validate() const;
};

class AlignError : public Error {
 public:
  using Error::Error;
};

// Splits a document into words. Content words are maximal runs of
// non-whitespace bytes. A single ASCII space between two content words is a
// dropped separator; every other whitespace run (tabs, newlines, two or more
// spaces, or a lone space at either end of the document) is itself a word.
std::vector<WordSpan> pretokenize(std::string_view document);

// Number of words pretokenize() would produce.
std::size_t count_words(std::string_view document);

bool is_whitespace_byte(unsigned char c);

struct TokenAssignment {
  // word index -> indices of the tokens assigned to it, in token order.
  std::vector<std::vector<std::size_t>> word_tokens;
  // Words that received no token.
  std::vector<std::size_t> zero_token_words;
  // Tokens with an empty byte span (special tokens); they carry no text and
  // are not assigned.
  std::size_t empty_tokens = 0;
};

// Assigns each token to the word containing its first non-separator byte. A
// token made only of separator bytes goes to the following word (or the last
// word at end of document). Throws AlignError for tokens beyond the document.
TokenAssignment map_tokens_to_words(std::span<const WordSpan> words,
                                    std::span<const TokenPiece> tokens,
                                    std::size_t document_size);

// Component-wise mean, accumulated in double.
std::vector<float> aggregate_word_embedding(std::span<const std::vector<float>> embeddings);

// Sum of token log-probabilities, i.e. the log of their product.
double aggregate_word_logprob(std::span<const double> logprobs);

struct ProbabilityScale {
  double scale = 1.0;
  double mean_embedding_norm = 0.0;
  double mean_prob_norm = 0.0;
  std::uint64_t records = 0;
  bool degenerate = false;  // mean probability norm below epsilon; scale forced to 1
};

// Running accumulator behind compute_probability_scale.
class ScaleAccumulator {
 public:
  void add(const WordRecord& r);
  ProbabilityScale finish(const AlignConfig& config) const;

 private:
  double sum_embedding_norm_ = 0.0;
  double sum_prob_norm_ = 0.0;
  std::uint64_t n_ = 0;
};

// Global scale s applied to both probabilities so that, on corpus averages,
// |p| * s / (|p| * s + |e|) = prob_weight, with |.| the L2 norm.
ProbabilityScale compute_probability_scale(std::span<const WordRecord> records,
                                           const AlignConfig& config);
ProbabilityScale compute_probability_scale(const std::filesystem::path& corpus_path,
                                           const AlignConfig& config);

// [embedding ; s * p_a ; s * p_b]
std::vector<float> build_feature_vector(const WordRecord& r, double scale);

struct ContextWindow {
  std::string text;
  std::uint64_t word_offset = 0;
};

// Up to kContextRadius bytes on each side of the span, clipped to the
// document and to UTF-8 code point boundaries.
ContextWindow make_context(std::string_view document, ByteSpan span,
                           std::size_t radius = corpus::kContextRadius);

struct AlignInputs {
  std::filesystem::path embed_dir;
  std::filesystem::path lm_a_dir;
  std::filesystem::path lm_b_dir;
};

struct AlignStats {
  std::uint64_t documents = 0;
  std::uint64_t words = 0;
  std::uint64_t records = 0;
  std::uint64_t skipped_words = 0;
  std::uint64_t skipped_missing_embed = 0;
  std::uint64_t skipped_missing_lm_a = 0;
  std::uint64_t skipped_missing_lm_b = 0;
  std::uint64_t empty_tokens = 0;
};

// Builds a corpus of one record per word covered by all three streams.
// Documents are processed in ascending doc_id order; word ids are dense.
AlignStats align_corpus(const AlignInputs& inputs, const std::filesystem::path& out_path);

}  // namespace lmslice::align
