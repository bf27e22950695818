// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Checks whether a feature's behaviour shows up in free generations: count a
// string in every generation of each model, then compare the two count
// samples with a one-sided Mann-Whitney U test.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmslice/error.hpp"

namespace lmslice::gen {

class GenerationError : public Error {
 public:
  using Error::Error;
};

enum class ModelTag { kA, kB };

struct GenerationDoc {
  ModelTag model_tag = ModelTag::kA;
  std::string doc_id;
  std::string text;
  std::size_t word_count = 0;  // pretokenized words, whitespace words included
};

// Reads {doc_id, text} JSONL; doc_id may be a string or an integer.
std::vector<GenerationDoc> read_generations(const std::filesystem::path& path, ModelTag tag);

struct FilterConfig {
  std::size_t min_words = 400;
  std::size_t max_words = 600;
  std::size_t sample_n = 500;
  std::uint64_t seed = 0;
};

struct FilteredGenerations {
  std::vector<GenerationDoc> a;
  std::vector<GenerationDoc> b;
  std::vector<std::string> warnings;
};

// Length filter, then a seeded uniform sample of sample_n docs per model
// (all of them, with a warning, when fewer qualify). Input order is kept.
FilteredGenerations filter_generations(std::span<const GenerationDoc> docs,
                                       const FilterConfig& cfg = {});

// Non-overlapping left-to-right matches of `target` in `text`.
std::size_t count_occurrences(std::string_view text, std::string_view target);

enum class Direction { kAGreater, kBGreater };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

// A literal string or one of the named patterns "tab", "double-space" and
// "period+quote". A pattern may have several byte-string variants; its count
// is the sum over variants.
struct StringHypothesis {
  std::string target;
  std::vector<std::string> variants;
  Direction direction = Direction::kAGreater;
};

StringHypothesis make_hypothesis(const std::string& target, Direction direction);

// [{"target": "...", "direction": "A_greater" | "B_greater"}, ...]
std::vector<StringHypothesis> read_hypotheses(const std::filesystem::path& path);

enum class Alternative { kGreater, kLess };
enum class Method { kExact, kNormal };

std::string to_string(Method m);

struct MannWhitneyResult {
  double u = 0.0;  // U of sample a
  double p = 1.0;
  Method method = Method::kExact;
};

inline constexpr std::size_t kExactProductLimit = 400;

// "greater" tests whether sample a tends to exceed sample b. The method is
// chosen by n_a * n_b unless forced.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alt);
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alt, Method method);

struct HypothesisRow {
  std::string target;
  Direction direction = Direction::kAGreater;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double u = 0.0;
  double p = 1.0;
  Method method = Method::kExact;
  bool significant = false;
  double mean_a = 0.0;
  double mean_b = 0.0;
  // Totals per variant, keyed by the variant's escaped form.
  std::map<std::string, std::pair<std::size_t, std::size_t>> variant_totals;
};

std::vector<HypothesisRow> run_hypotheses(std::span<const GenerationDoc> docs_a,
                                          std::span<const GenerationDoc> docs_b,
                                          std::span<const StringHypothesis> hypotheses,
                                          double alpha = 0.05);

void write_hypothesis_report(const std::filesystem::path& path,
                             std::span<const HypothesisRow> rows,
                             std::span<const std::string> warnings = {});

}  // namespace lmslice::gen
