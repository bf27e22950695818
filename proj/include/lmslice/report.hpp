// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Corpus-level metrics, the final feature report, and the probability-weight
// sweep.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmslice/aligner.hpp"
#include "lmslice/annotator.hpp"
#include "lmslice/corpus.hpp"
#include "lmslice/error.hpp"
#include "lmslice/features.hpp"
#include "lmslice/sae.hpp"

namespace lmslice::report {

class ReportError : public Error {
 public:
  using Error::Error;
};

enum class Model { kA, kB };

// exp(-mean word log-probability) for the chosen model.
double perplexity_per_word(std::span<const corpus::WordRecord> records, Model model);
double perplexity_per_word(const std::filesystem::path& corpus_path, Model model);

struct CorpusMetrics {
  std::string model_a_name;
  std::string model_b_name;
  double perplexity_a = 0.0;
  double perplexity_b = 0.0;
  double delta = 0.0;  // perplexity_a - perplexity_b
  std::uint64_t words = 0;
};

// Both perplexities from one streaming pass.
CorpusMetrics compute_corpus_metrics(const std::filesystem::path& corpus_path);

struct FeatureReportRow {
  features::FeatureRecord feature;
  annotate::LabelStatus status = annotate::LabelStatus::kFailed;
  std::vector<std::string> labels;
};

// Joins on feature_id. Every feature needs exactly one label entry and vice
// versa; a mismatch throws ReportError naming the feature.
std::vector<FeatureReportRow> join_report_rows(std::span<const features::FeatureRecord> feats,
                                               std::span<const annotate::FeatureLabel> labels);

enum class Format { kMarkdown, kJson };

Format format_from_string(const std::string& s);

// Markdown lists labeled and needs_review rows, grouped by favored model and
// sorted by |median_prob_diff| descending (ties: feature_id). JSON carries
// every row with its full sample list.
std::string render_feature_report(std::span<const FeatureReportRow> rows,
                                  const CorpusMetrics& metrics, Format format);
void emit_feature_report(const std::filesystem::path& path,
                         std::span<const FeatureReportRow> rows, const CorpusMetrics& metrics,
                         Format format);

// Row order used by the report.
std::vector<const FeatureReportRow*> sorted_rows(std::span<const FeatureReportRow> rows,
                                                 features::FavoredModel group);

struct SweepRow {
  double weight = 0.0;
  double prob_scale = 1.0;
  double pct_dead = 0.0;  // latents with no activation over the corpus
  std::size_t kept = 0;
  // Means over kept features; nullopt when none survive.
  std::optional<double> mean_word_dist;
  std::optional<double> mean_prob_dist;
};

struct SweepConfig {
  sae::TrainConfig train;
  features::FilterThresholds thresholds;
  align::AlignConfig align;  // prob_weight is replaced by each swept weight
  std::size_t featurize_batch = 1024;
};

// Trains one SAE per weight on the corpus and summarizes the result.
std::vector<SweepRow> weight_sweep(const std::filesystem::path& corpus_path,
                                   std::span<const double> weights, const SweepConfig& cfg);

std::string render_sweep(std::span<const SweepRow> rows, Format format);

}  // namespace lmslice::report
