// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// From latent activations to candidate feature slices.
//
// For every latent: take the top-activating words (dropping latents that
// fire too rarely), apply the dynamic activation cutoff, then measure how
// the two models' probabilities differ on the surviving words. Features whose
// median probability or log-probability gap is large enough are kept.
//
// Sign convention: differences are always model A minus model B.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lmslice/corpus.hpp"
#include "lmslice/error.hpp"
#include "lmslice/sae.hpp"

namespace lmslice::features {

struct Sample {
  std::uint64_t word_id = 0;
  double activation = 0.0;

  bool operator==(const Sample&) const = default;
};

// Samples sorted by activation descending (ties: ascending word_id).
struct FeatureSlice {
  std::size_t feature_id = 0;
  std::vector<Sample> samples;
  double max_activation = 0.0;

  bool operator==(const FeatureSlice&) const = default;
};

struct FilterThresholds {
  std::size_t top_n = 50;
  std::size_t min_nonzero = 10;
  double value_frac = 0.25;
  double rank_frac = 0.75;
  double prob_thresh = 0.1;
  double logprob_thresh = 1.0;

  void validate() const;
};

enum class FavoredModel { kA, kB, kNone };

std::string to_string(FavoredModel m);
FavoredModel favored_from_string(const std::string& s);

struct FeatureStats {
  std::size_t n = 0;
  double median_prob_diff = 0.0;
  double median_logprob_diff = 0.0;
  double consistency = 0.0;
  FavoredModel favored_model = FavoredModel::kNone;
};

struct Dispersion {
  double word_dist = 0.0;
  double prob_dist = 0.0;
};

class FeatureError : public Error {
 public:
  using Error::Error;
};

// Drops the latent when it has fewer than min_nonzero positive activations;
// otherwise keeps its top_n samples.
std::optional<FeatureSlice> collect_top_samples(std::size_t feature_id,
                                                const sae::ActivationList& activations,
                                                const FilterThresholds& t);

// Bounded-memory equivalent of collect_top_samples over a stream of
// activations: per latent it keeps a nonzero count and a top_n heap.
class TopSampleCollector {
 public:
  TopSampleCollector(std::size_t n_latents, std::size_t top_n);

  void add(std::uint64_t word_id, std::size_t latent, double activation);

  std::size_t n_latents() const { return counts_.size(); }
  std::uint64_t nonzero_count(std::size_t latent) const { return counts_[latent]; }
  std::optional<FeatureSlice> slice(std::size_t latent, const FilterThresholds& t) const;

 private:
  std::size_t top_n_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::vector<Sample>> heaps_;
};

// Keeps sample i (rank i+1) iff activation >= value_frac * max or
// rank <= ceil(rank_frac * n). The maximum always survives.
FeatureSlice apply_activation_cutoff(const FeatureSlice& slice, const FilterThresholds& t);

// Read-only word_id -> record index built from a corpus pass.
class CorpusLookup {
 public:
  CorpusLookup() = default;

  // Loads only the records whose ids are in `wanted`.
  static CorpusLookup load(const std::filesystem::path& corpus_path,
                           const std::unordered_set<std::uint64_t>& wanted);

  void add(corpus::WordRecord r);
  const corpus::WordRecord& at(std::uint64_t word_id) const;
  bool contains(std::uint64_t word_id) const { return records_.count(word_id) > 0; }
  std::size_t size() const { return records_.size(); }

 private:
  std::unordered_map<std::uint64_t, corpus::WordRecord> records_;
};

// Mean of the two central values for even sizes. Throws on empty input.
double median(std::vector<double> values);

FeatureStats compute_feature_stats(const FeatureSlice& slice, const CorpusLookup& lookup);

bool passes_filter(const FeatureStats& s, const FilterThresholds& t);

// Indices of the stats entries that pass the filter, in input order.
std::vector<std::size_t> filter_features(std::span<const FeatureStats> stats,
                                         const FilterThresholds& t);

// Mean L2 distance to the slice centroid, for embeddings and for the
// (p_a, p_b) probability pairs.
Dispersion compute_dispersion(const FeatureSlice& slice, const CorpusLookup& lookup);

struct FeatureSampleText {
  std::uint64_t word_id = 0;
  double activation = 0.0;
  std::string word;
  std::string context;
  std::optional<std::uint64_t> context_offset;
};

// One surviving feature as written to the feature dump.
struct FeatureRecord {
  std::size_t feature_id = 0;
  FeatureStats stats;
  Dispersion dispersion;
  std::vector<FeatureSampleText> samples;
};

struct ExtractionSummary {
  std::size_t latents = 0;
  std::size_t never_active = 0;
  std::size_t dropped_rare = 0;
  std::size_t candidates = 0;
  std::size_t kept = 0;
  double prob_scale = 1.0;
};

struct ExtractionResult {
  std::vector<FeatureRecord> features;  // ascending feature_id
  ExtractionSummary summary;
  // Dispersion of every candidate (before the difference filter), for sweeps.
  std::vector<Dispersion> candidate_dispersion;
};

// Full extraction over a corpus: featurize, collect, cutoff, stats, filter.
ExtractionResult extract_features(const std::filesystem::path& corpus_path,
                                  const sae::SaeParams& params, std::size_t k,
                                  std::size_t batch_size, double prob_scale,
                                  const FilterThresholds& t);

void write_feature_dump(const std::filesystem::path& path,
                        std::span<const FeatureRecord> features);
std::vector<FeatureRecord> read_feature_dump(const std::filesystem::path& path);

}  // namespace lmslice::features
