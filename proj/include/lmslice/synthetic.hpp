// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic fixtures with known ground truth, used by tests, the acceptance
// suite and the `synth` CLI command.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmslice/sae.hpp"

namespace lmslice::synth {

struct PlantedConfig {
  std::size_t n_words = 5000;
  std::size_t words_per_doc = 100;
  double planted_fraction = 0.1;
  std::size_t embedding_dim = 16;
  double planted_p_a = 0.9;
  double planted_p_b = 0.1;
  double cluster_noise = 0.05;
  std::uint64_t seed = 7;
};

struct PlantedFixture {
  std::filesystem::path embed_dir;
  std::filesystem::path lm_a_dir;
  std::filesystem::path lm_b_dir;
  // Vocabulary of the planted category; every planted word is one of these.
  std::vector<std::string> planted_vocab;
  std::size_t planted_words = 0;
  std::size_t total_words = 0;
};

bool is_planted_word(const std::string& word);

// Writes three token dumps (embed, lm_a, lm_b) under `dir`. Documents are
// space-separated content words. The streams tokenize differently: some
// words are split in two, and the lm_a stream attaches the preceding space
// to each token. Planted words share one tight embedding cluster and get
// p_a / p_b; every other word has equal probability under both models.
PlantedFixture write_planted_fixture(const std::filesystem::path& dir, const PlantedConfig& cfg = {});

struct DictionaryConfig {
  std::size_t n_atoms = 20;
  std::size_t dim = 32;
  std::size_t active = 3;
  std::size_t samples = 10000;
  std::uint64_t seed = 3;
};

struct DictionaryFixture {
  sae::Matrix atoms;  // n_atoms x dim, unit rows
  sae::DataMatrix data;
};

// Each sample sums `active` distinct atoms with coefficients in [0.5, 1.5].
DictionaryFixture make_dictionary_fixture(const DictionaryConfig& cfg = {});

// Generation files for validate-gen: model A writes more tabs than model B.
// Writes gen_a.jsonl, gen_b.jsonl and hypotheses.json under `dir`.
void write_generation_fixture(const std::filesystem::path& dir, std::size_t docs_per_model = 40,
                              std::uint64_t seed = 11);

}  // namespace lmslice::synth
