// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "lmslice/corpus.hpp"

namespace lmslice::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    std::mt19937_64 g(rd());
    path_ = std::filesystem::temp_directory_path() / ("lmslice-test-" + std::to_string(g()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& data) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << data;
}

inline corpus::WordRecord make_record(std::uint64_t id, std::size_t dim, double lpa, double lpb,
                                      std::string word = "w") {
  corpus::WordRecord r;
  r.word_id = id;
  r.doc_id = id / 10;
  r.source = "test";
  r.word = word;
  r.context = "ctx " + word + " ctx";
  r.context_offset = 4;
  r.span = {100 * id, 100 * id + word.size()};
  r.embedding.assign(dim, 0.0f);
  for (std::size_t i = 0; i < dim; ++i) r.embedding[i] = static_cast<float>(0.1 * (i + 1) + id);
  r.logprob_a = lpa;
  r.logprob_b = lpb;
  return r;
}

inline corpus::CorpusHeader make_header(std::uint32_t dim) {
  corpus::CorpusHeader h;
  h.embedding_dim = dim;
  h.model_a_name = "model-a";
  h.model_b_name = "model-b";
  h.embed_model_name = "embedder";
  return h;
}

}  // namespace lmslice::testing
