// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Token-level dumps produced by the extraction step and consumed by the
// aligner. Each model stream (embedder, LM A, LM B) lives in its own
// directory because the three tokenizers disagree:
//
//   <dir>/manifest.json         {"format":"lmslice-tokendump","version":1,
//                                "role":"embed"|"lm_a"|"lm_b","model_id":...,
//                                "embedding_dim":D (embed only),
//                                "docs":[{"doc_id":..,"source":..,"n_tokens":..}]}
//   <dir>/<doc_id>.txt          raw document bytes (required for the embed role)
//   <dir>/<doc_id>.tokens.jsonl {"idx","text","start","end"} per token
//   <dir>/<doc_id>.emb.f32      n_tokens x D little-endian f32   (embed)
//   <dir>/<doc_id>.lp_a.f64     n_tokens little-endian f64       (lm_a)
//   <dir>/<doc_id>.lp_b.f64     n_tokens little-endian f64       (lm_b)

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lmslice/corpus.hpp"
#include "lmslice/error.hpp"

namespace lmslice::dump {

using corpus::ByteSpan;

enum class StreamRole { kEmbed, kLmA, kLmB };

std::string to_string(StreamRole role);
StreamRole role_from_string(const std::string& s);

struct TokenPiece {
  std::string text;
  ByteSpan span;
  std::optional<std::vector<float>> embedding;
  std::optional<double> logprob;  // log P(token | preceding context)
};

struct DocEntry {
  std::uint64_t doc_id = 0;
  std::string source;
  std::uint64_t n_tokens = 0;
};

struct DumpManifest {
  StreamRole role = StreamRole::kEmbed;
  std::string model_id;
  std::uint32_t embedding_dim = 0;
  std::vector<DocEntry> docs;
};

class DumpError : public Error {
 public:
  using Error::Error;
};

class TokenDumpReader {
 public:
  explicit TokenDumpReader(std::filesystem::path dir);

  const DumpManifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }

  // Loads and validates the tokens of one document.
  std::vector<TokenPiece> load_tokens(std::uint64_t doc_id) const;
  // Raw document text, if the dump carries it.
  std::optional<std::string> load_text(std::uint64_t doc_id) const;

 private:
  std::filesystem::path dir_;
  DumpManifest manifest_;
};

class TokenDumpWriter {
 public:
  TokenDumpWriter(std::filesystem::path dir, StreamRole role, std::string model_id,
                  std::uint32_t embedding_dim = 0);

  // Tokens must carry an embedding (embed role) or a logprob (LM roles).
  void add_document(std::uint64_t doc_id, const std::string& source, const std::string& text,
                    const std::vector<TokenPiece>& tokens);
  void finish();

 private:
  std::filesystem::path dir_;
  DumpManifest manifest_;
  bool finished_ = false;
};

}  // namespace lmslice::dump
