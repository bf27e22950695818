// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Word-level corpus records and their on-disk format.
//
// A corpus is a little-endian binary file holding one fixed-width record per
// word (ids, two model log-probabilities, the contextual embedding) plus a
// JSONL sidecar holding the variable-length string fields in the same order.
//
//   magic "BBX1" | version u32 | embedding_dim u32 | record_count u64 |
//   model_a, model_b, embed_model   (u16 length + UTF-8 bytes each)
//   per record: word_id u64 | doc_id u64 | logprob_a f64 | logprob_b f64 |
//               embedding_dim x f32
//
// The sidecar lives next to the binary file with the extension replaced by
// ".meta.jsonl" (corpus.bbx -> corpus.meta.jsonl).

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmslice/error.hpp"

namespace lmslice::corpus {

inline constexpr char kMagic[4] = {'B', 'B', 'X', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;
// Bytes of context kept on each side of a word, clipped at document bounds.
inline constexpr std::size_t kContextRadius = 300;

struct ByteSpan {
  std::uint64_t start = 0;
  std::uint64_t end = 0;

  std::uint64_t size() const { return end - start; }
  bool operator==(const ByteSpan&) const = default;
};

struct CorpusHeader {
  std::uint32_t format_version = kFormatVersion;
  std::uint32_t embedding_dim = 0;
  std::uint64_t record_count = 0;
  std::string model_a_name;
  std::string model_b_name;
  std::string embed_model_name;

  bool operator==(const CorpusHeader&) const = default;
};

// One word in context. logprob_a / logprob_b are natural logs of the word
// probability under model A and model B.
struct WordRecord {
  std::uint64_t word_id = 0;
  std::uint64_t doc_id = 0;
  std::string source;
  std::string word;
  ByteSpan span;
  std::string context;
  // Byte offset of `word` inside `context`. When absent the first occurrence
  // is used.
  std::optional<std::uint64_t> context_offset;
  std::vector<float> embedding;
  double logprob_a = 0.0;
  double logprob_b = 0.0;

  // Offset of the word inside the context, resolving the optional field.
  std::optional<std::size_t> word_position() const;

  bool operator==(const WordRecord&) const = default;
};

enum class Violation {
  kPositiveLogprobA,
  kPositiveLogprobB,
  kNonFiniteLogprob,
  kEmbeddingDimension,
  kNonFiniteEmbedding,
  kEmptySpan,
  kWordNotInContext,
};

std::string to_string(Violation v);

// Returns every violated record invariant; empty means the record is valid.
std::vector<Violation> validate_record(const WordRecord& r, std::uint32_t dim);

class CorpusError : public Error {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kUnsupportedVersion,
    kTruncated,
    kSidecarMismatch,
    kInvariant,
    kHeader,
  };

  CorpusError(Kind kind, std::string message, std::uint64_t record_index = 0,
              std::uint64_t byte_offset = 0);

  Kind kind() const { return kind_; }
  std::uint64_t record_index() const { return record_index_; }
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  Kind kind_;
  std::uint64_t record_index_;
  std::uint64_t byte_offset_;
};

std::filesystem::path sidecar_path(const std::filesystem::path& corpus_path);

// Streams records to disk. The record count in the header is patched on
// finish(), so callers need not know it up front.
class CorpusWriter {
 public:
  CorpusWriter(const std::filesystem::path& path, CorpusHeader header);
  ~CorpusWriter();

  CorpusWriter(const CorpusWriter&) = delete;
  CorpusWriter& operator=(const CorpusWriter&) = delete;

  // Throws CorpusError(kInvariant) naming the word_id if the record is invalid.
  void append(const WordRecord& record);
  void finish();

  std::uint64_t records_written() const { return count_; }

 private:
  std::filesystem::path path_;
  CorpusHeader header_;
  std::ofstream bin_;
  std::ofstream meta_;
  std::uint64_t count_ = 0;
  bool finished_ = false;
  std::string scratch_;
};

// Writes a complete corpus. header.record_count must equal records.size().
void write_corpus(std::span<const WordRecord> records, const CorpusHeader& header,
                  const std::filesystem::path& path);

// Streaming reader; memory use does not grow with the record count.
class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);

  const CorpusHeader& header() const { return header_; }

  // Next record, or nullopt after the last one. Throws CorpusError on
  // truncation or when the sidecar disagrees with the binary file.
  std::optional<WordRecord> next();

  std::uint64_t records_read() const { return index_; }

 private:
  std::filesystem::path path_;
  std::ifstream bin_;
  std::ifstream meta_;
  CorpusHeader header_;
  std::uint64_t index_ = 0;
  std::uint64_t offset_ = 0;
  std::vector<char> buffer_;
  bool done_ = false;
};

CorpusHeader read_header(const std::filesystem::path& path);

// Reads everything into memory. Convenience for tests and small corpora.
std::pair<CorpusHeader, std::vector<WordRecord>> read_corpus(
    const std::filesystem::path& path);

// Streams every record through `fn` and returns the header.
CorpusHeader for_each_record(const std::filesystem::path& path,
                             const std::function<void(const WordRecord&)>& fn);

}  // namespace lmslice::corpus
