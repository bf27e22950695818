// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/corpus.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "lmslice/detail/le_io.hpp"

namespace lmslice::corpus {

using detail::get_le;
using detail::put_le;
using json = nlohmann::json;

namespace {

std::size_t record_bytes(std::uint32_t dim) { return 32 + 4 * static_cast<std::size_t>(dim); }

void put_string16(std::string& out, const std::string& s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw CorpusError(CorpusError::Kind::kHeader, "header string longer than 65535 bytes");
  }
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.append(s);
}

std::string violation_list(const std::vector<Violation>& v) {
  std::string out;
  for (const auto& item : v) {
    if (!out.empty()) out += ", ";
    out += to_string(item);
  }
  return out;
}

json sidecar_entry(const WordRecord& r) {
  json j;
  j["word_id"] = r.word_id;
  j["doc_id"] = r.doc_id;
  j["source"] = r.source;
  j["word"] = r.word;
  j["span"] = {r.span.start, r.span.end};
  j["context"] = r.context;
  if (r.context_offset) j["context_offset"] = *r.context_offset;
  return j;
}

}  // namespace

std::optional<std::size_t> WordRecord::word_position() const {
  if (context_offset) {
    if (*context_offset + word.size() <= context.size() &&
        context.compare(*context_offset, word.size(), word) == 0) {
      return static_cast<std::size_t>(*context_offset);
    }
    return std::nullopt;
  }
  auto pos = context.find(word);
  if (pos == std::string::npos) return std::nullopt;
  return pos;
}

std::string to_string(Violation v) {
  switch (v) {
    case Violation::kPositiveLogprobA: return "logprob_a > 0";
    case Violation::kPositiveLogprobB: return "logprob_b > 0";
    case Violation::kNonFiniteLogprob: return "non-finite logprob";
    case Violation::kEmbeddingDimension: return "embedding length != embedding_dim";
    case Violation::kNonFiniteEmbedding: return "non-finite embedding component";
    case Violation::kEmptySpan: return "char_span.start >= char_span.end";
    case Violation::kWordNotInContext: return "word not contained in context";
  }
  return "unknown violation";
}

std::vector<Violation> validate_record(const WordRecord& r, std::uint32_t dim) {
  std::vector<Violation> out;
  // NaN compares false, so the sign checks never fire on it; the finiteness
  // check catches it separately. -inf is a legitimate log(0).
  if (r.logprob_a > 0.0) out.push_back(Violation::kPositiveLogprobA);
  if (r.logprob_b > 0.0) out.push_back(Violation::kPositiveLogprobB);
  if (std::isnan(r.logprob_a) || std::isnan(r.logprob_b)) {
    out.push_back(Violation::kNonFiniteLogprob);
  }
  if (r.embedding.size() != dim) out.push_back(Violation::kEmbeddingDimension);
  for (float x : r.embedding) {
    if (!std::isfinite(x)) {
      out.push_back(Violation::kNonFiniteEmbedding);
      break;
    }
  }
  if (r.span.start >= r.span.end) out.push_back(Violation::kEmptySpan);
  if (!r.word_position()) out.push_back(Violation::kWordNotInContext);
  return out;
}

CorpusError::CorpusError(Kind kind, std::string message, std::uint64_t record_index,
                         std::uint64_t byte_offset)
    : Error(std::move(message)),
      kind_(kind),
      record_index_(record_index),
      byte_offset_(byte_offset) {}

std::filesystem::path sidecar_path(const std::filesystem::path& corpus_path) {
  auto p = corpus_path;
  p.replace_extension(".meta.jsonl");
  return p;
}

// ---------------------------------------------------------------------------
// Writer

CorpusWriter::CorpusWriter(const std::filesystem::path& path, CorpusHeader header)
    : path_(path), header_(std::move(header)) {
  if (header_.embedding_dim == 0) {
    throw CorpusError(CorpusError::Kind::kHeader, "embedding_dim must be > 0");
  }
  bin_.open(path_, std::ios::binary | std::ios::trunc);
  meta_.open(sidecar_path(path_), std::ios::binary | std::ios::trunc);
  if (!bin_ || !meta_) {
    throw CorpusError(CorpusError::Kind::kIo, "cannot open corpus for writing: " + path_.string());
  }
  std::string head;
  head.append(kMagic, 4);
  put_le<std::uint32_t>(head, header_.format_version);
  put_le<std::uint32_t>(head, header_.embedding_dim);
  put_le<std::uint64_t>(head, 0);  // patched by finish()
  put_string16(head, header_.model_a_name);
  put_string16(head, header_.model_b_name);
  put_string16(head, header_.embed_model_name);
  bin_.write(head.data(), static_cast<std::streamsize>(head.size()));
  scratch_.reserve(record_bytes(header_.embedding_dim));
}

CorpusWriter::~CorpusWriter() {
  if (!finished_) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void CorpusWriter::append(const WordRecord& r) {
  if (finished_) throw CorpusError(CorpusError::Kind::kIo, "append after finish");
  auto violations = validate_record(r, header_.embedding_dim);
  if (!violations.empty()) {
    throw CorpusError(CorpusError::Kind::kInvariant,
                      "record word_id=" + std::to_string(r.word_id) +
                          " violates invariants: " + violation_list(violations),
                      r.word_id);
  }
  std::string line;
  try {
    line = sidecar_entry(r).dump();
  } catch (const json::exception& e) {
    throw CorpusError(CorpusError::Kind::kInvariant,
                      "record word_id=" + std::to_string(r.word_id) + ": " + e.what(), r.word_id);
  }
  scratch_.clear();
  put_le<std::uint64_t>(scratch_, r.word_id);
  put_le<std::uint64_t>(scratch_, r.doc_id);
  put_le<double>(scratch_, r.logprob_a);
  put_le<double>(scratch_, r.logprob_b);
  for (float x : r.embedding) put_le<float>(scratch_, x);
  bin_.write(scratch_.data(), static_cast<std::streamsize>(scratch_.size()));
  meta_ << line << '\n';
  if (!bin_ || !meta_) {
    throw CorpusError(CorpusError::Kind::kIo, "write failed: " + path_.string(), r.word_id);
  }
  ++count_;
}

void CorpusWriter::finish() {
  if (finished_) return;
  finished_ = true;
  std::string count;
  put_le<std::uint64_t>(count, count_);
  bin_.seekp(12);
  bin_.write(count.data(), 8);
  bin_.close();
  meta_.close();
  if (bin_.fail() || meta_.fail()) {
    throw CorpusError(CorpusError::Kind::kIo, "failed to finalize corpus: " + path_.string());
  }
}

void write_corpus(std::span<const WordRecord> records, const CorpusHeader& header,
                  const std::filesystem::path& path) {
  if (header.record_count != records.size()) {
    throw CorpusError(CorpusError::Kind::kHeader,
                      "header.record_count=" + std::to_string(header.record_count) +
                          " but " + std::to_string(records.size()) + " records given");
  }
  // Validate everything before touching the file system.
  for (const auto& r : records) {
    auto v = validate_record(r, header.embedding_dim);
    if (!v.empty()) {
      throw CorpusError(CorpusError::Kind::kInvariant,
                        "record word_id=" + std::to_string(r.word_id) +
                            " violates invariants: " + violation_list(v),
                        r.word_id);
    }
  }
  CorpusWriter writer(path, header);
  for (const auto& r : records) writer.append(r);
  writer.finish();
}

// ---------------------------------------------------------------------------
// Reader

namespace {

struct HeaderParse {
  CorpusHeader header;
  std::uint64_t bytes = 0;
};

HeaderParse parse_header(std::ifstream& in, const std::filesystem::path& path) {
  HeaderParse out;
  char fixed[20];
  in.read(fixed, 4);
  if (in.gcount() < 4 || std::memcmp(fixed, kMagic, 4) != 0) {
    throw CorpusError(CorpusError::Kind::kBadMagic, "bad magic in " + path.string(), 0, 0);
  }
  in.read(fixed + 4, 16);
  if (in.gcount() < 16) {
    throw CorpusError(CorpusError::Kind::kTruncated, "truncated header in " + path.string(), 0,
                      4 + static_cast<std::uint64_t>(in.gcount()));
  }
  out.header.format_version = get_le<std::uint32_t>(fixed + 4);
  if (out.header.format_version != kFormatVersion) {
    throw CorpusError(CorpusError::Kind::kUnsupportedVersion,
                      "unsupported corpus version " + std::to_string(out.header.format_version), 0,
                      4);
  }
  out.header.embedding_dim = get_le<std::uint32_t>(fixed + 8);
  if (out.header.embedding_dim == 0) {
    throw CorpusError(CorpusError::Kind::kHeader, "embedding_dim is 0", 0, 8);
  }
  out.header.record_count = get_le<std::uint64_t>(fixed + 12);
  out.bytes = 20;
  for (std::string* s : {&out.header.model_a_name, &out.header.model_b_name,
                         &out.header.embed_model_name}) {
    char len_bytes[2];
    in.read(len_bytes, 2);
    if (in.gcount() < 2) {
      throw CorpusError(CorpusError::Kind::kTruncated, "truncated header strings", 0, out.bytes);
    }
    auto len = get_le<std::uint16_t>(len_bytes);
    out.bytes += 2;
    s->resize(len);
    in.read(s->data(), len);
    if (in.gcount() < len) {
      throw CorpusError(CorpusError::Kind::kTruncated, "truncated header strings", 0, out.bytes);
    }
    out.bytes += len;
  }
  return out;
}

}  // namespace

CorpusReader::CorpusReader(const std::filesystem::path& path) : path_(path) {
  bin_.open(path_, std::ios::binary);
  if (!bin_) throw CorpusError(CorpusError::Kind::kIo, "cannot open corpus: " + path_.string());
  auto parsed = parse_header(bin_, path_);
  header_ = std::move(parsed.header);
  offset_ = parsed.bytes;
  meta_.open(sidecar_path(path_), std::ios::binary);
  if (!meta_) {
    throw CorpusError(CorpusError::Kind::kSidecarMismatch,
                      "missing sidecar " + sidecar_path(path_).string());
  }
  buffer_.resize(record_bytes(header_.embedding_dim));
}

std::optional<WordRecord> CorpusReader::next() {
  if (done_) return std::nullopt;
  if (index_ == header_.record_count) {
    done_ = true;
    if (bin_.peek() != std::ifstream::traits_type::eof()) {
      throw CorpusError(CorpusError::Kind::kTruncated,
                        "trailing bytes after " + std::to_string(index_) + " records", index_,
                        offset_);
    }
    std::string extra;
    while (std::getline(meta_, extra)) {
      if (!extra.empty()) {
        throw CorpusError(CorpusError::Kind::kSidecarMismatch,
                          "sidecar holds more entries than record_count=" +
                              std::to_string(header_.record_count),
                          index_);
      }
    }
    return std::nullopt;
  }

  bin_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (static_cast<std::size_t>(bin_.gcount()) < buffer_.size()) {
    throw CorpusError(CorpusError::Kind::kTruncated,
                      "truncated at record " + std::to_string(index_) + " (byte offset " +
                          std::to_string(offset_ + static_cast<std::uint64_t>(bin_.gcount())) +
                          "); header declares " + std::to_string(header_.record_count),
                      index_, offset_ + static_cast<std::uint64_t>(bin_.gcount()));
  }

  WordRecord r;
  const char* p = buffer_.data();
  r.word_id = get_le<std::uint64_t>(p);
  r.doc_id = get_le<std::uint64_t>(p + 8);
  r.logprob_a = get_le<double>(p + 16);
  r.logprob_b = get_le<double>(p + 24);
  r.embedding.resize(header_.embedding_dim);
  for (std::uint32_t i = 0; i < header_.embedding_dim; ++i) {
    r.embedding[i] = get_le<float>(p + 32 + 4 * static_cast<std::size_t>(i));
  }

  std::string line;
  if (!std::getline(meta_, line)) {
    throw CorpusError(CorpusError::Kind::kSidecarMismatch,
                      "sidecar ended before record " + std::to_string(index_), index_, offset_);
  }
  try {
    auto j = json::parse(line);
    if (j.at("word_id").get<std::uint64_t>() != r.word_id ||
        j.at("doc_id").get<std::uint64_t>() != r.doc_id) {
      throw CorpusError(CorpusError::Kind::kSidecarMismatch,
                        "sidecar entry " + std::to_string(index_) + " does not match record ids",
                        index_, offset_);
    }
    r.source = j.at("source").get<std::string>();
    r.word = j.at("word").get<std::string>();
    const auto& span = j.at("span");
    r.span = {span.at(0).get<std::uint64_t>(), span.at(1).get<std::uint64_t>()};
    r.context = j.at("context").get<std::string>();
    if (j.contains("context_offset")) r.context_offset = j["context_offset"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CorpusError(CorpusError::Kind::kSidecarMismatch,
                      "malformed sidecar entry " + std::to_string(index_) + ": " + e.what(),
                      index_, offset_);
  }

  offset_ += buffer_.size();
  ++index_;
  return r;
}

CorpusHeader read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError(CorpusError::Kind::kIo, "cannot open corpus: " + path.string());
  return parse_header(in, path).header;
}

std::pair<CorpusHeader, std::vector<WordRecord>> read_corpus(const std::filesystem::path& path) {
  CorpusReader reader(path);
  std::vector<WordRecord> records;
  records.reserve(std::min<std::uint64_t>(reader.header().record_count, 1u << 20));
  while (auto r = reader.next()) records.push_back(std::move(*r));
  return {reader.header(), std::move(records)};
}

CorpusHeader for_each_record(const std::filesystem::path& path,
                             const std::function<void(const WordRecord&)>& fn) {
  CorpusReader reader(path);
  while (auto r = reader.next()) fn(*r);
  return reader.header();
}

}  // namespace lmslice::corpus
