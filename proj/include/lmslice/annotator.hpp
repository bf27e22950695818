// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Two-pass LLM labeling of feature slices.
//
// Pass one asks whether the top words of a feature form a coherent group and
// for a description. Pass two shows the same words with that description and
// asks for a 0..3 / -1 score, optionally with replacement labels. The prompt
// prefixes are fixed protocol text.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmslice/error.hpp"
#include "lmslice/features.hpp"

namespace lmslice::annotate {

enum class Pass { kFirst, kValidation };

std::string_view prompt_prefix(Pass pass);

struct AnnotationExample {
  std::string word;
  std::string context_marked;  // context with the word wrapped as *word*
};

// Wraps the word at `offset` in asterisks. Whitespace words come out as
// "*<ws>*", the double-asterisk form the validation prompt describes.
std::string mark_word(std::string_view context, std::string_view word, std::size_t offset);

AnnotationExample make_example(const features::FeatureSampleText& s);

// Top `max_examples` samples in activation order.
std::vector<AnnotationExample> examples_for(const features::FeatureRecord& f,
                                            std::size_t max_examples = 20);
std::vector<AnnotationExample> examples_for(const features::FeatureSlice& slice,
                                            const features::CorpusLookup& lookup,
                                            std::size_t max_examples = 20);

class AnnotationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public AnnotationError {
 public:
  using AnnotationError::AnnotationError;
};

// Prefix, then for the validation pass a "Label: <prior>" line, then one
// "- word: context" line per example (at most max_examples).
std::string format_annotation_prompt(std::span<const AnnotationExample> examples, Pass pass,
                                     const std::optional<std::string>& prior_label = std::nullopt,
                                     std::size_t max_examples = 20);

struct FirstPassResult {
  bool coherent = false;
  std::string description;
};

struct ValidationResult {
  int score = 0;
  std::vector<std::string> labels;
};

FirstPassResult parse_first_pass_response(std::string_view text);
ValidationResult parse_validation_response(std::string_view text);

enum class LabelStatus { kLabeled, kIncoherent, kNeedsReview, kFailed };

std::string to_string(LabelStatus s);
LabelStatus status_from_string(const std::string& s);

struct FeatureLabel {
  std::size_t feature_id = 0;
  LabelStatus status = LabelStatus::kFailed;
  std::vector<std::string> labels;
  std::vector<std::string> raw_responses;
};

// --- transports ------------------------------------------------------------

class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool transient) : Error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

// A single-user-message chat completion. Implementations must be safe to
// call from several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Hex SHA-256 of the prompt bytes; the key used by MockTransport files.
std::string prompt_hash(std::string_view prompt);

// Returns queued responses in order; for tests.
class ScriptedTransport : public ChatTransport {
 public:
  explicit ScriptedTransport(std::vector<std::string> responses);
  std::string complete(const std::string& prompt) override;

  std::size_t calls() const;
  std::vector<std::string> prompts() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> responses_;
  std::vector<std::string> prompts_;
};

// Canned responses keyed by prompt hash, with per-pass defaults for prompts
// not in the map. File layout (JSON):
//   {"responses": {"<sha256>": "text" | ["text", ...]},
//    "default_first_pass": "text", "default_validation": "text"}
// A list value is consumed one entry per call, the last one repeating.
class MockTransport : public ChatTransport {
 public:
  MockTransport() = default;
  static MockTransport from_file(const std::filesystem::path& path);

  void set_response(const std::string& hash, std::vector<std::string> responses);
  void set_default(Pass pass, std::string response);

  std::string complete(const std::string& prompt) override;

 private:
  // A fresh lock on move; MockTransport is moved only before use.
  struct Lock {
    std::mutex m;
    Lock() = default;
    Lock(Lock&&) noexcept {}
    Lock& operator=(Lock&&) noexcept { return *this; }
  };
  Lock mu_;
  std::map<std::string, std::vector<std::string>> responses_;
  std::map<std::string, std::size_t> cursor_;
  std::optional<std::string> default_first_;
  std::optional<std::string> default_validation_;
};

// Mock defaults that label every feature: coherent, then score 3.
MockTransport accepting_mock(const std::string& description = "Planted group");

struct HttpConfig {
  std::string url;  // e.g. https://api.example.com/v1/chat/completions
  std::string model;
  std::string auth_env = "LMSLICE_API_KEY";
  std::string api_style = "openai";  // or "anthropic"
  int max_tokens = 512;
  double timeout_seconds = 120.0;
};

class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(HttpConfig cfg);
  std::string complete(const std::string& prompt) override;

 private:
  HttpConfig cfg_;
  std::string token_;
  std::string scheme_host_port_;
  std::string path_;
};

// --- protocol --------------------------------------------------------------

struct AnnotatorConfig {
  std::size_t retry_limit = 3;
  std::size_t max_examples = 20;
  std::size_t concurrency = 4;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
};

// Runs both passes. Each pass makes at most retry_limit calls; unparseable
// output is retried, then the feature is marked failed. A transport error
// that persists through every attempt is rethrown.
FeatureLabel annotate_feature(std::size_t feature_id, std::span<const AnnotationExample> examples,
                              ChatTransport& transport, const AnnotatorConfig& cfg = {});

// Annotates features concurrently (cfg.concurrency workers). Output is in
// ascending feature_id order.
std::vector<FeatureLabel> annotate_features(std::span<const features::FeatureRecord> features,
                                            ChatTransport& transport,
                                            const AnnotatorConfig& cfg = {});

void write_labels(const std::filesystem::path& path, std::span<const FeatureLabel> labels);
std::vector<FeatureLabel> read_labels(const std::filesystem::path& path);

}  // namespace lmslice::annotate
