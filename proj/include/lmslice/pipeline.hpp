// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// Stage orchestration. Every stage reads and writes files, so stages can be
// run separately and a partial run can pick up from what is on disk.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lmslice/aligner.hpp"
#include "lmslice/annotator.hpp"
#include "lmslice/error.hpp"
#include "lmslice/features.hpp"
#include "lmslice/generation.hpp"
#include "lmslice/sae.hpp"

namespace lmslice::pipeline {

enum class Stage { kAlign, kTrain, kExtract, kAnnotate, kReport, kValidateGen, kSweep };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

// align -> train -> extract -> annotate -> report
const std::vector<Stage>& main_stages();

class PreconditionError : public Error {
 public:
  PreconditionError(Stage stage, const std::filesystem::path& missing);
  const std::filesystem::path& missing() const { return missing_; }

 private:
  std::filesystem::path missing_;
};

class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct Paths {
  // inputs
  std::filesystem::path embed_dump;
  std::filesystem::path lm_a_dump;
  std::filesystem::path lm_b_dump;
  std::filesystem::path generations_a;
  std::filesystem::path generations_b;
  std::filesystem::path hypotheses;
  // intermediates and outputs; relative ones are placed under the output dir
  std::filesystem::path corpus = "corpus.bbx";
  std::filesystem::path checkpoint = "sae.ckpt";
  std::filesystem::path train_log = "train_log.jsonl";
  std::filesystem::path features = "features.jsonl";
  std::filesystem::path labels = "labels.jsonl";
  std::filesystem::path report = "report.md";
  std::filesystem::path report_json = "report.json";
  std::filesystem::path generation_report = "generation_report.json";
  std::filesystem::path sweep = "sweep.md";
};

struct TransportConfig {
  std::string kind = "mock";  // mock | http
  std::filesystem::path mock_file;  // empty: every feature is accepted
  annotate::HttpConfig http;
};

struct PipelineConfig {
  Paths paths;
  align::AlignConfig align;
  sae::TrainConfig train;
  features::FilterThresholds filter;
  annotate::AnnotatorConfig annotator;
  TransportConfig transport;
  gen::FilterConfig generation;
  double alpha = 0.05;
  std::vector<double> sweep_weights{0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t featurize_batch = 1024;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";

  // Sends the seed to training and generation sampling.
  void apply_seed(std::uint64_t s);
  // Output paths resolved against out_dir.
  Paths resolved_paths() const;
};

// (dotted key, JSON value) pairs applied on top of the file, e.g.
// {"train.k", "3"} or {"filter.prob_thresh", "0.2"}.
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});
PipelineConfig config_from_json(const std::string& text, const Overrides& overrides = {});
std::string config_to_json(const PipelineConfig& cfg);

std::unique_ptr<annotate::ChatTransport> make_transport(const TransportConfig& cfg);

struct RunOptions {
  // Skip a stage whose outputs already exist.
  bool resume = false;
  // Overrides the configured transport, e.g. with an in-memory mock.
  annotate::ChatTransport* transport = nullptr;
};

// Runs the requested stages in canonical order (the enum order). Throws StageError (or
// PreconditionError) naming the first stage that fails.
void run_stage(Stage stage, const PipelineConfig& cfg, std::ostream& log,
               const RunOptions& opts = {});
void run_pipeline(const PipelineConfig& cfg, const std::vector<Stage>& stages, std::ostream& log,
                  const RunOptions& opts = {});

}  // namespace lmslice::pipeline
