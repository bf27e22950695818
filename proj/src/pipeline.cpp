// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "lmslice/report.hpp"

namespace lmslice::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kAlign: return "align";
    case Stage::kTrain: return "train";
    case Stage::kExtract: return "extract";
    case Stage::kAnnotate: return "annotate";
    case Stage::kReport: return "report";
    case Stage::kValidateGen: return "validate-gen";
    case Stage::kSweep: return "sweep";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (auto st : {Stage::kAlign, Stage::kTrain, Stage::kExtract, Stage::kAnnotate, Stage::kReport,
                  Stage::kValidateGen, Stage::kSweep}) {
    if (to_string(st) == s) return st;
  }
  throw Error("unknown stage '" + s + "'");
}

const std::vector<Stage>& main_stages() {
  static const std::vector<Stage> s{Stage::kAlign, Stage::kTrain, Stage::kExtract,
                                    Stage::kAnnotate, Stage::kReport};
  return s;
}

PreconditionError::PreconditionError(Stage stage, const fs::path& missing)
    : Error("stage '" + to_string(stage) + "': required input " + missing.string() +
            " does not exist"),
      missing_(missing) {}

StageError::StageError(Stage stage, const std::string& what)
    : Error("stage '" + to_string(stage) + "' failed: " + what), stage_(stage) {}

void PipelineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  generation.seed = s;
}

Paths PipelineConfig::resolved_paths() const {
  Paths p = paths;
  for (auto* f : {&p.corpus, &p.checkpoint, &p.train_log, &p.features, &p.labels, &p.report,
                  &p.report_json, &p.generation_report, &p.sweep}) {
    if (!f->empty() && f->is_relative()) *f = out_dir / *f;
  }
  return p;
}

namespace {

// Reads the keys of one JSON object, rejecting any it was not asked about.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error("config section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error("config key " + name_ + "." + key + ": " + e.what());
    }
  }

  void get_path(const char* key, fs::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  void get_ms(const char* key, std::chrono::milliseconds& out) {
    auto v = static_cast<std::int64_t>(out.count());
    get(key, v);
    out = std::chrono::milliseconds(v);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw Error("unknown config key " + name_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_paths(Section s, Paths& p) {
  s.get_path("embed_dump", p.embed_dump);
  s.get_path("lm_a_dump", p.lm_a_dump);
  s.get_path("lm_b_dump", p.lm_b_dump);
  s.get_path("generations_a", p.generations_a);
  s.get_path("generations_b", p.generations_b);
  s.get_path("hypotheses", p.hypotheses);
  s.get_path("corpus", p.corpus);
  s.get_path("checkpoint", p.checkpoint);
  s.get_path("train_log", p.train_log);
  s.get_path("features", p.features);
  s.get_path("labels", p.labels);
  s.get_path("report", p.report);
  s.get_path("report_json", p.report_json);
  s.get_path("generation_report", p.generation_report);
  s.get_path("sweep", p.sweep);
  s.finish();
}

void read_train(Section s, sae::TrainConfig& t) {
  s.get("d_in", t.d_in);
  s.get("d_hid", t.d_hid);
  s.get("k", t.k);
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
  s.get("beta1", t.beta1);
  s.get("beta2", t.beta2);
  s.get("weight_decay", t.weight_decay);
  s.get("adam_epsilon", t.adam_epsilon);
  s.get("reset_interval_steps", t.reset_interval_steps);
  s.get("dead_fraction_threshold", t.dead_fraction_threshold);
  s.get("total_steps", t.total_steps);
  s.get("seed", t.seed);
  s.get("eval_fraction", t.eval_fraction);
  s.get("max_eval_samples", t.max_eval_samples);
  s.get("log_interval", t.log_interval);
  s.finish();
}

void read_filter(Section s, features::FilterThresholds& f) {
  s.get("top_n", f.top_n);
  s.get("min_nonzero", f.min_nonzero);
  s.get("value_frac", f.value_frac);
  s.get("rank_frac", f.rank_frac);
  s.get("prob_thresh", f.prob_thresh);
  s.get("logprob_thresh", f.logprob_thresh);
  s.finish();
}

void read_annotator(Section s, annotate::AnnotatorConfig& a) {
  s.get("retry_limit", a.retry_limit);
  s.get("max_examples", a.max_examples);
  s.get("concurrency", a.concurrency);
  s.get_ms("initial_backoff_ms", a.initial_backoff);
  s.get_ms("max_backoff_ms", a.max_backoff);
  s.finish();
}

void read_transport(Section s, TransportConfig& t) {
  s.get("kind", t.kind);
  s.get_path("mock_file", t.mock_file);
  s.get("url", t.http.url);
  s.get("model", t.http.model);
  s.get("auth_env", t.http.auth_env);
  s.get("api_style", t.http.api_style);
  s.get("max_tokens", t.http.max_tokens);
  s.get("timeout_seconds", t.http.timeout_seconds);
  s.finish();
  if (t.kind != "mock" && t.kind != "http") {
    throw Error("transport.kind must be mock or http, got '" + t.kind + "'");
  }
}

void read_generation(Section s, gen::FilterConfig& g, double& alpha) {
  s.get("min_words", g.min_words);
  s.get("max_words", g.max_words);
  s.get("sample_n", g.sample_n);
  s.get("seed", g.seed);
  s.get("alpha", alpha);
  s.finish();
}

void set_dotted(json& doc, const std::string& key, const std::string& value) {
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const auto part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (part.empty()) throw Error("bad override key '" + key + "'");
    if (dot == std::string::npos) {
      try {
        (*node)[part] = json::parse(value);
      } catch (const json::exception&) {
        (*node)[part] = value;  // bare strings such as paths
      }
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    pos = dot + 1;
  }
}

}  // namespace

PipelineConfig config_from_json(const std::string& text, const Overrides& overrides) {
  json doc;
  try {
    doc = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& [k, v] : overrides) set_dotted(doc, k, v);

  PipelineConfig cfg;
  Section top(doc, "config");
  if (top.has("paths")) read_paths(Section(top.sub("paths"), "paths"), cfg.paths);
  if (top.has("align")) {
    Section s(top.sub("align"), "align");
    s.get("prob_weight", cfg.align.prob_weight);
    s.get("epsilon", cfg.align.epsilon);
    s.finish();
  }
  if (top.has("train")) read_train(Section(top.sub("train"), "train"), cfg.train);
  if (top.has("filter")) read_filter(Section(top.sub("filter"), "filter"), cfg.filter);
  if (top.has("annotator")) {
    read_annotator(Section(top.sub("annotator"), "annotator"), cfg.annotator);
  }
  if (top.has("transport")) {
    read_transport(Section(top.sub("transport"), "transport"), cfg.transport);
  }
  if (top.has("generation")) {
    read_generation(Section(top.sub("generation"), "generation"), cfg.generation, cfg.alpha);
  }
  top.get("sweep_weights", cfg.sweep_weights);
  top.get("featurize_batch", cfg.featurize_batch);
  top.get_path("out_dir", cfg.out_dir);
  if (top.has("seed")) {
    std::uint64_t seed = 0;
    top.get("seed", seed);
    cfg.apply_seed(seed);
  }
  top.finish();

  cfg.align.validate();
  cfg.filter.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const Overrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), overrides);
}

std::string config_to_json(const PipelineConfig& c) {
  const auto& p = c.paths;
  const auto& t = c.train;
  const auto& f = c.filter;
  const json j = {
      {"paths",
       {{"embed_dump", p.embed_dump.string()},
        {"lm_a_dump", p.lm_a_dump.string()},
        {"lm_b_dump", p.lm_b_dump.string()},
        {"generations_a", p.generations_a.string()},
        {"generations_b", p.generations_b.string()},
        {"hypotheses", p.hypotheses.string()},
        {"corpus", p.corpus.string()},
        {"checkpoint", p.checkpoint.string()},
        {"train_log", p.train_log.string()},
        {"features", p.features.string()},
        {"labels", p.labels.string()},
        {"report", p.report.string()},
        {"report_json", p.report_json.string()},
        {"generation_report", p.generation_report.string()},
        {"sweep", p.sweep.string()}}},
      {"align", {{"prob_weight", c.align.prob_weight}, {"epsilon", c.align.epsilon}}},
      {"train",
       {{"d_in", t.d_in},
        {"d_hid", t.d_hid},
        {"k", t.k},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"weight_decay", t.weight_decay},
        {"adam_epsilon", t.adam_epsilon},
        {"reset_interval_steps", t.reset_interval_steps},
        {"dead_fraction_threshold", t.dead_fraction_threshold},
        {"total_steps", t.total_steps},
        {"seed", t.seed},
        {"eval_fraction", t.eval_fraction},
        {"max_eval_samples", t.max_eval_samples},
        {"log_interval", t.log_interval}}},
      {"filter",
       {{"top_n", f.top_n},
        {"min_nonzero", f.min_nonzero},
        {"value_frac", f.value_frac},
        {"rank_frac", f.rank_frac},
        {"prob_thresh", f.prob_thresh},
        {"logprob_thresh", f.logprob_thresh}}},
      {"annotator",
       {{"retry_limit", c.annotator.retry_limit},
        {"max_examples", c.annotator.max_examples},
        {"concurrency", c.annotator.concurrency},
        {"initial_backoff_ms", c.annotator.initial_backoff.count()},
        {"max_backoff_ms", c.annotator.max_backoff.count()}}},
      {"transport",
       {{"kind", c.transport.kind},
        {"mock_file", c.transport.mock_file.string()},
        {"url", c.transport.http.url},
        {"model", c.transport.http.model},
        {"auth_env", c.transport.http.auth_env},
        {"api_style", c.transport.http.api_style},
        {"max_tokens", c.transport.http.max_tokens},
        {"timeout_seconds", c.transport.http.timeout_seconds}}},
      {"generation",
       {{"min_words", c.generation.min_words},
        {"max_words", c.generation.max_words},
        {"sample_n", c.generation.sample_n},
        {"seed", c.generation.seed},
        {"alpha", c.alpha}}},
      {"sweep_weights", c.sweep_weights},
      {"featurize_batch", c.featurize_batch},
      {"out_dir", c.out_dir.string()}};
  return j.dump(2) + "\n";
}

std::unique_ptr<annotate::ChatTransport> make_transport(const TransportConfig& cfg) {
  if (cfg.kind == "http") return std::make_unique<annotate::HttpTransport>(cfg.http);
  if (cfg.mock_file.empty()) {
    return std::make_unique<annotate::MockTransport>(annotate::accepting_mock());
  }
  return std::make_unique<annotate::MockTransport>(annotate::MockTransport::from_file(cfg.mock_file));
}

namespace {

void require(Stage stage, const fs::path& p) {
  if (p.empty() || !fs::exists(p)) throw PreconditionError(stage, p);
}

bool outputs_exist(std::initializer_list<fs::path> outs) {
  for (const auto& p : outs) {
    if (!fs::exists(p)) return false;
  }
  return true;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

align::ProbabilityScale scale_for(const PipelineConfig& cfg, const fs::path& corpus,
                                  std::ostream& log) {
  const auto scale = align::compute_probability_scale(corpus, cfg.align);
  if (scale.degenerate) {
    log << "warning: mean probability norm is ~0; probability scale forced to 1\n";
  }
  return scale;
}

void do_align(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require(Stage::kAlign, p.embed_dump);
  require(Stage::kAlign, p.lm_a_dump);
  require(Stage::kAlign, p.lm_b_dump);
  ensure_parent(p.corpus);
  const auto st = align::align_corpus({p.embed_dump, p.lm_a_dump, p.lm_b_dump}, p.corpus);
  log << fmt::format("align: {} docs, {} words, {} records, {} skipped, {} empty tokens -> {}\n",
                     st.documents, st.words, st.records, st.skipped_words, st.empty_tokens,
                     p.corpus.string());
  (void)cfg;
}

void do_train(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require(Stage::kTrain, p.corpus);
  const auto scale = scale_for(cfg, p.corpus, log);
  const auto [data, ids] = sae::load_feature_matrix(p.corpus, scale.scale);
  auto tc = cfg.train;
  if (tc.d_in != static_cast<std::size_t>(data.cols())) {
    log << fmt::format("train: d_in set to {} from the corpus\n", data.cols());
    tc.d_in = static_cast<std::size_t>(data.cols());
  }
  const auto res = sae::train(data, tc);
  ensure_parent(p.checkpoint);
  sae::save_checkpoint(p.checkpoint, {res.params, tc.k, tc.total_steps, tc.seed});
  sae::write_train_log(p.train_log, res.log);
  log << fmt::format(
      "train: {} train / {} eval rows, scale {:.6g}, eval loss {:.6g} -> {:.6g}, {} resets -> {}\n",
      res.train_samples, res.eval_samples, scale.scale, res.initial_eval_loss,
      res.final_eval_loss, res.total_resets, p.checkpoint.string());
}

void do_extract(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require(Stage::kExtract, p.corpus);
  require(Stage::kExtract, p.checkpoint);
  const auto ckpt = sae::load_checkpoint(p.checkpoint);
  const auto scale = scale_for(cfg, p.corpus, log);
  const auto res = features::extract_features(p.corpus, ckpt.params, ckpt.k, cfg.featurize_batch,
                                              scale.scale, cfg.filter);
  ensure_parent(p.features);
  features::write_feature_dump(p.features, res.features);
  const auto& s = res.summary;
  log << fmt::format(
      "extract: {} latents, {} never active, {} too rare, {} candidates, {} kept -> {}\n",
      s.latents, s.never_active, s.dropped_rare, s.candidates, s.kept, p.features.string());
}

void do_annotate(const PipelineConfig& cfg, const Paths& p, std::ostream& log,
                 const RunOptions& opts) {
  require(Stage::kAnnotate, p.features);
  const auto feats = features::read_feature_dump(p.features);
  std::unique_ptr<annotate::ChatTransport> owned;
  annotate::ChatTransport* transport = opts.transport;
  if (!transport) {
    if (cfg.transport.kind == "mock" && !cfg.transport.mock_file.empty()) {
      require(Stage::kAnnotate, cfg.transport.mock_file);
    }
    owned = make_transport(cfg.transport);
    transport = owned.get();
  }
  const auto labels = annotate::annotate_features(feats, *transport, cfg.annotator);
  ensure_parent(p.labels);
  annotate::write_labels(p.labels, labels);
  std::size_t labeled = 0;
  for (const auto& l : labels) labeled += l.status == annotate::LabelStatus::kLabeled;
  log << fmt::format("annotate: {} features, {} labeled -> {}\n", labels.size(), labeled,
                     p.labels.string());
}

void do_report(const PipelineConfig&, const Paths& p, std::ostream& log) {
  require(Stage::kReport, p.corpus);
  require(Stage::kReport, p.features);
  require(Stage::kReport, p.labels);
  const auto feats = features::read_feature_dump(p.features);
  const auto labels = annotate::read_labels(p.labels);
  const auto rows = report::join_report_rows(feats, labels);
  const auto metrics = report::compute_corpus_metrics(p.corpus);
  ensure_parent(p.report);
  report::emit_feature_report(p.report, rows, metrics, report::Format::kMarkdown);
  if (!p.report_json.empty()) {
    report::emit_feature_report(p.report_json, rows, metrics, report::Format::kJson);
  }
  log << fmt::format("report: ppl A {:.4f}, ppl B {:.4f}, {} rows -> {}\n", metrics.perplexity_a,
                     metrics.perplexity_b, rows.size(), p.report.string());
}

void do_validate_gen(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require(Stage::kValidateGen, p.generations_a);
  require(Stage::kValidateGen, p.generations_b);
  require(Stage::kValidateGen, p.hypotheses);
  auto docs = gen::read_generations(p.generations_a, gen::ModelTag::kA);
  auto docs_b = gen::read_generations(p.generations_b, gen::ModelTag::kB);
  docs.insert(docs.end(), docs_b.begin(), docs_b.end());
  const auto filtered = gen::filter_generations(docs, cfg.generation);
  for (const auto& w : filtered.warnings) log << "warning: " << w << '\n';
  const auto hyps = gen::read_hypotheses(p.hypotheses);
  const auto rows = gen::run_hypotheses(filtered.a, filtered.b, hyps, cfg.alpha);
  ensure_parent(p.generation_report);
  gen::write_hypothesis_report(p.generation_report, rows, filtered.warnings);
  for (const auto& r : rows) {
    log << fmt::format("validate-gen: {} {} U={} p={:.3g} ({}){}\n", r.target,
                       gen::to_string(r.direction), r.u, r.p, gen::to_string(r.method),
                       r.significant ? " significant" : "");
  }
}

void do_sweep(const PipelineConfig& cfg, const Paths& p, std::ostream& log) {
  require(Stage::kSweep, p.corpus);
  report::SweepConfig sc;
  sc.train = cfg.train;
  sc.thresholds = cfg.filter;
  sc.align = cfg.align;
  sc.featurize_batch = cfg.featurize_batch;
  const auto rows = report::weight_sweep(p.corpus, cfg.sweep_weights, sc);
  const auto fmt_kind =
      p.sweep.extension() == ".json" ? report::Format::kJson : report::Format::kMarkdown;
  const auto text = report::render_sweep(rows, fmt_kind);
  ensure_parent(p.sweep);
  std::ofstream(p.sweep, std::ios::binary | std::ios::trunc) << text;
  log << text;
}

}  // namespace

void run_stage(Stage stage, const PipelineConfig& cfg, std::ostream& log, const RunOptions& opts) {
  const auto p = cfg.resolved_paths();
  if (opts.resume) {
    bool done = false;
    switch (stage) {
      case Stage::kAlign: done = outputs_exist({p.corpus}); break;
      case Stage::kTrain: done = outputs_exist({p.checkpoint}); break;
      case Stage::kExtract: done = outputs_exist({p.features}); break;
      case Stage::kAnnotate: done = outputs_exist({p.labels}); break;
      default: break;
    }
    if (done) {
      log << to_string(stage) << ": outputs present, skipped\n";
      return;
    }
  }
  try {
    switch (stage) {
      case Stage::kAlign: do_align(cfg, p, log); break;
      case Stage::kTrain: do_train(cfg, p, log); break;
      case Stage::kExtract: do_extract(cfg, p, log); break;
      case Stage::kAnnotate: do_annotate(cfg, p, log, opts); break;
      case Stage::kReport: do_report(cfg, p, log); break;
      case Stage::kValidateGen: do_validate_gen(cfg, p, log); break;
      case Stage::kSweep: do_sweep(cfg, p, log); break;
    }
  } catch (const PreconditionError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void run_pipeline(const PipelineConfig& cfg, const std::vector<Stage>& stages, std::ostream& log,
                  const RunOptions& opts) {
  auto ordered = stages;
  std::stable_sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
  for (auto s : ordered) run_stage(s, cfg, log, opts);
}

}  // namespace lmslice::pipeline
