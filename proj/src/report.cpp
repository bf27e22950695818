// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "json.hpp"

namespace lmslice::report {

using json = nlohmann::json;
using features::FavoredModel;

namespace {

struct LogprobSums {
  double a = 0.0;
  double b = 0.0;
  std::uint64_t n = 0;

  void add(const corpus::WordRecord& r) {
    a += r.logprob_a;
    b += r.logprob_b;
    ++n;
  }
};

double ppl(double sum, std::uint64_t n) {
  if (n == 0) throw ReportError("perplexity of an empty corpus");
  return std::exp(-sum / static_cast<double>(n));
}

}  // namespace

double perplexity_per_word(std::span<const corpus::WordRecord> records, Model model) {
  LogprobSums s;
  for (const auto& r : records) s.add(r);
  return ppl(model == Model::kA ? s.a : s.b, s.n);
}

double perplexity_per_word(const std::filesystem::path& corpus_path, Model model) {
  LogprobSums s;
  corpus::for_each_record(corpus_path, [&](const corpus::WordRecord& r) { s.add(r); });
  return ppl(model == Model::kA ? s.a : s.b, s.n);
}

CorpusMetrics compute_corpus_metrics(const std::filesystem::path& corpus_path) {
  LogprobSums s;
  const auto header =
      corpus::for_each_record(corpus_path, [&](const corpus::WordRecord& r) { s.add(r); });
  CorpusMetrics m;
  m.model_a_name = header.model_a_name;
  m.model_b_name = header.model_b_name;
  m.perplexity_a = ppl(s.a, s.n);
  m.perplexity_b = ppl(s.b, s.n);
  m.delta = m.perplexity_a - m.perplexity_b;
  m.words = s.n;
  return m;
}

std::vector<FeatureReportRow> join_report_rows(std::span<const features::FeatureRecord> feats,
                                               std::span<const annotate::FeatureLabel> labels) {
  std::map<std::size_t, const annotate::FeatureLabel*> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.feature_id, &l).second) {
      throw ReportError("duplicate label for feature " + std::to_string(l.feature_id));
    }
  }
  std::vector<FeatureReportRow> rows;
  for (const auto& f : feats) {
    auto it = by_id.find(f.feature_id);
    if (it == by_id.end()) {
      throw ReportError("feature " + std::to_string(f.feature_id) + " has no label entry");
    }
    rows.push_back({f, it->second->status, it->second->labels});
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    throw ReportError("label entry for unknown feature " + std::to_string(by_id.begin()->first));
  }
  return rows;
}

Format format_from_string(const std::string& s) {
  if (s == "md" || s == "markdown") return Format::kMarkdown;
  if (s == "json") return Format::kJson;
  throw ReportError("report format must be markdown or json, got '" + s + "'");
}

std::vector<const FeatureReportRow*> sorted_rows(std::span<const FeatureReportRow> rows,
                                                 FavoredModel group) {
  std::vector<const FeatureReportRow*> out;
  for (const auto& r : rows) {
    if (r.feature.stats.favored_model == group) out.push_back(&r);
  }
  std::sort(out.begin(), out.end(), [](const auto* x, const auto* y) {
    const double ax = std::abs(x->feature.stats.median_prob_diff);
    const double ay = std::abs(y->feature.stats.median_prob_diff);
    if (ax != ay) return ax > ay;
    return x->feature.feature_id < y->feature.feature_id;
  });
  return out;
}

namespace {

// Table-safe rendering: control characters escaped, pipes backslashed.
std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '|': out += "\\|"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// At most `radius` bytes each side of [pos, pos+len), on code point boundaries.
std::string snippet(std::string_view ctx, std::size_t pos, std::size_t len, std::size_t radius) {
  auto cont = [&](std::size_t i) {
    return i < ctx.size() && (static_cast<unsigned char>(ctx[i]) & 0xC0) == 0x80;
  };
  std::size_t b = pos > radius ? pos - radius : 0;
  while (b < pos && cont(b)) ++b;
  std::size_t e = std::min(ctx.size(), pos + len + radius);
  while (e > pos + len && cont(e)) --e;
  std::string out;
  if (b > 0) out += "...";
  out += ctx.substr(b, pos - b);
  out += "*";
  out += ctx.substr(pos, len);
  out += "*";
  out += ctx.substr(pos + len, e - pos - len);
  if (e < ctx.size()) out += "...";
  return out;
}

std::string example_cell(const features::FeatureRecord& f, std::size_t max_examples) {
  std::string out;
  for (std::size_t i = 0; i < f.samples.size() && i < max_examples; ++i) {
    const auto& s = f.samples[i];
    std::size_t pos = s.context_offset ? static_cast<std::size_t>(*s.context_offset)
                                       : s.context.find(s.word);
    if (i) out += "<br>";
    if (pos == std::string::npos || pos + s.word.size() > s.context.size()) {
      out += md_cell("`" + s.word + "`");
    } else {
      out += md_cell(snippet(s.context, pos, s.word.size(), 40));
    }
  }
  return out;
}

std::string label_cell(const FeatureReportRow& r) {
  std::string out;
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    if (i) out += " / ";
    out += r.labels[i];
  }
  if (r.status == annotate::LabelStatus::kNeedsReview) out += " (needs review)";
  return md_cell(out);
}

std::string render_markdown(std::span<const FeatureReportRow> rows, const CorpusMetrics& m) {
  std::string out = "# Feature report\n\n";
  out += "| Model | Perplexity per word |\n|---|---|\n";
  out += fmt::format("| A: {} | {:.4f} |\n", md_cell(m.model_a_name), m.perplexity_a);
  out += fmt::format("| B: {} | {:.4f} |\n", md_cell(m.model_b_name), m.perplexity_b);
  out += fmt::format("| Delta (A - B) | {:.4f} |\n\n", m.delta);
  out += fmt::format("Words: {}. Features: {}.\n", m.words, rows.size());

  std::map<annotate::LabelStatus, std::size_t> status_counts;
  for (const auto& r : rows) ++status_counts[r.status];
  out += fmt::format("Labeled: {}, needs review: {}, incoherent: {}, failed: {}.\n",
                     status_counts[annotate::LabelStatus::kLabeled],
                     status_counts[annotate::LabelStatus::kNeedsReview],
                     status_counts[annotate::LabelStatus::kIncoherent],
                     status_counts[annotate::LabelStatus::kFailed]);

  for (auto group : {FavoredModel::kA, FavoredModel::kB, FavoredModel::kNone}) {
    const auto sorted = sorted_rows(rows, group);
    if (group == FavoredModel::kNone && sorted.empty()) continue;
    out += group == FavoredModel::kNone
               ? std::string("\n## Features favoring neither model\n\n")
               : fmt::format("\n## Features favoring model {}\n\n", features::to_string(group));
    out +=
        "| Feature | Label | Median Prob Diff | Median Log Prob Diff | Consistency | n | "
        "Examples |\n|---|---|---|---|---|---|---|\n";
    for (const auto* r : sorted) {
      if (r->status != annotate::LabelStatus::kLabeled &&
          r->status != annotate::LabelStatus::kNeedsReview) {
        continue;
      }
      const auto& s = r->feature.stats;
      out += fmt::format("| {} | {} | {:.3f} | {:.3f} | {:.3f} | {} | {} |\n",
                         r->feature.feature_id, label_cell(*r), s.median_prob_diff,
                         s.median_logprob_diff, s.consistency, s.n,
                         example_cell(r->feature, 3));
    }
  }
  return out;
}

json row_json(const FeatureReportRow& r) {
  const auto& f = r.feature;
  json samples = json::array();
  for (const auto& s : f.samples) {
    json js = {{"word_id", s.word_id},
               {"activation", s.activation},
               {"word", s.word},
               {"context", s.context}};
    if (s.context_offset) js["context_offset"] = *s.context_offset;
    samples.push_back(std::move(js));
  }
  return {{"feature_id", f.feature_id},
          {"status", annotate::to_string(r.status)},
          {"labels", r.labels},
          {"favored_model", features::to_string(f.stats.favored_model)},
          {"median_prob_diff", f.stats.median_prob_diff},
          {"median_logprob_diff", f.stats.median_logprob_diff},
          {"consistency", f.stats.consistency},
          {"n", f.stats.n},
          {"word_dist", f.dispersion.word_dist},
          {"prob_dist", f.dispersion.prob_dist},
          {"samples", std::move(samples)}};
}

std::string render_json(std::span<const FeatureReportRow> rows, const CorpusMetrics& m) {
  json groups = json::object();
  for (auto group : {FavoredModel::kA, FavoredModel::kB, FavoredModel::kNone}) {
    json arr = json::array();
    for (const auto* r : sorted_rows(rows, group)) arr.push_back(row_json(*r));
    groups[features::to_string(group)] = std::move(arr);
  }
  const json out = {{"metrics",
                     {{"model_a", m.model_a_name},
                      {"model_b", m.model_b_name},
                      {"perplexity_a", m.perplexity_a},
                      {"perplexity_b", m.perplexity_b},
                      {"delta", m.delta},
                      {"words", m.words}}},
                    {"features", std::move(groups)}};
  return out.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

}  // namespace

std::string render_feature_report(std::span<const FeatureReportRow> rows,
                                  const CorpusMetrics& metrics, Format format) {
  return format == Format::kMarkdown ? render_markdown(rows, metrics) : render_json(rows, metrics);
}

void emit_feature_report(const std::filesystem::path& path,
                         std::span<const FeatureReportRow> rows, const CorpusMetrics& metrics,
                         Format format) {
  const auto text = render_feature_report(rows, metrics, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write report " + path.string());
  out << text;
}

std::vector<SweepRow> weight_sweep(const std::filesystem::path& corpus_path,
                                   std::span<const double> weights, const SweepConfig& cfg) {
  if (weights.empty()) throw ReportError("weight_sweep needs at least one weight");
  std::vector<SweepRow> rows;
  for (double w : weights) {
    auto align_cfg = cfg.align;
    align_cfg.prob_weight = w;
    const auto scale = align::compute_probability_scale(corpus_path, align_cfg);
    const auto [data, ids] = sae::load_feature_matrix(corpus_path, scale.scale);
    auto train_cfg = cfg.train;
    train_cfg.d_in = static_cast<std::size_t>(data.cols());
    const auto trained = sae::train(data, train_cfg);
    const auto ex = features::extract_features(corpus_path, trained.params, train_cfg.k,
                                               cfg.featurize_batch, scale.scale, cfg.thresholds);
    SweepRow row;
    row.weight = w;
    row.prob_scale = scale.scale;
    row.pct_dead = 100.0 * static_cast<double>(ex.summary.never_active) /
                   static_cast<double>(ex.summary.latents);
    row.kept = ex.features.size();
    if (!ex.features.empty()) {
      double wd = 0.0, pd = 0.0;
      for (const auto& f : ex.features) {
        wd += f.dispersion.word_dist;
        pd += f.dispersion.prob_dist;
      }
      row.mean_word_dist = wd / static_cast<double>(ex.features.size());
      row.mean_prob_dist = pd / static_cast<double>(ex.features.size());
    }
    rows.push_back(row);
  }
  return rows;
}

std::string render_sweep(std::span<const SweepRow> rows, Format format) {
  if (format == Format::kJson) {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"weight", r.weight},
                     {"prob_scale", r.prob_scale},
                     {"pct_dead", r.pct_dead},
                     {"kept", r.kept},
                     {"mean_word_dist", r.mean_word_dist ? json(*r.mean_word_dist) : json()},
                     {"mean_prob_dist", r.mean_prob_dist ? json(*r.mean_prob_dist) : json()}});
    }
    return arr.dump(2) + "\n";
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.3f}", *v) : std::string("-");
  };
  std::string out = "| Weight | % Dead | Word Dist | Prob Dist | Kept |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += fmt::format("| {:.2f} | {:.2f} | {} | {} | {} |\n", r.weight, r.pct_dead,
                       opt(r.mean_word_dist), opt(r.mean_prob_dist), r.kept);
  }
  return out;
}

}  // namespace lmslice::report
