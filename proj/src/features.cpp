// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace lmslice::features {

using json = nlohmann::json;

namespace {

// Heap/sort order: higher activation first, then smaller word id.
bool ranks_before(const Sample& a, const Sample& b) {
  return a.activation > b.activation || (a.activation == b.activation && a.word_id < b.word_id);
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

FeatureSlice make_slice(std::size_t id, std::vector<Sample> samples) {
  std::sort(samples.begin(), samples.end(), ranks_before);
  FeatureSlice s;
  s.feature_id = id;
  s.max_activation = samples.empty() ? 0.0 : samples.front().activation;
  s.samples = std::move(samples);
  return s;
}

}  // namespace

void FilterThresholds::validate() const {
  if (top_n == 0 || min_nonzero == 0) throw FeatureError("top_n and min_nonzero must be positive");
  if (!(value_frac > 0.0 && value_frac <= 1.0) || !(rank_frac > 0.0 && rank_frac <= 1.0)) {
    throw FeatureError("value_frac and rank_frac must lie in (0, 1]");
  }
  if (!(prob_thresh > 0.0) || !(logprob_thresh > 0.0)) {
    throw FeatureError("prob_thresh and logprob_thresh must be positive");
  }
}

std::string to_string(FavoredModel m) {
  switch (m) {
    case FavoredModel::kA: return "A";
    case FavoredModel::kB: return "B";
    case FavoredModel::kNone: return "none";
  }
  return "none";
}

FavoredModel favored_from_string(const std::string& s) {
  if (s == "A") return FavoredModel::kA;
  if (s == "B") return FavoredModel::kB;
  if (s == "none") return FavoredModel::kNone;
  throw FeatureError("unknown favored_model '" + s + "'");
}

std::optional<FeatureSlice> collect_top_samples(std::size_t feature_id,
                                                const sae::ActivationList& activations,
                                                const FilterThresholds& t) {
  std::vector<Sample> samples;
  for (const auto& [id, a] : activations) {
    if (a > 0.0) samples.push_back({id, a});
  }
  if (samples.size() < t.min_nonzero) return std::nullopt;
  std::sort(samples.begin(), samples.end(), ranks_before);
  if (samples.size() > t.top_n) samples.resize(t.top_n);
  return make_slice(feature_id, std::move(samples));
}

TopSampleCollector::TopSampleCollector(std::size_t n_latents, std::size_t top_n)
    : top_n_(top_n), counts_(n_latents, 0), heaps_(n_latents) {}

void TopSampleCollector::add(std::uint64_t word_id, std::size_t latent, double activation) {
  if (!(activation > 0.0)) return;
  ++counts_[latent];
  auto& heap = heaps_[latent];
  const Sample s{word_id, activation};
  // ranks_before as the comparator makes the heap front the worst kept sample.
  if (heap.size() < top_n_) {
    heap.push_back(s);
    std::push_heap(heap.begin(), heap.end(), ranks_before);
  } else if (ranks_before(s, heap.front())) {
    std::pop_heap(heap.begin(), heap.end(), ranks_before);
    heap.back() = s;
    std::push_heap(heap.begin(), heap.end(), ranks_before);
  }
}

std::optional<FeatureSlice> TopSampleCollector::slice(std::size_t latent,
                                                      const FilterThresholds& t) const {
  if (counts_[latent] < t.min_nonzero) return std::nullopt;
  auto samples = heaps_[latent];
  if (samples.size() > t.top_n) {
    std::sort(samples.begin(), samples.end(), ranks_before);
    samples.resize(t.top_n);
  }
  return make_slice(latent, std::move(samples));
}

FeatureSlice apply_activation_cutoff(const FeatureSlice& slice, const FilterThresholds& t) {
  FeatureSlice out;
  out.feature_id = slice.feature_id;
  out.max_activation = slice.max_activation;
  const std::size_t n = slice.samples.size();
  // The small epsilon keeps products like 0.7 * 10 from rounding up a rank.
  const auto rank_limit = static_cast<std::size_t>(std::ceil(t.rank_frac * n - 1e-9));
  const double value_limit = t.value_frac * slice.max_activation;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = slice.samples[i];
    if (s.activation >= value_limit || i + 1 <= rank_limit || i == 0) out.samples.push_back(s);
  }
  return out;
}

CorpusLookup CorpusLookup::load(const std::filesystem::path& corpus_path,
                                const std::unordered_set<std::uint64_t>& wanted) {
  CorpusLookup out;
  corpus::CorpusReader reader(corpus_path);
  while (auto r = reader.next()) {
    if (wanted.count(r->word_id)) out.add(std::move(*r));
  }
  return out;
}

void CorpusLookup::add(corpus::WordRecord r) {
  const auto id = r.word_id;
  records_.insert_or_assign(id, std::move(r));
}

const corpus::WordRecord& CorpusLookup::at(std::uint64_t word_id) const {
  auto it = records_.find(word_id);
  if (it == records_.end()) {
    throw FeatureError("word_id " + std::to_string(word_id) + " not found in corpus lookup");
  }
  return it->second;
}

double median(std::vector<double> values) {
  if (values.empty()) throw FeatureError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

FeatureStats compute_feature_stats(const FeatureSlice& slice, const CorpusLookup& lookup) {
  if (slice.samples.empty()) throw FeatureError("compute_feature_stats: empty slice");
  std::vector<double> prob_diff;
  std::vector<double> log_diff;
  for (const auto& s : slice.samples) {
    const auto& r = lookup.at(s.word_id);
    prob_diff.push_back(std::exp(r.logprob_a) - std::exp(r.logprob_b));
    log_diff.push_back(r.logprob_a - r.logprob_b);
  }
  FeatureStats st;
  st.n = slice.samples.size();
  st.median_prob_diff = median(prob_diff);
  st.median_logprob_diff = median(log_diff);
  const int median_sign = sign(st.median_prob_diff);
  const auto matching = std::count_if(prob_diff.begin(), prob_diff.end(),
                                      [&](double d) { return sign(d) == median_sign; });
  st.consistency = static_cast<double>(matching) / static_cast<double>(st.n);
  st.favored_model = median_sign > 0   ? FavoredModel::kA
                     : median_sign < 0 ? FavoredModel::kB
                                       : FavoredModel::kNone;
  return st;
}

bool passes_filter(const FeatureStats& s, const FilterThresholds& t) {
  return std::abs(s.median_prob_diff) > t.prob_thresh ||
         std::abs(s.median_logprob_diff) > t.logprob_thresh;
}

std::vector<std::size_t> filter_features(std::span<const FeatureStats> stats,
                                         const FilterThresholds& t) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (passes_filter(stats[i], t)) kept.push_back(i);
  }
  return kept;
}

Dispersion compute_dispersion(const FeatureSlice& slice, const CorpusLookup& lookup) {
  if (slice.samples.empty()) throw FeatureError("compute_dispersion: empty slice");
  const std::size_t n = slice.samples.size();
  const auto& first = lookup.at(slice.samples.front().word_id);
  const std::size_t dim = first.embedding.size();

  std::vector<double> centroid(dim, 0.0);
  double pa_mean = 0.0, pb_mean = 0.0;
  for (const auto& s : slice.samples) {
    const auto& r = lookup.at(s.word_id);
    if (r.embedding.size() != dim) throw FeatureError("compute_dispersion: dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) centroid[i] += r.embedding[i];
    pa_mean += std::exp(r.logprob_a);
    pb_mean += std::exp(r.logprob_b);
  }
  for (auto& c : centroid) c /= static_cast<double>(n);
  pa_mean /= static_cast<double>(n);
  pb_mean /= static_cast<double>(n);

  Dispersion d;
  for (const auto& s : slice.samples) {
    const auto& r = lookup.at(s.word_id);
    double e2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double diff = r.embedding[i] - centroid[i];
      e2 += diff * diff;
    }
    d.word_dist += std::sqrt(e2);
    d.prob_dist += std::hypot(std::exp(r.logprob_a) - pa_mean, std::exp(r.logprob_b) - pb_mean);
  }
  d.word_dist /= static_cast<double>(n);
  d.prob_dist /= static_cast<double>(n);
  return d;
}

ExtractionResult extract_features(const std::filesystem::path& corpus_path,
                                  const sae::SaeParams& params, std::size_t k,
                                  std::size_t batch_size, double prob_scale,
                                  const FilterThresholds& t) {
  t.validate();
  TopSampleCollector collector(params.d_hid(), t.top_n);
  sae::featurize_corpus(corpus_path, params, k, batch_size, prob_scale,
                        [&](std::uint64_t id, std::size_t latent, double a) {
                          collector.add(id, latent, a);
                        });

  ExtractionResult result;
  result.summary.latents = params.d_hid();
  result.summary.prob_scale = prob_scale;
  std::vector<FeatureSlice> slices;
  std::unordered_set<std::uint64_t> wanted;
  for (std::size_t j = 0; j < params.d_hid(); ++j) {
    if (collector.nonzero_count(j) == 0) ++result.summary.never_active;
    auto slice = collector.slice(j, t);
    if (!slice) {
      ++result.summary.dropped_rare;
      continue;
    }
    slices.push_back(apply_activation_cutoff(*slice, t));
    for (const auto& s : slices.back().samples) wanted.insert(s.word_id);
  }
  result.summary.candidates = slices.size();

  const auto lookup = CorpusLookup::load(corpus_path, wanted);
  for (const auto& slice : slices) {
    const auto stats = compute_feature_stats(slice, lookup);
    const auto disp = compute_dispersion(slice, lookup);
    result.candidate_dispersion.push_back(disp);
    if (!passes_filter(stats, t)) continue;
    FeatureRecord rec;
    rec.feature_id = slice.feature_id;
    rec.stats = stats;
    rec.dispersion = disp;
    for (const auto& s : slice.samples) {
      const auto& r = lookup.at(s.word_id);
      rec.samples.push_back({s.word_id, s.activation, r.word, r.context, r.context_offset});
    }
    result.features.push_back(std::move(rec));
  }
  result.summary.kept = result.features.size();
  return result;
}

void write_feature_dump(const std::filesystem::path& path,
                        std::span<const FeatureRecord> features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureError("cannot write feature dump " + path.string());
  for (const auto& f : features) {
    json samples = json::array();
    for (const auto& s : f.samples) {
      json js = {{"word_id", s.word_id},
                 {"activation", s.activation},
                 {"word", s.word},
                 {"context", s.context}};
      if (s.context_offset) js["context_offset"] = *s.context_offset;
      samples.push_back(std::move(js));
    }
    json j = {{"feature_id", f.feature_id},
              {"n", f.stats.n},
              {"median_prob_diff", f.stats.median_prob_diff},
              {"median_logprob_diff", f.stats.median_logprob_diff},
              {"consistency", f.stats.consistency},
              {"favored_model", to_string(f.stats.favored_model)},
              {"word_dist", f.dispersion.word_dist},
              {"prob_dist", f.dispersion.prob_dist},
              {"samples", std::move(samples)}};
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

std::vector<FeatureRecord> read_feature_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureError("cannot open feature dump " + path.string());
  std::vector<FeatureRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      FeatureRecord f;
      f.feature_id = j.at("feature_id").get<std::size_t>();
      f.stats.n = j.at("n").get<std::size_t>();
      f.stats.median_prob_diff = j.at("median_prob_diff").get<double>();
      f.stats.median_logprob_diff = j.at("median_logprob_diff").get<double>();
      f.stats.consistency = j.at("consistency").get<double>();
      f.stats.favored_model = favored_from_string(j.at("favored_model").get<std::string>());
      f.dispersion.word_dist = j.at("word_dist").get<double>();
      f.dispersion.prob_dist = j.at("prob_dist").get<double>();
      for (const auto& s : j.at("samples")) {
        FeatureSampleText st;
        st.word_id = s.at("word_id").get<std::uint64_t>();
        st.activation = s.at("activation").get<double>();
        st.word = s.at("word").get<std::string>();
        st.context = s.at("context").get<std::string>();
        if (s.contains("context_offset")) st.context_offset = s["context_offset"].get<std::uint64_t>();
        f.samples.push_back(std::move(st));
      }
      out.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw FeatureError("malformed feature dump line " + std::to_string(line_no) + ": " +
                         e.what());
    }
  }
  return out;
}

}  // namespace lmslice::features
