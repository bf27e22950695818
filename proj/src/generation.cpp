// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/generation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <random>

#include "json.hpp"
#include "lmslice/aligner.hpp"

namespace lmslice::gen {

using json = nlohmann::json;

std::vector<GenerationDoc> read_generations(const std::filesystem::path& path, ModelTag tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GenerationError("cannot open generations " + path.string());
  std::vector<GenerationDoc> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      GenerationDoc d;
      d.model_tag = tag;
      const auto& id = j.at("doc_id");
      d.doc_id = id.is_string() ? id.get<std::string>() : id.dump();
      d.text = j.at("text").get<std::string>();
      d.word_count = align::count_words(d.text);
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw GenerationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

FilteredGenerations filter_generations(std::span<const GenerationDoc> docs,
                                       const FilterConfig& cfg) {
  FilteredGenerations out;
  std::vector<GenerationDoc> pool_a, pool_b;
  for (const auto& d : docs) {
    if (d.word_count < cfg.min_words || d.word_count > cfg.max_words) continue;
    (d.model_tag == ModelTag::kA ? pool_a : pool_b).push_back(d);
  }
  std::mt19937_64 rng(cfg.seed);
  auto take = [&](std::vector<GenerationDoc>& pool, std::vector<GenerationDoc>& dst,
                  const char* name) {
    if (pool.size() <= cfg.sample_n) {
      if (pool.size() < cfg.sample_n) {
        out.warnings.push_back("model " + std::string(name) + ": only " +
                               std::to_string(pool.size()) + " generations in [" +
                               std::to_string(cfg.min_words) + ", " +
                               std::to_string(cfg.max_words) + "] words, wanted " +
                               std::to_string(cfg.sample_n));
      }
      dst = std::move(pool);
      return;
    }
    std::sample(pool.begin(), pool.end(), std::back_inserter(dst), cfg.sample_n, rng);
  };
  take(pool_a, out.a, "A");
  take(pool_b, out.b, "B");
  return out;
}

std::size_t count_occurrences(std::string_view text, std::string_view target) {
  if (target.empty()) throw GenerationError("count_occurrences: empty target");
  std::size_t n = 0;
  for (auto pos = text.find(target); pos != std::string_view::npos;
       pos = text.find(target, pos + target.size())) {
    ++n;
  }
  return n;
}

std::string to_string(Direction d) { return d == Direction::kAGreater ? "A_greater" : "B_greater"; }

Direction direction_from_string(const std::string& s) {
  if (s == "A_greater") return Direction::kAGreater;
  if (s == "B_greater") return Direction::kBGreater;
  throw GenerationError("direction must be A_greater or B_greater, got '" + s + "'");
}

StringHypothesis make_hypothesis(const std::string& target, Direction direction) {
  if (target.empty()) throw GenerationError("hypothesis target is empty");
  StringHypothesis h{target, {}, direction};
  if (target == "tab") {
    h.variants = {"\t"};
  } else if (target == "double-space") {
    h.variants = {"  "};
  } else if (target == "period+quote") {
    h.variants = {".\"", ".”"};
  } else {
    h.variants = {target};
  }
  return h;
}

std::vector<StringHypothesis> read_hypotheses(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GenerationError("cannot open hypotheses " + path.string());
  try {
    const auto j = json::parse(in);
    std::vector<StringHypothesis> out;
    for (const auto& h : j) {
      out.push_back(make_hypothesis(h.at("target").get<std::string>(),
                                    direction_from_string(h.at("direction").get<std::string>())));
    }
    return out;
  } catch (const json::exception& e) {
    throw GenerationError("malformed hypotheses " + path.string() + ": " + e.what());
  }
}

std::string to_string(Method m) { return m == Method::kExact ? "exact" : "normal"; }

namespace {

struct TieGroup {
  std::uint64_t rank2;  // twice the midrank
  std::size_t size;
  std::size_t in_a;
};

// Groups of equal pooled values in ascending order, with doubled midranks.
std::vector<TieGroup> tie_groups(std::span<const double> a, std::span<const double> b) {
  std::vector<std::pair<double, bool>> pooled;
  for (double x : a) pooled.emplace_back(x, true);
  for (double x : b) pooled.emplace_back(x, false);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<TieGroup> groups;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    std::size_t in_a = 0;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) in_a += pooled[j++].second;
    // ranks i+1 .. j, midrank (i+1+j)/2
    groups.push_back({static_cast<std::uint64_t>(i + 1 + j), j - i, in_a});
    i = j;
  }
  return groups;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;  // exact at every step
  return r;
}

// Exact tail over all C(n, m) splits of the pooled values. The DP runs over
// the smaller sample so that every partial count stays below C(n, m).
double exact_p(const std::vector<TieGroup>& groups, std::size_t n_a, std::size_t n_b,
               Alternative alt) {
  const bool over_a = n_a <= n_b;
  const std::size_t m = over_a ? n_a : n_b;
  std::uint64_t s_max = 0;
  std::uint64_t observed = 0;
  for (const auto& g : groups) {
    s_max += g.rank2 * std::min(g.size, m);
    observed += g.rank2 * (over_a ? g.in_a : g.size - g.in_a);
  }
  const std::size_t width = static_cast<std::size_t>(s_max) + 1;
  std::vector<std::uint64_t> dp((m + 1) * width, 0), next;
  dp[0] = 1;
  std::uint64_t reach = 0;
  for (const auto& g : groups) {
    next.assign(dp.size(), 0);
    const std::size_t t_max = std::min(g.size, m);
    std::vector<std::uint64_t> w(t_max + 1);
    for (std::size_t t = 0; t <= t_max; ++t) w[t] = binomial(g.size, t);
    for (std::size_t x = 0; x <= m; ++x) {
      for (std::uint64_t s = 0; s <= reach; ++s) {
        const auto c = dp[x * width + s];
        if (c == 0) continue;
        for (std::size_t t = 0; t <= t_max && x + t <= m; ++t) {
          next[(x + t) * width + s + t * g.rank2] += c * w[t];
        }
      }
    }
    reach = std::min<std::uint64_t>(s_max, reach + t_max * g.rank2);
    dp.swap(next);
  }
  // Large doubled rank sums of sample a mean large U_a; for sample b the
  // tail flips.
  const bool upper = (alt == Alternative::kGreater) == over_a;
  std::uint64_t hits = 0, total = 0;
  for (std::uint64_t s = 0; s < width; ++s) {
    const auto c = dp[m * width + s];
    total += c;
    if (upper ? s >= observed : s <= observed) hits += c;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alt) {
  const auto method = a.size() * b.size() <= kExactProductLimit ? Method::kExact : Method::kNormal;
  return mann_whitney_u(a, b, alt, method);
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alt, Method method) {
  if (a.empty() || b.empty()) throw GenerationError("mann_whitney_u: empty sample");
  for (double x : a) {
    if (!std::isfinite(x)) throw GenerationError("mann_whitney_u: non-finite value");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw GenerationError("mann_whitney_u: non-finite value");
  }
  const auto groups = tie_groups(a, b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;

  std::uint64_t r2 = 0;
  for (const auto& g : groups) r2 += g.rank2 * g.in_a;
  MannWhitneyResult res;
  res.method = method;
  res.u = static_cast<double>(r2) / 2.0 - na * (na + 1.0) / 2.0;

  if (groups.size() == 1) {
    res.p = 1.0;
    return res;
  }
  if (method == Method::kExact) {
    res.p = exact_p(groups, a.size(), b.size(), alt);
    return res;
  }
  double tie_term = 0.0;
  for (const auto& g : groups) {
    const double t = static_cast<double>(g.size);
    tie_term += t * t * t - t;
  }
  const double var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) {
    res.p = 1.0;
    return res;
  }
  const double mu = na * nb / 2.0;
  const double sd = std::sqrt(var);
  if (alt == Alternative::kGreater) {
    const double z = (res.u - mu - 0.5) / sd;
    res.p = 0.5 * std::erfc(z / std::sqrt(2.0));
  } else {
    const double z = (res.u - mu + 0.5) / sd;
    res.p = 0.5 * std::erfc(-z / std::sqrt(2.0));
  }
  res.p = std::clamp(res.p, 0.0, 1.0);
  return res;
}

namespace {

std::string escape_variant(const std::string& v) {
  const json j = v;
  return j.dump(-1, ' ', true);
}

HypothesisRow evaluate(std::span<const GenerationDoc> docs_a, std::span<const GenerationDoc> docs_b,
                       const StringHypothesis& h, double alpha) {
  HypothesisRow row;
  row.target = h.target;
  row.direction = h.direction;
  row.n_a = docs_a.size();
  row.n_b = docs_b.size();
  auto counts = [&](std::span<const GenerationDoc> docs, bool is_a) {
    std::vector<double> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
      std::size_t total = 0;
      for (const auto& v : h.variants) {
        const auto c = count_occurrences(d.text, v);
        auto& slot = row.variant_totals[escape_variant(v)];
        (is_a ? slot.first : slot.second) += c;
        total += c;
      }
      out.push_back(static_cast<double>(total));
    }
    return out;
  };
  const auto ca = counts(docs_a, true);
  const auto cb = counts(docs_b, false);
  if (ca.empty() || cb.empty()) throw GenerationError("hypothesis '" + h.target + "': no documents");
  row.mean_a = std::accumulate(ca.begin(), ca.end(), 0.0) / static_cast<double>(ca.size());
  row.mean_b = std::accumulate(cb.begin(), cb.end(), 0.0) / static_cast<double>(cb.size());
  const auto alt = h.direction == Direction::kAGreater ? Alternative::kGreater : Alternative::kLess;
  const auto mw = mann_whitney_u(ca, cb, alt);
  row.u = mw.u;
  row.p = mw.p;
  row.method = mw.method;
  row.significant = mw.p < alpha;
  return row;
}

}  // namespace

std::vector<HypothesisRow> run_hypotheses(std::span<const GenerationDoc> docs_a,
                                          std::span<const GenerationDoc> docs_b,
                                          std::span<const StringHypothesis> hypotheses,
                                          double alpha) {
  std::vector<std::future<HypothesisRow>> jobs;
  for (const auto& h : hypotheses) {
    jobs.push_back(std::async(std::launch::async, evaluate, docs_a, docs_b, std::cref(h), alpha));
  }
  std::vector<HypothesisRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

void write_hypothesis_report(const std::filesystem::path& path,
                             std::span<const HypothesisRow> rows,
                             std::span<const std::string> warnings) {
  json out = json::object();
  json jr = json::array();
  for (const auto& r : rows) {
    json variants = json::object();
    for (const auto& [v, t] : r.variant_totals) variants[v] = {{"A", t.first}, {"B", t.second}};
    jr.push_back({{"target", r.target},
                  {"direction", to_string(r.direction)},
                  {"n_a", r.n_a},
                  {"n_b", r.n_b},
                  {"U", r.u},
                  {"p", r.p},
                  {"method", to_string(r.method)},
                  {"significant", r.significant},
                  {"mean_a", r.mean_a},
                  {"mean_b", r.mean_b},
                  {"variant_totals", std::move(variants)}});
  }
  out["rows"] = std::move(jr);
  out["warnings"] = std::vector<std::string>(warnings.begin(), warnings.end());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw GenerationError("cannot write " + path.string());
  f << out.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
}

}  // namespace lmslice::gen
