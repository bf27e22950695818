// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "lmslice/token_dump.hpp"

namespace lmslice::synth {

namespace {

constexpr std::array<const char*, 10> kPlanted = {"quasar", "nebula",  "pulsar", "comet",
                                                  "galaxy", "meteor", "aurora", "zenith",
                                                  "photon", "orbit"};

std::vector<std::string> background_vocab(std::size_t n) {
  static constexpr std::array<const char*, 12> syl = {"ba", "ko", "li", "ne", "ru", "sa",
                                                      "te", "vo", "mi", "da", "fe", "gu"};
  std::vector<std::string> out;
  for (std::size_t i = 0; out.size() < n; ++i) {
    std::string w = std::string(syl[i % 12]) + syl[(i / 12) % 12];
    if (i >= 144) w += syl[(i / 144) % 12];
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<float> gaussian_vec(std::size_t dim, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(nd(rng));
  return v;
}

std::vector<float> add(const std::vector<float>& a, const std::vector<float>& b, double sign = 1) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(a[i] + sign * b[i]);
  return out;
}

struct Occurrence {
  std::size_t start;
  std::size_t end;
  std::vector<float> embedding;
  double logprob_a;
  double logprob_b;
};

}  // namespace

bool is_planted_word(const std::string& word) {
  return std::find(kPlanted.begin(), kPlanted.end(), word) != kPlanted.end();
}

PlantedFixture write_planted_fixture(const std::filesystem::path& dir, const PlantedConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto vocab = background_vocab(200);
  const std::size_t dim = cfg.embedding_dim;

  std::vector<std::vector<float>> centroid;
  for (std::size_t i = 0; i < vocab.size(); ++i) centroid.push_back(gaussian_vec(dim, 1.0, rng));
  const auto planted_center = gaussian_vec(dim, 1.0, rng);
  std::vector<std::vector<float>> planted_centroid;
  for (std::size_t i = 0; i < kPlanted.size(); ++i) {
    planted_centroid.push_back(add(planted_center, gaussian_vec(dim, cfg.cluster_noise, rng)));
  }

  // Exactly round(fraction * n) planted positions.
  const auto n_planted = static_cast<std::size_t>(std::llround(cfg.planted_fraction * cfg.n_words));
  std::vector<bool> planted(cfg.n_words, false);
  std::fill(planted.begin(), planted.begin() + static_cast<std::ptrdiff_t>(n_planted), true);
  std::shuffle(planted.begin(), planted.end(), rng);

  std::filesystem::create_directories(dir);
  PlantedFixture fx;
  fx.embed_dir = dir / "embed";
  fx.lm_a_dir = dir / "lm_a";
  fx.lm_b_dir = dir / "lm_b";
  fx.planted_vocab.assign(kPlanted.begin(), kPlanted.end());
  fx.planted_words = n_planted;
  fx.total_words = cfg.n_words;
  dump::TokenDumpWriter embed(fx.embed_dir, dump::StreamRole::kEmbed, "synthetic-embedder",
                              static_cast<std::uint32_t>(dim));
  dump::TokenDumpWriter lm_a(fx.lm_a_dir, dump::StreamRole::kLmA, "synthetic-model-a");
  dump::TokenDumpWriter lm_b(fx.lm_b_dir, dump::StreamRole::kLmB, "synthetic-model-b");

  std::uniform_int_distribution<std::size_t> pick_bg(0, vocab.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_pl(0, kPlanted.size() - 1);
  std::uniform_real_distribution<double> bg_prob(0.02, 0.5);

  std::size_t w = 0;
  for (std::uint64_t doc_id = 0; w < cfg.n_words; ++doc_id) {
    std::string text;
    std::vector<Occurrence> occ;
    for (std::size_t i = 0; i < cfg.words_per_doc && w < cfg.n_words; ++i, ++w) {
      if (!text.empty()) text.push_back(' ');
      Occurrence o;
      std::string word;
      if (planted[w]) {
        const auto v = pick_pl(rng);
        word = kPlanted[v];
        o.embedding = add(planted_centroid[v], gaussian_vec(dim, cfg.cluster_noise, rng));
        o.logprob_a = std::log(cfg.planted_p_a);
        o.logprob_b = std::log(cfg.planted_p_b);
      } else {
        const auto v = pick_bg(rng);
        word = vocab[v];
        o.embedding = add(centroid[v], gaussian_vec(dim, 0.3, rng));
        const double p = bg_prob(rng);
        o.logprob_a = o.logprob_b = std::log(p);
      }
      o.start = text.size();
      text += word;
      o.end = text.size();
      occ.push_back(std::move(o));
    }

    std::vector<dump::TokenPiece> te, ta, tb;
    auto piece = [&](std::size_t s, std::size_t e) {
      dump::TokenPiece t;
      t.text = text.substr(s, e - s);
      t.span = {s, e};
      return t;
    };
    for (std::size_t i = 0; i < occ.size(); ++i) {
      const auto& o = occ[i];
      const std::size_t len = o.end - o.start;
      // embed: split long words in two, embeddings straddling the word vector
      if (len >= 6 && uni(rng) < 0.3) {
        const auto delta = gaussian_vec(dim, 0.2, rng);
        auto t1 = piece(o.start, o.start + 3);
        t1.embedding = add(o.embedding, delta);
        auto t2 = piece(o.start + 3, o.end);
        t2.embedding = add(o.embedding, delta, -1.0);
        te.push_back(std::move(t1));
        te.push_back(std::move(t2));
      } else {
        auto t = piece(o.start, o.end);
        t.embedding = o.embedding;
        te.push_back(std::move(t));
      }
      // lm_a: leading space attached, sometimes split
      const std::size_t a_start = i == 0 ? o.start : o.start - 1;
      if (len >= 4 && uni(rng) < 0.3) {
        auto t1 = piece(a_start, o.start + 2);
        t1.logprob = 0.4 * o.logprob_a;
        auto t2 = piece(o.start + 2, o.end);
        t2.logprob = 0.6 * o.logprob_a;
        ta.push_back(std::move(t1));
        ta.push_back(std::move(t2));
      } else {
        auto t = piece(a_start, o.end);
        t.logprob = o.logprob_a;
        ta.push_back(std::move(t));
      }
      auto t = piece(o.start, o.end);
      t.logprob = o.logprob_b;
      tb.push_back(std::move(t));
    }
    const std::string source = "synthetic";
    embed.add_document(doc_id, source, text, te);
    lm_a.add_document(doc_id, source, text, ta);
    lm_b.add_document(doc_id, source, text, tb);
  }
  embed.finish();
  lm_a.finish();
  lm_b.finish();
  return fx;
}

DictionaryFixture make_dictionary_fixture(const DictionaryConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> coef(0.5, 1.5);
  DictionaryFixture fx;
  fx.atoms.resize(static_cast<Eigen::Index>(cfg.n_atoms), static_cast<Eigen::Index>(cfg.dim));
  for (Eigen::Index i = 0; i < fx.atoms.size(); ++i) fx.atoms.data()[i] = nd(rng);
  fx.atoms.rowwise().normalize();
  fx.data.setZero(static_cast<Eigen::Index>(cfg.samples), static_cast<Eigen::Index>(cfg.dim));
  std::vector<std::size_t> idx(cfg.n_atoms);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = 0; j < cfg.active; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, cfg.n_atoms - 1);
      std::swap(idx[j], idx[pick(rng)]);
      const double c = coef(rng);
      fx.data.row(static_cast<Eigen::Index>(s)) +=
          (c * fx.atoms.row(static_cast<Eigen::Index>(idx[j]))).cast<float>();
    }
  }
  return fx;
}

void write_generation_fixture(const std::filesystem::path& dir, std::size_t docs_per_model,
                              std::uint64_t seed) {
  using json = nlohmann::json;
  std::mt19937_64 rng(seed);
  const auto vocab = background_vocab(200);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::uniform_int_distribution<std::size_t> length(440, 520);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::filesystem::create_directories(dir);

  auto write_model = [&](const std::filesystem::path& path, double tab_rate, double quote_rate) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (std::size_t d = 0; d < docs_per_model + 3; ++d) {
      // The last three documents are too short and must be filtered away.
      const std::size_t n = d < docs_per_model ? length(rng) : 120;
      std::string text;
      for (std::size_t i = 0; i < n; ++i) {
        if (i) text += uni(rng) < tab_rate ? "\t" : " ";
        text += vocab[pick(rng)];
        if (uni(rng) < quote_rate) text += ".\"";
      }
      out << json{{"doc_id", d}, {"text", text}}.dump() << '\n';
    }
  };
  write_model(dir / "gen_a.jsonl", 0.01, 0.004);
  write_model(dir / "gen_b.jsonl", 0.002, 0.004);
  const json hyps = json::array({{{"target", "tab"}, {"direction", "A_greater"}},
                                 {{"target", "period+quote"}, {"direction", "B_greater"}},
                                 {{"target", "double-space"}, {"direction", "A_greater"}}});
  std::ofstream(dir / "hypotheses.json", std::ios::binary | std::ios::trunc) << hyps.dump(2) << '\n';
}

}  // namespace lmslice::synth
