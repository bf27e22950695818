// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace lmslice::align {

void AlignConfig::validate() const {
  if (!(prob_weight > 0.0 && prob_weight < 1.0)) {
    throw AlignError("prob_weight must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw AlignError("epsilon must be positive");
}

bool is_whitespace_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<WordSpan> pretokenize(std::string_view doc) {
  std::vector<WordSpan> out;
  const std::size_t n = doc.size();
  std::size_t i = 0;
  while (i < n) {
    const bool ws = is_whitespace_byte(static_cast<unsigned char>(doc[i]));
    std::size_t j = i + 1;
    while (j < n && is_whitespace_byte(static_cast<unsigned char>(doc[j])) == ws) ++j;
    if (!ws) {
      out.push_back({{i, j}, WordKind::kContent});
    } else {
      const bool single_space = (j - i == 1) && doc[i] == ' ';
      const bool between_content = i > 0 && j < n;
      if (!(single_space && between_content)) out.push_back({{i, j}, WordKind::kWhitespace});
    }
    i = j;
  }
  return out;
}

std::size_t count_words(std::string_view document) { return pretokenize(document).size(); }

TokenAssignment map_tokens_to_words(std::span<const WordSpan> words,
                                    std::span<const TokenPiece> tokens,
                                    std::size_t document_size) {
  TokenAssignment out;
  out.word_tokens.resize(words.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto& span = tokens[t].span;
    if (span.end > document_size || span.start > span.end) {
      throw AlignError("token " + std::to_string(t) + " [" + std::to_string(span.start) + "," +
                       std::to_string(span.end) + ") lies outside the document of " +
                       std::to_string(document_size) + " bytes");
    }
    if (span.start == span.end) {
      ++out.empty_tokens;
      continue;
    }
    if (words.empty()) {
      throw AlignError("token " + std::to_string(t) + " in a document without words");
    }
    // First word ending after the token start; words are disjoint and ordered.
    auto it = std::upper_bound(words.begin(), words.end(), span.start,
                               [](std::uint64_t pos, const WordSpan& w) { return pos < w.span.end; });
    std::size_t w;
    if (it == words.end()) {
      w = words.size() - 1;  // trailing separator bytes go to the last word
    } else {
      w = static_cast<std::size_t>(it - words.begin());
      // Either the word contains a byte of the token, or the token sits wholly
      // in the separator gap before it; both resolve to this word.
    }
    out.word_tokens[w].push_back(t);
  }
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (out.word_tokens[w].empty()) out.zero_token_words.push_back(w);
  }
  return out;
}

std::vector<float> aggregate_word_embedding(std::span<const std::vector<float>> embeddings) {
  if (embeddings.empty()) throw AlignError("aggregate_word_embedding: empty token list");
  const std::size_t dim = embeddings.front().size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.size() != dim) throw AlignError("aggregate_word_embedding: length mismatch");
    for (std::size_t i = 0; i < dim; ++i) acc[i] += e[i];
  }
  std::vector<float> out(dim);
  const double n = static_cast<double>(embeddings.size());
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / n);
  return out;
}

double aggregate_word_logprob(std::span<const double> logprobs) {
  if (logprobs.empty()) throw AlignError("aggregate_word_logprob: empty token list");
  double sum = 0.0;
  for (double lp : logprobs) {
    if (!(lp <= 0.0)) throw AlignError("aggregate_word_logprob: log-probability > 0 or NaN");
    sum += lp;
  }
  return sum;
}

void ScaleAccumulator::add(const WordRecord& r) {
  double e2 = 0.0;
  for (float x : r.embedding) e2 += static_cast<double>(x) * x;
  const double pa = std::exp(r.logprob_a);
  const double pb = std::exp(r.logprob_b);
  sum_embedding_norm_ += std::sqrt(e2);
  sum_prob_norm_ += std::hypot(pa, pb);
  ++n_;
}

ProbabilityScale ScaleAccumulator::finish(const AlignConfig& config) const {
  config.validate();
  if (n_ == 0) throw AlignError("compute_probability_scale: empty corpus");
  ProbabilityScale out;
  out.records = n_;
  out.mean_embedding_norm = sum_embedding_norm_ / static_cast<double>(n_);
  out.mean_prob_norm = sum_prob_norm_ / static_cast<double>(n_);
  if (out.mean_prob_norm < config.epsilon) {
    out.scale = 1.0;
    out.degenerate = true;
    return out;
  }
  const double w = config.prob_weight;
  out.scale = (w / (1.0 - w)) * (out.mean_embedding_norm / out.mean_prob_norm);
  return out;
}

ProbabilityScale compute_probability_scale(std::span<const WordRecord> records,
                                           const AlignConfig& config) {
  ScaleAccumulator acc;
  for (const auto& r : records) acc.add(r);
  return acc.finish(config);
}

ProbabilityScale compute_probability_scale(const std::filesystem::path& corpus_path,
                                           const AlignConfig& config) {
  ScaleAccumulator acc;
  corpus::for_each_record(corpus_path, [&](const WordRecord& r) { acc.add(r); });
  return acc.finish(config);
}

std::vector<float> build_feature_vector(const WordRecord& r, double scale) {
  std::vector<float> out;
  out.reserve(r.embedding.size() + 2);
  out.insert(out.end(), r.embedding.begin(), r.embedding.end());
  out.push_back(static_cast<float>(scale * std::exp(r.logprob_a)));
  out.push_back(static_cast<float>(scale * std::exp(r.logprob_b)));
  return out;
}

ContextWindow make_context(std::string_view doc, ByteSpan span, std::size_t radius) {
  auto is_continuation = [&](std::size_t pos) {
    return pos < doc.size() && (static_cast<unsigned char>(doc[pos]) & 0xC0) == 0x80;
  };
  std::size_t begin = span.start > radius ? span.start - radius : 0;
  while (begin < span.start && is_continuation(begin)) ++begin;
  std::size_t end = std::min<std::size_t>(doc.size(), span.end + radius);
  while (end > span.end && is_continuation(end)) --end;
  return {std::string(doc.substr(begin, end - begin)), span.start - begin};
}

namespace {

struct StreamDocs {
  const dump::TokenDumpReader* reader;
  std::map<std::uint64_t, const dump::DocEntry*> docs;
};

StreamDocs index_docs(const dump::TokenDumpReader& r) {
  StreamDocs out{&r, {}};
  for (const auto& d : r.manifest().docs) {
    if (!out.docs.emplace(d.doc_id, &d).second) {
      throw AlignError("duplicate doc " + std::to_string(d.doc_id) + " in " + r.dir().string());
    }
  }
  return out;
}

void check_same_docs(const StreamDocs& ref, const StreamDocs& other) {
  for (const auto& [id, _] : ref.docs) {
    if (!other.docs.count(id)) {
      throw AlignError("document mismatch: doc " + std::to_string(id) + " missing from " +
                       dump::to_string(other.reader->manifest().role) + " dump " +
                       other.reader->dir().string());
    }
  }
  for (const auto& [id, _] : other.docs) {
    if (!ref.docs.count(id)) {
      throw AlignError("document mismatch: doc " + std::to_string(id) + " missing from " +
                       dump::to_string(ref.reader->manifest().role) + " dump " +
                       ref.reader->dir().string());
    }
  }
}

}  // namespace

AlignStats align_corpus(const AlignInputs& inputs, const std::filesystem::path& out_path) {
  dump::TokenDumpReader embed(inputs.embed_dir);
  dump::TokenDumpReader lm_a(inputs.lm_a_dir);
  dump::TokenDumpReader lm_b(inputs.lm_b_dir);
  if (embed.manifest().role != dump::StreamRole::kEmbed ||
      lm_a.manifest().role != dump::StreamRole::kLmA ||
      lm_b.manifest().role != dump::StreamRole::kLmB) {
    throw AlignError("token dump roles must be embed, lm_a, lm_b respectively");
  }
  auto e_docs = index_docs(embed);
  auto a_docs = index_docs(lm_a);
  auto b_docs = index_docs(lm_b);
  check_same_docs(e_docs, a_docs);
  check_same_docs(e_docs, b_docs);

  corpus::CorpusHeader header;
  header.embedding_dim = embed.manifest().embedding_dim;
  header.model_a_name = lm_a.manifest().model_id;
  header.model_b_name = lm_b.manifest().model_id;
  header.embed_model_name = embed.manifest().model_id;
  corpus::CorpusWriter writer(out_path, header);

  AlignStats stats;
  std::uint64_t next_word_id = 0;
  for (const auto& [doc_id, entry] : e_docs.docs) {
    auto text = embed.load_text(doc_id);
    if (!text) throw AlignError("embed dump lacks text for doc " + std::to_string(doc_id));
    for (const auto* other : {&lm_a, &lm_b}) {
      auto t = other->load_text(doc_id);
      if (t && *t != *text) {
        throw AlignError("document mismatch: text of doc " + std::to_string(doc_id) +
                         " differs in " + other->dir().string());
      }
    }
    const auto words = pretokenize(*text);
    const auto e_tok = embed.load_tokens(doc_id);
    const auto a_tok = lm_a.load_tokens(doc_id);
    const auto b_tok = lm_b.load_tokens(doc_id);
    const auto e_map = map_tokens_to_words(words, e_tok, text->size());
    const auto a_map = map_tokens_to_words(words, a_tok, text->size());
    const auto b_map = map_tokens_to_words(words, b_tok, text->size());
    stats.empty_tokens += e_map.empty_tokens + a_map.empty_tokens + b_map.empty_tokens;
    ++stats.documents;
    stats.words += words.size();

    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& et = e_map.word_tokens[w];
      const auto& at = a_map.word_tokens[w];
      const auto& bt = b_map.word_tokens[w];
      if (et.empty() || at.empty() || bt.empty()) {
        ++stats.skipped_words;
        if (et.empty()) ++stats.skipped_missing_embed;
        if (at.empty()) ++stats.skipped_missing_lm_a;
        if (bt.empty()) ++stats.skipped_missing_lm_b;
        continue;
      }
      std::vector<std::vector<float>> embs;
      embs.reserve(et.size());
      for (auto t : et) embs.push_back(*e_tok[t].embedding);
      std::vector<double> lpa, lpb;
      for (auto t : at) lpa.push_back(*a_tok[t].logprob);
      for (auto t : bt) lpb.push_back(*b_tok[t].logprob);

      WordRecord r;
      r.word_id = next_word_id++;
      r.doc_id = doc_id;
      r.source = entry->source;
      r.span = words[w].span;
      r.word = text->substr(r.span.start, r.span.size());
      auto ctx = make_context(*text, r.span);
      r.context = std::move(ctx.text);
      r.context_offset = ctx.word_offset;
      r.embedding = aggregate_word_embedding(embs);
      r.logprob_a = aggregate_word_logprob(lpa);
      r.logprob_b = aggregate_word_logprob(lpb);
      writer.append(r);
      ++stats.records;
    }
  }
  writer.finish();
  return stats;
}

}  // namespace lmslice::align
