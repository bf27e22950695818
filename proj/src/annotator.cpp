// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/annotator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <exception>
#include <fstream>
#include <thread>

#include <openssl/evp.h>

#include "json.hpp"

namespace lmslice::annotate {

using json = nlohmann::json;

namespace {
#include "prompts.inc"

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Text strictly between the answer markers.
std::string_view answer_block(std::string_view text) {
  const auto lo = lower(text);
  const auto b = lo.find("<begin answer>");
  if (b == std::string::npos) throw ParseError("response lacks <BEGIN ANSWER>");
  const auto start = b + std::string_view("<begin answer>").size();
  const auto e = lo.find("<end answer>", start);
  if (e == std::string::npos) throw ParseError("response lacks <END ANSWER>");
  return text.substr(start, e - start);
}

// Value of the first "Key:" line in the block (case-insensitive key).
std::optional<std::string> field(std::string_view block, std::string_view key) {
  const auto want = lower(key) + ":";
  std::size_t pos = 0;
  while (pos <= block.size()) {
    auto nl = block.find('\n', pos);
    if (nl == std::string_view::npos) nl = block.size();
    const auto line = trim(block.substr(pos, nl - pos));
    if (line.size() >= want.size() && lower(line.substr(0, want.size())) == want) {
      return std::string(trim(line.substr(want.size())));
    }
    pos = nl + 1;
  }
  return std::nullopt;
}

std::vector<std::string> split_sep(std::string_view s) {
  std::vector<std::string> out;
  const std::string_view sep = "<SEP>";
  std::size_t pos = 0;
  while (true) {
    const auto at = s.find(sep, pos);
    out.emplace_back(trim(s.substr(pos, at == std::string_view::npos ? at : at - pos)));
    if (at == std::string_view::npos) break;
    pos = at + sep.size();
  }
  return out;
}

Pass pass_of(std::string_view prompt) {
  if (prompt.starts_with(kValidationPrompt)) return Pass::kValidation;
  return Pass::kFirst;
}

}  // namespace

std::string_view prompt_prefix(Pass pass) {
  return pass == Pass::kFirst ? kFirstPassPrompt : kValidationPrompt;
}

std::string mark_word(std::string_view context, std::string_view word, std::size_t offset) {
  if (offset + word.size() > context.size() || context.substr(offset, word.size()) != word) {
    throw AnnotationError("word not found at offset " + std::to_string(offset) + " of its context");
  }
  std::string out;
  out.reserve(context.size() + 2);
  out.append(context.substr(0, offset));
  out.push_back('*');
  out.append(word);
  out.push_back('*');
  out.append(context.substr(offset + word.size()));
  return out;
}

AnnotationExample make_example(const features::FeatureSampleText& s) {
  std::size_t offset;
  if (s.context_offset) {
    offset = static_cast<std::size_t>(*s.context_offset);
  } else {
    offset = s.context.find(s.word);
    if (offset == std::string::npos) {
      throw AnnotationError("word_id " + std::to_string(s.word_id) + ": word not in context");
    }
  }
  return {s.word, mark_word(s.context, s.word, offset)};
}

std::vector<AnnotationExample> examples_for(const features::FeatureRecord& f,
                                            std::size_t max_examples) {
  std::vector<AnnotationExample> out;
  for (std::size_t i = 0; i < f.samples.size() && i < max_examples; ++i) {
    out.push_back(make_example(f.samples[i]));
  }
  return out;
}

std::vector<AnnotationExample> examples_for(const features::FeatureSlice& slice,
                                            const features::CorpusLookup& lookup,
                                            std::size_t max_examples) {
  std::vector<AnnotationExample> out;
  for (std::size_t i = 0; i < slice.samples.size() && i < max_examples; ++i) {
    const auto& r = lookup.at(slice.samples[i].word_id);
    out.push_back(make_example({r.word_id, slice.samples[i].activation, r.word, r.context,
                                r.word_position()}));
  }
  return out;
}

std::string format_annotation_prompt(std::span<const AnnotationExample> examples, Pass pass,
                                     const std::optional<std::string>& prior_label,
                                     std::size_t max_examples) {
  std::string out(prompt_prefix(pass));
  out.push_back('\n');
  if (pass == Pass::kValidation) {
    if (!prior_label) throw AnnotationError("validation prompt needs a prior label");
    out += "Label: " + *prior_label + "\n";
  }
  for (std::size_t i = 0; i < examples.size() && i < max_examples; ++i) {
    out += "- " + examples[i].word + ": " + examples[i].context_marked + "\n";
  }
  return out;
}

FirstPassResult parse_first_pass_response(std::string_view text) {
  const auto block = answer_block(text);
  const auto coherent = field(block, "Coherent");
  if (!coherent) throw ParseError("missing Coherent field");
  std::string verdict = lower(*coherent);
  std::erase_if(verdict, [](char c) { return c == '*' || c == '"' || c == '.'; });
  FirstPassResult r;
  if (verdict == "no") return r;
  if (verdict != "yes") throw ParseError("Coherent must be YES or NO, got '" + *coherent + "'");
  const auto desc = field(block, "Description");
  if (!desc || desc->empty() || lower(*desc) == "none") {
    throw ParseError("coherent answer without a description");
  }
  r.coherent = true;
  r.description = *desc;
  return r;
}

ValidationResult parse_validation_response(std::string_view text) {
  const auto block = answer_block(text);
  const auto score_s = field(block, "Score");
  if (!score_s) throw ParseError("missing Score field");
  int score = 0;
  const auto* b = score_s->data();
  const auto* e = b + score_s->size();
  const auto [ptr, ec] = std::from_chars(b, e, score);
  if (ec != std::errc() || ptr != e) throw ParseError("Score is not an integer: '" + *score_s + "'");
  if (score < -1 || score > 3) throw ParseError("Score out of range: " + *score_s);

  const std::string label = field(block, "Label").value_or("");
  ValidationResult r;
  r.score = score;
  if (score == 0 || score == 3) {
    if (!label.empty()) {
      throw ParseError("score " + std::to_string(score) + " must have an empty label");
    }
    return r;
  }
  auto parts = split_sep(label);
  const std::size_t want = score == -1 ? 2 : 1;
  if (parts.size() != want ||
      std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) {
    throw ParseError("score " + std::to_string(score) + " needs " + std::to_string(want) +
                     " label(s), got '" + label + "'");
  }
  r.labels = std::move(parts);
  return r;
}

std::string to_string(LabelStatus s) {
  switch (s) {
    case LabelStatus::kLabeled: return "labeled";
    case LabelStatus::kIncoherent: return "incoherent";
    case LabelStatus::kNeedsReview: return "needs_review";
    case LabelStatus::kFailed: return "failed";
  }
  return "failed";
}

LabelStatus status_from_string(const std::string& s) {
  if (s == "labeled") return LabelStatus::kLabeled;
  if (s == "incoherent") return LabelStatus::kIncoherent;
  if (s == "needs_review") return LabelStatus::kNeedsReview;
  if (s == "failed") return LabelStatus::kFailed;
  throw AnnotationError("unknown label status '" + s + "'");
}

std::string prompt_hash(std::string_view prompt) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(prompt.data(), prompt.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw AnnotationError("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

ScriptedTransport::ScriptedTransport(std::vector<std::string> responses)
    : responses_(std::move(responses)) {}

std::string ScriptedTransport::complete(const std::string& prompt) {
  std::lock_guard lock(mu_);
  if (prompts_.size() >= responses_.size()) {
    throw TransportError("scripted transport exhausted", false);
  }
  prompts_.push_back(prompt);
  return responses_[prompts_.size() - 1];
}

std::size_t ScriptedTransport::calls() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

std::vector<std::string> ScriptedTransport::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

MockTransport MockTransport::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnnotationError("cannot open mock transport file " + path.string());
  MockTransport m;
  try {
    const auto j = json::parse(in);
    if (j.contains("responses")) {
      for (const auto& [hash, v] : j.at("responses").items()) {
        if (v.is_string()) {
          m.set_response(hash, {v.get<std::string>()});
        } else {
          m.set_response(hash, v.get<std::vector<std::string>>());
        }
      }
    }
    if (j.contains("default_first_pass")) {
      m.set_default(Pass::kFirst, j["default_first_pass"].get<std::string>());
    }
    if (j.contains("default_validation")) {
      m.set_default(Pass::kValidation, j["default_validation"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw AnnotationError("malformed mock transport file " + path.string() + ": " + e.what());
  }
  return m;
}

void MockTransport::set_response(const std::string& hash, std::vector<std::string> responses) {
  if (responses.empty()) throw AnnotationError("mock response list for " + hash + " is empty");
  std::lock_guard lock(mu_.m);
  responses_[hash] = std::move(responses);
  cursor_[hash] = 0;
}

void MockTransport::set_default(Pass pass, std::string response) {
  std::lock_guard lock(mu_.m);
  (pass == Pass::kFirst ? default_first_ : default_validation_) = std::move(response);
}

std::string MockTransport::complete(const std::string& prompt) {
  const auto h = prompt_hash(prompt);
  std::lock_guard lock(mu_.m);
  if (auto it = responses_.find(h); it != responses_.end()) {
    auto& i = cursor_[h];
    const auto& r = it->second[std::min(i, it->second.size() - 1)];
    ++i;
    return r;
  }
  const auto& d = pass_of(prompt) == Pass::kFirst ? default_first_ : default_validation_;
  if (!d) throw TransportError("mock transport has no response for prompt " + h, false);
  return *d;
}

MockTransport accepting_mock(const std::string& description) {
  MockTransport m;
  m.set_default(Pass::kFirst, "<BEGIN ANSWER>\nCoherent: YES\nDescription: " + description +
                                  "\n<END ANSWER>");
  m.set_default(Pass::kValidation, "<BEGIN ANSWER>\nScore: 3\nLabel:\n<END ANSWER>");
  return m;
}

namespace {

template <class Result, class Parse>
std::optional<Result> run_pass(const std::string& prompt, ChatTransport& transport,
                               const AnnotatorConfig& cfg, std::vector<std::string>& raw,
                               Parse parse) {
  auto backoff = cfg.initial_backoff;
  for (std::size_t attempt = 0; attempt < cfg.retry_limit; ++attempt) {
    const bool last = attempt + 1 == cfg.retry_limit;
    std::string response;
    try {
      response = transport.complete(prompt);
    } catch (const TransportError& e) {
      if (!e.transient() || last) throw;
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, cfg.max_backoff);
      continue;
    }
    raw.push_back(response);
    try {
      return parse(response);
    } catch (const ParseError&) {
      // retried below
    }
  }
  return std::nullopt;
}

}  // namespace

FeatureLabel annotate_feature(std::size_t feature_id, std::span<const AnnotationExample> examples,
                              ChatTransport& transport, const AnnotatorConfig& cfg) {
  if (examples.empty()) throw AnnotationError("annotate_feature: no examples");
  if (cfg.retry_limit == 0) throw AnnotationError("retry_limit must be positive");
  FeatureLabel out;
  out.feature_id = feature_id;

  const auto first = run_pass<FirstPassResult>(
      format_annotation_prompt(examples, Pass::kFirst, std::nullopt, cfg.max_examples), transport,
      cfg, out.raw_responses, parse_first_pass_response);
  if (!first) {
    out.status = LabelStatus::kFailed;
    return out;
  }
  if (!first->coherent) {
    out.status = LabelStatus::kIncoherent;
    return out;
  }

  const auto second = run_pass<ValidationResult>(
      format_annotation_prompt(examples, Pass::kValidation, first->description, cfg.max_examples),
      transport, cfg, out.raw_responses, parse_validation_response);
  if (!second) {
    out.status = LabelStatus::kFailed;
    out.labels = {first->description};
    return out;
  }
  switch (second->score) {
    case 0:
      out.status = LabelStatus::kIncoherent;
      break;
    case 3:
      out.status = LabelStatus::kLabeled;
      out.labels = {first->description};
      break;
    case 1:
    case 2:
      out.status = LabelStatus::kLabeled;
      out.labels = second->labels;
      break;
    default:  // -1
      out.status = LabelStatus::kNeedsReview;
      out.labels = second->labels;
      break;
  }
  return out;
}

std::vector<FeatureLabel> annotate_features(std::span<const features::FeatureRecord> features,
                                            ChatTransport& transport,
                                            const AnnotatorConfig& cfg) {
  std::vector<const features::FeatureRecord*> order;
  for (const auto& f : features) order.push_back(&f);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->feature_id < b->feature_id; });

  std::vector<FeatureLabel> out(order.size());
  std::vector<std::exception_ptr> errors(order.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < order.size();) {
      try {
        const auto ex = examples_for(*order[i], cfg.max_examples);
        out[i] = annotate_feature(order[i]->feature_id, ex, transport, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(cfg.concurrency, 1, std::max<std::size_t>(order.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_labels(const std::filesystem::path& path, std::span<const FeatureLabel> labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AnnotationError("cannot write labels " + path.string());
  for (const auto& l : labels) {
    const json j = {{"feature_id", l.feature_id},
                    {"status", to_string(l.status)},
                    {"labels", l.labels},
                    {"raw_responses", l.raw_responses}};
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

std::vector<FeatureLabel> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnnotationError("cannot open labels " + path.string());
  std::vector<FeatureLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      FeatureLabel l;
      l.feature_id = j.at("feature_id").get<std::size_t>();
      l.status = status_from_string(j.at("status").get<std::string>());
      l.labels = j.at("labels").get<std::vector<std::string>>();
      l.raw_responses = j.at("raw_responses").get<std::vector<std::string>>();
      out.push_back(std::move(l));
    } catch (const json::exception& e) {
      throw AnnotationError("malformed labels line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace lmslice::annotate
