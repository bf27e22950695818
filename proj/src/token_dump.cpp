// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/token_dump.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lmslice/detail/le_io.hpp"

namespace lmslice::dump {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "lmslice-tokendump";

std::string array_suffix(StreamRole role) {
  switch (role) {
    case StreamRole::kEmbed: return ".emb.f32";
    case StreamRole::kLmA: return ".lp_a.f64";
    case StreamRole::kLmB: return ".lp_b.f64";
  }
  return "";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DumpError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DumpError("cannot write " + p.string());
}

}  // namespace

std::string to_string(StreamRole role) {
  switch (role) {
    case StreamRole::kEmbed: return "embed";
    case StreamRole::kLmA: return "lm_a";
    case StreamRole::kLmB: return "lm_b";
  }
  return "unknown";
}

StreamRole role_from_string(const std::string& s) {
  if (s == "embed") return StreamRole::kEmbed;
  if (s == "lm_a") return StreamRole::kLmA;
  if (s == "lm_b") return StreamRole::kLmB;
  throw DumpError("unknown stream role '" + s + "'");
}

TokenDumpReader::TokenDumpReader(fs::path dir) : dir_(std::move(dir)) {
  json j;
  try {
    j = json::parse(read_file(dir_ / "manifest.json"));
    if (j.at("format").get<std::string>() != kFormat) {
      throw DumpError("not a token dump manifest: " + (dir_ / "manifest.json").string());
    }
    if (j.at("version").get<int>() != 1) throw DumpError("unsupported token dump version");
    manifest_.role = role_from_string(j.at("role").get<std::string>());
    manifest_.model_id = j.at("model_id").get<std::string>();
    if (manifest_.role == StreamRole::kEmbed) {
      manifest_.embedding_dim = j.at("embedding_dim").get<std::uint32_t>();
      if (manifest_.embedding_dim == 0) throw DumpError("embedding_dim must be > 0");
    }
    for (const auto& d : j.at("docs")) {
      manifest_.docs.push_back({d.at("doc_id").get<std::uint64_t>(),
                                d.value("source", std::string{}),
                                d.at("n_tokens").get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    throw DumpError("malformed manifest in " + dir_.string() + ": " + e.what());
  }
}

std::optional<std::string> TokenDumpReader::load_text(std::uint64_t doc_id) const {
  auto p = dir_ / (std::to_string(doc_id) + ".txt");
  if (!fs::exists(p)) return std::nullopt;
  return read_file(p);
}

std::vector<TokenPiece> TokenDumpReader::load_tokens(std::uint64_t doc_id) const {
  const DocEntry* entry = nullptr;
  for (const auto& d : manifest_.docs) {
    if (d.doc_id == doc_id) entry = &d;
  }
  if (!entry) throw DumpError("doc " + std::to_string(doc_id) + " not in " + dir_.string());

  const std::string stem = std::to_string(doc_id);
  std::vector<TokenPiece> tokens;
  {
    std::ifstream in(dir_ / (stem + ".tokens.jsonl"), std::ios::binary);
    if (!in) throw DumpError("missing token file for doc " + stem + " in " + dir_.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto j = json::parse(line);
        if (j.at("idx").get<std::uint64_t>() != tokens.size()) {
          throw DumpError("doc " + stem + ": token idx out of sequence at line " +
                          std::to_string(tokens.size()));
        }
        TokenPiece t;
        t.text = j.value("text", std::string{});
        t.span = {j.at("start").get<std::uint64_t>(), j.at("end").get<std::uint64_t>()};
        if (t.span.start > t.span.end) {
          throw DumpError("doc " + stem + ": token " + std::to_string(tokens.size()) +
                          " has start > end");
        }
        if (!tokens.empty() && t.span.start < tokens.back().span.start) {
          throw DumpError("doc " + stem + ": token spans not ordered at " +
                          std::to_string(tokens.size()));
        }
        tokens.push_back(std::move(t));
      } catch (const json::exception& e) {
        throw DumpError("doc " + stem + ": malformed token line: " + e.what());
      }
    }
  }
  if (tokens.size() != entry->n_tokens) {
    throw DumpError("doc " + stem + ": manifest lists " + std::to_string(entry->n_tokens) +
                    " tokens, file holds " + std::to_string(tokens.size()));
  }

  const std::string arr = read_file(dir_ / (stem + array_suffix(manifest_.role)));
  if (manifest_.role == StreamRole::kEmbed) {
    const std::size_t dim = manifest_.embedding_dim;
    if (arr.size() != tokens.size() * dim * 4) {
      throw DumpError("doc " + stem + ": embedding array has " + std::to_string(arr.size()) +
                      " bytes, expected " + std::to_string(tokens.size() * dim * 4));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      std::vector<float> e(dim);
      for (std::size_t c = 0; c < dim; ++c) {
        e[c] = detail::get_le<float>(arr.data() + 4 * (i * dim + c));
      }
      tokens[i].embedding = std::move(e);
    }
  } else {
    if (arr.size() != tokens.size() * 8) {
      throw DumpError("doc " + stem + ": logprob array has " + std::to_string(arr.size()) +
                      " bytes, expected " + std::to_string(tokens.size() * 8));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      double lp = detail::get_le<double>(arr.data() + 8 * i);
      if (!(lp <= 0.0)) {
        throw DumpError("doc " + stem + ": token " + std::to_string(i) +
                        " has logprob > 0 or NaN");
      }
      tokens[i].logprob = lp;
    }
  }
  return tokens;
}

TokenDumpWriter::TokenDumpWriter(fs::path dir, StreamRole role, std::string model_id,
                                 std::uint32_t embedding_dim)
    : dir_(std::move(dir)) {
  manifest_.role = role;
  manifest_.model_id = std::move(model_id);
  manifest_.embedding_dim = embedding_dim;
  if (role == StreamRole::kEmbed && embedding_dim == 0) {
    throw DumpError("embed stream requires embedding_dim > 0");
  }
  fs::create_directories(dir_);
}

void TokenDumpWriter::add_document(std::uint64_t doc_id, const std::string& source,
                                   const std::string& text,
                                   const std::vector<TokenPiece>& tokens) {
  const std::string stem = std::to_string(doc_id);
  write_file(dir_ / (stem + ".txt"), text);

  std::string lines;
  std::string arr;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    json j = {{"idx", i}, {"text", t.text}, {"start", t.span.start}, {"end", t.span.end}};
    lines += j.dump();
    lines += '\n';
    if (manifest_.role == StreamRole::kEmbed) {
      if (!t.embedding || t.embedding->size() != manifest_.embedding_dim) {
        throw DumpError("doc " + stem + ": token " + std::to_string(i) +
                        " lacks an embedding of the declared dimension");
      }
      for (float x : *t.embedding) detail::put_le<float>(arr, x);
    } else {
      if (!t.logprob) {
        throw DumpError("doc " + stem + ": token " + std::to_string(i) + " lacks a logprob");
      }
      detail::put_le<double>(arr, *t.logprob);
    }
  }
  write_file(dir_ / (stem + ".tokens.jsonl"), lines);
  write_file(dir_ / (stem + array_suffix(manifest_.role)), arr);
  manifest_.docs.push_back({doc_id, source, tokens.size()});
}

void TokenDumpWriter::finish() {
  if (finished_) return;
  finished_ = true;
  json docs = json::array();
  for (const auto& d : manifest_.docs) {
    docs.push_back({{"doc_id", d.doc_id}, {"source", d.source}, {"n_tokens", d.n_tokens}});
  }
  json j = {{"format", kFormat},
            {"version", 1},
            {"role", to_string(manifest_.role)},
            {"model_id", manifest_.model_id},
            {"docs", docs}};
  if (manifest_.role == StreamRole::kEmbed) j["embedding_dim"] = manifest_.embedding_dim;
  write_file(dir_ / "manifest.json", j.dump(2) + "\n");
}

}  // namespace lmslice::dump
