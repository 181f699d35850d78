// Copyright 2026 The OntoPG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Report ingestion: tokenization, vocabulary, pretrained embeddings and the
// line-delimited dataset format.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "ontopg/errors.hpp"

namespace ontopg {

using Tokens = std::vector<std::string>;

namespace detail {

inline bool is_word_byte(unsigned char c) {
  // Non-ASCII bytes belong to words so multibyte UTF-8 letters stay intact.
  return std::isalnum(c) || c >= 0x80;
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace detail

// Lowercased word runs; a '.' between two digits stays inside the run so
// "0.06" is one token. Every other non-space character is its own token.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (!detail::is_word_byte(c)) {
      out.emplace_back(1, text[i]);
      ++i;
      continue;
    }
    std::string word;
    while (i < n) {
      unsigned char d = static_cast<unsigned char>(text[i]);
      if (detail::is_word_byte(d)) {
        word.push_back(d < 0x80 ? static_cast<char>(std::tolower(d)) : text[i]);
        ++i;
      } else if (text[i] == '.' && !word.empty() && detail::is_digit(word.back()) &&
                 i + 1 < n && detail::is_digit(text[i + 1])) {
        word.push_back('.');
        ++i;
      } else {
        break;
      }
    }
    out.push_back(std::move(word));
  }
  return out;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

struct Report {
  std::string id;
  std::string findings_text;
  std::optional<std::string> impression_text;
  Tokens findings_tokens;
  Tokens impression_tokens;

  static Report from_text(std::string id, std::string findings,
                          std::optional<std::string> impression) {
    Report r;
    r.id = std::move(id);
    r.findings_tokens = tokenize(findings);
    r.findings_text = std::move(findings);
    if (impression) r.impression_tokens = tokenize(*impression);
    r.impression_text = std::move(impression);
    return r;
  }

  bool operator==(const Report&) const = default;
};

// Truncation caps applied before training or decoding.
struct LengthCaps {
  std::size_t findings = 400;
  std::size_t impression = 100;
};

inline Report truncate(Report r, const LengthCaps& caps) {
  if (r.findings_tokens.size() > caps.findings) r.findings_tokens.resize(caps.findings);
  if (r.impression_tokens.size() > caps.impression)
    r.impression_tokens.resize(caps.impression);
  return r;
}

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kNoConcept = 4;
  static constexpr std::size_t kNumReserved = 5;

  static const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> kTokens = {"<pad>", "<unk>", "<s>", "</s>",
                                                     "<no_concept>"};
    return kTokens;
  }

  Vocabulary() {
    for (const auto& t : reserved_tokens()) push(t);
  }

  // Builds from an explicit token list (reserved tokens are prepended).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) {
      if (v.contains(t)) throw FormatError("duplicate vocabulary token: " + t);
      v.push(t);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& t) const { return index_.contains(t); }

  std::size_t id_of(const std::string& t) const {
    auto it = index_.find(t);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token_of(std::size_t id) const {
    ONTOPG_REQUIRE(id < tokens_.size(), "vocabulary id " + std::to_string(id) +
                                            " out of range " +
                                            std::to_string(tokens_.size()));
    return tokens_[id];
  }

  std::vector<std::size_t> encode(const Tokens& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_of(t));
    return ids;
  }

  // Non-reserved tokens in id order.
  std::vector<std::string> corpus_tokens() const {
    return {tokens_.begin() + kNumReserved, tokens_.end()};
  }

 private:
  void push(const std::string& t) {
    index_.emplace(t, tokens_.size());
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Counts findings and impression tokens; keeps those seen at least
// min_frequency times, most frequent first, ties lexicographic.
inline Vocabulary build_vocabulary(const std::vector<Report>& reports,
                                   std::size_t min_frequency = 2,
                                   std::size_t max_size = 50000) {
  ONTOPG_REQUIRE(!reports.empty(), "build_vocabulary: empty corpus");
  if (max_size < Vocabulary::kNumReserved)
    throw ConfigError("build_vocabulary: max_size " + std::to_string(max_size) +
                      " below reserved count " +
                      std::to_string(Vocabulary::kNumReserved));
  std::map<std::string, std::size_t> counts;
  for (const auto& r : reports) {
    for (const auto& t : r.findings_tokens) ++counts[t];
    for (const auto& t : r.impression_tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_frequency) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> keep;
  for (auto& [tok, _] : ranked) {
    if (keep.size() + Vocabulary::kNumReserved >= max_size) break;
    keep.push_back(tok);
  }
  return Vocabulary::from_tokens(keep);
}

struct EmbeddingTable {
  std::size_t dimension = 100;
  std::vector<double> vectors;  // vocab_size x dimension, row-major
  bool trainable = true;
  double coverage = 0.0;        // fraction of vocabulary found in the file

  std::size_t rows() const { return dimension ? vectors.size() / dimension : 0; }
  std::span<const double> row(std::size_t id) const {
    return std::span<const double>(vectors).subspan(id * dimension, dimension);
  }
};

inline EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dimension,
                                        std::uint64_t seed = 17) {
  EmbeddingTable t;
  t.dimension = dimension;
  t.vectors.resize(vocab.size() * dimension);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (double& v : t.vectors) v = dist(rng);
  return t;
}

// Plain-text word vectors: "token v1 ... vD" per line. Tokens missing from
// the file keep a fixed-seed uniform init in [-0.1, 0.1].
inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                                      std::optional<std::size_t> dimension = std::nullopt,
                                      std::uint64_t seed = 17) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file: " + path);
  struct Row {
    std::string token;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> dim = dimension;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    Row r;
    if (!(ss >> r.token)) continue;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        r.values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) +
                          ": not a number: " + field);
      }
    }
    if (!dim) dim = r.values.size();
    if (r.values.size() != *dim || *dim == 0)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(*dim) + " values, got " +
                        std::to_string(r.values.size()));
    rows.push_back(std::move(r));
  }
  if (!dim) throw FormatError(path + ": no embedding rows");
  EmbeddingTable t = random_embeddings(vocab, *dim, seed);
  std::vector<char> found(vocab.size(), 0);
  for (const auto& r : rows) {
    if (!vocab.contains(r.token)) continue;
    std::size_t id = vocab.id_of(r.token);
    std::copy(r.values.begin(), r.values.end(), t.vectors.begin() + id * *dim);
    found[id] = 1;
  }
  t.coverage = static_cast<double>(std::count(found.begin(), found.end(), 1)) /
               static_cast<double>(vocab.size());
  return t;
}

// ---- dataset I/O ----------------------------------------------------------

inline Report report_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j.contains("findings"))
    throw FormatError("record needs string fields id and findings");
  std::optional<std::string> impression;
  if (j.contains("impression") && !j["impression"].is_null())
    impression = j["impression"].get<std::string>();
  return Report::from_text(j["id"].get<std::string>(), j["findings"].get<std::string>(),
                           std::move(impression));
}

inline nlohmann::json report_to_json(const Report& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["findings"] = r.findings_text;
  if (r.impression_text) j["impression"] = *r.impression_text;
  return j;
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Report> read_dataset(const std::string& path) {
  std::vector<Report> out;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path)) {
    ++lineno;
    try {
      out.push_back(report_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": record " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path + ": record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_dataset(const std::string& path, const std::vector<Report>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : reports) out << report_to_json(r).dump() << '\n';
}

}  // namespace ontopg
