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

// Flat "key = value" configuration files and the resolved experiment
// settings shared by the CLI and the end-to-end tests.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ontopg/errors.hpp"
#include "ontopg/model.hpp"
#include "ontopg/ontology.hpp"

namespace ontopg {

class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& origin = "<config>") {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse(in, path);
  }

  static KeyValues from_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  template <typename V>
  V get(const std::string& key, V fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return convert<V>(key, it->second);
  }

 private:
  template <typename V>
  static V convert(const std::string& key, const std::string& raw) {
    try {
      if constexpr (std::is_same_v<V, std::string>) {
        return raw;
      } else if constexpr (std::is_same_v<V, bool>) {
        if (raw == "true" || raw == "1" || raw == "yes") return true;
        if (raw == "false" || raw == "0" || raw == "no") return false;
        throw std::invalid_argument(raw);
      } else if constexpr (std::is_floating_point_v<V>) {
        std::size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return static_cast<V>(v);
      } else {
        std::size_t used = 0;
        long long v = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        if (std::is_unsigned_v<V> && v < 0) throw std::invalid_argument(raw);
        return static_cast<V>(v);
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("config key '" + key + "': cannot parse '" + raw + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("config key '" + key + "': value out of range '" + raw + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  double clip_norm = 2.0;
  std::uint64_t seed = 0;
  double dropout = 0.5;
  std::size_t patience = 3;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate: must be > 0");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout: must be in [0, 1)");
    if (patience < 1) throw ConfigError("patience: must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs: must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1: must be in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2: must be in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("epsilon: must be > 0");
  }
};

struct DecodeConfig {
  std::size_t beam = 5;
  std::size_t max_len = 100;
  bool length_normalize = true;
  bool block_trigrams = false;

  void validate() const {
    if (beam < 1) throw ConfigError("beam: must be >= 1");
    if (max_len < 1) throw ConfigError("max_len: must be >= 1");
  }
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  MatcherConfig matcher;
  LengthCaps caps;
  std::size_t min_frequency = 2;
  std::size_t max_vocab = 50000;
  std::string embeddings_path;
  std::size_t top_k = 3;

  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "embed_dim",
        "enc_hidden",
        "enc_layers",
        "dec_hidden",
        "use_ontology",
        "init_range",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "batch_size",
        "max_epochs",
        "clip_norm",
        "seed",
        "dropout",
        "patience",
        "beam",
        "max_len",
        "length_normalize",
        "block_trigrams",
        "matcher",
        "min_depth",
        "jaccard",
        "window",
        "max_findings",
        "max_impression",
        "min_frequency",
        "max_vocab",
        "embeddings",
        "top_k"};
    return keys;
  }

  static ExperimentConfig from(const KeyValues& kv) {
    for (const auto& [key, _] : kv.values())
      if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end())
        throw ConfigError("unknown config key '" + key + "'");
    ExperimentConfig c;
    c.model.embed_dim = kv.get("embed_dim", c.model.embed_dim);
    c.model.enc_hidden = kv.get("enc_hidden", c.model.enc_hidden);
    c.model.enc_layers = kv.get("enc_layers", c.model.enc_layers);
    c.model.dec_hidden = kv.get("dec_hidden", c.model.dec_hidden);
    c.model.use_ontology = kv.get("use_ontology", c.model.use_ontology);
    c.model.init_range = kv.get("init_range", c.model.init_range);
    c.train.learning_rate = kv.get("learning_rate", c.train.learning_rate);
    c.train.beta1 = kv.get("beta1", c.train.beta1);
    c.train.beta2 = kv.get("beta2", c.train.beta2);
    c.train.epsilon = kv.get("epsilon", c.train.epsilon);
    c.train.batch_size = kv.get("batch_size", c.train.batch_size);
    c.train.max_epochs = kv.get("max_epochs", c.train.max_epochs);
    c.train.clip_norm = kv.get("clip_norm", c.train.clip_norm);
    c.train.seed = kv.get("seed", c.train.seed);
    c.train.dropout = kv.get("dropout", c.train.dropout);
    c.train.patience = kv.get("patience", c.train.patience);
    c.model.dropout = c.train.dropout;
    c.model.init_seed = c.train.seed;
    c.decode.beam = kv.get("beam", c.decode.beam);
    c.decode.max_len = kv.get("max_len", c.decode.max_len);
    c.decode.length_normalize = kv.get("length_normalize", c.decode.length_normalize);
    c.decode.block_trigrams = kv.get("block_trigrams", c.decode.block_trigrams);
    std::string matcher = kv.get<std::string>("matcher", "exact");
    if (matcher == "exact") {
      c.matcher.kind = MatcherKind::kExact;
    } else if (matcher == "fuzzy") {
      c.matcher.kind = MatcherKind::kFuzzy;
    } else {
      throw ConfigError("matcher: must be exact or fuzzy, got '" + matcher + "'");
    }
    c.matcher.min_depth = kv.get("min_depth", c.matcher.min_depth);
    c.matcher.jaccard_threshold = kv.get("jaccard", c.matcher.jaccard_threshold);
    c.matcher.window = kv.get("window", c.matcher.window);
    c.caps.findings = kv.get("max_findings", c.caps.findings);
    c.caps.impression = kv.get("max_impression", c.caps.impression);
    c.min_frequency = kv.get("min_frequency", c.min_frequency);
    c.max_vocab = kv.get("max_vocab", c.max_vocab);
    c.embeddings_path = kv.get<std::string>("embeddings", "");
    c.top_k = kv.get("top_k", c.top_k);
    c.validate();
    return c;
  }

  void validate() const {
    train.validate();
    decode.validate();
    if (model.embed_dim < 1) throw ConfigError("embed_dim: must be >= 1");
    if (model.enc_hidden < 1) throw ConfigError("enc_hidden: must be >= 1");
    if (model.enc_layers < 1) throw ConfigError("enc_layers: must be >= 1");
    if (model.dec_hidden < 1) throw ConfigError("dec_hidden: must be >= 1");
    if (matcher.min_depth < 1) throw ConfigError("min_depth: must be >= 1");
    if (!(matcher.jaccard_threshold > 0 && matcher.jaccard_threshold <= 1))
      throw ConfigError("jaccard: must be in (0, 1]");
    if (matcher.window < 1) throw ConfigError("window: must be >= 1");
    if (caps.findings < 1) throw ConfigError("max_findings: must be >= 1");
    if (caps.impression < 1) throw ConfigError("max_impression: must be >= 1");
    if (top_k < 1) throw ConfigError("top_k: must be >= 1");
    if (max_vocab < Vocabulary::kNumReserved)
      throw ConfigError("max_vocab: must be >= " + std::to_string(Vocabulary::kNumReserved));
  }

  // Round-trips through from().
  KeyValues to_key_values() const {
    KeyValues kv;
    // Shortest text that parses back to the same value.
    auto num = [](auto v) {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), v);
      return std::string(buf, res.ptr);
    };
    kv.set("embed_dim", num(model.embed_dim));
    kv.set("enc_hidden", num(model.enc_hidden));
    kv.set("enc_layers", num(model.enc_layers));
    kv.set("dec_hidden", num(model.dec_hidden));
    kv.set("use_ontology", model.use_ontology ? "true" : "false");
    kv.set("init_range", num(model.init_range));
    kv.set("learning_rate", num(train.learning_rate));
    kv.set("beta1", num(train.beta1));
    kv.set("beta2", num(train.beta2));
    kv.set("epsilon", num(train.epsilon));
    kv.set("batch_size", num(train.batch_size));
    kv.set("max_epochs", num(train.max_epochs));
    kv.set("clip_norm", num(train.clip_norm));
    kv.set("seed", num(train.seed));
    kv.set("dropout", num(train.dropout));
    kv.set("patience", num(train.patience));
    kv.set("beam", num(decode.beam));
    kv.set("max_len", num(decode.max_len));
    kv.set("length_normalize", decode.length_normalize ? "true" : "false");
    kv.set("block_trigrams", decode.block_trigrams ? "true" : "false");
    kv.set("matcher", matcher.kind == MatcherKind::kExact ? "exact" : "fuzzy");
    kv.set("min_depth", num(matcher.min_depth));
    kv.set("jaccard", num(matcher.jaccard_threshold));
    kv.set("window", num(matcher.window));
    kv.set("max_findings", num(caps.findings));
    kv.set("max_impression", num(caps.impression));
    kv.set("min_frequency", num(min_frequency));
    kv.set("max_vocab", num(max_vocab));
    if (!embeddings_path.empty()) kv.set("embeddings", embeddings_path);
    kv.set("top_k", num(top_k));
    return kv;
  }
};

}  // namespace ontopg
