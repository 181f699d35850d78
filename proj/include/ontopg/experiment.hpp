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

// End-to-end experiment plumbing shared by the command-line tool and the
// acceptance checks: corpus splits, example preparation, batch decoding and
// scoring.

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ontopg/config.hpp"
#include "ontopg/decoding.hpp"
#include "ontopg/evaluation.hpp"
#include "ontopg/pipeline.hpp"
#include "ontopg/synthetic.hpp"
#include "ontopg/training.hpp"

namespace ontopg {

struct Splits {
  std::vector<Report> train, dev, test;
};

// One synthetic corpus cut into consecutive train/dev/test blocks.
inline Splits synthetic_splits(std::uint64_t seed, std::size_t n_train, std::size_t n_dev,
                               std::size_t n_test, const Ontology& onto) {
  auto all = generate_synthetic_corpus(seed, n_train + n_dev + n_test, onto);
  Splits s;
  s.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
               all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  s.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), all.end());
  return s;
}

// Examples keep a pointer to the vocabulary, so it lives on the heap.
struct PreparedData {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<Example> train, dev, test;
};

inline std::vector<Example> prepare_split(const std::vector<Report>& reports,
                                          const Vocabulary& vocab, const Ontology* onto,
                                          const ExperimentConfig& cfg) {
  if (!cfg.model.use_ontology || onto == nullptr) return prepare_examples(reports, vocab, nullptr, cfg.caps);
  OntologyLinker linker(*onto, cfg.matcher);
  return prepare_examples(reports, vocab, &linker, cfg.caps);
}

inline PreparedData prepare_data(const Splits& s, const Ontology* onto,
                                 const ExperimentConfig& cfg) {
  PreparedData d;
  std::vector<Report> truncated;
  for (const auto& r : s.train) truncated.push_back(truncate(r, cfg.caps));
  d.vocab = std::make_shared<const Vocabulary>(
      build_vocabulary(truncated, cfg.min_frequency, cfg.max_vocab));
  d.train = prepare_split(s.train, *d.vocab, onto, cfg);
  d.dev = prepare_split(s.dev, *d.vocab, onto, cfg);
  d.test = prepare_split(s.test, *d.vocab, onto, cfg);
  return d;
}

inline BeamOptions beam_options(const DecodeConfig& d) {
  BeamOptions o;
  o.beam = d.beam;
  o.max_len = d.max_len;
  o.length_normalize = d.length_normalize;
  o.block_trigrams = d.block_trigrams;
  return o;
}

struct Summary {
  std::string id;
  Tokens tokens;
  Hypothesis best;
};

template <typename T>
std::vector<Summary> summarize_all(Model<T>& model, const std::vector<Example>& examples,
                                   const DecodeConfig& decode) {
  std::vector<Summary> out;
  out.reserve(examples.size());
  auto opt = beam_options(decode);
  for (const auto& ex : examples) {
    auto hyps = beam_search(model, ex, opt);
    out.push_back({ex.id, tokenize(detokenize(hyps.front().tokens, ex.ext)), hyps.front()});
  }
  return out;
}

// Scores summaries against the impressions of the reports they came from.
inline CorpusRouge score_summaries(const std::vector<Summary>& summaries,
                                   const std::vector<Report>& reports) {
  std::map<std::string, const Report*> by_id;
  for (const auto& r : reports) by_id[r.id] = &r;
  std::vector<std::pair<std::string, Tokens>> sys, ref;
  for (const auto& s : summaries) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw AlignmentError("summary id " + s.id + " has no report");
    sys.emplace_back(s.id, s.tokens);
    ref.emplace_back(s.id, it->second->impression_tokens);
  }
  return corpus_rouge(align_by_id(sys, ref));
}

template <typename T>
struct ExperimentResult {
  TrainResult train;
  std::vector<Summary> summaries;
  CorpusRouge test;
  double train_seconds = 0;
};

// Trains from cfg.train.seed and decodes the test split with the best
// checkpoint's parameters.
template <typename T>
ExperimentResult<T> run_experiment(const ExperimentConfig& cfg, const Splits& splits,
                                   const PreparedData& data, const std::string& out_dir,
                                   const EpochCallback& on_record = nullptr) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = data.vocab->size();
  Model<T> model(mc, *data.vocab);
  ExperimentResult<T> r;
  auto t0 = std::chrono::steady_clock::now();
  r.train = train(model, data.train, data.dev, cfg.train, out_dir, cfg.to_key_values(), on_record);
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.summaries = summarize_all(model, data.test, cfg.decode);
  r.test = score_summaries(r.summaries, splits.test);
  return r;
}

}  // namespace ontopg
