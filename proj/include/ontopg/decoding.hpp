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

// Beam search over any step scorer, plus the adapter that drives the
// pointer-generator. A scorer exposes
//   State initial();
//   StepOutput<State> step(const State&, std::size_t prev_token);
// where step returns log-probabilities over the (extended) vocabulary for
// the token following prev_token and the state after consuming it.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ontopg/corpus.hpp"
#include "ontopg/errors.hpp"
#include "ontopg/model.hpp"

namespace ontopg {

template <typename State>
struct StepOutput {
  State next;
  std::vector<double> log_probs;
  std::vector<double> attention;
  std::vector<double> onto_attention;
};

template <typename S>
concept StepScorer = requires(S s, const typename S::State& st, std::size_t tok) {
  { s.initial() } -> std::convertible_to<typename S::State>;
  { s.step(st, tok) } -> std::convertible_to<StepOutput<typename S::State>>;
};

struct Hypothesis {
  std::vector<std::size_t> tokens;  // extended ids, EOS included when emitted
  double log_prob = 0.0;
  std::vector<std::vector<double>> attention;       // one row per emitted token
  std::vector<std::vector<double>> onto_attention;  // empty rows without ontology
  bool finished = false;

  std::size_t length() const { return tokens.size(); }
};

struct BeamOptions {
  std::size_t beam = 5;
  std::size_t max_len = 100;
  bool length_normalize = true;
  bool block_trigrams = false;
  std::size_t eos = Vocabulary::kEos;
  std::size_t bos = Vocabulary::kBos;
};

inline double final_score(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize) return h.log_prob;
  return h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.length()));
}

namespace detail {

inline bool repeats_trigram(const std::vector<std::size_t>& tokens, std::size_t next) {
  const std::size_t n = tokens.size();
  if (n < 2) return false;
  std::size_t a = tokens[n - 2], b = tokens[n - 1];
  for (std::size_t i = 0; i + 2 < n; ++i)
    if (tokens[i] == a && tokens[i + 1] == b && tokens[i + 2] == next) return true;
  return false;
}

}  // namespace detail

// Called after each expansion with the hypotheses retained at that step
// (finished and live together, best first).
using BeamTrace = std::function<void(std::size_t, const std::vector<Hypothesis>&)>;

template <StepScorer S>
std::vector<Hypothesis> beam_search(S& scorer, const BeamOptions& opt,
                                    const BeamTrace& trace = nullptr) {
  ONTOPG_REQUIRE(opt.beam >= 1, "beam_search: beam must be >= 1");
  ONTOPG_REQUIRE(opt.max_len >= 1, "beam_search: max_len must be >= 1");
  using State = typename S::State;
  struct Live {
    Hypothesis hyp;
    State state;
    std::size_t last;
  };
  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double log_prob;
  };

  std::vector<Live> live;
  live.push_back({Hypothesis{}, scorer.initial(), opt.bos});
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < opt.max_len && !live.empty(); ++step) {
    std::vector<StepOutput<State>> outs;
    outs.reserve(live.size());
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      outs.push_back(scorer.step(live[i].state, live[i].last));
      const auto& lp = outs.back().log_probs;
      for (std::size_t w = 0; w < lp.size(); ++w) {
        if (!std::isfinite(lp[w])) continue;
        if (opt.block_trigrams && detail::repeats_trigram(live[i].hyp.tokens, w)) continue;
        cands.push_back({i, w, live[i].hyp.log_prob + lp[w]});
      }
    }
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& ta = live[a.parent].hyp.tokens;
      const auto& tb = live[b.parent].hyp.tokens;
      if (ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
      return a.token < b.token;
    };
    std::size_t keep = std::min(opt.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      better);
    cands.resize(keep);

    std::vector<Live> next;
    std::vector<Hypothesis> retained;
    for (const Candidate& c : cands) {
      Live nl{live[c.parent].hyp, outs[c.parent].next, c.token};
      nl.hyp.tokens.push_back(c.token);
      nl.hyp.log_prob = c.log_prob;
      nl.hyp.attention.push_back(outs[c.parent].attention);
      nl.hyp.onto_attention.push_back(outs[c.parent].onto_attention);
      nl.hyp.finished = c.token == opt.eos || nl.hyp.length() >= opt.max_len;
      if (trace) retained.push_back(nl.hyp);
      if (nl.hyp.finished)
        finished.push_back(std::move(nl.hyp));
      else
        next.push_back(std::move(nl));
    }
    if (trace) trace(step, retained);
    live = std::move(next);
    if (finished.size() >= opt.beam) break;
  }
  // Anything still live here was cut by the loop bound, i.e. hit the cap.
  for (auto& l : live) {
    l.hyp.finished = true;
    finished.push_back(std::move(l.hyp));
  }
  std::stable_sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    double sa = final_score(a, opt.length_normalize), sb = final_score(b, opt.length_normalize);
    if (sa != sb) return sa > sb;
    return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                        b.tokens.end());
  });
  if (finished.size() > opt.beam) finished.resize(opt.beam);
  return finished;
}

// Stepwise argmax, lowest id on ties.
template <StepScorer S>
Hypothesis greedy_decode(S& scorer, std::size_t max_len, std::size_t eos = Vocabulary::kEos,
                         std::size_t bos = Vocabulary::kBos) {
  Hypothesis h;
  auto state = scorer.initial();
  std::size_t last = bos;
  while (h.length() < max_len) {
    auto out = scorer.step(state, last);
    std::size_t best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < out.log_probs.size(); ++w) {
      if (out.log_probs[w] > best_lp) {
        best_lp = out.log_probs[w];
        best = w;
      }
    }
    h.tokens.push_back(best);
    h.log_prob += best_lp;
    h.attention.push_back(out.attention);
    h.onto_attention.push_back(out.onto_attention);
    state = std::move(out.next);
    last = best;
    if (best == eos) break;
  }
  h.finished = true;
  return h;
}

// Drives a model over one example. The graph holds every step taken by
// every hypothesis, so one scorer serves one decode.
template <typename T>
class ModelScorer {
 public:
  using State = typename Model<T>::DecoderState;

  ModelScorer(Model<T>& model, const Example& ex) : model_(&model) {
    ctx_ = model.start(graph_, ex);
  }

  State initial() { return ctx_.init; }

  StepOutput<State> step(const State& state, std::size_t prev_token) {
    auto st = model_->decoder_step(graph_, ctx_, state, prev_token);
    StepOutput<State> out{st.state, {}, {}, {}};
    auto dist = graph_.value(st.dist);
    out.log_probs.resize(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i)
      out.log_probs[i] = std::log(static_cast<double>(dist[i]));
    auto a = graph_.value(st.attn);
    out.attention.assign(a.begin(), a.end());
    if (model_->config().use_ontology) {
      auto b = graph_.value(st.onto_attn);
      out.onto_attention.assign(b.begin(), b.end());
    }
    return out;
  }

 private:
  Model<T>* model_;
  ad::Graph<T> graph_;
  typename Model<T>::Context ctx_;
};

template <typename T>
std::vector<Hypothesis> beam_search(Model<T>& model, const Example& ex, const BeamOptions& opt) {
  ONTOPG_REQUIRE(!ex.source_ids.empty(), "beam_search: empty source");
  ModelScorer<T> scorer(model, ex);
  return beam_search(scorer, opt);
}

// Space-joined tokens; copied OOV ids render their source form and
// EOS/PAD/BOS are dropped.
inline std::string detokenize(const std::vector<std::size_t>& ids, const ExtendedVocabulary& ext) {
  Tokens out;
  for (std::size_t id : ids) {
    ONTOPG_REQUIRE(id < ext.size(), "detokenize: id " + std::to_string(id) + " out of range " +
                                        std::to_string(ext.size()));
    if (id == Vocabulary::kEos || id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    out.push_back(ext.token_of(id));
  }
  return join(out);
}

}  // namespace ontopg
