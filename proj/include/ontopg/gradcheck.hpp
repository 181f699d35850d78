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

// Central finite-difference check of every model parameter on a tiny
// configuration. Shared by the test suite and the `gradcheck` command.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ontopg/model.hpp"

namespace ontopg {

struct TinySetup {
  Vocabulary vocab;
  ModelConfig config;
  std::vector<Example> examples;
};

// Vocabulary of 20 ids (5 reserved + w0..w14); sources may contain the
// out-of-vocabulary tokens x0..x2 so the copy path is exercised.
inline TinySetup tiny_setup(std::uint64_t seed, std::size_t n_examples = 1,
                            bool use_ontology = true, double init_range = 0.3) {
  std::vector<std::string> words;
  for (int i = 0; i < 15; ++i) words.push_back("w" + std::to_string(i));
  TinySetup s{Vocabulary::from_tokens(words), {}, {}};
  s.config.vocab_size = s.vocab.size();
  s.config.embed_dim = 8;
  s.config.enc_hidden = 8;
  s.config.enc_layers = 2;
  s.config.dec_hidden = 16;
  s.config.use_ontology = use_ontology;
  s.config.dropout = 0.0;
  s.config.init_range = init_range;
  s.config.init_seed = seed;

  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto token = [&]() -> std::string {
    std::size_t k = uniform(0, 17);
    return k < 15 ? words[k] : "x" + std::to_string(k - 15);
  };
  for (std::size_t e = 0; e < n_examples; ++e) {
    Report r;
    r.id = "tiny-" + std::to_string(e);
    std::size_t n = uniform(1, 6);
    for (std::size_t i = 0; i < n; ++i) r.findings_tokens.push_back(token());
    std::size_t m = uniform(1, 4);
    for (std::size_t i = 0; i < m; ++i) r.impression_tokens.push_back(token());
    r.impression_text = join(r.impression_tokens);
    r.findings_text = join(r.findings_tokens);
    OntologySequence u;
    std::size_t k = uniform(0, std::min<std::size_t>(4, n));
    std::size_t start = uniform(0, n - k);
    for (std::size_t i = 0; i < k; ++i) u.tokens.push_back(r.findings_tokens[start + i]);
    if (u.tokens.empty()) u.tokens.push_back(kNoConceptToken);
    s.examples.push_back(make_example(r, u, s.vocab));
  }
  return s;
}

struct ParameterCheck {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0;
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// |a - n| / max(|a|, |n|, floor) per element.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// The analytic gradient comes from the double-precision model. The
// difference quotient is evaluated on a long double copy so that its
// rounding error (about eps * loss / h) stays well below the 1e-8 floor.
inline GradCheckReport check_gradients(Model<double>& model, const Example& ex,
                                       double h = 1e-5) {
  auto& params = model.params();
  params.zero_grad();
  {
    ad::Graph<double> g;
    g.backward(model.forward_teacher_forced(g, ex).loss);
  }
  using Wide = long double;
  Model<Wide> wide(model.config(), model.vocab(), params.template cast<Wide>());
  const Wide step = static_cast<Wide>(h);
  GradCheckReport report;
  for (auto& [name, p] : params) {
    ParameterCheck pc{name, p.value.size(), 0};
    auto& q = wide.params().at(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Wide saved = q.value[i];
      q.value[i] = saved + step;
      const Wide up = wide.loss(ex);
      q.value[i] = saved - step;
      const Wide down = wide.loss(ex);
      q.value[i] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * step));
      pc.max_rel_error = std::max(pc.max_rel_error, relative_error(p.grad[i], numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.parameters.push_back(pc);
  }
  return report;
}

}  // namespace ontopg
