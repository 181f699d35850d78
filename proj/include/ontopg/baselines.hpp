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

// Extractive baselines: LexRank (graph centrality over TF-IDF cosine
// similarities) and LSA (sentence salience from an SVD of the term-sentence
// matrix). Both return selected sentence indices in document order.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "ontopg/corpus.hpp"
#include "ontopg/errors.hpp"

namespace ontopg {

using Sentences = std::vector<Tokens>;

// Splits after ".", "!" or "?" tokens. Decimal numbers are single tokens,
// so "0.06" never ends a sentence.
inline Sentences split_sentences(const Tokens& tokens) {
  Sentences out;
  Tokens cur;
  for (const auto& t : tokens) {
    cur.push_back(t);
    if (t == "." || t == "!" || t == "?") {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline Sentences split_sentences(std::string_view text) { return split_sentences(tokenize(text)); }

namespace detail {

// Top-k indices by score (ties to the earlier index), returned ascending.
// Scores equal to ten significant digits relative to the maximum count as
// ties so rounding noise cannot reorder identical sentences.
inline std::vector<std::size_t> select_top(const std::vector<double>& scores, std::size_t k) {
  double mx = 0;
  for (double s : scores) mx = std::max(mx, std::fabs(s));
  std::vector<double> q(scores.size(), 0.0);
  if (mx > 0)
    for (std::size_t i = 0; i < scores.size(); ++i) q[i] = std::round(scores[i] / mx * 1e10);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

struct LexRankOptions {
  double threshold = 0.1;
  double damping = 0.85;
  double tolerance = 1e-8;
  std::size_t max_iterations = 10000;
};

struct LexRankResult {
  std::vector<double> scores;               // stationary distribution
  std::vector<std::vector<double>> matrix;  // damped transition matrix M, M v = v
  std::vector<std::size_t> selected;
  double residual = 0.0;                    // max |M v - v|
};

// TF-IDF with idf = 1 + ln(N / df) over the sentences themselves.
inline std::vector<std::vector<double>> tfidf_cosine(const Sentences& sentences) {
  const std::size_t n = sentences.size();
  std::map<std::string, double> df;
  std::vector<std::map<std::string, double>> tf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& t : sentences[i]) tf[i][t] += 1.0;
    for (const auto& [t, _] : tf[i]) df[t] += 1.0;
  }
  std::vector<std::map<std::string, double>> vec(n);
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [t, c] : tf[i]) {
      double w = c * (1.0 + std::log(static_cast<double>(n) / df[t]));
      vec[i][t] = w;
      norm[i] += w * w;
    }
    norm[i] = std::sqrt(norm[i]);
  }
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (norm[i] == 0 || norm[j] == 0) continue;
      double dot = 0;
      for (const auto& [t, w] : vec[i])
        if (auto it = vec[j].find(t); it != vec[j].end()) dot += w * it->second;
      sim[i][j] = dot / (norm[i] * norm[j]);
    }
  }
  return sim;
}

inline LexRankResult lexrank(const Sentences& sentences, std::size_t top_k,
                             const LexRankOptions& opt = {}) {
  ONTOPG_REQUIRE(top_k >= 1, "lexrank: top_k must be >= 1");
  LexRankResult r;
  const std::size_t n = sentences.size();
  if (n == 0) return r;
  auto sim = tfidf_cosine(sentences);
  // Row-normalised thresholded adjacency (self-loops included), damped.
  std::vector<std::vector<double>> adj(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) {
      adj[i][j] = (sim[i][j] >= opt.threshold || i == j) ? 1.0 : 0.0;
      deg += adj[i][j];
    }
    for (double& a : adj[i]) a /= deg;
  }
  r.matrix.assign(n, std::vector<double>(n, 0.0));
  const double teleport = (1.0 - opt.damping) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r.matrix[i][j] = opt.damping * adj[j][i] + teleport;

  std::vector<double> v(n, 1.0 / static_cast<double>(n)), next(n);
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += r.matrix[i][j] * x[j];
      y[i] = s;
    }
  };
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    apply(v, next);
    double total = std::accumulate(next.begin(), next.end(), 0.0);
    for (double& x : next) x /= total;
    double delta = 0;
    for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, std::fabs(next[i] - v[i]));
    v.swap(next);
    if (delta < opt.tolerance * 1e-2) break;
  }
  apply(v, next);
  for (std::size_t i = 0; i < n; ++i) r.residual = std::max(r.residual, std::fabs(next[i] - v[i]));
  r.scores = v;
  r.selected = detail::select_top(v, top_k);
  return r;
}

struct Svd {
  std::vector<double> singular_values;        // descending
  std::vector<std::vector<double>> right;     // right[j][k]: row j of V, column k
};

// One-sided Jacobi on the columns of a (rows x cols, row-major).
inline Svd jacobi_svd(std::vector<std::vector<double>> a, std::size_t max_sweeps = 100) {
  const std::size_t m = a.size();
  const std::size_t n = m ? a[0].size() : 0;
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += a[i][p] * a[i][p];
          beta += a[i][q] * a[i][q];
          gamma += a[i][p] * a[i][q];
        }
        if (gamma == 0 || std::fabs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        off = std::max(off, std::fabs(gamma) / std::sqrt(alpha * beta));
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = (zeta >= 0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          double ap = a[i][p], aq = a[i][q];
          a[i][p] = c * ap - s * aq;
          a[i][q] = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double vp = v[i][p], vq = v[i][q];
          v[i][p] = c * vp - s * vq;
          v[i][q] = s * vp + c * vq;
        }
      }
    }
    if (off < 1e-14) break;
  }
  std::vector<double> sigma(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < m; ++i) s += a[i][k] * a[i][k];
    sigma[k] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });
  Svd out;
  out.right.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    out.singular_values.push_back(sigma[order[k]]);
    for (std::size_t j = 0; j < n; ++j) out.right[j][k] = v[j][order[k]];
  }
  return out;
}

struct LsaResult {
  std::vector<double> scores;
  std::vector<std::size_t> selected;
  std::size_t components = 0;
};

// Term x sentence frequency matrix in first-occurrence term order.
inline std::vector<std::vector<double>> term_sentence_matrix(const Sentences& sentences) {
  std::map<std::string, std::size_t> row_of;
  std::vector<std::string> terms;
  for (const auto& s : sentences)
    for (const auto& t : s)
      if (row_of.emplace(t, terms.size()).second) terms.push_back(t);
  std::vector<std::vector<double>> a(terms.size(), std::vector<double>(sentences.size(), 0.0));
  for (std::size_t j = 0; j < sentences.size(); ++j)
    for (const auto& t : sentences[j]) a[row_of[t]][j] += 1.0;
  return a;
}

inline LsaResult lsa_summarize(const Sentences& sentences, std::size_t top_k) {
  ONTOPG_REQUIRE(top_k >= 1, "lsa_summarize: top_k must be >= 1");
  LsaResult r;
  const std::size_t n = sentences.size();
  if (n == 0) return r;
  auto a = term_sentence_matrix(sentences);
  if (a.empty()) {
    r.scores.assign(n, 0.0);
    r.selected = detail::select_top(r.scores, top_k);
    return r;
  }
  Svd svd = jacobi_svd(a);
  const double tol = svd.singular_values.empty()
                         ? 0.0
                         : svd.singular_values[0] * 1e-10 * static_cast<double>(std::max(a.size(), n));
  std::size_t rank = 0;
  for (double s : svd.singular_values)
    if (s > tol) ++rank;
  r.components = std::min(top_k, rank);
  r.scores.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t k = 0; k < r.components; ++k) {
      double x = svd.singular_values[k] * svd.right[j][k];
      s += x * x;
    }
    r.scores[j] = std::sqrt(s);
  }
  r.selected = detail::select_top(r.scores, top_k);
  return r;
}

inline Tokens join_selected(const Sentences& sentences, const std::vector<std::size_t>& picked) {
  Tokens out;
  for (std::size_t i : picked) out.insert(out.end(), sentences[i].begin(), sentences[i].end());
  return out;
}

}  // namespace ontopg
