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

// ROUGE-1/2/L, corpus averaging, the paired t-test and attention traces.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ontopg/corpus.hpp"
#include "ontopg/errors.hpp"
#include "ontopg/ontology.hpp"

namespace ontopg {

struct RougeComponent {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static RougeComponent from_counts(double overlap, double candidate_total,
                                    double reference_total) {
    RougeComponent r;
    r.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
    r.recall = reference_total > 0 ? overlap / reference_total : 0.0;
    double s = r.precision + r.recall;
    r.f1 = s > 0 ? 2.0 * r.precision * r.recall / s : 0.0;
    return r;
  }
};

struct RougeScore {
  RougeComponent rouge1;
  RougeComponent rouge2;
  RougeComponent rougeL;
};

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& t,
                                                                    std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i)
    ++out[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
  return out;
}

}  // namespace detail

// Clipped n-gram overlap.
inline RougeComponent rouge_n(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  ONTOPG_REQUIRE(n >= 1, "rouge_n: n must be >= 1");
  auto cand = detail::ngram_counts(candidate, n);
  auto ref = detail::ngram_counts(reference, n);
  double overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [g, c] : cand) {
    cand_total += c;
    if (auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [_, c] : ref) ref_total += c;
  return RougeComponent::from_counts(overlap, cand_total, ref_total);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Summary-level LCS over the whole token sequences.
inline RougeComponent rouge_l(const Tokens& candidate, const Tokens& reference) {
  double lcs = static_cast<double>(lcs_length(candidate, reference));
  return RougeComponent::from_counts(lcs, static_cast<double>(candidate.size()),
                                     static_cast<double>(reference.size()));
}

inline RougeScore rouge(const Tokens& candidate, const Tokens& reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2),
          rouge_l(candidate, reference)};
}

struct ScoredPair {
  std::string id;
  Tokens candidate;
  Tokens reference;
};

struct CorpusRouge {
  RougeScore mean;  // scaled x100
  std::vector<RougeScore> per_report;  // unscaled, in input order
  std::vector<std::string> ids;
};

// Pairs system outputs with references by id; every id must appear on both
// sides exactly once.
inline std::vector<ScoredPair> align_by_id(
    const std::vector<std::pair<std::string, Tokens>>& system,
    const std::vector<std::pair<std::string, Tokens>>& reference) {
  if (system.size() != reference.size())
    throw AlignmentError("system has " + std::to_string(system.size()) +
                         " records, reference has " + std::to_string(reference.size()));
  std::map<std::string, const Tokens*> ref;
  for (const auto& [id, t] : reference)
    if (!ref.emplace(id, &t).second) throw AlignmentError("duplicate reference id " + id);
  std::vector<ScoredPair> out;
  std::map<std::string, bool> seen;
  for (const auto& [id, t] : system) {
    auto it = ref.find(id);
    if (it == ref.end()) throw AlignmentError("system id " + id + " missing from reference");
    if (seen[id]) throw AlignmentError("duplicate system id " + id);
    seen[id] = true;
    out.push_back({id, t, *it->second});
  }
  return out;
}

// Unweighted mean of per-report P/R/F1, scaled by 100.
inline CorpusRouge corpus_rouge(const std::vector<ScoredPair>& pairs) {
  CorpusRouge c;
  auto acc = [](RougeComponent& sum, const RougeComponent& x) {
    sum.precision += x.precision;
    sum.recall += x.recall;
    sum.f1 += x.f1;
  };
  for (const auto& p : pairs) {
    RougeScore s = rouge(p.candidate, p.reference);
    acc(c.mean.rouge1, s.rouge1);
    acc(c.mean.rouge2, s.rouge2);
    acc(c.mean.rougeL, s.rougeL);
    c.per_report.push_back(s);
    c.ids.push_back(p.id);
  }
  if (!pairs.empty()) {
    double k = 100.0 / static_cast<double>(pairs.size());
    for (RougeComponent* r : {&c.mean.rouge1, &c.mean.rouge2, &c.mean.rougeL}) {
      r->precision *= k;
      r->recall *= k;
      r->f1 *= k;
    }
  }
  return c;
}

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
};

// Paired two-sided t-test on a - b.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  ONTOPG_REQUIRE(a.size() == b.size(), "paired_t_test: lengths " + std::to_string(a.size()) +
                                           " and " + std::to_string(b.size()));
  ONTOPG_REQUIRE(a.size() >= 2, "paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double x : d) ss += (x - mean) * (x - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.df = n - 1;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p_value = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))),
                         0.0, 1.0);
  return r;
}

struct AttentionTrace {
  Tokens tokens;
  std::vector<double> mean_weight;  // per source token
  std::vector<bool> matched;        // inside an exact-matcher span
  std::size_t steps = 0;
};

// Averages per-step source attention rows; each row must be a distribution.
inline AttentionTrace attention_trace(const Tokens& source,
                                      const std::vector<std::vector<double>>& rows,
                                      const std::vector<ConceptMatch>& matches) {
  AttentionTrace tr;
  tr.tokens = source;
  tr.mean_weight.assign(source.size(), 0.0);
  tr.matched.assign(source.size(), false);
  for (const auto& row : rows) {
    ONTOPG_REQUIRE(row.size() == source.size(),
                   "attention row of length " + std::to_string(row.size()) + " for " +
                       std::to_string(source.size()) + " source tokens");
    double s = 0;
    for (double w : row) {
      ONTOPG_REQUIRE(w >= 0, "attention row has a negative weight");
      s += w;
    }
    ONTOPG_REQUIRE(std::fabs(s - 1.0) <= 1e-6,
                   "attention row sums to " + std::to_string(s) + ", expected 1");
    for (std::size_t i = 0; i < row.size(); ++i) tr.mean_weight[i] += row[i];
  }
  tr.steps = rows.size();
  if (!rows.empty())
    for (double& w : tr.mean_weight) w /= static_cast<double>(rows.size());
  for (const auto& m : matches)
    for (std::size_t i = m.span_start; i < m.span_end && i < source.size(); ++i)
      tr.matched[i] = true;
  return tr;
}

inline void write_attention_tsv(std::ostream& out, const AttentionTrace& tr) {
  out << "token\tweight\tmatched\n";
  char buf[64];
  for (std::size_t i = 0; i < tr.tokens.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.8f", tr.mean_weight[i]);
    out << tr.tokens[i] << '\t' << buf << '\t' << (tr.matched[i] ? 1 : 0) << '\n';
  }
}

}  // namespace ontopg
