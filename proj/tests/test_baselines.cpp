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

#include <gtest/gtest.h>

#include "ontopg/baselines.hpp"
#include "oracles.hpp"

namespace ontopg {
namespace {

Sentences random_sentences(std::mt19937_64& rng, std::size_t n, std::size_t alphabet) {
  Sentences out;
  for (std::size_t i = 0; i < n; ++i) {
    Tokens s;
    std::size_t len = 2 + rng() % 6;
    for (std::size_t k = 0; k < len; ++k) s.push_back("w" + std::to_string(rng() % alphabet));
    s.push_back(".");
    out.push_back(s);
  }
  return out;
}

TEST(SplitSentences, Examples) {
  auto s = split_sentences("Mild effusion. Nodule 0.6 cm! Stable?  trailing text");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0], (Tokens{"mild", "effusion", "."}));
  EXPECT_EQ(s[1], (Tokens{"nodule", "0.6", "cm", "!"}));
  EXPECT_EQ(s[3], (Tokens{"trailing", "text"}));
  EXPECT_TRUE(split_sentences("").empty());
}

TEST(LexRank, StationaryDistribution) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    auto sents = random_sentences(rng, 2 + rng() % 9, 6 + rng() % 10);
    auto r = lexrank(sents, 2);
    ASSERT_EQ(r.scores.size(), sents.size());
    double sum = 0;
    for (double x : r.scores) {
      EXPECT_GT(x, 0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_LT(r.residual, 1e-8);
    for (std::size_t j = 0; j < sents.size(); ++j) {
      double col = 0;
      for (std::size_t i = 0; i < sents.size(); ++i) col += r.matrix[i][j];
      EXPECT_NEAR(col, 1.0, 1e-12);
    }
    auto want = oracle::stationary_by_eigensolve(r.matrix);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(r.scores[i], want[i], 1e-8);
  }
}

TEST(LexRank, IdenticalSentencesTieToEarliest) {
  Sentences s(4, Tokens{"small", "effusion", "."});
  auto r = lexrank(s, 2);
  for (double x : r.scores) EXPECT_NEAR(x, 0.25, 1e-12);
  EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1}));
}

TEST(LexRank, DisconnectedGraphFavoursLargerCluster) {
  Sentences s = {{"liver", "cyst", "."},       {"bone", "lesion", "stable", "."},
                 {"liver", "cyst", "noted", "."}, {"liver", "cyst", "again", "."}};
  auto r = lexrank(s, 1);
  EXPECT_LT(r.scores[1], r.scores[0]);
  EXPECT_NE(r.selected[0], 1u);
  EXPECT_LT(r.residual, 1e-8);
}

TEST(LexRank, SelectionFollowsScores) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto sents = random_sentences(rng, 6, 8);
    auto r = lexrank(sents, 3);
    ASSERT_EQ(r.selected.size(), 3u);
    EXPECT_TRUE(std::is_sorted(r.selected.begin(), r.selected.end()));
    double lowest_kept = 1;
    for (std::size_t i : r.selected) lowest_kept = std::min(lowest_kept, r.scores[i]);
    for (std::size_t i = 0; i < 6; ++i)
      if (std::find(r.selected.begin(), r.selected.end(), i) == r.selected.end()) {
        EXPECT_LE(r.scores[i], lowest_kept + 1e-12);
      }
  }
  EXPECT_TRUE(lexrank({}, 3).selected.empty());
}

TEST(Lsa, MatchesEigenSvd) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    auto sents = random_sentences(rng, 2 + rng() % 8, 5 + rng() % 12);
    std::size_t k = 1 + rng() % 3;
    auto sv = jacobi_svd(term_sentence_matrix(sents)).singular_values;
    if (sv.size() > k && sv[k - 1] - sv[k] <= 1e-6 * sv[0]) continue;  // kept subspace not unique
    auto got = lsa_summarize(sents, k);
    auto want = oracle::lsa_scores_by_eigen(sents, k);
    ASSERT_EQ(got.scores.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
      EXPECT_NEAR(got.scores[i], want[i], 1e-8) << "trial " << trial;
  }
}

TEST(Lsa, JacobiSvdReconstructs) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::vector<double>> a(7, std::vector<double>(4));
  for (auto& row : a)
    for (double& x : row) x = u(rng);
  auto svd = jacobi_svd(a);
  // A^T A = V diag(s^2) V^T
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double ata = 0, rec = 0;
      for (const auto& row : a) ata += row[i] * row[j];
      for (std::size_t k = 0; k < 4; ++k)
        rec += svd.right[i][k] * svd.singular_values[k] * svd.singular_values[k] * svd.right[j][k];
      EXPECT_NEAR(ata, rec, 1e-10);
    }
  EXPECT_TRUE(std::is_sorted(svd.singular_values.rbegin(), svd.singular_values.rend()));
}

TEST(Lsa, PermutationInvariantScores) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    auto sents = random_sentences(rng, 5, 9);
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    Sentences shuffled;
    for (std::size_t p : perm) shuffled.push_back(sents[p]);
    auto a = lsa_summarize(sents, 2), b = lsa_summarize(shuffled, 2);
    for (std::size_t i = 0; i < perm.size(); ++i)
      EXPECT_NEAR(b.scores[i], a.scores[perm[i]], 1e-9);
  }
}

TEST(Lsa, TopKAtLeastSentenceCountReturnsAll) {
  std::mt19937_64 rng(7);
  auto sents = random_sentences(rng, 4, 10);
  EXPECT_EQ(lsa_summarize(sents, 4).selected, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(lsa_summarize(sents, 9).selected, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(lexrank(sents, 9).selected, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(join_selected(sents, {0, 2}).size(), sents[0].size() + sents[2].size());
  EXPECT_THROW(lsa_summarize(sents, 0), ContractViolation);
}

}  // namespace
}  // namespace ontopg
