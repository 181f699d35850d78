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

#include <sstream>

#include "ontopg/evaluation.hpp"
#include "oracles.hpp"

namespace ontopg {
namespace {

Tokens t(std::string_view s) { return tokenize(s); }

TEST(Rouge, WorkedExamples) {
  auto r = rouge(t("the cat sat"), t("the cat"));
  EXPECT_NEAR(r.rouge1.precision, 2.0 / 3, 1e-12);
  EXPECT_NEAR(r.rouge1.recall, 1.0, 1e-12);
  EXPECT_NEAR(r.rouge1.f1, 0.8, 1e-12);
  EXPECT_NEAR(r.rouge2.f1, 2 * 0.5 / 1.5, 1e-12);
  EXPECT_NEAR(r.rougeL.f1, 0.8, 1e-12);

  auto s = rouge(t("a c b"), t("a b c"));
  EXPECT_NEAR(s.rougeL.f1, 2.0 / 3, 1e-12);
  EXPECT_NEAR(s.rouge1.f1, 1.0, 1e-12);
  EXPECT_EQ(s.rouge2.f1, 0.0);
}

TEST(Rouge, ClipsRepeatedNgrams) {
  auto r = rouge_n(t("the the the"), t("the cat"), 1);
  EXPECT_NEAR(r.precision, 1.0 / 3, 1e-12);
  EXPECT_NEAR(r.recall, 0.5, 1e-12);
}

TEST(Rouge, EmptySides) {
  auto r = rouge({}, t("a b"));
  EXPECT_EQ(r.rouge1.f1, 0.0);
  EXPECT_EQ(r.rougeL.f1, 0.0);
  EXPECT_EQ(rouge({}, {}).rouge2.f1, 0.0);
  EXPECT_EQ(rouge(t("a"), t("a")).rouge2.f1, 0.0);
}

TEST(Rouge, MatchesBruteForceOnRandomPairs) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    Tokens c = oracle::random_tokens(rng, 12, 5), r = oracle::random_tokens(rng, 12, 5);
    auto got = rouge(c, r);
    double want[3];
    const RougeComponent* parts[] = {&got.rouge1, &got.rouge2};
    for (std::size_t n = 1; n <= 2; ++n) {
      oracle::rouge_n(c, r, n, want);
      EXPECT_NEAR(parts[n - 1]->precision, want[0], 1e-9);
      EXPECT_NEAR(parts[n - 1]->recall, want[1], 1e-9);
      EXPECT_NEAR(parts[n - 1]->f1, want[2], 1e-9);
    }
    oracle::rouge_l(c, r, want);
    EXPECT_EQ(lcs_length(c, r), oracle::lcs(c, r));
    EXPECT_NEAR(got.rougeL.precision, want[0], 1e-9);
    EXPECT_NEAR(got.rougeL.recall, want[1], 1e-9);
    EXPECT_NEAR(got.rougeL.f1, want[2], 1e-9);
  }
}

TEST(Rouge, SymmetricF1AndSelfScore) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    Tokens a = oracle::random_tokens(rng, 10, 4), b = oracle::random_tokens(rng, 10, 4);
    EXPECT_NEAR(rouge(a, b).rouge1.f1, rouge(b, a).rouge1.f1, 1e-12);
    EXPECT_NEAR(rouge(a, b).rougeL.f1, rouge(b, a).rougeL.f1, 1e-12);
    if (!a.empty()) {
      EXPECT_NEAR(rouge(a, a).rougeL.f1, 1.0, 1e-12);
    }
  }
}

TEST(CorpusRouge, MeanOverReportsScaledBy100) {
  std::vector<std::pair<std::string, Tokens>> sys = {{"r1", t("a b")}, {"r2", t("x y")}};
  std::vector<std::pair<std::string, Tokens>> ref = {{"r2", t("q z")}, {"r1", t("a b")}};
  auto c = corpus_rouge(align_by_id(sys, ref));
  EXPECT_NEAR(c.mean.rouge1.f1, 50.0, 1e-12);
  EXPECT_NEAR(c.mean.rougeL.recall, 50.0, 1e-12);
  ASSERT_EQ(c.ids, (std::vector<std::string>{"r1", "r2"}));
  EXPECT_NEAR(c.per_report[0].rouge1.f1, 1.0, 1e-12);
}

TEST(CorpusRouge, AlignmentErrors) {
  std::vector<std::pair<std::string, Tokens>> a = {{"r1", t("a")}};
  std::vector<std::pair<std::string, Tokens>> b = {{"r2", t("a")}};
  std::vector<std::pair<std::string, Tokens>> two = {{"r1", t("a")}, {"r1", t("b")}};
  EXPECT_THROW(align_by_id(a, b), AlignmentError);
  EXPECT_THROW(align_by_id(a, two), AlignmentError);
  EXPECT_THROW(align_by_id(two, two), AlignmentError);
}

TEST(TTest, WorkedExample) {
  std::vector<double> a = {1, 2, 3, 4, 5}, zero(5, 0.0);
  auto r = paired_t_test(a, zero);
  EXPECT_NEAR(r.t, 3.0 / (std::sqrt(2.5) / std::sqrt(5.0)), 1e-12);
  EXPECT_NEAR(r.t, 4.2426, 1e-4);
  EXPECT_EQ(r.df, 4u);
  EXPECT_NEAR(r.p_value, oracle::t_two_sided_p(r.t, 4), 1e-7);
  EXPECT_NEAR(r.p_value, 0.0132, 1e-4);
  auto flipped = paired_t_test(zero, a);
  EXPECT_NEAR(flipped.t, -r.t, 1e-12);
  EXPECT_NEAR(flipped.p_value, r.p_value, 1e-15);
}

TEST(TTest, DegenerateCases) {
  auto r = paired_t_test({1, -1, 1, -1}, {0, 0, 0, 0});
  EXPECT_EQ(r.t, 0.0);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  auto same = paired_t_test({0.3, 0.4, 0.5}, {0.3, 0.4, 0.5});
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p_value, 1.0);
  auto shifted = paired_t_test({1.5, 2.5, 3.5}, {1, 2, 3});
  EXPECT_TRUE(std::isinf(shifted.t));
  EXPECT_EQ(shifted.p_value, 0.0);
  EXPECT_THROW(paired_t_test({1}, {2}), ContractViolation);
  EXPECT_THROW(paired_t_test({1, 2}, {2}), ContractViolation);
}

TEST(TTest, MatchesQuadratureOnRandomSamples) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.2, 1.0);
  for (int i = 0; i < 30; ++i) {
    std::size_t n = 3 + rng() % 20;
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) a[k] = nd(rng), b[k] = nd(rng);
    auto r = paired_t_test(a, b);
    EXPECT_NEAR(r.p_value, oracle::t_two_sided_p(r.t, static_cast<double>(n - 1)), 1e-7);
  }
}

TEST(AttentionTrace, AveragesRowsAndMarksSpans) {
  Tokens src = t("mild pleural effusion .");
  ConceptMatch m{"C1", 1, 3, {"pleural", "effusion"}, 1.0};
  auto tr = attention_trace(src, {{0.1, 0.2, 0.3, 0.4}, {0.3, 0.4, 0.1, 0.2}}, {m});
  EXPECT_EQ(tr.steps, 2u);
  EXPECT_NEAR(tr.mean_weight[0], 0.2, 1e-12);
  EXPECT_NEAR(tr.mean_weight[2], 0.2, 1e-12);
  EXPECT_EQ(tr.matched, (std::vector<bool>{false, true, true, false}));
  std::ostringstream out;
  write_attention_tsv(out, tr);
  EXPECT_EQ(out.str(),
            "token\tweight\tmatched\nmild\t0.20000000\t0\npleural\t0.30000000\t1\n"
            "effusion\t0.20000000\t1\n.\t0.30000000\t0\n");
}

TEST(AttentionTrace, RejectsMalformedRows) {
  Tokens src = t("a b");
  EXPECT_THROW(attention_trace(src, {{0.5, 0.4}}, {}), ContractViolation);
  EXPECT_THROW(attention_trace(src, {{1.0}}, {}), ContractViolation);
  EXPECT_THROW(attention_trace(src, {{1.5, -0.5}}, {}), ContractViolation);
}

}  // namespace
}  // namespace ontopg
