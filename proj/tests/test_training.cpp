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

#include <filesystem>

#include "ontopg/checkpoint.hpp"
#include "ontopg/gradcheck.hpp"
#include "ontopg/pipeline.hpp"
#include "ontopg/synthetic.hpp"
#include "ontopg/training.hpp"

namespace ontopg {
namespace {

std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ontopg_" + name);
  std::filesystem::create_directories(p);
  return p.string();
}

ad::ParameterSet<double> scalar_param(double theta) {
  ad::ParameterSet<double> ps;
  ps.add("theta", {1, 1}).value[0] = theta;
  return ps;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto ps = scalar_param(0.7);
  AdamState<double> st;
  TrainConfig cfg;
  for (int i = 0; i < 5; ++i) adam_step(ps, st, cfg);
  EXPECT_EQ(ps.at("theta").value[0], 0.7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto ps = scalar_param(0.0);
  ps.at("theta").grad[0] = 1.0;
  AdamState<double> st;
  TrainConfig cfg;
  adam_step(ps, st, cfg);
  EXPECT_NEAR(ps.at("theta").value[0], -cfg.learning_rate / (1.0 + cfg.epsilon), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, QuadraticConvergesAndMatchesScalarRecurrence) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.clip_norm = 0;
  auto ps = scalar_param(0.0);
  AdamState<double> st;
  double theta = 0, m = 0, v = 0;
  for (int t = 1; t <= 200; ++t) {
    double g = 2 * (theta - 3);
    ps.at("theta").grad[0] = 2 * (ps.at("theta").value[0] - 3);
    adam_step(ps, st, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1 - std::pow(0.9, t)), vhat = v / (1 - std::pow(0.999, t));
    theta -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  }
  EXPECT_LT(std::fabs(ps.at("theta").value[0] - 3), 0.1);
  EXPECT_NEAR(ps.at("theta").value[0], theta, 1e-12);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  auto ps = scalar_param(0.0);
  ps.at("theta").grad[0] = std::nan("");
  AdamState<double> st;
  try {
    adam_step(ps, st, TrainConfig{});
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
  }
  EXPECT_EQ(ps.at("theta").value[0], 0.0);
}

TEST(Clipping, GlobalNormBounded) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(0, 10);
  for (int trial = 0; trial < 20; ++trial) {
    ad::ParameterSet<double> ps;
    ps.add("a", {3, 4});
    ps.add("b", {1, 7});
    for (auto& [_, p] : ps)
      for (double& g : p.grad) g = d(rng);
    double before = clip_gradients(ps, 2.0);
    EXPECT_GT(before, 2.0);
    EXPECT_LE(global_grad_norm(ps), 2.0 + 1e-9);
  }
  ad::ParameterSet<double> small;
  small.add("a", {1, 1}).grad[0] = 0.5;
  clip_gradients(small, 2.0);
  EXPECT_EQ(small.at("a").grad[0], 0.5);
}

TEST(EarlyStopping, PatienceOneStopsAtSecondEpoch) {
  EarlyStopping s{1};
  std::size_t stopped_at = 0;
  double dev[] = {1.0, 1.1, 1.2, 1.3};
  for (std::size_t epoch = 1; epoch <= 4; ++epoch) {
    s.update(dev[epoch - 1]);
    if (s.should_stop()) {
      stopped_at = epoch;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 2u);
}

TEST(EarlyStopping, ImprovementResetsCounter) {
  EarlyStopping s{2};
  EXPECT_TRUE(s.update(3.0));
  EXPECT_FALSE(s.update(3.5));
  EXPECT_TRUE(s.update(2.0));
  EXPECT_FALSE(s.should_stop());
  s.update(2.5);
  s.update(2.5);
  EXPECT_TRUE(s.should_stop());
}

struct SmallTask {
  Ontology onto = synthetic_ontology();
  std::vector<Report> reports = generate_synthetic_corpus(7, 24, onto);
  Vocabulary vocab = build_vocabulary(reports, 1, 50000);
  std::vector<Example> train, dev;
  ModelConfig cfg;

  SmallTask() {
    OntologyLinker linker(onto, MatcherConfig{});
    auto all = prepare_examples(reports, vocab, &linker, {});
    train.assign(all.begin(), all.begin() + 16);
    dev.assign(all.begin() + 16, all.end());
    cfg.vocab_size = vocab.size();
    cfg.embed_dim = 12;
    cfg.enc_hidden = 12;
    cfg.dec_hidden = 24;
    cfg.init_seed = 3;
  }
};

TEST(Train, SameSeedSameMetrics) {
  SmallTask task;
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 4;
  tc.seed = 5;
  auto run = [&](const std::string& dir) {
    Model<double> m(task.cfg, task.vocab);
    return train(m, task.train, task.dev, tc, temp_dir(dir), KeyValues{}).metrics;
  };
  auto a = run("det_a"), b = run("det_b");
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a, b);
  tc.seed = 6;
  EXPECT_NE(a, run("det_c"));
}

TEST(Train, EmptySplitsAreConfigErrors) {
  SmallTask task;
  Model<double> m(task.cfg, task.vocab);
  EXPECT_THROW(train(m, {}, task.dev, TrainConfig{}, temp_dir("empty"), KeyValues{}), ConfigError);
  EXPECT_THROW(train(m, task.train, {}, TrainConfig{}, temp_dir("empty"), KeyValues{}),
               ConfigError);
}

TEST(Train, KeepsBestCheckpointAndRestoresIt) {
  SmallTask task;
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch_size = 8;
  tc.seed = 1;
  Model<double> m(task.cfg, task.vocab);
  auto res = train(m, task.train, task.dev, tc, temp_dir("best"), KeyValues{});
  EXPECT_NEAR(mean_loss(m, task.dev), res.best_dev_loss, 1e-12);
  auto ck = load_checkpoint(res.checkpoint_path);
  Model<double> back(task.cfg, ck.vocab, ck.params);
  EXPECT_NEAR(mean_loss(back, task.dev), res.best_dev_loss, 1e-12);
}

TEST(Train, OneStepReducesSingleExampleLoss) {
  auto s = tiny_setup(2);
  Model<double> m(s.config, s.vocab);
  AdamState<double> st;
  TrainConfig tc;
  tc.learning_rate = 0.01;
  double before = m.loss(s.examples[0]);
  train_step<double, std::mt19937_64>(m, st, {&s.examples[0]}, tc, nullptr);
  EXPECT_LT(m.loss(s.examples[0]), before);
}

TEST(Checkpoint, RoundTripPreservesDevLoss) {
  SmallTask task;
  Model<double> m(task.cfg, task.vocab);
  auto dir = temp_dir("ck");
  auto path = dir + "/m.ckpt";
  KeyValues kv = KeyValues::from_string("embed_dim = 12\nseed = 3\n");
  save_checkpoint(path, kv, task.vocab, m.params());
  auto ck = load_checkpoint(path);
  EXPECT_EQ(ck.config.values(), kv.values());
  EXPECT_EQ(ck.vocab.size(), task.vocab.size());
  Model<double> back(task.cfg, ck.vocab, ck.params);
  EXPECT_NEAR(mean_loss(back, task.dev), mean_loss(m, task.dev), 1e-12);

  Model<float> mf(task.cfg, task.vocab);
  save_checkpoint(path, kv, task.vocab, mf.params());
  auto ckf = load_checkpoint(path);
  Model<float> backf(task.cfg, ckf.vocab, ckf.params.cast<float>());
  EXPECT_NEAR(mean_loss(backf, task.dev), mean_loss(mf, task.dev), 1e-6);
}

TEST(Checkpoint, RejectsGarbageAndMismatchedShapes) {
  auto dir = temp_dir("ck_bad");
  std::ofstream(dir + "/junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir + "/junk.ckpt"), FormatError);
  EXPECT_THROW(load_checkpoint(dir + "/missing.ckpt"), IoError);
  SmallTask task;
  Model<double> m(task.cfg, task.vocab);
  save_checkpoint(dir + "/m.ckpt", KeyValues{}, task.vocab, m.params());
  auto ck = load_checkpoint(dir + "/m.ckpt");
  ModelConfig other = task.cfg;
  other.dec_hidden = 30;
  EXPECT_THROW(Model<double>(other, ck.vocab, ck.params), FormatError);
}

TEST(Config, ParsesKeyValuesWithComments) {
  auto kv = KeyValues::from_string("# comment\nbeam = 3   # trailing\n\nmatcher=fuzzy\n");
  auto c = ExperimentConfig::from(kv);
  EXPECT_EQ(c.decode.beam, 3u);
  EXPECT_EQ(c.matcher.kind, MatcherKind::kFuzzy);
  EXPECT_EQ(c.train.learning_rate, 0.001);
  EXPECT_EQ(c.model.dec_hidden, 200u);
}

TEST(Config, InvalidValuesNameKey) {
  auto expect_key = [](const std::string& text, const std::string& key) {
    try {
      ExperimentConfig::from(KeyValues::from_string(text));
      FAIL() << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_key("dropout = 1.5", "dropout");
  expect_key("learning_rate = 0", "learning_rate");
  expect_key("patience = 0", "patience");
  expect_key("beam = many", "beam");
  expect_key("matcher = regex", "matcher");
  expect_key("jaccard = 0", "jaccard");
  expect_key("unknown_knob = 1", "unknown_knob");
  EXPECT_THROW(KeyValues::from_string("no equals sign"), ConfigError);
}

TEST(Config, RoundTripsThroughKeyValues) {
  auto c = ExperimentConfig::from(
      KeyValues::from_string("embed_dim = 64\nenc_hidden = 64\ndec_hidden = 128\nseed = 9\n"
                             "use_ontology = false\nlearning_rate = 0.002\n"));
  auto d = ExperimentConfig::from(c.to_key_values());
  EXPECT_EQ(c.to_key_values().values(), d.to_key_values().values());
  EXPECT_EQ(d.model.embed_dim, 64u);
  EXPECT_FALSE(d.model.use_ontology);
  EXPECT_EQ(d.train.seed, 9u);
}

}  // namespace
}  // namespace ontopg
