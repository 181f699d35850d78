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

// Adam with global-norm clipping, plus the teacher-forced training loop that
// stops early on dev loss.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "ontopg/autodiff.hpp"
#include "ontopg/checkpoint.hpp"
#include "ontopg/config.hpp"
#include "ontopg/model.hpp"

namespace ontopg {

template <typename T>
struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

template <typename T>
double global_grad_norm(const ad::ParameterSet<T>& params) {
  double s = 0;
  for (const auto& [_, p] : params)
    for (T g : p.grad) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

// Scales all gradients so their global norm is at most clip_norm; returns
// the norm before clipping. A non-positive clip_norm disables clipping.
template <typename T>
double clip_gradients(ad::ParameterSet<T>& params, double clip_norm) {
  double norm = global_grad_norm(params);
  if (clip_norm > 0 && norm > clip_norm) {
    T k = static_cast<T>(clip_norm / norm);
    for (auto& [_, p] : params)
      for (T& g : p.grad) g *= k;
  }
  return norm;
}

// One Adam update from the gradients stored in params.
template <typename T>
void adam_step(ad::ParameterSet<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
  for (const auto& [name, p] : params)
    for (T g : p.grad)
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("non-finite gradient in parameter " + name);
  clip_gradients(params, cfg.clip_norm);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.value.size(), T{0});
      v.assign(p.value.size(), T{0});
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      T g = p.grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      T mhat = m[i] * inv_bc1;
      T vhat = v[i] * inv_bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct EarlyStopping {
  std::size_t patience = 3;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;

  // Returns true when the score is a new best.
  bool update(double dev_loss) {
    if (dev_loss < best) {
      best = dev_loss;
      since_improvement = 0;
      return true;
    }
    ++since_improvement;
    return false;
  }
  bool should_stop() const { return since_improvement >= patience; }
};

struct MetricRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;

  bool operator==(const MetricRecord&) const = default;
  nlohmann::json to_json() const {
    return {{"epoch", epoch}, {"step", step}, {"split", split}, {"loss", loss}};
  }
};

struct TrainResult {
  std::string checkpoint_path;
  std::vector<MetricRecord> metrics;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;
};

template <typename T>
double mean_loss(Model<T>& model, const std::vector<Example>& examples) {
  ONTOPG_REQUIRE(!examples.empty(), "mean_loss: no examples");
  double s = 0;
  for (const auto& ex : examples) s += static_cast<double>(model.loss(ex));
  return s / static_cast<double>(examples.size());
}

// Accumulates the mean loss gradient of a batch into the parameters and
// returns the mean loss.
template <typename T, typename Rng>
double accumulate_batch_gradient(Model<T>& model, const std::vector<const Example*>& batch,
                                 Rng* dropout_rng) {
  double total = 0;
  const T k = T{1} / static_cast<T>(batch.size());
  for (const Example* ex : batch) {
    ad::Graph<T> g;
    auto tf = model.forward_teacher_forced(g, *ex, dropout_rng);
    total += static_cast<double>(g.scalar(tf.loss));
    g.backward(g.scale(tf.loss, k));
  }
  return total / static_cast<double>(batch.size());
}

// One optimizer step on a batch; returns the batch's mean loss before the
// update.
template <typename T, typename Rng>
double train_step(Model<T>& model, AdamState<T>& state, const std::vector<const Example*>& batch,
                  const TrainConfig& cfg, Rng* dropout_rng) {
  model.params().zero_grad();
  double loss = accumulate_batch_gradient(model, batch, dropout_rng);
  adam_step(model.params(), state, cfg);
  return loss;
}

using EpochCallback = std::function<void(const MetricRecord&)>;

// Shuffles by seed, trains for up to max_epochs, keeps the best dev-loss
// checkpoint and stops after `patience` epochs without improvement. On
// return the model holds the best parameters.
template <typename T>
TrainResult train(Model<T>& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const TrainConfig& cfg,
                  const std::string& out_dir, const KeyValues& config_record,
                  const EpochCallback& on_record = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: training set is empty");
  if (dev_set.empty()) throw ConfigError("train: dev set is empty");
  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.checkpoint_path = (std::filesystem::path(out_dir) / "best.ckpt").string();

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(ad::stable_hash("dropout", cfg.seed));
  model.mutable_config().dropout = cfg.dropout;
  std::mt19937_64* drop = cfg.dropout > 0 ? &dropout_rng : nullptr;

  AdamState<T> state;
  EarlyStopping stopper{cfg.patience};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  ad::ParameterSet<T> best = model.params();

  auto emit = [&](MetricRecord rec) {
    result.metrics.push_back(rec);
    if (on_record) on_record(rec);
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      epoch_loss += train_step(model, state, batch, cfg, drop);
      ++batches;
    }
    emit({epoch, state.step, "train", epoch_loss / static_cast<double>(batches)});
    double dev = mean_loss(model, dev_set);
    emit({epoch, state.step, "dev", dev});
    result.epochs_run = epoch;
    if (stopper.update(dev)) {
      best = model.params();
      save_checkpoint(result.checkpoint_path, config_record, model.vocab(), model.params());
    }
    if (stopper.should_stop()) break;
  }
  result.best_dev_loss = stopper.best;
  for (auto& [name, p] : model.params()) p.value = best.at(name).value;
  return result;
}

inline void write_metrics(const std::string& path, const std::vector<MetricRecord>& metrics) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics log " + path);
  for (const auto& m : metrics) out << m.to_json().dump() << '\n';
}

}  // namespace ontopg
