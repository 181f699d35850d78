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

// Dense row-major tensors with a tape-based reverse pass. Everything is a
// matrix; row vectors are 1 x n. A Graph records one forward computation and
// owns every intermediate; parameters live outside the graph and accumulate
// their gradients in place so several graphs can contribute to one update.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ontopg/errors.hpp"

namespace ontopg::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
  }
};

// Tensor storage. Eigen peels reductions according to the buffer address,
// so unaligned buffers could make identical computations round differently.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;

  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

// 64-bit FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s, std::uint64_t seed = 0) {
  std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(const std::string& name, Shape shape) {
    ONTOPG_REQUIRE(!params_.contains(name), "duplicate parameter " + name);
    Parameter<T> p{name, shape, Buffer<T>(shape.size(), T{0}), Buffer<T>(shape.size(), T{0})};
    return params_.emplace(name, std::move(p)).first->second;
  }

  // Uniform init from a stream keyed by (seed, name).
  Parameter<T>& add_uniform(const std::string& name, Shape shape,
                            std::uint64_t seed, double limit) {
    Parameter<T>& p = add(name, shape);
    std::mt19937_64 rng(stable_hash(name, seed));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : p.value) v = static_cast<T>(dist(rng));
    return p;
  }

  bool contains(const std::string& name) const { return params_.contains(name); }

  Parameter<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractViolation("no parameter " + name);
    return it->second;
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractViolation("no parameter " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, p] : params_) {
      auto& q = out.add(name, p.shape);
      std::transform(p.value.begin(), p.value.end(), q.value.begin(),
                     [](T v) { return static_cast<U>(v); });
    }
    return out;
  }

 private:
  std::map<std::string, Parameter<T>> params_;
};

template <typename T>
class Graph {
 public:
  struct Var {
    std::uint32_t id = 0;
  };

  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapC = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;
  using Row = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves -------------------------------------------------------------

  Var constant(Shape shape, std::vector<T> values) {
    ONTOPG_REQUIRE(values.size() == shape.size(),
                   "constant: " + std::to_string(values.size()) +
                       " values for shape " + shape.str());
    Var v = make(shape, {});
    nodes_[v.id].value.assign(values.begin(), values.end());
    return v;
  }

  Var row_vector(std::vector<T> values) {
    Shape s{1, values.size()};
    return constant(s, std::move(values));
  }

  Var zeros(Shape shape) { return make(shape, {}); }

  // The node aliases the parameter; gradients accumulate into p.grad.
  Var param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = make_leaf_alias(p);
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  // ---- access -------------------------------------------------------------

  Shape shape(Var v) const { return nodes_[v.id].shape; }
  std::span<const T> value(Var v) const { return cval(v.id); }
  T scalar(Var v) const {
    ONTOPG_REQUIRE(shape(v).size() == 1, "scalar: shape " + shape(v).str());
    return cval(v.id)[0];
  }
  std::span<const T> grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.param) return n.param->grad;
    return n.grad;
  }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- ops ----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    Shape sa = shape(a), sb = shape(b);
    ONTOPG_REQUIRE(sa.cols == sb.rows,
                   "matmul: shapes " + sa.str() + " and " + sb.str());
    Var out = make({sa.rows, sb.cols}, {a, b});
    if (sa.rows == 1) {
      // Row vector times matrix: keep Eigen on its GEMV path.
      rowmap_w(out).noalias() = rowmap_c(a) * mapc(b);
      set_back(out, [a, b, out](Graph& g) {
        auto go = g.rowmap_g_c(out);
        if (g.wants(a)) g.rowmap_g(a).noalias() += go * g.mapc(b).transpose();
        if (g.wants(b)) g.outer_product_grad(b, a, out);
      });
      return out;
    }
    mapw(out).noalias() = mapc(a) * mapc(b);
    set_back(out, [a, b, out](Graph& g) {
      auto go = g.mapg_c(out);
      if (g.wants(a)) g.mapg(a).noalias() += go * g.mapc(b).transpose();
      if (g.wants(b)) g.mapg(b).noalias() += g.mapc(a).transpose() * go;
    });
    return out;
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    Shape sa = shape(a), sb = shape(b);
    ONTOPG_REQUIRE(sa.cols == sb.cols,
                   "matmul_nt: shapes " + sa.str() + " and " + sb.str());
    Var out = make({sa.rows, sb.rows}, {a, b});
    if (sa.rows == 1) {
      rowmap_w(out).noalias() = rowmap_c(a) * mapc(b).transpose();
      set_back(out, [a, b, out](Graph& g) {
        auto go = g.rowmap_g_c(out);
        if (g.wants(a)) g.rowmap_g(a).noalias() += go * g.mapc(b);
        if (g.wants(b)) g.mapg(b).noalias() += go.transpose() * g.rowmap_c(a);
      });
      return out;
    }
    mapw(out).noalias() = mapc(a) * mapc(b).transpose();
    set_back(out, [a, b, out](Graph& g) {
      auto go = g.mapg_c(out);
      if (g.wants(a)) g.mapg(a).noalias() += go * g.mapc(b);
      if (g.wants(b)) g.mapg(b).noalias() += go.transpose() * g.mapc(a);
    });
    return out;
  }

  Var add(Var a, Var b) {
    Shape sa = shape(a), sb = shape(b);
    ONTOPG_REQUIRE(sa == sb, "add: shapes " + sa.str() + " and " + sb.str());
    Var out = make(sa, {a, b});
    mapw(out) = mapc(a) + mapc(b);
    set_back(out, [a, b, out](Graph& g) {
      if (g.wants(a)) g.mapg(a) += g.mapg_c(out);
      if (g.wants(b)) g.mapg(b) += g.mapg_c(out);
    });
    return out;
  }

  // Adds row vector b to every row of m.
  Var add_rowwise(Var m, Var b) {
    Shape sm = shape(m), sb = shape(b);
    ONTOPG_REQUIRE(sb.rows == 1 && sb.cols == sm.cols,
                   "add_rowwise: shapes " + sm.str() + " and " + sb.str());
    Var out = make(sm, {m, b});
    mapw(out) = mapc(m).rowwise() + rowmap_c(b);
    set_back(out, [m, b, out](Graph& g) {
      if (g.wants(m)) g.mapg(m) += g.mapg_c(out);
      if (g.wants(b)) g.rowmap_g(b) += g.mapg_c(out).colwise().sum();
    });
    return out;
  }

  Var add_n(const std::vector<Var>& xs) {
    ONTOPG_REQUIRE(!xs.empty(), "add_n: no inputs");
    Shape s = shape(xs[0]);
    for (Var x : xs)
      ONTOPG_REQUIRE(shape(x) == s,
                     "add_n: shapes " + s.str() + " and " + shape(x).str());
    Var out = make(s, xs);
    auto o = mapw(out);
    o.setZero();
    for (Var x : xs) o += mapc(x);
    set_back(out, [xs, out](Graph& g) {
      for (Var x : xs)
        if (g.wants(x)) g.mapg(x) += g.mapg_c(out);
    });
    return out;
  }

  Var mul(Var a, Var b) {
    Shape sa = shape(a), sb = shape(b);
    ONTOPG_REQUIRE(sa == sb, "mul: shapes " + sa.str() + " and " + sb.str());
    Var out = make(sa, {a, b});
    mapw(out) = mapc(a).cwiseProduct(mapc(b));
    set_back(out, [a, b, out](Graph& g) {
      auto go = g.mapg_c(out);
      if (g.wants(a)) g.mapg(a) += go.cwiseProduct(g.mapc(b));
      if (g.wants(b)) g.mapg(b) += go.cwiseProduct(g.mapc(a));
    });
    return out;
  }

  Var scale(Var a, T k) {
    Var out = make(shape(a), {a});
    mapw(out) = mapc(a) * k;
    set_back(out, [a, out, k](Graph& g) {
      if (g.wants(a)) g.mapg(a) += g.mapg_c(out) * k;
    });
    return out;
  }

  // Concatenates along columns; all inputs share a row count.
  Var concat(const std::vector<Var>& xs) {
    ONTOPG_REQUIRE(!xs.empty(), "concat: no inputs");
    std::size_t rows = shape(xs[0]).rows, cols = 0;
    for (Var x : xs) {
      ONTOPG_REQUIRE(shape(x).rows == rows,
                     "concat: shapes " + shape(xs[0]).str() + " and " +
                         shape(x).str());
      cols += shape(x).cols;
    }
    Var out = make({rows, cols}, xs);
    auto o = mapw(out);
    std::size_t off = 0;
    for (Var x : xs) {
      std::size_t c = shape(x).cols;
      o.middleCols(off, c) = mapc(x);
      off += c;
    }
    set_back(out, [xs, out](Graph& g) {
      auto go = g.mapg_c(out);
      std::size_t off = 0;
      for (Var x : xs) {
        std::size_t c = g.shape(x).cols;
        if (g.wants(x)) g.mapg(x) += go.middleCols(off, c);
        off += c;
      }
    });
    return out;
  }

  // Stacks inputs vertically; all inputs share a column count.
  Var stack_rows(const std::vector<Var>& xs) {
    ONTOPG_REQUIRE(!xs.empty(), "stack_rows: no inputs");
    std::size_t cols = shape(xs[0]).cols, rows = 0;
    for (Var x : xs) {
      ONTOPG_REQUIRE(shape(x).cols == cols,
                     "stack_rows: shapes " + shape(xs[0]).str() + " and " +
                         shape(x).str());
      rows += shape(x).rows;
    }
    Var out = make({rows, cols}, xs);
    T* o = wval(out.id);
    for (Var x : xs) {
      auto v = cval(x.id);
      o = std::copy(v.begin(), v.end(), o);
    }
    set_back(out, [xs, out](Graph& g) {
      const T* go = g.gbuf(out.id);
      for (Var x : xs) {
        std::size_t n = g.shape(x).size();
        if (g.wants(x)) {
          T* gx = g.gbuf(x.id);
          for (std::size_t i = 0; i < n; ++i) gx[i] += go[i];
        }
        go += n;
      }
    });
    return out;
  }

  Var row(Var m, std::size_t r) {
    Shape s = shape(m);
    ONTOPG_REQUIRE(r < s.rows, "row: index " + std::to_string(r) +
                                   " out of range for shape " + s.str());
    Var out = make({1, s.cols}, {m});
    auto src = cval(m.id).subspan(r * s.cols, s.cols);
    std::copy(src.begin(), src.end(), wval(out.id));
    set_back(out, [m, out, r, s](Graph& g) {
      if (!g.wants(m)) return;
      T* gm = g.gbuf(m.id) + r * s.cols;
      const T* go = g.gbuf(out.id);
      for (std::size_t i = 0; i < s.cols; ++i) gm[i] += go[i];
    });
    return out;
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    Shape s = shape(a);
    ONTOPG_REQUIRE(begin < end && end <= s.cols,
                   "slice_cols: [" + std::to_string(begin) + "," +
                       std::to_string(end) + ") of " + s.str());
    Var out = make({s.rows, end - begin}, {a});
    mapw(out) = mapc(a).middleCols(begin, end - begin);
    set_back(out, [a, out, begin, end](Graph& g) {
      if (g.wants(a)) g.mapg(a).middleCols(begin, end - begin) += g.mapg_c(out);
    });
    return out;
  }

  Var tanh(Var a) {
    Var out = make(shape(a), {a});
    mapw(out) = mapc(a).array().tanh().matrix();
    set_back(out, [a, out](Graph& g) {
      if (!g.wants(a)) return;
      auto y = g.mapc(out).array();
      g.mapg(a).array() += g.mapg_c(out).array() * (T{1} - y * y);
    });
    return out;
  }

  Var sigmoid(Var a) {
    Var out = make(shape(a), {a});
    mapw(out) = mapc(a).array().logistic().matrix();
    set_back(out, [a, out](Graph& g) {
      if (!g.wants(a)) return;
      auto y = g.mapc(out).array();
      g.mapg(a).array() += g.mapg_c(out).array() * y * (T{1} - y);
    });
    return out;
  }

  Var log(Var a) {
    Var out = make(shape(a), {a});
    mapw(out) = mapc(a).array().log().matrix();
    set_back(out, [a, out](Graph& g) {
      if (g.wants(a))
        g.mapg(a).array() += g.mapg_c(out).array() / g.mapc(a).array();
    });
    return out;
  }

  // Row-wise softmax with max subtraction.
  Var softmax(Var a) {
    Shape s = shape(a);
    Var out = make(s, {a});
    auto x = mapc(a);
    auto y = mapw(out);
    for (std::size_t r = 0; r < s.rows; ++r) {
      T mx = x.row(r).maxCoeff();
      y.row(r) = (x.row(r).array() - mx).exp().matrix();
      y.row(r) /= y.row(r).sum();
    }
    set_back(out, [a, out, s](Graph& g) {
      if (!g.wants(a)) return;
      auto y = g.mapc(out);
      auto go = g.mapg_c(out);
      auto ga = g.mapg(a);
      for (std::size_t r = 0; r < s.rows; ++r) {
        T dot = go.row(r).dot(y.row(r));
        ga.row(r).array() += y.row(r).array() * (go.row(r).array() - dot);
      }
    });
    return out;
  }

  Var sum(Var a) {
    Var out = make({1, 1}, {a});
    wval(out.id)[0] = mapc(a).sum();
    set_back(out, [a, out](Graph& g) {
      if (g.wants(a)) g.mapg(a).array() += g.gbuf(out.id)[0];
    });
    return out;
  }

  // Rows of a table selected by index.
  Var gather_rows(Var table, std::vector<std::size_t> ids) {
    Shape s = shape(table);
    for (std::size_t id : ids)
      ONTOPG_REQUIRE(id < s.rows, "gather_rows: id " + std::to_string(id) +
                                      " out of range for " + s.str());
    Var out = make({ids.size(), s.cols}, {table});
    auto src = cval(table.id);
    T* o = wval(out.id);
    for (std::size_t id : ids)
      o = std::copy_n(src.begin() + id * s.cols, s.cols, o);
    set_back(out, [table, out, ids = std::move(ids), s](Graph& g) {
      if (!g.wants(table)) return;
      T* gt = g.gbuf(table.id);
      const T* go = g.gbuf(out.id);
      for (std::size_t k = 0; k < ids.size(); ++k)
        for (std::size_t c = 0; c < s.cols; ++c)
          gt[ids[k] * s.cols + c] += go[k * s.cols + c];
    });
    return out;
  }

  // weights (1 x n) against rows of states (n x d): sum_i w_i * states_i.
  Var weighted_sum(Var weights, Var states) {
    Shape sw = shape(weights), sh = shape(states);
    ONTOPG_REQUIRE(sw.rows == 1 && sw.cols == sh.rows,
                   "weighted_sum: shapes " + sw.str() + " and " + sh.str());
    return matmul(weights, states);
  }

  // p * a + (1 - p) * b with scalar p.
  Var scalar_mix(Var p, Var a, Var b) {
    ONTOPG_REQUIRE(shape(p).size() == 1, "scalar_mix: gate shape " + shape(p).str());
    ONTOPG_REQUIRE(shape(a) == shape(b),
                   "scalar_mix: shapes " + shape(a).str() + " and " + shape(b).str());
    Var out = make(shape(a), {p, a, b});
    T pv = cval(p.id)[0];
    mapw(out) = mapc(a) * pv + mapc(b) * (T{1} - pv);
    set_back(out, [p, a, b, out](Graph& g) {
      T pv = g.cval(p.id)[0];
      auto go = g.mapg_c(out);
      if (g.wants(p)) g.gbuf(p.id)[0] += go.cwiseProduct(g.mapc(a) - g.mapc(b)).sum();
      if (g.wants(a)) g.mapg(a) += go * pv;
      if (g.wants(b)) g.mapg(b) += go * (T{1} - pv);
    });
    return out;
  }

  // Widens a row vector with trailing zeros.
  Var pad_cols(Var a, std::size_t width) {
    Shape s = shape(a);
    ONTOPG_REQUIRE(s.rows == 1 && width >= s.cols,
                   "pad_cols: " + s.str() + " to width " + std::to_string(width));
    Var out = make({1, width}, {a});
    auto v = cval(a.id);
    std::copy(v.begin(), v.end(), wval(out.id));
    set_back(out, [a, out, s](Graph& g) {
      if (!g.wants(a)) return;
      const T* go = g.gbuf(out.id);
      T* ga = g.gbuf(a.id);
      for (std::size_t i = 0; i < s.cols; ++i) ga[i] += go[i];
    });
    return out;
  }

  // out[targets[i]] += a[i] for a row vector a.
  Var scatter_add(Var a, std::vector<std::size_t> targets, std::size_t width) {
    Shape s = shape(a);
    ONTOPG_REQUIRE(s.rows == 1 && targets.size() == s.cols,
                   "scatter_add: " + s.str() + " with " +
                       std::to_string(targets.size()) + " targets");
    for (std::size_t t : targets)
      ONTOPG_REQUIRE(t < width, "scatter_add: target " + std::to_string(t) +
                                    " >= width " + std::to_string(width));
    Var out = make({1, width}, {a});
    auto v = cval(a.id);
    T* o = wval(out.id);
    for (std::size_t i = 0; i < targets.size(); ++i) o[targets[i]] += v[i];
    set_back(out, [a, out, targets = std::move(targets)](Graph& g) {
      if (!g.wants(a)) return;
      const T* go = g.gbuf(out.id);
      T* ga = g.gbuf(a.id);
      for (std::size_t i = 0; i < targets.size(); ++i) ga[i] += go[targets[i]];
    });
    return out;
  }

  Var pick(Var a, std::size_t index) {
    ONTOPG_REQUIRE(index < shape(a).size(),
                   "pick: index " + std::to_string(index) + " out of " +
                       shape(a).str());
    Var out = make({1, 1}, {a});
    wval(out.id)[0] = cval(a.id)[index];
    set_back(out, [a, out, index](Graph& g) {
      if (g.wants(a)) g.gbuf(a.id)[index] += g.gbuf(out.id)[0];
    });
    return out;
  }

  // -log(a[index]); the cross-entropy of a distribution against a target.
  Var neg_log_pick(Var a, std::size_t index) {
    ONTOPG_REQUIRE(index < shape(a).size(),
                   "neg_log_pick: index " + std::to_string(index) + " out of " +
                       shape(a).str());
    Var out = make({1, 1}, {a});
    T p = cval(a.id)[index];
    wval(out.id)[0] = -std::log(p);
    set_back(out, [a, out, index](Graph& g) {
      if (g.wants(a))
        g.gbuf(a.id)[index] -= g.gbuf(out.id)[0] / g.cval(a.id)[index];
    });
    return out;
  }

  // Fused LSTM cell. z holds the four pre-activations [i, f, g, o] (1 x 4H),
  // c_prev is 1 x H. Returns [h, c] as 1 x 2H with
  //   c = sigmoid(f) * c_prev + sigmoid(i) * tanh(g),  h = sigmoid(o) * tanh(c).
  Var lstm_cell(Var z, Var c_prev) {
    Shape sz = shape(z), sc = shape(c_prev);
    ONTOPG_REQUIRE(sz.rows == 1 && sc.rows == 1 && sz.cols == 4 * sc.cols,
                   "lstm_cell: shapes " + sz.str() + " and " + sc.str());
    const Eigen::Index h = static_cast<Eigen::Index>(sc.cols);
    Var out = make({1, 2 * sc.cols}, {z, c_prev});
    using Arr = Eigen::Array<T, 1, Eigen::Dynamic>;
    // Activations cached as [i, f, g, o, tanh(c)].
    auto cache = std::make_shared<Arr>(5 * h);
    Eigen::Map<const Arr> zv(cval(z.id).data(), 4 * h);
    Eigen::Map<const Arr> cp(cval(c_prev.id).data(), h);
    Arr& a = *cache;
    a.head(2 * h) = zv.head(2 * h).logistic();
    a.segment(2 * h, h) = zv.segment(2 * h, h).tanh();
    a.segment(3 * h, h) = zv.segment(3 * h, h).logistic();
    Eigen::Map<Arr> o(wval(out.id), 2 * h);
    o.tail(h) = a.segment(h, h) * cp + a.head(h) * a.segment(2 * h, h);
    a.tail(h) = o.tail(h).tanh();
    o.head(h) = a.segment(3 * h, h) * a.tail(h);
    set_back(out, [z, c_prev, out, h, cache](Graph& g) {
      const Arr& a = *cache;
      auto ig = a.head(h), fg = a.segment(h, h), gg = a.segment(2 * h, h),
           og = a.segment(3 * h, h), tc = a.tail(h);
      Eigen::Map<const Arr> go(g.gbuf(out.id), 2 * h);
      Eigen::Map<const Arr> cp(g.cval(c_prev.id).data(), h);
      Arr dh = go.head(h);
      Arr dc = go.tail(h) + dh * og * (T{1} - tc * tc);
      if (g.wants(z)) {
        Eigen::Map<Arr> gz(g.gbuf(z.id), 4 * h);
        gz.head(h) += dc * gg * ig * (T{1} - ig);
        gz.segment(h, h) += dc * cp * fg * (T{1} - fg);
        gz.segment(2 * h, h) += dc * ig * (T{1} - gg * gg);
        gz.segment(3 * h, h) += dh * tc * og * (T{1} - og);
      }
      if (g.wants(c_prev)) {
        Eigen::Map<Arr> gc(g.gbuf(c_prev.id), h);
        gc += dc * fg;
      }
    });
    return out;
  }

  // A whole LSTM direction over precomputed input projections zx (n x 4H)
  // with recurrent weights wh (H x 4H) and bias b (1 x 4H), zero initial
  // state. Row t of the result is h_t (n x H); with reverse the recurrence
  // runs from the last row to the first. Same cell as lstm_cell.
  Var lstm_sequence(Var zx, Var wh, Var b, bool reverse) {
    Shape sz = shape(zx), sw = shape(wh), sb = shape(b);
    ONTOPG_REQUIRE(sw.cols == 4 * sw.rows && sz.cols == sw.cols && sb == (Shape{1, sw.cols}),
                   "lstm_sequence: shapes " + sz.str() + ", " + sw.str() + ", " + sb.str());
    const Eigen::Index n = static_cast<Eigen::Index>(sz.rows);
    const Eigen::Index h = static_cast<Eigen::Index>(sw.rows);
    Var out = make({sz.rows, sw.rows}, {zx, wh, b});
    struct Cache {
      Matrix act;    // n x 5H: [i, f, g, o, tanh(c)] per step
      Matrix cells;  // n x H
    };
    auto cache = std::make_shared<Cache>();
    cache->act.resize(n, 5 * h);
    cache->cells.resize(n, h);
    auto x = mapc(zx);
    auto w = mapc(wh);
    auto bias = rowmap_c(b);
    auto hs = mapw(out);
    Row z(4 * h);
    Row hprev = Row::Zero(h), cprev = Row::Zero(h);
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::Index t = reverse ? n - 1 - k : k;
      z.noalias() = x.row(t) + bias;
      z.noalias() += hprev * w;
      auto a = cache->act.row(t).array();
      a.head(2 * h) = z.head(2 * h).array().logistic();
      a.segment(2 * h, h) = z.segment(2 * h, h).array().tanh();
      a.segment(3 * h, h) = z.segment(3 * h, h).array().logistic();
      cprev = (a.segment(h, h) * cprev.array() + a.head(h) * a.segment(2 * h, h)).matrix();
      cache->cells.row(t) = cprev;
      a.tail(h) = cprev.array().tanh();
      hprev = (a.segment(3 * h, h) * a.tail(h)).matrix();
      hs.row(t) = hprev;
    }
    set_back(out, [zx, wh, b, out, n, h, reverse, cache](Graph& g) {
      auto go = g.mapg_c(out);
      auto hs = g.mapc(out);
      auto w = g.mapc(wh);
      Matrix dz(n, 4 * h);
      Row dh_next = Row::Zero(h), dc_next = Row::Zero(h);
      for (Eigen::Index k = n; k-- > 0;) {
        Eigen::Index t = reverse ? n - 1 - k : k;
        Eigen::Index prev = reverse ? t + 1 : t - 1;
        bool first = k == 0;
        auto a = cache->act.row(t).array();
        auto ig = a.head(h), fg = a.segment(h, h), gg = a.segment(2 * h, h),
             og = a.segment(3 * h, h), tc = a.tail(h);
        Row dh = go.row(t) + dh_next;
        Row dc = (dh.array() * og * (T{1} - tc * tc)).matrix() + dc_next;
        auto dzr = dz.row(t).array();
        Row cp = first ? Row::Zero(h) : Row(cache->cells.row(prev));
        dzr.head(h) = dc.array() * gg * ig * (T{1} - ig);
        dzr.segment(h, h) = dc.array() * cp.array() * fg * (T{1} - fg);
        dzr.segment(2 * h, h) = dc.array() * ig * (T{1} - gg * gg);
        dzr.segment(3 * h, h) = dh.array() * tc * og * (T{1} - og);
        dc_next = (dc.array() * fg).matrix();
        dh_next.noalias() = dz.row(t) * w.transpose();
      }
      if (g.wants(zx)) g.mapg(zx) += dz;
      if (g.wants(b)) g.rowmap_g(b) += dz.colwise().sum();
      if (g.wants(wh) && n > 1) {
        // h_{t-1} paired with dz_t.
        if (reverse)
          g.mapg(wh).noalias() += hs.bottomRows(n - 1).transpose() * dz.topRows(n - 1);
        else
          g.mapg(wh).noalias() += hs.topRows(n - 1).transpose() * dz.bottomRows(n - 1);
      }
    });
    return out;
  }

  // Inverted dropout; identity when rate is 0.
  template <typename Rng>
  Var dropout(Var a, double rate, Rng& rng) {
    ONTOPG_REQUIRE(rate >= 0.0 && rate < 1.0, "dropout: rate out of [0,1)");
    if (rate == 0.0) return a;
    std::bernoulli_distribution keep(1.0 - rate);
    const T scale_kept = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(shape(a).size());
    for (T& m : mask) m = keep(rng) ? scale_kept : T{0};
    Var out = make(shape(a), {a});
    auto x = cval(a.id);
    T* y = wval(out.id);
    for (std::size_t i = 0; i < mask.size(); ++i) y[i] = x[i] * mask[i];
    set_back(out, [a, out, mask = std::move(mask)](Graph& g) {
      if (!g.wants(a)) return;
      const T* go = g.gbuf(out.id);
      T* ga = g.gbuf(a.id);
      for (std::size_t i = 0; i < mask.size(); ++i) ga[i] += go[i] * mask[i];
    });
    return out;
  }

  // ---- reverse pass -------------------------------------------------------

  // Accumulates d(loss)/d(node) into every node reachable from loss.
  // Parameter gradients are added to Parameter::grad, so callers zero them
  // between updates.
  void backward(Var loss) {
    ONTOPG_REQUIRE(!backward_done_, "backward called twice on one graph");
    ONTOPG_REQUIRE(shape(loss).size() == 1,
                   "backward: loss must be scalar, got " + shape(loss).str());
    backward_done_ = true;
    std::vector<char> live(nodes_.size(), 0);
    live[loss.id] = 1;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!live[i]) continue;
      for (std::uint32_t p : nodes_[i].parents) live[p] = 1;
    }
    live_ = std::move(live);
    for (std::size_t i = 0; i <= loss.id; ++i) {
      Node& n = nodes_[i];
      if (live_[i] && !n.param) n.grad.assign(n.shape.size(), T{0});
    }
    gbuf(loss.id)[0] += T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (live_[i] && nodes_[i].back) nodes_[i].back(*this);
    }
    flush_outer_products();
  }

 private:
  struct Node {
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;
    Parameter<T>* param = nullptr;
    std::vector<std::uint32_t> parents;
    std::function<void(Graph&)> back;
  };

  static T logistic(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    T e = std::exp(x);
    return e / (T{1} + e);
  }

  Var make(Shape shape, std::initializer_list<Var> parents) {
    return make(shape, std::vector<Var>(parents));
  }
  Var make(Shape shape, const std::vector<Var>& parents) {
    ONTOPG_REQUIRE(!backward_done_, "graph is frozen after backward");
    Node n;
    n.shape = shape;
    n.value.assign(shape.size(), T{0});
    n.parents.reserve(parents.size());
    for (Var p : parents) n.parents.push_back(p.id);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }
  Var make_leaf_alias(Parameter<T>& p) {
    ONTOPG_REQUIRE(!backward_done_, "graph is frozen after backward");
    Node n;
    n.shape = p.shape;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename F>
  void set_back(Var v, F&& f) {
    nodes_[v.id].back = std::forward<F>(f);
  }

  bool wants(Var v) const { return live_[v.id] != 0; }

  // d(b) += a^T * d(out) for row vector a. Parameter gradients are batched
  // into one GEMM per parameter at the end of the pass.
  void outer_product_grad(Var b, Var a, Var out) {
    if (nodes_[b.id].param) {
      deferred_[b.id].push_back({a.id, out.id});
      return;
    }
    mapg(b).noalias() += rowmap_c(a).transpose() * rowmap_g_c(out);
  }

  void flush_outer_products() {
    for (auto& [bid, pairs] : deferred_) {
      Shape sb = nodes_[bid].shape;
      const auto k = static_cast<Eigen::Index>(pairs.size());
      Matrix lhs(k, static_cast<Eigen::Index>(sb.rows));
      Matrix rhs(k, static_cast<Eigen::Index>(sb.cols));
      for (Eigen::Index r = 0; r < k; ++r) {
        auto [aid, oid] = pairs[static_cast<std::size_t>(r)];
        lhs.row(r) = Eigen::Map<const Row>(cval(aid).data(), static_cast<Eigen::Index>(sb.rows));
        rhs.row(r) = Eigen::Map<const Row>(gbuf(oid), static_cast<Eigen::Index>(sb.cols));
      }
      Map(gbuf(bid), sb.rows, sb.cols).noalias() += lhs.transpose() * rhs;
    }
    deferred_.clear();
  }

  std::span<const T> cval(std::uint32_t id) const {
    const Node& n = nodes_[id];
    if (n.param) return n.param->value;
    return n.value;
  }
  T* wval(std::uint32_t id) { return nodes_[id].value.data(); }
  T* gbuf(std::uint32_t id) {
    Node& n = nodes_[id];
    return n.param ? n.param->grad.data() : n.grad.data();
  }

  MapC mapc(Var v) const {
    Shape s = shape(v);
    return MapC(cval(v.id).data(), s.rows, s.cols);
  }
  Map mapw(Var v) {
    Shape s = shape(v);
    return Map(wval(v.id), s.rows, s.cols);
  }
  Map mapg(Var v) {
    Shape s = shape(v);
    return Map(gbuf(v.id), s.rows, s.cols);
  }
  Eigen::Map<const Row> rowmap_c(Var v) const {
    return Eigen::Map<const Row>(cval(v.id).data(), shape(v).cols);
  }
  Eigen::Map<Row> rowmap_w(Var v) { return Eigen::Map<Row>(wval(v.id), shape(v).cols); }
  Eigen::Map<Row> rowmap_g(Var v) { return Eigen::Map<Row>(gbuf(v.id), shape(v).cols); }
  Eigen::Map<const Row> rowmap_g_c(Var v) {
    return Eigen::Map<const Row>(gbuf(v.id), shape(v).cols);
  }
  MapC mapg_c(Var v) {
    Shape s = shape(v);
    return MapC(gbuf(v.id), s.rows, s.cols);
  }

  std::vector<Node> nodes_;
  std::map<const Parameter<T>*, std::uint32_t> param_nodes_;
  std::vector<char> live_;
  std::map<std::uint32_t, std::vector<std::pair<std::uint32_t, std::uint32_t>>> deferred_;
  bool backward_done_ = false;
};

}  // namespace ontopg::ad
