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

// Ontology-aware pointer-generator. Separate BiLSTMs encode the source (two
// layers) and the ontology sequence u; a single-layer LSTM decoder attends
// to both. The ontology context c' is concatenated into the
// input of every decoder gate, and also feeds the copy gate and the
// vocabulary projection. With use_ontology = false the same class is the
// plain pointer-generator.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ontopg/autodiff.hpp"
#include "ontopg/corpus.hpp"
#include "ontopg/ontology.hpp"

namespace ontopg {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 100;
  std::size_t enc_hidden = 100;  // per direction
  std::size_t enc_layers = 2;
  std::size_t dec_hidden = 200;
  bool use_ontology = true;
  double dropout = 0.5;
  double init_range = 0.08;
  std::uint64_t init_seed = 1;

  std::size_t enc_out() const { return 2 * enc_hidden; }
  std::size_t onto_out() const { return use_ontology ? 2 * enc_hidden : 0; }
  bool operator==(const ModelConfig&) const = default;
};

// Base vocabulary plus per-example ids for source tokens outside it.
class ExtendedVocabulary {
 public:
  ExtendedVocabulary(const Vocabulary& base, const Tokens& source) : base_(&base) {
    for (const auto& t : source) {
      if (base.contains(t) || index_.contains(t)) continue;
      index_.emplace(t, base.size() + oov_.size());
      oov_.push_back(t);
    }
  }

  std::size_t size() const { return base_->size() + oov_.size(); }
  std::size_t base_size() const { return base_->size(); }
  const std::vector<std::string>& oov_tokens() const { return oov_; }

  // Base id or temporary source-OOV id; UNK otherwise.
  std::size_t id_of(const std::string& t) const {
    if (base_->contains(t)) return base_->id_of(t);
    auto it = index_.find(t);
    return it == index_.end() ? Vocabulary::kUnk : it->second;
  }

  const std::string& token_of(std::size_t id) const {
    if (id < base_->size()) return base_->token_of(id);
    ONTOPG_REQUIRE(id < size(), "extended id " + std::to_string(id) + " out of range " +
                                    std::to_string(size()));
    return oov_[id - base_->size()];
  }

  const Vocabulary& base() const { return *base_; }

 private:
  const Vocabulary* base_;
  std::vector<std::string> oov_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Everything a forward pass needs for one report.
struct Example {
  std::string id;
  std::vector<std::size_t> source_ids;      // base ids, OOV -> UNK
  std::vector<std::size_t> source_ext_ids;  // extended ids
  std::vector<std::size_t> onto_ids;        // base ids of u
  std::vector<std::size_t> target_ext_ids;  // impression + EOS, uncopyable OOV -> UNK
  ExtendedVocabulary ext;
  Tokens source_tokens;
  OntologySequence u;
};

inline Example make_example(const Report& report, const OntologySequence& u,
                            const Vocabulary& vocab) {
  ONTOPG_REQUIRE(!report.findings_tokens.empty(), "report " + report.id + " has no findings");
  Example ex{report.id, {}, {}, {}, {}, ExtendedVocabulary(vocab, report.findings_tokens),
             report.findings_tokens, u};
  for (const auto& t : report.findings_tokens) {
    ex.source_ids.push_back(vocab.id_of(t));
    ex.source_ext_ids.push_back(ex.ext.id_of(t));
  }
  for (const auto& t : u.tokens)
    ex.onto_ids.push_back(t == kNoConceptToken ? Vocabulary::kNoConcept : vocab.id_of(t));
  for (const auto& t : report.impression_tokens) ex.target_ext_ids.push_back(ex.ext.id_of(t));
  if (!report.impression_tokens.empty()) ex.target_ext_ids.push_back(Vocabulary::kEos);
  return ex;
}

template <typename T>
class Model {
 public:
  using G = ad::Graph<T>;
  using Var = typename G::Var;

  struct Encoded {
    Var states;  // n x enc_out
    Var final_fw;
    Var final_bw;
  };

  struct DecoderState {
    Var h;
    Var c;
  };

  struct Context {
    Encoded source;
    std::optional<Encoded> onto;
    std::vector<std::size_t> source_ext_ids;
    std::size_t ext_size = 0;
    DecoderState init;
  };

  struct Step {
    DecoderState state;
    Var dist;        // 1 x ext_size
    Var attn;        // 1 x n
    Var onto_attn;   // 1 x n', only with the ontology pathway
    Var context;
    Var onto_context;
    Var p_gen;
  };

  Model() = default;

  Model(const ModelConfig& cfg, const Vocabulary& vocab,
        const EmbeddingTable* embeddings = nullptr)
      : cfg_(cfg), vocab_(vocab) {
    cfg_.vocab_size = vocab.size();
    init_parameters(embeddings);
  }

  // Rebuilds around an existing parameter set (checkpoint load, casts).
  Model(const ModelConfig& cfg, const Vocabulary& vocab, ad::ParameterSet<T> params)
      : cfg_(cfg), vocab_(vocab), params_(std::move(params)) {
    cfg_.vocab_size = vocab.size();
    verify_parameter_shapes();
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ad::ParameterSet<T>& params() { return params_; }
  const ad::ParameterSet<T>& params() const { return params_; }

  // ---- encoders -----------------------------------------------------------

  template <typename Rng = std::mt19937_64>
  Encoded encode(G& g, const std::vector<std::size_t>& ids, Rng* dropout_rng = nullptr) {
    return encode_with(g, ids, "enc", dropout_rng);
  }

  template <typename Rng = std::mt19937_64>
  Encoded encode_ontology(G& g, const std::vector<std::size_t>& ids,
                          Rng* dropout_rng = nullptr) {
    ONTOPG_REQUIRE(cfg_.use_ontology, "encode_ontology on a model without ontology pathway");
    return encode_with(g, ids, "onto_enc", dropout_rng);
  }

  // H (n x d) against bilinear map W (dec x d) and state s (1 x dec):
  // weights = softmax(s W H^T), context = weights H.
  std::pair<Var, Var> attention(G& g, Var states, Var s, Var w) {
    ad::Shape sh = g.shape(states), ss = g.shape(s), sw = g.shape(w);
    ONTOPG_REQUIRE(ss.rows == 1 && sw.rows == ss.cols && sw.cols == sh.cols,
                   "attention: states " + sh.str() + ", state " + ss.str() + ", map " +
                       sw.str());
    Var scores = g.matmul_nt(g.matmul(s, w), states);
    Var weights = g.softmax(scores);
    return {weights, g.weighted_sum(weights, states)};
  }

  // ---- decoder ------------------------------------------------------------

  template <typename Rng = std::mt19937_64>
  Context start(G& g, const Example& ex, Rng* dropout_rng = nullptr) {
    Context ctx;
    ctx.source = encode(g, ex.source_ids, dropout_rng);
    if (cfg_.use_ontology) ctx.onto = encode_ontology(g, ex.onto_ids, dropout_rng);
    ctx.source_ext_ids = ex.source_ext_ids;
    ctx.ext_size = ex.ext.size();
    Var fin = g.concat({ctx.source.final_fw, ctx.source.final_bw});
    ctx.init.h = g.tanh(g.add(g.matmul(fin, p(g, "bridge.h.W")), p(g, "bridge.h.b")));
    ctx.init.c = g.tanh(g.add(g.matmul(fin, p(g, "bridge.c.W")), p(g, "bridge.c.b")));
    return ctx;
  }

  // One decoder transition: all four gate transforms read [s_{t-1}; x'_t; c'].
  DecoderState decoder_cell(G& g, const DecoderState& prev, Var x_emb,
                            std::optional<Var> onto_context) {
    std::vector<Var> parts = {prev.h, x_emb};
    if (cfg_.use_ontology) {
      ONTOPG_REQUIRE(onto_context.has_value(), "decoder_cell: missing ontology context");
      ONTOPG_REQUIRE(g.shape(*onto_context) == (ad::Shape{1, cfg_.onto_out()}),
                     "decoder_cell: ontology context shape " + g.shape(*onto_context).str() +
                         ", expected " + ad::Shape{1, cfg_.onto_out()}.str());
      parts.push_back(*onto_context);
    }
    Var in = g.concat(parts);
    ONTOPG_REQUIRE(g.shape(in).cols == g.shape(p(g, "dec.W")).rows,
                   "decoder_cell: input " + g.shape(in).str() + " vs gate weights " +
                       g.shape(p(g, "dec.W")).str());
    Var z = g.add(g.matmul(in, p(g, "dec.W")), p(g, "dec.b"));
    Var cell = g.lstm_cell(z, prev.c);
    const std::size_t d = cfg_.dec_hidden;
    return {g.slice_cols(cell, 0, d), g.slice_cols(cell, d, 2 * d)};
  }

  // prev_token is an extended id; copied OOVs feed the UNK embedding.
  template <typename Rng = std::mt19937_64>
  Step decoder_step(G& g, const Context& ctx, const DecoderState& prev, std::size_t prev_token,
                    Rng* dropout_rng = nullptr) {
    Step st;
    std::size_t in_id = prev_token < cfg_.vocab_size ? prev_token : Vocabulary::kUnk;
    Var x = g.gather_rows(p(g, "embedding"), {in_id});
    if (dropout_rng) x = g.dropout(x, cfg_.dropout, *dropout_rng);

    std::optional<Var> c_onto;
    if (cfg_.use_ontology) {
      auto [w, c] = attention(g, ctx.onto->states, prev.h, p(g, "attn_onto.W"));
      st.onto_attn = w;
      st.onto_context = c;
      c_onto = c;
    }
    st.state = decoder_cell(g, prev, x, c_onto);
    Var s = st.state.h;
    if (dropout_rng) s = g.dropout(s, cfg_.dropout, *dropout_rng);

    auto [a, c] = attention(g, ctx.source.states, s, p(g, "attn_source.W"));
    st.attn = a;
    st.context = c;

    std::vector<Var> proj_in = {s, c};
    std::vector<Var> gate_in = {c};
    if (c_onto) {
      proj_in.push_back(*c_onto);
      gate_in.push_back(*c_onto);
    }
    gate_in.push_back(s);
    gate_in.push_back(x);
    Var vocab_dist = g.softmax(g.add(g.matmul(g.concat(proj_in), p(g, "out.W")), p(g, "out.b")));
    st.p_gen = g.sigmoid(g.add(g.matmul(g.concat(gate_in), p(g, "pgen.w")), p(g, "pgen.b")));
    st.dist = output_distribution(g, st.p_gen, vocab_dist, a, ctx.source_ext_ids, ctx.ext_size);
    return st;
  }

  // P(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i: x_i = w} a_i
  static Var output_distribution(G& g, Var p_gen, Var vocab_dist, Var attn,
                                 const std::vector<std::size_t>& source_ext_ids,
                                 std::size_t ext_size) {
    Var gen = g.pad_cols(vocab_dist, ext_size);
    Var copy = g.scatter_add(attn, source_ext_ids, ext_size);
    return g.scalar_mix(p_gen, gen, copy);
  }

  struct TeacherForced {
    Var loss;  // mean negative log-likelihood over target steps
    std::vector<Step> steps;
  };

  // Teacher-forced pass. Only the gates and the ontology attention depend
  // on the previous state, so source attention, the vocabulary projection
  // and the copy gate are computed for all steps at once.
  template <typename Rng = std::mt19937_64>
  TeacherForced forward_teacher_forced(G& g, const Example& ex, Rng* dropout_rng = nullptr) {
    ONTOPG_REQUIRE(!ex.target_ext_ids.empty(), "example " + ex.id + " has no impression");
    Context ctx = start(g, ex, dropout_rng);
    const std::size_t steps = ex.target_ext_ids.size();
    std::vector<std::size_t> inputs = {Vocabulary::kBos};
    for (std::size_t t = 0; t + 1 < steps; ++t) inputs.push_back(ex.target_ext_ids[t]);
    for (std::size_t& id : inputs)
      if (id >= cfg_.vocab_size) id = Vocabulary::kUnk;
    Var xs = g.gather_rows(p(g, "embedding"), inputs);
    if (dropout_rng) xs = g.dropout(xs, cfg_.dropout, *dropout_rng);

    TeacherForced out;
    out.steps.resize(steps);
    DecoderState state = ctx.init;
    std::vector<Var> hs, onto_ctx;
    for (std::size_t t = 0; t < steps; ++t) {
      std::optional<Var> c_onto;
      if (cfg_.use_ontology) {
        auto [w, c] = attention(g, ctx.onto->states, state.h, p(g, "attn_onto.W"));
        out.steps[t].onto_attn = w;
        out.steps[t].onto_context = c;
        c_onto = c;
        onto_ctx.push_back(c);
      }
      state = decoder_cell(g, state, g.row(xs, t), c_onto);
      out.steps[t].state = state;
      hs.push_back(state.h);
    }
    Var s_all = g.stack_rows(hs);
    if (dropout_rng) s_all = g.dropout(s_all, cfg_.dropout, *dropout_rng);
    Var attn = g.softmax(g.matmul_nt(g.matmul(s_all, p(g, "attn_source.W")), ctx.source.states));
    Var contexts = g.matmul(attn, ctx.source.states);
    std::vector<Var> proj_in = {s_all, contexts};
    std::vector<Var> gate_in = {contexts};
    if (cfg_.use_ontology) {
      Var onto_all = g.stack_rows(onto_ctx);
      proj_in.push_back(onto_all);
      gate_in.push_back(onto_all);
    }
    gate_in.push_back(s_all);
    gate_in.push_back(xs);
    Var vocab_dist =
        g.softmax(g.add_rowwise(g.matmul(g.concat(proj_in), p(g, "out.W")), p(g, "out.b")));
    Var p_gen =
        g.sigmoid(g.add_rowwise(g.matmul(g.concat(gate_in), p(g, "pgen.w")), p(g, "pgen.b")));

    std::vector<Var> nll;
    for (std::size_t t = 0; t < steps; ++t) {
      Step& st = out.steps[t];
      st.attn = g.row(attn, t);
      st.context = g.row(contexts, t);
      st.p_gen = g.row(p_gen, t);
      st.dist = output_distribution(g, st.p_gen, g.row(vocab_dist, t), st.attn,
                                    ctx.source_ext_ids, ctx.ext_size);
      nll.push_back(g.neg_log_pick(st.dist, ex.target_ext_ids[t]));
    }
    out.loss = g.scale(g.add_n(nll), T{1} / static_cast<T>(nll.size()));
    return out;
  }

  // Same loss through repeated decoder_step calls, as used at inference.
  template <typename Rng = std::mt19937_64>
  TeacherForced forward_stepwise(G& g, const Example& ex, Rng* dropout_rng = nullptr) {
    ONTOPG_REQUIRE(!ex.target_ext_ids.empty(), "example " + ex.id + " has no impression");
    Context ctx = start(g, ex, dropout_rng);
    TeacherForced out;
    DecoderState state = ctx.init;
    std::size_t prev = Vocabulary::kBos;
    std::vector<Var> nll;
    for (std::size_t gold : ex.target_ext_ids) {
      Step st = decoder_step(g, ctx, state, prev, dropout_rng);
      nll.push_back(g.neg_log_pick(st.dist, gold));
      state = st.state;
      prev = gold;
      out.steps.push_back(st);
    }
    out.loss = g.scale(g.add_n(nll), T{1} / static_cast<T>(nll.size()));
    return out;
  }

  // Loss value without keeping the graph around.
  T loss(const Example& ex) {
    G g;
    return g.scalar(forward_teacher_forced(g, ex).loss);
  }

  // ---- ontology pathway surgery -------------------------------------------

  // Row ranges (in this model's matrices) that read c'.
  struct OntologyRows {
    std::size_t dec_begin, dec_end, out_begin, out_end, pgen_begin, pgen_end;
  };
  OntologyRows ontology_rows() const {
    ONTOPG_REQUIRE(cfg_.use_ontology, "model has no ontology pathway");
    const std::size_t d = cfg_.dec_hidden, e = cfg_.embed_dim, h = cfg_.enc_out(),
                      o = cfg_.onto_out();
    return {d + e, d + e + o, d + h, d + h + o, h, h + o};
  }

  // Zeroes every parameter block that consumes c'.
  void zero_ontology_inputs() {
    OntologyRows r = ontology_rows();
    zero_rows(params_.at("dec.W"), r.dec_begin, r.dec_end);
    zero_rows(params_.at("out.W"), r.out_begin, r.out_end);
    zero_rows(params_.at("pgen.w"), r.pgen_begin, r.pgen_end);
  }

  // The plain pointer-generator obtained by deleting the ontology pathway.
  Model without_ontology() const {
    OntologyRows r = ontology_rows();
    ModelConfig plain = cfg_;
    plain.use_ontology = false;
    ad::ParameterSet<T> ps;
    for (const auto& [name, prm] : params_) {
      if (name.starts_with("onto_enc.") || name == "attn_onto.W") continue;
      std::pair<std::size_t, std::size_t> cut{0, 0};
      if (name == "dec.W") cut = {r.dec_begin, r.dec_end};
      if (name == "out.W") cut = {r.out_begin, r.out_end};
      if (name == "pgen.w") cut = {r.pgen_begin, r.pgen_end};
      std::size_t removed = cut.second - cut.first;
      auto& q = ps.add(name, {prm.shape.rows - removed, prm.shape.cols});
      std::size_t dst = 0;
      for (std::size_t row = 0; row < prm.shape.rows; ++row) {
        if (row >= cut.first && row < cut.second) continue;
        std::copy_n(prm.value.begin() + row * prm.shape.cols, prm.shape.cols,
                    q.value.begin() + dst * prm.shape.cols);
        ++dst;
      }
    }
    return Model(plain, vocab_, std::move(ps));
  }

  // Expected parameter shapes for a configuration.
  static std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const ModelConfig& c) {
    std::vector<std::pair<std::string, ad::Shape>> out;
    out.push_back({"embedding", {c.vocab_size, c.embed_dim}});
    auto lstm = [&](const std::string& prefix) {
      for (std::size_t l = 0; l < c.enc_layers; ++l) {
        std::size_t in = l == 0 ? c.embed_dim : 2 * c.enc_hidden;
        for (const char* dir : {"fw", "bw"}) {
          std::string base = prefix + ".l" + std::to_string(l) + "." + dir;
          out.push_back({base + ".Wx", {in, 4 * c.enc_hidden}});
          out.push_back({base + ".Wh", {c.enc_hidden, 4 * c.enc_hidden}});
          out.push_back({base + ".b", {1, 4 * c.enc_hidden}});
        }
      }
    };
    lstm("enc");
    if (c.use_ontology) {
      lstm("onto_enc");
      out.push_back({"attn_onto.W", {c.dec_hidden, c.onto_out()}});
    }
    out.push_back({"bridge.h.W", {c.enc_out(), c.dec_hidden}});
    out.push_back({"bridge.h.b", {1, c.dec_hidden}});
    out.push_back({"bridge.c.W", {c.enc_out(), c.dec_hidden}});
    out.push_back({"bridge.c.b", {1, c.dec_hidden}});
    out.push_back({"attn_source.W", {c.dec_hidden, c.enc_out()}});
    out.push_back(
        {"dec.W", {c.dec_hidden + c.embed_dim + c.onto_out(), 4 * c.dec_hidden}});
    out.push_back({"dec.b", {1, 4 * c.dec_hidden}});
    out.push_back({"out.W", {c.dec_hidden + c.enc_out() + c.onto_out(), c.vocab_size}});
    out.push_back({"out.b", {1, c.vocab_size}});
    out.push_back(
        {"pgen.w", {c.enc_out() + c.onto_out() + c.dec_hidden + c.embed_dim, 1}});
    out.push_back({"pgen.b", {1, 1}});
    return out;
  }

 private:
  Var p(G& g, const std::string& name) { return g.param(params_.at(name)); }

  template <typename Rng>
  Encoded encode_with(G& g, const std::vector<std::size_t>& ids, const std::string& prefix,
                      Rng* dropout_rng) {
    ONTOPG_REQUIRE(!ids.empty(), prefix + ": empty input sequence");
    for (std::size_t id : ids)
      ONTOPG_REQUIRE(id < cfg_.vocab_size, prefix + ": id " + std::to_string(id) +
                                               " out of range " +
                                               std::to_string(cfg_.vocab_size));
    Var x = g.gather_rows(p(g, "embedding"), ids);
    if (dropout_rng) x = g.dropout(x, cfg_.dropout, *dropout_rng);
    const std::size_t n = ids.size();
    Encoded enc{};
    for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
      Var dirs[2];
      for (int dir = 0; dir < 2; ++dir) {
        std::string base = prefix + ".l" + std::to_string(l) + (dir == 0 ? ".fw" : ".bw");
        Var zx = g.matmul(x, p(g, base + ".Wx"));
        dirs[dir] = g.lstm_sequence(zx, p(g, base + ".Wh"), p(g, base + ".b"), dir == 1);
      }
      x = g.concat({dirs[0], dirs[1]});
      if (dropout_rng) x = g.dropout(x, cfg_.dropout, *dropout_rng);
      enc.final_fw = g.row(dirs[0], n - 1);
      enc.final_bw = g.row(dirs[1], 0);
    }
    enc.states = x;
    return enc;
  }

  static void zero_rows(ad::Parameter<T>& prm, std::size_t begin, std::size_t end) {
    std::fill(prm.value.begin() + begin * prm.shape.cols,
              prm.value.begin() + end * prm.shape.cols, T{0});
  }

  void init_parameters(const EmbeddingTable* embeddings) {
    for (const auto& [name, shape] : parameter_layout(cfg_)) {
      bool bias = name.ends_with(".b");
      if (bias) {
        params_.add(name, shape);
      } else if (name == "embedding") {
        auto& e = params_.add_uniform(name, shape, cfg_.init_seed, 0.1);
        if (embeddings) {
          ONTOPG_REQUIRE(embeddings->dimension == cfg_.embed_dim &&
                             embeddings->rows() == cfg_.vocab_size,
                         "embedding table does not match vocabulary/dimension");
          std::transform(embeddings->vectors.begin(), embeddings->vectors.end(),
                         e.value.begin(), [](double v) { return static_cast<T>(v); });
        }
      } else {
        params_.add_uniform(name, shape, cfg_.init_seed, cfg_.init_range);
      }
    }
  }

  void verify_parameter_shapes() const {
    for (const auto& [name, shape] : parameter_layout(cfg_)) {
      if (!params_.contains(name)) throw FormatError("missing parameter " + name);
      if (!(params_.at(name).shape == shape))
        throw FormatError("parameter " + name + " has shape " + params_.at(name).shape.str() +
                          ", expected " + shape.str());
    }
    if (params_.size() != parameter_layout(cfg_).size())
      throw FormatError("unexpected extra parameters in set");
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  ad::ParameterSet<T> params_;
};

}  // namespace ontopg
