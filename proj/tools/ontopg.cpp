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

// ontopg: command-line driver for corpus generation, concept matching,
// training, decoding, extractive baselines and scoring.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ontopg/baselines.hpp"
#include "ontopg/checkpoint.hpp"
#include "ontopg/experiment.hpp"
#include "ontopg/gradcheck.hpp"

using namespace ontopg;
using json = nlohmann::json;

namespace {

// Config file first, then any flags given on the command line.
struct Settings {
  std::string config_path;
  KeyValues overrides;

  KeyValues merged(const KeyValues& base) const {
    KeyValues kv = base;
    if (!config_path.empty()) {
      KeyValues file = KeyValues::load(config_path);
      for (const auto& [k, v] : file.values()) kv.set(k, v);
    }
    for (const auto& [k, v] : overrides.values()) kv.set(k, v);
    return kv;
  }
};

void flag(CLI::App* sub, Settings& s, const std::string& name, const std::string& key,
          const std::string& help) {
  sub->add_option_function<std::string>(
      name, [&s, key](const std::string& v) { s.overrides.set(key, v); }, help);
}

void config_flag(CLI::App* sub, Settings& s) {
  sub->add_option("--config", s.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
}

void matcher_flags(CLI::App* sub, Settings& s) {
  flag(sub, s, "--matcher", "matcher", "exact or fuzzy");
  flag(sub, s, "--min-depth", "min_depth", "minimum concept depth for exact matching");
  flag(sub, s, "--jaccard", "jaccard", "fuzzy matching threshold");
  flag(sub, s, "--window", "window", "longest span tried by the fuzzy matcher");
}

void decode_flags(CLI::App* sub, Settings& s) {
  flag(sub, s, "--beam", "beam", "beam width");
  flag(sub, s, "--max-len", "max_len", "longest summary in tokens");
}

void announce(const ExperimentConfig& cfg) {
  std::cerr << "# resolved configuration\n";
  std::istringstream lines(cfg.to_key_values().str());
  for (std::string line; std::getline(lines, line);) std::cerr << "#   " << line << '\n';
  std::cerr << "# seed " << cfg.train.seed << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

// Writes to the file if one was named, otherwise to stdout.
template <typename F>
void emit(const std::string& path, F&& body) {
  if (path.empty()) {
    body(std::cout);
  } else {
    auto out = open_out(path);
    body(out);
  }
}

std::optional<Ontology> ontology_for(const ExperimentConfig& cfg, const std::string& path) {
  if (!cfg.model.use_ontology) return std::nullopt;
  if (path.empty()) throw ConfigError("--ontology: required when use_ontology is true");
  return load_ontology(path);
}

struct LoadedModel {
  Checkpoint ck;
  ExperimentConfig cfg;
  std::unique_ptr<Model<float>> model;
};

LoadedModel load_model(const std::string& path, const Settings& s) {
  LoadedModel m;
  m.ck = load_checkpoint(path);
  m.cfg = ExperimentConfig::from(s.merged(m.ck.config));
  m.model = std::make_unique<Model<float>>(m.cfg.model, m.ck.vocab, m.ck.params.cast<float>());
  return m;
}

// Summary text keyed by id: "summary" when present, else "impression".
std::vector<std::pair<std::string, Tokens>> read_texts(const std::string& path) {
  std::vector<std::pair<std::string, Tokens>> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    const char* field = j.contains("summary") ? "summary" : "impression";
    if (!j.contains("id") || !j.contains(field))
      throw FormatError(path + ":" + std::to_string(line) + ": needs id and summary or impression");
    out.emplace_back(j["id"].get<std::string>(), tokenize(j[field].get<std::string>()));
  }
  return out;
}

json match_json(const ConceptMatch& m) {
  return {{"concept", m.concept_id}, {"start", m.span_start}, {"end", m.span_end},
          {"tokens", m.matched_tokens}, {"score", m.score}};
}

// ---- subcommands ------------------------------------------------------------

int gen_synthetic(const std::string& out_dir, std::uint64_t seed, std::size_t n_train,
                  std::size_t n_dev, std::size_t n_test) {
  std::cerr << "# seed " << seed << "\n# sizes train " << n_train << " dev " << n_dev << " test "
            << n_test << '\n';
  std::filesystem::create_directories(out_dir);
  auto records = synthetic_ontology_records();
  write_ontology(out_dir + "/ontology.jsonl", records);
  auto onto = Ontology::build(records);
  auto s = synthetic_splits(seed, n_train, n_dev, n_test, onto);
  write_dataset(out_dir + "/train.jsonl", s.train);
  write_dataset(out_dir + "/dev.jsonl", s.dev);
  write_dataset(out_dir + "/test.jsonl", s.test);
  return 0;
}

int match(const Settings& s, const std::string& ontology_path, const std::string& input,
          const std::string& out_path) {
  auto cfg = ExperimentConfig::from(s.merged({}));
  announce(cfg);
  auto onto = load_ontology(ontology_path);
  OntologyLinker linker(onto, cfg.matcher);
  auto reports = read_dataset(input);
  emit(out_path, [&](std::ostream& out) {
    for (const auto& r : reports) {
      auto ms = linker.matches(r.findings_tokens);
      json j{{"id", r.id},
             {"u", map_to_ontology_sequence(ms, r.findings_tokens).tokens},
             {"matches", json::array()}};
      for (const auto& m : ms) j["matches"].push_back(match_json(m));
      out << j.dump() << '\n';
    }
  });
  return 0;
}

int train_cmd(const Settings& s, const std::string& train_path, const std::string& dev_path,
              const std::string& ontology_path, const std::string& out_dir) {
  if (!s.overrides.has("seed")) throw ConfigError("--seed: required for training");
  auto cfg = ExperimentConfig::from(s.merged({}));
  announce(cfg);
  Splits splits{read_dataset(train_path), read_dataset(dev_path), {}};
  auto onto = ontology_for(cfg, ontology_path);
  auto data = prepare_data(splits, onto ? &*onto : nullptr, cfg);
  std::optional<EmbeddingTable> table;
  if (!cfg.embeddings_path.empty())
    table = load_embeddings(cfg.embeddings_path, *data.vocab, cfg.model.embed_dim, cfg.train.seed);
  Model<float> model(cfg.model, *data.vocab, table ? &*table : nullptr);
  std::cerr << "# vocabulary " << data.vocab->size() << ", train " << data.train.size()
            << ", dev " << data.dev.size() << '\n';
  std::filesystem::create_directories(out_dir);
  auto kv = cfg.to_key_values();
  { open_out(out_dir + "/config.resolved") << kv.str(); }
  auto result = train(model, data.train, data.dev, cfg.train, out_dir, kv,
                      [](const MetricRecord& m) { std::cout << m.to_json().dump() << std::endl; });
  write_metrics(out_dir + "/metrics.jsonl", result.metrics);
  std::cerr << "# best dev loss " << result.best_dev_loss << " after " << result.epochs_run
            << " epochs; checkpoint " << result.checkpoint_path << '\n';
  return 0;
}

int summarize(const Settings& s, const std::string& checkpoint, const std::string& input,
              const std::string& ontology_path, const std::string& out_path, bool greedy) {
  auto m = load_model(checkpoint, s);
  announce(m.cfg);
  auto onto = ontology_for(m.cfg, ontology_path);
  auto examples = prepare_split(read_dataset(input), m.ck.vocab, onto ? &*onto : nullptr, m.cfg);
  emit(out_path, [&](std::ostream& out) {
    for (const auto& ex : examples) {
      Hypothesis best;
      if (greedy) {
        ModelScorer<float> scorer(*m.model, ex);
        best = greedy_decode(scorer, m.cfg.decode.max_len);
      } else {
        best = beam_search(*m.model, ex, beam_options(m.cfg.decode)).front();
      }
      out << json{{"id", ex.id}, {"summary", detokenize(best.tokens, ex.ext)}}.dump() << '\n';
    }
  });
  return 0;
}

int baseline(const Settings& s, const std::string& method, const std::string& input,
             const std::string& out_path) {
  auto cfg = ExperimentConfig::from(s.merged({}));
  announce(cfg);
  auto reports = read_dataset(input);
  emit(out_path, [&](std::ostream& out) {
    for (const auto& r : reports) {
      auto sents = split_sentences(r.findings_tokens);
      auto picked = method == "lexrank" ? lexrank(sents, cfg.top_k).selected
                                        : lsa_summarize(sents, cfg.top_k).selected;
      out << json{{"id", r.id}, {"summary", join(join_selected(sents, picked))}}.dump() << '\n';
    }
  });
  return 0;
}

int evaluate(const Settings& s, const std::string& system, const std::string& reference,
             const std::string& compare, const std::string& per_report) {
  announce(ExperimentConfig::from(s.merged({})));
  auto refs = read_texts(reference);
  auto base = corpus_rouge(align_by_id(read_texts(system), refs));
  auto row = [](const char* name, const RougeComponent& c) {
    std::printf("%-8s P %6.2f  R %6.2f  F1 %6.2f\n", name, c.precision, c.recall, c.f1);
  };
  std::printf("%s (%zu reports)\n", system.c_str(), base.ids.size());
  row("ROUGE-1", base.mean.rouge1);
  row("ROUGE-2", base.mean.rouge2);
  row("ROUGE-L", base.mean.rougeL);
  if (!per_report.empty()) {
    auto out = open_out(per_report);
    for (std::size_t i = 0; i < base.ids.size(); ++i) {
      const auto& r = base.per_report[i];
      out << json{{"id", base.ids[i]},
                  {"rouge1", r.rouge1.f1},
                  {"rouge2", r.rouge2.f1},
                  {"rougeL", r.rougeL.f1}}
                 .dump()
          << '\n';
    }
  }
  if (compare.empty()) return 0;
  auto other = corpus_rouge(align_by_id(read_texts(compare), refs));
  std::map<std::string, const RougeScore*> by_id;
  for (std::size_t i = 0; i < other.ids.size(); ++i) by_id[other.ids[i]] = &other.per_report[i];
  std::printf("%s (%zu reports)\n", compare.c_str(), other.ids.size());
  row("ROUGE-1", other.mean.rouge1);
  row("ROUGE-2", other.mean.rouge2);
  row("ROUGE-L", other.mean.rougeL);
  std::printf("paired t-test on per-report F1, first minus second\n");
  for (auto [name, part] : {std::pair{"ROUGE-1", &RougeScore::rouge1},
                            std::pair{"ROUGE-2", &RougeScore::rouge2},
                            std::pair{"ROUGE-L", &RougeScore::rougeL}}) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < base.ids.size(); ++i) {
      a.push_back((base.per_report[i].*part).f1);
      b.push_back((by_id.at(base.ids[i])->*part).f1);
    }
    auto t = paired_t_test(a, b);
    std::printf("%-8s t %8.3f  df %zu  p %.4g\n", name, t.t, t.df, t.p_value);
  }
  return 0;
}

int export_attention(const Settings& s, const std::string& checkpoint, const std::string& input,
                     const std::string& ontology_path, const std::string& id,
                     const std::string& out_path) {
  auto m = load_model(checkpoint, s);
  announce(m.cfg);
  auto onto = ontology_for(m.cfg, ontology_path);
  auto reports = read_dataset(input);
  auto it = std::find_if(reports.begin(), reports.end(),
                         [&](const Report& r) { return id.empty() || r.id == id; });
  if (it == reports.end()) throw ConfigError("--id: no report with id '" + id + "' in " + input);
  auto examples = prepare_split({*it}, m.ck.vocab, onto ? &*onto : nullptr, m.cfg);
  if (examples.empty()) throw FormatError("report " + it->id + " has no findings");
  const auto& ex = examples.front();
  auto best = beam_search(*m.model, ex, beam_options(m.cfg.decode)).front();
  std::vector<ConceptMatch> matches;
  if (onto) matches = match_exact(*onto, ex.source_tokens, m.cfg.matcher.min_depth);
  auto trace = attention_trace(ex.source_tokens, best.attention, matches);
  std::cerr << "# report " << ex.id << ": " << detokenize(best.tokens, ex.ext) << '\n';
  emit(out_path, [&](std::ostream& out) { write_attention_tsv(out, trace); });
  return 0;
}

int gradcheck(std::uint64_t seed, std::size_t models) {
  std::cerr << "# seed " << seed << '\n';
  double worst = 0;
  for (bool ontology : {true, false}) {
    for (std::uint64_t k = 0; k < models; ++k) {
      auto setup = tiny_setup(seed + k, 1, ontology);
      Model<double> m(setup.config, setup.vocab);
      auto rep = check_gradients(m, setup.examples[0]);
      std::printf("%s model, seed %llu\n", ontology ? "ontology" : "plain",
                  static_cast<unsigned long long>(seed + k));
      for (const auto& p : rep.parameters)
        std::printf("  %-22s %6zu elements  max rel error %.3e\n", p.name.c_str(), p.elements,
                    p.max_rel_error);
      worst = std::max(worst, rep.max_rel_error);
    }
  }
  bool ok = worst < 1e-4;
  std::printf("max relative error %.3e: %s\n", worst, ok ? "ok" : "FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ontology-aware pointer-generator summarization of radiology findings"};
  app.require_subcommand(1);
  Settings settings;
  std::string ontology, input, output, checkpoint, out_dir, report_id;
  std::uint64_t seed = 7;
  std::size_t n_train = 2000, n_dev = 200, n_test = 200, gc_models = 2;

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic ontology and corpus");
  gen->add_option("--out-dir", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "corpus seed")->capture_default_str();
  gen->add_option("--train-size", n_train)->capture_default_str();
  gen->add_option("--dev-size", n_dev)->capture_default_str();
  gen->add_option("--test-size", n_test)->capture_default_str();

  auto* mat = app.add_subcommand("match", "link report findings to ontology concepts");
  config_flag(mat, settings);
  matcher_flags(mat, settings);
  mat->add_option("--ontology", ontology, "ontology JSONL")->required();
  mat->add_option("--input", input, "reports JSONL")->required();
  mat->add_option("--out", output, "output JSONL (default stdout)");

  auto* trn = app.add_subcommand("train", "train a summarizer");
  config_flag(trn, settings);
  flag(trn, settings, "--seed", "seed", "training seed (required)");
  matcher_flags(trn, settings);
  trn->add_option("--train", input, "training reports JSONL")->required();
  std::string dev_path;
  trn->add_option("--dev", dev_path, "development reports JSONL")->required();
  trn->add_option("--ontology", ontology, "ontology JSONL");
  trn->add_option("--out-dir", out_dir, "directory for checkpoint and logs")->required();

  bool greedy = false;
  auto* sum = app.add_subcommand("summarize", "decode impressions with a trained model");
  config_flag(sum, settings);
  matcher_flags(sum, settings);
  decode_flags(sum, settings);
  sum->add_option("--checkpoint", checkpoint)->required();
  sum->add_option("--input", input, "reports JSONL")->required();
  sum->add_option("--ontology", ontology, "ontology JSONL");
  sum->add_option("--out", output, "output JSONL (default stdout)");
  sum->add_flag("--greedy", greedy, "stepwise argmax instead of beam search");

  std::string method;
  auto* base = app.add_subcommand("baseline", "extractive LexRank or LSA summaries");
  config_flag(base, settings);
  flag(base, settings, "--top-k", "top_k", "sentences to select");
  base->add_option("--method", method)->required()->check(CLI::IsMember({"lexrank", "lsa"}));
  base->add_option("--input", input, "reports JSONL")->required();
  base->add_option("--out", output, "output JSONL (default stdout)");

  std::string system, reference, compare, per_report;
  auto* ev = app.add_subcommand("evaluate", "ROUGE against reference impressions");
  config_flag(ev, settings);
  ev->add_option("--system", system, "JSONL with id and summary")->required();
  ev->add_option("--reference", reference, "JSONL with id and impression")->required();
  ev->add_option("--compare", compare, "second system for a paired t-test");
  ev->add_option("--per-report", per_report, "write per-report F1 scores here");

  auto* att = app.add_subcommand("export-attention", "mean source attention for one report");
  config_flag(att, settings);
  matcher_flags(att, settings);
  decode_flags(att, settings);
  att->add_option("--checkpoint", checkpoint)->required();
  att->add_option("--input", input, "reports JSONL")->required();
  att->add_option("--ontology", ontology, "ontology JSONL");
  att->add_option("--id", report_id, "report id (default: first report)");
  att->add_option("--out", output, "output TSV (default stdout)");

  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter");
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--models", gc_models, "models per variant")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return gen_synthetic(out_dir, seed, n_train, n_dev, n_test);
    if (*mat) return match(settings, ontology, input, output);
    if (*trn) return train_cmd(settings, input, dev_path, ontology, out_dir);
    if (*sum) return summarize(settings, checkpoint, input, ontology, output, greedy);
    if (*base) return baseline(settings, method, input, output);
    if (*ev) return evaluate(settings, system, reference, compare, per_report);
    if (*att) return export_attention(settings, checkpoint, input, ontology, report_id, output);
    if (*gc) return gradcheck(gc_seed, gc_models);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
