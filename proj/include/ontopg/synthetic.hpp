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

// A small radiology-flavoured ontology and a templated report generator
// whose impressions restate exactly the ontology terms embedded in the
// findings. Used for tests and for end-to-end training runs.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ontopg/corpus.hpp"
#include "ontopg/ontology.hpp"

namespace ontopg {

// Abstract chain at depths 1..7, organs at depth 8, then lateralised and
// sub-part concepts at depths 9 and 10.
inline std::vector<ConceptRecord> synthetic_ontology_records() {
  std::vector<ConceptRecord> recs;
  const std::vector<std::string> chain = {
      "entity",           "anatomical entity", "material anatomical entity",
      "anatomical structure", "organ system",  "organ",
      "organ component"};
  std::optional<std::string> parent;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    std::string id = "A" + std::to_string(i + 1);
    recs.push_back({id, chain[i], {}, parent});
    parent = id;
  }
  struct Organ {
    std::string name;
    std::vector<std::string> synonyms;
    bool paired;
    std::vector<std::string> parts;
  };
  const std::vector<Organ> organs = {
      {"kidney", {"renal"}, true, {"cortex", "pelvis", "upper pole", "lower pole"}},
      {"lung", {"pulmonary"}, true, {"apex", "base", "upper lobe", "lower lobe"}},
      {"liver", {"hepatic"}, false, {"dome", "hilum", "caudate lobe"}},
      {"gallbladder", {}, false, {"wall", "neck", "fundus"}},
      {"pancreas", {}, false, {"head", "tail", "duct"}},
      {"spleen", {"splenic"}, false, {"hilum", "tip"}},
      {"adrenal gland", {}, true, {"limb"}},
      {"hip", {}, true, {"joint", "capsule"}},
      {"pleura", {"pleural space"}, true, {"recess"}},
      {"aorta", {"aortic"}, false, {"root", "arch", "bifurcation"}},
      {"bladder", {"urinary bladder"}, false, {"dome", "trigone"}},
      {"ovary", {"ovarian"}, true, {"follicle"}},
      {"thyroid", {"thyroid gland"}, false, {"isthmus", "nodule bed"}},
      {"common bile duct", {"cbd"}, false, {"lumen"}},
      {"femur", {"femoral"}, true, {"neck", "shaft", "head"}},
      {"lumbar spine", {}, false, {"disc", "facet"}},
      {"thoracolumbar spine", {}, false, {"junction"}},
      {"mediastinum", {"mediastinal"}, false, {"nodes"}},
      {"appendix", {}, false, {"tip"}},
      {"prostate", {}, false, {"apex", "base"}},
  };
  int next = 100;
  auto fresh = [&] { return "R" + std::to_string(next++); };
  for (const auto& o : organs) {
    std::string organ_id = fresh();
    recs.push_back({organ_id, o.name, o.synonyms, std::string("A7")});
    if (o.paired) {
      for (const std::string side : {"left", "right"}) {
        std::string id = fresh();
        recs.push_back({id, side + " " + o.name, {}, organ_id});
      }
    }
    for (const auto& part : o.parts) {
      std::string part_id = fresh();
      recs.push_back({part_id, o.name + " " + part, {}, organ_id});
    }
  }
  return recs;
}

inline Ontology synthetic_ontology() { return Ontology::build(synthetic_ontology_records()); }

struct SyntheticOptions {
  int min_depth = 8;
  std::size_t min_terms = 2;
  std::size_t max_terms = 6;
  std::size_t target_findings_min = 110;
  std::size_t target_findings_max = 165;
};

namespace detail {

template <typename Rng, typename C>
const auto& pick(Rng& rng, const C& c) {
  std::uniform_int_distribution<std::size_t> d(0, c.size() - 1);
  return c[d(rng)];
}

inline void append(Tokens& out, const std::string& text) {
  Tokens t = tokenize(text);
  out.insert(out.end(), t.begin(), t.end());
}

}  // namespace detail

// Deterministic in seed. Findings interleave filler sentences with one
// sentence per embedded term; the impression lists those terms in findings
// order with the severity and finding words copied from their sentence.
inline std::vector<Report> generate_synthetic_corpus(std::uint64_t seed, std::size_t n_reports,
                                                     const Ontology& ontology,
                                                     const SyntheticOptions& opt = {}) {
  ONTOPG_REQUIRE(!ontology.empty(), "generate_synthetic_corpus: empty ontology");
  ONTOPG_REQUIRE(n_reports >= 1, "generate_synthetic_corpus: n_reports must be >= 1");

  // Surface terms of sufficiently deep concepts, deduplicated.
  std::vector<Tokens> terms;
  for (const auto& [term, ids] : ontology.term_index()) {
    bool deep = std::any_of(ids.begin(), ids.end(), [&](const std::string& id) {
      return ontology.at(id).depth >= opt.min_depth;
    });
    if (deep) terms.push_back(term);
  }
  ONTOPG_REQUIRE(terms.size() >= opt.max_terms,
                 "generate_synthetic_corpus: ontology has too few deep terms");

  // Keep only terms that match themselves exactly: a term that is a strict
  // substring of a longer indexed term could otherwise be swallowed by the
  // longer neighbour inside a sentence.
  std::erase_if(terms, [&](const Tokens& t) {
    auto m = match_exact(ontology, t, opt.min_depth);
    return !(m.size() == 1 && m[0].span_start == 0 && m[0].span_end == t.size());
  });

  const std::vector<std::string> severities = {"mild", "moderate", "severe", "small",
                                               "stable", "new", "minimal", "marked"};
  const std::vector<std::string> findings_words = {
      "thickening", "enhancement", "dilatation", "edema",   "calcification",
      "narrowing",  "cyst",        "lesion",     "opacity", "fluid"};
  const std::vector<std::string> filler = {
      "the study is limited by patient motion .",
      "no free fluid is identified in the visualized abdomen .",
      "comparison is made to the prior examination .",
      "the visualized osseous structures are unremarkable .",
      "there is no evidence of acute fracture or dislocation .",
      "soft tissues are within normal limits .",
      "technique : axial images were obtained without contrast .",
      "no suspicious mass is seen .",
      "the bowel loops are normal in caliber .",
      "there is no lymphadenopathy by size criteria .",
      "vascular structures appear patent .",
      "support devices are unchanged in position .",
      "the heart size is normal .",
      "there is no pneumothorax .",
      "degenerative changes are noted without acute abnormality .",
      "examination was performed at the request of the referring clinician .",
      "images are of diagnostic quality .",
      "no interval change is seen in the remaining structures .",
      "the remainder of the examination is otherwise normal .",
      "clinical correlation is recommended for symptoms .",
  };
  const std::vector<std::string> closings = {"no other acute abnormality .",
                                             "otherwise no acute findings .",
                                             "no additional significant abnormality ."};

  std::mt19937_64 rng(seed);
  std::vector<Report> out;
  out.reserve(n_reports);
  for (std::size_t r = 0; r < n_reports; ++r) {
    std::uniform_int_distribution<std::size_t> n_terms_dist(opt.min_terms, opt.max_terms);
    std::size_t n_terms = n_terms_dist(rng);
    std::vector<std::size_t> idx(terms.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n_terms);

    struct Mention {
      std::string term, severity, finding, size;
      int style;
    };
    std::vector<Mention> mentions;
    for (std::size_t i : idx) {
      std::uniform_int_distribution<int> style(0, 2);
      std::uniform_int_distribution<int> mm(1, 99);
      int v = mm(rng);
      mentions.push_back({join(terms[i]), detail::pick(rng, severities),
                          detail::pick(rng, findings_words),
                          std::to_string(v / 10) + "." + std::to_string(v % 10), style(rng)});
    }

    std::uniform_int_distribution<std::size_t> target_dist(opt.target_findings_min,
                                                           opt.target_findings_max);
    std::size_t target = target_dist(rng);

    // Sentence plan: term sentences in order, filler spread between them.
    std::vector<std::string> term_sentences;
    std::size_t term_tokens = 0;
    for (const auto& m : mentions) {
      std::string s;
      switch (m.style) {
        case 0:
          s = "the " + m.term + " shows " + m.severity + " " + m.finding + " .";
          break;
        case 1:
          s = "there is " + m.severity + " " + m.finding + " involving the " + m.term +
              " measuring " + m.size + " cm .";
          break;
        default:
          s = m.severity + " " + m.finding + " of the " + m.term + " is noted .";
          break;
      }
      term_tokens += tokenize(s).size();
      term_sentences.push_back(std::move(s));
    }
    std::vector<std::string> fill;
    std::size_t len = term_tokens;
    while (len < target) {
      const std::string& f = detail::pick(rng, filler);
      len += tokenize(f).size();
      fill.push_back(f);
    }
    std::vector<std::string> sentences;
    {
      std::uniform_int_distribution<std::size_t> slot(0, term_sentences.size());
      std::vector<std::vector<std::string>> gaps(term_sentences.size() + 1);
      for (auto& f : fill) gaps[slot(rng)].push_back(std::move(f));
      for (std::size_t k = 0; k <= term_sentences.size(); ++k) {
        for (auto& f : gaps[k]) sentences.push_back(std::move(f));
        if (k < term_sentences.size()) sentences.push_back(term_sentences[k]);
      }
    }
    std::string findings;
    for (const auto& s : sentences) {
      if (!findings.empty()) findings += ' ';
      findings += s;
    }

    std::string impression;
    for (std::size_t k = 0; k < mentions.size(); ++k) {
      const auto& m = mentions[k];
      if (!impression.empty()) impression += ' ';
      impression += std::to_string(k + 1) + " . " + m.severity + " " + m.finding + " of the " +
                    m.term;
      if (m.style == 1) impression += " measuring " + m.size + " cm";
      impression += " .";
    }
    impression += " " + detail::pick(rng, closings);

    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", r);
    out.push_back(Report::from_text(id, std::move(findings), std::move(impression)));
  }
  return out;
}

}  // namespace ontopg
