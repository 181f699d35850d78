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

// Turns reports into model examples by way of the ontology linker.

#include <optional>
#include <string>
#include <vector>

#include "ontopg/corpus.hpp"
#include "ontopg/model.hpp"
#include "ontopg/ontology.hpp"

namespace ontopg {

class OntologyLinker {
 public:
  OntologyLinker(const Ontology& ontology, MatcherConfig cfg)
      : ontology_(&ontology), cfg_(cfg) {}

  std::vector<ConceptMatch> matches(const Tokens& tokens) const {
    return run_matcher(*ontology_, tokens, cfg_);
  }

  OntologySequence link(const Tokens& tokens) const {
    return map_to_ontology_sequence(matches(tokens), tokens);
  }

  const Ontology& ontology() const { return *ontology_; }
  const MatcherConfig& config() const { return cfg_; }

 private:
  const Ontology* ontology_;
  MatcherConfig cfg_;
};

// Links truncated reports and indexes them. Without a linker every example
// gets the NO_CONCEPT sequence.
inline std::vector<Example> prepare_examples(const std::vector<Report>& reports,
                                             const Vocabulary& vocab,
                                             const OntologyLinker* linker,
                                             const LengthCaps& caps) {
  std::vector<Example> out;
  out.reserve(reports.size());
  for (const auto& raw : reports) {
    Report r = truncate(raw, caps);
    if (r.findings_tokens.empty()) continue;
    OntologySequence u = linker ? linker->link(r.findings_tokens)
                                : map_to_ontology_sequence({}, r.findings_tokens);
    out.push_back(make_example(r, u, vocab));
  }
  return out;
}

}  // namespace ontopg
