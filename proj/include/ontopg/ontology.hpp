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

// Concept hierarchy and span matchers. A report's matches become the
// auxiliary ontology token sequence.

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "ontopg/corpus.hpp"
#include "ontopg/errors.hpp"

namespace ontopg {

struct Concept {
  std::string id;
  Tokens preferred_term;
  std::vector<Tokens> synonyms;
  std::optional<std::string> parent_id;
  int depth = 0;
};

// Raw record as it appears in the ontology file.
struct ConceptRecord {
  std::string id;
  std::string term;
  std::vector<std::string> synonyms;
  std::optional<std::string> parent;
};

struct ConceptMatch {
  std::string concept_id;
  std::size_t span_start = 0;
  std::size_t span_end = 0;  // exclusive
  Tokens matched_tokens;
  double score = 1.0;

  std::size_t length() const { return span_end - span_start; }
  bool operator==(const ConceptMatch&) const = default;
};

struct OntologySequence {
  Tokens tokens;
  std::vector<ConceptMatch> provenance;
};

inline const std::string kNoConceptToken = "<no_concept>";

class Ontology {
 public:
  // Validates the hierarchy and computes depths (roots have depth 1).
  static Ontology build(const std::vector<ConceptRecord>& records) {
    Ontology o;
    for (const auto& r : records) {
      if (o.concepts_.contains(r.id))
        throw StructuralError("duplicate concept id: " + r.id);
      Concept c;
      c.id = r.id;
      c.preferred_term = tokenize(r.term);
      if (c.preferred_term.empty())
        throw StructuralError("concept " + r.id + " has an empty term");
      for (const auto& s : r.synonyms) {
        Tokens t = tokenize(s);
        if (!t.empty()) c.synonyms.push_back(std::move(t));
      }
      c.parent_id = r.parent;
      o.concepts_.emplace(r.id, std::move(c));
    }
    for (const auto& [id, c] : o.concepts_) {
      if (c.parent_id && !o.concepts_.contains(*c.parent_id))
        throw StructuralError("concept " + id + " has dangling parent " + *c.parent_id);
    }
    o.compute_depths();
    o.build_index();
    return o;
  }

  const std::map<std::string, Concept>& concepts() const { return concepts_; }
  const Concept& at(const std::string& id) const {
    auto it = concepts_.find(id);
    if (it == concepts_.end()) throw ContractViolation("unknown concept " + id);
    return it->second;
  }
  std::size_t size() const { return concepts_.size(); }
  bool empty() const { return concepts_.empty(); }
  std::size_t max_ngram() const { return max_ngram_; }

  // Sorted concept ids indexed under an exact token sequence.
  const std::vector<std::string>* lookup(const Tokens& term) const {
    auto it = term_index_.find(term);
    return it == term_index_.end() ? nullptr : &it->second;
  }
  const std::map<Tokens, std::vector<std::string>>& term_index() const {
    return term_index_;
  }
  std::size_t term_entry_count() const {
    std::size_t n = 0;
    for (const auto& [_, ids] : term_index_) n += ids.size();
    return n;
  }

  // Distinct indexed terms in lexicographic order.
  const std::vector<Tokens>& terms() const { return terms_; }

  // Positions in terms() of terms sharing at least one token with the set.
  std::vector<std::size_t> terms_sharing(const std::set<std::string>& tokens) const {
    std::set<std::size_t> hits;
    for (const auto& t : tokens) {
      auto it = token_to_terms_.find(t);
      if (it == token_to_terms_.end()) continue;
      hits.insert(it->second.begin(), it->second.end());
    }
    return {hits.begin(), hits.end()};
  }

 private:
  void compute_depths() {
    // 0 = unvisited, 1 = on stack, 2 = done
    std::map<std::string, int> state;
    for (auto& [id, _] : concepts_) {
      std::vector<std::string> path;
      std::string cur = id;
      while (true) {
        int s = state[cur];
        if (s == 2) break;
        if (s == 1) throw StructuralError("cycle in ontology at concept " + cur);
        state[cur] = 1;
        path.push_back(cur);
        const Concept& c = concepts_.at(cur);
        if (!c.parent_id) break;
        cur = *c.parent_id;
      }
      for (auto it = path.rbegin(); it != path.rend(); ++it) {
        Concept& c = concepts_.at(*it);
        c.depth = c.parent_id ? concepts_.at(*c.parent_id).depth + 1 : 1;
        state[*it] = 2;
      }
    }
  }

  void build_index() {
    for (const auto& [id, c] : concepts_) {
      add_term(c.preferred_term, id);
      for (const auto& s : c.synonyms) add_term(s, id);
    }
    for (auto& [term, ids] : term_index_) {
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      max_ngram_ = std::max(max_ngram_, term.size());
      std::set<std::string> distinct(term.begin(), term.end());
      for (const auto& t : distinct) token_to_terms_[t].push_back(terms_.size());
      terms_.push_back(term);
    }
  }

  void add_term(const Tokens& term, const std::string& id) { term_index_[term].push_back(id); }

  std::map<std::string, Concept> concepts_;
  std::map<Tokens, std::vector<std::string>> term_index_;
  std::vector<Tokens> terms_;
  std::unordered_map<std::string, std::vector<std::size_t>> token_to_terms_;
  std::size_t max_ngram_ = 0;
};

inline ConceptRecord concept_record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j.contains("term"))
    throw FormatError("ontology record needs id and term");
  ConceptRecord r;
  r.id = j["id"].get<std::string>();
  r.term = j["term"].get<std::string>();
  if (j.contains("synonyms") && !j["synonyms"].is_null())
    r.synonyms = j["synonyms"].get<std::vector<std::string>>();
  if (j.contains("parent") && !j["parent"].is_null()) r.parent = j["parent"].get<std::string>();
  return r;
}

inline nlohmann::json concept_record_to_json(const ConceptRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["term"] = r.term;
  j["synonyms"] = r.synonyms;
  if (r.parent) j["parent"] = *r.parent;
  return j;
}

inline Ontology load_ontology(const std::string& path) {
  std::vector<ConceptRecord> records;
  std::size_t n = 0;
  for (const auto& j : read_jsonl(path)) {
    ++n;
    try {
      records.push_back(concept_record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": record " + std::to_string(n) + ": " + e.what());
    }
  }
  return Ontology::build(records);
}

inline void write_ontology(const std::string& path, const std::vector<ConceptRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << concept_record_to_json(r).dump() << '\n';
}

// Left-to-right longest match. At each position the longest indexed term
// with a concept of sufficient depth wins; equal-length ties go to the
// lowest concept id. Matches never overlap.
inline std::vector<ConceptMatch> match_exact(const Ontology& ontology, const Tokens& tokens,
                                             int min_depth = 8) {
  ONTOPG_REQUIRE(min_depth >= 1, "match_exact: min_depth must be >= 1");
  std::vector<ConceptMatch> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    std::size_t longest = std::min(ontology.max_ngram(), tokens.size() - i);
    for (std::size_t len = longest; len >= 1 && !matched; --len) {
      Tokens span(tokens.begin() + i, tokens.begin() + i + len);
      const auto* ids = ontology.lookup(span);
      if (!ids) continue;
      for (const auto& id : *ids) {
        if (ontology.at(id).depth < min_depth) continue;
        out.push_back({id, i, i + len, std::move(span), 1.0});
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Scores every span of 1..window tokens against every indexed term by
// token-set Jaccard; keeps spans whose best score reaches the threshold and
// resolves overlaps by score, then length, then position, then concept id.
inline std::vector<ConceptMatch> match_fuzzy(const Ontology& ontology, const Tokens& tokens,
                                             double threshold = 0.7, std::size_t window = 3,
                                             int min_depth = 1) {
  ONTOPG_REQUIRE(threshold > 0.0 && threshold <= 1.0, "match_fuzzy: threshold out of (0,1]");
  ONTOPG_REQUIRE(window >= 1, "match_fuzzy: window must be >= 1");
  std::vector<ConceptMatch> candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t len = 1; len <= window && i + len <= tokens.size(); ++len) {
      std::set<std::string> span(tokens.begin() + i, tokens.begin() + i + len);
      double best = -1.0;
      std::string best_id;
      for (std::size_t t : ontology.terms_sharing(span)) {
        const Tokens& term = ontology.terms()[t];
        std::set<std::string> tset(term.begin(), term.end());
        double s = jaccard(span, tset);
        for (const auto& id : *ontology.lookup(term)) {
          if (ontology.at(id).depth < min_depth) continue;
          if (s > best || (s == best && id < best_id)) {
            best = s;
            best_id = id;
          }
        }
      }
      if (best >= threshold)
        candidates.push_back({best_id, i, i + len,
                              Tokens(tokens.begin() + i, tokens.begin() + i + len), best});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const ConceptMatch& a, const ConceptMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.length() != b.length()) return a.length() > b.length();
    if (a.span_start != b.span_start) return a.span_start < b.span_start;
    return a.concept_id < b.concept_id;
  });
  std::vector<ConceptMatch> accepted;
  std::vector<char> taken(tokens.size(), 0);
  for (auto& c : candidates) {
    bool free = std::none_of(taken.begin() + c.span_start, taken.begin() + c.span_end,
                             [](char t) { return t != 0; });
    if (!free) continue;
    std::fill(taken.begin() + c.span_start, taken.begin() + c.span_end, 1);
    accepted.push_back(std::move(c));
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const ConceptMatch& a, const ConceptMatch& b) { return a.span_start < b.span_start; });
  return accepted;
}

// Concatenates matched slices in document order; an empty match list maps
// to the single NO_CONCEPT sentinel.
inline OntologySequence map_to_ontology_sequence(const std::vector<ConceptMatch>& matches,
                                                 const Tokens& tokens) {
  OntologySequence u;
  std::size_t prev_end = 0;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    const auto& m = matches[k];
    if (m.span_start >= m.span_end || m.span_end > tokens.size())
      throw ContractViolation("match span [" + std::to_string(m.span_start) + "," +
                              std::to_string(m.span_end) + ") invalid for input of length " +
                              std::to_string(tokens.size()));
    if (k > 0 && m.span_start < prev_end)
      throw ContractViolation("matches overlap or are unsorted at span start " +
                              std::to_string(m.span_start));
    prev_end = m.span_end;
    u.tokens.insert(u.tokens.end(), tokens.begin() + m.span_start, tokens.begin() + m.span_end);
  }
  u.provenance = matches;
  if (u.tokens.empty()) u.tokens.push_back(kNoConceptToken);
  return u;
}

enum class MatcherKind { kExact, kFuzzy };

struct MatcherConfig {
  MatcherKind kind = MatcherKind::kExact;
  int min_depth = 8;
  double jaccard_threshold = 0.7;
  std::size_t window = 3;
};

inline std::vector<ConceptMatch> run_matcher(const Ontology& ontology, const Tokens& tokens,
                                             const MatcherConfig& cfg) {
  if (cfg.kind == MatcherKind::kExact) return match_exact(ontology, tokens, cfg.min_depth);
  return match_fuzzy(ontology, tokens, cfg.jaccard_threshold, cfg.window);
}

}  // namespace ontopg
