#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/labels.hpp"
#include "cce/text.hpp"

namespace cce {

/// Labeled phrase pools plus carrier templates. Templates are space-separated
/// tokens; `{problem}`, `{test}` and `{treatment}` are replaced by a phrase drawn
/// from the matching pool. Filler lines carry no concepts.
struct SyntheticGrammar {
  std::vector<std::string> problems;
  std::vector<std::string> tests;
  std::vector<std::string> treatments;
  std::vector<std::string> templates;
  std::vector<std::string> fillers;

  const std::vector<std::string>& pool(ConceptType type) const {
    switch (type) {
      case ConceptType::kProblem: return problems;
      case ConceptType::kTest: return tests;
      case ConceptType::kTreatment: return treatments;
    }
    return problems;
  }

  static SyntheticGrammar builtin();
};

inline SyntheticGrammar SyntheticGrammar::builtin() {
  SyntheticGrammar g;
  g.problems = {
      "chest pain", "shortness of breath", "hypertension", "diabetes mellitus",
      "atrial fibrillation", "pneumonia", "congestive heart failure", "acute renal failure",
      "anemia", "fever", "nausea", "vomiting", "abdominal pain", "headache", "hypotension",
      "sepsis", "urinary tract infection", "cellulitis", "deep vein thrombosis",
      "pulmonary embolism", "copd", "coronary artery disease", "myocardial infarction",
      "hyperlipidemia", "dehydration", "syncope", "seizures", "delirium",
      "gastrointestinal bleeding", "hyperkalemia", "lower extremity edema", "back pain",
      "a small pleural effusion", "elevated cholesterol"};
  g.tests = {
      "ekg", "chest x-ray", "ct scan", "mri of the brain", "complete blood count",
      "blood cultures", "urinalysis", "echocardiogram", "troponin", "creatinine", "hemoglobin",
      "white blood cell count", "lipid panel", "cardiac catheterization", "abdominal ultrasound",
      "stress test", "inr", "liver function tests", "arterial blood gas", "bun", "glucose",
      "hematocrit", "platelet count", "oxygen saturation", "sodium level", "lactate", "tsh",
      "head ct", "cbc", "chem-7", "hba1c"};
  g.treatments = {
      "aspirin", "lisinopril", "metoprolol", "heparin", "insulin", "vancomycin", "ceftriaxone",
      "furosemide", "lasix", "coumadin", "prednisone", "albuterol nebulizers", "morphine",
      "tylenol", "levofloxacin", "iv fluids", "blood transfusion", "dialysis", "intubation",
      "nitroglycerin", "atorvastatin", "potassium chloride", "zosyn", "plavix", "amiodarone",
      "coronary artery bypass graft", "appendectomy", "physical therapy", "antibiotics",
      "supplemental oxygen", "metformin 500mg", "a heparin drip"};
  g.templates = {
      "The patient was admitted with {problem} .",
      "She was started on {treatment} for {problem} .",
      "{test} was unremarkable .",
      "He underwent {test} which showed {problem} .",
      "Patient denies {problem} or {problem} .",
      "Continue {treatment} and {treatment} at home .",
      "{test} revealed {problem} .",
      "Her {problem} was treated with {treatment} .",
      "Repeat {test} in the morning .",
      "He was given {treatment} with improvement in his {problem} .",
      "History of {problem} , on {treatment} .",
      "Discharged on {treatment} .",
      "Follow up {test} as an outpatient .",
      "No evidence of {problem} on {test} .",
      "{test} and {test} were within normal limits .",
      "Complicated by {problem} requiring {treatment} ."};
  g.fillers = {
      "Vital signs stable .",
      "Patient seen and examined at bedside .",
      "Family at bedside .",
      "Plan discussed with the patient and family .",
      "Discharge condition : good .",
      "Code status : full code .",
      "Vitals : T 98.6F , BP 130/85 , HR 72 , sat 98% .",
      "Given 10mg at 08:30 ."};
  return g;
}

struct SyntheticDocument {
  Document document;
  std::vector<ConceptSpan> spans;
  std::string note_text;
};

struct SyntheticCorpus {
  std::vector<SyntheticDocument> documents;
};

namespace detail {

inline std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline bool draw_chance(std::mt19937_64& rng, unsigned percent) { return rng() % 100 < percent; }

inline std::string capitalize(std::string s) {
  if (!s.empty() && is_ascii_lower(s[0])) s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline std::optional<ConceptType> slot_type(std::string_view tok) {
  if (tok.size() < 3 || tok.front() != '{' || tok.back() != '}') return std::nullopt;
  return parse_concept_type(tok.substr(1, tok.size() - 2));
}

}  // namespace detail

/// Deterministic for a fixed seed. Gold spans are aligned to tokenize() output.
inline SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, long long n_documents,
                                                 const SyntheticGrammar& grammar = SyntheticGrammar::builtin()) {
  if (n_documents <= 0) throw UsageError("n_documents must be positive");
  for (auto type : kAllConceptTypes)
    if (grammar.pool(type).empty())
      throw DataError("empty phrase pool for concept type '" + std::string(concept_name(type)) + "'");
  if (grammar.templates.empty()) throw DataError("synthetic grammar has no templates");

  std::mt19937_64 rng(seed);
  SyntheticCorpus corpus;
  for (long long d = 0; d < n_documents; ++d) {
    char id[32];
    std::snprintf(id, sizeof id, "doc_%04lld", d + 1);
    std::vector<std::string> lines;
    std::vector<ConceptSpan> spans;
    lines.push_back("Discharge Summary :");
    lines.push_back("");
    const std::size_t n_lines = 6 + detail::draw_index(rng, 9);
    for (std::size_t l = 0; l < n_lines; ++l) {
      const std::size_t line_index = lines.size() + 1;
      const bool filler = !grammar.fillers.empty() && detail::draw_chance(rng, 20);
      const auto& pattern = filler ? grammar.fillers[detail::draw_index(rng, grammar.fillers.size())]
                                   : grammar.templates[detail::draw_index(rng, grammar.templates.size())];
      std::vector<std::string> words;
      for (const auto& piece : split_whitespace(pattern)) {
        const auto type = detail::slot_type(piece);
        if (!type) {
          words.push_back(piece);
          continue;
        }
        const auto& pool = grammar.pool(*type);
        std::string phrase = pool[detail::draw_index(rng, pool.size())];
        if (words.empty() || detail::draw_chance(rng, 15)) phrase = detail::capitalize(phrase);
        const auto phrase_words = split_whitespace(phrase);
        ConceptSpan span{*type, line_index, words.size(), words.size() + phrase_words.size() - 1, phrase};
        words.insert(words.end(), phrase_words.begin(), phrase_words.end());
        spans.push_back(std::move(span));
      }
      std::string line = join(words, " ");
      const auto tokens = tokenize(line, line_index);
      if (tokens.size() != words.size())
        throw DataError("synthetic grammar line does not tokenize to its own words: " + line);
      for (std::size_t k = 0; k < words.size(); ++k)
        if (tokens[k].text != words[k])
          throw DataError("synthetic grammar line does not tokenize to its own words: " + line);
      lines.push_back(std::move(line));
      if (detail::draw_chance(rng, 10)) lines.push_back("");
    }
    SyntheticDocument doc;
    doc.note_text = join(lines, "\n") + "\n";
    doc.document = load_document(doc.note_text, id);
    doc.spans = std::move(spans);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

/// First 80% of documents (rounded down, at least one) form the training split.
inline std::size_t synthetic_train_count(std::size_t n_documents) {
  if (n_documents <= 1) return n_documents;
  const std::size_t n = n_documents * 8 / 10;
  return n == 0 ? 1 : n;
}

}  // namespace cce
