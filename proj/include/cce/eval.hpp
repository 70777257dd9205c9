#pragma once

#include <cstddef>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/labels.hpp"

namespace cce {

struct ClassScores {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  friend bool operator==(const ClassScores&, const ClassScores&) = default;
};

struct EvalReport {
  std::map<ConceptType, ClassScores> per_class;  // classes present in gold or predictions
  ClassScores micro;
  std::size_t gold_total = 0;
  std::size_t pred_total = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

using DocumentSpans = std::map<std::string, std::vector<ConceptSpan>>;

namespace detail {

inline void finish_scores(ClassScores& s) {
  auto ratio = [](std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; };
  s.precision = ratio(s.tp, s.tp + s.fp);
  s.recall = ratio(s.tp, s.tp + s.fn);
  s.f1 = s.precision + s.recall == 0 ? 0.0 : 2 * s.precision * s.recall / (s.precision + s.recall);
}

using SpanKey = std::tuple<std::string, std::size_t, std::size_t, std::size_t, int>;

inline std::set<SpanKey> span_keys(const DocumentSpans& docs, std::map<ConceptType, std::size_t>& per_class) {
  std::set<SpanKey> keys;
  for (const auto& [doc, spans] : docs) {
    try {
      validate_spans(spans);
    } catch (const DataError& e) {
      throw DataError(doc + ": " + e.what());
    }
    for (const auto& s : spans) {
      keys.emplace(doc, s.line_index, s.start_token, s.end_token, static_cast<int>(s.label));
      ++per_class[s.label];
    }
  }
  return keys;
}

}  // namespace detail

/// Exact class match: a prediction counts only if document, line, both token
/// boundaries and the concept type all equal a gold span.
inline EvalReport evaluate(const DocumentSpans& gold, const DocumentSpans& pred) {
  std::map<ConceptType, std::size_t> gold_counts, pred_counts;
  const auto gold_keys = detail::span_keys(gold, gold_counts);
  const auto pred_keys = detail::span_keys(pred, pred_counts);

  EvalReport report;
  for (auto type : kAllConceptTypes)
    if (gold_counts.count(type) || pred_counts.count(type)) report.per_class[type] = {};
  for (const auto& key : pred_keys)
    if (gold_keys.count(key)) ++report.per_class[static_cast<ConceptType>(std::get<4>(key))].tp;
  for (auto& [type, s] : report.per_class) {
    s.fp = pred_counts[type] - s.tp;
    s.fn = gold_counts[type] - s.tp;
    detail::finish_scores(s);
    report.micro.tp += s.tp;
    report.micro.fp += s.fp;
    report.micro.fn += s.fn;
  }
  detail::finish_scores(report.micro);
  report.gold_total = gold_keys.size();
  report.pred_total = pred_keys.size();
  return report;
}

/// Single-document convenience overload.
inline EvalReport evaluate(const std::vector<ConceptSpan>& gold, const std::vector<ConceptSpan>& pred) {
  return evaluate(DocumentSpans{{"", gold}}, DocumentSpans{{"", pred}});
}

inline std::string format_report(const EvalReport& report) {
  auto row = [](const std::string& name, const ClassScores& s) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s  %.3f  %.3f  %.3f\n", name.c_str(), s.precision, s.recall, s.f1);
    return std::string(buf);
  };
  std::string out = "class       P      R      F1\n";
  for (const auto& [type, s] : report.per_class) out += row(std::string(concept_name(type)), s);
  out += row("micro", report.micro);
  return out;
}

/// Flat `class.metric = value` lines.
inline std::string format_report_key_values(const EvalReport& report) {
  std::string out;
  auto emit = [&](const std::string& name, const ClassScores& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%s.tp = %zu\n%s.fp = %zu\n%s.fn = %zu\n%s.precision = %.6f\n%s.recall = %.6f\n%s.f1 = %.6f\n",
                  name.c_str(), s.tp, name.c_str(), s.fp, name.c_str(), s.fn, name.c_str(), s.precision,
                  name.c_str(), s.recall, name.c_str(), s.f1);
    out += buf;
  };
  for (const auto& [type, s] : report.per_class) emit(std::string(concept_name(type)), s);
  emit("micro", report.micro);
  out += "counts.gold_total = " + std::to_string(report.gold_total) + "\n";
  out += "counts.pred_total = " + std::to_string(report.pred_total) + "\n";
  return out;
}

}  // namespace cce
