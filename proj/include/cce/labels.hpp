#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "cce/error.hpp"

namespace cce {

enum class ConceptType : int { kProblem = 0, kTest = 1, kTreatment = 2 };

inline constexpr std::size_t kNumConceptTypes = 3;
inline constexpr std::array<ConceptType, kNumConceptTypes> kAllConceptTypes = {
    ConceptType::kProblem, ConceptType::kTest, ConceptType::kTreatment};

inline constexpr std::string_view concept_name(ConceptType type) {
  switch (type) {
    case ConceptType::kProblem: return "problem";
    case ConceptType::kTest: return "test";
    case ConceptType::kTreatment: return "treatment";
  }
  return "?";
}

inline std::optional<ConceptType> parse_concept_type(std::string_view name) {
  for (auto type : kAllConceptTypes)
    if (concept_name(type) == name) return type;
  return std::nullopt;
}

// The IOB label alphabet. O is index 0 so that all-zero lattices decode to all-O.
enum class Label : int {
  kO = 0,
  kBProblem = 1,
  kIProblem = 2,
  kBTest = 3,
  kITest = 4,
  kBTreatment = 5,
  kITreatment = 6,
};

inline constexpr std::size_t kNumLabels = 7;
// START and STOP pseudo-labels extend the transition matrix to 9x9.
inline constexpr std::size_t kStartState = 7;
inline constexpr std::size_t kStopState = 8;
inline constexpr std::size_t kNumStates = kNumLabels + 2;

inline constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "O", "B-problem", "I-problem", "B-test", "I-test", "B-treatment", "I-treatment"};

inline constexpr std::size_t label_index(Label label) { return static_cast<std::size_t>(label); }

inline constexpr Label label_from_index(std::size_t index) { return static_cast<Label>(index); }

inline constexpr std::string_view label_name(Label label) { return kLabelNames[label_index(label)]; }

inline Label parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kNumLabels; ++i)
    if (kLabelNames[i] == name) return label_from_index(i);
  throw DataError("unknown label '" + std::string(name) + "'");
}

inline constexpr Label begin_label(ConceptType type) {
  return label_from_index(1 + 2 * static_cast<std::size_t>(type));
}

inline constexpr Label inside_label(ConceptType type) {
  return label_from_index(2 + 2 * static_cast<std::size_t>(type));
}

inline constexpr bool is_outside(Label label) { return label == Label::kO; }
inline constexpr bool is_begin(Label label) { return !is_outside(label) && label_index(label) % 2 == 1; }
inline constexpr bool is_inside(Label label) { return !is_outside(label) && label_index(label) % 2 == 0; }

// Precondition: label is not O.
inline constexpr ConceptType label_type(Label label) {
  return static_cast<ConceptType>((label_index(label) - 1) / 2);
}

}  // namespace cce
