#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/text.hpp"

namespace cce {

/// Binary indicator feature; its weight is implicitly 1.
struct Feature {
  std::string ns;
  std::string value;

  std::string key() const { return ns + "=" + value; }

  friend auto operator<=>(const Feature&, const Feature&) = default;
  friend bool operator==(const Feature&, const Feature&) = default;
};

/// Sorted, duplicate-free set of features for one token.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<Feature> features) : features_(std::move(features)) { normalize(); }

  void add(std::string ns, std::string value) { features_.push_back({std::move(ns), std::move(value)}); }

  // Call after a batch of add() to restore set semantics.
  void normalize() {
    std::sort(features_.begin(), features_.end());
    features_.erase(std::unique(features_.begin(), features_.end()), features_.end());
  }

  bool contains(std::string_view ns, std::string_view value) const {
    return std::binary_search(features_.begin(), features_.end(), Feature{std::string(ns), std::string(value)});
  }

  std::vector<std::string> values(std::string_view ns) const {
    std::vector<std::string> out;
    for (const auto& f : features_)
      if (f.ns == ns) out.push_back(f.value);
    return out;
  }

  const std::vector<Feature>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }
  auto begin() const { return features_.begin(); }
  auto end() const { return features_.end(); }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<Feature> features_;
};

namespace ns {
inline constexpr std::string_view kWord = "word";
inline constexpr std::string_view kLast2 = "last2";
inline constexpr std::string_view kShapeFull = "shape-full";
inline constexpr std::string_view kShapeCompressed = "shape-compressed";
inline constexpr std::string_view kPos = "pos";
inline constexpr std::string_view kUnit = "unit";
inline constexpr std::string_view kLength = "len";
inline constexpr std::array<std::string_view, 6> kLexicon = {"umls-cui", "umls-lui", "umls-rel",
                                                             "umls-sty", "umls-tty", "umls-abr"};
inline constexpr std::array<std::string_view, 3> kPrev3 = {"prev3-1", "prev3-2", "prev3-3"};
inline constexpr std::array<std::string_view, 3> kNext3 = {"next3-1", "next3-2", "next3-3"};
inline constexpr std::string_view kPrev1Prefix = "prev1:";
inline constexpr std::string_view kNext1Prefix = "next1:";
inline constexpr std::string_view kPrev1Boundary = "prev1:boundary";
inline constexpr std::string_view kNext1Boundary = "next1:boundary";
inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kSentenceEnd = "</s>";
}  // namespace ns

// ---------------------------------------------------------------------------
// Word shape

struct WordShape {
  std::string full;
  std::string compressed;
};

inline WordShape word_shape(std::string_view token) {
  WordShape shape;
  for (char c : token) {
    char s = c;
    if (is_ascii_upper(c)) s = 'X';
    else if (is_ascii_lower(c)) s = 'x';
    else if (is_ascii_digit(c)) s = 'd';
    shape.full += s;
    if (shape.compressed.empty() || shape.compressed.back() != s) shape.compressed += s;
  }
  return shape;
}

// ---------------------------------------------------------------------------
// Unit regexes

enum class UnitClass { kDosage, kPercent, kTemperature, kBloodPressure, kTime };

inline constexpr std::string_view unit_class_name(UnitClass u) {
  switch (u) {
    case UnitClass::kDosage: return "dosage";
    case UnitClass::kPercent: return "percent";
    case UnitClass::kTemperature: return "temperature";
    case UnitClass::kBloodPressure: return "blood-pressure";
    case UnitClass::kTime: return "time";
  }
  return "?";
}

/// Whole-token, case-insensitive matches against the five clinical unit patterns.
inline std::vector<UnitClass> unit_regex_features(std::string_view token) {
  using std::regex;
  static const std::array<std::pair<UnitClass, regex>, 5> kPatterns = {{
      {UnitClass::kDosage, regex(R"(\d+(\.\d+)?(mg|mcg|g|ml))", regex::icase | regex::optimize)},
      {UnitClass::kPercent, regex(R"(\d+(\.\d+)?%)", regex::icase | regex::optimize)},
      {UnitClass::kTemperature, regex("\\d+(\\.\\d*)?(\xC2\xB0)?[fc]", regex::icase | regex::optimize)},
      {UnitClass::kBloodPressure, regex(R"(\d+/\d+)", regex::optimize)},
      {UnitClass::kTime, regex(R"(\d+:\d+)", regex::optimize)},
  }};
  std::vector<UnitClass> out;
  const bool has_digit = std::any_of(token.begin(), token.end(), is_ascii_digit);
  if (!has_digit) return out;
  for (const auto& [cls, re] : kPatterns)
    if (std::regex_match(token.begin(), token.end(), re)) out.push_back(cls);
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon (stand-in for a licensed terminology)

enum LexiconAttribute : std::size_t { kCui = 0, kLui, kRel, kSty, kTty, kAbr, kNumLexiconAttributes };

inline constexpr std::array<std::string_view, kNumLexiconAttributes> kLexiconAttributeNames = {
    "cui", "lui", "rel", "sty", "tty", "abr"};

struct LexiconEntry {
  std::array<std::vector<std::string>, kNumLexiconAttributes> attributes;

  friend bool operator==(const LexiconEntry&, const LexiconEntry&) = default;
};

class Lexicon {
 public:
  static std::string normalize_phrase(std::string_view phrase) {
    return join(split_whitespace(to_lower(phrase)), " ");
  }

  void add(std::string_view phrase, LexiconEntry entry) {
    auto key = normalize_phrase(phrase);
    if (key.empty()) throw DataError("lexicon phrase must be non-empty");
    const auto n_tokens = split_whitespace(key).size();
    auto& slot = entries_[key];
    for (std::size_t a = 0; a < kNumLexiconAttributes; ++a) {
      auto& dst = slot.attributes[a];
      for (auto& v : entry.attributes[a])
        if (std::find(dst.begin(), dst.end(), v) == dst.end()) dst.push_back(std::move(v));
    }
    max_phrase_len_ = std::max(max_phrase_len_, n_tokens);
  }

  const LexiconEntry* find(std::string_view normalized) const {
    auto it = entries_.find(std::string(normalized));
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t max_phrase_len() const { return max_phrase_len_; }
  const std::map<std::string, LexiconEntry>& entries() const { return entries_; }

  /// Text form: `phrase<TAB>cui=C1,C2;lui=L1;rel=;sty=S1;tty=;abr=`. Lines
  /// starting with '#' and blank lines are skipped.
  static Lexicon parse(std::string_view text) {
    Lexicon lex;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string_view line = lines[i];
      if (trim(line).empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) throw ParseError(i + 1, "lexicon entry has no TAB separator");
      const auto phrase = trim(line.substr(0, tab));
      if (phrase.empty()) throw ParseError(i + 1, "lexicon phrase is empty");
      LexiconEntry entry;
      for (auto field : split(line.substr(tab + 1), ';')) {
        field = trim(field);
        if (field.empty()) continue;
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) throw ParseError(i + 1, "attribute without '=': " + std::string(field));
        const auto name = field.substr(0, eq);
        const auto it = std::find(kLexiconAttributeNames.begin(), kLexiconAttributeNames.end(), name);
        if (it == kLexiconAttributeNames.end())
          throw ParseError(i + 1, "unknown lexicon attribute '" + std::string(name) + "'");
        auto& dst = entry.attributes[static_cast<std::size_t>(it - kLexiconAttributeNames.begin())];
        for (auto v : split(field.substr(eq + 1), ',')) {
          v = trim(v);
          if (v.empty()) continue;
          if (std::any_of(v.begin(), v.end(), is_ascii_space))
            throw ParseError(i + 1, "attribute value contains whitespace");
          dst.emplace_back(v);
        }
      }
      lex.add(phrase, std::move(entry));
    }
    return lex;
  }

  static Lexicon load(const std::string& path) { return parse(read_file(path)); }

  std::string serialize() const {
    std::string out;
    for (const auto& [phrase, entry] : entries_) {
      out += phrase;
      out += '\t';
      for (std::size_t a = 0; a < kNumLexiconAttributes; ++a) {
        if (a) out += ';';
        out += kLexiconAttributeNames[a];
        out += '=';
        out += join(entry.attributes[a], ",");
      }
      out += '\n';
    }
    return out;
  }

  friend bool operator==(const Lexicon&, const Lexicon&) = default;

 private:
  std::map<std::string, LexiconEntry> entries_;
  std::size_t max_phrase_len_ = 0;
};

/// Greedy longest match, left to right, over lowercased token n-grams. Every
/// token of a matched phrase receives that entry's attribute features.
inline std::vector<std::vector<Feature>> lexicon_lookup(const std::vector<std::string>& tokens,
                                                        const Lexicon& lexicon) {
  std::vector<std::vector<Feature>> out(tokens.size());
  if (lexicon.empty()) return out;
  std::vector<std::string> lowered;
  lowered.reserve(tokens.size());
  for (const auto& t : tokens) lowered.push_back(to_lower(t));

  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::size_t longest = std::min(lexicon.max_phrase_len(), tokens.size() - i);
    const LexiconEntry* hit = nullptr;
    std::size_t hit_len = 0;
    for (std::size_t len = longest; len >= 1 && !hit; --len) {
      std::string phrase = lowered[i];
      for (std::size_t k = 1; k < len; ++k) phrase += ' ' + lowered[i + k];
      if ((hit = lexicon.find(phrase))) hit_len = len;
    }
    if (!hit) {
      ++i;
      continue;
    }
    for (std::size_t k = i; k < i + hit_len; ++k)
      for (std::size_t a = 0; a < kNumLexiconAttributes; ++a)
        for (const auto& v : hit->attributes[a]) out[k].push_back({std::string(ns::kLexicon[a]), v});
    i += hit_len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Part of speech

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual std::vector<std::string> tag(const std::vector<std::string>& tokens) const = 0;
  virtual std::vector<std::string> tagset() const = 0;
};

inline std::vector<std::string> fallback_pos_tag(const std::vector<std::string>& tokens) {
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    // require at least two characters of stem before the suffix
    return s.size() >= suffix.size() + 2 && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  for (const auto& tok : tokens) {
    const bool has_digit = std::any_of(tok.begin(), tok.end(), is_ascii_digit);
    const bool has_alnum = std::any_of(tok.begin(), tok.end(), [](char c) { return is_ascii_digit(c) || is_ascii_alpha(c); });
    const bool all_punct = !tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) {
      return static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c));
    });
    const auto lower = to_lower(tok);
    if (has_digit) tags.emplace_back("NUM");
    else if (all_punct) tags.emplace_back("PUNCT");
    else if (!has_alnum) tags.emplace_back("OTHER");
    else if (ends_with(lower, "ly")) tags.emplace_back("ADV");
    else if (ends_with(lower, "ing") || ends_with(lower, "ed")) tags.emplace_back("VERB");
    else if (ends_with(lower, "ous") || ends_with(lower, "al") || ends_with(lower, "ive")) tags.emplace_back("ADJ");
    else tags.emplace_back("NOUN");
  }
  return tags;
}

class FallbackPosTagger final : public PosTagger {
 public:
  std::vector<std::string> tag(const std::vector<std::string>& tokens) const override {
    return fallback_pos_tag(tokens);
  }
  std::vector<std::string> tagset() const override {
    return {"NOUN", "VERB", "ADJ", "ADV", "NUM", "PUNCT", "OTHER"};
  }
};

/// Precomputed tags keyed by the sentence's token sequence; sentences without
/// an entry fall back to the rule-based tagger.
class SidecarPosTagger final : public PosTagger {
 public:
  void add_sentence(const std::vector<std::string>& tokens, std::vector<std::string> tags) {
    if (tokens.size() != tags.size())
      throw DataError("POS sidecar has " + std::to_string(tags.size()) + " tags for a sentence of " +
                      std::to_string(tokens.size()) + " tokens");
    for (const auto& t : tags) tagset_.insert(t);
    tags_[join(tokens, " ")] = std::move(tags);
  }

  /// One line per sentence of `doc`, whitespace-separated tags aligned to tokens.
  void add_document(const Document& doc, std::string_view sidecar_text) {
    auto lines = split_lines(sidecar_text);
    std::erase_if(lines, [](const std::string& l) { return trim(l).empty(); });
    if (lines.size() != doc.sentences.size())
      throw DataError(doc.doc_id + ": POS sidecar has " + std::to_string(lines.size()) + " lines for " +
                      std::to_string(doc.sentences.size()) + " sentences");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      try {
        add_sentence(doc.sentences[i].words(), split_whitespace(lines[i]));
      } catch (const DataError& e) {
        throw ParseError(i + 1, doc.doc_id + " sidecar: " + e.what());
      }
    }
  }

  std::vector<std::string> tag(const std::vector<std::string>& tokens) const override {
    auto it = tags_.find(join(tokens, " "));
    if (it != tags_.end()) return it->second;
    return fallback_pos_tag(tokens);
  }

  std::vector<std::string> tagset() const override {
    std::set<std::string> all = tagset_;
    for (auto& t : FallbackPosTagger{}.tagset()) all.insert(t);
    return {all.begin(), all.end()};
  }

 private:
  std::unordered_map<std::string, std::vector<std::string>> tags_;
  std::set<std::string> tagset_;
};

// ---------------------------------------------------------------------------
// Feature extraction

inline std::string length_bucket(std::string_view token) {
  const auto n = decode_utf8(token).size();
  return n >= 6 ? "6+" : std::to_string(n);
}

inline std::string last_two_chars(std::string_view token) {
  const auto cps = decode_utf8(to_lower(token));
  std::string out;
  for (std::size_t i = cps.size() >= 2 ? cps.size() - 2 : 0; i < cps.size(); ++i) out += encode_utf8(cps[i]);
  return out;
}

/// Word-level features of one token: everything except the context namespaces.
inline std::vector<Feature> word_level_features(const std::string& token, const std::string& pos,
                                                const std::vector<Feature>& lexicon_features) {
  std::vector<Feature> out;
  const auto shape = word_shape(token);
  out.push_back({std::string(ns::kWord), to_lower(token)});
  out.push_back({std::string(ns::kLast2), last_two_chars(token)});
  out.push_back({std::string(ns::kShapeFull), shape.full});
  out.push_back({std::string(ns::kShapeCompressed), shape.compressed});
  out.push_back({std::string(ns::kPos), pos});
  for (auto u : unit_regex_features(token)) out.push_back({std::string(ns::kUnit), std::string(unit_class_name(u))});
  out.push_back({std::string(ns::kLength), length_bucket(token)});
  out.insert(out.end(), lexicon_features.begin(), lexicon_features.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Features for every token given precomputed POS tags.
inline std::vector<FeatureVector> extract_features(const std::vector<std::string>& tokens,
                                                   const std::vector<std::string>& pos_tags,
                                                   const Lexicon& lexicon) {
  if (pos_tags.size() != tokens.size())
    throw DataError("POS tag count " + std::to_string(pos_tags.size()) + " != token count " +
                    std::to_string(tokens.size()));
  const std::size_t n = tokens.size();
  const auto lex = lexicon_lookup(tokens, lexicon);
  std::vector<std::vector<Feature>> word_level(n);
  for (std::size_t i = 0; i < n; ++i) word_level[i] = word_level_features(tokens[i], pos_tags[i], lex[i]);

  std::vector<FeatureVector> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector fv;
    for (const auto& f : word_level[i]) fv.add(f.ns, f.value);
    for (std::size_t d = 1; d <= 3; ++d) {
      fv.add(std::string(ns::kPrev3[d - 1]), i >= d ? to_lower(tokens[i - d]) : std::string(ns::kSentenceStart));
      fv.add(std::string(ns::kNext3[d - 1]), i + d < n ? to_lower(tokens[i + d]) : std::string(ns::kSentenceEnd));
    }
    if (i > 0) {
      for (const auto& f : word_level[i - 1]) fv.add(std::string(ns::kPrev1Prefix) + f.ns, f.value);
    } else {
      fv.add(std::string(ns::kPrev1Boundary), std::string(ns::kSentenceStart));
    }
    if (i + 1 < n) {
      for (const auto& f : word_level[i + 1]) fv.add(std::string(ns::kNext1Prefix) + f.ns, f.value);
    } else {
      fv.add(std::string(ns::kNext1Boundary), std::string(ns::kSentenceEnd));
    }
    fv.normalize();
    out[i] = std::move(fv);
  }
  return out;
}

inline std::vector<FeatureVector> extract_features(const Sentence& sentence, const Lexicon& lexicon,
                                                   const PosTagger& pos_tagger) {
  const auto words = sentence.words();
  const auto tags = pos_tagger.tag(words);
  if (tags.size() != words.size()) throw DataError("POS tagger returned a misaligned tag sequence");
  return extract_features(words, tags, lexicon);
}

}  // namespace cce
