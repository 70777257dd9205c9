#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <regex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cce/error.hpp"
#include "cce/labels.hpp"
#include "cce/text.hpp"

namespace cce {

struct Token {
  std::string text;
  std::size_t line_index = 1;   // 1-based
  std::size_t token_index = 0;  // 0-based within the line
  std::size_t char_start = 0;   // byte offsets into the raw line, end exclusive
  std::size_t char_end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
  std::vector<Token> tokens;
  std::size_t line_index = 1;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
  }

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Document {
  std::string doc_id;
  std::vector<Sentence> sentences;
  std::vector<std::string> raw_lines;
};

struct ConceptSpan {
  ConceptType label = ConceptType::kProblem;
  std::size_t line_index = 1;
  std::size_t start_token = 0;  // inclusive
  std::size_t end_token = 0;    // inclusive
  std::string text;

  friend bool operator==(const ConceptSpan&, const ConceptSpan&) = default;
};

using TagSequence = std::vector<Label>;

inline bool span_position_less(const ConceptSpan& a, const ConceptSpan& b) {
  return std::tie(a.line_index, a.start_token, a.end_token) <
         std::tie(b.line_index, b.start_token, b.end_token);
}

inline void sort_spans(std::vector<ConceptSpan>& spans) {
  std::stable_sort(spans.begin(), spans.end(), span_position_less);
}

/// Checks ConceptSpan invariants over one document's spans: start <= end and
/// no two spans share a token.
inline void validate_spans(std::vector<ConceptSpan> spans) {
  for (const auto& s : spans) {
    if (s.start_token > s.end_token)
      throw DataError("span on line " + std::to_string(s.line_index) + " has start " +
                      std::to_string(s.start_token) + " > end " + std::to_string(s.end_token));
    if (s.line_index == 0) throw DataError("span line index must be 1-based");
  }
  sort_spans(spans);
  for (std::size_t i = 1; i < spans.size(); ++i) {
    const auto& prev = spans[i - 1];
    const auto& cur = spans[i];
    if (prev.line_index == cur.line_index && cur.start_token <= prev.end_token)
      throw DataError("overlapping spans on line " + std::to_string(cur.line_index) + " at tokens " +
                      std::to_string(prev.start_token) + ".." + std::to_string(prev.end_token) +
                      " and " + std::to_string(cur.start_token) + ".." +
                      std::to_string(cur.end_token));
  }
}

// Characters split off the edges of a whitespace chunk. Symbols that carry
// meaning inside clinical tokens (%, /, +, -, #, ...) are not in the set.
inline constexpr bool is_peripheral_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '(': case ')': case '[': case ']': case '{': case '}':
    case '"': case '\'': case '`':
      return true;
    default:
      return false;
  }
}

enum class TokenizerMode {
  kPunctuation,  // split peripheral punctuation off each chunk
  kWhitespace,   // whitespace chunks only, as in corpora indexed that way
};

inline TokenizerMode parse_tokenizer_mode(std::string_view s) {
  if (s == "punctuation") return TokenizerMode::kPunctuation;
  if (s == "whitespace") return TokenizerMode::kWhitespace;
  throw DataError("tokenizer must be 'punctuation' or 'whitespace', got '" + std::string(s) + "'");
}

/// Whitespace split, then each leading and trailing peripheral punctuation
/// character becomes its own token. Internal punctuation stays attached.
/// kWhitespace keeps each chunk whole.
inline std::vector<Token> tokenize(std::string_view raw_line, std::size_t line_index = 1,
                                   TokenizerMode mode = TokenizerMode::kPunctuation) {
  std::vector<Token> tokens;
  auto emit = [&](std::size_t b, std::size_t e) {
    Token t;
    t.text = std::string(raw_line.substr(b, e - b));
    t.line_index = line_index;
    t.token_index = tokens.size();
    t.char_start = b;
    t.char_end = e;
    tokens.push_back(std::move(t));
  };
  std::size_t i = 0;
  while (i < raw_line.size()) {
    while (i < raw_line.size() && is_ascii_space(raw_line[i])) ++i;
    std::size_t b = i;
    while (i < raw_line.size() && !is_ascii_space(raw_line[i])) ++i;
    std::size_t e = i;
    if (b == e) continue;
    if (mode == TokenizerMode::kWhitespace) {
      emit(b, e);
      continue;
    }
    while (b < e && is_peripheral_punct(raw_line[b])) {
      emit(b, b + 1);
      ++b;
    }
    std::size_t core_end = e;
    while (core_end > b && is_peripheral_punct(raw_line[core_end - 1])) --core_end;
    if (core_end > b) emit(b, core_end);
    for (std::size_t k = core_end; k < e; ++k) emit(k, k + 1);
  }
  return tokens;
}

/// One sentence per non-blank line; line indices count blank lines too.
inline Document load_document(std::string_view note_text, std::string doc_id,
                              TokenizerMode mode = TokenizerMode::kPunctuation) {
  validate_utf8(note_text);
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.raw_lines = split_lines(note_text);
  for (std::size_t i = 0; i < doc.raw_lines.size(); ++i) {
    auto tokens = tokenize(doc.raw_lines[i], i + 1, mode);
    if (tokens.empty()) continue;
    doc.sentences.push_back(Sentence{std::move(tokens), i + 1});
  }
  return doc;
}

// c="<text>" L:S L:E||t="<type>"
inline std::vector<ConceptSpan> parse_concept_file(std::string_view con_text) {
  static const std::regex kRecord(R"re(^c="(.*)" (\d+):(\d+) (\d+):(\d+)\|\|t="([^"]*)"$)re");
  std::vector<ConceptSpan> spans;
  const auto lines = split_lines(con_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (trim(line).empty()) continue;
    std::smatch m;
    if (!std::regex_match(line, m, kRecord))
      throw ParseError(i + 1, "malformed concept record: " + line);
    auto number = [&](int group) {
      try {
        return static_cast<std::size_t>(std::stoull(m[group].str()));
      } catch (const std::exception&) {
        throw ParseError(i + 1, "index out of range: " + m[group].str());
      }
    };
    const auto start_line = number(2), start_tok = number(3);
    const auto end_line = number(4), end_tok = number(5);
    if (start_line != end_line)
      throw ParseError(i + 1, "span crosses lines " + std::to_string(start_line) + " and " +
                                  std::to_string(end_line));
    if (start_line == 0) throw ParseError(i + 1, "line numbers are 1-based");
    if (start_tok > end_tok) throw ParseError(i + 1, "span start is after span end");
    const auto type = parse_concept_type(m[6].str());
    if (!type) throw ParseError(i + 1, "unknown concept type '" + m[6].str() + "'");
    spans.push_back(ConceptSpan{*type, start_line, start_tok, end_tok, m[1].str()});
  }
  return spans;
}

inline std::string write_concept_file(std::vector<ConceptSpan> spans) {
  sort_spans(spans);
  std::string out;
  for (const auto& s : spans) {
    const auto line = std::to_string(s.line_index);
    out += "c=\"" + to_lower(s.text) + "\" " + line + ":" + std::to_string(s.start_token) + " " +
           line + ":" + std::to_string(s.end_token) + "||t=\"" + std::string(concept_name(s.label)) +
           "\"\n";
  }
  return out;
}

inline std::string span_surface(const Sentence& sentence, std::size_t start, std::size_t end) {
  std::string text;
  for (std::size_t k = start; k <= end; ++k) {
    if (k > start) text += ' ';
    text += sentence.tokens[k].text;
  }
  return text;
}

inline TagSequence spans_to_iob(const Sentence& sentence, const std::vector<ConceptSpan>& spans) {
  TagSequence tags(sentence.size(), Label::kO);
  for (const auto& s : spans) {
    if (s.line_index != sentence.line_index)
      throw DataError("span on line " + std::to_string(s.line_index) +
                      " does not belong to sentence on line " +
                      std::to_string(sentence.line_index));
    if (s.start_token > s.end_token || s.end_token >= sentence.size())
      throw DataError("span " + std::to_string(s.start_token) + ".." + std::to_string(s.end_token) +
                      " out of bounds on line " + std::to_string(s.line_index) + " (" +
                      std::to_string(sentence.size()) + " tokens)");
    for (std::size_t k = s.start_token; k <= s.end_token; ++k) {
      if (tags[k] != Label::kO)
        throw DataError("overlapping spans on line " + std::to_string(s.line_index) + " at token " +
                        std::to_string(k));
      tags[k] = k == s.start_token ? begin_label(s.label) : inside_label(s.label);
    }
  }
  return tags;
}

/// Decodes IOB tags into spans. An I-X that follows O or a different type opens
/// a new span, as if it were B-X.
inline std::vector<ConceptSpan> iob_to_spans(const TagSequence& tags, const Sentence& sentence) {
  if (tags.size() != sentence.size())
    throw DataError("tag sequence length " + std::to_string(tags.size()) +
                    " != sentence length " + std::to_string(sentence.size()));
  std::vector<ConceptSpan> spans;
  bool open = false;
  ConceptSpan cur;
  auto close = [&](std::size_t end) {
    if (!open) return;
    cur.end_token = end;
    cur.text = span_surface(sentence, cur.start_token, cur.end_token);
    spans.push_back(cur);
    open = false;
  };
  for (std::size_t k = 0; k < tags.size(); ++k) {
    const Label tag = tags[k];
    if (is_outside(tag)) {
      if (open) close(k - 1);
      continue;
    }
    const auto type = label_type(tag);
    const bool continues = is_inside(tag) && open && cur.label == type;
    if (continues) continue;
    if (open) close(k - 1);
    cur = ConceptSpan{type, sentence.line_index, k, k, {}};
    open = true;
  }
  if (open) close(tags.size() - 1);
  return spans;
}

/// Groups document spans by line and converts each sentence to IOB tags.
/// Errors name the document and line of any span that falls outside the text.
inline std::vector<TagSequence> document_tags(const Document& doc, const std::vector<ConceptSpan>& spans) {
  validate_spans(spans);
  std::vector<TagSequence> out;
  out.reserve(doc.sentences.size());
  std::vector<bool> used(spans.size(), false);
  for (const auto& sentence : doc.sentences) {
    std::vector<ConceptSpan> on_line;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].line_index == sentence.line_index) {
        on_line.push_back(spans[i]);
        used[i] = true;
      }
    }
    try {
      out.push_back(spans_to_iob(sentence, on_line));
    } catch (const DataError& e) {
      throw DataError(doc.doc_id + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < spans.size(); ++i)
    if (!used[i])
      throw DataError(doc.doc_id + ": span on line " + std::to_string(spans[i].line_index) +
                      " does not fall on a non-blank line of the note");
  return out;
}

}  // namespace cce
