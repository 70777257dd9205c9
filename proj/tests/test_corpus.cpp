#include <gtest/gtest.h>

#include <random>
#include <set>
#include <string>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/synthetic.hpp"

namespace cce {
namespace {

std::vector<std::string> texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

Sentence make_sentence(std::vector<std::string> words, std::size_t line = 1) {
  return Sentence{tokenize(join(words, " "), line), line};
}

TEST(Tokenize, EmptyLine) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, BlankLine) { EXPECT_TRUE(tokenize("  \t ").empty()); }

TEST(Tokenize, TrailingPeriodSplitInternalSlashKept) {
  EXPECT_EQ(texts(tokenize("BP 120/80.")), (std::vector<std::string>{"BP", "120/80", "."}));
}

TEST(Tokenize, WhitespaceOnly) {
  EXPECT_EQ(texts(tokenize("pt denies chest pain")), (std::vector<std::string>{"pt", "denies", "chest", "pain"}));
}

TEST(Tokenize, PeripheralPunctuationEachSplit) {
  EXPECT_EQ(texts(tokenize("(pain), T98.6 chem-7 50%.")),
            (std::vector<std::string>{"(", "pain", ")", ",", "T98.6", "chem-7", "50%", "."}));
}

TEST(Tokenize, WhitespaceModeKeepsChunksWhole) {
  const auto tokens = tokenize("(pain), BP 120/80.", 2, TokenizerMode::kWhitespace);
  EXPECT_EQ(texts(tokens), (std::vector<std::string>{"(pain),", "BP", "120/80."}));
  EXPECT_EQ(tokens[2].char_start, 11u);
  EXPECT_EQ(tokens[2].char_end, 18u);
  const auto doc = load_document("a, b.\n\nc", "d", TokenizerMode::kWhitespace);
  ASSERT_EQ(doc.sentences.size(), 2u);
  EXPECT_EQ(doc.sentences[0].tokens.size(), 2u);
  EXPECT_EQ(parse_tokenizer_mode("whitespace"), TokenizerMode::kWhitespace);
  EXPECT_THROW(parse_tokenizer_mode("spaces"), DataError);
}

TEST(Tokenize, OffsetsReconstructTrimmedLine) {
  const std::string line = "  Pt was given (aspirin 81mg),  then  discharged.  ";
  const auto tokens = tokenize(line, 7);
  ASSERT_FALSE(tokens.empty());
  std::string rebuilt;
  std::size_t prev_end = tokens.front().char_start;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    EXPECT_EQ(t.line_index, 7u);
    EXPECT_EQ(t.token_index, i);
    EXPECT_LT(t.char_start, t.char_end);
    EXPECT_GE(t.char_start, prev_end);
    EXPECT_EQ(line.substr(t.char_start, t.char_end - t.char_start), t.text);
    rebuilt += line.substr(prev_end, t.char_end - prev_end);
    prev_end = t.char_end;
  }
  EXPECT_EQ(rebuilt, std::string(trim(line)));
}

TEST(Tokenize, IdempotentUnderSingleSpaceRejoin) {
  std::mt19937_64 rng(11);
  const std::string alphabet = "ab Z9.,;:()/-%'\"\t";
  for (int trial = 0; trial < 500; ++trial) {
    std::string line;
    const auto n = rng() % 30;
    for (std::size_t i = 0; i < n; ++i) line += alphabet[rng() % alphabet.size()];
    const auto first = texts(tokenize(line));
    for (const auto& t : first) {
      EXPECT_FALSE(t.empty());
      for (char c : t) EXPECT_FALSE(is_ascii_space(c));
    }
    EXPECT_EQ(texts(tokenize(join(first, " "))), first) << "line: " << line;
  }
}

TEST(LoadDocument, CountsBlankLines) {
  const auto doc = load_document("a b\n\nc", "d");
  ASSERT_EQ(doc.sentences.size(), 2u);
  EXPECT_EQ(doc.sentences[0].line_index, 1u);
  EXPECT_EQ(doc.sentences[1].line_index, 3u);
  EXPECT_EQ(doc.raw_lines.size(), 3u);
}

TEST(LoadDocument, Empty) { EXPECT_TRUE(load_document("", "d").sentences.empty()); }

TEST(LoadDocument, SingleToken) {
  const auto doc = load_document("x", "d");
  ASSERT_EQ(doc.sentences.size(), 1u);
  ASSERT_EQ(doc.sentences[0].size(), 1u);
  EXPECT_EQ(doc.sentences[0].tokens[0].line_index, 1u);
  EXPECT_EQ(doc.sentences[0].tokens[0].token_index, 0u);
}

TEST(LoadDocument, RejectsMalformedUtf8WithOffset) {
  const std::string bad = std::string("ok\nab") + static_cast<char>(0xC3) + "(";
  try {
    load_document(bad, "d");
    FAIL() << "expected a decode error";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.byte_offset(), 5u);
  }
  EXPECT_THROW(load_document(std::string("\xC0\xAF"), "d"), DecodeError);  // overlong '/'
  EXPECT_NO_THROW(load_document("temp 38\xC2\xB0" "C", "d"));
}

TEST(ConceptFile, ParsesMultiTokenSpan) {
  const auto spans = parse_concept_file(R"(c="chest pain" 4:2 4:3||t="problem")");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0], (ConceptSpan{ConceptType::kProblem, 4, 2, 3, "chest pain"}));
}

TEST(ConceptFile, ParsesSingleTokenSpan) {
  const auto spans = parse_concept_file("c=\"ekg\" 2:0 2:0||t=\"test\"\n");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0], (ConceptSpan{ConceptType::kTest, 2, 0, 0, "ekg"}));
}

TEST(ConceptFile, KeepsQuotesInsideText) {
  const auto spans = parse_concept_file(R"(c="the "bad" cough" 1:0 1:2||t="problem")");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].text, "the \"bad\" cough");
}

TEST(ConceptFile, Errors) {
  EXPECT_THROW(parse_concept_file(R"(c="x" 1:2 1:1||t="test")"), ParseError);
  EXPECT_THROW(parse_concept_file(R"(c="x" 1:2 2:3||t="test")"), ParseError);
  EXPECT_THROW(parse_concept_file(R"(c="x" 1:2 1:3||t="disease")"), ParseError);
  try {
    parse_concept_file("c=\"a\" 1:0 1:0||t=\"test\"\n\ngarbage\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ConceptFile, WriteEmpty) { EXPECT_EQ(write_concept_file({}), ""); }

TEST(ConceptFile, WriteLowercasesAndSorts) {
  const std::vector<ConceptSpan> spans = {{ConceptType::kProblem, 3, 1, 2, "Chest Pain"},
                                          {ConceptType::kTest, 2, 0, 0, "EKG"}};
  EXPECT_EQ(write_concept_file(spans),
            "c=\"ekg\" 2:0 2:0||t=\"test\"\nc=\"chest pain\" 3:1 3:2||t=\"problem\"\n");
}

TEST(ConceptFile, RoundTripProperty) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words = {"pain", "ekg", "x-ray", "\"q\"", "b12", "t98.6"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ConceptSpan> spans;
    const std::size_t lines = 1 + rng() % 5;
    for (std::size_t line = 1; line <= lines; ++line) {
      std::size_t pos = rng() % 3;
      while (rng() % 3 && pos < 40) {
        const std::size_t len = 1 + rng() % 3;
        std::vector<std::string> ws;
        for (std::size_t k = 0; k < len; ++k) ws.push_back(words[rng() % words.size()]);
        spans.push_back({kAllConceptTypes[rng() % 3], line, pos, pos + len - 1, join(ws, " ")});
        pos += len + rng() % 3;
      }
    }
    const auto written = write_concept_file(spans);
    EXPECT_EQ(parse_concept_file(written), spans);
    EXPECT_EQ(write_concept_file(parse_concept_file(written)), written);
  }
}

TEST(Iob, SpanToTags) {
  const auto s = make_sentence({"pt", "has", "chest", "pain"});
  EXPECT_EQ(spans_to_iob(s, {{ConceptType::kProblem, 1, 2, 3, "chest pain"}}),
            (TagSequence{Label::kO, Label::kO, Label::kBProblem, Label::kIProblem}));
  EXPECT_EQ(spans_to_iob(s, {}), TagSequence(4, Label::kO));
}

TEST(Iob, AdjacentSpansKeepBoundary) {
  const auto s = make_sentence({"ekg", "chest", "ct"});
  const std::vector<ConceptSpan> spans = {{ConceptType::kTest, 1, 0, 0, "ekg"}, {ConceptType::kTest, 1, 1, 2, "chest ct"}};
  const auto tags = spans_to_iob(s, spans);
  EXPECT_EQ(tags, (TagSequence{Label::kBTest, Label::kBTest, Label::kITest}));
  EXPECT_EQ(iob_to_spans(tags, s), spans);
}

TEST(Iob, Errors) {
  const auto s = make_sentence({"a", "b", "c"});
  EXPECT_THROW(spans_to_iob(s, {{ConceptType::kTest, 1, 2, 3, "c ?"}}), DataError);
  EXPECT_THROW(spans_to_iob(s, {{ConceptType::kTest, 2, 0, 0, "a"}}), DataError);
  EXPECT_THROW(spans_to_iob(s, {{ConceptType::kTest, 1, 0, 1, "a b"}, {ConceptType::kProblem, 1, 1, 2, "b c"}}),
               DataError);
}

TEST(Iob, DecodeWellFormed) {
  const auto s = make_sentence({"pt", "has", "chest", "pain"});
  EXPECT_EQ(iob_to_spans({Label::kO, Label::kO, Label::kBProblem, Label::kIProblem}, s),
            (std::vector<ConceptSpan>{{ConceptType::kProblem, 1, 2, 3, "chest pain"}}));
}

TEST(Iob, RepairsOrphanInsideAtStart) {
  const auto s = make_sentence({"ekg", "done"});
  EXPECT_EQ(iob_to_spans({Label::kITest, Label::kO}, s),
            (std::vector<ConceptSpan>{{ConceptType::kTest, 1, 0, 0, "ekg"}}));
}

TEST(Iob, TypeMismatchStartsNewSpan) {
  const auto s = make_sentence({"ekg", "pain"});
  EXPECT_EQ(iob_to_spans({Label::kBTest, Label::kIProblem}, s),
            (std::vector<ConceptSpan>{{ConceptType::kTest, 1, 0, 0, "ekg"}, {ConceptType::kProblem, 1, 1, 1, "pain"}}));
}

TEST(Iob, DecodingIsTotal) {
  // Every one of the 7^4 sequences decodes to valid spans.
  const auto s = make_sentence({"a", "b", "c", "d"});
  std::size_t total = 1;
  for (int i = 0; i < 4; ++i) total *= kNumLabels;
  for (std::size_t code = 0; code < total; ++code) {
    TagSequence tags;
    for (std::size_t c = code, k = 0; k < 4; ++k, c /= kNumLabels) tags.push_back(label_from_index(c % kNumLabels));
    const auto spans = iob_to_spans(tags, s);
    EXPECT_NO_THROW(validate_spans(spans));
    for (const auto& sp : spans) {
      EXPECT_LE(sp.start_token, sp.end_token);
      EXPECT_LT(sp.end_token, 4u);
      EXPECT_EQ(sp.line_index, 1u);
    }
    // decoded spans re-encode to a well-formed sequence that decodes identically
    EXPECT_EQ(iob_to_spans(spans_to_iob(s, spans), s), spans);
  }
}

TEST(Iob, RoundTripProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 15;
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(rng() % 10));
    const auto s = make_sentence(words, 1 + rng() % 4);
    std::vector<ConceptSpan> spans;
    std::size_t pos = rng() % 3;
    while (pos < n) {
      const std::size_t len = 1 + rng() % 3;
      if (pos + len > n) break;
      if (rng() % 2) spans.push_back({kAllConceptTypes[rng() % 3], s.line_index, pos, pos + len - 1, span_surface(s, pos, pos + len - 1)});
      pos += len + rng() % 2;
    }
    EXPECT_EQ(iob_to_spans(spans_to_iob(s, spans), s), spans);
  }
}

TEST(Synthetic, DeterministicForSeed) {
  const auto a = generate_synthetic_corpus(1, 5);
  const auto b = generate_synthetic_corpus(1, 5);
  ASSERT_EQ(a.documents.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.documents[i].note_text, b.documents[i].note_text);
    EXPECT_EQ(a.documents[i].spans, b.documents[i].spans);
  }
  const auto c = generate_synthetic_corpus(2, 5);
  EXPECT_NE(a.documents[0].note_text + a.documents[1].note_text, c.documents[0].note_text + c.documents[1].note_text);
}

TEST(Synthetic, RejectsBadArguments) {
  EXPECT_THROW(generate_synthetic_corpus(1, 0), UsageError);
  auto g = SyntheticGrammar::builtin();
  g.tests.clear();
  EXPECT_THROW(generate_synthetic_corpus(1, 3, g), DataError);
}

TEST(Synthetic, BuiltinGrammarSize) {
  const auto g = SyntheticGrammar::builtin();
  EXPECT_GE(g.problems.size(), 30u);
  EXPECT_GE(g.tests.size(), 30u);
  EXPECT_GE(g.treatments.size(), 30u);
  EXPECT_GE(g.templates.size(), 10u);
}

TEST(Synthetic, GoldSpansRoundTripThroughIob) {
  const auto corpus = generate_synthetic_corpus(7, 20);
  std::size_t n_spans = 0;
  for (const auto& d : corpus.documents) {
    const auto tags = document_tags(d.document, d.spans);
    std::vector<ConceptSpan> decoded;
    for (std::size_t s = 0; s < tags.size(); ++s) {
      auto found = iob_to_spans(tags[s], d.document.sentences[s]);
      decoded.insert(decoded.end(), found.begin(), found.end());
    }
    EXPECT_EQ(decoded, d.spans);
    n_spans += d.spans.size();
  }
  EXPECT_GT(n_spans, 100u);
}

}  // namespace
}  // namespace cce
