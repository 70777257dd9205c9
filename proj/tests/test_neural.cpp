#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "cce/neural.hpp"
#include "cce/synthetic.hpp"
#include "gradcheck.hpp"

namespace cce {
namespace {

using testing::tiny_neural_config;

NeuralModel tiny_model(std::uint64_t seed, const std::vector<std::vector<std::string>>& sentences) {
  auto cfg = tiny_neural_config();
  cfg.seed = seed;
  return NeuralModel::initialize(cfg, sentences);
}

std::vector<NeuralExample> synthetic_examples(std::uint64_t seed, int n_docs, std::size_t limit) {
  std::vector<NeuralExample> out;
  for (const auto& d : generate_synthetic_corpus(seed, n_docs).documents) {
    const auto tags = document_tags(d.document, d.spans);
    for (std::size_t s = 0; s < d.document.sentences.size() && out.size() < limit; ++s)
      out.emplace_back(d.document.sentences[s].words(), tags[s]);
  }
  return out;
}

TEST(Embeddings, CopiesKnownRows) {
  std::mt19937_64 rng(1);
  const auto load = load_word_embeddings_text("the 0.1 0.2\n", {"the"}, 2, rng);
  EXPECT_EQ(load.table.rows(), 1);
  EXPECT_EQ(load.table(0, 0), 0.1);
  EXPECT_EQ(load.table(0, 1), 0.2);
  EXPECT_EQ(load.hit_rate, 1.0);
}

TEST(Embeddings, MissingRowsAreUniformAndSeeded) {
  std::mt19937_64 a(4), b(4);
  const auto la = load_word_embeddings_text("the 0.1 0.2\n", {"xyzzy"}, 2, a);
  const auto lb = load_word_embeddings_text("the 0.1 0.2\n", {"xyzzy"}, 2, b);
  EXPECT_EQ(la.hit_rate, 0.0);
  EXPECT_EQ(la.missing, (std::vector<std::string>{"xyzzy"}));
  EXPECT_EQ(la.table, lb.table);
  for (Eigen::Index c = 0; c < 2; ++c) {
    EXPECT_GE(la.table(0, c), -0.25);
    EXPECT_LE(la.table(0, c), 0.25);
  }
}

TEST(Embeddings, LookupIsLowercased) {
  std::mt19937_64 rng(1);
  const auto load = load_word_embeddings_text("The 1 2\nthe 3 4\n", {"the"}, 2, rng);
  EXPECT_EQ(load.table(0, 0), 1.0);
}

TEST(Embeddings, Errors) {
  std::mt19937_64 rng(1);
  try {
    load_word_embeddings_text("a 1 2\nb 1 2 3\n", {"a"}, 2, rng);
    FAIL() << "expected a ragged-line error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(load_word_embeddings_text("a 1 2 3\n", {"a"}, 2, rng), DataError);
  EXPECT_THROW(load_word_embeddings_text("a 1 x\n", {"a"}, 2, rng), ParseError);
}

TEST(Initialize, EmbeddingWidthMustMatch) {
  const std::string text = "pain 0.1 0.2 0.3\n";
  auto cfg = tiny_neural_config();
  EXPECT_THROW(NeuralModel::initialize(cfg, {{"pain"}}, &text), DataError);
  cfg.d_w = 3;
  EmbeddingLoad report;
  const auto m = NeuralModel::initialize(cfg, {{"Pain", "x"}}, &text, &report);
  EXPECT_EQ(report.hits, 1u);
  EXPECT_EQ(m.params().word_embedding(static_cast<Eigen::Index>(m.word_id("PAIN")), 2), 0.3);
}

TEST(Initialize, ForgetBiasIsOne) {
  const auto m = tiny_model(1, {{"a"}});
  for (const auto* lstm : {&m.params().char_fw, &m.params().char_bw, &m.params().word_fw, &m.params().word_bw}) {
    const auto h = lstm->hidden();
    EXPECT_TRUE((lstm->b.block(h, 0, h, 1).array() == 1.0).all());
    EXPECT_TRUE((lstm->b.block(0, 0, h, 1).array().abs() <= 0.1).all());
  }
}

TEST(Initialize, RejectsBadConfig) {
  auto cfg = tiny_neural_config();
  cfg.dropout_rate = 1.0;
  EXPECT_THROW(NeuralModel::initialize(cfg, {{"a"}}), UsageError);
  EXPECT_THROW(train_neural({{{"a"}, {Label::kO}}}, cfg), UsageError);
  cfg = tiny_neural_config();
  cfg.h_w = 0;
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(CharEncode, SingleCharacterIsConcatenationOfOneStepEach) {
  const auto m = tiny_model(2, {{"a"}});
  const auto& p = m.params();
  const VectorXd x = p.char_embedding.row(static_cast<Eigen::Index>(m.char_ids("a")[0])).transpose();
  const std::vector<VectorXd> xs = {x};
  const auto fw = lstm_forward(p.char_fw, xs);
  const auto bw = lstm_forward(p.char_bw, xs);
  const auto repr = char_encode("a", m);
  ASSERT_EQ(repr.size(), 8);
  EXPECT_EQ(repr.head(4), fw.back().h);
  EXPECT_EQ(repr.tail(4), bw.back().h);
}

TEST(CharEncode, OrderSensitive) {
  const auto m = tiny_model(3, {{"ab"}});
  EXPECT_NE(char_encode("ab", m), char_encode("ba", m));
}

TEST(CharEncode, MisspellingDistinct) {
  const auto m = tiny_model(3, {{"cholesterol", "cholorolesteral"}});
  EXPECT_NE(char_encode("cholorolesteral", m), char_encode("cholesterol", m));
}

TEST(CharEncode, UnknownCharactersMapToReservedId) {
  const auto m = tiny_model(3, {{"ab"}});
  EXPECT_EQ(m.char_ids("aqb"), (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(char_encode("q", m), char_encode("z", m));
}

TEST(EncodeSentence, ShapesForRandomDims) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    NeuralConfig cfg;
    cfg.d_c = 1 + static_cast<int>(rng() % 5);
    cfg.h_c = 1 + static_cast<int>(rng() % 5);
    cfg.d_w = 1 + static_cast<int>(rng() % 5);
    cfg.h_w = 1 + static_cast<int>(rng() % 5);
    cfg.seed = rng();
    const std::vector<std::string> words = {"BP", "120/80", "."};
    const auto m = NeuralModel::initialize(cfg, {words});
    EXPECT_EQ(char_encode("BP", m).size(), 2 * cfg.h_c);
    const auto tr = sentence_forward({words.begin(), words.begin() + 1 + trial % 3}, m, nullptr);
    for (const auto& x : tr.inputs) EXPECT_EQ(x.size(), cfg.d_w + 2 * cfg.h_c);
    for (const auto& s : tr.states) EXPECT_EQ(s.size(), 2 * cfg.h_w);
    EXPECT_EQ(tr.emissions.rows(), 1 + trial % 3);
    EXPECT_EQ(tr.emissions.cols(), 7);
  }
}

TEST(EncodeSentence, DeterministicWithoutDropout) {
  const std::vector<std::string> words = {"pt", "has", "pain"};
  const auto m = tiny_model(5, {words});
  EXPECT_EQ(encode_sentence(words, m, false), encode_sentence(words, m, false));
  EXPECT_THROW(encode_sentence({}, m, false), DataError);
}

TEST(EncodeSentence, DropoutNeedsGeneratorAndChangesOutput) {
  const std::vector<std::string> words = {"pt", "has", "pain"};
  auto cfg = tiny_neural_config();
  cfg.dropout_rate = 0.5;
  const auto m = NeuralModel::initialize(cfg, {words});
  EXPECT_THROW(encode_sentence(words, m, true), UsageError);
  std::mt19937_64 rng(1);
  EXPECT_NE(encode_sentence(words, m, true, &rng), encode_sentence(words, m, false));
}

TEST(EncodeSentence, ReversalDoesNotJustReverseRows) {
  const std::vector<std::string> words = {"pt", "has", "chest", "pain"};
  const auto m = tiny_model(6, {words});
  const std::vector<std::string> reversed(words.rbegin(), words.rend());
  const Lattice a = encode_sentence(words, m, false);
  const Lattice b = encode_sentence(reversed, m, false);
  const Lattice b_flipped = b.colwise().reverse();
  EXPECT_GT((a - b_flipped).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EncodeSentence, CharRepresentationIndependentOfPosition) {
  const auto m = tiny_model(7, {{"pain", "x", "y"}});
  const auto a = sentence_forward({"pain", "x", "y"}, m, nullptr);
  const auto b = sentence_forward({"x", "y", "pain"}, m, nullptr);
  EXPECT_EQ(a.chars[0].repr, b.chars[2].repr);
  EXPECT_EQ(a.chars[0].repr, char_encode("pain", m));
}

TEST(NeuralGradient, MatchesFiniteDifferencesOnEveryTensor) {
  const std::vector<NeuralExample> batch = {{{"pt", "has", "pain"}, {Label::kO, Label::kO, Label::kBProblem}}};
  auto m = tiny_model(8, {batch[0].first});
  const auto r = testing::check_neural_gradient(m, batch, 1e-4, 1e-6);
  EXPECT_EQ(r.per_tensor.size(), 17u);
  for (const auto& [name, err] : r.per_tensor) EXPECT_LT(err, 1e-4) << name;
}

TEST(NeuralGradient, SharedCharWeightsSumOverPositions) {
  // the same word twice: the char-LSTM gradient is the sum of both positions'
  // contributions, so it differs from a single occurrence
  const std::vector<NeuralExample> twice = {{{"ab", "ab"}, {Label::kBTest, Label::kO}}};
  auto m = tiny_model(9, {twice[0].first});
  const auto r = testing::check_neural_gradient(m, twice, 1e-4, 1e-6);
  EXPECT_LT(r.per_tensor.at("char_fw.W"), 1e-4);
  EXPECT_LT(r.per_tensor.at("char_bw.U"), 1e-4);
  EXPECT_LT(r.per_tensor.at("char_embedding"), 1e-4);
}

TEST(NeuralGradient, UnusedRowsHaveZeroGradient) {
  const std::vector<NeuralExample> batch = {{{"pt", "has", "pain"}, {Label::kO, Label::kO, Label::kBProblem}}};
  const auto m = tiny_model(10, {batch[0].first, {"xyz"}});
  const auto [loss, grad] = neural_nll_and_gradient(m, batch);
  EXPECT_GE(loss, 0.0);
  for (auto id : m.char_ids("xyz")) EXPECT_TRUE((grad.char_embedding.row(static_cast<Eigen::Index>(id)).array() == 0).all());
  EXPECT_TRUE((grad.word_embedding.row(static_cast<Eigen::Index>(m.word_id("xyz"))).array() == 0).all());
}

TEST(NeuralGradient, FrozenWordTableGetsNoGradient) {
  const std::vector<NeuralExample> batch = {{{"pt", "has"}, {Label::kO, Label::kO}}};
  auto cfg = tiny_neural_config();
  cfg.freeze_word_embeddings = true;
  const auto m = NeuralModel::initialize(cfg, {batch[0].first});
  EXPECT_TRUE((neural_nll_and_gradient(m, batch).second.word_embedding.array() == 0).all());
}

TEST(NeuralTrain, LossFallsAndIsDeterministic) {
  const auto corpus = synthetic_examples(11, 10, 50);
  ASSERT_EQ(corpus.size(), 50u);
  auto cfg = tiny_neural_config();
  cfg.epochs = 10;
  cfg.learning_rate = 0.05;
  cfg.dropout_rate = 0.2;
  const auto a = train_neural(corpus, cfg);
  ASSERT_EQ(a.log.size(), 10u);
  EXPECT_LT(a.log.back().loss, a.log.front().loss);
  cfg.epochs = 1;
  const auto b = train_neural(corpus, cfg);
  const auto c = train_neural(corpus, cfg);
  EXPECT_EQ(b.log[0].loss, c.log[0].loss);
  EXPECT_EQ(b.log[0].loss, a.log[0].loss);
  EXPECT_EQ(b.model.serialize(), c.model.serialize());
}

TEST(NeuralTrain, KeepsBestDevEpoch) {
  const auto corpus = synthetic_examples(12, 6, 30);
  std::vector<AnnotatedDocument> dev;
  for (const auto& d : generate_synthetic_corpus(13, 3).documents) dev.push_back({d.document, d.spans});
  auto cfg = tiny_neural_config();
  cfg.epochs = 3;
  cfg.learning_rate = 0.05;
  const auto r = train_neural(corpus, cfg, dev);
  ASSERT_TRUE(r.best_epoch.has_value());
  double best = -1;
  for (const auto& e : r.log) best = std::max(best, e.dev_f1.value());
  EXPECT_EQ(r.log[static_cast<std::size_t>(*r.best_epoch - 1)].dev_f1.value(), best);
  EXPECT_EQ(micro_f1(r.model, dev), best);
}

TEST(NeuralTrain, DivergenceIsReported) {
  const auto corpus = synthetic_examples(14, 2, 10);
  auto cfg = tiny_neural_config();
  cfg.learning_rate = 1e6;
  cfg.clip_norm = 1e6;
  cfg.epochs = 5;
  try {
    train_neural(corpus, cfg);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(NeuralPredict, EmptyDocumentAndDeterminism) {
  const auto corpus = synthetic_examples(15, 2, 10);
  auto cfg = tiny_neural_config();
  cfg.epochs = 1;
  const auto m = train_neural(corpus, cfg).model;
  EXPECT_TRUE(predict_neural(m, load_document("", "empty")).empty());
  const auto doc = generate_synthetic_corpus(16, 1).documents[0].document;
  EXPECT_EQ(predict_neural(m, doc), predict_neural(m, doc));
}

TEST(NeuralModelFile, RoundTrip) {
  const auto m = tiny_model(17, {{"Pt", "has", "\xC2\xB0" "C", "pain"}});
  const auto text = m.serialize();
  const auto loaded = NeuralModel::deserialize(text);
  EXPECT_EQ(loaded, m);
  EXPECT_EQ(loaded.serialize(), text);
  const std::vector<std::string> words = {"pt", "unseen", "pain"};
  EXPECT_EQ(encode_sentence(words, loaded, false), encode_sentence(words, m, false));
}

TEST(NeuralModelFile, Errors) {
  const auto text = tiny_model(18, {{"a"}}).serialize();
  auto bumped = text;
  bumped.replace(bumped.find(" 1\n"), 3, " 7\n");
  try {
    NeuralModel::deserialize(bumped);
    FAIL() << "expected a version error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 1, found 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(NeuralModel::deserialize(text.substr(0, text.size() / 2)), DataError);
  EXPECT_THROW(NeuralModel::deserialize("cce-crf-model 1\n"), DataError);
}

}  // namespace
}  // namespace cce
