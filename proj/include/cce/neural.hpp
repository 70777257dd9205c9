#pragma once

// Word + character BiLSTM-CRF tagger.
//
// For every token, a shared character BiLSTM reads the token's characters; its
// final forward and backward states (2*h_c) are concatenated to the token's word
// embedding (d_w). A word-level BiLSTM runs over those d_w + 2*h_c inputs, a
// linear layer maps each 2*h_w state to 7 emission scores, and the linear-chain
// CRF layer from lattice.hpp supplies the loss and the decoder.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/eval.hpp"
#include "cce/lattice.hpp"
#include "cce/lstm.hpp"
#include "cce/numeric_io.hpp"
#include "cce/text.hpp"

namespace cce {

struct NeuralConfig {
  int d_c = 25;   // character embedding width
  int h_c = 25;   // character LSTM hidden size per direction
  int d_w = 100;  // word embedding width
  int h_w = 100;  // word LSTM hidden size per direction
  double learning_rate = 0.01;
  double dropout_rate = 0.5;
  double clip_norm = 5.0;
  int epochs = 20;
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool freeze_word_embeddings = false;
  std::string embedding_path;  // empty: random word table

  void validate() const {
    if (d_c < 1 || h_c < 1 || d_w < 1 || h_w < 1) throw UsageError("lstm dimensions must be positive");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw UsageError("lstm learning_rate must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw UsageError("lstm dropout_rate must lie in [0, 1)");
    if (!(clip_norm > 0)) throw UsageError("lstm clip_norm must be positive");
    if (epochs < 1) throw UsageError("lstm epochs must be >= 1");
    if (batch_size < 1) throw UsageError("lstm batch_size must be >= 1");
  }

  friend bool operator==(const NeuralConfig&, const NeuralConfig&) = default;
};

/// Every trainable tensor. Gradients use the same layout.
struct NeuralParams {
  MatrixXd char_embedding;  // |C| x d_c
  MatrixXd word_embedding;  // |V| x d_w
  LstmParams char_fw, char_bw;
  LstmParams word_fw, word_bw;
  MatrixXd projection;       // 2*h_w x 7
  MatrixXd projection_bias;  // 7 x 1
  MatrixXd transitions;      // 9 x 9

  static NeuralParams zeros_like(const NeuralParams& p) {
    NeuralParams z;
    z.char_embedding = MatrixXd::Zero(p.char_embedding.rows(), p.char_embedding.cols());
    z.word_embedding = MatrixXd::Zero(p.word_embedding.rows(), p.word_embedding.cols());
    z.char_fw = LstmParams::zeros(p.char_fw.input(), p.char_fw.hidden());
    z.char_bw = LstmParams::zeros(p.char_bw.input(), p.char_bw.hidden());
    z.word_fw = LstmParams::zeros(p.word_fw.input(), p.word_fw.hidden());
    z.word_bw = LstmParams::zeros(p.word_bw.input(), p.word_bw.hidden());
    z.projection = MatrixXd::Zero(p.projection.rows(), p.projection.cols());
    z.projection_bias = MatrixXd::Zero(p.projection_bias.rows(), 1);
    z.transitions = MatrixXd::Zero(kNumStates, kNumStates);
    return z;
  }

  /// Visits (name, tensor) in a fixed order.
  template <typename Self, typename F>
  static void for_each(Self& self, F&& f) {
    f("char_embedding", self.char_embedding);
    f("word_embedding", self.word_embedding);
    f("char_fw.W", self.char_fw.W);
    f("char_fw.U", self.char_fw.U);
    f("char_fw.b", self.char_fw.b);
    f("char_bw.W", self.char_bw.W);
    f("char_bw.U", self.char_bw.U);
    f("char_bw.b", self.char_bw.b);
    f("word_fw.W", self.word_fw.W);
    f("word_fw.U", self.word_fw.U);
    f("word_fw.b", self.word_fw.b);
    f("word_bw.W", self.word_bw.W);
    f("word_bw.U", self.word_bw.U);
    f("word_bw.b", self.word_bw.b);
    f("projection", self.projection);
    f("projection_bias", self.projection_bias);
    f("transitions", self.transitions);
  }
  template <typename F> void for_each(F&& f) { for_each(*this, std::forward<F>(f)); }
  template <typename F> void for_each(F&& f) const { for_each(*this, std::forward<F>(f)); }

  friend bool operator==(const NeuralParams& a, const NeuralParams& b) {
    return a.char_embedding == b.char_embedding && a.word_embedding == b.word_embedding && a.char_fw == b.char_fw &&
           a.char_bw == b.char_bw && a.word_fw == b.word_fw && a.word_bw == b.word_bw &&
           a.projection == b.projection && a.projection_bias == b.projection_bias && a.transitions == b.transitions;
  }
};

namespace detail {

// Uniform in [lo, hi) from the top 53 bits; portable across standard libraries.
inline double draw_uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline void fill_uniform(MatrixXd& m, std::mt19937_64& rng, double lo, double hi) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = draw_uniform(rng, lo, hi);
}

inline LstmParams init_lstm(Eigen::Index input, Eigen::Index hidden, std::mt19937_64& rng) {
  LstmParams p = LstmParams::zeros(input, hidden);
  fill_uniform(p.W, rng, -0.1, 0.1);
  fill_uniform(p.U, rng, -0.1, 0.1);
  fill_uniform(p.b, rng, -0.1, 0.1);
  p.b.block(hidden, 0, hidden, 1).setOnes();  // forget gate
  return p;
}

}  // namespace detail

struct EmbeddingLoad {
  MatrixXd table;  // one row per vocab entry
  std::size_t hits = 0;
  double hit_rate = 0;
  std::vector<std::string> missing;
};

/// Reads whitespace-separated `token v1 ... vd` lines. Rows of `vocab` found in
/// the file (matched on lowercased tokens, first occurrence wins) are copied;
/// the rest are drawn uniformly from [-0.25, 0.25) in vocab order.
inline EmbeddingLoad load_word_embeddings_text(std::string_view text, const std::vector<std::string>& vocab,
                                               int expected_dim, std::mt19937_64& rng) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(to_lower(vocab[i]), i);

  std::vector<std::optional<VectorXd>> found(vocab.size());
  std::optional<std::size_t> dim;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const auto fields = split_whitespace(lines[ln]);
    if (fields.size() < 2) throw ParseError(ln + 1, "embedding line has no vector");
    const auto d = fields.size() - 1;
    if (!dim) dim = d;
    if (d != *dim)
      throw ParseError(ln + 1, "ragged embedding line: " + std::to_string(d) + " values, expected " +
                                   std::to_string(*dim));
    auto it = index.find(to_lower(fields[0]));
    if (it == index.end() || found[it->second]) continue;
    VectorXd v(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      try {
        v(static_cast<Eigen::Index>(k)) = parse_double(fields[k + 1]);
      } catch (const DataError& e) {
        throw ParseError(ln + 1, e.what());
      }
    }
    found[it->second] = std::move(v);
  }
  if (dim && expected_dim > 0 && static_cast<int>(*dim) != expected_dim)
    throw DataError("embedding width " + std::to_string(*dim) + " does not match d_w=" + std::to_string(expected_dim));
  const auto width = expected_dim > 0 ? static_cast<Eigen::Index>(expected_dim)
                                      : static_cast<Eigen::Index>(dim.value_or(0));
  EmbeddingLoad out;
  out.table = MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), width);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (found[i]) {
      out.table.row(r) = found[i]->transpose();
      ++out.hits;
    } else {
      for (Eigen::Index c = 0; c < width; ++c) out.table(r, c) = detail::draw_uniform(rng, -0.25, 0.25);
      out.missing.push_back(vocab[i]);
    }
  }
  out.hit_rate = vocab.empty() ? 0.0 : static_cast<double>(out.hits) / static_cast<double>(vocab.size());
  return out;
}

inline EmbeddingLoad load_word_embeddings(const std::string& path, const std::vector<std::string>& vocab,
                                          int expected_dim, std::mt19937_64& rng) {
  return load_word_embeddings_text(read_file(path), vocab, expected_dim, rng);
}

class NeuralModel {
 public:
  static constexpr int kFormatVersion = 1;
  static constexpr std::string_view kMagic = "cce-lstm-model";
  static constexpr std::string_view kUnknownWord = "<unk>";

  NeuralModel() = default;

  /// Builds vocabularies from `sentences` and draws initial parameters. Word
  /// rows come from `embedding_text` when given (same format as the embedding
  /// file); otherwise every row is random.
  static NeuralModel initialize(const NeuralConfig& config, const std::vector<std::vector<std::string>>& sentences,
                                const std::string* embedding_text = nullptr, EmbeddingLoad* report = nullptr) {
    config.validate();
    NeuralModel m;
    m.config_ = config;
    std::set<char32_t> chars;
    std::vector<std::string> words;
    std::set<std::string> seen;
    for (const auto& s : sentences)
      for (const auto& w : s) {
        for (auto cp : decode_utf8(w)) chars.insert(cp);
        auto lw = to_lower(w);
        if (seen.insert(lw).second) words.push_back(lw);
      }
    std::sort(words.begin(), words.end());
    m.chars_.push_back(0);  // UNK
    for (auto cp : chars)
      if (cp != 0) m.chars_.push_back(cp);
    m.words_.emplace_back(kUnknownWord);
    for (auto& w : words)
      if (w != kUnknownWord) m.words_.push_back(w);
    m.rebuild_indices();

    std::mt19937_64 rng(config.seed);
    auto& p = m.params_;
    p.char_embedding = MatrixXd(static_cast<Eigen::Index>(m.chars_.size()), config.d_c);
    detail::fill_uniform(p.char_embedding, rng, -0.1, 0.1);
    {
      auto load = load_word_embeddings_text(embedding_text ? std::string_view(*embedding_text) : std::string_view{},
                                            m.words_, config.d_w, rng);
      p.word_embedding = std::move(load.table);
      if (report) *report = std::move(load);
    }
    p.char_fw = detail::init_lstm(config.d_c, config.h_c, rng);
    p.char_bw = detail::init_lstm(config.d_c, config.h_c, rng);
    p.word_fw = detail::init_lstm(config.d_w + 2 * config.h_c, config.h_w, rng);
    p.word_bw = detail::init_lstm(config.d_w + 2 * config.h_c, config.h_w, rng);
    p.projection = MatrixXd(2 * config.h_w, kNumLabels);
    detail::fill_uniform(p.projection, rng, -0.1, 0.1);
    p.projection_bias = MatrixXd(kNumLabels, 1);
    detail::fill_uniform(p.projection_bias, rng, -0.1, 0.1);
    p.transitions = MatrixXd(kNumStates, kNumStates);
    detail::fill_uniform(p.transitions, rng, -0.1, 0.1);
    return m;
  }

  const NeuralConfig& config() const { return config_; }
  NeuralParams& params() { return params_; }
  const NeuralParams& params() const { return params_; }
  const std::vector<std::string>& word_vocab() const { return words_; }
  const std::vector<char32_t>& char_vocab() const { return chars_; }

  std::size_t word_id(std::string_view word) const {
    auto it = word_index_.find(to_lower(word));
    return it == word_index_.end() ? 0 : it->second;
  }

  std::vector<std::size_t> char_ids(std::string_view word) const {
    std::vector<std::size_t> out;
    for (auto cp : decode_utf8(word)) {
      auto it = char_index_.find(cp);
      out.push_back(it == char_index_.end() ? 0 : it->second);
    }
    return out;
  }

  Transitions transitions() const { return params_.transitions; }

  std::string serialize() const;
  static NeuralModel deserialize(std::string_view text);

  friend bool operator==(const NeuralModel& a, const NeuralModel& b) {
    return a.config_ == b.config_ && a.words_ == b.words_ && a.chars_ == b.chars_ && a.params_ == b.params_;
  }

 private:
  void rebuild_indices() {
    word_index_.clear();
    char_index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) word_index_.emplace(words_[i], i);
    for (std::size_t i = 1; i < chars_.size(); ++i) char_index_.emplace(chars_[i], i);
  }

  NeuralConfig config_;
  std::vector<std::string> words_;
  std::vector<char32_t> chars_;
  std::unordered_map<std::string, std::size_t> word_index_;
  std::unordered_map<char32_t, std::size_t> char_index_;
  NeuralParams params_;
};

// ---------------------------------------------------------------------------
// Forward pass

struct CharTrace {
  std::vector<std::size_t> ids;
  LstmTrace fw, bw;  // bw runs over the reversed character sequence
  VectorXd repr;     // fw final h ++ bw final h
};

struct SentenceTrace {
  std::vector<std::size_t> word_ids;
  std::vector<CharTrace> chars;
  std::vector<VectorXd> dropout_scale;  // per token; empty when dropout is off
  std::vector<VectorXd> inputs;         // word LSTM inputs after dropout
  LstmTrace word_fw, word_bw;           // word_bw[k] is position T-1-k
  std::vector<VectorXd> states;         // per position, fw h ++ bw h
  Lattice emissions;
};

inline CharTrace char_forward(std::string_view word, const NeuralModel& model) {
  const auto& p = model.params();
  CharTrace ct;
  ct.ids = model.char_ids(word);
  if (ct.ids.empty()) ct.ids.push_back(0);
  std::vector<VectorXd> xs;
  xs.reserve(ct.ids.size());
  for (auto id : ct.ids) xs.push_back(p.char_embedding.row(static_cast<Eigen::Index>(id)).transpose());
  ct.fw = lstm_forward(p.char_fw, xs);
  std::reverse(xs.begin(), xs.end());
  ct.bw = lstm_forward(p.char_bw, xs);
  const auto h = p.char_fw.hidden();
  ct.repr.resize(2 * h);
  ct.repr << ct.fw.back().h, ct.bw.back().h;
  return ct;
}

/// Character-level representation of one word (length 2*h_c).
inline VectorXd char_encode(std::string_view word, const NeuralModel& model) {
  return char_forward(word, model).repr;
}

/// Full forward pass. `dropout_rng` enables inverted dropout on the
/// concatenated word representation; pass nullptr for deterministic inference.
inline SentenceTrace sentence_forward(const std::vector<std::string>& words, const NeuralModel& model,
                                      std::mt19937_64* dropout_rng) {
  if (words.empty()) throw DataError("cannot encode an empty sentence");
  const auto& p = model.params();
  const auto& cfg = model.config();
  const auto T = words.size();
  const auto d_w = p.word_embedding.cols();
  const auto two_hc = 2 * p.char_fw.hidden();
  SentenceTrace tr;
  tr.word_ids.reserve(T);
  tr.chars.reserve(T);
  tr.inputs.reserve(T);
  const bool dropout = dropout_rng && cfg.dropout_rate > 0;
  const double keep = 1.0 - cfg.dropout_rate;
  for (const auto& w : words) {
    tr.word_ids.push_back(model.word_id(w));
    tr.chars.push_back(char_forward(w, model));
    VectorXd x(d_w + two_hc);
    x << p.word_embedding.row(static_cast<Eigen::Index>(tr.word_ids.back())).transpose(), tr.chars.back().repr;
    if (dropout) {
      VectorXd scale(x.size());
      for (Eigen::Index k = 0; k < x.size(); ++k)
        scale(k) = detail::draw_uniform(*dropout_rng, 0.0, 1.0) < keep ? 1.0 / keep : 0.0;
      x = x.cwiseProduct(scale);
      tr.dropout_scale.push_back(std::move(scale));
    }
    tr.inputs.push_back(std::move(x));
  }
  tr.word_fw = lstm_forward(p.word_fw, tr.inputs);
  std::vector<VectorXd> reversed(tr.inputs.rbegin(), tr.inputs.rend());
  tr.word_bw = lstm_forward(p.word_bw, reversed);

  const auto hw = p.word_fw.hidden();
  tr.states.resize(T);
  tr.emissions.resize(static_cast<Eigen::Index>(T), kNumLabels);
  for (std::size_t t = 0; t < T; ++t) {
    VectorXd s(2 * hw);
    s << tr.word_fw[t].h, tr.word_bw[T - 1 - t].h;
    tr.emissions.row(static_cast<Eigen::Index>(t)) = (p.projection.transpose() * s + p.projection_bias.col(0)).transpose();
    tr.states[t] = std::move(s);
  }
  return tr;
}

/// T x 7 emission scores. With train_mode set, dropout is drawn from `rng`.
inline Lattice encode_sentence(const std::vector<std::string>& words, const NeuralModel& model, bool train_mode,
                               std::mt19937_64* rng = nullptr) {
  if (train_mode && !rng) throw UsageError("train_mode encoding needs a random generator for dropout");
  return sentence_forward(words, model, train_mode ? rng : nullptr).emissions;
}

// ---------------------------------------------------------------------------
// Backward pass

struct NeuralGradient {
  NeuralParams d;
  std::vector<std::size_t> word_rows;  // touched rows of d.word_embedding
  std::vector<std::size_t> char_rows;  // touched rows of d.char_embedding

  explicit NeuralGradient(const NeuralParams& like) : d(NeuralParams::zeros_like(like)) {}

  void touch_word(std::size_t r) {
    if (std::find(word_rows.begin(), word_rows.end(), r) == word_rows.end()) word_rows.push_back(r);
  }
  void touch_char(std::size_t r) {
    if (std::find(char_rows.begin(), char_rows.end(), r) == char_rows.end()) char_rows.push_back(r);
  }

  void zero() {
    for (auto r : word_rows) d.word_embedding.row(static_cast<Eigen::Index>(r)).setZero();
    for (auto r : char_rows) d.char_embedding.row(static_cast<Eigen::Index>(r)).setZero();
    word_rows.clear();
    char_rows.clear();
    d.for_each([](std::string_view name, MatrixXd& m) {
      if (name != "char_embedding" && name != "word_embedding") m.setZero();
    });
  }

  /// Global L2 norm; only touched embedding rows can be non-zero.
  double norm() const {
    double s = 0;
    d.for_each([&](std::string_view name, const MatrixXd& m) {
      if (name != "char_embedding" && name != "word_embedding") s += m.squaredNorm();
    });
    for (auto r : word_rows) s += d.word_embedding.row(static_cast<Eigen::Index>(r)).squaredNorm();
    for (auto r : char_rows) s += d.char_embedding.row(static_cast<Eigen::Index>(r)).squaredNorm();
    return std::sqrt(s);
  }

  void scale(double k) {
    d.for_each([&](std::string_view name, MatrixXd& m) {
      if (name != "char_embedding" && name != "word_embedding") m *= k;
    });
    for (auto r : word_rows) d.word_embedding.row(static_cast<Eigen::Index>(r)) *= k;
    for (auto r : char_rows) d.char_embedding.row(static_cast<Eigen::Index>(r)) *= k;
  }

  /// Name of the first tensor holding a non-finite entry, if any.
  std::optional<std::string> first_non_finite() const {
    std::optional<std::string> bad;
    d.for_each([&](std::string_view name, const MatrixXd& m) {
      if (!bad && !m.allFinite()) bad = std::string(name);
    });
    return bad;
  }
};

/// Adds grad_scale * d(nll)/d(params) for one sentence into `grad`; returns nll.
inline double sentence_backward(const SentenceTrace& tr, const TagSequence& gold, const NeuralModel& model,
                                double grad_scale, NeuralGradient& grad) {
  const auto& p = model.params();
  const auto T = tr.word_ids.size();
  if (gold.size() != T) throw DataError("gold tag count does not match sentence length");
  const auto hw = p.word_fw.hidden();
  const auto hc = p.char_fw.hidden();
  const auto d_w = p.word_embedding.cols();

  Lattice d_emit;
  Transitions d_trans = Transitions::Zero();
  const Transitions trans = p.transitions;
  const double nll = chain_nll_gradient(tr.emissions, trans, gold, d_emit, d_trans);
  d_emit *= grad_scale;
  grad.d.transitions += grad_scale * d_trans;

  std::vector<VectorXd> dh_fw(T), dh_bw(T);
  for (std::size_t t = 0; t < T; ++t) {
    const VectorXd de = d_emit.row(static_cast<Eigen::Index>(t)).transpose();
    grad.d.projection.noalias() += tr.states[t] * de.transpose();
    grad.d.projection_bias.col(0) += de;
    const VectorXd ds = p.projection * de;
    dh_fw[t] = ds.head(hw);
    dh_bw[T - 1 - t] = ds.tail(hw);
  }
  const auto dx_fw = lstm_backward(p.word_fw, tr.word_fw, dh_fw, grad.d.word_fw);
  const auto dx_bw = lstm_backward(p.word_bw, tr.word_bw, dh_bw, grad.d.word_bw);

  std::vector<VectorXd> none;
  for (std::size_t t = 0; t < T; ++t) {
    VectorXd dx = dx_fw[t] + dx_bw[T - 1 - t];
    if (!tr.dropout_scale.empty()) dx = dx.cwiseProduct(tr.dropout_scale[t]);
    if (!model.config().freeze_word_embeddings) {
      grad.touch_word(tr.word_ids[t]);
      grad.d.word_embedding.row(static_cast<Eigen::Index>(tr.word_ids[t])) += dx.head(d_w).transpose();
    }
    const VectorXd d_repr = dx.tail(2 * hc);
    const auto& ct = tr.chars[t];
    const auto n = ct.ids.size();
    std::vector<VectorXd> dh_c(n);
    dh_c[n - 1] = d_repr.head(hc);
    const auto dxc_fw = lstm_backward(p.char_fw, ct.fw, dh_c, grad.d.char_fw);
    dh_c[n - 1] = d_repr.tail(hc);
    const auto dxc_bw = lstm_backward(p.char_bw, ct.bw, dh_c, grad.d.char_bw);
    for (std::size_t k = 0; k < n; ++k) {
      grad.touch_char(ct.ids[k]);
      grad.d.char_embedding.row(static_cast<Eigen::Index>(ct.ids[k])) +=
          (dxc_fw[k] + dxc_bw[n - 1 - k]).transpose();
    }
  }
  return nll;
}

using NeuralExample = std::pair<std::vector<std::string>, TagSequence>;

/// Sum of sentence NLLs and the exact gradient for every parameter tensor.
/// Dropout is applied only when `dropout_rng` is non-null.
inline std::pair<double, NeuralParams> neural_nll_and_gradient(const NeuralModel& model,
                                                               const std::vector<NeuralExample>& batch,
                                                               std::mt19937_64* dropout_rng = nullptr) {
  if (batch.empty()) throw DataError("neural_nll_and_gradient requires a non-empty batch");
  NeuralGradient grad(model.params());
  double loss = 0;
  for (const auto& [words, tags] : batch) loss += sentence_backward(sentence_forward(words, model, dropout_rng), tags, model, 1.0, grad);
  if (auto bad = grad.first_non_finite()) throw NumericalError("non-finite gradient in tensor " + *bad);
  return {loss, std::move(grad.d)};
}

// ---------------------------------------------------------------------------
// Prediction and training

inline TagSequence decode_neural(const std::vector<std::string>& words, const NeuralModel& model) {
  return viterbi_decode(encode_sentence(words, model, false), model.transitions());
}

inline std::vector<ConceptSpan> predict_neural(const NeuralModel& model, const Document& doc) {
  std::vector<ConceptSpan> spans;
  for (const auto& sentence : doc.sentences) {
    auto found = iob_to_spans(decode_neural(sentence.words(), model), sentence);
    spans.insert(spans.end(), found.begin(), found.end());
  }
  return spans;
}

struct AnnotatedDocument {
  Document document;
  std::vector<ConceptSpan> spans;
};

struct NeuralEpochLog {
  int epoch = 0;
  double loss = 0;  // mean per-sentence NLL over the epoch's updates
  std::optional<double> dev_f1;
};

struct NeuralTrainResult {
  NeuralModel model;
  std::vector<NeuralEpochLog> log;
  std::optional<int> best_epoch;
};

inline double micro_f1(const NeuralModel& model, const std::vector<AnnotatedDocument>& docs) {
  DocumentSpans gold, pred;
  for (const auto& d : docs) {
    gold[d.document.doc_id] = d.spans;
    pred[d.document.doc_id] = predict_neural(model, d.document);
  }
  return evaluate(gold, pred).micro.f1;
}

/// Mini-batch gradient descent with global-norm clipping. When `dev` is
/// non-empty, the parameters from the epoch with the best dev micro F1 are
/// returned (earliest epoch on ties).
inline NeuralTrainResult train_neural(const std::vector<NeuralExample>& corpus, const NeuralConfig& config,
                                      const std::vector<AnnotatedDocument>& dev = {},
                                      const std::function<void(const NeuralEpochLog&)>& on_epoch = {},
                                      std::optional<NeuralModel> initial = std::nullopt) {
  config.validate();
  std::vector<const NeuralExample*> data;
  for (const auto& ex : corpus) {
    if (ex.first.empty()) continue;
    if (ex.first.size() != ex.second.size()) throw DataError("tag sequence does not match sentence length");
    data.push_back(&ex);
  }
  if (data.empty()) throw DataError("cannot train the LSTM-CRF on an empty corpus");

  NeuralTrainResult result;
  if (initial) {
    result.model = std::move(*initial);
  } else {
    std::vector<std::vector<std::string>> sentences;
    for (const auto* ex : data) sentences.push_back(ex->first);
    std::string emb;
    if (!config.embedding_path.empty()) emb = read_file(config.embedding_path);
    result.model = NeuralModel::initialize(config, sentences, config.embedding_path.empty() ? nullptr : &emb);
  }
  NeuralModel& model = result.model;
  auto& p = model.params();

  // Separate streams so that dropout draws never perturb the shuffle order.
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5DEECE66DULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  NeuralGradient grad(p);
  std::optional<NeuralParams> best;
  double best_f1 = -1;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng() % i)]);
    double total = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const double inv = 1.0 / static_cast<double>(e - b);
      grad.zero();
      for (std::size_t k = b; k < e; ++k) {
        const auto& [words, tags] = *data[order[k]];
        const double nll = sentence_backward(sentence_forward(words, model, &dropout_rng), tags, model, inv, grad);
        if (!std::isfinite(nll) || nll > 1e6)
          throw NumericalError("LSTM-CRF training diverged at epoch " + std::to_string(epoch) + " (sentence loss " +
                               format_double(nll) + ")");
        total += nll;
      }
      const double norm = grad.norm();
      if (!std::isfinite(norm)) {
        const auto bad = grad.first_non_finite();
        throw NumericalError("non-finite gradient in tensor " + bad.value_or("?") + " at epoch " + std::to_string(epoch));
      }
      if (norm > config.clip_norm) grad.scale(config.clip_norm / norm);

      const double lr = config.learning_rate;
      std::vector<const MatrixXd*> dense_grads;
      grad.d.for_each([&](std::string_view, const MatrixXd& g) { dense_grads.push_back(&g); });
      std::size_t slot = 0;
      p.for_each([&](std::string_view name, MatrixXd& m) {
        const MatrixXd& g = *dense_grads[slot++];
        if (name == "char_embedding" || name == "word_embedding") return;
        m -= lr * g;
      });
      for (auto r : grad.word_rows)
        p.word_embedding.row(static_cast<Eigen::Index>(r)) -= lr * grad.d.word_embedding.row(static_cast<Eigen::Index>(r));
      for (auto r : grad.char_rows)
        p.char_embedding.row(static_cast<Eigen::Index>(r)) -= lr * grad.d.char_embedding.row(static_cast<Eigen::Index>(r));
    }
    NeuralEpochLog entry{epoch, total / static_cast<double>(data.size()), std::nullopt};
    if (!std::isfinite(entry.loss) || entry.loss > 1e6)
      throw NumericalError("LSTM-CRF training diverged at epoch " + std::to_string(epoch));
    if (!dev.empty()) {
      entry.dev_f1 = micro_f1(model, dev);
      if (*entry.dev_f1 > best_f1) {
        best_f1 = *entry.dev_f1;
        best = p;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (best) p = std::move(*best);
  return result;
}

// ---------------------------------------------------------------------------
// Model file
//
//   cce-lstm-model 1
//   config d_c=<i> h_c=<i> d_w=<i> h_w=<i> learning_rate=<d> dropout_rate=<d> clip_norm=<d> epochs=<i>
//          batch_size=<i> seed=<u> freeze_word_embeddings=<0|1>          (one line)
//   embedding_path <path, possibly empty>
//   labels O B-problem I-problem B-test I-test B-treatment I-treatment
//   chars <n>
//   <n lines: decimal code point; the first line is 0 for the unknown character>
//   words <n>
//   <n lines: lowercased word; the first line is <unk>>
//   tensor <name> <rows> <cols>        (17 tensors, in NeuralParams::for_each order)
//   <rows lines of cols doubles>
//   end

inline std::string NeuralModel::serialize() const {
  const auto& c = config_;
  std::string out;
  out += std::string(kMagic) + " " + std::to_string(kFormatVersion) + "\n";
  out += "config d_c=" + std::to_string(c.d_c) + " h_c=" + std::to_string(c.h_c) + " d_w=" + std::to_string(c.d_w) +
         " h_w=" + std::to_string(c.h_w) + " learning_rate=" + format_double(c.learning_rate) +
         " dropout_rate=" + format_double(c.dropout_rate) + " clip_norm=" + format_double(c.clip_norm) +
         " epochs=" + std::to_string(c.epochs) + " batch_size=" + std::to_string(c.batch_size) +
         " seed=" + std::to_string(c.seed) + " freeze_word_embeddings=" + (c.freeze_word_embeddings ? "1" : "0") + "\n";
  out += "embedding_path " + c.embedding_path + "\n";
  out += "labels";
  for (auto name : kLabelNames) out += " " + std::string(name);
  out += "\n";
  out += "chars " + std::to_string(chars_.size()) + "\n";
  for (auto cp : chars_) out += std::to_string(static_cast<std::uint32_t>(cp)) + "\n";
  out += "words " + std::to_string(words_.size()) + "\n";
  for (const auto& w : words_) out += w + "\n";
  params_.for_each([&](std::string_view name, const MatrixXd& m) {
    out += "tensor " + std::string(name) + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        if (k) out += ' ';
        out += format_double(m(r, k));
      }
      out += '\n';
    }
  });
  out += "end\n";
  return out;
}

inline NeuralModel NeuralModel::deserialize(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= lines.size()) throw ParseError(i + 1, "unexpected end of LSTM model file");
    return lines[i++];
  };
  auto fail = [&](const std::string& what) { return ParseError(i, what); };

  {
    const auto parts = split_whitespace(next());
    if (parts.size() != 2 || parts[0] != kMagic) throw DataError("not a " + std::string(kMagic) + " file");
    if (parts[1] != std::to_string(kFormatVersion))
      throw DataError("model format version mismatch: expected " + std::to_string(kFormatVersion) + ", found " +
                      parts[1]);
  }
  NeuralModel m;
  {
    auto parts = split_whitespace(next());
    if (parts.empty() || parts[0] != "config") throw fail("bad config line");
    auto& c = m.config_;
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const auto eq = parts[k].find('=');
      if (eq == std::string::npos) throw fail("bad config entry");
      const std::string key = parts[k].substr(0, eq);
      const std::string_view v = std::string_view(parts[k]).substr(eq + 1);
      if (key == "d_c") c.d_c = parse_int<int>(v);
      else if (key == "h_c") c.h_c = parse_int<int>(v);
      else if (key == "d_w") c.d_w = parse_int<int>(v);
      else if (key == "h_w") c.h_w = parse_int<int>(v);
      else if (key == "learning_rate") c.learning_rate = parse_double(v);
      else if (key == "dropout_rate") c.dropout_rate = parse_double(v);
      else if (key == "clip_norm") c.clip_norm = parse_double(v);
      else if (key == "epochs") c.epochs = parse_int<int>(v);
      else if (key == "batch_size") c.batch_size = parse_int<int>(v);
      else if (key == "seed") c.seed = parse_int<std::uint64_t>(v);
      else if (key == "freeze_word_embeddings") c.freeze_word_embeddings = parse_int<int>(v) != 0;
      else throw fail("unknown config key '" + key + "'");
    }
  }
  {
    const auto& line = next();
    if (line.rfind("embedding_path", 0) != 0) throw fail("expected embedding_path line");
    m.config_.embedding_path = line.size() > 15 ? line.substr(15) : std::string{};
  }
  {
    auto parts = split_whitespace(next());
    if (parts.size() != kNumLabels + 1 || parts[0] != "labels") throw fail("bad labels line");
    for (std::size_t y = 0; y < kNumLabels; ++y)
      if (parts[y + 1] != kLabelNames[y]) throw fail("label alphabet differs from this build");
  }
  auto count = [&](std::string_view tag) {
    auto parts = split_whitespace(next());
    if (parts.size() != 2 || parts[0] != tag) throw fail("expected '" + std::string(tag) + " <n>'");
    return parse_int<std::size_t>(parts[1]);
  };
  const auto n_chars = count("chars");
  for (std::size_t k = 0; k < n_chars; ++k) m.chars_.push_back(static_cast<char32_t>(parse_int<std::uint32_t>(next())));
  const auto n_words = count("words");
  for (std::size_t k = 0; k < n_words; ++k) m.words_.push_back(next());
  if (m.chars_.empty() || m.words_.empty() || m.words_[0] != kUnknownWord) throw fail("vocabulary missing its unknown entry");
  m.rebuild_indices();

  const auto& c = m.config_;
  const auto hc = c.h_c, hw = c.h_w;
  const std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes = {
      {static_cast<Eigen::Index>(n_chars), c.d_c}, {static_cast<Eigen::Index>(n_words), c.d_w},
      {4 * hc, c.d_c}, {4 * hc, hc}, {4 * hc, 1},
      {4 * hc, c.d_c}, {4 * hc, hc}, {4 * hc, 1},
      {4 * hw, c.d_w + 2 * hc}, {4 * hw, hw}, {4 * hw, 1},
      {4 * hw, c.d_w + 2 * hc}, {4 * hw, hw}, {4 * hw, 1},
      {2 * hw, static_cast<Eigen::Index>(kNumLabels)}, {static_cast<Eigen::Index>(kNumLabels), 1},
      {static_cast<Eigen::Index>(kNumStates), static_cast<Eigen::Index>(kNumStates)}};
  std::size_t tensor = 0;
  m.params_.for_each([&](std::string_view name, MatrixXd& t) {
    auto parts = split_whitespace(next());
    if (parts.size() != 4 || parts[0] != "tensor" || parts[1] != name) throw fail("expected tensor " + std::string(name));
    const auto rows = parse_int<Eigen::Index>(parts[2]);
    const auto cols = parse_int<Eigen::Index>(parts[3]);
    if (rows != shapes[tensor].first || cols != shapes[tensor].second)
      throw fail("tensor " + std::string(name) + " has shape " + parts[2] + "x" + parts[3] + ", expected " +
                 std::to_string(shapes[tensor].first) + "x" + std::to_string(shapes[tensor].second));
    t.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto values = split_whitespace(next());
      if (static_cast<Eigen::Index>(values.size()) != cols) throw fail("tensor row has the wrong width");
      for (Eigen::Index k = 0; k < cols; ++k) t(r, k) = parse_double(values[static_cast<std::size_t>(k)]);
    }
    if (!t.allFinite()) throw DataError("tensor " + std::string(name) + " contains a non-finite value");
    ++tensor;
  });
  if (next() != "end") throw fail("expected 'end'");
  return m;
}

}  // namespace cce
