#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/features.hpp"
#include "cce/labels.hpp"
#include "cce/lattice.hpp"
#include "cce/numeric_io.hpp"

namespace cce {

struct CrfTrainConfig {
  double learning_rate = 0.1;
  double decay = 0.9;  // multiplicative, per epoch
  int epochs = 50;
  double l2_lambda = 1e-4;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double grad_tolerance = 1e-5;  // stop once the full-objective gradient norm drops below this

  void validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw UsageError("crf learning_rate must be positive");
    if (!(decay > 0 && decay <= 1)) throw UsageError("crf decay must lie in (0, 1]");
    if (epochs < 1) throw UsageError("crf epochs must be >= 1");
    if (!(l2_lambda >= 0) || !std::isfinite(l2_lambda)) throw UsageError("crf l2_lambda must be finite and >= 0");
    if (batch_size < 1) throw UsageError("crf batch_size must be >= 1");
    if (!(grad_tolerance >= 0)) throw UsageError("crf grad_tolerance must be >= 0");
  }

  friend bool operator==(const CrfTrainConfig&, const CrfTrainConfig&) = default;
};

/// A sentence reduced to the model's feature ids; unknown features are dropped.
struct EncodedSentence {
  std::vector<std::vector<std::uint32_t>> feature_ids;  // per token
  TagSequence tags;
};

using FeaturizedSentence = std::pair<std::vector<FeatureVector>, TagSequence>;

struct CrfGradient {
  std::vector<double> emission;  // feature-major, kNumLabels per feature
  Transitions transitions = Transitions::Zero();

  double squared_norm() const {
    double s = transitions.squaredNorm();
    for (double g : emission) s += g * g;
    return s;
  }
};

class CrfModel {
 public:
  static constexpr int kFormatVersion = 1;
  static constexpr std::string_view kMagic = "cce-crf-model";

  CrfModel() = default;

  /// Registers every feature seen in `batch`, in order of first appearance.
  void build_alphabet(const std::vector<FeaturizedSentence>& batch) {
    for (const auto& [features, tags] : batch)
      for (const auto& fv : features)
        for (const auto& f : fv) intern(f.key());
  }

  std::size_t num_features() const { return feature_names_.size(); }
  std::size_t num_weights() const { return emission_.size() + kNumStates * kNumStates; }

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::vector<double>& emission_weights() { return emission_; }
  const std::vector<double>& emission_weights() const { return emission_; }
  Transitions& transitions() { return transitions_; }
  const Transitions& transitions() const { return transitions_; }

  double& weight(std::size_t feature, std::size_t label) { return emission_[feature * kNumLabels + label]; }
  double weight(std::size_t feature, std::size_t label) const { return emission_[feature * kNumLabels + label]; }

  std::optional<std::uint32_t> feature_id(const std::string& key) const {
    auto it = feature_index_.find(key);
    if (it == feature_index_.end()) return std::nullopt;
    return it->second;
  }

  double l2_lambda() const { return config_.l2_lambda; }
  const CrfTrainConfig& config() const { return config_; }
  void set_config(const CrfTrainConfig& c) { config_ = c; }
  const Lexicon& lexicon() const { return lexicon_; }
  void set_lexicon(Lexicon lex) { lexicon_ = std::move(lex); }

  EncodedSentence encode(const std::vector<FeatureVector>& features, TagSequence tags = {}) const {
    EncodedSentence out;
    out.feature_ids.resize(features.size());
    for (std::size_t t = 0; t < features.size(); ++t)
      for (const auto& f : features[t])
        if (auto id = feature_id(f.key())) out.feature_ids[t].push_back(*id);
    out.tags = std::move(tags);
    return out;
  }

  Lattice lattice(const EncodedSentence& s, double scale = 1.0) const {
    Lattice lat = Lattice::Zero(static_cast<Eigen::Index>(s.feature_ids.size()), kNumLabels);
    for (std::size_t t = 0; t < s.feature_ids.size(); ++t)
      for (auto id : s.feature_ids[t])
        for (std::size_t y = 0; y < kNumLabels; ++y) lat(static_cast<Eigen::Index>(t), y) += emission_[id * kNumLabels + y];
    if (scale != 1.0) lat *= scale;
    return lat;
  }

  Lattice lattice(const std::vector<FeatureVector>& features) const { return lattice(encode(features)); }

  TagSequence decode(const std::vector<FeatureVector>& features) const {
    return viterbi_decode(lattice(features), transitions_);
  }

  /// Tags every sentence of `doc` and returns the decoded spans.
  std::vector<ConceptSpan> predict(const Document& doc, const PosTagger& pos_tagger) const {
    std::vector<ConceptSpan> spans;
    for (const auto& sentence : doc.sentences) {
      auto found = iob_to_spans(decode(extract_features(sentence, lexicon_, pos_tagger)), sentence);
      spans.insert(spans.end(), found.begin(), found.end());
    }
    return spans;
  }

  std::string serialize() const;
  static CrfModel deserialize(std::string_view text);

  friend bool operator==(const CrfModel& a, const CrfModel& b) {
    return a.feature_names_ == b.feature_names_ && a.emission_ == b.emission_ &&
           a.transitions_ == b.transitions_ && a.config_ == b.config_ && a.lexicon_ == b.lexicon_;
  }

 private:
  std::uint32_t intern(const std::string& key) {
    auto [it, inserted] = feature_index_.try_emplace(key, static_cast<std::uint32_t>(feature_names_.size()));
    if (inserted) {
      feature_names_.push_back(key);
      emission_.resize(emission_.size() + kNumLabels, 0.0);
    }
    return it->second;
  }

  std::unordered_map<std::string, std::uint32_t> feature_index_;
  std::vector<std::string> feature_names_;
  std::vector<double> emission_;
  Transitions transitions_ = Transitions::Zero();
  CrfTrainConfig config_;
  Lexicon lexicon_;
};

namespace detail {

// Sum over sentences of (logZ - gold score), with gradient scaled by
// `grad_scale` added into `grad`. `weight_scale` multiplies every emission weight.
inline double accumulate_nll(const CrfModel& model, const std::vector<const EncodedSentence*>& batch,
                             double grad_scale, CrfGradient& grad, double weight_scale = 1.0) {
  double loss = 0;
  Lattice d_emit;
  Transitions d_trans;
  for (const auto* s : batch) {
    if (s->tags.size() != s->feature_ids.size()) throw DataError("tag/feature length mismatch in training batch");
    if (s->tags.empty()) continue;
    const Lattice lat = model.lattice(*s, weight_scale);
    d_trans.setZero();
    loss += chain_nll_gradient(lat, model.transitions(), s->tags, d_emit, d_trans);
    grad.transitions += grad_scale * d_trans;
    for (std::size_t t = 0; t < s->feature_ids.size(); ++t)
      for (auto id : s->feature_ids[t])
        for (std::size_t y = 0; y < kNumLabels; ++y)
          grad.emission[id * kNumLabels + y] += grad_scale * d_emit(static_cast<Eigen::Index>(t), y);
  }
  return loss;
}

inline double squared_weight_norm(const CrfModel& model) {
  double s = model.transitions().squaredNorm();
  for (double w : model.emission_weights()) s += w * w;
  return s;
}

}  // namespace detail

/// loss = sum over the batch of (logZ - gold score) + l2 * |w|^2 / 2 and its
/// gradient with respect to every emission and transition weight.
inline std::pair<double, CrfGradient> nll_and_gradient(const CrfModel& model,
                                                       const std::vector<FeaturizedSentence>& batch) {
  if (batch.empty()) throw DataError("nll_and_gradient requires a non-empty batch");
  std::vector<EncodedSentence> encoded;
  encoded.reserve(batch.size());
  for (const auto& [features, tags] : batch) encoded.push_back(model.encode(features, tags));
  std::vector<const EncodedSentence*> ptrs;
  for (const auto& e : encoded) ptrs.push_back(&e);

  CrfGradient grad;
  grad.emission.assign(model.emission_weights().size(), 0.0);
  double loss = detail::accumulate_nll(model, ptrs, 1.0, grad);
  const double l2 = model.l2_lambda();
  loss += 0.5 * l2 * detail::squared_weight_norm(model);
  for (std::size_t i = 0; i < grad.emission.size(); ++i) grad.emission[i] += l2 * model.emission_weights()[i];
  grad.transitions += l2 * model.transitions();
  return {loss, grad};
}

struct CrfEpochLog {
  int epoch = 0;
  double loss = 0;       // mean per-sentence NLL + l2 * |w|^2 / 2
  double grad_norm = 0;  // of the same objective
};

struct CrfTrainResult {
  CrfModel model;
  std::vector<CrfEpochLog> log;
};

/// Mini-batch gradient descent on mean NLL + l2 * |w|^2 / 2. The L2 term is
/// applied as an implicit shrink w <- (w - lr * g) / (1 + lr * l2), which stays
/// stable for any l2. Emission weights are stored as scale * v so the shrink is
/// O(1) per step.
inline CrfTrainResult train_crf_featurized(const std::vector<FeaturizedSentence>& corpus,
                                           const CrfTrainConfig& config, Lexicon lexicon = {},
                                           const std::function<void(const CrfEpochLog&)>& on_epoch = {}) {
  config.validate();
  if (corpus.empty()) throw DataError("cannot train a CRF on an empty corpus");

  CrfTrainResult result;
  CrfModel& model = result.model;
  model.set_config(config);
  model.set_lexicon(std::move(lexicon));
  model.build_alphabet(corpus);

  std::vector<EncodedSentence> data;
  data.reserve(corpus.size());
  for (const auto& [features, tags] : corpus) data.push_back(model.encode(features, tags));
  const auto n = data.size();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(config.seed);

  auto& w = model.emission_weights();
  auto& trans = model.transitions();
  double scale = 1.0;
  auto fold_scale = [&] {
    for (double& x : w) x *= scale;
    scale = 1.0;
  };

  CrfGradient grad;
  grad.emission.assign(w.size(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<char> is_touched(model.num_features(), 0);

  std::vector<const EncodedSentence*> all;
  for (const auto& d : data) all.push_back(&d);

  double lr = config.learning_rate;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);

    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t e = std::min(n, b + static_cast<std::size_t>(config.batch_size));
      std::vector<const EncodedSentence*> batch;
      for (std::size_t k = b; k < e; ++k) batch.push_back(&data[order[k]]);

      grad.transitions.setZero();
      for (const auto* s : batch)
        for (const auto& ids : s->feature_ids)
          for (auto id : ids)
            if (!is_touched[id]) {
              is_touched[id] = 1;
              touched.push_back(id);
            }
      detail::accumulate_nll(model, batch, 1.0 / static_cast<double>(batch.size()), grad, scale);

      const double shrink = 1.0 / (1.0 + lr * config.l2_lambda);
      // w_new = (scale * v - lr * g) * shrink  ==  (scale * shrink) * (v - lr * g / scale)
      for (auto id : touched) {
        for (std::size_t y = 0; y < kNumLabels; ++y) {
          auto& g = grad.emission[id * kNumLabels + y];
          w[id * kNumLabels + y] -= lr * g / scale;
          g = 0;
        }
        is_touched[id] = 0;
      }
      touched.clear();
      scale *= shrink;
      if (scale < 1e-6) fold_scale();
      trans = (trans - lr * grad.transitions) * shrink;
    }
    fold_scale();

    CrfGradient full;
    full.emission.assign(w.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = detail::accumulate_nll(model, all, inv_n, full) * inv_n;
    loss += 0.5 * config.l2_lambda * detail::squared_weight_norm(model);
    for (std::size_t i = 0; i < w.size(); ++i) full.emission[i] += config.l2_lambda * w[i];
    full.transitions += config.l2_lambda * trans;
    const CrfEpochLog entry{epoch, loss, std::sqrt(full.squared_norm())};
    if (!std::isfinite(entry.loss) || !std::isfinite(entry.grad_norm))
      throw NumericalError("CRF training produced a non-finite loss at epoch " + std::to_string(epoch));
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.grad_norm < config.grad_tolerance) break;
    lr *= config.decay;
  }
  return result;
}

struct LabeledSentence {
  Sentence sentence;
  TagSequence tags;
};

inline CrfTrainResult train_crf(const std::vector<LabeledSentence>& corpus, const CrfTrainConfig& config,
                                const Lexicon& lexicon, const PosTagger& pos_tagger,
                                const std::function<void(const CrfEpochLog&)>& on_epoch = {}) {
  std::vector<FeaturizedSentence> featurized;
  featurized.reserve(corpus.size());
  for (const auto& ls : corpus) {
    if (ls.sentence.empty()) continue;
    if (ls.tags.size() != ls.sentence.size()) throw DataError("tag sequence does not match sentence length");
    featurized.emplace_back(extract_features(ls.sentence, lexicon, pos_tagger), ls.tags);
  }
  return train_crf_featurized(featurized, config, lexicon, on_epoch);
}

// ---------------------------------------------------------------------------
// Model file
//
//   cce-crf-model 1
//   labels O B-problem I-problem B-test I-test B-treatment I-treatment
//   config learning_rate=<d> decay=<d> epochs=<i> l2_lambda=<d> batch_size=<i> seed=<u> grad_tolerance=<d>
//   transitions
//   <9 lines of 9 space-separated doubles; rows/cols are the 7 labels, START, STOP>
//   lexicon <n>
//   <n lexicon lines in the lexicon file format>
//   features <n>
//   <feature key> TAB <7 space-separated doubles>
//   end
//
// Doubles use the shortest round-trip decimal form.

inline std::string CrfModel::serialize() const {
  std::string out;
  out += std::string(kMagic) + " " + std::to_string(kFormatVersion) + "\n";
  out += "labels";
  for (auto name : kLabelNames) out += " " + std::string(name);
  out += "\n";
  out += "config learning_rate=" + format_double(config_.learning_rate) + " decay=" + format_double(config_.decay) +
         " epochs=" + std::to_string(config_.epochs) + " l2_lambda=" + format_double(config_.l2_lambda) +
         " batch_size=" + std::to_string(config_.batch_size) + " seed=" + std::to_string(config_.seed) +
         " grad_tolerance=" + format_double(config_.grad_tolerance) + "\n";
  out += "transitions\n";
  for (std::size_t i = 0; i < kNumStates; ++i) {
    for (std::size_t j = 0; j < kNumStates; ++j) {
      if (j) out += ' ';
      out += format_double(transitions_(i, j));
    }
    out += '\n';
  }
  const auto lex = lexicon_.serialize();
  out += "lexicon " + std::to_string(lexicon_.size()) + "\n" + lex;
  out += "features " + std::to_string(feature_names_.size()) + "\n";
  for (std::size_t f = 0; f < feature_names_.size(); ++f) {
    out += feature_names_[f];
    out += '\t';
    for (std::size_t y = 0; y < kNumLabels; ++y) {
      if (y) out += ' ';
      out += format_double(emission_[f * kNumLabels + y]);
    }
    out += '\n';
  }
  out += "end\n";
  return out;
}

/// Throws DataError on a foreign file or a version mismatch.
inline void check_model_header(std::string_view first_line, std::string_view magic, int version) {
  const auto parts = split_whitespace(first_line);
  if (parts.size() != 2 || parts[0] != magic)
    throw DataError("not a " + std::string(magic) + " file");
  const auto found = parts[1];
  if (found != std::to_string(version))
    throw DataError("model format version mismatch: expected " + std::to_string(version) + ", found " + found);
}

inline CrfModel CrfModel::deserialize(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= lines.size()) throw ParseError(i + 1, "unexpected end of CRF model file");
    return lines[i++];
  };
  auto fail = [&](const std::string& what) -> ParseError { return ParseError(i, what); };

  check_model_header(next(), kMagic, kFormatVersion);
  {
    auto parts = split_whitespace(next());
    if (parts.size() != kNumLabels + 1 || parts[0] != "labels") throw fail("bad labels line");
    for (std::size_t y = 0; y < kNumLabels; ++y)
      if (parts[y + 1] != kLabelNames[y]) throw fail("label alphabet differs from this build");
  }
  CrfModel model;
  {
    auto parts = split_whitespace(next());
    if (parts.empty() || parts[0] != "config") throw fail("bad config line");
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const auto eq = parts[k].find('=');
      if (eq == std::string::npos) throw fail("bad config entry");
      const std::string key = parts[k].substr(0, eq);
      const std::string_view value = std::string_view(parts[k]).substr(eq + 1);
      auto& c = model.config_;
      if (key == "learning_rate") c.learning_rate = parse_double(value);
      else if (key == "decay") c.decay = parse_double(value);
      else if (key == "epochs") c.epochs = parse_int<int>(value);
      else if (key == "l2_lambda") c.l2_lambda = parse_double(value);
      else if (key == "batch_size") c.batch_size = parse_int<int>(value);
      else if (key == "seed") c.seed = parse_int<std::uint64_t>(value);
      else if (key == "grad_tolerance") c.grad_tolerance = parse_double(value);
      else throw fail("unknown config key '" + key + "'");
    }
  }
  if (next() != "transitions") throw fail("expected 'transitions'");
  for (std::size_t r = 0; r < kNumStates; ++r) {
    auto parts = split_whitespace(next());
    if (parts.size() != kNumStates) throw fail("transition row must have 9 values");
    for (std::size_t c = 0; c < kNumStates; ++c) model.transitions_(r, c) = parse_double(parts[c]);
  }
  {
    auto parts = split_whitespace(next());
    if (parts.size() != 2 || parts[0] != "lexicon") throw fail("expected 'lexicon <n>'");
    const auto n = parse_int<std::size_t>(parts[1]);
    std::string lex;
    for (std::size_t k = 0; k < n; ++k) lex += next() + "\n";
    model.lexicon_ = Lexicon::parse(lex);
  }
  {
    auto parts = split_whitespace(next());
    if (parts.size() != 2 || parts[0] != "features") throw fail("expected 'features <n>'");
    const auto n = parse_int<std::size_t>(parts[1]);
    for (std::size_t f = 0; f < n; ++f) {
      const auto& line = next();
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw fail("feature line has no TAB");
      const auto id = model.intern(line.substr(0, tab));
      if (id != f) throw fail("duplicate feature '" + line.substr(0, tab) + "'");
      auto values = split_whitespace(std::string_view(line).substr(tab + 1));
      if (values.size() != kNumLabels) throw fail("feature line must carry 7 weights");
      for (std::size_t y = 0; y < kNumLabels; ++y) model.emission_[f * kNumLabels + y] = parse_double(values[y]);
    }
  }
  if (next() != "end") throw fail("expected 'end'");
  for (double x : model.emission_)
    if (!std::isfinite(x)) throw DataError("CRF model contains a non-finite weight");
  if (!model.transitions_.allFinite()) throw DataError("CRF model contains a non-finite transition");
  return model;
}

}  // namespace cce
