#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "cce/crf.hpp"
#include "cce/error.hpp"
#include "cce/neural.hpp"
#include "cce/numeric_io.hpp"
#include "cce/text.hpp"

namespace cce {

enum class ModelType { kCrf, kLstm };

inline ModelType parse_model_type(std::string_view s) {
  if (s == "crf") return ModelType::kCrf;
  if (s == "lstm") return ModelType::kLstm;
  throw UsageError("model type must be 'crf' or 'lstm', got '" + std::string(s) + "'");
}

inline std::string_view model_type_name(ModelType t) { return t == ModelType::kCrf ? "crf" : "lstm"; }

struct RunConfig {
  std::optional<ModelType> model_type;
  std::string txt_dir;
  std::string con_dir;
  std::string pred_dir;
  std::string model_path;
  std::string out_dir;
  std::string lexicon_path;
  std::string pos_dir;
  std::string report_path;
  std::string split;  // restrict to documents of this manifest split
  TokenizerMode tokenizer = TokenizerMode::kPunctuation;
  std::uint64_t seed = 0;
  long long n_documents = 200;
  CrfTrainConfig crf;
  NeuralConfig neural;

  void set_seed(std::uint64_t s) {
    seed = s;
    crf.seed = s;
    neural.seed = s;
  }

  /// Applies one `key=value` setting. Unknown keys and bad values are usage errors.
  void set(std::string_view key, std::string_view value) {
    const std::string k(key);
    try {
      if (k == "model_type") model_type = parse_model_type(value);
      else if (k == "txt") txt_dir = value;
      else if (k == "con") con_dir = value;
      else if (k == "pred") pred_dir = value;
      else if (k == "model") model_path = value;
      else if (k == "out") out_dir = value;
      else if (k == "lexicon") lexicon_path = value;
      else if (k == "embeddings") neural.embedding_path = value;
      else if (k == "pos") pos_dir = value;
      else if (k == "report") report_path = value;
      else if (k == "split") split = value;
      else if (k == "tokenizer") tokenizer = parse_tokenizer_mode(value);
      else if (k == "seed") set_seed(parse_int<std::uint64_t>(value));
      else if (k == "n_documents") n_documents = parse_int<long long>(value);
      else if (k == "crf.learning_rate") crf.learning_rate = parse_double(value);
      else if (k == "crf.decay") crf.decay = parse_double(value);
      else if (k == "crf.epochs") crf.epochs = parse_int<int>(value);
      else if (k == "crf.l2_lambda") crf.l2_lambda = parse_double(value);
      else if (k == "crf.batch_size") crf.batch_size = parse_int<int>(value);
      else if (k == "crf.grad_tolerance") crf.grad_tolerance = parse_double(value);
      else if (k == "lstm.d_c") neural.d_c = parse_int<int>(value);
      else if (k == "lstm.h_c") neural.h_c = parse_int<int>(value);
      else if (k == "lstm.d_w") neural.d_w = parse_int<int>(value);
      else if (k == "lstm.h_w") neural.h_w = parse_int<int>(value);
      else if (k == "lstm.learning_rate") neural.learning_rate = parse_double(value);
      else if (k == "lstm.dropout_rate") neural.dropout_rate = parse_double(value);
      else if (k == "lstm.clip_norm") neural.clip_norm = parse_double(value);
      else if (k == "lstm.epochs") neural.epochs = parse_int<int>(value);
      else if (k == "lstm.batch_size") neural.batch_size = parse_int<int>(value);
      else if (k == "lstm.freeze_word_embeddings") neural.freeze_word_embeddings = parse_int<int>(value) != 0;
      else throw UsageError("unknown config key '" + k + "'");
    } catch (const DataError& e) {
      throw UsageError("bad value for '" + k + "': " + e.what());
    }
  }

  /// Flat `key=value` lines; '#' starts a comment line.
  void apply_text(std::string_view text) {
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto line = trim(lines[i]);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw UsageError("config line " + std::to_string(i + 1) + ": expected key=value");
      try {
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const UsageError& e) {
        throw UsageError("config line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }

  void apply_file(const std::string& path) {
    std::string text;
    try {
      text = read_file(path);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    apply_text(text);
  }
};

}  // namespace cce
