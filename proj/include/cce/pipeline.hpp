#pragma once

// Directory-level train / predict / evaluate / synth commands. Each returns a
// summary and writes progress lines to `log`; the command-line tool is a thin
// wrapper over these.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "cce/config.hpp"
#include "cce/corpus.hpp"
#include "cce/crf.hpp"
#include "cce/error.hpp"
#include "cce/eval.hpp"
#include "cce/features.hpp"
#include "cce/neural.hpp"
#include "cce/synthetic.hpp"
#include "cce/text.hpp"

namespace cce {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifestName = "manifest.tsv";

/// `basename<TAB>split` lines.
inline std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::map<std::string, std::string> out;
  const auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto parts = split(lines[i], '\t');
    if (parts.size() != 2) throw ParseError(i + 1, "manifest line must be basename<TAB>split");
    out.emplace(std::string(parts[0]), std::string(parts[1]));
  }
  return out;
}

inline std::set<std::string> basenames_with_extension(const std::string& dir, std::string_view ext) {
  if (dir.empty()) throw UsageError("directory argument is required");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("not a directory: '" + dir + "'");
  std::set<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ext) out.insert(entry.path().stem().string());
  }
  return out;
}

/// Basenames of the .txt files in `txt_dir`, optionally restricted to one
/// split of the directory's manifest.
inline std::vector<std::string> select_documents(const std::string& txt_dir, const std::string& split_name) {
  auto names = basenames_with_extension(txt_dir, ".txt");
  if (split_name.empty()) return {names.begin(), names.end()};
  const auto manifest_path = (fs::path(txt_dir) / kManifestName).string();
  if (!fs::exists(manifest_path)) throw DataError("split requested but no manifest at '" + manifest_path + "'");
  const auto manifest = read_manifest(manifest_path);
  std::vector<std::string> out;
  for (const auto& n : names) {
    auto it = manifest.find(n);
    if (it != manifest.end() && it->second == split_name) out.push_back(n);
  }
  return out;
}

inline void require_counterparts(const std::vector<std::string>& names, const std::string& dir, std::string_view ext,
                                 std::string_view what) {
  const auto have = basenames_with_extension(dir, std::string(ext));
  std::vector<std::string> missing;
  for (const auto& n : names)
    if (!have.count(n)) missing.push_back(n);
  if (!missing.empty())
    throw DataError("missing " + std::string(what) + " " + std::string(ext) + " file(s) in '" + dir +
                    "' for: " + join(missing, ", "));
}

inline std::string path_in(const std::string& dir, const std::string& base, std::string_view ext) {
  return (fs::path(dir) / (base + std::string(ext))).string();
}

struct LoadedDocument {
  Document document;
  std::vector<ConceptSpan> spans;
  std::vector<TagSequence> tags;
};

inline LoadedDocument load_annotated(const std::string& txt_dir, const std::string& con_dir, const std::string& base,
                                     TokenizerMode mode = TokenizerMode::kPunctuation) {
  LoadedDocument d;
  d.document = load_document(read_file(path_in(txt_dir, base, ".txt")), base, mode);
  try {
    d.spans = parse_concept_file(read_file(path_in(con_dir, base, ".con")));
  } catch (const ParseError& e) {
    throw DataError(base + ".con " + e.what());
  }
  d.tags = document_tags(d.document, d.spans);
  return d;
}

inline std::unique_ptr<PosTagger> make_pos_tagger(const std::string& pos_dir, const std::vector<Document>& docs) {
  if (pos_dir.empty()) return std::make_unique<FallbackPosTagger>();
  auto tagger = std::make_unique<SidecarPosTagger>();
  for (const auto& doc : docs) {
    const auto path = path_in(pos_dir, doc.doc_id, ".pos");
    if (fs::exists(path)) tagger->add_document(doc, read_file(path));
  }
  return tagger;
}

struct TrainSummary {
  ModelType model_type = ModelType::kCrf;
  std::size_t documents = 0;
  std::size_t sentences = 0;
  std::vector<std::string> log_lines;
};

inline void write_training_log(const RunConfig& cfg, const TrainSummary& s) {
  write_file(cfg.model_path + ".log", join(s.log_lines, "\n") + "\n");
}

inline TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  if (!cfg.model_type) throw UsageError("train requires --model-type");
  if (cfg.model_path.empty()) throw UsageError("train requires --model");
  if (cfg.con_dir.empty()) throw UsageError("train requires --con");

  const auto names = select_documents(cfg.txt_dir, cfg.split);
  if (names.empty()) throw DataError("no training documents found in '" + cfg.txt_dir + "'");
  require_counterparts(names, cfg.con_dir, ".con", "annotation");
  if (cfg.split.empty()) {
    // every annotation must have its note too
    const auto cons = basenames_with_extension(cfg.con_dir, ".con");
    std::vector<std::string> orphans;
    std::set<std::string> txt(names.begin(), names.end());
    for (const auto& c : cons)
      if (!txt.count(c)) orphans.push_back(c);
    if (!orphans.empty()) throw DataError("annotation file(s) without a matching .txt: " + join(orphans, ", "));
  }

  std::vector<LoadedDocument> docs;
  for (const auto& n : names) docs.push_back(load_annotated(cfg.txt_dir, cfg.con_dir, n, cfg.tokenizer));

  TrainSummary summary;
  summary.model_type = *cfg.model_type;
  summary.documents = docs.size();
  auto note = [&](std::string line) {
    log << line << "\n";
    summary.log_lines.push_back(std::move(line));
  };

  if (*cfg.model_type == ModelType::kCrf) {
    Lexicon lexicon;
    if (!cfg.lexicon_path.empty()) lexicon = Lexicon::load(cfg.lexicon_path);
    std::vector<Document> plain;
    for (const auto& d : docs) plain.push_back(d.document);
    const auto tagger = make_pos_tagger(cfg.pos_dir, plain);
    std::vector<LabeledSentence> corpus;
    for (const auto& d : docs)
      for (std::size_t s = 0; s < d.document.sentences.size(); ++s) corpus.push_back({d.document.sentences[s], d.tags[s]});
    summary.sentences = corpus.size();
    note("model_type=crf documents=" + std::to_string(docs.size()) + " sentences=" + std::to_string(corpus.size()) +
         " lexicon_entries=" + std::to_string(lexicon.size()));
    auto result = train_crf(corpus, cfg.crf, lexicon, *tagger, [&](const CrfEpochLog& e) {
      note("epoch=" + std::to_string(e.epoch) + " loss=" + format_double(e.loss) + " grad_norm=" + format_double(e.grad_norm));
    });
    note("features=" + std::to_string(result.model.num_features()));
    write_file(cfg.model_path, result.model.serialize());
  } else {
    std::vector<NeuralExample> corpus;
    for (const auto& d : docs)
      for (std::size_t s = 0; s < d.document.sentences.size(); ++s) corpus.emplace_back(d.document.sentences[s].words(), d.tags[s]);
    summary.sentences = corpus.size();
    NeuralConfig nc = cfg.neural;
    std::string emb_text;
    if (nc.embedding_path.empty()) {
      note("warning: no embeddings given; word table is randomly initialized");
    } else {
      emb_text = read_file(nc.embedding_path);
    }
    std::vector<std::vector<std::string>> sentences;
    for (const auto& ex : corpus) sentences.push_back(ex.first);
    EmbeddingLoad coverage;
    auto initial = NeuralModel::initialize(nc, sentences, nc.embedding_path.empty() ? nullptr : &emb_text, &coverage);
    note("model_type=lstm documents=" + std::to_string(docs.size()) + " sentences=" + std::to_string(corpus.size()) +
         " vocab=" + std::to_string(initial.word_vocab().size()) +
         " embedding_hit_rate=" + format_double(coverage.hit_rate));
    auto result = train_neural(corpus, nc, {}, [&](const NeuralEpochLog& e) {
      note("epoch=" + std::to_string(e.epoch) + " loss=" + format_double(e.loss));
    }, std::move(initial));
    write_file(cfg.model_path, result.model.serialize());
  }
  write_training_log(cfg, summary);
  return summary;
}

struct PredictSummary {
  std::size_t documents = 0;
  std::size_t spans = 0;
};

inline PredictSummary cmd_predict(const RunConfig& cfg, std::ostream& log) {
  if (cfg.model_path.empty()) throw UsageError("predict requires --model");
  if (cfg.out_dir.empty()) throw UsageError("predict requires --out");
  const auto text = read_file(cfg.model_path);
  const auto first = text.substr(0, text.find('\n'));
  std::optional<CrfModel> crf;
  std::optional<NeuralModel> lstm;
  if (first.rfind(CrfModel::kMagic, 0) == 0) crf = CrfModel::deserialize(text);
  else if (first.rfind(NeuralModel::kMagic, 0) == 0) lstm = NeuralModel::deserialize(text);
  else throw DataError("'" + cfg.model_path + "' is not a model file");
  if (cfg.model_type && (*cfg.model_type == ModelType::kCrf) != crf.has_value())
    throw UsageError("--model-type " + std::string(model_type_name(*cfg.model_type)) + " does not match the model file");

  const auto names = select_documents(cfg.txt_dir, cfg.split);
  std::vector<Document> docs;
  for (const auto& n : names) docs.push_back(load_document(read_file(path_in(cfg.txt_dir, n, ".txt")), n, cfg.tokenizer));
  const auto tagger = make_pos_tagger(cfg.pos_dir, docs);

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) throw DataError("cannot create output directory '" + cfg.out_dir + "'");
  PredictSummary summary;
  for (const auto& doc : docs) {
    const auto spans = crf ? crf->predict(doc, *tagger) : predict_neural(*lstm, doc);
    write_file(path_in(cfg.out_dir, doc.doc_id, ".con"), write_concept_file(spans));
    ++summary.documents;
    summary.spans += spans.size();
  }
  log << "predicted " << summary.spans << " spans in " << summary.documents << " documents\n";
  return summary;
}

inline EvalReport cmd_evaluate(const RunConfig& cfg) {
  if (cfg.con_dir.empty()) throw UsageError("evaluate requires --con (gold annotations)");
  if (cfg.pred_dir.empty()) throw UsageError("evaluate requires --pred (predicted annotations)");
  const auto names = select_documents(cfg.txt_dir, cfg.split);
  require_counterparts(names, cfg.con_dir, ".con", "gold");
  require_counterparts(names, cfg.pred_dir, ".con", "predicted");
  DocumentSpans gold, pred;
  for (const auto& n : names) {
    auto g = load_annotated(cfg.txt_dir, cfg.con_dir, n, cfg.tokenizer);
    auto p = load_annotated(cfg.txt_dir, cfg.pred_dir, n, cfg.tokenizer);
    gold[n] = std::move(g.spans);
    pred[n] = std::move(p.spans);
  }
  auto report = evaluate(gold, pred);
  if (!cfg.report_path.empty()) write_file(cfg.report_path, format_report_key_values(report));
  return report;
}

struct SynthSummary {
  std::size_t documents = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

inline SynthSummary cmd_synth(std::uint64_t seed, long long n_documents, const std::string& out_dir) {
  if (out_dir.empty()) throw UsageError("synth requires --out");
  const auto corpus = generate_synthetic_corpus(seed, n_documents);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create output directory '" + out_dir + "'");
  SynthSummary s;
  const auto n_train = synthetic_train_count(corpus.documents.size());
  std::string manifest;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    const auto& d = corpus.documents[i];
    write_file(path_in(out_dir, d.document.doc_id, ".txt"), d.note_text);
    write_file(path_in(out_dir, d.document.doc_id, ".con"), write_concept_file(d.spans));
    const bool train = i < n_train;
    manifest += d.document.doc_id + (train ? "\ttrain\n" : "\ttest\n");
    ++(train ? s.train : s.test);
  }
  write_file((fs::path(out_dir) / kManifestName).string(), manifest);
  s.documents = corpus.documents.size();
  return s;
}

}  // namespace cce
