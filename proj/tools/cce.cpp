// Command-line front end: train, predict, evaluate, synth.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cce/config.hpp"
#include "cce/error.hpp"
#include "cce/eval.hpp"
#include "cce/pipeline.hpp"

namespace {

struct Flags {
  std::string model_type, txt, con, pred, model, out, lexicon, embeddings, pos, config, split, report;
  std::optional<std::uint64_t> seed;
  std::optional<long long> n_documents;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value config file; flags override it");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--set", f.settings, "extra key=value setting (repeatable)");
}

cce::RunConfig build_config(const Flags& f) {
  cce::RunConfig cfg;
  if (!f.config.empty()) cfg.apply_file(f.config);
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) cfg.set(key, v);
  };
  put("model_type", f.model_type);
  put("txt", f.txt);
  put("con", f.con);
  put("pred", f.pred);
  put("model", f.model);
  put("out", f.out);
  put("lexicon", f.lexicon);
  put("embeddings", f.embeddings);
  put("pos", f.pos);
  put("split", f.split);
  put("report", f.report);
  for (const auto& s : f.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw cce::UsageError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) cfg.set_seed(*f.seed);
  if (f.n_documents) cfg.n_documents = *f.n_documents;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clinical concept extraction: problem / test / treatment tagging with a CRF or a BiLSTM-CRF"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train a model from .txt/.con pairs");
  train->add_option("--model-type", f.model_type, "crf or lstm")->check(CLI::IsMember({"crf", "lstm"}));
  train->add_option("--txt", f.txt, "directory of .txt notes");
  train->add_option("--con", f.con, "directory of .con annotations");
  train->add_option("--model", f.model, "output model path");
  train->add_option("--lexicon", f.lexicon, "lexicon file (crf)");
  train->add_option("--embeddings", f.embeddings, "word vector text file (lstm)");
  train->add_option("--pos", f.pos, "directory of <doc>.pos sidecar files (crf)");
  train->add_option("--split", f.split, "only documents of this manifest split");
  add_common(train, f);

  auto* predict = app.add_subcommand("predict", "write one .con per input .txt");
  predict->add_option("--model-type", f.model_type, "crf or lstm (checked against the model file)")
      ->check(CLI::IsMember({"crf", "lstm"}));
  predict->add_option("--model", f.model, "model path");
  predict->add_option("--txt", f.txt, "directory of .txt notes");
  predict->add_option("--out", f.out, "output directory for .con files");
  predict->add_option("--pos", f.pos, "directory of <doc>.pos sidecar files (crf)");
  predict->add_option("--split", f.split, "only documents of this manifest split");
  add_common(predict, f);

  auto* evaluate = app.add_subcommand("evaluate", "exact class match precision / recall / F1");
  evaluate->add_option("--txt", f.txt, "directory of .txt notes");
  evaluate->add_option("--con", f.con, "directory of gold .con files");
  evaluate->add_option("--pred", f.pred, "directory of predicted .con files");
  evaluate->add_option("--report", f.report, "also write class.metric = value lines here");
  evaluate->add_option("--split", f.split, "only documents of this manifest split");
  add_common(evaluate, f);

  auto* synth = app.add_subcommand("synth", "write a synthetic .txt/.con corpus with a train/test manifest");
  synth->add_option("--out", f.out, "output directory");
  synth->add_option("--n-docs", f.n_documents, "number of documents (default 200)");
  add_common(synth, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(cce::ExitCode::kUsage);
  }

  try {
    const auto cfg = build_config(f);
    if (train->parsed()) {
      const auto s = cce::cmd_train(cfg, std::cerr);
      std::cerr << "wrote " << cfg.model_path << " (" << s.documents << " documents, " << s.sentences << " sentences)\n";
    } else if (predict->parsed()) {
      cce::cmd_predict(cfg, std::cerr);
    } else if (evaluate->parsed()) {
      std::cout << cce::format_report(cce::cmd_evaluate(cfg));
    } else if (synth->parsed()) {
      const auto s = cce::cmd_synth(cfg.seed, cfg.n_documents, cfg.out_dir);
      std::cerr << "wrote " << s.documents << " documents (" << s.train << " train, " << s.test << " test) to "
                << cfg.out_dir << "\n";
    }
  } catch (const cce::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return static_cast<int>(cce::ExitCode::kUsage);
  } catch (const cce::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return static_cast<int>(cce::ExitCode::kNumerical);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(cce::ExitCode::kData);
  }
  return 0;
}
