#include "seq2set/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "seq2set/data.hpp"
#include "seq2set/errors.hpp"
#include "seq2set/evaluation.hpp"
#include "seq2set/gradcheck.hpp"
#include "seq2set/sweep.hpp"
#include "seq2set/synthetic.hpp"
#include "seq2set/training.hpp"

namespace seq2set::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(flag + ": file not found: " + path);
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

// Flags shared by train and sweep.
struct ModelFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> queries;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> heads;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::string loss;
  std::string precision;
  bool freeze_queries = false;
  bool no_interaction = false;
  bool shuffle_gold = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--seed", seed, "random seed (overrides the config)");
    app->add_option("--queries", queries, "entity query count N");
    app->add_option("--layers", layers, "decoder layer count M");
    app->add_option("--heads", heads, "attention heads h");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--lr", lr, "peak learning rate");
    app->add_option("--loss", loss, "bipartite or ce")->check(CLI::IsMember({"bipartite", "ce"}));
    app->add_option("--precision", precision, "float or double")->check(CLI::IsMember({"float", "double"}));
    app->add_flag("--freeze-queries", freeze_queries, "keep the entity queries at their initial values");
    app->add_flag("--no-interaction", no_interaction, "drop self-attention among queries");
    app->add_flag("--shuffle-gold", shuffle_gold, "reshuffle gold order every epoch (cross-entropy ablation)");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config.empty()) {
      require_file("--config", config);
      try {
        c = RunConfig::load(config);
      } catch (const std::exception& e) {
        throw UsageError("--config: " + std::string(e.what()));
      }
    }
    try {
      if (seed) c.train.seed = *seed;
      if (queries) c.model.decoder.queries = *queries;
      if (layers) c.model.decoder.layers = *layers;
      if (heads) c.model.decoder.heads = *heads;
      if (epochs) c.train.epochs = *epochs;
      if (lr) c.train.peak_lr = *lr;
      if (!loss.empty()) set_config_value(c, "loss_mode", loss);
      if (!precision.empty()) set_config_value(c, "precision", precision);
      if (freeze_queries) c.train.freeze_queries = true;
      if (no_interaction) c.model.decoder.interaction = false;
      if (shuffle_gold) c.train.shuffle_gold_order = true;
      c.validate();
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct Options {
  // gen-data
  GrammarConfig grammar;
  std::optional<std::size_t> n_dev, n_test;
  std::string out_dir;
  // shared corpus / io
  std::string corpus, train, dev, test, input, out, checkpoint, predictions, log;
  std::optional<double> null_threshold;
  bool json_output = false;
  // sweep
  std::string axis;
  std::vector<std::string> values;
  // gradcheck
  std::uint64_t gradcheck_seed = 1;
  ModelFlags model;
};

std::string output_path_or(const std::string& given, const std::string& fallback) {
  return given.empty() ? fallback : given;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (const auto& l : lines) f << l << '\n';
}

int cmd_gen_data(Options& o, std::ostream& out) {
  if (o.out_dir.empty()) throw UsageError("--out-dir is required");
  GrammarConfig g = o.grammar;
  g.n_dev = o.n_dev.value_or(g.n_train / 10);
  g.n_test = o.n_test.value_or(g.n_train / 10);
  SyntheticCorpus corpus;
  try {
    corpus = generate_synthetic(g);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(o.out_dir);
  write_jsonl(fs::path(o.out_dir) / "train.jsonl", corpus.train);
  write_jsonl(fs::path(o.out_dir) / "dev.jsonl", corpus.dev);
  write_jsonl(fs::path(o.out_dir) / "test.jsonl", corpus.test);
  out << "wrote " << corpus.train.size() << "/" << corpus.dev.size() << "/" << corpus.test.size()
      << " sentences to " << o.out_dir << '\n';
  return kExitOk;
}

int cmd_train(Options& o, std::ostream& out) {
  const std::string train_path = o.train.empty() ? o.corpus : o.train;
  if (train_path.empty()) throw UsageError("--train is required");
  require_file("--train", train_path);
  if (!o.dev.empty()) require_file("--dev", o.dev);
  if (!o.test.empty()) require_file("--test", o.test);
  const RunConfig config = o.model.resolve();
  const std::string checkpoint = output_path_or(o.out, "checkpoint.json");
  const std::string log_path = output_path_or(o.log, checkpoint + ".metrics.jsonl");

  Corpus train = load_corpus(train_path, VocabMode::kBuild);
  std::vector<Sentence> dev, test;
  if (!o.dev.empty()) dev = load_corpus(o.dev, VocabMode::kReuse, &train.vocab).sentences;
  if (!o.test.empty()) test = load_corpus(o.test, VocabMode::kReuse, &train.vocab).sentences;

  std::vector<std::string> log_lines;
  auto on_epoch = [&](const EpochLog& e) {
    log_lines.push_back(e.to_json().dump());
    out << log_lines.back() << '\n' << std::flush;
    return true;
  };
  RunOutcome outcome = train_and_evaluate(config, train.vocab, train.sentences, dev, test, checkpoint, on_epoch);
  write_lines(log_path, log_lines);
  json summary = {{"checkpoint", checkpoint}, {"metrics_log", log_path}, {"steps", outcome.steps}};
  if (!dev.empty()) summary["best_dev_f1"] = outcome.best_dev_f1;
  if (outcome.test) summary["test"] = outcome.test->to_json(&train.vocab);
  out << summary.dump() << '\n';
  return kExitOk;
}

template <typename T>
std::vector<std::vector<PredictedEntity>> predict_with(const CheckpointData& ckpt, std::span<const Sentence> sentences,
                                                       std::optional<double> threshold) {
  auto model = restore_model<T>(ckpt);
  return predict_all(*model, sentences, threshold);
}

std::vector<std::vector<PredictedEntity>> predict_checkpoint(const CheckpointData& ckpt,
                                                             std::span<const Sentence> sentences,
                                                             std::optional<double> threshold) {
  if (ckpt.config.precision == Precision::kDouble) return predict_with<double>(ckpt, sentences, threshold);
  return predict_with<float>(ckpt, sentences, threshold);
}

void check_threshold(const std::optional<double>& t) {
  if (t && !(*t >= 0.0 && *t <= 1.0)) throw UsageError("--null-threshold must lie in [0, 1]");
}

int cmd_predict(Options& o, std::ostream& out) {
  const std::string in = o.input.empty() ? o.corpus : o.input;
  require_file("--checkpoint", o.checkpoint);
  if (in.empty()) throw UsageError("--in is required");
  require_file("--in", in);
  if (o.out.empty()) throw UsageError("--out is required");
  check_threshold(o.null_threshold);
  const CheckpointData ckpt = read_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(in, VocabMode::kReuse, &ckpt.vocab);
  const auto predicted = predict_checkpoint(ckpt, corpus.sentences, o.null_threshold);
  std::vector<std::string> lines;
  lines.reserve(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    json entities = json::array();
    for (const PredictedEntity& e : predicted[i]) {
      entities.push_back(
          {{"start", e.left}, {"end", e.right}, {"type", ckpt.vocab.category_name(e.category)}, {"score", e.score}});
    }
    lines.push_back(json{{"tokens", corpus.raw[i].tokens}, {"pos", corpus.raw[i].pos}, {"entities", entities}}.dump());
  }
  write_lines(o.out, lines);
  out << "wrote " << lines.size() << " predictions to " << o.out << '\n';
  return kExitOk;
}

void print_report(std::ostream& out, const MetricReport& r, const Vocab& vocab, bool as_json) {
  if (as_json) {
    out << r.to_json(&vocab).dump() << '\n';
  } else {
    out << r.table(&vocab);
  }
}

int cmd_eval(Options& o, std::ostream& out) {
  const std::string gold_path = o.corpus.empty() ? o.test : o.corpus;
  if (gold_path.empty()) throw UsageError("--corpus is required");
  require_file("--corpus", gold_path);
  check_threshold(o.null_threshold);
  if (!o.predictions.empty()) {
    require_file("--predictions", o.predictions);
    const auto gold_raw = read_jsonl(gold_path);
    const auto pred_raw = read_jsonl(o.predictions);
    if (gold_raw.size() != pred_raw.size()) {
      throw ValidationError("--predictions has " + std::to_string(pred_raw.size()) + " lines, corpus has " +
                            std::to_string(gold_raw.size()));
    }
    std::set<std::string> names;
    for (const auto* side : {&gold_raw, &pred_raw})
      for (const auto& s : *side)
        for (const auto& e : s.entities) names.insert(e.type);
    const Vocab vocab = Vocab::build(gold_raw, std::vector<std::string>(names.begin(), names.end()));
    MetricReport report;
    for (std::size_t i = 0; i < gold_raw.size(); ++i) {
      const Sentence g = encode(gold_raw[i], vocab);
      const Sentence p = encode(pred_raw[i], vocab);
      report.merge(score(std::span<const Entity>(g.gold), std::span<const Entity>(p.gold)));
    }
    print_report(out, report, vocab, o.json_output);
    return kExitOk;
  }
  require_file("--checkpoint", o.checkpoint);
  const CheckpointData ckpt = read_checkpoint(o.checkpoint);
  const Corpus corpus = load_corpus(gold_path, VocabMode::kReuse, &ckpt.vocab);
  const auto predicted = predict_checkpoint(ckpt, corpus.sentences, o.null_threshold);
  MetricReport report;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    report.merge(score(std::span<const Entity>(corpus.sentences[i].gold),
                       std::span<const PredictedEntity>(predicted[i])));
  }
  print_report(out, report, ckpt.vocab, o.json_output);
  return kExitOk;
}

int cmd_stats(Options& o, std::ostream& out) {
  if (o.corpus.empty()) throw UsageError("--corpus is required");
  require_file("--corpus", o.corpus);
  const Corpus corpus = load_corpus(o.corpus, VocabMode::kBuild);
  const CorpusStats stats = corpus_stats(corpus.sentences);
  if (o.json_output) {
    out << stats.to_json().dump() << '\n';
  } else {
    out << stats.table();
  }
  return kExitOk;
}

int cmd_sweep(Options& o, std::ostream& out) {
  if (o.axis.empty()) throw UsageError("--axis is required");
  SweepAxis axis;
  try {
    axis = parse_sweep_axis(o.axis);
  } catch (const ValidationError& e) {
    throw UsageError(std::string("--axis: ") + e.what());
  }
  const std::string train_path = o.train.empty() ? o.corpus : o.train;
  if (train_path.empty()) throw UsageError("--train is required");
  require_file("--train", train_path);
  if (!o.dev.empty()) require_file("--dev", o.dev);
  if (!o.test.empty()) require_file("--test", o.test);
  const RunConfig base = o.model.resolve();
  const std::vector<std::string> values = o.values.empty() ? default_sweep_values(axis) : o.values;
  for (const auto& v : values) {
    try {
      apply_sweep_value(base, axis, v);
    } catch (const ValidationError& e) {
      throw UsageError("--values: " + std::string(e.what()));
    }
  }
  Corpus train = load_corpus(train_path, VocabMode::kBuild);
  std::vector<Sentence> dev, test;
  if (!o.dev.empty()) dev = load_corpus(o.dev, VocabMode::kReuse, &train.vocab).sentences;
  if (!o.test.empty()) test = load_corpus(o.test, VocabMode::kReuse, &train.vocab).sentences;
  const SweepTable table = sweep(axis, values, base, {train.vocab, train.sentences, dev, test});
  out << table.table();
  if (!o.out.empty()) write_json_file(o.out, table.to_json());
  return kExitOk;
}

int cmd_gradcheck(Options& o, std::ostream& out) {
  GradcheckOptions options;
  options.seed = o.gradcheck_seed;
  const auto start = std::chrono::steady_clock::now();
  const GradcheckReport report = run_gradcheck(options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (o.json_output) {
    json j = report.to_json();
    j["seconds"] = seconds;
    out << j.dump() << '\n';
  } else {
    out << report.table();
  }
  return report.pass ? kExitOk : kExitRuntime;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nested named entity recognition as set prediction", "seq2set"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic nested-entity corpus");
  gen->add_option("--seed", o.grammar.seed, "generator seed");
  gen->add_option("--n", o.grammar.n_train, "training sentences");
  gen->add_option("--n-dev", o.n_dev, "dev sentences (default n/10)");
  gen->add_option("--n-test", o.n_test, "test sentences (default n/10)");
  gen->add_option("--nesting-prob", o.grammar.nesting_prob, "probability of a nested phrase");
  gen->add_option("--max-depth", o.grammar.max_depth, "maximum nesting depth");
  gen->add_option("--categories", o.grammar.category_count, "entity categories (1-7)");
  gen->add_option("--max-entities", o.grammar.max_entities, "redraw sentences with more gold entities");
  gen->add_option("--out-dir", o.out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--train,--corpus", o.train, "training corpus (JSONL)");
  train->add_option("--dev", o.dev, "dev corpus for best-checkpoint selection");
  train->add_option("--test", o.test, "test corpus scored after training");
  train->add_option("--out", o.out, "checkpoint path (default checkpoint.json)");
  train->add_option("--log", o.log, "per-epoch metric log (default <out>.metrics.jsonl)");
  o.model.attach(train);

  auto* eval = app.add_subcommand("eval", "score a checkpoint or a predictions file against a corpus");
  eval->add_option("--corpus,--test", o.corpus, "gold corpus (JSONL)");
  eval->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  eval->add_option("--predictions", o.predictions, "score this predictions file instead of running a model");
  eval->add_option("--null-threshold", o.null_threshold, "drop queries with p(null) >= threshold");
  eval->add_flag("--json", o.json_output, "emit JSON");

  auto* predict = app.add_subcommand("predict", "write predicted entities as JSONL");
  predict->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  predict->add_option("--in,--corpus", o.input, "input corpus (JSONL)");
  predict->add_option("--out", o.out, "output predictions (JSONL)");
  predict->add_option("--null-threshold", o.null_threshold, "drop queries with p(null) >= threshold");

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  stats->add_option("--corpus", o.corpus, "corpus (JSONL)");
  stats->add_flag("--json", o.json_output, "emit JSON");

  auto* sweep_cmd = app.add_subcommand("sweep", "train one model per value of an axis");
  sweep_cmd->add_option("--axis", o.axis, "query_count | decoder_layers | interaction | loss | freeze_queries");
  sweep_cmd->add_option("--values", o.values, "comma-separated values")->delimiter(',');
  sweep_cmd->add_option("--train,--corpus", o.train, "training corpus (JSONL)");
  sweep_cmd->add_option("--dev", o.dev, "dev corpus");
  sweep_cmd->add_option("--test", o.test, "test corpus");
  sweep_cmd->add_option("--out", o.out, "write the table as JSON");
  o.model.attach(sweep_cmd);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check on a miniature model");
  grad->add_option("--seed", o.gradcheck_seed, "initialization seed");
  grad->add_flag("--json", o.json_output, "emit JSON");

  std::vector<std::string> argv_storage{"seq2set"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (stats->parsed()) return cmd_stats(o, out);
    if (sweep_cmd->parsed()) return cmd_sweep(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: parse: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  } catch (const ValidationError& e) {
    err << "error: validation: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  } catch (const NonFiniteLossError& e) {
    err << "error: non-finite-loss: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  }
  err << "error: usage: no command given\n";
  return kExitUsage;
}

}  // namespace seq2set::cli
