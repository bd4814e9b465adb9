#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seq2set/cli.hpp"
#include "seq2set/data.hpp"
#include "seq2set/evaluation.hpp"

using namespace seq2set;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const fs::path dir = fs::temp_directory_path() / "seq2set_test_cli";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

const char* kTinyConfig =
    "token_emb_dim = 8\n"
    "pos_emb_dim = 4\n"
    "char_emb_dim = 4\n"
    "char_lstm_hidden = 4\n"
    "token_lstm_hidden = 8\n"
    "token_lstm_layers = 1\n"
    "queries = 12\n"
    "decoder_layers = 1\n"
    "heads = 2\n"
    "epochs = 2\n";

// A small generated corpus plus a tiny model config, shared by the pipeline tests.
struct Pipeline {
  Pipeline() {
    dir = workdir() / "pipeline";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto r = run({"gen-data", "--seed", "7", "--n", "30", "--n-dev", "6", "--n-test", "6", "--max-entities", "7",
                        "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    config = dir / "tiny.cfg";
    std::ofstream(config) << kTinyConfig;
  }
  fs::path dir, config;
};

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
  const auto r = run({});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, UnknownFlagIsUsageError) {
  const auto r = run({"stats", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: usage"), std::string::npos) << r.err;
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, StatsPrintsTable) {
  const auto r = run({"stats", "--corpus", (fs::path(SEQ2SET_FIXTURES) / "ten.jsonl").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("# sentences"), std::string::npos);
  EXPECT_NE(r.out.find("nested percentage"), std::string::npos);
}

TEST(Cli, StatsJsonMatchesLibrary) {
  const fs::path fixture = fs::path(SEQ2SET_FIXTURES) / "ten.jsonl";
  const auto r = run({"stats", "--corpus", fixture.string(), "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  const auto stats = corpus_stats(load_corpus(fixture, VocabMode::kBuild).sentences);
  EXPECT_EQ(j["sentences"], stats.sentences);
  EXPECT_EQ(j["nested_entities"], stats.nested_entities);
  EXPECT_EQ(j["total_entities"], stats.total_entities);
}

TEST(Cli, TrainWithoutCorpusNamesTheFlag) {
  const auto r = run({"train", "--epochs", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--train"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, MissingFileNamesTheFlag) {
  const auto r = run({"train", "--train", "/nonexistent/train.jsonl"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--train"), std::string::npos) << r.err;
  const auto s = run({"stats", "--corpus", "/nonexistent/x.jsonl"});
  EXPECT_EQ(s.code, 2);
  EXPECT_NE(s.err.find("--corpus"), std::string::npos);
}

TEST(Cli, MalformedCorpusIsParseError) {
  const fs::path bad = workdir() / "bad.jsonl";
  std::ofstream(bad) << "{\"tokens\": [\"a\"], \"pos\": [\"DT\"]}\nnot json\n";
  const auto r = run({"stats", "--corpus", bad.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error: parse"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(Cli, InvalidConfigIsUsageError) {
  const fs::path cfg = workdir() / "bad.cfg";
  std::ofstream(cfg) << "epochs = 2\nnot_a_key = 3\n";
  const fs::path fixture = fs::path(SEQ2SET_FIXTURES) / "ten.jsonl";
  const auto r = run({"train", "--train", fixture.string(), "--config", cfg.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not_a_key"), std::string::npos) << r.err;
}

TEST(Cli, GenDataIsDeterministicAndValidated) {
  const fs::path a = workdir() / "gen_a", b = workdir() / "gen_b";
  ASSERT_EQ(run({"gen-data", "--seed", "7", "--n", "3", "--out-dir", a.string()}).code, 0);
  ASSERT_EQ(run({"gen-data", "--seed", "7", "--n", "3", "--out-dir", b.string()}).code, 0);
  EXPECT_EQ(slurp(a / "train.jsonl"), slurp(b / "train.jsonl"));
  EXPECT_EQ(lines_of(a / "train.jsonl").size(), 3u);
  EXPECT_EQ(run({"gen-data", "--nesting-prob", "1.5", "--out-dir", a.string()}).code, 2);
  EXPECT_EQ(run({"gen-data", "--n", "3"}).code, 2);
}

TEST(Cli, TrainPredictEvalRoundTrip) {
  Pipeline p;
  const fs::path ckpt = p.dir / "model.json";
  const auto t = run({"train", "--train", (p.dir / "train.jsonl").string(), "--dev", (p.dir / "dev.jsonl").string(),
                      "--test", (p.dir / "test.jsonl").string(), "--config", p.config.string(), "--out", ckpt.string()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(lines_of(ckpt.string() + ".metrics.jsonl").size(), 2u);
  const json summary = json::parse(t.out.substr(t.out.rfind('{', t.out.size() - 2) == std::string::npos ? 0 : t.out.find_last_of('\n', t.out.size() - 2) + 1));
  const double in_process = summary["test"]["f1"].get<double>();

  const fs::path pred = p.dir / "pred.jsonl";
  const auto pr = run({"predict", "--checkpoint", ckpt.string(), "--in", (p.dir / "test.jsonl").string(), "--out", pred.string()});
  ASSERT_EQ(pr.code, 0) << pr.err;
  const auto in_lines = lines_of(p.dir / "test.jsonl");
  const auto out_lines = lines_of(pred);
  ASSERT_EQ(out_lines.size(), in_lines.size());
  for (std::size_t i = 0; i < in_lines.size(); ++i) {
    const auto a = json::parse(in_lines[i]), b = json::parse(out_lines[i]);
    EXPECT_EQ(a["tokens"], b["tokens"]);
    for (const auto& e : b["entities"]) {
      EXPECT_TRUE(e.contains("score"));
      EXPECT_LE(e["start"].get<int>(), e["end"].get<int>());
    }
  }

  const auto by_file = run({"eval", "--corpus", (p.dir / "test.jsonl").string(), "--predictions", pred.string(), "--json"});
  ASSERT_EQ(by_file.code, 0) << by_file.err;
  const auto by_model = run({"eval", "--corpus", (p.dir / "test.jsonl").string(), "--checkpoint", ckpt.string(), "--json"});
  ASSERT_EQ(by_model.code, 0) << by_model.err;
  const json f = json::parse(by_file.out), m = json::parse(by_model.out);
  EXPECT_EQ(f["tp"], m["tp"]);
  EXPECT_EQ(f["fp"], m["fp"]);
  EXPECT_EQ(f["fn"], m["fn"]);
  EXPECT_EQ(m["f1"].get<double>(), in_process);

  EXPECT_EQ(run({"eval", "--corpus", (p.dir / "test.jsonl").string(), "--checkpoint", ckpt.string(), "--null-threshold", "2"}).code, 2);
  EXPECT_EQ(run({"predict", "--checkpoint", ckpt.string(), "--in", (p.dir / "test.jsonl").string()}).code, 2);
}

TEST(Cli, TrainIsReproducibleGivenSeed) {
  Pipeline p;
  auto train = [&](const std::string& name, const std::string& seed) {
    const fs::path ckpt = p.dir / name;
    const auto r = run({"train", "--train", (p.dir / "train.jsonl").string(), "--dev", (p.dir / "dev.jsonl").string(),
                        "--config", p.config.string(), "--seed", seed, "--out", ckpt.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return std::pair{slurp(ckpt.string() + ".metrics.jsonl"), slurp(ckpt)};
  };
  const auto a = train("a.json", "13"), b = train("b.json", "13"), c = train("c.json", "14");
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.second, c.second);
}

TEST(Cli, SweepWritesOneRowPerValue) {
  Pipeline p;
  const fs::path out = p.dir / "sweep.json";
  const auto r = run({"sweep", "--axis", "interaction", "--train", (p.dir / "train.jsonl").string(), "--dev",
                      (p.dir / "dev.jsonl").string(), "--test", (p.dir / "test.jsonl").string(), "--config",
                      p.config.string(), "--epochs", "1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(out));
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(run({"sweep", "--axis", "colour", "--train", (p.dir / "train.jsonl").string()}).code, 2);
}
