#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "seq2set/data.hpp"
#include "seq2set/errors.hpp"
#include "seq2set/evaluation.hpp"
#include "seq2set/model.hpp"
#include "seq2set/synthetic.hpp"

using namespace seq2set;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "seq2set_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fixture(const std::string& name) { return fs::path(SEQ2SET_FIXTURES) / name; }

// Counts read straight from the JSON, without the corpus loader.
struct Tally {
  std::size_t sentences = 0, tokens = 0, entities = 0, nested = 0, nested_sentences = 0;
};

Tally count_file(const fs::path& p) {
  Tally t;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ++t.sentences;
    t.tokens += j["tokens"].size();
    if (!j.contains("entities")) continue;
    std::vector<std::pair<int, int>> spans;
    for (const auto& e : j["entities"]) spans.emplace_back(e["start"].get<int>(), e["end"].get<int>());
    t.entities += spans.size();
    std::size_t here = 0;
    for (const auto& a : spans) {
      bool hit = false;
      for (const auto& b : spans) {
        if (a == b) continue;
        const bool a_in_b = b.first <= a.first && a.second <= b.second;
        const bool b_in_a = a.first <= b.first && b.second <= a.second;
        hit = hit || a_in_b || b_in_a;
      }
      here += hit ? 1 : 0;
    }
    t.nested += here;
    t.nested_sentences += here > 0 ? 1 : 0;
  }
  return t;
}

// Chain length L of one top-level phrase: a phrase at depth d < D nests with
// probability p. Every entity of a chain with L >= 2 is nested, so the rate is
// (E[L] - P(L = 1)) / E[L], independent of how many phrases a sentence holds.
double enumerated_nested_rate(double p, int max_depth) {
  std::map<int, double> length_prob;
  std::function<void(int, double)> walk = [&](int depth, double prob) {
    if (depth < max_depth) {
      walk(depth + 1, prob * p);
      length_prob[depth] += prob * (1.0 - p);
    } else {
      length_prob[depth] += prob;
    }
  };
  walk(1, 1.0);
  double mean = 0.0;
  for (const auto& [len, prob] : length_prob) mean += len * prob;
  return 100.0 * (mean - length_prob[1]) / mean;
}

GrammarConfig small_grammar(std::uint64_t seed, std::size_t n, double p) {
  GrammarConfig c;
  c.seed = seed;
  c.n_train = n;
  c.n_dev = 0;
  c.n_test = 0;
  c.nesting_prob = p;
  return c;
}

}  // namespace

TEST(LoadCorpus, SingleTokenLineWithoutEntities) {
  const auto p = temp_file("one.jsonl", R"({"tokens":["a"],"pos":["DT"],"entities":[]})" "\n");
  const Corpus c = load_corpus(p, VocabMode::kBuild);
  ASSERT_EQ(c.sentences.size(), 1u);
  EXPECT_EQ(c.sentences[0].gold.size(), 0u);
  EXPECT_EQ(c.sentences[0].length(), 1u);
}

TEST(LoadCorpus, SpanPastSentenceEndIsValidationError) {
  const auto p = temp_file("bad_span.jsonl",
                           R"({"tokens":["a","b"],"pos":["DT","NN"],"entities":[{"start":2,"end":2,"type":"PER"}]})"
                           "\n");
  try {
    load_corpus(p, VocabMode::kBuild);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, MalformedJsonNamesTheLine) {
  const auto p = temp_file("bad_json.jsonl", std::string(R"({"tokens":["a"],"pos":["DT"]})") + "\n{\"tokens\": [\n");
  try {
    load_corpus(p, VocabMode::kBuild);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadCorpus, DuplicateEntityAndLengthMismatchRejected) {
  EXPECT_THROW(parse_record(R"({"tokens":["a"],"pos":["DT"],"entities":[{"start":0,"end":0,"type":"X"},{"start":0,"end":0,"type":"X"}]})", 1),
               ValidationError);
  EXPECT_THROW(parse_record(R"({"tokens":["a","b"],"pos":["DT"]})", 1), ValidationError);
  EXPECT_THROW(parse_record(R"({"tokens":[],"pos":[]})", 1), ValidationError);
  EXPECT_THROW(parse_record(R"({"tokens":["a"],"pos":["DT"],"entities":[{"start":1,"end":0,"type":"X"}]})", 1),
               ValidationError);
}

TEST(LoadCorpus, ExactOverlapWithDifferentCategoriesAllowed) {
  const auto s = parse_record(
      R"({"tokens":["a"],"pos":["DT"],"entities":[{"start":0,"end":0,"type":"X"},{"start":0,"end":0,"type":"Y"}]})", 1);
  EXPECT_EQ(s.entities.size(), 2u);
}

TEST(LoadCorpus, FixtureMatchesIndependentCounter) {
  const Corpus c = load_corpus(fixture("ten.jsonl"), VocabMode::kBuild);
  const Tally t = count_file(fixture("ten.jsonl"));
  const CorpusStats s = corpus_stats(c.sentences);
  // Hand-counted values of the fixture.
  EXPECT_EQ(t.sentences, 10u);
  EXPECT_EQ(t.tokens, 38u);
  EXPECT_EQ(t.entities, 17u);
  EXPECT_EQ(t.nested, 7u);
  EXPECT_EQ(t.nested_sentences, 3u);

  EXPECT_EQ(s.sentences, t.sentences);
  EXPECT_EQ(s.total_entities, t.entities);
  EXPECT_EQ(s.nested_entities, t.nested);
  EXPECT_EQ(s.sentences_with_nested, t.nested_sentences);
  EXPECT_DOUBLE_EQ(s.avg_length, static_cast<double>(t.tokens) / static_cast<double>(t.sentences));
}

TEST(LoadCorpus, ReuseModeMapsUnseenTokensToUnk) {
  const Corpus train = load_corpus(fixture("ten.jsonl"), VocabMode::kBuild);
  const auto p = temp_file("unseen.jsonl", R"({"tokens":["qq","paris"],"pos":["NN","QQ"],"entities":[]})" "\n");
  const Corpus c = load_corpus(p, VocabMode::kReuse, &train.vocab);
  EXPECT_EQ(c.sentences[0].tokens[0], Vocab::kUnk);
  EXPECT_NE(c.sentences[0].tokens[1], Vocab::kUnk);
  EXPECT_EQ(c.sentences[0].pos[1], Vocab::kUnk);
  EXPECT_EQ(c.sentences[0].chars[0][0], Vocab::kUnk);
  EXPECT_NE(c.sentences[0].chars[1][0], Vocab::kUnk);
}

TEST(LoadCorpus, ReuseModeRejectsUnknownCategory) {
  const Corpus train = load_corpus(fixture("ten.jsonl"), VocabMode::kBuild);
  const auto p =
      temp_file("unknown_cat.jsonl", R"({"tokens":["a"],"pos":["DT"],"entities":[{"start":0,"end":0,"type":"WEA"}]})" "\n");
  EXPECT_THROW(load_corpus(p, VocabMode::kReuse, &train.vocab), ValidationError);
}

TEST(Vocab, ReservedIdsAndNullIsLargest) {
  const Corpus c = load_corpus(fixture("ten.jsonl"), VocabMode::kBuild);
  const Vocab& v = c.vocab;
  EXPECT_EQ(v.token_id("definitely-unseen"), Vocab::kUnk);
  EXPECT_EQ(v.category_count(), 4u);  // GPE LOC ORG PER
  EXPECT_EQ(v.null_category(), 4);
  for (const char* name : {"GPE", "LOC", "ORG", "PER"}) EXPECT_LT(v.category_id(name), v.null_category());
  EXPECT_EQ(v.category_id("GPE"), 0);
  EXPECT_EQ(v.category_id("PER"), 3);
  EXPECT_THROW(v.category_id("WEA"), ValidationError);
}

TEST(Vocab, JsonRoundTripKeepsIds) {
  const Corpus c = load_corpus(fixture("ten.jsonl"), VocabMode::kBuild);
  const Vocab back = Vocab::from_json(nlohmann::json::parse(c.vocab.to_json().dump()));
  EXPECT_TRUE(back == c.vocab);
  for (const auto& raw : c.raw) {
    for (const auto& t : raw.tokens) EXPECT_EQ(back.token_id(t), c.vocab.token_id(t));
    for (const auto& t : raw.pos) EXPECT_EQ(back.pos_id(t), c.vocab.pos_id(t));
    for (char32_t ch : utf8_decode(raw.tokens[0])) EXPECT_EQ(back.char_id(ch), c.vocab.char_id(ch));
  }
}

TEST(Vocab, MultiByteCharactersGetOneIdEach) {
  const std::u32string d = utf8_decode("zürich");
  ASSERT_EQ(d.size(), 6u);
  EXPECT_EQ(d[1], U'ü');
  EXPECT_EQ(utf8_decode("\xff")[0], U'\xFFFD');
}

TEST(Corpus, SaveLoadRoundTrip) {
  const auto raw = read_jsonl(fixture("ten.jsonl"));
  const fs::path out = fs::temp_directory_path() / "seq2set_test_data" / "round.jsonl";
  write_jsonl(out, raw);
  EXPECT_EQ(read_jsonl(out), raw);
  write_jsonl(out, read_jsonl(out));
  const std::string once = slurp(out);
  write_jsonl(out, read_jsonl(out));
  EXPECT_EQ(slurp(out), once);
}

TEST(Synthetic, SameSeedSameBytes) {
  GrammarConfig c = small_grammar(7, 3, 0.4);
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  std::string sa, sb;
  for (const auto& s : a.train) sa += format_record(s) + "\n";
  for (const auto& s : b.train) sb += format_record(s) + "\n";
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(a.train.size(), 3u);
  c.seed = 8;
  std::string sc;
  for (const auto& s : generate_synthetic(c).train) sc += format_record(s) + "\n";
  EXPECT_NE(sa, sc);
}

TEST(Synthetic, NoNestingWhenProbabilityIsZero) {
  const auto corpus = generate_synthetic(small_grammar(3, 300, 0.0));
  const Vocab v = Vocab::build(corpus.train);
  const auto stats = corpus_stats(encode_all(corpus.train, v));
  EXPECT_GT(stats.total_entities, 0u);
  EXPECT_EQ(stats.nested_entities, 0u);
  EXPECT_EQ(stats.nested_percentage(), 0.0);
}

TEST(Synthetic, EnumerationOracleSanity) {
  EXPECT_NEAR(enumerated_nested_rate(0.5, 3), 100.0 * (1.75 - 0.5) / 1.75, 1e-12);
  EXPECT_EQ(enumerated_nested_rate(0.0, 3), 0.0);
  EXPECT_EQ(enumerated_nested_rate(0.7, 1), 0.0);
  EXPECT_NEAR(enumerated_nested_rate(1.0, 3), 100.0, 1e-12);
}

TEST(Synthetic, NestedRateMatchesGrammarEnumeration) {
  GrammarConfig c = small_grammar(11, 1000, 0.5);
  const auto corpus = generate_synthetic(c);
  const Vocab v = Vocab::build(corpus.train);
  const double observed = corpus_stats(encode_all(corpus.train, v)).nested_percentage();
  EXPECT_NEAR(observed, enumerated_nested_rate(c.nesting_prob, c.max_depth), 5.0);
}

TEST(Synthetic, SplitsAreDisjointAndValid) {
  GrammarConfig c;
  c.n_train = 300;
  c.n_dev = 50;
  c.n_test = 50;
  const auto corpus = generate_synthetic(c);
  std::set<std::vector<std::string>> train;
  for (const auto& s : corpus.train) {
    validate(s, 1);
    train.insert(s.tokens);
  }
  EXPECT_EQ(train.size(), corpus.train.size());
  for (const auto* split : {&corpus.dev, &corpus.test})
    for (const auto& s : *split) EXPECT_EQ(train.count(s.tokens), 0u);
}

TEST(Synthetic, InvalidConfigRejected) {
  GrammarConfig c = small_grammar(1, 5, 1.5);
  EXPECT_THROW(generate_synthetic(c), ContractError);
  c.nesting_prob = 0.4;
  c.max_depth = 0;
  EXPECT_THROW(generate_synthetic(c), ContractError);
  c.max_depth = 3;
  c.n_train = 0;
  EXPECT_THROW(generate_synthetic(c), ContractError);
}

// A category has its own head, frame and preposition words, so the label of
// every span is a function of the span's first content word.
TEST(Synthetic, CategoryDeterminedBySurface) {
  GrammarConfig c = small_grammar(5, 1000, 0.5);
  c.category_count = 7;
  const auto corpus = generate_synthetic(c);
  std::map<std::string, std::set<std::string>> label_of;
  for (const auto& s : corpus.train) {
    for (const auto& e : s.entities) {
      int k = e.start;
      if (s.pos[static_cast<std::size_t>(k)] == "DT") ++k;
      ASSERT_LE(k, e.end);
      label_of[s.tokens[static_cast<std::size_t>(k)]].insert(e.type);
    }
  }
  EXPECT_GT(label_of.size(), 20u);
  for (const auto& [word, labels] : label_of) EXPECT_EQ(labels.size(), 1u) << word;
}

TEST(Synthetic, EntityCountCapRespected) {
  GrammarConfig c = small_grammar(2, 200, 1.0);
  c.max_entities = 4;
  for (const auto& s : generate_synthetic(c).train) EXPECT_LE(s.entities.size(), 4u);
}

TEST(Batches, NineSentencesInBatchesOfEight) {
  const auto corpus = generate_synthetic(small_grammar(1, 9, 0.4));
  const Vocab v = Vocab::build(corpus.train);
  const auto sentences = encode_all(corpus.train, v);
  const auto batches = make_batches(sentences, 8);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(batches[0].size(), 8u);
  EXPECT_EQ(batches[1].size(), 1u);
}

TEST(Batches, EqualLengthsGiveFullMask) {
  std::vector<RawSentence> raw(3);
  for (int i = 0; i < 3; ++i) raw[i] = {{"a", "b", "c"}, {"DT", "NN", "."}, {}};
  const Vocab v = Vocab::build(raw, {"X"});
  const auto sentences = encode_all(raw, v);
  const auto b = make_batches(sentences, 8).front();
  EXPECT_EQ(b.max_length, 3u);
  EXPECT_TRUE(std::all_of(b.mask.begin(), b.mask.end(), [](auto m) { return m == 1; }));
}

TEST(Batches, MaskMatchesLengthsAndRoundTrips) {
  const auto corpus = generate_synthetic(small_grammar(4, 37, 0.4));
  const Vocab v = Vocab::build(corpus.train);
  const auto sentences = encode_all(corpus.train, v);
  std::size_t seen = 0;
  for (const auto& b : make_batches(sentences, 8, 99)) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t t = 0; t < b.max_length; ++t) {
        const bool real = t < b.lengths[k];
        EXPECT_EQ(b.mask[k * b.max_length + t], real ? 1 : 0);
        if (!real) EXPECT_EQ(b.tokens[k * b.max_length + t], Vocab::kPad);
      }
      const Sentence back = b.sentence(k);
      const Sentence& orig = sentences[b.indices[k]];
      EXPECT_EQ(back.tokens, orig.tokens);
      EXPECT_EQ(back.pos, orig.pos);
      EXPECT_EQ(back.chars, orig.chars);
      EXPECT_EQ(back.gold, orig.gold);
      ++seen;
    }
  }
  EXPECT_EQ(seen, sentences.size());
}

TEST(Batches, ShuffleIsStableGivenSeed) {
  const auto corpus = generate_synthetic(small_grammar(4, 30, 0.4));
  const Vocab v = Vocab::build(corpus.train);
  const auto sentences = encode_all(corpus.train, v);
  auto order = [&](std::optional<std::uint64_t> seed) {
    std::vector<std::size_t> out;
    for (const auto& b : make_batches(sentences, 4, seed)) out.insert(out.end(), b.indices.begin(), b.indices.end());
    return out;
  };
  EXPECT_EQ(order(5), order(5));
  EXPECT_NE(order(5), order(6));
  auto sorted = order(5);
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, order(std::nullopt));
  EXPECT_THROW(make_batches(std::span<const Sentence>{}, 4), ContractError);
}

TEST(Batches, PadPerturbationLeavesForwardUnchanged) {
  const auto corpus = generate_synthetic(small_grammar(6, 6, 0.4));
  const Vocab v = Vocab::build(corpus.train);
  const auto sentences = encode_all(corpus.train, v);
  ModelConfig mc;
  mc.encoder.token_emb_dim = 8;
  mc.encoder.pos_emb_dim = 4;
  mc.encoder.char_emb_dim = 4;
  mc.encoder.char_lstm_hidden = 4;
  mc.encoder.token_lstm_hidden = 8;
  mc.encoder.pretrained_channel_dim = 0;
  mc.encoder.dropout = 0.0;
  mc.decoder.queries = 6;
  mc.decoder.layers = 1;
  mc.decoder.heads = 2;
  mc.decoder.ffn_hidden = 16;
  mc.decoder.head_hidden = 8;
  mc.decoder.dropout = 0.0;
  std::mt19937_64 rng(3);
  Seq2SetModel<double> model(mc, VocabSizes::of(v), rng);
  auto batches = make_batches(sentences, 6);
  Batch& b = batches.front();
  std::size_t shortest = 0;
  for (std::size_t k = 0; k < b.size(); ++k)
    if (b.lengths[k] < b.lengths[shortest]) shortest = k;
  ASSERT_LT(b.lengths[shortest], b.max_length);

  auto run = [&](const Batch& batch) {
    ad::Graph<double> g;
    std::mt19937_64 r(1);
    return values_of(model.forward(g, batch, shortest, false, r));
  };
  const auto before = run(b);
  Batch perturbed = b;
  for (std::size_t t = b.lengths[shortest]; t < b.max_length; ++t) {
    const std::size_t at = shortest * b.max_length + t;
    perturbed.tokens[at] = 5;
    perturbed.pos[at] = 3;
    perturbed.chars[at] = {4, 7};
  }
  const auto after = run(perturbed);
  EXPECT_TRUE(std::ranges::equal(before.class_probs.values(), after.class_probs.values()));
  EXPECT_TRUE(std::ranges::equal(before.left.values(), after.left.values()));
  EXPECT_TRUE(std::ranges::equal(before.right.values(), after.right.values()));
}
