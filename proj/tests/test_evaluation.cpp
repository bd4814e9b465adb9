#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "seq2set/errors.hpp"
#include "seq2set/evaluation.hpp"
#include "seq2set/sweep.hpp"
#include "seq2set/synthetic.hpp"

using namespace seq2set;

namespace {

constexpr int PER = 0, GPE = 1, ORG = 2;

std::vector<Entity> random_entities(std::mt19937_64& rng, std::size_t max_count) {
  std::uniform_int_distribution<int> pos(0, 5), cat(0, 2);
  std::uniform_int_distribution<std::size_t> count(0, max_count);
  std::vector<Entity> out;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    int a = pos(rng), b = pos(rng);
    out.push_back({std::min(a, b), std::max(a, b), cat(rng)});
  }
  return out;
}

Sentence sentence_with(std::size_t length, std::vector<Entity> gold) {
  Sentence s;
  s.tokens.assign(length, 2);
  s.pos.assign(length, 2);
  s.chars.assign(length, {2});
  s.gold = std::move(gold);
  return s;
}

// Counts nested entities by walking each sentence's spans sorted by start
// and widest-first, checking only against earlier spans that cover it or
// later spans it covers.
struct Count {
  std::size_t sentences = 0, nested_sentences = 0, tokens = 0, entities = 0, nested = 0;
};

Count independent_count(const std::vector<RawSentence>& corpus) {
  Count c;
  for (const auto& s : corpus) {
    ++c.sentences;
    c.tokens += s.tokens.size();
    c.entities += s.entities.size();
    std::vector<std::pair<int, int>> spans;
    for (const auto& e : s.entities) spans.emplace_back(e.start, -e.end);
    std::sort(spans.begin(), spans.end());
    std::vector<bool> nested(spans.size(), false);
    for (std::size_t i = 0; i < spans.size(); ++i)
      for (std::size_t j = i + 1; j < spans.size(); ++j) {
        const int si = spans[i].first, ei = -spans[i].second, sj = spans[j].first, ej = -spans[j].second;
        if (sj > ei) break;
        const bool same = si == sj && ei == ej;
        if (!same && ej <= ei) nested[i] = nested[j] = true;
      }
    const auto k = static_cast<std::size_t>(std::count(nested.begin(), nested.end(), true));
    c.nested += k;
    c.nested_sentences += k > 0 ? 1 : 0;
  }
  return c;
}

}  // namespace

TEST(Score, IdenticalSetsArePerfect) {
  const std::vector<Entity> g{{0, 1, PER}, {2, 2, GPE}};
  const auto r = score(g, g);
  EXPECT_EQ(r.precision(), 1.0);
  EXPECT_EQ(r.recall(), 1.0);
  EXPECT_EQ(r.f1(), 1.0);
}

TEST(Score, EmptyPredictionsScoreZero) {
  const std::vector<Entity> g{{0, 1, PER}};
  const auto r = score(g, std::span<const Entity>{});
  EXPECT_EQ(r.precision(), 0.0);
  EXPECT_EQ(r.recall(), 0.0);
  EXPECT_EQ(r.f1(), 0.0);
  EXPECT_EQ(r.total.fn, 1u);
}

TEST(Score, WrongLabelHalvesEverything) {
  const std::vector<Entity> g{{0, 1, PER}, {2, 2, GPE}};
  const std::vector<Entity> p{{0, 1, PER}, {2, 2, ORG}};
  const auto r = score(g, p);
  EXPECT_EQ(r.precision(), 0.5);
  EXPECT_EQ(r.recall(), 0.5);
  EXPECT_EQ(r.f1(), 0.5);
  EXPECT_EQ(r.per_category.at(PER).tp, 1u);
  EXPECT_EQ(r.per_category.at(GPE).fn, 1u);
  EXPECT_EQ(r.per_category.at(ORG).fp, 1u);
}

TEST(Score, GoldMatchedAtMostOnce) {
  const std::vector<Entity> g{{0, 1, PER}};
  const std::vector<Entity> p{{0, 1, PER}, {0, 1, PER}};
  const auto r = score(g, p);
  EXPECT_EQ(r.total.tp, 1u);
  EXPECT_EQ(r.total.fp, 1u);
}

TEST(Score, PredictedEntitiesScoreLikeEntities) {
  const std::vector<Entity> g{{0, 1, PER}, {2, 2, GPE}};
  const std::vector<PredictedEntity> p{{0, 1, PER, 0.9}, {1, 2, GPE, 0.4}};
  const std::vector<Entity> plain{{0, 1, PER}, {1, 2, GPE}};
  EXPECT_EQ(score(g, p).total, score(g, plain).total);
}

TEST(Score, CountInvariantsAndSymmetry) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = random_entities(rng, 6), p = random_entities(rng, 6);
    const auto r = score(g, p);
    EXPECT_EQ(r.total.tp + r.total.fn, g.size());
    EXPECT_EQ(r.total.tp + r.total.fp, p.size());
    const auto s = score(p, g);
    EXPECT_EQ(s.precision(), r.recall());
    EXPECT_EQ(s.recall(), r.precision());
    const double pr = r.precision() + r.recall();
    EXPECT_DOUBLE_EQ(r.f1(), pr == 0.0 ? 0.0 : 2 * r.precision() * r.recall() / pr);
    MatchCounts sum;
    for (const auto& [c, counts] : r.per_category) sum += counts;
    EXPECT_EQ(sum, r.total);
  }
}

TEST(Score, MergeEqualsPooledCounts) {
  std::mt19937_64 rng(2);
  MetricReport merged;
  MatchCounts pooled;
  for (int k = 0; k < 50; ++k) {
    const auto g = random_entities(rng, 5), p = random_entities(rng, 5);
    const auto r = score(g, p);
    merged.merge(r);
    pooled += r.total;
  }
  EXPECT_EQ(merged.total, pooled);
  MatchCounts by_cat;
  for (const auto& [c, counts] : merged.per_category) by_cat += counts;
  EXPECT_EQ(by_cat, pooled);
}

TEST(Score, ReportsCarryAllFields) {
  const std::vector<Entity> g{{0, 1, PER}, {2, 2, GPE}};
  const std::vector<Entity> p{{0, 1, PER}, {2, 2, ORG}};
  const auto r = score(g, p);
  const auto j = r.to_json();
  for (const char* key : {"precision", "recall", "f1", "tp", "fp", "fn", "macro_f1", "per_category"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_NEAR(r.macro_f1(), (1.0 + 0.0 + 0.0) / 3.0, 1e-15);
  EXPECT_NE(r.table().find("micro"), std::string::npos);
}

TEST(Stats, NoEntities) {
  const std::vector<Sentence> corpus{sentence_with(3, {}), sentence_with(5, {})};
  const auto s = corpus_stats(corpus);
  EXPECT_EQ(s.sentences, 2u);
  EXPECT_EQ(s.total_entities, 0u);
  EXPECT_EQ(s.nested_percentage(), 0.0);
  EXPECT_EQ(s.avg_length, 4.0);
}

TEST(Stats, MutualContainmentCountsBoth) {
  const std::vector<Sentence> corpus{sentence_with(5, {{0, 3, 0}, {1, 2, 1}})};
  const auto s = corpus_stats(corpus);
  EXPECT_EQ(s.total_entities, 2u);
  EXPECT_EQ(s.nested_entities, 2u);
  EXPECT_EQ(s.sentences_with_nested, 1u);
  EXPECT_EQ(s.nested_percentage(), 100.0);
}

TEST(Stats, DuplicateSpansAndCrossingSpansAreNotNested) {
  const std::vector<Sentence> corpus{sentence_with(5, {{1, 2, 0}, {1, 2, 1}, {2, 4, 0}})};
  const auto s = corpus_stats(corpus);
  EXPECT_EQ(s.nested_entities, 0u);
  EXPECT_EQ(s.sentences_with_nested, 0u);
}

TEST(Stats, SharedBoundaryIsStillContainment) {
  const std::vector<Entity> gold{{0, 3, 0}, {0, 1, 1}, {3, 3, 2}};
  for (const auto& e : gold) EXPECT_TRUE(is_nested(e, gold));
}

TEST(Stats, MatchesIndependentCounterOnSyntheticCorpus) {
  GrammarConfig c;
  c.n_train = 1000;
  c.n_dev = 0;
  c.n_test = 0;
  const auto corpus = generate_synthetic(c);
  const Vocab v = Vocab::build(corpus.train);
  auto sentences = encode_all(corpus.train, v);
  const auto s = corpus_stats(sentences);
  const Count k = independent_count(corpus.train);
  EXPECT_EQ(s.sentences, k.sentences);
  EXPECT_EQ(s.sentences_with_nested, k.nested_sentences);
  EXPECT_EQ(s.total_entities, k.entities);
  EXPECT_EQ(s.nested_entities, k.nested);
  EXPECT_EQ(s.avg_length, static_cast<double>(k.tokens) / static_cast<double>(k.sentences));
  EXPECT_GT(k.nested, 0u);

  std::mt19937_64 rng(3);
  std::shuffle(sentences.begin(), sentences.end(), rng);
  const auto shuffled = corpus_stats(sentences);
  EXPECT_EQ(shuffled.nested_entities, s.nested_entities);
  EXPECT_EQ(shuffled.nested_percentage(), s.nested_percentage());
  EXPECT_EQ(shuffled.sentences_with_nested, s.sentences_with_nested);
}

TEST(Stats, JsonFields) {
  const auto j = corpus_stats(std::vector<Sentence>{sentence_with(2, {{0, 1, 0}})}).to_json();
  for (const char* key :
       {"sentences", "sentences_with_nested", "avg_sentence_length", "total_entities", "nested_entities", "nested_percentage"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Sweep, AxisNamesAndDefaults) {
  for (const char* name : {"query_count", "decoder_layers", "interaction", "loss", "freeze_queries"})
    EXPECT_EQ(sweep_axis_name(parse_sweep_axis(name)), name);
  EXPECT_THROW(parse_sweep_axis("heads"), ValidationError);
  EXPECT_EQ(default_sweep_values(SweepAxis::kInteraction).size(), 2u);
  EXPECT_EQ(default_sweep_values(SweepAxis::kLoss).size(), 2u);
}

TEST(Sweep, ApplyValue) {
  const RunConfig base;
  EXPECT_EQ(apply_sweep_value(base, SweepAxis::kQueryCount, "20").model.decoder.queries, 20u);
  EXPECT_EQ(apply_sweep_value(base, SweepAxis::kDecoderLayers, "1").model.decoder.layers, 1u);
  EXPECT_FALSE(apply_sweep_value(base, SweepAxis::kInteraction, "off").model.decoder.interaction);
  const RunConfig ce = apply_sweep_value(base, SweepAxis::kLoss, "ce");
  EXPECT_EQ(ce.train.loss_mode, LossMode::kCrossEntropy);
  EXPECT_TRUE(ce.train.shuffle_gold_order);
  EXPECT_THROW(apply_sweep_value(base, SweepAxis::kQueryCount, "zero"), ValidationError);
  EXPECT_THROW(apply_sweep_value(base, SweepAxis::kInteraction, "maybe"), ValidationError);
}

namespace {

struct TinyBench {
  TinyBench() {
    GrammarConfig g;
    g.n_train = 16;
    g.n_dev = 4;
    g.n_test = 4;
    g.max_entities = 3;
    corpus = generate_synthetic(g);
    vocab = Vocab::build(corpus.train);
    train = encode_all(corpus.train, vocab);
    dev = encode_all(corpus.dev, vocab);
    test = encode_all(corpus.test, vocab);
    for (auto [k, v] : std::vector<std::pair<const char*, const char*>>{
             {"token_emb_dim", "8"}, {"pos_emb_dim", "4"}, {"char_emb_dim", "4"}, {"char_lstm_hidden", "4"},
             {"token_lstm_hidden", "8"}, {"token_lstm_layers", "1"}, {"queries", "8"}, {"decoder_layers", "1"},
             {"heads", "2"}, {"epochs", "1"}})
      set_config_value(config, k, v);
  }
  SyntheticCorpus corpus;
  Vocab vocab;
  std::vector<Sentence> train, dev, test;
  RunConfig config;
};

}  // namespace

TEST(Sweep, InteractionSweepHasTwoRows) {
  TinyBench b;
  const auto values = default_sweep_values(SweepAxis::kInteraction);
  const auto t = sweep(SweepAxis::kInteraction, values, b.config, {b.vocab, b.train, b.dev, b.test});
  ASSERT_EQ(t.cells.size(), 2u);
  for (const auto& c : t.cells) {
    EXPECT_TRUE(c.error.empty()) << c.error;
    EXPECT_TRUE(c.test.has_value());
  }
  EXPECT_EQ(t.to_json()["rows"].size(), 2u);
}

TEST(Sweep, SinglePointEqualsPlainRun) {
  TinyBench b;
  const std::vector<std::string> values{"8"};
  const auto t = sweep(SweepAxis::kQueryCount, values, b.config, {b.vocab, b.train, b.dev, b.test});
  const auto plain = train_and_evaluate(b.config, b.vocab, b.train, b.dev, b.test);
  ASSERT_EQ(t.cells.size(), 1u);
  EXPECT_EQ(t.cells[0].test->total, plain.test->total);
  EXPECT_EQ(t.cells[0].best_dev_f1, plain.best_dev_f1);
}

TEST(Sweep, FailingCellIsRecordedAndSweepContinues) {
  TinyBench b;
  const auto t = sweep(SweepAxis::kQueryCount, std::vector<std::string>{"0", "8"}, b.config, {b.vocab, b.train, b.dev, b.test});
  ASSERT_EQ(t.cells.size(), 2u);
  EXPECT_FALSE(t.cells[0].error.empty());
  EXPECT_TRUE(t.cells[1].error.empty());
}
