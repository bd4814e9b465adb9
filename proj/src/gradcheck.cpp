#include "seq2set/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "seq2set/matching.hpp"

namespace seq2set {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : parameters) {
    params.push_back({{"name", p.name}, {"entries", p.entries}, {"max_relative_error", p.max_relative_error},
                      {"max_abs_gradient", p.max_abs_gradient}, {"pass", p.pass}});
  }
  return {{"pass", pass}, {"entries", entries}, {"max_relative_error", max_relative_error}, {"parameters", params}};
}

std::string GradcheckReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(48) << "parameter" << std::right << std::setw(9) << "entries" << std::setw(14)
     << "max rel err" << "  status\n";
  for (const auto& p : parameters) {
    os << std::left << std::setw(48) << p.name << std::right << std::setw(9) << p.entries << std::setw(14)
       << std::scientific << std::setprecision(3) << p.max_relative_error << std::defaultfloat << "  "
       << (p.pass ? "ok" : "FAIL") << '\n';
  }
  os << (pass ? "gradcheck passed" : "gradcheck FAILED") << ": " << entries << " entries, max relative error "
     << std::scientific << std::setprecision(3) << max_relative_error << '\n';
  return os.str();
}

MiniatureSetup miniature_setup() {
  auto sentence = [](std::vector<std::string> tokens, std::vector<std::string> pos, std::vector<RawEntity> ents) {
    return RawSentence{std::move(tokens), std::move(pos), std::move(ents)};
  };
  std::vector<RawSentence> raw = {
      sentence({"the", "leader", "of", "acme"}, {"DT", "NN", "IN", "NNP"}, {{0, 3, "PER"}, {3, 3, "ORG"}}),
      sentence({"paris", "said", "."}, {"NNP", "VBD", "."}, {{0, 0, "GPE"}}),
      sentence({"john", "smith", "met", "."}, {"NNP", "NNP", "VBD", "."}, {{0, 1, "PER"}}),
  };
  // Vocabulary filler so the token table has exactly 20 rows (PAD and UNK included).
  std::vector<RawSentence> vocab_source = raw;
  RawSentence filler;
  for (const char* w : {"a", "bank", "in", "rome", "near", "lake", "ford", "jet"}) {
    filler.tokens.emplace_back(w);
    filler.pos.emplace_back("NN");
  }
  vocab_source.push_back(filler);

  MiniatureSetup setup;
  setup.vocab = Vocab::build(vocab_source, {"GPE", "ORG", "PER"});
  setup.sentences = encode_all(raw, setup.vocab);

  EncoderConfig& e = setup.config.encoder;
  e.token_emb_dim = 6;
  e.pretrained_channel_dim = 2;
  e.pos_emb_dim = 3;
  e.char_emb_dim = 3;
  e.char_lstm_hidden = 3;
  e.token_lstm_hidden = 8;
  e.token_lstm_layers = 2;
  e.dropout = 0.0;
  DecoderConfig& d = setup.config.decoder;
  d.queries = 5;
  d.layers = 1;
  d.heads = 2;
  d.ffn_hidden = 16;
  d.head_hidden = 8;
  d.dropout = 0.0;
  return setup;
}

GradcheckReport gradcheck_model(Seq2SetModel<double>& model, std::span<const Sentence> sentences, int null_category,
                                const GradcheckOptions& options) {
  std::mt19937_64 unused(0);
  const std::size_t n = model.config().decoder.queries;
  std::vector<PaddedGold> gold;
  std::vector<Assignment> assignments;
  for (const Sentence& s : sentences) {
    gold.push_back(pad_gold(s.gold, n, null_category));
    assignments.push_back(hungarian(cost_matrix(gold.back(), model.infer(s))));
  }
  const double inv = 1.0 / static_cast<double>(sentences.size());
  auto loss_value = [&] {
    double total = 0.0;
    for (std::size_t k = 0; k < sentences.size(); ++k) {
      ad::Graph<double> g(false);
      total += set_loss(gold[k], model.forward(g, sentences[k], false, unused), assignments[k]).value()[0];
    }
    return total * inv;
  };

  ParameterStore<double>& store = model.parameters();
  store.zero_grad();
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    ad::Graph<double> g;
    auto loss = set_loss(gold[k], model.forward(g, sentences[k], false, unused), assignments[k]);
    g.backward(ad::scale(loss, inv));
  }

  GradcheckReport report;
  for (std::size_t p = 0; p < store.size(); ++p) {
    Parameter<double>& param = store[p];
    if (!param.trainable) continue;
    ParameterCheck check;
    check.name = param.name;
    auto values = param.value.values();
    auto grad = param.value.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = loss_value();
      values[i] = original - options.step;
      const double minus = loss_value();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(grad[i], numeric, options.floor);
      check.max_relative_error = std::max(check.max_relative_error, err);
      check.max_abs_gradient = std::max(check.max_abs_gradient, std::abs(grad[i]));
      ++check.entries;
    }
    check.pass = check.max_relative_error < options.tolerance;
    report.pass = report.pass && check.pass;
    report.entries += check.entries;
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.parameters.push_back(check);
  }
  return report;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  MiniatureSetup setup = miniature_setup();
  std::mt19937_64 rng(options.seed);
  Seq2SetModel<double> model(setup.config, VocabSizes::of(setup.vocab), rng);
  // Default init keeps most gradients near the floor; widen the weights so
  // the check exercises non-trivial magnitudes everywhere.
  std::normal_distribution<double> noise(0.0, 0.3);
  for (std::size_t p = 0; p < model.parameters().size(); ++p)
    for (double& v : model.parameters()[p].value.values()) v += noise(rng);
  return gradcheck_model(model, setup.sentences, setup.vocab.null_category(), options);
}

}  // namespace seq2set
