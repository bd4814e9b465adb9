#include "seq2set/encoder.hpp"

#include <algorithm>
#include <string>

#include "seq2set/errors.hpp"

namespace seq2set {

void EncoderConfig::validate() const {
  if (token_emb_dim == 0 || pos_emb_dim == 0 || char_emb_dim == 0 || char_lstm_hidden == 0 ||
      token_lstm_hidden == 0 || token_lstm_layers == 0 || char_lstm_layers == 0) {
    throw ValidationError("encoder: all dimensions and layer counts must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("encoder: dropout must lie in [0, 1)");
}

template <typename T>
LstmState<T> lstm_step(ad::Var<T> projected, const LstmState<T>& prev, const LstmVars<T>& w) {
  const std::size_t h = w.hidden;
  auto gates = ad::add(projected, ad::matmul(prev.h, w.recurrent));
  auto in_gate = ad::sigmoid(ad::slice_cols(gates, 0, h));
  auto forget_gate = ad::sigmoid(ad::slice_cols(gates, h, h));
  auto candidate = ad::tanh(ad::slice_cols(gates, 2 * h, h));
  auto out_gate = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
  auto c = ad::add(ad::mul(forget_gate, prev.c), ad::mul(in_gate, candidate));
  auto hidden = ad::mul(out_gate, ad::tanh(c));
  return {hidden, c};
}

template <typename T>
LstmState<T> lstm_cell(ad::Var<T> x, const LstmState<T>& prev, const LstmVars<T>& w) {
  return lstm_step(ad::add_row(ad::matmul(x, w.input), w.bias), prev, w);
}

template <typename T>
ad::Var<T> run_lstm(ad::Var<T> x, const LstmVars<T>& w, bool reverse) {
  ad::Graph<T>& g = *x.graph;
  const std::size_t steps = x.rows();
  auto projected = ad::add_row(ad::matmul(x, w.input), w.bias);
  LstmState<T> state{g.constant(ad::Tensor<T>(1, w.hidden)), g.constant(ad::Tensor<T>(1, w.hidden))};
  std::vector<ad::Var<T>> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    state = lstm_step(ad::slice_rows(projected, t, 1), state, w);
    outputs[t] = state.h;
  }
  return ad::concat(std::span<const ad::Var<T>>(outputs), 0);
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, std::size_t token_vocab, std::size_t char_vocab,
                    std::size_t pos_vocab, ParameterStore<T>& store, std::mt19937_64& rng)
    : config_(config), token_vocab_(token_vocab), char_vocab_(char_vocab), pos_vocab_(pos_vocab) {
  config_.validate();
  token_embedding_ = &store.add("encoder.token_embedding", token_vocab, config_.token_emb_dim, Init::kNormal002,
                                rng, false);
  if (config_.pretrained_channel_dim > 0) {
    pretrained_ = &store.add_fixed("encoder.pretrained_channel", token_vocab, config_.pretrained_channel_dim,
                                   Init::kNormal002, rng);
  }
  pos_embedding_ = &store.add("encoder.pos_embedding", pos_vocab, config_.pos_emb_dim, Init::kNormal002, rng, false);
  char_embedding_ =
      &store.add("encoder.char_embedding", char_vocab, config_.char_emb_dim, Init::kNormal002, rng, false);
  std::size_t in = config_.char_emb_dim;
  for (std::size_t k = 0; k < config_.char_lstm_layers; ++k) {
    char_layers_.push_back(add_layer("encoder.char_lstm.l" + std::to_string(k), in, config_.char_lstm_hidden, store, rng));
    in = 2 * config_.char_lstm_hidden;
  }
  in = config_.input_dim();
  for (std::size_t k = 0; k < config_.token_lstm_layers; ++k) {
    token_layers_.push_back(
        add_layer("encoder.token_lstm.l" + std::to_string(k), in, config_.token_lstm_hidden, store, rng));
    in = config_.model_dim();
  }
}

template <typename T>
typename Encoder<T>::Layer Encoder<T>::add_layer(const std::string& prefix, std::size_t in, std::size_t hidden,
                                                 ParameterStore<T>& store, std::mt19937_64& rng) {
  auto direction = [&](const std::string& name) {
    Direction d;
    d.input = &store.add(prefix + "." + name + ".input", in, 4 * hidden, Init::kUniformFanIn, rng);
    d.recurrent = &store.add(prefix + "." + name + ".recurrent", hidden, 4 * hidden, Init::kUniformFanIn, rng);
    d.bias = &store.add(prefix + "." + name + ".bias", 1, 4 * hidden, Init::kZeros, rng);
    return d;
  };
  Layer layer;
  layer.forward = direction("fwd");
  layer.backward = direction("bwd");
  return layer;
}

template <typename T>
LstmVars<T> Encoder<T>::bind(ad::Graph<T>& g, const Direction& d, std::size_t hidden) const {
  return {g.parameter(*d.input), g.parameter(*d.recurrent), g.parameter(*d.bias), hidden};
}

// All tokens of the sentence run through the character BiLSTM together, one
// row per token. Rows shorter than the current position carry their state
// unchanged, so each direction ends on the row's true final state.
template <typename T>
ad::Var<T> Encoder<T>::char_summary(ad::Graph<T>& g, const Sentence& s) const {
  const std::size_t rows = s.length();
  std::size_t steps = 1;
  for (const auto& word : s.chars) steps = std::max(steps, word.size());
  const std::size_t hidden = config_.char_lstm_hidden;

  std::vector<int> ids(steps * rows, Vocab::kPad);
  for (std::size_t p = 0; p < steps; ++p)
    for (std::size_t i = 0; i < rows; ++i)
      if (p < s.chars[i].size()) ids[p * rows + i] = s.chars[i][p];

  // Blend masks per position; empty when every row is still active.
  std::vector<std::pair<ad::Var<T>, ad::Var<T>>> keep(steps);
  std::vector<bool> ragged(steps, false);
  for (std::size_t p = 0; p < steps; ++p) {
    ad::Tensor<T> on(rows, hidden), off(rows, hidden);
    for (std::size_t i = 0; i < rows; ++i) {
      const bool active = p < s.chars[i].size();
      ragged[p] = ragged[p] || !active;
      for (std::size_t c = 0; c < hidden; ++c) {
        on(i, c) = active ? T{1} : T{0};
        off(i, c) = active ? T{0} : T{1};
      }
    }
    if (ragged[p]) keep[p] = {g.constant(std::move(on)), g.constant(std::move(off))};
  }

  auto blend = [&](std::size_t p, ad::Var<T> fresh, ad::Var<T> old) {
    if (!ragged[p]) return fresh;
    return ad::add(ad::mul(keep[p].first, fresh), ad::mul(keep[p].second, old));
  };

  auto layer_input = ad::gather_rows(g.parameter(*char_embedding_), std::span<const int>(ids));
  LstmState<T> fwd_final{}, bwd_final{};
  for (std::size_t k = 0; k < char_layers_.size(); ++k) {
    const auto fw = bind(g, char_layers_[k].forward, hidden);
    const auto bw = bind(g, char_layers_[k].backward, hidden);
    auto proj_f = ad::add_row(ad::matmul(layer_input, fw.input), fw.bias);
    auto proj_b = ad::add_row(ad::matmul(layer_input, bw.input), bw.bias);
    std::vector<ad::Var<T>> out_f(steps), out_b(steps);

    auto zero = [&] { return g.constant(ad::Tensor<T>(rows, hidden)); };
    LstmState<T> state{zero(), zero()};
    for (std::size_t p = 0; p < steps; ++p) {
      auto next = lstm_step(ad::slice_rows(proj_f, p * rows, rows), state, fw);
      state = {blend(p, next.h, state.h), blend(p, next.c, state.c)};
      out_f[p] = state.h;
    }
    fwd_final = state;

    state = {zero(), zero()};
    for (std::size_t k2 = 0; k2 < steps; ++k2) {
      const std::size_t p = steps - 1 - k2;
      auto next = lstm_step(ad::slice_rows(proj_b, p * rows, rows), state, bw);
      state = {blend(p, next.h, state.h), blend(p, next.c, state.c)};
      out_b[p] = state.h;
    }
    bwd_final = state;

    if (k + 1 < char_layers_.size()) {
      std::vector<ad::Var<T>> stacked(steps);
      for (std::size_t p = 0; p < steps; ++p) stacked[p] = ad::concat({out_f[p], out_b[p]}, 1);
      layer_input = ad::concat(std::span<const ad::Var<T>>(stacked), 0);
    }
  }
  return ad::concat({fwd_final.h, bwd_final.h}, 1);
}

template <typename T>
ad::Var<T> Encoder<T>::embed_tokens(ad::Graph<T>& g, const Sentence& s) const {
  if (s.length() == 0) throw ContractError("encoder: empty sentence");
  if (s.pos.size() != s.length() || s.chars.size() != s.length()) {
    throw ContractError("encoder: tokens, POS tags and characters differ in length");
  }
  auto check = [](std::span<const int> ids, std::size_t limit, const char* what) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= limit) {
        throw ContractError(std::string("encoder: ") + what + " id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(limit));
      }
    }
  };
  check(s.tokens, token_vocab_, "token");
  check(s.pos, pos_vocab_, "pos");
  for (const auto& w : s.chars) check(w, char_vocab_, "char");

  std::vector<ad::Var<T>> channels;
  channels.push_back(ad::gather_rows(g.parameter(*token_embedding_), std::span<const int>(s.tokens)));
  if (pretrained_ != nullptr) channels.push_back(ad::gather_rows(g.reference(*pretrained_), std::span<const int>(s.tokens)));
  channels.push_back(ad::gather_rows(g.parameter(*pos_embedding_), std::span<const int>(s.pos)));
  channels.push_back(char_summary(g, s));
  return ad::concat(std::span<const ad::Var<T>>(channels), 1);
}

template <typename T>
ad::Var<T> Encoder<T>::encode(ad::Graph<T>& g, const Sentence& s, bool training, std::mt19937_64& rng) const {
  const T rate = static_cast<T>(config_.dropout);
  auto x = embed_tokens(g, s);
  if (config_.input_dropout) x = ad::dropout(x, rate, training, rng);
  for (std::size_t k = 0; k < token_layers_.size(); ++k) {
    const auto fw = bind(g, token_layers_[k].forward, config_.token_lstm_hidden);
    const auto bw = bind(g, token_layers_[k].backward, config_.token_lstm_hidden);
    x = ad::concat({run_lstm(x, fw, false), run_lstm(x, bw, true)}, 1);
    if (k + 1 < token_layers_.size()) x = ad::dropout(x, rate, training, rng);
  }
  return x;
}

template LstmState<float> lstm_step(ad::Var<float>, const LstmState<float>&, const LstmVars<float>&);
template LstmState<double> lstm_step(ad::Var<double>, const LstmState<double>&, const LstmVars<double>&);
template LstmState<float> lstm_cell(ad::Var<float>, const LstmState<float>&, const LstmVars<float>&);
template LstmState<double> lstm_cell(ad::Var<double>, const LstmState<double>&, const LstmVars<double>&);
template ad::Var<float> run_lstm(ad::Var<float>, const LstmVars<float>&, bool);
template ad::Var<double> run_lstm(ad::Var<double>, const LstmVars<double>&, bool);
template class Encoder<float>;
template class Encoder<double>;

}  // namespace seq2set
