#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "seq2set/autodiff.hpp"
#include "seq2set/data.hpp"
#include "seq2set/params.hpp"

namespace seq2set {

struct EncoderConfig {
  std::size_t token_emb_dim = 50;
  std::size_t pos_emb_dim = 16;
  std::size_t char_emb_dim = 16;
  std::size_t char_lstm_hidden = 50;
  std::size_t token_lstm_hidden = 32;  // per direction; model width d is twice this
  std::size_t token_lstm_layers = 3;
  std::size_t char_lstm_layers = 1;
  std::size_t pretrained_channel_dim = 0;  // 0 disables the fixed channel
  double dropout = 0.1;
  bool input_dropout = true;  // dropout on the concatenated token representation

  std::size_t model_dim() const noexcept { return 2 * token_lstm_hidden; }
  std::size_t input_dim() const noexcept {
    return token_emb_dim + pretrained_channel_dim + pos_emb_dim + 2 * char_lstm_hidden;
  }
  void validate() const;
};

// One LSTM direction bound into a graph. Gate column order is input, forget, cell, output.
template <typename T>
struct LstmVars {
  ad::Var<T> input;      // [in × 4h]
  ad::Var<T> recurrent;  // [h × 4h]
  ad::Var<T> bias;       // [1 × 4h]
  std::size_t hidden = 0;
};

template <typename T>
struct LstmState {
  ad::Var<T> h;
  ad::Var<T> c;
};

// Standard LSTM update for every row of x.
template <typename T>
LstmState<T> lstm_cell(ad::Var<T> x, const LstmState<T>& prev, const LstmVars<T>& w);

// Same update with the input projection x·W + b already applied.
template <typename T>
LstmState<T> lstm_step(ad::Var<T> projected, const LstmState<T>& prev, const LstmVars<T>& w);

// Runs one direction over the rows of x (row = time step); outputs stay in
// positional order.
template <typename T>
ad::Var<T> run_lstm(ad::Var<T> x, const LstmVars<T>& w, bool reverse);

template <typename T>
class Encoder {
 public:
  Encoder(const EncoderConfig& config, std::size_t token_vocab, std::size_t char_vocab, std::size_t pos_vocab,
          ParameterStore<T>& store, std::mt19937_64& rng);

  // Per-token representation: token ⊕ fixed channel ⊕ POS ⊕ char-BiLSTM summary.
  ad::Var<T> embed_tokens(ad::Graph<T>& g, const Sentence& s) const;
  // H with shape [l × d].
  ad::Var<T> encode(ad::Graph<T>& g, const Sentence& s, bool training, std::mt19937_64& rng) const;

  const EncoderConfig& config() const noexcept { return config_; }

 private:
  struct Direction {
    ad::Tensor<T>* input;
    ad::Tensor<T>* recurrent;
    ad::Tensor<T>* bias;
  };
  struct Layer {
    Direction forward;
    Direction backward;
  };

  Layer add_layer(const std::string& prefix, std::size_t in, std::size_t hidden, ParameterStore<T>& store,
                  std::mt19937_64& rng);
  LstmVars<T> bind(ad::Graph<T>& g, const Direction& d, std::size_t hidden) const;
  ad::Var<T> char_summary(ad::Graph<T>& g, const Sentence& s) const;

  EncoderConfig config_;
  std::size_t token_vocab_;
  std::size_t char_vocab_;
  std::size_t pos_vocab_;
  ad::Tensor<T>* token_embedding_;
  ad::Tensor<T>* pretrained_ = nullptr;
  ad::Tensor<T>* pos_embedding_;
  ad::Tensor<T>* char_embedding_;
  std::vector<Layer> char_layers_;
  std::vector<Layer> token_layers_;
};

}  // namespace seq2set
