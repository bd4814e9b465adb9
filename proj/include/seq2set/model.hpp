#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "seq2set/autodiff.hpp"
#include "seq2set/data.hpp"
#include "seq2set/decoder.hpp"
#include "seq2set/encoder.hpp"
#include "seq2set/params.hpp"

namespace seq2set {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
};

struct VocabSizes {
  std::size_t tokens = 0;
  std::size_t chars = 0;
  std::size_t pos = 0;
  std::size_t labels = 0;  // categories plus the null label

  static VocabSizes of(const Vocab& v) {
    return {v.token_count(), v.char_count(), v.pos_count(), v.category_count() + 1};
  }
};

// Encoder followed by the entity set decoder. Parameters are created (and
// drawn from rng) in a fixed order: encoder embeddings, char LSTM, token
// LSTM, then queries, decoder layers and heads.
template <typename T>
class Seq2SetModel {
 public:
  Seq2SetModel(const ModelConfig& config, const VocabSizes& sizes, std::mt19937_64& rng);
  Seq2SetModel(const Seq2SetModel&) = delete;
  Seq2SetModel& operator=(const Seq2SetModel&) = delete;

  PredictionSet<T> forward(ad::Graph<T>& g, const Sentence& s, bool training, std::mt19937_64& rng) const;
  // Sentence b of a padded batch; only unmasked positions are read.
  PredictionSet<T> forward(ad::Graph<T>& g, const Batch& batch, std::size_t b, bool training,
                           std::mt19937_64& rng) const;

  // Eval-mode forward pass without gradient tracking.
  PredictionValues<T> infer(const Sentence& s) const;

  ParameterStore<T>& parameters() noexcept { return store_; }
  const ParameterStore<T>& parameters() const noexcept { return store_; }
  const ModelConfig& config() const noexcept { return config_; }
  const VocabSizes& sizes() const noexcept { return sizes_; }
  Encoder<T>& encoder() noexcept { return encoder_; }
  Decoder<T>& decoder() noexcept { return decoder_; }

 private:
  ModelConfig config_;
  VocabSizes sizes_;
  ParameterStore<T> store_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

}  // namespace seq2set
