#include "seq2set/model.hpp"

#include <vector>

namespace seq2set {

template <typename T>
Seq2SetModel<T>::Seq2SetModel(const ModelConfig& config, const VocabSizes& sizes, std::mt19937_64& rng)
    : config_(config),
      sizes_(sizes),
      encoder_(config.encoder, sizes.tokens, sizes.chars, sizes.pos, store_, rng),
      decoder_(config.decoder, config.encoder.model_dim(), sizes.labels, store_, rng) {}

template <typename T>
PredictionSet<T> Seq2SetModel<T>::forward(ad::Graph<T>& g, const Sentence& s, bool training,
                                          std::mt19937_64& rng) const {
  auto h = encoder_.encode(g, s, training, rng);
  const std::vector<std::uint8_t> mask(s.length(), 1);
  return decoder_.decode(g, h, mask, training, rng);
}

template <typename T>
PredictionSet<T> Seq2SetModel<T>::forward(ad::Graph<T>& g, const Batch& batch, std::size_t b, bool training,
                                          std::mt19937_64& rng) const {
  return forward(g, batch.sentence(b), training, rng);
}

template <typename T>
PredictionValues<T> Seq2SetModel<T>::infer(const Sentence& s) const {
  ad::Graph<T> g(false);
  std::mt19937_64 unused(0);
  return values_of(forward(g, s, false, unused));
}

template class Seq2SetModel<float>;
template class Seq2SetModel<double>;

}  // namespace seq2set
