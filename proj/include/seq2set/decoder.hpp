#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "seq2set/autodiff.hpp"
#include "seq2set/data.hpp"
#include "seq2set/params.hpp"

namespace seq2set {

struct DecoderConfig {
  std::size_t queries = 60;
  std::size_t layers = 3;
  std::size_t heads = 8;
  std::size_t ffn_hidden = 0;   // 0 selects 4·d
  std::size_t head_hidden = 0;  // 0 selects d
  double dropout = 0.1;
  bool interaction = true;  // self-attention among queries

  void validate(std::size_t model_dim) const;
};

// softmax(Q·Kᵀ / sqrt(d_k))·V with key rows excluded where key_mask is 0.
template <typename T>
ad::Var<T> attention(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v, std::span<const std::uint8_t> key_mask);

template <typename T>
struct AttentionVars {
  ad::Var<T> query;   // [d × d]; column block i is W_i^Q
  ad::Var<T> key;     // [d × d]
  ad::Var<T> value;   // [d × d]
  ad::Var<T> output;  // [d × d], W^O
  std::size_t heads = 1;
};

template <typename T>
ad::Var<T> multi_head(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v, const AttentionVars<T>& w,
                      std::span<const std::uint8_t> key_mask);

// Graph-resident outputs of one decoder pass.
template <typename T>
struct PredictionSet {
  ad::Var<T> class_probs;  // [N × (C+1)], last column is the null label
  ad::Var<T> left;         // [N × l]
  ad::Var<T> right;        // [N × l]
  ad::Var<T> output;       // U, [N × d]
};

// Plain values of a PredictionSet.
template <typename T>
struct PredictionValues {
  ad::Tensor<T> class_probs;
  ad::Tensor<T> left;
  ad::Tensor<T> right;

  std::size_t queries() const noexcept { return class_probs.rows(); }
  std::size_t length() const noexcept { return left.cols(); }
  int null_category() const noexcept { return static_cast<int>(class_probs.cols()) - 1; }
};

template <typename T>
PredictionValues<T> values_of(const PredictionSet<T>& p);

struct PredictedEntity {
  int left = 0;
  int right = 0;
  int category = 0;
  double score = 0.0;

  Entity entity() const { return {left, right, category}; }
};

// Per query: argmax category (dropped if null), argmax boundaries (dropped if
// left > right); duplicate triples keep the highest score. With a threshold,
// a query is dropped when p(null) >= threshold and otherwise takes its best
// non-null category.
template <typename T>
std::vector<PredictedEntity> extract_entities(const PredictionValues<T>& pred, std::size_t length,
                                              std::optional<double> null_threshold = std::nullopt);

template <typename T>
class Decoder {
 public:
  Decoder(const DecoderConfig& config, std::size_t model_dim, std::size_t label_count, ParameterStore<T>& store,
          std::mt19937_64& rng);

  PredictionSet<T> decode(ad::Graph<T>& g, ad::Var<T> encoding, std::span<const std::uint8_t> position_mask,
                          bool training, std::mt19937_64& rng) const;

  // Class/left/right heads applied to output embeddings U and encoding H.
  PredictionSet<T> heads(ad::Graph<T>& g, ad::Var<T> output, ad::Var<T> encoding,
                         std::span<const std::uint8_t> position_mask) const;

  const DecoderConfig& config() const noexcept { return config_; }
  ad::Tensor<T>& queries() noexcept { return *queries_; }
  std::size_t model_dim() const noexcept { return dim_; }

 private:
  struct Attention {
    ad::Tensor<T>* query;
    ad::Tensor<T>* key;
    ad::Tensor<T>* value;
    ad::Tensor<T>* output;
  };
  struct Norm {
    ad::Tensor<T>* gain;
    ad::Tensor<T>* bias;
  };
  struct Linear {
    ad::Tensor<T>* weight;
    ad::Tensor<T>* bias;
  };
  struct Layer {
    Attention self_attention;
    Norm self_norm;
    Attention cross_attention;
    Norm cross_norm;
    std::vector<Linear> ffn;
    Norm ffn_norm;
  };
  struct BoundaryHead {
    ad::Tensor<T>* hidden;  // [2d × k] over dup(u, l) ⊕ H; top block acts on u
    ad::Tensor<T>* bias;    // [1 × k]
    ad::Tensor<T>* out;     // [k × 1]
  };

  Attention add_attention(const std::string& prefix, ParameterStore<T>& store, std::mt19937_64& rng);
  Norm add_norm(const std::string& prefix, ParameterStore<T>& store, std::mt19937_64& rng);
  Linear add_linear(const std::string& prefix, std::size_t in, std::size_t out, ParameterStore<T>& store,
                    std::mt19937_64& rng);
  AttentionVars<T> bind(ad::Graph<T>& g, const Attention& a) const;
  ad::Var<T> norm(ad::Graph<T>& g, ad::Var<T> x, const Norm& n) const;
  ad::Var<T> linear(ad::Graph<T>& g, ad::Var<T> x, const Linear& l) const;
  ad::Var<T> boundary(ad::Graph<T>& g, ad::Var<T> output, ad::Var<T> encoding, const BoundaryHead& head,
                      std::span<const std::uint8_t> position_mask) const;

  DecoderConfig config_;
  std::size_t dim_;
  std::size_t labels_;
  ad::Tensor<T>* queries_;
  std::vector<Layer> layers_;
  Linear class_hidden_;
  Linear class_out_;
  BoundaryHead left_;
  BoundaryHead right_;
};

}  // namespace seq2set
