#include "seq2set/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "seq2set/errors.hpp"

namespace seq2set {

void DecoderConfig::validate(std::size_t model_dim) const {
  if (queries == 0) throw ValidationError("decoder: query count must be >= 1");
  if (layers == 0) throw ValidationError("decoder: layer count must be >= 1");
  if (heads == 0 || model_dim % heads != 0) {
    throw ValidationError("decoder: model width " + std::to_string(model_dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("decoder: dropout must lie in [0, 1)");
}

template <typename T>
ad::Var<T> attention(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v, std::span<const std::uint8_t> key_mask) {
  if (q.cols() != k.cols()) throw DimensionError("attention: query/key width " + q.value().shape_string() + " vs " + k.value().shape_string());
  if (k.rows() != v.rows()) throw DimensionError("attention: key/value rows " + k.value().shape_string() + " vs " + v.value().shape_string());
  const T inv_scale = T{1} / std::sqrt(static_cast<T>(q.cols()));
  auto scores = ad::scale(ad::matmul_nt(q, k), inv_scale);
  return ad::matmul(ad::masked_softmax(scores, key_mask), v);
}

template <typename T>
ad::Var<T> multi_head(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v, const AttentionVars<T>& w,
                      std::span<const std::uint8_t> key_mask) {
  const std::size_t d = w.query.cols();
  if (d % w.heads != 0) throw DimensionError("multi_head: width not divisible by head count");
  const std::size_t dk = d / w.heads;
  auto qp = ad::matmul(q, w.query);
  auto kp = ad::matmul(k, w.key);
  auto vp = ad::matmul(v, w.value);
  std::vector<ad::Var<T>> heads;
  heads.reserve(w.heads);
  for (std::size_t i = 0; i < w.heads; ++i) {
    heads.push_back(attention(ad::slice_cols(qp, i * dk, dk), ad::slice_cols(kp, i * dk, dk),
                              ad::slice_cols(vp, i * dk, dk), key_mask));
  }
  return ad::matmul(ad::concat(std::span<const ad::Var<T>>(heads), 1), w.output);
}

template <typename T>
PredictionValues<T> values_of(const PredictionSet<T>& p) {
  return {p.class_probs.value(), p.left.value(), p.right.value()};
}

template <typename T>
std::vector<PredictedEntity> extract_entities(const PredictionValues<T>& pred, std::size_t length,
                                              std::optional<double> null_threshold) {
  if (pred.length() != length) {
    throw ContractError("extract_entities: prediction covers " + std::to_string(pred.length()) +
                        " positions, sentence has " + std::to_string(length));
  }
  const std::size_t labels = pred.class_probs.cols();
  const int null_id = pred.null_category();
  auto argmax = [](const T* row, std::size_t n) {
    return static_cast<int>(std::max_element(row, row + n) - row);
  };
  std::map<Entity, double> best;
  for (std::size_t q = 0; q < pred.queries(); ++q) {
    const T* pc = pred.class_probs.data() + q * labels;
    int category;
    if (null_threshold) {
      if (static_cast<double>(pc[null_id]) >= *null_threshold) continue;
      category = argmax(pc, labels - 1);
    } else {
      category = argmax(pc, labels);
      if (category == null_id) continue;
    }
    const int left = argmax(pred.left.data() + q * length, length);
    const int right = argmax(pred.right.data() + q * length, length);
    if (left > right) continue;
    const double score = static_cast<double>(pc[category]) * static_cast<double>(pred.left(q, static_cast<std::size_t>(left))) *
                         static_cast<double>(pred.right(q, static_cast<std::size_t>(right)));
    const Entity e{left, right, category};
    auto [it, inserted] = best.emplace(e, score);
    if (!inserted && score > it->second) it->second = score;
  }
  std::vector<PredictedEntity> out;
  out.reserve(best.size());
  for (const auto& [e, score] : best) out.push_back({e.left, e.right, e.category, score});
  return out;
}

template <typename T>
Decoder<T>::Decoder(const DecoderConfig& config, std::size_t model_dim, std::size_t label_count,
                    ParameterStore<T>& store, std::mt19937_64& rng)
    : config_(config), dim_(model_dim), labels_(label_count) {
  config_.validate(model_dim);
  if (label_count < 1) throw ValidationError("decoder: at least the null label is required");
  const std::size_t ffn = config_.ffn_hidden == 0 ? 4 * dim_ : config_.ffn_hidden;
  const std::size_t head = config_.head_hidden == 0 ? dim_ : config_.head_hidden;
  queries_ = &store.add("decoder.queries", config_.queries, dim_, Init::kNormal002, rng, false);
  for (std::size_t k = 0; k < config_.layers; ++k) {
    const std::string p = "decoder.layer" + std::to_string(k);
    Layer layer;
    layer.self_attention = add_attention(p + ".self_attention", store, rng);
    layer.self_norm = add_norm(p + ".self_norm", store, rng);
    layer.cross_attention = add_attention(p + ".cross_attention", store, rng);
    layer.cross_norm = add_norm(p + ".cross_norm", store, rng);
    layer.ffn.push_back(add_linear(p + ".ffn0", dim_, ffn, store, rng));
    layer.ffn.push_back(add_linear(p + ".ffn1", ffn, ffn, store, rng));
    layer.ffn.push_back(add_linear(p + ".ffn2", ffn, dim_, store, rng));
    layer.ffn_norm = add_norm(p + ".ffn_norm", store, rng);
    layers_.push_back(layer);
  }
  class_hidden_ = add_linear("decoder.class_head.hidden", dim_, head, store, rng);
  class_out_ = add_linear("decoder.class_head.out", head, labels_, store, rng);
  auto boundary_head = [&](const std::string& p) {
    BoundaryHead b;
    b.hidden = &store.add(p + ".hidden", 2 * dim_, head, Init::kUniformFanIn, rng);
    b.bias = &store.add(p + ".hidden_bias", 1, head, Init::kZeros, rng);
    b.out = &store.add(p + ".out", head, 1, Init::kUniformFanIn, rng);
    return b;
  };
  left_ = boundary_head("decoder.left_head");
  right_ = boundary_head("decoder.right_head");
}

template <typename T>
typename Decoder<T>::Attention Decoder<T>::add_attention(const std::string& prefix, ParameterStore<T>& store,
                                                         std::mt19937_64& rng) {
  return {&store.add(prefix + ".query", dim_, dim_, Init::kUniformFanIn, rng),
          &store.add(prefix + ".key", dim_, dim_, Init::kUniformFanIn, rng),
          &store.add(prefix + ".value", dim_, dim_, Init::kUniformFanIn, rng),
          &store.add(prefix + ".output", dim_, dim_, Init::kUniformFanIn, rng)};
}

template <typename T>
typename Decoder<T>::Norm Decoder<T>::add_norm(const std::string& prefix, ParameterStore<T>& store,
                                               std::mt19937_64& rng) {
  return {&store.add(prefix + ".gain", 1, dim_, Init::kOnes, rng, false),
          &store.add(prefix + ".bias", 1, dim_, Init::kZeros, rng, false)};
}

template <typename T>
typename Decoder<T>::Linear Decoder<T>::add_linear(const std::string& prefix, std::size_t in, std::size_t out,
                                                   ParameterStore<T>& store, std::mt19937_64& rng) {
  return {&store.add(prefix + ".weight", in, out, Init::kUniformFanIn, rng),
          &store.add(prefix + ".bias", 1, out, Init::kZeros, rng)};
}

template <typename T>
AttentionVars<T> Decoder<T>::bind(ad::Graph<T>& g, const Attention& a) const {
  return {g.parameter(*a.query), g.parameter(*a.key), g.parameter(*a.value), g.parameter(*a.output), config_.heads};
}

template <typename T>
ad::Var<T> Decoder<T>::norm(ad::Graph<T>& g, ad::Var<T> x, const Norm& n) const {
  return ad::layer_norm(x, g.parameter(*n.gain), g.parameter(*n.bias));
}

template <typename T>
ad::Var<T> Decoder<T>::linear(ad::Graph<T>& g, ad::Var<T> x, const Linear& l) const {
  return ad::add_row(ad::matmul(x, g.parameter(*l.weight)), g.parameter(*l.bias));
}

template <typename T>
ad::Var<T> Decoder<T>::boundary(ad::Graph<T>& g, ad::Var<T> output, ad::Var<T> encoding, const BoundaryHead& head,
                                std::span<const std::uint8_t> position_mask) const {
  // [dup(u, l) ⊕ H]·W = dup(u·W_top, l) + H·W_bottom, evaluated for all queries at once.
  auto joint = g.parameter(*head.hidden);
  auto from_query = ad::slice_rows(joint, 0, dim_);
  auto from_encoding = ad::slice_rows(joint, dim_, dim_);
  const std::size_t n = output.rows();
  const std::size_t l = encoding.rows();
  auto per_query = ad::matmul(output, from_query);
  auto per_position = ad::add_row(ad::matmul(encoding, from_encoding), g.parameter(*head.bias));
  auto hidden = ad::relu(ad::pair_add(per_query, per_position));
  auto logits = ad::reshape(ad::matmul(hidden, g.parameter(*head.out)), n, l);
  return ad::masked_softmax(logits, position_mask);
}

template <typename T>
PredictionSet<T> Decoder<T>::heads(ad::Graph<T>& g, ad::Var<T> output, ad::Var<T> encoding,
                                   std::span<const std::uint8_t> position_mask) const {
  if (output.cols() != dim_ || encoding.cols() != dim_) {
    throw DimensionError("heads: expected width " + std::to_string(dim_) + ", got " + output.value().shape_string() +
                         " and " + encoding.value().shape_string());
  }
  PredictionSet<T> out;
  out.output = output;
  auto hidden = ad::relu(linear(g, output, class_hidden_));
  out.class_probs = ad::softmax(linear(g, hidden, class_out_), 1);
  out.left = boundary(g, output, encoding, left_, position_mask);
  out.right = boundary(g, output, encoding, right_, position_mask);
  return out;
}

template <typename T>
PredictionSet<T> Decoder<T>::decode(ad::Graph<T>& g, ad::Var<T> encoding, std::span<const std::uint8_t> position_mask,
                                    bool training, std::mt19937_64& rng) const {
  if (position_mask.size() != encoding.rows()) {
    throw DimensionError("decode: mask length " + std::to_string(position_mask.size()) + " vs encoding " +
                         encoding.value().shape_string());
  }
  const T rate = static_cast<T>(config_.dropout);
  const std::vector<std::uint8_t> all_queries(config_.queries, 1);
  auto x = g.parameter(*queries_);
  for (const Layer& layer : layers_) {
    if (config_.interaction) {
      auto a = multi_head(x, x, x, bind(g, layer.self_attention), std::span<const std::uint8_t>(all_queries));
      x = norm(g, ad::add(x, ad::dropout(a, rate, training, rng)), layer.self_norm);
    }
    auto c = multi_head(x, encoding, encoding, bind(g, layer.cross_attention), position_mask);
    x = norm(g, ad::add(x, ad::dropout(c, rate, training, rng)), layer.cross_norm);
    auto f = ad::relu(linear(g, x, layer.ffn[0]));
    f = ad::relu(linear(g, f, layer.ffn[1]));
    f = linear(g, f, layer.ffn[2]);
    x = norm(g, ad::add(x, ad::dropout(f, rate, training, rng)), layer.ffn_norm);
  }
  return heads(g, x, encoding, position_mask);
}

template ad::Var<float> attention(ad::Var<float>, ad::Var<float>, ad::Var<float>, std::span<const std::uint8_t>);
template ad::Var<double> attention(ad::Var<double>, ad::Var<double>, ad::Var<double>, std::span<const std::uint8_t>);
template ad::Var<float> multi_head(ad::Var<float>, ad::Var<float>, ad::Var<float>, const AttentionVars<float>&,
                                   std::span<const std::uint8_t>);
template ad::Var<double> multi_head(ad::Var<double>, ad::Var<double>, ad::Var<double>, const AttentionVars<double>&,
                                    std::span<const std::uint8_t>);
template PredictionValues<float> values_of(const PredictionSet<float>&);
template PredictionValues<double> values_of(const PredictionSet<double>&);
template std::vector<PredictedEntity> extract_entities(const PredictionValues<float>&, std::size_t,
                                                       std::optional<double>);
template std::vector<PredictedEntity> extract_entities(const PredictionValues<double>&, std::size_t,
                                                       std::optional<double>);
template class Decoder<float>;
template class Decoder<double>;

}  // namespace seq2set
