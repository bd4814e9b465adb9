#include "seq2set/params.hpp"

#include <algorithm>
#include <cmath>

#include "seq2set/errors.hpp"

namespace seq2set {

namespace {

template <typename T>
void initialize(ad::Tensor<T>& t, Init init, std::mt19937_64& rng) {
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(t.values().begin(), t.values().end(), T{1});
      break;
    case Init::kUniformFanIn: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(t.rows(), 1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& v : t.values()) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::kNormal002: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (T& v : t.values()) v = static_cast<T>(dist(rng));
      break;
    }
  }
}

}  // namespace

template <typename T>
ad::Tensor<T>& ParameterStore<T>::add(std::string name, std::size_t rows, std::size_t cols, Init init,
                                       std::mt19937_64& rng, bool decay) {
  if (contains(name)) throw ContractError("parameter '" + name + "' registered twice");
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->value = ad::Tensor<T>(rows, cols);
  p->decay = decay;
  initialize(p->value, init, rng);
  p->value.set_requires_grad(true);
  params_.push_back(std::move(p));
  return params_.back()->value;
}

template <typename T>
ad::Tensor<T>& ParameterStore<T>::add_fixed(std::string name, std::size_t rows, std::size_t cols, Init init,
                                             std::mt19937_64& rng) {
  ad::Tensor<T>& t = add(std::move(name), rows, cols, init, rng, false);
  t.set_requires_grad(false);
  params_.back()->trainable = false;
  return t;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->value.zero_grad();
}

template <typename T>
std::vector<std::vector<T>> ParameterStore<T>::snapshot() const {
  std::vector<std::vector<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p->value.values().begin(), p->value.values().end());
  return out;
}

template <typename T>
void ParameterStore<T>::restore(const std::vector<std::vector<T>>& values) {
  if (values.size() != params_.size()) throw ContractError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i]->value.values();
    if (values[i].size() != dst.size()) throw ContractError("restore: size mismatch for " + params_[i]->name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace seq2set
