#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seq2set/autodiff.hpp"

namespace seq2set {

enum class Init {
  kZeros,
  kOnes,
  kUniformFanIn,  // U(-1/sqrt(rows), +1/sqrt(rows)), rows being the fan-in
  kNormal002,     // N(0, 0.02)
};

template <typename T>
struct Parameter {
  std::string name;
  ad::Tensor<T> value;
  bool decay = true;
  bool trainable = true;
};

// Named parameters in creation order. Addresses stay stable for the store's lifetime.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  // Draws initial values from rng in element order.
  ad::Tensor<T>& add(std::string name, std::size_t rows, std::size_t cols, Init init, std::mt19937_64& rng,
                     bool decay = true);
  // Fixed (non-trainable) table; never receives gradients.
  ad::Tensor<T>& add_fixed(std::string name, std::size_t rows, std::size_t cols, Init init, std::mt19937_64& rng);

  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const;
  void zero_grad();

  // Flat copy of all values, used for best-checkpoint snapshots.
  std::vector<std::vector<T>> snapshot() const;
  void restore(const std::vector<std::vector<T>>& values);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

}  // namespace seq2set
