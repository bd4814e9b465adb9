#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "seq2set/autodiff.hpp"
#include "seq2set/data.hpp"
#include "seq2set/decoder.hpp"

namespace seq2set {

// Gold entities padded with null targets to the query count.
struct PaddedGold {
  std::vector<std::optional<Entity>> targets;
  std::size_t gold_count = 0;
  int null_category = 0;
};

// Canonical order sorts the gold set by (left, right, category) before
// padding, which makes everything downstream independent of input order.
// File order keeps the given sequence (the cross-entropy comparator).
enum class GoldOrder { kCanonical, kAsGiven };

PaddedGold pad_gold(std::span<const Entity> gold, std::size_t queries, int null_category,
                    GoldOrder order = GoldOrder::kCanonical);

class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}
  CostMatrix(std::size_t n, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<std::size_t> prediction_for_target;  // target i -> prediction index
  double cost = 0.0;  // sum over targets in index order
};

// kProbability is the pair cost −1{c≠∅}[p^c(c) + p^l(l) + p^r(r)].
// kLogProbability swaps in negative log-probabilities (experimental).
enum class CostMode { kProbability, kLogProbability };

template <typename T>
double match_cost(const std::optional<Entity>& target, const PredictionValues<T>& pred, std::size_t query,
                  CostMode mode = CostMode::kProbability);

template <typename T>
CostMatrix cost_matrix(const PaddedGold& gold, const PredictionValues<T>& pred,
                       CostMode mode = CostMode::kProbability);

// Minimum-cost perfect matching (shortest augmenting paths with potentials).
// Rows that are entirely zero are reassigned afterwards to their columns in
// ascending order, so null targets map deterministically.
Assignment hungarian(const CostMatrix& cost);

inline constexpr double kLogEpsilon = 1e-12;

// Σ_i −log p^c(c_i) + 1{c_i≠∅}[−log p^l(l_i) − log p^r(r_i)] under the given
// assignment, which is treated as a constant.
template <typename T>
ad::Var<T> set_loss(const PaddedGold& gold, const PredictionSet<T>& pred, const Assignment& assignment);

// set_loss with the identity assignment.
template <typename T>
ad::Var<T> ce_loss_baseline(const PaddedGold& gold, const PredictionSet<T>& pred);

}  // namespace seq2set
