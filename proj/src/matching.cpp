#include "seq2set/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "seq2set/errors.hpp"

namespace seq2set {

PaddedGold pad_gold(std::span<const Entity> gold, std::size_t queries, int null_category, GoldOrder order) {
  if (gold.size() > queries) {
    throw ContractError("pad_gold: " + std::to_string(gold.size()) + " gold entities exceed " +
                        std::to_string(queries) + " queries");
  }
  std::vector<Entity> ordered(gold.begin(), gold.end());
  if (order == GoldOrder::kCanonical) std::sort(ordered.begin(), ordered.end());
  PaddedGold out;
  out.gold_count = ordered.size();
  out.null_category = null_category;
  out.targets.reserve(queries);
  for (const Entity& e : ordered) {
    if (e.category == null_category) throw ContractError("pad_gold: gold entity carries the null label");
    out.targets.emplace_back(e);
  }
  out.targets.resize(queries);
  return out;
}

CostMatrix::CostMatrix(std::size_t n, std::vector<double> values) : n_(n), data_(std::move(values)) {
  if (data_.size() != n * n) throw DimensionError("cost matrix: expected " + std::to_string(n * n) + " entries");
}

template <typename T>
double match_cost(const std::optional<Entity>& target, const PredictionValues<T>& pred, std::size_t query,
                  CostMode mode) {
  if (!target) return 0.0;
  const std::size_t l = pred.length();
  if (target->left < 0 || target->right < 0 || static_cast<std::size_t>(target->right) >= l ||
      static_cast<std::size_t>(target->left) >= l) {
    throw ContractError("match_cost: boundary outside sentence of length " + std::to_string(l));
  }
  if (target->category < 0 || target->category >= pred.null_category()) {
    throw ContractError("match_cost: invalid target category " + std::to_string(target->category));
  }
  const double pc = pred.class_probs(query, static_cast<std::size_t>(target->category));
  const double pl = pred.left(query, static_cast<std::size_t>(target->left));
  const double pr = pred.right(query, static_cast<std::size_t>(target->right));
  if (mode == CostMode::kLogProbability) {
    return -(std::log(pc + kLogEpsilon) + std::log(pl + kLogEpsilon) + std::log(pr + kLogEpsilon));
  }
  return -(pc + pl + pr);
}

template <typename T>
CostMatrix cost_matrix(const PaddedGold& gold, const PredictionValues<T>& pred, CostMode mode) {
  const std::size_t n = gold.targets.size();
  if (pred.queries() != n) {
    throw DimensionError("cost_matrix: " + std::to_string(n) + " targets vs " + std::to_string(pred.queries()) +
                         " predictions");
  }
  CostMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!gold.targets[i]) continue;
    for (std::size_t j = 0; j < n; ++j) m(i, j) = match_cost(gold.targets[i], pred, j, mode);
  }
  return m;
}

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  Assignment out;
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!std::isfinite(cost(i, j))) throw ContractError("hungarian: non-finite cost entry");

  // 1-based potentials; column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::vector<double> min_v(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (reduced < min_v[j]) {
          min_v[j] = reduced;
          way[j] = j0;
        }
        if (min_v[j] < delta) {
          delta = min_v[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_v[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  out.prediction_for_target.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.prediction_for_target[row_of[j] - 1] = j - 1;

  std::vector<std::size_t> zero_rows, zero_cols;
  for (std::size_t i = 0; i < n; ++i) {
    bool all_zero = true;
    for (std::size_t j = 0; j < n && all_zero; ++j) all_zero = cost(i, j) == 0.0;
    if (all_zero) {
      zero_rows.push_back(i);
      zero_cols.push_back(out.prediction_for_target[i]);
    }
  }
  std::sort(zero_cols.begin(), zero_cols.end());
  for (std::size_t k = 0; k < zero_rows.size(); ++k) out.prediction_for_target[zero_rows[k]] = zero_cols[k];

  for (std::size_t i = 0; i < n; ++i) out.cost += cost(i, out.prediction_for_target[i]);
  return out;
}

template <typename T>
ad::Var<T> set_loss(const PaddedGold& gold, const PredictionSet<T>& pred, const Assignment& assignment) {
  const std::size_t n = gold.targets.size();
  if (assignment.prediction_for_target.size() != n || pred.class_probs.rows() != n) {
    throw ContractError("set_loss: assignment, targets and predictions disagree in size");
  }
  const std::size_t l = pred.left.cols();
  std::vector<std::pair<std::size_t, std::size_t>> class_at, left_at, right_at;
  class_at.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = assignment.prediction_for_target[i];
    const auto& target = gold.targets[i];
    if (!target) {
      class_at.emplace_back(j, static_cast<std::size_t>(gold.null_category));
      continue;
    }
    if (target->right < 0 || static_cast<std::size_t>(target->right) >= l || target->left < 0) {
      throw ContractError("set_loss: boundary outside sentence of length " + std::to_string(l));
    }
    class_at.emplace_back(j, static_cast<std::size_t>(target->category));
    left_at.emplace_back(j, static_cast<std::size_t>(target->left));
    right_at.emplace_back(j, static_cast<std::size_t>(target->right));
  }
  const T eps = static_cast<T>(kLogEpsilon);
  auto term = [&](ad::Var<T> probs, const std::vector<std::pair<std::size_t, std::size_t>>& at) {
    return ad::sum(ad::log(ad::pick(probs, std::span<const std::pair<std::size_t, std::size_t>>(at)), eps));
  };
  auto total = term(pred.class_probs, class_at);
  if (!left_at.empty()) {
    total = ad::add(total, term(pred.left, left_at));
    total = ad::add(total, term(pred.right, right_at));
  }
  return ad::neg(total);
}

template <typename T>
ad::Var<T> ce_loss_baseline(const PaddedGold& gold, const PredictionSet<T>& pred) {
  Assignment identity;
  identity.prediction_for_target.resize(gold.targets.size());
  std::iota(identity.prediction_for_target.begin(), identity.prediction_for_target.end(), std::size_t{0});
  return set_loss(gold, pred, identity);
}

template double match_cost(const std::optional<Entity>&, const PredictionValues<float>&, std::size_t, CostMode);
template double match_cost(const std::optional<Entity>&, const PredictionValues<double>&, std::size_t, CostMode);
template CostMatrix cost_matrix(const PaddedGold&, const PredictionValues<float>&, CostMode);
template CostMatrix cost_matrix(const PaddedGold&, const PredictionValues<double>&, CostMode);
template ad::Var<float> set_loss(const PaddedGold&, const PredictionSet<float>&, const Assignment&);
template ad::Var<double> set_loss(const PaddedGold&, const PredictionSet<double>&, const Assignment&);
template ad::Var<float> ce_loss_baseline(const PaddedGold&, const PredictionSet<float>&);
template ad::Var<double> ce_loss_baseline(const PaddedGold&, const PredictionSet<double>&);

}  // namespace seq2set
