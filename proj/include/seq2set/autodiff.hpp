#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
//
// A Graph is built fresh for every forward pass. Parameters live outside the
// graph as Tensors with requires_grad set; their leaf nodes accumulate
// directly into Tensor::grad() during backward(). Vectors are 1×n matrices.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace seq2set::ad {

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T{0});
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::string shape_string() const;

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on);
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad();

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
  std::vector<T> grad_;
  bool requires_grad_ = false;
};

template <typename T>
class Graph;

template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const { return graph->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::uint32_t)>;

  // With track_gradients == false no backward closures are recorded (inference).
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf bound to an external tensor; the tensor must outlive the graph.
  Var<T> parameter(Tensor<T>& source);
  // Leaf bound to an external tensor that never receives gradients.
  Var<T> reference(const Tensor<T>& source);
  Var<T> constant(Tensor<T> value);

  // Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients accumulate
  // across calls; intermediate gradients are reset on every call.
  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool tracking() const noexcept { return track_; }

  // Op-author interface.
  Var<T> record(Tensor<T> out, std::initializer_list<std::uint32_t> inputs, Backward fn);
  Var<T> record(Tensor<T> out, std::vector<std::uint32_t> inputs, Backward fn);
  const Tensor<T>& value(std::uint32_t id) const;
  std::span<T> grad(std::uint32_t id);
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  std::span<const std::uint32_t> inputs(std::uint32_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T>* param = nullptr;
    std::vector<T> grad;
    std::vector<std::uint32_t> inputs;
    Backward backward;
    bool needs_grad = false;
    bool touched = false;
  };

  std::vector<Node> nodes_;
  bool track_;
};

// Matrix products.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);  // a · bᵀ
template <typename T> Var<T> transpose(Var<T> a);

// Elementwise.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> add_row(Var<T> a, Var<T> row);  // row broadcast over a's rows
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T c);
template <typename T> Var<T> neg(Var<T> a);
template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
// log(a + eps); throws DomainError when any a + eps <= 0.
template <typename T> Var<T> log(Var<T> a, T eps = T{0});
// Identity when !training or p == 0; otherwise inverted dropout.
template <typename T> Var<T> dropout(Var<T> a, T p, bool training, std::mt19937_64& rng);

// Normalization.
template <typename T> Var<T> softmax(Var<T> a, int axis);
// Row softmax restricted to columns with mask[c] != 0; masked entries are exactly 0.
template <typename T> Var<T> masked_softmax(Var<T> a, std::span<const std::uint8_t> col_mask);
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

// Structural.
template <typename T> Var<T> concat(std::span<const Var<T>> parts, int axis);
template <typename T> Var<T> concat(std::initializer_list<Var<T>> parts, int axis);
template <typename T> Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count);
template <typename T> Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count);
template <typename T> Var<T> reshape(Var<T> a, std::size_t rows, std::size_t cols);
template <typename T> Var<T> repeat_rows(Var<T> row, std::size_t times);
template <typename T> Var<T> gather_rows(Var<T> table, std::span<const int> ids);
// Row r of the result is a[r / b.rows()] + b[r % b.rows()].
template <typename T> Var<T> pair_add(Var<T> a, Var<T> b);
// 1×k vector of selected entries.
template <typename T> Var<T> pick(Var<T> a, std::span<const std::pair<std::size_t, std::size_t>> at);

// Reductions.
template <typename T> Var<T> sum(Var<T> a);

}  // namespace seq2set::ad
