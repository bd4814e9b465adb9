#include "seq2set/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "seq2set/errors.hpp"

namespace seq2set::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
MapC<T> view(const Tensor<T>& t) {
  return MapC<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
Map<T> view(std::span<T> g, std::size_t rows, std::size_t cols) {
  return Map<T>(g.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
std::string shapes(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  return std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string();
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError(shapes(op, a, b));
}

// Elementwise unary op whose derivative is expressed through input x and output y.
template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx) {
  Graph<T>& g = *a.graph;
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return g.record(std::move(y), {a.id}, [dfdx](Graph<T>& gr, std::uint32_t self) {
    const std::uint32_t in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor<T>& xv = gr.value(in);
    const Tensor<T>& yv = gr.value(self);
    auto gy = gr.grad(self);
    auto gx = gr.grad(in);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------- Tensor

template <typename T>
Tensor<T>::Tensor(std::size_t rows, std::size_t cols, T fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

template <typename T>
Tensor<T>::Tensor(std::size_t rows, std::size_t cols, std::vector<T> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor: " + std::to_string(data_.size()) + " values for shape [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

template <typename T>
Tensor<T> Tensor<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<T> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("tensor: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(v));
}

template <typename T>
std::string Tensor<T>::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_.assign(data_.size(), T{0});
  } else {
    grad_.clear();
  }
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T{0});
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------- Graph

template <typename T>
Var<T> Graph<T>::parameter(Tensor<T>& source) {
  Node n;
  n.external = &source;
  n.needs_grad = track_ && source.requires_grad();
  if (n.needs_grad) n.param = &source;
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::reference(const Tensor<T>& source) {
  Node n;
  n.external = &source;
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> out, std::initializer_list<std::uint32_t> inputs, Backward fn) {
  return record(std::move(out), std::vector<std::uint32_t>(inputs), std::move(fn));
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> out, std::vector<std::uint32_t> inputs, Backward fn) {
  Node n;
  n.owned = std::move(out);
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  bool any = false;
  for (std::uint32_t in : inputs) {
    if (in >= self) throw ContractError("graph: input id does not precede node");
    any = any || nodes_[in].needs_grad;
  }
  if (track_ && any) {
    n.needs_grad = true;
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, self};
}

template <typename T>
const Tensor<T>& Graph<T>::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.owned;
}

template <typename T>
std::span<T> Graph<T>::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  n.touched = true;
  if (n.param != nullptr) return n.param->grad();
  const std::size_t size = value(id).size();
  if (n.grad.size() != size) n.grad.assign(size, T{0});
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
  const Tensor<T>& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " + lv.shape_string());
  }
  for (Node& n : nodes_) {
    n.touched = false;
    if (n.param == nullptr) std::fill(n.grad.begin(), n.grad.end(), T{0});
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss.id)[0] += T{1};
  for (std::int64_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.needs_grad && n.touched && n.backward) n.backward(*this, static_cast<std::uint32_t>(id));
  }
}

// ---------------------------------------------------------------- products

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.rows()) throw DimensionError(shapes("matmul", av, bv));
  Tensor<T> out(av.rows(), bv.cols());
  if (!out.empty() && av.cols() > 0) {
    view(out.values(), out.rows(), out.cols()).noalias() = view(av) * view(bv);
  }
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph<T>& g, std::uint32_t self) {
    const auto in = g.inputs(self);
    const std::uint32_t ia = in[0], ib = in[1];
    const Tensor<T>& A = g.value(ia);
    const Tensor<T>& B = g.value(ib);
    const auto G = view(g.grad(self), A.rows(), B.cols());
    if (g.needs_grad(ia)) view(g.grad(ia), A.rows(), A.cols()).noalias() += G * view(B).transpose();
    if (g.needs_grad(ib)) view(g.grad(ib), B.rows(), B.cols()).noalias() += view(A).transpose() * G;
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.cols()) throw DimensionError(shapes("matmul_nt", av, bv));
  Tensor<T> out(av.rows(), bv.rows());
  if (!out.empty() && av.cols() > 0) {
    view(out.values(), out.rows(), out.cols()).noalias() = view(av) * view(bv).transpose();
  }
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph<T>& g, std::uint32_t self) {
    const auto in = g.inputs(self);
    const std::uint32_t ia = in[0], ib = in[1];
    const Tensor<T>& A = g.value(ia);
    const Tensor<T>& B = g.value(ib);
    const auto G = view(g.grad(self), A.rows(), B.rows());
    if (g.needs_grad(ia)) view(g.grad(ia), A.rows(), A.cols()).noalias() += G * view(B);
    if (g.needs_grad(ib)) view(g.grad(ib), B.rows(), B.cols()).noalias() += G.transpose() * view(A);
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  return a.graph->record(std::move(out), {a.id}, [](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    const Tensor<T>& x = g.value(in);
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) gx[r * x.cols() + c] += gy[c * x.rows() + r];
  });
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_same_shape("add", av, bv);
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph<T>& g, std::uint32_t self) {
    auto gy = g.grad(self);
    for (std::uint32_t in : g.inputs(self)) {
      if (!g.needs_grad(in)) continue;
      auto gx = g.grad(in);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    }
  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw DimensionError(shapes("add_row", av, rv));
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) + rv[c];
  return a.graph->record(std::move(out), {a.id, row.id}, [](Graph<T>& g, std::uint32_t self) {
    const auto in = g.inputs(self);
    const Tensor<T>& y = g.value(self);
    auto gy = g.grad(self);
    if (g.needs_grad(in[0])) {
      auto gx = g.grad(in[0]);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    }
    if (g.needs_grad(in[1])) {
      auto gr = g.grad(in[1]);
      for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) gr[c] += gy[r * y.cols() + c];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor<T> out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph<T>& g, std::uint32_t self) {
    const auto in = g.inputs(self);
    auto gy = g.grad(self);
    if (g.needs_grad(in[0])) {
      const Tensor<T>& bv2 = g.value(in[1]);
      auto gx = g.grad(in[0]);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * bv2[i];
    }
    if (g.needs_grad(in[1])) {
      const Tensor<T>& av2 = g.value(in[0]);
      auto gx = g.grad(in[1]);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * av2[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  return unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> neg(Var<T> a) {
  return unary(a, [](T x) { return -x; }, [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(a, [](T x) { return x > T{0} ? x : T{0}; },
               [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(
      a,
      [](T x) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> log(Var<T> a, T eps) {
  const Tensor<T>& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] + eps > T{0})) {
      throw DomainError("log: non-positive argument " + std::to_string(x[i] + eps) + " at index " +
                        std::to_string(i));
    }
  }
  return unary(a, [eps](T v) { return std::log(v + eps); }, [eps](T v, T) { return T{1} / (v + eps); });
}

template <typename T>
Var<T> dropout(Var<T> a, T p, bool training, std::mt19937_64& rng) {
  if (!training || p <= T{0}) return a;
  if (p >= T{1}) throw ContractError("dropout: rate must be < 1");
  const Tensor<T>& x = a.value();
  const T keep_scale = T{1} / (T{1} - p);
  std::bernoulli_distribution drop(static_cast<double>(p));
  Tensor<T> mask(x.rows(), x.cols());
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = drop(rng) ? T{0} : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return a.graph->record(std::move(out), {a.id},
                         [mask = std::move(mask)](Graph<T>& g, std::uint32_t self) {
                           const std::uint32_t in = g.inputs(self)[0];
                           auto gy = g.grad(self);
                           auto gx = g.grad(in);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * mask[i];
                         });
}

// ---------------------------------------------------------------- normalization

namespace {

// Softmax over `count` entries spaced by `stride`, skipping masked entries.
template <typename T>
void softmax_slice(const T* x, T* y, std::size_t count, std::size_t stride, const std::uint8_t* mask) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < count; ++k)
    if (mask == nullptr || mask[k]) mx = std::max(mx, x[k * stride]);
  T z = T{0};
  for (std::size_t k = 0; k < count; ++k) {
    if (mask == nullptr || mask[k]) {
      y[k * stride] = std::exp(x[k * stride] - mx);
      z += y[k * stride];
    } else {
      y[k * stride] = T{0};
    }
  }
  for (std::size_t k = 0; k < count; ++k) y[k * stride] /= z;
}

template <typename T>
void softmax_slice_backward(const T* y, const T* gy, T* gx, std::size_t count, std::size_t stride) {
  T dot = T{0};
  for (std::size_t k = 0; k < count; ++k) dot += gy[k * stride] * y[k * stride];
  for (std::size_t k = 0; k < count; ++k) gx[k * stride] += y[k * stride] * (gy[k * stride] - dot);
}

template <typename T>
Var<T> softmax_impl(Var<T> a, int axis, std::span<const std::uint8_t> mask) {
  const Tensor<T>& x = a.value();
  const std::size_t R = x.rows(), C = x.cols();
  Tensor<T> out(R, C);
  if (axis == 1) {
    for (std::size_t r = 0; r < R; ++r)
      softmax_slice(x.data() + r * C, out.data() + r * C, C, 1, mask.empty() ? nullptr : mask.data());
  } else {
    for (std::size_t c = 0; c < C; ++c) softmax_slice(x.data() + c, out.data() + c, R, C, nullptr);
  }
  return a.graph->record(std::move(out), {a.id}, [axis](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    const Tensor<T>& y = g.value(self);
    const std::size_t R2 = y.rows(), C2 = y.cols();
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    if (axis == 1) {
      for (std::size_t r = 0; r < R2; ++r)
        softmax_slice_backward(y.data() + r * C2, gy.data() + r * C2, gx.data() + r * C2, C2, 1);
    } else {
      for (std::size_t c = 0; c < C2; ++c)
        softmax_slice_backward(y.data() + c, gy.data() + c, gx.data() + c, R2, C2);
    }
  });
}

}  // namespace

template <typename T>
Var<T> softmax(Var<T> a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  return softmax_impl(a, axis, {});
}

template <typename T>
Var<T> masked_softmax(Var<T> a, std::span<const std::uint8_t> col_mask) {
  const Tensor<T>& x = a.value();
  if (col_mask.size() != x.cols()) {
    throw DimensionError("masked_softmax: mask length " + std::to_string(col_mask.size()) +
                         " vs " + x.shape_string());
  }
  if (std::none_of(col_mask.begin(), col_mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw ContractError("masked_softmax: every position is masked");
  }
  return softmax_impl(a, 1, col_mask);
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const Tensor<T>& xv = x.value();
  const std::size_t R = xv.rows(), C = xv.cols();
  if (gain.rows() != 1 || gain.cols() != C || bias.rows() != 1 || bias.cols() != C) {
    throw DimensionError(shapes("layer_norm", xv, gain.value()));
  }
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  Tensor<T> out(R, C);
  Tensor<T> xhat(R, C);
  std::vector<T> inv_std(R);
  for (std::size_t r = 0; r < R; ++r) {
    const T* row = xv.data() + r * C;
    T mean = T{0};
    for (std::size_t c = 0; c < C; ++c) mean += row[c];
    mean /= static_cast<T>(C);
    T var = T{0};
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(C);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      xhat(r, c) = (row[c] - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  return x.graph->record(
      std::move(out), {x.id, gain.id, bias.id},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g, std::uint32_t self) {
        const auto in = g.inputs(self);
        const std::size_t R2 = xhat.rows(), C2 = xhat.cols();
        auto gy = g.grad(self);
        if (g.needs_grad(in[1])) {
          auto gg = g.grad(in[1]);
          for (std::size_t r = 0; r < R2; ++r)
            for (std::size_t c = 0; c < C2; ++c) gg[c] += gy[r * C2 + c] * xhat(r, c);
        }
        if (g.needs_grad(in[2])) {
          auto gb = g.grad(in[2]);
          for (std::size_t r = 0; r < R2; ++r)
            for (std::size_t c = 0; c < C2; ++c) gb[c] += gy[r * C2 + c];
        }
        if (g.needs_grad(in[0])) {
          const Tensor<T>& gain_v = g.value(in[1]);
          auto gx = g.grad(in[0]);
          std::vector<T> dxhat(C2);
          for (std::size_t r = 0; r < R2; ++r) {
            T mean_d = T{0}, mean_dx = T{0};
            for (std::size_t c = 0; c < C2; ++c) {
              dxhat[c] = gy[r * C2 + c] * gain_v[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat(r, c);
            }
            mean_d /= static_cast<T>(C2);
            mean_dx /= static_cast<T>(C2);
            for (std::size_t c = 0; c < C2; ++c)
              gx[r * C2 + c] += inv_std[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
          }
        }
      });
}

// ---------------------------------------------------------------- structural

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  Graph<T>& graph = *parts[0].graph;
  // Empty tensors are identities regardless of their other extent.
  std::vector<std::uint32_t> ids;
  std::size_t fixed = 0, total = 0;
  bool have_fixed = false;
  for (const Var<T>& p : parts) {
    const Tensor<T>& v = p.value();
    if (v.empty()) continue;
    const std::size_t other = axis == 1 ? v.rows() : v.cols();
    if (have_fixed && other != fixed) {
      throw DimensionError(shapes("concat", parts[0].value(), v));
    }
    fixed = other;
    have_fixed = true;
    total += axis == 1 ? v.cols() : v.rows();
    ids.push_back(p.id);
  }
  if (ids.size() == 1) return {&graph, ids[0]};
  const std::size_t R = axis == 1 ? fixed : total;
  const std::size_t C = axis == 1 ? total : fixed;
  Tensor<T> out(R, C);
  std::size_t offset = 0;
  for (std::uint32_t id : ids) {
    const Tensor<T>& v = graph.value(id);
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 1) out(r, offset + c) = v(r, c);
        else out(offset + r, c) = v(r, c);
      }
    offset += axis == 1 ? v.cols() : v.rows();
  }
  return graph.record(std::move(out), ids, [axis](Graph<T>& g, std::uint32_t self) {
    const std::size_t C2 = g.value(self).cols();
    auto gy = g.grad(self);
    std::size_t off = 0;
    for (std::uint32_t in : g.inputs(self)) {
      const Tensor<T>& v = g.value(in);
      if (g.needs_grad(in)) {
        auto gx = g.grad(in);
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c) {
            gx[r * v.cols() + c] += axis == 1 ? gy[r * C2 + off + c] : gy[(off + r) * C2 + c];
          }
      }
      off += axis == 1 ? v.cols() : v.rows();
    }
  });
}

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts, int axis) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count) {
  const Tensor<T>& x = a.value();
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") outside " + x.shape_string());
  }
  const std::size_t C = x.cols();
  Tensor<T> out(count, C,
                std::vector<T>(x.values().begin() + static_cast<std::ptrdiff_t>(begin * C),
                               x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * C)));
  return a.graph->record(std::move(out), {a.id}, [begin](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    const std::size_t off = begin * g.value(in).cols();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[off + i] += gy[i];
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  const Tensor<T>& x = a.value();
  if (begin + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") outside " + x.shape_string());
  }
  Tensor<T> out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
  return a.graph->record(std::move(out), {a.id}, [begin, count](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    const std::size_t C = g.value(in).cols();
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    const std::size_t R = gy.size() / count;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < count; ++c) gx[r * C + begin + c] += gy[r * count + c];
  });
}

template <typename T>
Var<T> reshape(Var<T> a, std::size_t rows, std::size_t cols) {
  const Tensor<T>& x = a.value();
  if (rows * cols != x.size()) {
    throw DimensionError("reshape: " + x.shape_string() + " to [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "]");
  }
  Tensor<T> out(rows, cols, std::vector<T>(x.values().begin(), x.values().end()));
  return a.graph->record(std::move(out), {a.id}, [](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var<T> repeat_rows(Var<T> row, std::size_t times) {
  const Tensor<T>& x = row.value();
  if (x.rows() != 1) throw DimensionError("repeat_rows: expected a row vector, got " + x.shape_string());
  Tensor<T> out(times, x.cols());
  for (std::size_t r = 0; r < times; ++r)
    std::copy(x.values().begin(), x.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * x.cols()));
  return row.graph->record(std::move(out), {row.id}, [](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    const std::size_t C = gx.size();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i % C] += gy[i];
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
  const Tensor<T>& tv = table.value();
  const std::size_t C = tv.cols();
  Tensor<T> out(ids.size(), C);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw ContractError("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                          std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * C, C, out.data() + r * C);
  }
  return table.graph->record(std::move(out), {table.id},
                             [ids = std::vector<int>(ids.begin(), ids.end())](Graph<T>& g, std::uint32_t self) {
                               const std::uint32_t in = g.inputs(self)[0];
                               const std::size_t C2 = g.value(in).cols();
                               auto gy = g.grad(self);
                               auto gx = g.grad(in);
                               for (std::size_t r = 0; r < ids.size(); ++r)
                                 for (std::size_t c = 0; c < C2; ++c)
                                   gx[static_cast<std::size_t>(ids[r]) * C2 + c] += gy[r * C2 + c];
                             });
}

template <typename T>
Var<T> pair_add(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.cols()) throw DimensionError(shapes("pair_add", av, bv));
  const std::size_t n = av.rows(), m = bv.rows(), C = av.cols();
  Tensor<T> out(n * m, C);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < C; ++c) out((i * m) + j, c) = av(i, c) + bv(j, c);
  return a.graph->record(std::move(out), {a.id, b.id}, [n, m, C](Graph<T>& g, std::uint32_t self) {
    const auto in = g.inputs(self);
    auto gy = g.grad(self);
    if (g.needs_grad(in[0])) {
      auto ga = g.grad(in[0]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t c = 0; c < C; ++c) ga[i * C + c] += gy[((i * m) + j) * C + c];
    }
    if (g.needs_grad(in[1])) {
      auto gb = g.grad(in[1]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t c = 0; c < C; ++c) gb[j * C + c] += gy[((i * m) + j) * C + c];
    }
  });
}

template <typename T>
Var<T> pick(Var<T> a, std::span<const std::pair<std::size_t, std::size_t>> at) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(1, at.size());
  std::vector<std::size_t> flat(at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    if (at[k].first >= x.rows() || at[k].second >= x.cols()) {
      throw ContractError("pick: (" + std::to_string(at[k].first) + "," + std::to_string(at[k].second) +
                          ") outside " + x.shape_string());
    }
    flat[k] = at[k].first * x.cols() + at[k].second;
    out[k] = x[flat[k]];
  }
  return a.graph->record(std::move(out), {a.id}, [flat = std::move(flat)](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    auto gy = g.grad(self);
    auto gx = g.grad(in);
    for (std::size_t k = 0; k < flat.size(); ++k) gx[flat[k]] += gy[k];
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const Tensor<T>& x = a.value();
  T total = T{0};
  for (T v : x.values()) total += v;
  return a.graph->record(Tensor<T>(1, 1, total), {a.id}, [](Graph<T>& g, std::uint32_t self) {
    const std::uint32_t in = g.inputs(self)[0];
    const T gy = g.grad(self)[0];
    auto gx = g.grad(in);
    for (T& v : gx) v += gy;
  });
}

// ---------------------------------------------------------------- instantiation

#define SEQ2SET_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                     \
  template class Graph<T>;                                                                      \
  template Var<T> matmul(Var<T>, Var<T>);                                                       \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                                    \
  template Var<T> transpose(Var<T>);                                                            \
  template Var<T> add(Var<T>, Var<T>);                                                          \
  template Var<T> add_row(Var<T>, Var<T>);                                                      \
  template Var<T> mul(Var<T>, Var<T>);                                                          \
  template Var<T> scale(Var<T>, T);                                                             \
  template Var<T> neg(Var<T>);                                                                  \
  template Var<T> relu(Var<T>);                                                                 \
  template Var<T> tanh(Var<T>);                                                                 \
  template Var<T> sigmoid(Var<T>);                                                              \
  template Var<T> log(Var<T>, T);                                                               \
  template Var<T> dropout(Var<T>, T, bool, std::mt19937_64&);                                   \
  template Var<T> softmax(Var<T>, int);                                                         \
  template Var<T> masked_softmax(Var<T>, std::span<const std::uint8_t>);                        \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                        \
  template Var<T> concat(std::span<const Var<T>>, int);                                         \
  template Var<T> concat(std::initializer_list<Var<T>>, int);                                   \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                                 \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                 \
  template Var<T> reshape(Var<T>, std::size_t, std::size_t);                                    \
  template Var<T> repeat_rows(Var<T>, std::size_t);                                             \
  template Var<T> gather_rows(Var<T>, std::span<const int>);                                    \
  template Var<T> pair_add(Var<T>, Var<T>);                                                     \
  template Var<T> pick(Var<T>, std::span<const std::pair<std::size_t, std::size_t>>);           \
  template Var<T> sum(Var<T>);

SEQ2SET_INSTANTIATE(float)
SEQ2SET_INSTANTIATE(double)

#undef SEQ2SET_INSTANTIATE

}  // namespace seq2set::ad
