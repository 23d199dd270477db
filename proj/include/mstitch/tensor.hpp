#pragma once

// Dense tensors and a tape-free reverse-mode autodiff graph.
//
// A `Var` owns a value and (lazily) a gradient buffer. Operations on Vars
// record their inputs and a backward closure; `backward(loss)` walks the
// recorded graph in reverse topological order. Graphs are single-threaded;
// parameter Vars may be shared read-only across concurrent inference graphs
// as long as nobody calls backward on them.

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "mstitch/common.hpp"
#include "mstitch/rng.hpp"

namespace mstitch {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> values);

  /// Row-major 2-D literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor scalar(Real value) { return Tensor({1, 1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  /// Leading extent.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of the trailing extents.
  std::size_t cols() const;
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(Real value);
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
  Node& input(std::size_t i) { return *inputs[i]; }
};

}  // namespace detail

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  /// Mutable access; only meaningful for leaves (parameters).
  Tensor& value_mut() { return node_->value; }
  /// Gradient buffer; an empty tensor when nothing has flowed here yet.
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_mut() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
/// Records a custom differentiable op. `backward` runs only if some input
/// requires a gradient; it reads self.grad and accumulates into inputs.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);
}  // namespace detail

/// Trainable leaf.
Var parameter(Tensor value);
/// Leaf that never receives a gradient.
Var constant(Tensor value);

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
/// Throws ContractError unless `loss` holds exactly one value.
void backward(const Var& loss);

/// While alive, operations on this thread record no graph (inference only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool previous_;
};

/// Inference-time switches threaded through forward passes.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

// ---- operations (all differentiable) -------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real factor);
/// a[m×n] + row[1×n] broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var relu(const Var& a);
Var silu(const Var& a);
/// Softmax along `axis` (0 = down columns, 1 = along rows) of a 2-D tensor.
Var softmax(const Var& a, int axis = 1);
/// Normalizes each row, then applies gain[1×n] and bias[1×n].
Var layer_norm(const Var& x, const Var& gain, const Var& bias, Real eps = Real(1e-5));
/// Inverted dropout; identity unless mode.training and rate > 0.
Var dropout(const Var& x, Real rate, const ForwardMode& mode);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var gather_rows(const Var& a, std::span<const std::size_t> indices);
/// Builds an n_rows×c tensor whose rows at `indices` come from `values`
/// (one row per index) and whose remaining rows are copies of `fill`[1×c].
Var scatter_rows(const Var& values, std::span<const std::size_t> indices, const Var& fill,
                 std::size_t n_rows);
/// Row-wise first differences: out[i] = a[i+1] − a[i].
Var diff_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Column means, 1×c.
Var mean_rows(const Var& a);
/// sqrt(mean((a − b)²) + eps) as a 1×1 tensor.
Var rmse(const Var& a, const Var& b, Real eps = Real(1e-12));
/// Sum of 1×1 tensors.
Var add_scalars(const std::vector<Var>& terms);
/// Multi-head scaled dot-product attention; q[n×d], k and v [m×d].
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads);
/// Temporal im2col: row r of the result concatenates input rows
/// r·stride − pad … r·stride − pad + kernel − 1 (zero outside).
Var unfold_rows(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad);

}  // namespace mstitch
