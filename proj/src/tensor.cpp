#include "mstitch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mstitch/kernels.hpp"

namespace mstitch {

namespace k = kernels::parallel;
using detail::Node;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "×" : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<Real> values;
  values.reserve(n * m);
  for (const auto& row : rows) {
    if (row.size() != m) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({n, m}, std::move(values));
}

std::size_t Tensor::cols() const {
  if (shape_.size() <= 1) return 1;
  return std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1}, std::multiplies<>());
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

Tensor& Node::ensure_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0);
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss || loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss ? shape_string(loss.shape()) : std::string("<null>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node);
  }
}

namespace {
thread_local bool no_grad_active = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(no_grad_active) { no_grad_active = true; }
NoGradGuard::~NoGradGuard() { no_grad_active = previous_; }
bool NoGradGuard::active() { return no_grad_active; }

Var detail::make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (no_grad_active) return Var(std::move(node));
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

namespace {

using detail::make_op;

void require_2d(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_string(a.shape()));
  }
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Accumulate `scale * src` into input i's gradient when it wants one.
void accumulate(Node& self, std::size_t i, std::span<const Real> src, Real factor = 1) {
  Node& in = self.input(i);
  if (!in.requires_grad) return;
  auto g = in.ensure_grad().values();
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += factor * src[j];
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
  if (b.rows() != kk) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  Tensor out({m, n});
  k::matmul(a.value().data(), b.value().data(), out.data(), m, kk, n, false);
  return make_op(std::move(out), {a, b}, [m, kk, n](Node& self) {
    Node& a = self.input(0);
    Node& b = self.input(1);
    if (a.requires_grad) k::matmul_nt(self.grad.data(), b.value.data(), a.ensure_grad().data(), m, n, kk, true);
    if (b.requires_grad) k::matmul_tn(a.value.data(), self.grad.data(), b.ensure_grad().data(), kk, m, n, true);
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self, 0, self.grad.values());
    accumulate(self, 1, self.grad.values());
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self, 0, self.grad.values());
    accumulate(self, 1, self.grad.values(), Real(-1));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t side = 0; side < 2; ++side) {
      Node& in = self.input(side);
      if (!in.requires_grad) continue;
      const Tensor& other = self.input(1 - side).value;
      auto g = in.ensure_grad().values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Var scale(const Var& a, Real factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_op(std::move(out), {a}, [factor](Node& self) { accumulate(self, 0, self.grad.values(), factor); });
}

Var add_row(const Var& a, const Var& row) {
  require_2d(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.value().size() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " vs " + shape_string(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += row.value()[j];
  return make_op(std::move(out), {a, row}, [m, n](Node& self) {
    accumulate(self, 0, self.grad.values());
    Node& r = self.input(1);
    if (!r.requires_grad) return;
    auto g = r.ensure_grad().values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::max(v, Real(0));
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = self.input(0);
    auto g = in.ensure_grad().values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in.value[i] > 0) g[i] += self.grad[i];
  });
}

Var silu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v / (Real(1) + std::exp(-v));
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = self.input(0);
    auto g = in.ensure_grad().values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real x = in.value[i];
      const Real s = Real(1) / (Real(1) + std::exp(-x));
      g[i] += self.grad[i] * s * (Real(1) + x * (Real(1) - s));
    }
  });
}

Var softmax(const Var& a, int axis) {
  require_2d(a, "softmax");
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  if (axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    Real* row = out.data() + i * n;
    const Real peak = *std::max_element(row, row + n);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) total += (row[j] = std::exp(row[j] - peak));
    for (std::size_t j = 0; j < n; ++j) row[j] /= total;
  }
  return make_op(std::move(out), {a}, [m, n](Node& self) {
    Node& in = self.input(0);
    auto g = in.ensure_grad().values();
    for (std::size_t i = 0; i < m; ++i) {
      const Real* y = self.value.data() + i * n;
      const Real* gy = self.grad.data() + i * n;
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, Real eps) {
  require_2d(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.value().size() != n || bias.value().size() != n) throw DimensionError("layer_norm: affine width");
  Tensor out({m, n});
  auto normed = std::make_shared<std::vector<Real>>(m * n);
  auto inv_std = std::make_shared<std::vector<Real>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = x.value().data() + i * n;
    Real mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(n);
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const Real xhat = (row[j] - mu) * is;
      (*normed)[i * n + j] = xhat;
      out[i * n + j] = xhat * gain.value()[j] + bias.value()[j];
    }
  }
  return make_op(std::move(out), {x, gain, bias}, [m, n, normed, inv_std](Node& self) {
    Node& in = self.input(0);
    Node& g = self.input(1);
    Node& b = self.input(2);
    if (g.requires_grad || b.requires_grad) {
      auto& gg = g.ensure_grad();
      auto& bg = b.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          gg[j] += self.grad[i * n + j] * (*normed)[i * n + j];
          bg[j] += self.grad[i * n + j];
        }
    }
    if (!in.requires_grad) return;
    auto& xg = in.ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      Real mean_d = 0, mean_dx = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const Real d = self.grad[i * n + j] * g.value[j];
        mean_d += d;
        mean_dx += d * (*normed)[i * n + j];
      }
      mean_d /= static_cast<Real>(n);
      mean_dx /= static_cast<Real>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const Real d = self.grad[i * n + j] * g.value[j];
        xg[i * n + j] += (*inv_std)[i] * (d - mean_d - (*normed)[i * n + j] * mean_dx);
      }
    }
  });
}

Var dropout(const Var& x, Real rate, const ForwardMode& mode) {
  if (!mode.training || rate <= 0) return x;
  if (!mode.rng) throw ContractError("dropout in training mode needs an RNG");
  if (rate >= 1) throw ConfigError("dropout rate must be < 1");
  const Real keep_scale = Real(1) / (Real(1) - rate);
  auto mask = std::make_shared<std::vector<Real>>(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = mode.rng->uniform() < rate ? Real(0) : keep_scale;
    out[i] *= (*mask)[i];
  }
  return make_op(std::move(out), {x}, [mask](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Var transpose(const Var& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  return make_op(std::move(out), {a}, [m, n](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  return make_op(a.value().reshaped(std::move(shape)), {a},
                     [](Node& self) { accumulate(self, 0, self.grad.values()); });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
    m += p.rows();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + offset);
    offset += p.value().size();
  }
  return make_op(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const std::size_t len = self.input(i).value.size();
      accumulate(self, i, self.grad.values().subspan(off, len));
      off += len;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  require_2d(a, "slice_rows");
  if (begin > end || end > a.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t n = a.cols();
  Tensor out({end - begin, n});
  std::copy(a.value().data() + begin * n, a.value().data() + end * n, out.data());
  return make_op(std::move(out), {a}, [begin, n](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_2d(a, "slice_cols");
  if (begin > end || end > a.cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.value()[i * n + begin + j];
  return make_op(std::move(out), {a}, [m, n, w, begin](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> indices) {
  require_2d(a, "gather_rows");
  const std::size_t n = a.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), n});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(a.value().data() + idx[r] * n, n, out.data() + r * n);
  }
  return make_op(std::move(out), {a}, [idx = std::move(idx), n](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
  });
}

Var scatter_rows(const Var& values, std::span<const std::size_t> indices, const Var& fill,
                 std::size_t n_rows) {
  require_2d(values, "scatter_rows");
  const std::size_t n = values.cols();
  if (values.rows() != indices.size()) throw DimensionError("scatter_rows: one value row per index");
  if (fill.value().size() != n) throw DimensionError("scatter_rows: fill width");
  std::vector<long> source(n_rows, -1);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n_rows) throw DimensionError("scatter_rows: index out of range");
    source[indices[r]] = static_cast<long>(r);
  }
  Tensor out({n_rows, n});
  for (std::size_t i = 0; i < n_rows; ++i) {
    const Real* src = source[i] < 0 ? fill.value().data() : values.value().data() + source[i] * n;
    std::copy_n(src, n, out.data() + i * n);
  }
  return make_op(std::move(out), {values, fill}, [source = std::move(source), n](Node& self) {
    Node& vals = self.input(0);
    Node& fill = self.input(1);
    for (std::size_t i = 0; i < source.size(); ++i) {
      Node& target = source[i] < 0 ? fill : vals;
      if (!target.requires_grad) continue;
      Real* dst = target.ensure_grad().data() + (source[i] < 0 ? 0 : source[i] * n);
      for (std::size_t j = 0; j < n; ++j) dst[j] += self.grad[i * n + j];
    }
  });
}

Var diff_rows(const Var& a) {
  require_2d(a, "diff_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (m < 2) throw DimensionError("diff_rows needs at least two rows");
  Tensor out({m - 1, n});
  for (std::size_t i = 0; i + 1 < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.value()[(i + 1) * n + j] - a.value()[i * n + j];
  return make_op(std::move(out), {a}, [m, n](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t i = 0; i + 1 < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        g[(i + 1) * n + j] += self.grad[i * n + j];
        g[i * n + j] -= self.grad[i * n + j];
      }
  });
}

Var sum(const Var& a) {
  Real total = 0;
  for (Real v : a.value().values()) total += v;
  return make_op(Tensor::scalar(total), {a}, [](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (auto& v : g) v += self.grad[0];
  });
}

Var mean(const Var& a) { return scale(sum(a), Real(1) / static_cast<Real>(a.value().size())); }

Var mean_rows(const Var& a) {
  require_2d(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.value()[i * n + j];
  for (auto& v : out.values()) v /= static_cast<Real>(m);
  return make_op(std::move(out), {a}, [m, n](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    const Real inv = Real(1) / static_cast<Real>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
  });
}

Var rmse(const Var& a, const Var& b, Real eps) {
  require_same(a, b, "rmse");
  const std::size_t count = a.value().size();
  if (count == 0) throw DimensionError("rmse of empty tensors");
  // Accumulate in double so 32-bit builds keep small losses accurate.
  double sq = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(a.value()[i]) - static_cast<double>(b.value()[i]);
    sq += d * d;
  }
  const Real root = static_cast<Real>(std::sqrt(sq / static_cast<double>(count) + static_cast<double>(eps)));
  return make_op(Tensor::scalar(root), {a, b}, [count](Node& self) {
    const Real factor = self.grad[0] / (static_cast<Real>(count) * self.value[0]);
    const Tensor& av = self.input(0).value;
    const Tensor& bv = self.input(1).value;
    for (std::size_t side = 0; side < 2; ++side) {
      Node& in = self.input(side);
      if (!in.requires_grad) continue;
      const Real sign = side == 0 ? Real(1) : Real(-1);
      auto g = in.ensure_grad().values();
      for (std::size_t i = 0; i < count; ++i) g[i] += sign * factor * (av[i] - bv[i]);
    }
  });
}

Var add_scalars(const std::vector<Var>& terms) {
  Real total = 0;
  for (const auto& t : terms) {
    if (t.value().size() != 1) throw DimensionError("add_scalars: non-scalar term");
    total += t.value()[0];
  }
  return make_op(Tensor::scalar(total), terms, [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (self.input(i).requires_grad) self.input(i).ensure_grad()[0] += self.grad[0];
  });
}

Var attention(const Var& q, const Var& kv_keys, const Var& v, std::size_t heads) {
  require_2d(q, "attention");
  require_2d(kv_keys, "attention");
  require_2d(v, "attention");
  const kernels::AttentionDims dims{q.rows(), kv_keys.rows(), q.cols(), heads};
  if (heads == 0 || dims.width % heads != 0) throw DimensionError("attention: width not divisible by heads");
  if (kv_keys.cols() != dims.width || v.cols() != dims.width || v.rows() != dims.keys) {
    throw DimensionError("attention: q/k/v shapes disagree");
  }
  Tensor out({dims.queries, dims.width});
  auto probs = std::make_shared<std::vector<Real>>(heads * dims.queries * dims.keys);
  k::attention_forward(q.value().data(), kv_keys.value().data(), v.value().data(), out.data(), probs->data(),
                       dims);
  return make_op(std::move(out), {q, kv_keys, v}, [dims, probs](Node& self) {
    Node& qn = self.input(0);
    Node& kn = self.input(1);
    Node& vn = self.input(2);
    // Scratch for inputs that do not need gradients keeps the kernel branch-free.
    Tensor scratch_q, scratch_k, scratch_v;
    Real* dq = qn.requires_grad ? qn.ensure_grad().data() : (scratch_q = Tensor(qn.value.shape())).data();
    Real* dk = kn.requires_grad ? kn.ensure_grad().data() : (scratch_k = Tensor(kn.value.shape())).data();
    Real* dv = vn.requires_grad ? vn.ensure_grad().data() : (scratch_v = Tensor(vn.value.shape())).data();
    k::attention_backward(qn.value.data(), kn.value.data(), vn.value.data(), probs->data(), self.grad.data(), dq,
                          dk, dv, dims);
  });
}

Var unfold_rows(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_2d(x, "unfold_rows");
  if (kernel == 0 || stride == 0) throw DimensionError("unfold_rows: kernel and stride must be positive");
  const std::size_t len = x.rows(), c = x.cols();
  if (len + 2 * pad < kernel) throw DimensionError("unfold_rows: input shorter than kernel");
  const std::size_t out_len = (len + 2 * pad - kernel) / stride + 1;
  Tensor out({out_len, kernel * c});
  for (std::size_t r = 0; r < out_len; ++r)
    for (std::size_t t = 0; t < kernel; ++t) {
      const long src = static_cast<long>(r * stride + t) - static_cast<long>(pad);
      if (src < 0 || src >= static_cast<long>(len)) continue;
      std::copy_n(x.value().data() + src * c, c, out.data() + (r * kernel + t) * c);
    }
  return make_op(std::move(out), {x}, [out_len, kernel, stride, pad, len, c](Node& self) {
    auto g = self.input(0).ensure_grad().values();
    for (std::size_t r = 0; r < out_len; ++r)
      for (std::size_t t = 0; t < kernel; ++t) {
        const long src = static_cast<long>(r * stride + t) - static_cast<long>(pad);
        if (src < 0 || src >= static_cast<long>(len)) continue;
        for (std::size_t j = 0; j < c; ++j) g[src * c + j] += self.grad[(r * kernel + t) * c + j];
      }
  });
}

}  // namespace mstitch
