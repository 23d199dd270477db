#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace mstitch;
using testing::grad_check;
using testing::random_tensor;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul: identity, hand arithmetic and loop oracle") {
  const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  CHECK(matmul(constant(eye), constant(m)).value() == m);

  const Var r = matmul(constant(Tensor::matrix({{1, 2}, {3, 4}})), constant(Tensor::matrix({{1}, {1}})));
  CHECK(r.value() == Tensor::matrix({{3}, {7}}));

  Rng rng(3);
  const Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  CHECK(max_abs_diff(matmul(constant(a), constant(b)).value(), naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul: inner dimension mismatch throws") {
  CHECK_THROWS_AS(matmul(constant(Tensor({2, 3})), constant(Tensor({2, 3}))), DimensionError);
  CHECK_THROWS_AS(add(constant(Tensor({2, 3})), constant(Tensor({3, 2}))), DimensionError);
}

TEST_CASE("matmul is associative on random tensors") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Var a = constant(random_tensor({3, 4}, rng)), b = constant(random_tensor({4, 5}, rng)),
              c = constant(random_tensor({5, 2}, rng));
    CHECK(max_abs_diff(matmul(matmul(a, b), c).value(), matmul(a, matmul(b, c)).value()) < 1e-9);
  }
}

TEST_CASE("softmax") {
  const Var u = softmax(constant(Tensor::matrix({{0, 0, 0}})));
  for (int i = 0; i < 3; ++i) CHECK(u.value()[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const Var big = softmax(constant(Tensor::matrix({{1000, 1000}})));
  CHECK(big.value()[0] == 0.5);
  CHECK(big.value()[1] == 0.5);

  const Var s = softmax(constant(Tensor::matrix({{1, 2, 3}})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.value()[i] - std::exp(i + 1.0) / z) < 1e-12);

  Rng rng(5);
  const Tensor x = random_tensor({6, 9}, rng, 4.0);
  const Var rows = softmax(constant(x), 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      CHECK(rows.value().at(r, c) >= 0);
      sum += rows.value().at(r, c);
    }
    CHECK(std::abs(sum - 1) < 1e-9);
  }
  const Var cols = softmax(constant(x), 0);
  for (std::size_t c = 0; c < 9; ++c) {
    double sum = 0;
    for (std::size_t r = 0; r < 6; ++r) sum += cols.value().at(r, c);
    CHECK(std::abs(sum - 1) < 1e-9);
  }
}

TEST_CASE("layer_norm closed forms") {
  const Var gain = constant(Tensor({1, 2}, 1)), bias = constant(Tensor({1, 2}, 0));
  const Var y = layer_norm(constant(Tensor::matrix({{1, 3}})), gain, bias);
  // mean 2, variance 1: (x − 2)/sqrt(1 + eps)
  CHECK(y.value()[0] == doctest::Approx(-1 / std::sqrt(1 + 1e-5)).epsilon(1e-12));
  CHECK(y.value()[1] == doctest::Approx(1 / std::sqrt(1 + 1e-5)).epsilon(1e-12));

  const Var g3 = constant(Tensor({1, 3}, 1)), b3 = constant(Tensor({1, 3}, 0));
  const Var flat = layer_norm(constant(Tensor::matrix({{4, 4, 4}})), g3, b3);
  for (Real v : flat.value().values()) CHECK(v == 0);
}

TEST_CASE("backward: analytic cases") {
  Var w = parameter(Tensor::matrix({{1, 2, 3}}));
  backward(sum(w));
  CHECK(w.grad() == Tensor::matrix({{1, 1, 1}}));

  Var v = parameter(Tensor::matrix({{1, 2}}));
  backward(sum(mul(v, v)));
  CHECK(v.grad() == Tensor::matrix({{2, 4}}));

  CHECK_THROWS_AS(backward(mul(v, v)), ContractError);
}

TEST_CASE("backward: unreachable parameters get no gradient, constants never do") {
  Var used = parameter(Tensor({1, 2}, 1));
  Var unused = parameter(Tensor({1, 2}, 1));
  const Var c = constant(Tensor({1, 2}, 3));
  backward(sum(mul(used, c)));
  CHECK(used.grad() == Tensor({1, 2}, 3));
  CHECK((unused.grad().empty() || unused.grad() == Tensor({1, 2}, 0)));
  CHECK(c.grad().empty());
}

TEST_CASE("NoGradGuard records nothing") {
  Var w = parameter(Tensor({1, 2}, 1));
  Var y;
  {
    NoGradGuard guard;
    CHECK(NoGradGuard::active());
    y = sum(mul(w, w));
  }
  CHECK_FALSE(NoGradGuard::active());
  backward(y);
  CHECK(w.grad().empty());
}

TEST_CASE("dropout: identity in eval, inverted scaling in training") {
  Rng rng(1);
  const Tensor x = Tensor({200, 50}, 1);
  CHECK(dropout(constant(x), Real(0.1), ForwardMode{}).value() == x);
  const Var d = dropout(constant(x), Real(0.1), ForwardMode{true, &rng});
  std::size_t zeros = 0;
  for (Real v : d.value().values()) {
    CHECK((v == 0 || std::abs(v - 1 / 0.9) < 1e-12));
    zeros += v == 0;
  }
  const double rate = double(zeros) / x.size();
  CHECK(rate == doctest::Approx(0.1).epsilon(0.15));
  CHECK_THROWS(dropout(constant(x), Real(0.1), ForwardMode{true, nullptr}));
}

TEST_CASE("shape ops") {
  const Var a = constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
  CHECK(transpose(a).value() == Tensor::matrix({{1, 4}, {2, 5}, {3, 6}}));
  CHECK(slice_cols(a, 1, 3).value() == Tensor::matrix({{2, 3}, {5, 6}}));
  CHECK(slice_rows(a, 1, 2).value() == Tensor::matrix({{4, 5, 6}}));
  CHECK(concat_rows({a, a}).value().rows() == 4);
  const std::vector<std::size_t> idx{1, 0, 1};
  CHECK(gather_rows(a, idx).value() == Tensor::matrix({{4, 5, 6}, {1, 2, 3}, {4, 5, 6}}));
  CHECK(diff_rows(a).value() == Tensor::matrix({{3, 3, 3}}));
  const std::vector<std::size_t> at{2};
  const Var s = scatter_rows(slice_rows(a, 0, 1), at, constant(Tensor::matrix({{0, 0, 9}})), 3);
  CHECK(s.value() == Tensor::matrix({{0, 0, 9}, {0, 0, 9}, {1, 2, 3}}));
  CHECK(reshape(a, {3, 2}).value() == Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  CHECK(mean_rows(a).value() == Tensor::matrix({{2.5, 3.5, 4.5}}));
  // kernel 3, stride 2, pad 1 on 3 rows: rows (−1,0,1) and (1,2,3) with zero padding
  const Var u = unfold_rows(constant(Tensor::matrix({{1}, {2}, {3}})), 3, 2, 1);
  CHECK(u.value() == Tensor::matrix({{0, 1, 2}, {2, 3, 0}}));
}

TEST_CASE("rmse") {
  const Var a = constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var b = constant(Tensor::matrix({{1.5, 2.5}, {3.5, 4.5}}));
  CHECK(rmse(a, b).value()[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(rmse(a, a).value()[0] == doctest::Approx(1e-6).epsilon(1e-9));
}

// Every differentiable op against central differences.
TEST_CASE("gradient check: elementwise, reductions and shape ops") {
  Rng rng(7);
  Var a = parameter(random_tensor({4, 5}, rng));
  Var b = parameter(random_tensor({4, 5}, rng));
  Var w = parameter(random_tensor({5, 3}, rng));
  Var row = parameter(random_tensor({1, 5}, rng));
  const Var probe = constant(random_tensor({4, 5}, rng));
  const std::vector<std::size_t> idx{3, 0, 3};

  const std::vector<std::pair<const char*, std::function<Var()>>> cases{
      {"matmul", [&] { return sum(mul(matmul(a, w), matmul(b, w))); }},
      {"add/sub/scale", [&] { return sum(mul(sub(add(a, b), scale(b, 0.3)), probe)); }},
      {"add_row", [&] { return sum(mul(add_row(a, row), probe)); }},
      {"relu", [&] { return sum(mul(relu(a), probe)); }},
      {"silu", [&] { return sum(mul(silu(a), probe)); }},
      {"softmax rows", [&] { return sum(mul(softmax(a, 1), probe)); }},
      {"softmax cols", [&] { return sum(mul(softmax(a, 0), probe)); }},
      {"layer_norm", [&] { return sum(mul(layer_norm(a, row, slice_rows(b, 0, 1)), probe)); }},
      {"transpose", [&] { return sum(mul(transpose(transpose(a)), probe)); }},
      {"reshape", [&] { return sum(mul(reshape(reshape(a, {5, 4}), {4, 5}), probe)); }},
      {"concat/slice", [&] { return sum(mul(slice_rows(concat_rows({a, b}), 2, 6), probe)); }},
      {"slice_cols", [&] { return sum(mul(slice_cols(a, 1, 4), slice_cols(b, 1, 4))); }},
      {"gather", [&] { return sum(mul(gather_rows(a, idx), gather_rows(b, idx))); }},
      {"scatter", [&] { return sum(mul(scatter_rows(slice_rows(a, 0, 2), std::vector<std::size_t>{1, 3}, row, 4), probe)); }},
      {"diff_rows", [&] { return sum(mul(diff_rows(a), diff_rows(b))); }},
      {"mean/mean_rows", [&] { return add_scalars({mean(mul(a, a)), sum(mul(mean_rows(a), row))}); }},
      {"rmse", [&] { return rmse(a, b); }},
      {"unfold", [&] { return sum(mul(unfold_rows(a, 3, 2, 1), unfold_rows(b, 3, 2, 1))); }},
  };
  for (const auto& [name, f] : cases) {
    INFO(name);
    const auto g = grad_check(f, {a, b, w, row});
    CHECK(g.rel_error() < 1e-6);
  }
}

TEST_CASE("gradient check: multi-head attention") {
  Rng rng(9);
  Var q = parameter(random_tensor({5, 8}, rng)), k = parameter(random_tensor({7, 8}, rng)),
      v = parameter(random_tensor({7, 8}, rng));
  const Var probe = constant(random_tensor({5, 8}, rng));
  const auto g = grad_check([&] { return sum(mul(attention(q, k, v, 2), probe)); }, {q, k, v});
  CHECK(g.rel_error() < 1e-6);
}

TEST_CASE("attention matches a per-head dense oracle") {
  Rng rng(13);
  const Tensor q = random_tensor({3, 4}, rng), k = random_tensor({5, 4}, rng), v = random_tensor({5, 4}, rng);
  const Tensor out = attention(constant(q), constant(k), constant(v), 2).value();
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> s(5);
      double mx = -1e300, z = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        s[j] = 0;
        for (std::size_t c = 0; c < 2; ++c) s[j] += q.at(i, 2 * h + c) * k.at(j, 2 * h + c);
        s[j] /= std::sqrt(2.0);
        mx = std::max(mx, s[j]);
      }
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t c = 0; c < 2; ++c) {
        double o = 0;
        for (std::size_t j = 0; j < 5; ++j) o += s[j] / z * v.at(j, 2 * h + c);
        CHECK(std::abs(out.at(i, 2 * h + c) - o) < 1e-12);
      }
    }
  }
}
