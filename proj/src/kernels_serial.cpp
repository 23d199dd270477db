#include <algorithm>
#include <cmath>
#include <vector>

#include "mstitch/kernels.hpp"

namespace mstitch::kernels::serial {

void matmul(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void attention_forward(const Real* q, const Real* k, const Real* v, Real* out, Real* probs,
                       const AttentionDims& dims) {
  const std::size_t hw = dims.head_width();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hw));
  for (std::size_t h = 0; h < dims.heads; ++h) {
    const std::size_t col = h * hw;
    Real* p = probs + h * dims.queries * dims.keys;
    for (std::size_t i = 0; i < dims.queries; ++i) {
      Real* row = p + i * dims.keys;
      Real peak = -INFINITY;
      for (std::size_t j = 0; j < dims.keys; ++j) {
        Real s = 0;
        for (std::size_t c = 0; c < hw; ++c) s += q[i * dims.width + col + c] * k[j * dims.width + col + c];
        row[j] = s * scale;
        peak = std::max(peak, row[j]);
      }
      Real total = 0;
      for (std::size_t j = 0; j < dims.keys; ++j) {
        row[j] = std::exp(row[j] - peak);
        total += row[j];
      }
      for (std::size_t j = 0; j < dims.keys; ++j) row[j] /= total;
      for (std::size_t c = 0; c < hw; ++c) {
        Real s = 0;
        for (std::size_t j = 0; j < dims.keys; ++j) s += row[j] * v[j * dims.width + col + c];
        out[i * dims.width + col + c] = s;
      }
    }
  }
}

void attention_backward(const Real* q, const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv, const AttentionDims& dims) {
  const std::size_t hw = dims.head_width();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hw));
  std::vector<Real> dp(dims.keys);
  for (std::size_t h = 0; h < dims.heads; ++h) {
    const std::size_t col = h * hw;
    const Real* p = probs + h * dims.queries * dims.keys;
    for (std::size_t i = 0; i < dims.queries; ++i) {
      const Real* row = p + i * dims.keys;
      Real weighted = 0;
      for (std::size_t j = 0; j < dims.keys; ++j) {
        Real s = 0;
        for (std::size_t c = 0; c < hw; ++c) {
          s += dout[i * dims.width + col + c] * v[j * dims.width + col + c];
          dv[j * dims.width + col + c] += row[j] * dout[i * dims.width + col + c];
        }
        dp[j] = s;
        weighted += s * row[j];
      }
      for (std::size_t j = 0; j < dims.keys; ++j) {
        const Real ds = row[j] * (dp[j] - weighted) * scale;
        for (std::size_t c = 0; c < hw; ++c) {
          dq[i * dims.width + col + c] += ds * k[j * dims.width + col + c];
          dk[j * dims.width + col + c] += ds * q[i * dims.width + col + c];
        }
      }
    }
  }
}

}  // namespace mstitch::kernels::serial
