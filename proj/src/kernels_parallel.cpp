#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef MSTITCH_HAVE_OPENMP
#include <omp.h>
#endif

#include "mstitch/kernels.hpp"

namespace mstitch::kernels::parallel {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

using Index = std::ptrdiff_t;

}  // namespace

int max_threads() {
#ifdef MSTITCH_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
  const bool wide = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    Real* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, Real(0));
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  const bool wide = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    Real* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, Real(0));
    for (std::size_t p = 0; p < k; ++p) {
      const Real api = a[p * m + i];
      if (api == Real(0)) continue;
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  const bool wide = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    const Real* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b + j * k;
      Real sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void attention_forward(const Real* q, const Real* k, const Real* v, Real* out, Real* probs,
                       const AttentionDims& dims) {
  const std::size_t hw = dims.head_width();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hw));
  const Index rows = static_cast<Index>(dims.heads * dims.queries);
  const bool wide = dims.queries * dims.keys * dims.width >= kParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (Index hi = 0; hi < rows; ++hi) {
    const std::size_t h = static_cast<std::size_t>(hi) / dims.queries;
    const std::size_t i = static_cast<std::size_t>(hi) % dims.queries;
    const std::size_t col = h * hw;
    Real* row = probs + (h * dims.queries + i) * dims.keys;
    const Real* qi = q + i * dims.width + col;
    Real peak = -INFINITY;
    for (std::size_t j = 0; j < dims.keys; ++j) {
      const Real* kj = k + j * dims.width + col;
      Real s = 0;
      for (std::size_t c = 0; c < hw; ++c) s += qi[c] * kj[c];
      row[j] = s * scale;
      peak = std::max(peak, row[j]);
    }
    Real total = 0;
    for (std::size_t j = 0; j < dims.keys; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    const Real inv = Real(1) / total;
    Real* oi = out + i * dims.width + col;
    std::fill(oi, oi + hw, Real(0));
    for (std::size_t j = 0; j < dims.keys; ++j) {
      row[j] *= inv;
      const Real* vj = v + j * dims.width + col;
      for (std::size_t c = 0; c < hw; ++c) oi[c] += row[j] * vj[c];
    }
  }
}

void attention_backward(const Real* q, const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv, const AttentionDims& dims) {
  const std::size_t hw = dims.head_width();
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hw));
  const bool wide = dims.queries * dims.keys * dims.width >= kParallelWork;
  // Heads own disjoint column ranges of dq/dk/dv, so they can run concurrently.
#pragma omp parallel for schedule(static) if (wide && dims.heads > 1)
  for (Index hi = 0; hi < static_cast<Index>(dims.heads); ++hi) {
    const std::size_t h = static_cast<std::size_t>(hi);
    const std::size_t col = h * hw;
    const Real* p = probs + h * dims.queries * dims.keys;
    std::vector<Real> dp(dims.keys);
    for (std::size_t i = 0; i < dims.queries; ++i) {
      const Real* row = p + i * dims.keys;
      const Real* doi = dout + i * dims.width + col;
      Real weighted = 0;
      for (std::size_t j = 0; j < dims.keys; ++j) {
        const Real* vj = v + j * dims.width + col;
        Real* dvj = dv + j * dims.width + col;
        Real s = 0;
        for (std::size_t c = 0; c < hw; ++c) {
          s += doi[c] * vj[c];
          dvj[c] += row[j] * doi[c];
        }
        dp[j] = s;
        weighted += s * row[j];
      }
      const Real* qi = q + i * dims.width + col;
      Real* dqi = dq + i * dims.width + col;
      for (std::size_t j = 0; j < dims.keys; ++j) {
        const Real ds = row[j] * (dp[j] - weighted) * scale;
        const Real* kj = k + j * dims.width + col;
        Real* dkj = dk + j * dims.width + col;
        for (std::size_t c = 0; c < hw; ++c) {
          dqi[c] += ds * kj[c];
          dkj[c] += ds * qi[c];
        }
      }
    }
  }
}

}  // namespace mstitch::kernels::parallel
