#pragma once

// Dense inner loops used by the tensor layer. Every kernel exists twice:
// `serial` is the plain reference used by tests, `parallel` is the
// OpenMP version the library calls. Matrices are row-major and contiguous.

#include <cstddef>

#include "mstitch/common.hpp"

namespace mstitch::kernels {

struct AttentionDims {
  std::size_t queries;  // rows of q
  std::size_t keys;     // rows of k and v
  std::size_t width;    // model width (columns of q, k, v)
  std::size_t heads;
  std::size_t head_width() const { return width / heads; }
};

namespace serial {

/// c[m×n] (+)= a[m×k] · b[k×n]
void matmul(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate);
/// c[m×n] (+)= a[k×m]ᵀ · b[k×n]
void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
/// c[m×n] (+)= a[m×k] · b[n×k]ᵀ
void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);

/// Multi-head scaled dot-product attention. `probs` receives the
/// heads × queries × keys softmax weights needed by the backward pass.
void attention_forward(const Real* q, const Real* k, const Real* v, Real* out, Real* probs,
                       const AttentionDims& dims);
/// Accumulates into dq, dk, dv.
void attention_backward(const Real* q, const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv, const AttentionDims& dims);

}  // namespace serial

namespace parallel {

void matmul(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate);
void matmul_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
void matmul_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
void attention_forward(const Real* q, const Real* k, const Real* v, Real* out, Real* probs,
                       const AttentionDims& dims);
void attention_backward(const Real* q, const Real* k, const Real* v, const Real* probs,
                        const Real* dout, Real* dq, Real* dk, Real* dv, const AttentionDims& dims);

/// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace parallel

}  // namespace mstitch::kernels
