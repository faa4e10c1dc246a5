#pragma once

// Data-parallel numeric kernels. Every kernel has a serial reference in
// `serial::` and an OpenMP version in `parallel::`. The parallel versions
// split only over independent outputs and keep the per-output summation
// order, so both produce bitwise-identical results. Callers use the names
// re-exported at the bottom, which dispatch to the parallel versions.

#include <cstddef>
#include <span>

#include "reviewguard/features.hpp"

namespace reviewguard::nnet::kernels {

namespace serial {

// C[m x n] (+)= A[m x k] * B[k x n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
// C[m x k] (+)= A[m x n] * B[k x n]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate);
// out[t][f] = bias[f] + sum_{q < width*d} seq[t*d + q] * w[q][f], t < len - width + 1
void conv1d_forward(const double* seq, std::size_t len, std::size_t d, const double* w, const double* bias,
                    std::size_t width, std::size_t filters, double* out);
// out[i] = rows[i] . dense
void sparse_dots(std::span<const SparseVector> rows, std::span<const double> dense, std::span<double> out);
// Bias-corrected Adam over n contiguous parameters; bias1 = 1 - beta1^t, bias2 = 1 - beta2^t.
void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n, double lr, double beta1,
                 double beta2, double eps, double bias1, double bias2);

} // namespace serial

namespace parallel {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate);
void conv1d_forward(const double* seq, std::size_t len, std::size_t d, const double* w, const double* bias,
                    std::size_t width, std::size_t filters, double* out);
void sparse_dots(std::span<const SparseVector> rows, std::span<const double> dense, std::span<double> out);
void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n, double lr, double beta1,
                 double beta2, double eps, double bias1, double bias2);

} // namespace parallel

using parallel::adam_update;
using parallel::conv1d_forward;
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;
using parallel::sparse_dots;

// Threads OpenMP will use (1 when built without OpenMP).
int max_threads();

} // namespace reviewguard::nnet::kernels
