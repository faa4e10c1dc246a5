#include "reviewguard/nnet/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace reviewguard::nnet::kernels {

namespace {

// Below this much work the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::ptrdiff_t;

inline void matmul_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k, std::size_t n,
                       bool accumulate) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const double aip = ai[p];
        if (aip == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
}

inline void matmul_tn_row(const double* a, const double* b, double* c, std::size_t p, std::size_t m, std::size_t k,
                          std::size_t n, bool accumulate) {
    double* cp = c + p * n;
    if (!accumulate) std::fill(cp, cp + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double aip = a[i * k + p];
        if (aip == 0.0) continue;
        const double* bi = b + i * n;
        for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
}

inline void matmul_nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t n, std::size_t k,
                          bool accumulate) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
        ci[p] = accumulate ? ci[p] + s : s;
    }
}

inline void conv_row(const double* seq, std::size_t d, const double* w, const double* bias, std::size_t width,
                     std::size_t filters, double* out, std::size_t t) {
    double* o = out + t * filters;
    std::copy(bias, bias + filters, o);
    const double* window = seq + t * d;
    const std::size_t span = width * d;
    for (std::size_t q = 0; q < span; ++q) {
        const double x = window[q];
        if (x == 0.0) continue;
        const double* wq = w + q * filters;
        for (std::size_t f = 0; f < filters; ++f) o[f] += x * wq[f];
    }
}

inline double sparse_dot_dense(const SparseVector& row, std::span<const double> dense) {
    double s = 0.0;
    for (const auto& e : row.entries) s += e.value * dense[e.index];
    return s;
}

inline void adam_one(double* theta, const double* grad, double* m, double* v, std::size_t i, double lr, double beta1,
                     double beta2, double eps, double bias1, double bias2) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bias1;
    const double vhat = v[i] / bias2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
}

} // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    for (std::size_t p = 0; p < k; ++p) matmul_tn_row(a, b, c, p, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, n, k, accumulate);
}

void conv1d_forward(const double* seq, std::size_t len, std::size_t d, const double* w, const double* bias,
                    std::size_t width, std::size_t filters, double* out) {
    if (len < width) return;
    for (std::size_t t = 0; t + width <= len; ++t) conv_row(seq, d, w, bias, width, filters, out, t);
}

void sparse_dots(std::span<const SparseVector> rows, std::span<const double> dense, std::span<double> out) {
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = sparse_dot_dense(rows[i], dense);
}

void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n, double lr, double beta1,
                 double beta2, double eps, double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) adam_one(theta, grad, m, v, i, lr, beta1, beta2, eps, bias1, bias2);
}

} // namespace serial

namespace parallel {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (Index i = 0; i < static_cast<Index>(m); ++i) matmul_row(a, b, c, static_cast<std::size_t>(i), k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (Index p = 0; p < static_cast<Index>(k); ++p)
        matmul_tn_row(a, b, c, static_cast<std::size_t>(p), m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (Index i = 0; i < static_cast<Index>(m); ++i)
        matmul_nt_row(a, b, c, static_cast<std::size_t>(i), n, k, accumulate);
}

void conv1d_forward(const double* seq, std::size_t len, std::size_t d, const double* w, const double* bias,
                    std::size_t width, std::size_t filters, double* out) {
    if (len < width) return;
    const std::size_t positions = len - width + 1;
#pragma omp parallel for schedule(static) if (positions * width * d * filters > kParallelWork)
    for (Index t = 0; t < static_cast<Index>(positions); ++t)
        conv_row(seq, d, w, bias, width, filters, out, static_cast<std::size_t>(t));
}

void sparse_dots(std::span<const SparseVector> rows, std::span<const double> dense, std::span<double> out) {
#pragma omp parallel for schedule(dynamic, 64) if (rows.size() > 256)
    for (Index i = 0; i < static_cast<Index>(rows.size()); ++i)
        out[static_cast<std::size_t>(i)] = sparse_dot_dense(rows[static_cast<std::size_t>(i)], dense);
}

void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n, double lr, double beta1,
                 double beta2, double eps, double bias1, double bias2) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (Index i = 0; i < static_cast<Index>(n); ++i)
        adam_one(theta, grad, m, v, static_cast<std::size_t>(i), lr, beta1, beta2, eps, bias1, bias2);
}

} // namespace parallel

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace reviewguard::nnet::kernels
