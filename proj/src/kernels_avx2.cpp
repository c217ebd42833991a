// AVX2+FMA lane of the kernel table. Built with -mavx2 -mfma on x86-64;
// the dispatcher only hands out this table when the CPU reports both.

#include "demorl/kernels_detail.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace demorl::kernels::detail {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double dot_row(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc);
    }
    double s = hsum(acc);
    for (; j < n; ++j) s += a[j] * b[j];
    return s;
}

void matvec_avx2(const double* w, const double* x, const double* b, double* y,
                 std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        y[i] = (b ? b[i] : 0.0) + dot_row(w + i * cols, x, cols);
    }
}

void matvec_t_acc_avx2(const double* w, const double* g, double* acc,
                       std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = w + i * cols;
        const __m256d gi = _mm256_set1_pd(g[i]);
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            __m256d a = _mm256_loadu_pd(acc + j);
            a = _mm256_fmadd_pd(gi, _mm256_loadu_pd(row + j), a);
            _mm256_storeu_pd(acc + j, a);
        }
        for (; j < cols; ++j) acc[j] += g[i] * row[j];
    }
}

void outer_acc_avx2(const double* g, const double* x, double* dw,
                    std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = dw + i * cols;
        const __m256d gi = _mm256_set1_pd(g[i]);
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            __m256d a = _mm256_loadu_pd(row + j);
            a = _mm256_fmadd_pd(gi, _mm256_loadu_pd(x + j), a);
            _mm256_storeu_pd(row + j, a);
        }
        for (; j < cols; ++j) row[j] += g[i] * x[j];
    }
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yi = _mm256_loadu_pd(y + i);
        yi = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yi);
        _mm256_storeu_pd(y + i, yi);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    return dot_row(a, b, n);
}

double sum_sq_diff_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void weighted_row_sum_avx2(const double* rows, const double* w, double* out,
                           std::size_t m, std::size_t d) {
    std::memset(out, 0, d * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = rows + i * d;
        const __m256d wi = _mm256_set1_pd(w[i]);
        std::size_t j = 0;
        for (; j + 4 <= d; j += 4) {
            __m256d o = _mm256_loadu_pd(out + j);
            o = _mm256_fmadd_pd(wi, _mm256_loadu_pd(row + j), o);
            _mm256_storeu_pd(out + j, o);
        }
        for (; j < d; ++j) out[j] += w[i] * row[j];
    }
}

void adam_update_avx2(std::size_t n, double* p, const double* g, double* m,
                      double* v, double lr, double beta1, double beta2,
                      double eps, double bias1, double bias2) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d inv_bias1 = _mm256_set1_pd(1.0 / bias1);
    const __m256d inv_bias2 = _mm256_set1_pd(1.0 / bias2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_loadu_pd(m + i);
        __m256d vi = _mm256_loadu_pd(v + i);
        mi = _mm256_fmadd_pd(omb1, gi, _mm256_mul_pd(b1, mi));
        vi = _mm256_fmadd_pd(omb2, _mm256_mul_pd(gi, gi), _mm256_mul_pd(b2, vi));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_mul_pd(mi, inv_bias1);
        const __m256d vhat = _mm256_mul_pd(vi, inv_bias2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps);
    }
}

const KernelTable kAvx2Table = {
    matvec_avx2,     matvec_t_acc_avx2,    outer_acc_avx2,
    axpy_avx2,       dot_avx2,             sum_sq_diff_avx2,
    weighted_row_sum_avx2, adam_update_avx2,
};

}  // namespace

const KernelTable* avx2_table() {
    static const bool ok =
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok ? &kAvx2Table : nullptr;
}

}  // namespace demorl::kernels::detail

#else

namespace demorl::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace demorl::kernels::detail

#endif
