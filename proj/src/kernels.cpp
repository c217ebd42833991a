#include "demorl/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "demorl/kernels_detail.hpp"

namespace demorl::kernels {

namespace {

void matvec_scalar(const double* w, const double* x, const double* b, double* y,
                   std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = w + i * cols;
        double acc = b ? b[i] : 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

void matvec_t_acc_scalar(const double* w, const double* g, double* acc,
                         std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = w + i * cols;
        const double gi = g[i];
        for (std::size_t j = 0; j < cols; ++j) acc[j] += gi * row[j];
    }
}

void outer_acc_scalar(const double* g, const double* x, double* dw,
                      std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = dw + i * cols;
        const double gi = g[i];
        for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
    }
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_sq_diff_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void weighted_row_sum_scalar(const double* rows, const double* w, double* out,
                             std::size_t m, std::size_t d) {
    std::memset(out, 0, d * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = rows + i * d;
        const double wi = w[i];
        for (std::size_t j = 0; j < d; ++j) out[j] += wi * row[j];
    }
}

void adam_update_scalar(std::size_t n, double* p, const double* g, double* m,
                        double* v, double lr, double beta1, double beta2,
                        double eps, double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

const KernelTable kScalarTable = {
    matvec_scalar,     matvec_t_acc_scalar,    outer_acc_scalar,
    axpy_scalar,       dot_scalar,             sum_sq_diff_scalar,
    weighted_row_sum_scalar, adam_update_scalar,
};

const KernelTable* select_default() {
    if (const char* env = std::getenv("DEMORL_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return &kScalarTable;
        if (std::strcmp(env, "avx2") == 0 && detail::avx2_table()) return detail::avx2_table();
    }
    if (const KernelTable* t = detail::avx2_table()) return t;
    return &kScalarTable;
}

const KernelTable*& active_table() {
    static const KernelTable* table = select_default();
    return table;
}

}  // namespace

bool avx2_supported() { return detail::avx2_table() != nullptr; }

Backend active_backend() {
    return active_table() == &kScalarTable ? Backend::Scalar : Backend::Avx2;
}

const char* backend_name() {
    return active_backend() == Backend::Scalar ? "scalar" : "avx2";
}

bool set_backend(Backend b) {
    if (b == Backend::Scalar) {
        active_table() = &kScalarTable;
        return true;
    }
    if (const KernelTable* t = detail::avx2_table()) {
        active_table() = t;
        return true;
    }
    return false;
}

void matvec(const double* w, const double* x, const double* b, double* y,
            std::size_t rows, std::size_t cols) {
    active_table()->matvec(w, x, b, y, rows, cols);
}

void matvec_t_acc(const double* w, const double* g, double* acc,
                  std::size_t rows, std::size_t cols) {
    active_table()->matvec_t_acc(w, g, acc, rows, cols);
}

void outer_acc(const double* g, const double* x, double* dw, std::size_t rows,
               std::size_t cols) {
    active_table()->outer_acc(g, x, dw, rows, cols);
}

void axpy(std::size_t n, double a, const double* x, double* y) {
    active_table()->axpy(n, a, x, y);
}

double dot(const double* a, const double* b, std::size_t n) {
    return active_table()->dot(a, b, n);
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    return active_table()->sum_sq_diff(a, b, n);
}

void weighted_row_sum(const double* rows, const double* w, double* out,
                      std::size_t m, std::size_t d) {
    active_table()->weighted_row_sum(rows, w, out, m, d);
}

void adam_update(std::size_t n, double* p, const double* g, double* m,
                 double* v, double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2) {
    active_table()->adam_update(n, p, g, m, v, lr, beta1, beta2, eps, bias1, bias2);
}

}  // namespace demorl::kernels
