#pragma once

#include <cstddef>

// Dense inner-loop primitives behind the network and planner math.
// Every kernel has a scalar reference implementation and, on x86-64 with
// AVX2+FMA, a vectorized variant; the backend is picked once at runtime
// (override with DEMORL_KERNELS=scalar|avx2). The two lanes are held to
// agree within reassociation tolerance by tests/test_kernels.cpp.
namespace demorl::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
const char* backend_name();
// Force a backend; returns false (and leaves the selection unchanged)
// if the requested one is not supported on this machine.
bool set_backend(Backend b);
bool avx2_supported();

// y = W x (+ b); W is row-major rows x cols, b may be nullptr.
void matvec(const double* w, const double* x, const double* b, double* y,
            std::size_t rows, std::size_t cols);

// acc += W^T g; the backward pass through a linear layer.
void matvec_t_acc(const double* w, const double* g, double* acc,
                  std::size_t rows, std::size_t cols);

// dw += g x^T; weight-gradient accumulation.
void outer_acc(const double* g, const double* x, double* dw,
               std::size_t rows, std::size_t cols);

// y += a * x
void axpy(std::size_t n, double a, const double* x, double* y);

double dot(const double* a, const double* b, std::size_t n);

// sum_i (a_i - b_i)^2
double sum_sq_diff(const double* a, const double* b, std::size_t n);

// out[j] = sum_i w[i] * rows[i*d + j]; the weighted-mean reduction used
// by the elite/MPPI updates.
void weighted_row_sum(const double* rows, const double* w, double* out,
                      std::size_t m, std::size_t d);

// Bias-corrected Adam, elementwise over n parameters. bias1/bias2 are the
// precomputed 1 - beta^t correction factors for the current step.
void adam_update(std::size_t n, double* p, const double* g, double* m,
                 double* v, double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2);

}  // namespace demorl::kernels
