#pragma once

#include <cstddef>

namespace demorl::kernels {

struct KernelTable {
    void (*matvec)(const double*, const double*, const double*, double*,
                   std::size_t, std::size_t);
    void (*matvec_t_acc)(const double*, const double*, double*, std::size_t,
                         std::size_t);
    void (*outer_acc)(const double*, const double*, double*, std::size_t,
                      std::size_t);
    void (*axpy)(std::size_t, double, const double*, double*);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum_sq_diff)(const double*, const double*, std::size_t);
    void (*weighted_row_sum)(const double*, const double*, double*,
                             std::size_t, std::size_t);
    void (*adam_update)(std::size_t, double*, const double*, double*, double*,
                        double, double, double, double, double, double);
};

namespace detail {
// nullptr when the host CPU (or the build target) lacks AVX2/FMA.
const KernelTable* avx2_table();
}

}  // namespace demorl::kernels
