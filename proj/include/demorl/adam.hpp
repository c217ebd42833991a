#pragma once

#include <span>
#include <vector>

#include "demorl/mlp.hpp"

namespace demorl {

struct AdamHyper {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Moments mirror the parameter tensors they optimize, in order.
struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    long step_count = 0;
    AdamHyper hyper;

    static AdamState for_sizes(const std::vector<std::size_t>& tensor_sizes,
                               AdamHyper hyper = {});
    static AdamState for_mlp(const Mlp& net, AdamHyper hyper = {});
};

// Single-tensor update (state must have exactly one moment pair).
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state);

// Applies one bias-corrected step across an Mlp's weights and biases.
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

}  // namespace demorl
