#include "demorl/adam.hpp"

#include <cmath>

#include "demorl/kernels.hpp"

namespace demorl {

AdamState AdamState::for_sizes(const std::vector<std::size_t>& tensor_sizes,
                               AdamHyper hyper) {
    AdamState st;
    st.hyper = hyper;
    for (std::size_t n : tensor_sizes) {
        st.first_moment.emplace_back(n, 0.0);
        st.second_moment.emplace_back(n, 0.0);
    }
    return st;
}

AdamState AdamState::for_mlp(const Mlp& net, AdamHyper hyper) {
    std::vector<std::size_t> sizes;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        sizes.push_back(net.weights[l].size());
        sizes.push_back(net.biases[l].size());
    }
    return for_sizes(sizes, hyper);
}

namespace {

void step_tensor(double* p, const double* g, std::vector<double>& m,
                 std::vector<double>& v, const AdamHyper& h, long t) {
    const double bias1 = 1.0 - std::pow(h.beta1, double(t));
    const double bias2 = 1.0 - std::pow(h.beta2, double(t));
    kernels::adam_update(m.size(), p, g, m.data(), v.data(), h.learning_rate,
                         h.beta1, h.beta2, h.epsilon, bias1, bias2);
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state) {
    require(state.first_moment.size() == 1,
            "adam_step(span): state must hold exactly one tensor");
    require(params.size() == grads.size() &&
                params.size() == state.first_moment[0].size(),
            "adam_step: parameter/gradient/moment sizes disagree");
    ++state.step_count;
    step_tensor(params.data(), grads.data(), state.first_moment[0],
                state.second_moment[0], state.hyper, state.step_count);
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state) {
    require(state.first_moment.size() == 2 * net.weights.size(),
            "adam_step(mlp): moment count does not match network");
    ++state.step_count;
    std::size_t k = 0;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        require(net.weights[l].same_shape(grads.weight_grads[l]) &&
                    net.biases[l].size() == grads.bias_grads[l].size(),
                "adam_step: gradient shapes do not match network layer " +
                    std::to_string(l));
        step_tensor(net.weights[l].ptr(), grads.weight_grads[l].ptr(),
                    state.first_moment[k], state.second_moment[k], state.hyper,
                    state.step_count);
        ++k;
        step_tensor(net.biases[l].data(), grads.bias_grads[l].data(),
                    state.first_moment[k], state.second_moment[k], state.hyper,
                    state.step_count);
        ++k;
    }
}

}  // namespace demorl
