#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "demorl/matrix.hpp"

namespace demorl {

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1 };
enum class OutputActivation : std::uint8_t { Identity = 0, Tanh = 1 };

// Fully-connected network; weights[i] maps layer i (cols) to layer i+1 (rows).
struct Mlp {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    Activation hidden_activation = Activation::Tanh;
    OutputActivation output_activation = OutputActivation::Identity;

    static Mlp xavier(const std::vector<std::size_t>& sizes, std::uint64_t seed,
                      Activation hidden = Activation::Tanh,
                      OutputActivation output = OutputActivation::Identity);

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;
};

// Parameter-shaped gradient bundle plus the gradient w.r.t. the input
// (needed when a network feeds another, e.g. critic -> actor).
struct MlpGrads {
    std::vector<Matrix> weight_grads;
    std::vector<std::vector<double>> bias_grads;
    std::vector<double> input_grad;

    static MlpGrads zeros_like(const Mlp& net);
    void accumulate(const MlpGrads& other);
    void scale(double s);
};

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input);

// d(upstream . output)/d(params), exact reverse-mode.
MlpGrads mlp_gradients(const Mlp& net, std::span<const double> input,
                       std::span<const double> upstream);

// Versioned little-endian binary parameter format; see docs/formats.md.
void save_mlp(std::ostream& out, const Mlp& net);
Mlp load_mlp(std::istream& in);
void save_mlp_file(const std::string& path, const Mlp& net);
Mlp load_mlp_file(const std::string& path);

}  // namespace demorl
