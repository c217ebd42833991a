#include "demorl/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "demorl/kernels.hpp"
#include "demorl/rng.hpp"

namespace demorl {

namespace {

void check_net(const Mlp& net) {
    require(net.layer_sizes.size() >= 2, "Mlp: need at least input and output layers");
    require(net.weights.size() == net.layer_sizes.size() - 1 &&
                net.biases.size() == net.weights.size(),
            "Mlp: weights/biases count does not match layer_sizes");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const Matrix& w = net.weights[l];
        require(w.rows == net.layer_sizes[l + 1] && w.cols == net.layer_sizes[l],
                "Mlp: weight " + std::to_string(l) + " has shape " +
                    std::to_string(w.rows) + "x" + std::to_string(w.cols) +
                    ", expected " + std::to_string(net.layer_sizes[l + 1]) + "x" +
                    std::to_string(net.layer_sizes[l]));
        require(net.biases[l].size() == net.layer_sizes[l + 1],
                "Mlp: bias " + std::to_string(l) + " length mismatch");
    }
}

void check_input(const Mlp& net, std::span<const double> input) {
    require(input.size() == net.input_dim(),
            "Mlp: input length " + std::to_string(input.size()) +
                " != layer_sizes[0] = " + std::to_string(net.input_dim()));
}

inline double activate(double z, Activation a) {
    return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the post-activation value.
inline double activate_grad(double post, double pre, Activation a) {
    return a == Activation::Tanh ? 1.0 - post * post : (pre > 0.0 ? 1.0 : 0.0);
}

}  // namespace

Mlp Mlp::xavier(const std::vector<std::size_t>& sizes, std::uint64_t seed,
                Activation hidden, OutputActivation output) {
    require(sizes.size() >= 2, "Mlp::xavier: need at least two layer sizes");
    Mlp net;
    net.layer_sizes = sizes;
    net.hidden_activation = hidden;
    net.output_activation = output;
    Rng rng = make_rng(seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t fan_in = sizes[l];
        const std::size_t fan_out = sizes[l + 1];
        const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Matrix w(fan_out, fan_in);
        for (double& x : w.data) x = dist(rng);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
    MlpGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weight_grads.emplace_back(net.weights[l].rows, net.weights[l].cols);
        g.bias_grads.emplace_back(net.biases[l].size(), 0.0);
    }
    g.input_grad.assign(net.input_dim(), 0.0);
    return g;
}

void MlpGrads::accumulate(const MlpGrads& other) {
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
        kernels::axpy(weight_grads[l].size(), 1.0, other.weight_grads[l].ptr(),
                      weight_grads[l].ptr());
        kernels::axpy(bias_grads[l].size(), 1.0, other.bias_grads[l].data(),
                      bias_grads[l].data());
    }
    kernels::axpy(input_grad.size(), 1.0, other.input_grad.data(), input_grad.data());
}

void MlpGrads::scale(double s) {
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
        for (double& x : weight_grads[l].data) x *= s;
        for (double& x : bias_grads[l]) x *= s;
    }
    for (double& x : input_grad) x *= s;
}

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input) {
    check_net(net);
    check_input(net, input);
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const Matrix& w = net.weights[l];
        next.assign(w.rows, 0.0);
        kernels::matvec(w.ptr(), cur.data(), net.biases[l].data(), next.data(),
                        w.rows, w.cols);
        const bool last = (l + 1 == net.weights.size());
        if (!last) {
            for (double& z : next) z = activate(z, net.hidden_activation);
        } else if (net.output_activation == OutputActivation::Tanh) {
            for (double& z : next) z = std::tanh(z);
        }
        cur.swap(next);
    }
    return cur;
}

MlpGrads mlp_gradients(const Mlp& net, std::span<const double> input,
                       std::span<const double> upstream) {
    check_net(net);
    check_input(net, input);
    require(upstream.size() == net.output_dim(),
            "mlp_gradients: upstream length " + std::to_string(upstream.size()) +
                " != output dim " + std::to_string(net.output_dim()));

    const std::size_t layers = net.weights.size();
    // pre[l] = W_l post[l] + b_l before activation; post[0] = input.
    std::vector<std::vector<double>> post(layers + 1), pre(layers);
    post[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& w = net.weights[l];
        pre[l].assign(w.rows, 0.0);
        kernels::matvec(w.ptr(), post[l].data(), net.biases[l].data(),
                        pre[l].data(), w.rows, w.cols);
        post[l + 1] = pre[l];
        const bool last = (l + 1 == layers);
        if (!last) {
            for (double& z : post[l + 1]) z = activate(z, net.hidden_activation);
        } else if (net.output_activation == OutputActivation::Tanh) {
            for (double& z : post[l + 1]) z = std::tanh(z);
        }
        if (!all_finite(post[l + 1]))
            throw std::runtime_error("mlp_gradients: non-finite activation at layer " +
                                     std::to_string(l));
    }

    MlpGrads grads = MlpGrads::zeros_like(net);
    std::vector<double> delta(upstream.begin(), upstream.end());
    if (net.output_activation == OutputActivation::Tanh) {
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] *= 1.0 - post[layers][i] * post[layers][i];
    }
    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& w = net.weights[l];
        kernels::outer_acc(delta.data(), post[l].data(), grads.weight_grads[l].ptr(),
                           w.rows, w.cols);
        kernels::axpy(w.rows, 1.0, delta.data(), grads.bias_grads[l].data());
        std::vector<double> prev_delta(w.cols, 0.0);
        kernels::matvec_t_acc(w.ptr(), delta.data(), prev_delta.data(), w.rows, w.cols);
        if (l > 0) {
            for (std::size_t j = 0; j < prev_delta.size(); ++j)
                prev_delta[j] *= activate_grad(post[l][j], pre[l - 1][j],
                                               net.hidden_activation);
        }
        if (!all_finite(prev_delta))
            throw std::runtime_error("mlp_gradients: non-finite gradient at layer " +
                                     std::to_string(l));
        delta.swap(prev_delta);
    }
    grads.input_grad = std::move(delta);
    return grads;
}

namespace {

constexpr char kMagic[4] = {'D', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("mlp load: truncated stream");
    return v;
}

}  // namespace

void save_mlp(std::ostream& out, const Mlp& net) {
    check_net(net);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (std::size_t s : net.layer_sizes) write_pod(out, static_cast<std::uint64_t>(s));
    write_pod(out, static_cast<std::uint8_t>(net.hidden_activation));
    write_pod(out, static_cast<std::uint8_t>(net.output_activation));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        out.write(reinterpret_cast<const char*>(net.weights[l].ptr()),
                  std::streamsize(net.weights[l].size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(net.biases[l].data()),
                  std::streamsize(net.biases[l].size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("mlp save: write failed");
}

Mlp load_mlp(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("mlp load: bad magic");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("mlp load: unsupported version " + std::to_string(version));
    const auto n_sizes = read_pod<std::uint32_t>(in);
    if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("mlp load: bad layer count");
    Mlp net;
    for (std::uint32_t i = 0; i < n_sizes; ++i)
        net.layer_sizes.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in)));
    net.hidden_activation = static_cast<Activation>(read_pod<std::uint8_t>(in));
    net.output_activation = static_cast<OutputActivation>(read_pod<std::uint8_t>(in));
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        Matrix w(net.layer_sizes[l + 1], net.layer_sizes[l]);
        in.read(reinterpret_cast<char*>(w.ptr()), std::streamsize(w.size() * sizeof(double)));
        std::vector<double> b(net.layer_sizes[l + 1]);
        in.read(reinterpret_cast<char*>(b.data()), std::streamsize(b.size() * sizeof(double)));
        if (!in) throw std::runtime_error("mlp load: truncated parameters");
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    check_net(net);
    return net;
}

void save_mlp_file(const std::string& path, const Mlp& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("mlp save: cannot open " + path);
    save_mlp(out, net);
}

Mlp load_mlp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("mlp load: cannot open " + path);
    return load_mlp(in);
}

}  // namespace demorl
