#include "demorl/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "demorl/adam.hpp"
#include "demorl/kernels.hpp"

namespace demorl {

Normalizer Normalizer::identity(std::size_t dim) {
    return {VecD(dim, 0.0), VecD(dim, 1.0)};
}

Normalizer Normalizer::fit(const std::vector<VecD>& rows, double scale_floor) {
    require(!rows.empty(), "Normalizer::fit: no data");
    const std::size_t dim = rows[0].size();
    Normalizer n{VecD(dim, 0.0), VecD(dim, 0.0)};
    for (const VecD& r : rows)
        for (std::size_t j = 0; j < dim; ++j) n.mean[j] += r[j];
    for (std::size_t j = 0; j < dim; ++j) n.mean[j] /= double(rows.size());
    for (const VecD& r : rows)
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = r[j] - n.mean[j];
            n.scale[j] += d * d;
        }
    for (std::size_t j = 0; j < dim; ++j)
        n.scale[j] = std::max(std::sqrt(n.scale[j] / double(rows.size())), scale_floor);
    return n;
}

VecD Normalizer::normalize(std::span<const double> x) const {
    require(x.size() == mean.size(), "Normalizer: dimension mismatch");
    VecD z(x.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = (x[j] - mean[j]) / scale[j];
    return z;
}

VecD Normalizer::denormalize(std::span<const double> z) const {
    require(z.size() == mean.size(), "Normalizer: dimension mismatch");
    VecD x(z.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = z[j] * scale[j] + mean[j];
    return x;
}

EnsembleModel EnsembleModel::create(std::size_t state_dim, std::size_t action_dim,
                                    std::size_t ensemble_size,
                                    const std::vector<std::size_t>& hidden,
                                    std::uint64_t seed) {
    require(ensemble_size >= 1, "EnsembleModel: need K >= 1");
    EnsembleModel m;
    m.state_dim = state_dim;
    m.action_dim = action_dim;
    m.input_norm = Normalizer::identity(state_dim + action_dim);
    m.delta_norm = Normalizer::identity(state_dim);
    std::vector<std::size_t> sizes{state_dim + action_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(state_dim);
    for (std::size_t k = 0; k < ensemble_size; ++k)
        m.members.push_back(Mlp::xavier(sizes, derive_seed(seed, "member", k)));
    m.val_losses.assign(ensemble_size, 0.0);
    return m;
}

namespace {

double member_mse(const Mlp& net, const std::vector<VecD>& inputs,
                  const std::vector<VecD>& targets,
                  const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i : idx) {
        const VecD out = mlp_forward(net, inputs[i]);
        total += kernels::sum_sq_diff(out.data(), targets[i].data(), out.size());
        count += out.size();
    }
    return total / double(count);
}

}  // namespace

EnsembleTrainReport train_ensemble(EnsembleModel& model, const ReplayBuffer& d_env,
                                   std::size_t epochs, std::uint64_t seed,
                                   const EnsembleTrainConfig& cfg) {
    const std::size_t n = d_env.size();
    if (n < cfg.min_data)
        throw std::runtime_error("train_ensemble: insufficient data (" +
                                 std::to_string(n) + " < " +
                                 std::to_string(cfg.min_data) + ")");

    std::vector<VecD> inputs(n), deltas(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Transition& t = d_env.at(i);
        VecD in(t.x);
        in.insert(in.end(), t.u.begin(), t.u.end());
        VecD d(t.x_next.size());
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = t.x_next[j] - t.x[j];
        inputs[i] = std::move(in);
        deltas[i] = std::move(d);
    }
    model.input_norm = Normalizer::fit(inputs);
    model.delta_norm = Normalizer::fit(deltas);
    for (std::size_t i = 0; i < n; ++i) {
        inputs[i] = model.input_norm.normalize(inputs[i]);
        deltas[i] = model.delta_norm.normalize(deltas[i]);
    }

    EnsembleTrainReport report;
    report.epoch_losses.resize(model.size());

    for (std::size_t k = 0; k < model.size(); ++k) {
        Rng rng = make_rng(derive_seed(seed, "train", k));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t holdout_n =
            n >= 10 ? std::size_t(std::ceil(cfg.holdout_fraction * double(n))) : 0;
        std::vector<std::size_t> holdout(order.begin(), order.begin() + holdout_n);
        std::vector<std::size_t> pool(order.begin() + holdout_n, order.end());

        // Bootstrap resample of the training pool decorrelates members.
        std::vector<std::size_t> boot(pool.size());
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t& b : boot) b = pool[pick(rng)];

        Mlp& net = model.members[k];
        AdamState opt = AdamState::for_mlp(net, {.learning_rate = cfg.learning_rate});
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            std::shuffle(boot.begin(), boot.end(), rng);
            double epoch_loss = 0.0;
            std::size_t epoch_terms = 0;
            try {
                for (std::size_t start = 0; start < boot.size();
                     start += cfg.batch_size) {
                    const std::size_t stop = std::min(start + cfg.batch_size, boot.size());
                    MlpGrads grads = MlpGrads::zeros_like(net);
                    const double inv = 1.0 / double(stop - start);
                    for (std::size_t b = start; b < stop; ++b) {
                        const std::size_t i = boot[b];
                        const VecD out = mlp_forward(net, inputs[i]);
                        VecD upstream(out.size());
                        for (std::size_t j = 0; j < out.size(); ++j) {
                            const double err = out[j] - deltas[i][j];
                            upstream[j] = 2.0 * err * inv;
                            epoch_loss += err * err;
                        }
                        epoch_terms += out.size();
                        grads.accumulate(mlp_gradients(net, inputs[i], upstream));
                    }
                    adam_step(net, grads, opt);
                }
            } catch (const std::runtime_error& err) {
                throw std::runtime_error("train_ensemble: divergent loss in member " +
                                         std::to_string(k) + " (" + err.what() + ")");
            }
            const double mean_loss =
                epoch_terms ? epoch_loss / double(epoch_terms) : 0.0;
            if (!std::isfinite(mean_loss))
                throw std::runtime_error("train_ensemble: divergent loss in member " +
                                         std::to_string(k));
            report.epoch_losses[k].push_back(mean_loss);
        }
        model.val_losses[k] =
            holdout.empty() ? member_mse(net, inputs, deltas, boot)
                            : member_mse(net, inputs, deltas, holdout);
    }
    return report;
}

std::vector<std::size_t> select_members(const EnsembleModel& model, std::size_t count) {
    require(count >= 1 && count <= model.size(),
            "select_members: count must be in [1, K]");
    std::vector<std::size_t> idx(model.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (model.val_losses[a] != model.val_losses[b])
            return model.val_losses[a] < model.val_losses[b];
        return a < b;
    });
    idx.resize(count);
    return idx;
}

VecD ensemble_predict(const EnsembleModel& model, std::span<const std::size_t> members,
                      std::span<const double> x, std::span<const double> u, Rng& rng) {
    require(!members.empty(), "ensemble_predict: empty member set");
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const std::size_t k = members[pick(rng)];
    require(k < model.size(), "ensemble_predict: member index out of range");
    VecD in(x.begin(), x.end());
    in.insert(in.end(), u.begin(), u.end());
    const VecD z = model.input_norm.normalize(in);
    const VecD delta = model.delta_norm.denormalize(mlp_forward(model.members[k], z));
    VecD x_next(x.size());
    for (std::size_t j = 0; j < x_next.size(); ++j) x_next[j] = x[j] + delta[j];
    if (!all_finite(x_next))
        throw std::runtime_error("ensemble_predict: non-finite prediction from member " +
                                 std::to_string(k));
    return x_next;
}

VecD ensemble_predict(const EnsembleModel& model, std::span<const std::size_t> members,
                      std::span<const double> x, std::span<const double> u,
                      std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return ensemble_predict(model, members, x, u, rng);
}

namespace {

constexpr char kMagic[4] = {'D', 'E', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("ensemble load: truncated stream");
    return v;
}

void write_vec(std::ostream& out, const VecD& v) {
    write_pod(out, std::uint64_t(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              std::streamsize(v.size() * sizeof(double)));
}

VecD read_vec(std::istream& in) {
    VecD v(std::size_t(read_pod<std::uint64_t>(in)));
    in.read(reinterpret_cast<char*>(v.data()),
            std::streamsize(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("ensemble load: truncated vector");
    return v;
}

}  // namespace

void save_ensemble(std::ostream& out, const EnsembleModel& model) {
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, std::uint64_t(model.size()));
    write_pod(out, std::uint64_t(model.state_dim));
    write_pod(out, std::uint64_t(model.action_dim));
    write_vec(out, model.input_norm.mean);
    write_vec(out, model.input_norm.scale);
    write_vec(out, model.delta_norm.mean);
    write_vec(out, model.delta_norm.scale);
    write_vec(out, model.val_losses);
    for (const Mlp& net : model.members) save_mlp(out, net);
    if (!out) throw std::runtime_error("ensemble save: write failed");
}

EnsembleModel load_ensemble(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("ensemble load: bad magic");
    if (read_pod<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("ensemble load: unsupported version");
    EnsembleModel m;
    const auto count = std::size_t(read_pod<std::uint64_t>(in));
    m.state_dim = std::size_t(read_pod<std::uint64_t>(in));
    m.action_dim = std::size_t(read_pod<std::uint64_t>(in));
    m.input_norm.mean = read_vec(in);
    m.input_norm.scale = read_vec(in);
    m.delta_norm.mean = read_vec(in);
    m.delta_norm.scale = read_vec(in);
    m.val_losses = read_vec(in);
    for (std::size_t k = 0; k < count; ++k) m.members.push_back(load_mlp(in));
    return m;
}

void save_ensemble_file(const std::string& path, const EnsembleModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("ensemble save: cannot open " + path);
    save_ensemble(out, model);
}

EnsembleModel load_ensemble_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ensemble load: cannot open " + path);
    return load_ensemble(in);
}

}  // namespace demorl
