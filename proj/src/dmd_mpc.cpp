#include "demorl/dmd_mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "demorl/kernels.hpp"

namespace demorl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

VecD ActionBounds::clip(VecD u) const {
    require(u.size() == low.size(), "ActionBounds: dimension mismatch");
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = clamp(u[j], low[j], high[j]);
    return u;
}

void ActionBounds::clip_rows(Matrix& m) const {
    require(m.cols == low.size(), "ActionBounds: matrix column mismatch");
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            m.at(i, j) = clamp(m.at(i, j), low[j], high[j]);
}

VecD ActionBounds::range() const {
    VecD r(low.size());
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = high[j] - low[j];
    return r;
}

GaussianControlSequence GaussianControlSequence::zeros(std::size_t horizon,
                                                       std::size_t action_dim,
                                                       VecD variance) {
    GaussianControlSequence seq{Matrix(horizon, action_dim), std::move(variance)};
    seq.validate();
    return seq;
}

void GaussianControlSequence::validate() const {
    require(mean.rows >= 1 && mean.cols >= 1, "GaussianControlSequence: empty mean");
    require(variance.size() == mean.cols,
            "GaussianControlSequence: variance length must equal action dim");
    for (double v : variance)
        require(v > 0.0, "GaussianControlSequence: variance entries must be > 0");
}

void MpcConfig::validate() const {
    require(horizon >= 1, "MpcConfig: horizon must be >= 1");
    require(rollouts >= 1, "MpcConfig: rollouts must be >= 1");
    require(step_size >= 0.0 && step_size <= 1.0, "MpcConfig: alpha must be in [0,1]");
    require(elite_fraction > 0.0 && elite_fraction <= 1.0,
            "MpcConfig: elite_fraction must be in (0,1]");
    require(elite_fraction * double(rollouts) >= 1.0,
            "MpcConfig: p * M must be >= 1");
    require(temperature > 0.0, "MpcConfig: lambda must be > 0");
    require(discount > 0.0 && discount <= 1.0, "MpcConfig: discount must be in (0,1]");
    require(sigma_scale > 0.0, "MpcConfig: sigma_scale must be > 0");
}

VecD MpcConfig::control_variance(const ActionBounds& bounds) const {
    VecD var(bounds.dim());
    const VecD range = bounds.range();
    for (std::size_t j = 0; j < var.size(); ++j) {
        const double sd = sigma_scale * range[j];
        var[j] = sd * sd;
    }
    return var;
}

double total_cost(const Matrix& states, const Matrix& controls, const CostFn& cost,
                  const TerminalValueFn* terminal_value, double discount,
                  std::size_t horizon) {
    require(controls.rows == horizon, "total_cost: controls must have H rows");
    require(states.rows == horizon + 1, "total_cost: states must have H+1 rows");
    double acc = 0.0;
    double gamma_h = 1.0;
    for (std::size_t h = 0; h < horizon; ++h) {
        const double c = cost(states.row(h), controls.row(h));
        if (!std::isfinite(c)) throw std::runtime_error("total_cost: non-finite stage cost");
        acc += gamma_h * c;
        gamma_h *= discount;
    }
    if (terminal_value && *terminal_value)
        acc += gamma_h * -(*terminal_value)(states.row(horizon));
    return acc;
}

GaussianControlSequence left_shift(const GaussianControlSequence& prev) {
    prev.validate();
    GaussianControlSequence out = prev;
    const std::size_t h_last = prev.horizon() - 1;
    for (std::size_t h = 0; h < h_last; ++h)
        for (std::size_t j = 0; j < prev.action_dim(); ++j)
            out.mean.at(h, j) = prev.mean.at(h + 1, j);
    // last row repeats the previous final mean (already in place after copy)
    return out;
}

GaussianControlSequence policy_shift(const PolicyFn& policy, const DynamicsModel& model,
                                     std::span<const double> x0, std::size_t horizon,
                                     VecD variance, const ActionBounds& bounds, Rng& rng) {
    require(static_cast<bool>(policy), "policy_shift: policy is required");
    GaussianControlSequence seq =
        GaussianControlSequence::zeros(horizon, bounds.dim(), std::move(variance));
    VecD x(x0.begin(), x0.end());
    for (std::size_t h = 0; h < horizon; ++h) {
        const VecD u = bounds.clip(policy(x));
        require(u.size() == bounds.dim(), "policy_shift: policy action dim mismatch");
        for (std::size_t j = 0; j < u.size(); ++j) seq.mean.at(h, j) = u[j];
        x = model.predict(x, u, rng);
    }
    return seq;
}

GaussianControlSequence shift_sequence(const GaussianControlSequence* prev,
                                       const PolicyFn* policy, const DynamicsModel* model,
                                       std::span<const double> x0, ShiftMode mode,
                                       std::size_t horizon, VecD variance,
                                       const ActionBounds& bounds, Rng& rng) {
    if (mode == ShiftMode::LeftShift) {
        if (prev) {
            require(prev->horizon() == horizon, "shift_sequence: horizon changed");
            return left_shift(*prev);
        }
        return GaussianControlSequence::zeros(horizon, bounds.dim(), std::move(variance));
    }
    require(policy != nullptr && *policy, "shift_sequence: policy_shift needs a policy");
    require(model != nullptr, "shift_sequence: policy_shift needs a model");
    return policy_shift(*policy, *model, x0, horizon, std::move(variance), bounds, rng);
}

RolloutBatch sample_rollouts(const DynamicsModel& model, std::span<const double> x0,
                             const GaussianControlSequence& seq, std::size_t count,
                             std::uint64_t seed, const CostFn& cost,
                             const TerminalValueFn* terminal_value, double discount,
                             const ActionBounds& bounds, double blowup_bound) {
    seq.validate();
    require(x0.size() == model.state_dim(), "sample_rollouts: x0 dimension mismatch");
    require(seq.action_dim() == model.action_dim(),
            "sample_rollouts: action dimension mismatch");
    const std::size_t horizon = seq.horizon();
    const std::size_t n = model.state_dim();
    const std::size_t m = seq.action_dim();

    VecD stddev(m);
    for (std::size_t j = 0; j < m; ++j) stddev[j] = std::sqrt(seq.variance[j]);

    RolloutBatch batch;
    batch.states.assign(count, Matrix(horizon + 1, n));
    batch.controls.assign(count, Matrix(horizon, m));
    batch.costs.assign(count, 0.0);

    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = make_rng(derive_seed(seed, "rollout", i));
        Matrix& states = batch.states[i];
        Matrix& controls = batch.controls[i];
        for (std::size_t j = 0; j < n; ++j) states.at(0, j) = x0[j];
        VecD x(x0.begin(), x0.end());
        bool diverged = false;
        for (std::size_t h = 0; h < horizon; ++h) {
            VecD u(m);
            for (std::size_t j = 0; j < m; ++j)
                u[j] = seq.mean.at(h, j) + stddev[j] * unit(rng);
            u = bounds.clip(std::move(u));
            for (std::size_t j = 0; j < m; ++j) controls.at(h, j) = u[j];
            x = model.predict(x, u, rng);
            for (double v : x)
                if (!std::isfinite(v) || std::abs(v) > blowup_bound) diverged = true;
            if (diverged) {
                // freeze the trajectory at the last sane state; cost is a
                // +inf sentinel so the update ignores this rollout
                for (std::size_t hh = h + 1; hh <= horizon; ++hh)
                    for (std::size_t j = 0; j < n; ++j)
                        states.at(hh, j) = states.at(h, j);
                for (std::size_t hh = h; hh < horizon; ++hh)
                    for (std::size_t j = 0; j < m; ++j)
                        controls.at(hh, j) = seq.mean.at(hh, j);
                break;
            }
            for (std::size_t j = 0; j < n; ++j) states.at(h + 1, j) = x[j];
        }
        batch.costs[i] = diverged ? kInf
                                  : total_cost(states, controls, cost, terminal_value,
                                               discount, horizon);
    }
    return batch;
}

std::vector<std::size_t> elite_indices(const VecD& costs, std::size_t elite_count) {
    require(elite_count >= 1 && elite_count <= costs.size(),
            "elite_indices: bad elite count");
    std::vector<std::size_t> idx(costs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (costs[a] != costs[b]) return costs[a] < costs[b];
        return a < b;
    });
    idx.resize(elite_count);
    return idx;
}

namespace {

// Weighted mean of the chosen control sequences, flattened to H*m.
VecD weighted_control_mean(const RolloutBatch& batch,
                           const std::vector<std::size_t>& chosen, const VecD& weights) {
    const std::size_t flat = batch.controls[0].size();
    Matrix stacked(chosen.size(), flat);
    for (std::size_t r = 0; r < chosen.size(); ++r)
        std::copy_n(batch.controls[chosen[r]].ptr(), flat, stacked.row_ptr(r));
    VecD out(flat, 0.0);
    kernels::weighted_row_sum(stacked.ptr(), weights.data(), out.data(),
                              chosen.size(), flat);
    return out;
}

GaussianControlSequence blend(const GaussianControlSequence& shifted, const VecD& g_flat,
                              double alpha, const ActionBounds& bounds) {
    GaussianControlSequence out = shifted;
    for (std::size_t k = 0; k < g_flat.size(); ++k)
        out.mean.data[k] = (1.0 - alpha) * shifted.mean.data[k] + alpha * g_flat[k];
    bounds.clip_rows(out.mean);
    return out;
}

VecD exp_weights(const VecD& costs, const std::vector<std::size_t>& chosen,
                 double temperature) {
    double c_min = kInf;
    for (std::size_t i : chosen) c_min = std::min(c_min, costs[i]);
    VecD w(chosen.size());
    double total = 0.0;
    for (std::size_t r = 0; r < chosen.size(); ++r) {
        w[r] = std::exp(-(costs[chosen[r]] - c_min) / temperature);
        total += w[r];
    }
    for (double& x : w) x /= total;
    return w;
}

}  // namespace

GaussianControlSequence cem_update(const GaussianControlSequence& shifted,
                                   const RolloutBatch& batch, double step_size,
                                   double elite_fraction, double temperature,
                                   EliteWeighting weighting, const ActionBounds& bounds) {
    shifted.validate();
    require(step_size >= 0.0 && step_size <= 1.0, "cem_update: alpha must be in [0,1]");
    require(elite_fraction > 0.0 && elite_fraction <= 1.0,
            "cem_update: elite fraction must be in (0,1]");
    require(temperature > 0.0, "cem_update: lambda must be > 0");
    require(!batch.controls.empty() && batch.controls[0].rows == shifted.horizon() &&
                batch.controls[0].cols == shifted.action_dim(),
            "cem_update: batch shape does not match sequence");

    const std::size_t m_total = batch.size();
    const std::size_t elite_count =
        std::size_t(std::ceil(elite_fraction * double(m_total)));
    std::size_t finite = 0;
    for (double c : batch.costs) finite += std::isfinite(c) ? 1 : 0;
    if (finite < elite_count)
        throw std::runtime_error("cem_update: only " + std::to_string(finite) +
                                 " finite-cost rollouts for " +
                                 std::to_string(elite_count) + " elites");

    const std::vector<std::size_t> elites = elite_indices(batch.costs, elite_count);

    VecD weights;
    if (weighting == EliteWeighting::Literal) {
        // Eq. as printed: g = sum(C_i U_i) / sum(C_i) over the elites.
        double c_lo = kInf, c_hi = -kInf, c_sum = 0.0;
        for (std::size_t i : elites) {
            c_lo = std::min(c_lo, batch.costs[i]);
            c_hi = std::max(c_hi, batch.costs[i]);
            c_sum += batch.costs[i];
        }
        if (c_lo < 0.0 && c_hi > 0.0)
            throw std::runtime_error(
                "cem_update: literal cost weighting is ill-defined for mixed-sign "
                "elite costs; use exp weighting");
        if (c_sum == 0.0)
            throw std::runtime_error(
                "cem_update: literal cost weighting divides by zero total cost; "
                "use exp weighting");
        weights.resize(elites.size());
        for (std::size_t r = 0; r < elites.size(); ++r)
            weights[r] = batch.costs[elites[r]] / c_sum;
    } else {
        weights = exp_weights(batch.costs, elites, temperature);
    }

    const VecD g = weighted_control_mean(batch, elites, weights);
    return blend(shifted, g, step_size, bounds);
}

GaussianControlSequence mppi_update(const GaussianControlSequence& shifted,
                                    const RolloutBatch& batch, double temperature,
                                    const ActionBounds& bounds) {
    shifted.validate();
    require(temperature > 0.0, "mppi_update: lambda must be > 0");
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (std::isfinite(batch.costs[i])) chosen.push_back(i);
    if (chosen.empty()) throw std::runtime_error("mppi_update: all rollout costs are +inf");
    const VecD weights = exp_weights(batch.costs, chosen, temperature);
    const VecD g = weighted_control_mean(batch, chosen, weights);
    return blend(shifted, g, 1.0, bounds);
}

double kl_gaussian_mean(std::span<const double> mean_a, std::span<const double> mean_b,
                        std::span<const double> variance) {
    require(mean_a.size() == mean_b.size() && !variance.empty(),
            "kl_gaussian: shape mismatch");
    require(mean_a.size() % variance.size() == 0, "kl_gaussian: variance length");
    double acc = 0.0;
    const std::size_t m = variance.size();
    for (std::size_t k = 0; k < mean_a.size(); ++k) {
        const double d = mean_a[k] - mean_b[k];
        acc += d * d / (2.0 * variance[k % m]);
    }
    return acc;
}

double kl_gaussian(const GaussianControlSequence& a, const GaussianControlSequence& b) {
    a.validate();
    b.validate();
    require(a.mean.same_shape(b.mean), "kl_gaussian: mean shapes differ");
    require(a.variance == b.variance, "kl_gaussian: covariances must be equal");
    return kl_gaussian_mean(a.mean.data, b.mean.data, a.variance);
}

PlanResult plan_step(const DynamicsModel& model, std::span<const double> x0,
                     const GaussianControlSequence* prev, const PolicyFn* policy,
                     const MpcConfig& cfg, const ActionBounds& bounds, const CostFn& cost,
                     const TerminalValueFn* terminal_value, std::uint64_t seed) {
    cfg.validate();
    Rng shift_rng = make_rng(derive_seed(seed, "shift"));
    GaussianControlSequence shifted =
        shift_sequence(prev, policy, &model, x0, cfg.shift, cfg.horizon,
                       prev ? prev->variance : cfg.control_variance(bounds), bounds,
                       shift_rng);
    const RolloutBatch batch =
        sample_rollouts(model, x0, shifted, cfg.rollouts, derive_seed(seed, "batch"),
                        cost, terminal_value, cfg.discount, bounds, cfg.blowup_bound);
    PlanResult res;
    res.best_rollout_cost = kInf;
    for (double c : batch.costs) {
        if (std::isfinite(c)) res.best_rollout_cost = std::min(res.best_rollout_cost, c);
        else ++res.diverged_rollouts;
    }
    res.plan = cfg.objective == MpcObjective::Mppi
                   ? mppi_update(shifted, batch, cfg.temperature, bounds)
                   : cem_update(shifted, batch, cfg.step_size, cfg.elite_fraction,
                                cfg.temperature, cfg.weighting, bounds);
    return res;
}

MpcController::MpcController(const DynamicsModel& model, MpcConfig cfg,
                             ActionBounds bounds, CostFn cost,
                             TerminalValueFn terminal_value, PolicyFn policy)
    : model_(&model),
      cfg_(std::move(cfg)),
      bounds_(std::move(bounds)),
      cost_(std::move(cost)),
      terminal_value_(std::move(terminal_value)),
      policy_(std::move(policy)) {
    cfg_.validate();
    if (cfg_.shift == ShiftMode::PolicyShift)
        require(static_cast<bool>(policy_), "MpcController: policy_shift needs a policy");
}

VecD MpcController::act(std::span<const double> x, std::uint64_t seed) {
    const PlanResult res =
        plan_step(*model_, x, prev_ ? &*prev_ : nullptr, policy_ ? &policy_ : nullptr,
                  cfg_, bounds_, cost_, terminal_value_ ? &terminal_value_ : nullptr,
                  seed);
    prev_ = res.plan;
    VecD u(prev_->action_dim());
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = prev_->mean.at(0, j);
    return u;
}

const GaussianControlSequence& MpcController::last_plan() const {
    require(prev_.has_value(), "MpcController: no plan yet");
    return *prev_;
}

void MpcController::reset_warm_start() { prev_.reset(); }

}  // namespace demorl
