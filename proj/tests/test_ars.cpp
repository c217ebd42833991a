#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "demorl/ars.hpp"
#include "demorl/env.hpp"

using namespace demorl;

namespace {

ActionBounds bounds1(double lim = 10.0) { return {VecD{-lim}, VecD{lim}}; }

// Records every probe policy it is asked to score, so a test can recover
// the perturbation directions and recompute the update by hand.
struct RecordingEvaluator {
    std::function<double(const Matrix&)> score;
    mutable std::vector<Matrix> probes;

    EpisodeEvaluator fn() const {
        return [this](const LinearPolicy& p, std::uint64_t) {
            probes.push_back(p.theta);
            return EpisodeResult{score(p.theta), {}};
        };
    }
};

}  // namespace

TEST_CASE("identical +/- returns leave theta unchanged") {
    LinearPolicy policy = LinearPolicy::zeros(2, 1, bounds1(), false);
    policy.theta.at(0, 0) = 0.7;
    const Matrix before = policy.theta;
    RecordingEvaluator eval{[](const Matrix&) { return 5.0; }, {}};
    ArsConfig cfg;
    cfg.directions = 4;
    cfg.top_directions = 2;
    const ArsIterationReport report = ars_iteration(policy, eval.fn(), cfg, 1);
    CHECK(report.sigma_degenerate);  // all returns equal, sigma_R = 0
    CHECK(policy.theta.data == before.data);
}

TEST_CASE("the update reproduces the hand-computed rule") {
    // returns are linear in theta, so r+ - r- and sigma_R are exactly
    // recoverable from the recorded probes
    auto linear_score = [](const Matrix& th) {
        return 3.0 * th.at(0, 0) - 2.0 * th.at(0, 1);
    };
    LinearPolicy policy = LinearPolicy::zeros(2, 1, bounds1(), false);
    policy.theta.at(0, 0) = 0.1;
    policy.theta.at(0, 1) = -0.2;
    const Matrix base = policy.theta;

    RecordingEvaluator eval{linear_score, {}};
    ArsConfig cfg;
    cfg.step_size = 0.1;
    cfg.noise = 0.05;
    cfg.directions = 3;
    cfg.top_directions = 2;
    ars_iteration(policy, eval.fn(), cfg, 42);

    REQUIRE(eval.probes.size() == 6);  // N pairs in (+, -) order
    std::vector<Matrix> deltas;
    std::vector<double> r_plus, r_minus;
    for (std::size_t k = 0; k < 3; ++k) {
        Matrix d(1, 2);
        for (std::size_t j = 0; j < 2; ++j)
            d.at(0, j) = (eval.probes[2 * k].at(0, j) - base.at(0, j)) / cfg.noise;
        deltas.push_back(d);
        r_plus.push_back(linear_score(eval.probes[2 * k]));
        r_minus.push_back(linear_score(eval.probes[2 * k + 1]));
    }
    // top-b by max(r+, r-)
    std::vector<std::size_t> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::max(r_plus[a], r_minus[a]) > std::max(r_plus[b], r_minus[b]);
    });
    order.resize(2);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t k : order) {
        sum += r_plus[k] + r_minus[k];
        sum_sq += r_plus[k] * r_plus[k] + r_minus[k] * r_minus[k];
    }
    const double mean = sum / 4.0;
    const double sigma_r = std::sqrt(std::max(sum_sq / 4.0 - mean * mean, 0.0));
    Matrix want = base;
    for (std::size_t k : order)
        for (std::size_t j = 0; j < 2; ++j)
            want.at(0, j) += cfg.step_size / (2.0 * sigma_r) *
                             (r_plus[k] - r_minus[k]) * deltas[k].at(0, j);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(policy.theta.at(0, j) == doctest::Approx(want.at(0, j)).epsilon(1e-12));
}

TEST_CASE("update is invariant to scaling all returns") {
    auto score = [](const Matrix& th) { return 3.0 * th.at(0, 0) + th.at(0, 1); };
    ArsConfig cfg;
    cfg.directions = 4;
    cfg.top_directions = 2;
    auto run = [&](double scale) {
        LinearPolicy policy = LinearPolicy::zeros(2, 1, bounds1(), false);
        RecordingEvaluator eval{
            [&, scale](const Matrix& th) { return scale * score(th); }, {}};
        ars_iteration(policy, eval.fn(), cfg, 7);
        return policy.theta;
    };
    const Matrix once = run(1.0);
    const Matrix doubled = run(2.0);
    for (std::size_t k = 0; k < once.size(); ++k)
        CHECK(once.data[k] == doctest::Approx(doubled.data[k]).epsilon(1e-12));
}

TEST_CASE("an iteration is deterministic under its seed") {
    auto score = [](const Matrix& th) {
        return -(th.at(0, 0) - 1.0) * (th.at(0, 0) - 1.0);
    };
    auto run = [&](std::uint64_t seed) {
        LinearPolicy policy = LinearPolicy::zeros(1, 1, bounds1(), false);
        RecordingEvaluator eval{score, {}};
        ArsConfig cfg;
        ars_iteration(policy, eval.fn(), cfg, seed);
        return policy.theta;
    };
    CHECK(run(3).data == run(3).data);
    CHECK(run(3).data != run(4).data);
}

TEST_CASE("ars solves the 1-d quadratic surrogate") {
    // reward -(theta - 3)^2, evaluated directly
    LinearPolicy policy = LinearPolicy::zeros(1, 1, bounds1(), false);
    const EpisodeEvaluator eval = [](const LinearPolicy& p, std::uint64_t) {
        const double d = p.theta.at(0, 0) - 3.0;
        return EpisodeResult{-d * d, {}};
    };
    ArsConfig cfg;
    cfg.step_size = 0.3;
    cfg.noise = 0.2;
    cfg.directions = 8;
    cfg.top_directions = 4;
    std::size_t needed = 0;
    for (std::size_t it = 0; it < 200; ++it) {
        ars_iteration(policy, eval, cfg, it);
        if (std::abs(policy.theta.at(0, 0) - 3.0) < 0.1) {
            needed = it + 1;
            break;
        }
    }
    CHECK(needed > 0);
    CHECK(std::abs(policy.theta.at(0, 0) - 3.0) < 0.1);
}

TEST_CASE("accelerated step endpoints and hand-computed mix") {
    ArsConfig cfg;
    cfg.accel_beta = 0.5;
    cfg.accel_gamma = 0.9;

    Matrix a(1, 1), b(1, 1), c(1, 1);
    a.at(0, 0) = 1.0;
    b.at(0, 0) = 2.0;
    c.at(0, 0) = 4.0;

    SUBCASE("gamma = 1 returns the fresh iterate") {
        cfg.accel_gamma = 1.0;
        CHECK(accelerated_step({a, b, c}, cfg).at(0, 0) == 4.0);
    }
    SUBCASE("constant history is a fixed point") {
        Matrix k(1, 1);
        k.at(0, 0) = 0.33;
        CHECK(accelerated_step({k, k, k, k}, cfg).at(0, 0) ==
              doctest::Approx(0.33).epsilon(1e-15));
    }
    SUBCASE("two-step history matches the normalized weighted sum") {
        // past = [a, b] (b most recent): weights 1 and (1-beta) = 0.5
        // normalized -> (2/3) b + (1/3) a = 5/3
        const double run_avg = (2.0 / 3.0) * 2.0 + (1.0 / 3.0) * 1.0;
        const double want = 0.9 * 4.0 + 0.1 * run_avg;
        CHECK(accelerated_step({a, b, c}, cfg).at(0, 0) ==
              doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("singleton history returns the iterate") {
        CHECK(accelerated_step({c}, cfg).at(0, 0) == 4.0);
    }
}

TEST_CASE("policy_act: zeros, identity slice, and centering") {
    SUBCASE("zero theta gives zero action") {
        LinearPolicy p = LinearPolicy::zeros(3, 2, {VecD{-1, -1}, VecD{1, 1}}, false);
        CHECK(p.act(VecD{5.0, -3.0, 2.0}) == VecD{0.0, 0.0});
    }
    SUBCASE("identity slice passes leading coordinates through") {
        LinearPolicy p = LinearPolicy::zeros(3, 2, {VecD{-9, -9}, VecD{9, 9}}, false);
        p.theta.at(0, 0) = 1.0;
        p.theta.at(1, 1) = 1.0;
        const VecD u = p.act(VecD{0.4, -0.7, 5.0});
        CHECK(u[0] == 0.4);
        CHECK(u[1] == -0.7);
    }
    SUBCASE("acting at the stored mean gives zero") {
        LinearPolicy p = LinearPolicy::zeros(2, 1, bounds1(), true);
        p.theta.at(0, 0) = 3.0;
        p.theta.at(0, 1) = -2.0;
        p.obs_mean = {1.5, -0.5};
        p.obs_var = {4.0, 9.0};
        p.obs_count = 10;
        const VecD u = p.act(VecD{1.5, -0.5});
        CHECK(u[0] == 0.0);
    }
    SUBCASE("actions are clipped to bounds") {
        LinearPolicy p = LinearPolicy::zeros(1, 1, {VecD{-1}, VecD{1}}, false);
        p.theta.at(0, 0) = 100.0;
        CHECK(p.act(VecD{1.0})[0] == 1.0);
    }
}

TEST_CASE("normalization stats freeze during and refresh after an iteration") {
    LinearPolicy policy = LinearPolicy::zeros(1, 1, bounds1(), true);
    std::vector<std::size_t> counts_seen;
    const EpisodeEvaluator eval = [&](const LinearPolicy& p, std::uint64_t) {
        counts_seen.push_back(p.obs_count);
        return EpisodeResult{p.theta.at(0, 0), {VecD{1.0}, VecD{3.0}}};
    };
    ArsConfig cfg;
    cfg.directions = 2;
    cfg.top_directions = 1;
    ars_iteration(policy, eval, cfg, 0);
    for (const std::size_t c : counts_seen) CHECK(c == 0);  // frozen at old stats
    CHECK(policy.obs_count == 8);  // 2N episodes x 2 states each
    CHECK(policy.obs_mean[0] == doctest::Approx(2.0));
    CHECK(policy.obs_var[0] == doctest::Approx(1.0));
}

TEST_CASE("env evaluator returns the episode return and visited states") {
    auto env = make_env("reacher2d", {{"episode_length", 10}});
    const EpisodeEvaluator eval = make_env_evaluator(*env);
    LinearPolicy policy =
        LinearPolicy::zeros(4, 2, ActionBounds::of(env->spec()), false);
    const EpisodeResult res = eval(policy, 5);
    CHECK(res.states.size() == 11);  // reset state + 10 steps
    // zero policy, zero action: return is the sum of position penalties
    double want = 0.0;
    EnvState s = env->reset(5);
    for (int i = 0; i < 10; ++i) {
        StepResult sr = env->step(s, VecD{0.0, 0.0});
        want += sr.reward;
        s = sr.state;
    }
    CHECK(res.episode_return == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("policy checkpoint round-trips through the text format") {
    LinearPolicy policy = LinearPolicy::zeros(3, 2, {VecD{-1, -2}, VecD{1, 2}}, true);
    Rng rng = make_rng(8);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (double& v : policy.theta.data) v = unit(rng);
    policy.obs_mean = {0.1, -0.2, 0.3};
    policy.obs_var = {1.0, 2.0, 0.5};
    policy.obs_count = 123;
    const std::string path =
        std::filesystem::temp_directory_path() / "demorl_policy.txt";
    save_policy_file(path, policy);
    const LinearPolicy loaded = load_policy_file(path);
    CHECK(loaded.theta.data == policy.theta.data);
    CHECK(loaded.obs_mean == policy.obs_mean);
    CHECK(loaded.obs_var == policy.obs_var);
    CHECK(loaded.obs_count == policy.obs_count);
    CHECK(loaded.normalize == policy.normalize);
    CHECK(loaded.bounds.low == policy.bounds.low);
    const VecD x{0.3, 0.6, -0.9};
    CHECK(loaded.act(x) == policy.act(x));
    std::filesystem::remove(path);
}
