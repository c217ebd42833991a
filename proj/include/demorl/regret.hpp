#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "demorl/common.hpp"

namespace demorl {

// Convex tracking toy: fixed-covariance Gaussian control distribution,
// quadratic per-round objective J_t(mu) = 0.5 |mu - theta_t|^2 + const,
// box decision set, identity shift operator. The comparator sequence is
// the per-round clipped minimizer (the hardest feasible choice).
struct ConvexTrackingSpec {
    std::size_t dim = 1;          // 1 or 2
    double box_radius = 2.0;      // decision set [-R, R]^dim for mu
    double control_variance = 1.0;  // sigma_c^2, shared per dim
    std::function<VecD(std::size_t)> target;  // theta_t, defined for t in [0, T]
    VecD initial_mean;            // mu~_0
    std::size_t grid_points = 200;  // per-dim resolution for the constants
};

// alpha_t = c / sqrt(t + 1) for 0-based rounds; diminishing.
struct AlphaSchedule {
    double c = 0.5;
    double at(std::size_t t) const;
};

struct RegretRecord {
    std::size_t round = 0;
    double j_tilde = 0.0;       // J_t(eta~_t), the played cost
    double j_star = 0.0;        // J_t(eta*_t), the comparator cost
    double comparator_drift = 0.0;  // ||eta*_{t+1} - Phi_t(eta*_t)|| in natural params
    double alpha = 0.0;
    double cum_regret = 0.0;
    double cum_bound = 0.0;
};

struct BoundConstants {
    double g_j = 0.0;          // max ||grad J|| (natural params) over box and rounds
    double m_psi = 0.0;        // 0.5 * max ||grad psi||
    double d_max = 0.0;        // max pairwise divergence over the box
    double sigma_strong = 0.0; // strong-convexity modulus of psi
    double box_radius = 0.0;
    VecD delta_phi;            // per-round shift expansion; identity shift gives 0
};

struct TrackingRun {
    std::vector<RegretRecord> records;
    // Mean-parameter sequences; tilde has one extra entry (eta~_{T}) so the
    // per-round lemma can be checked at the last round.
    std::vector<VecD> tilde_mean;
    std::vector<VecD> played_mean;
    std::vector<VecD> comparator_mean;  // t = 0..T
    BoundConstants constants;
    double control_variance = 1.0;
    std::size_t dim = 1;
    AlphaSchedule schedule;
};

BoundConstants compute_constants(const ConvexTrackingSpec& spec, std::size_t rounds);

TrackingRun run_convex_tracking(std::size_t rounds, const ConvexTrackingSpec& spec,
                                const AlphaSchedule& schedule);

struct BoundReport {
    std::vector<bool> holds;  // per prefix T
    VecD margins;             // bound - regret
    bool all_hold = false;
};

BoundReport check_bound(const TrackingRun& run);

struct LemmaReport {
    std::vector<bool> holds;  // per round
    VecD lhs, rhs;
    bool all_hold = false;
};

LemmaReport lemma1_per_round_check(const TrackingRun& run);

// Least-squares slope of log(cum regret) vs log(round) over the run.
double loglog_slope(const std::vector<RegretRecord>& records);

// Columns: t, J_tilde, J_star, drift, regret, bound.
void write_regret_csv(std::ostream& out, const TrackingRun& run);

}  // namespace demorl
