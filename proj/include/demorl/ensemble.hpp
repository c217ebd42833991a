#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "demorl/mlp.hpp"
#include "demorl/replay.hpp"
#include "demorl/rng.hpp"

namespace demorl {

// Per-feature affine normalizer; scales are floored so the map stays
// invertible even for constant features.
struct Normalizer {
    VecD mean, scale;

    static Normalizer identity(std::size_t dim);
    static Normalizer fit(const std::vector<VecD>& rows, double scale_floor = 1e-6);

    VecD normalize(std::span<const double> x) const;
    VecD denormalize(std::span<const double> z) const;
};

// K delta-prediction networks trained on bootstrap resamples of the env
// buffer; members map normalized (x, u) to the normalized state delta.
struct EnsembleModel {
    std::vector<Mlp> members;
    Normalizer input_norm;   // over concat(x, u)
    Normalizer delta_norm;   // over x' - x
    std::vector<double> val_losses;  // normalized holdout MSE, one per member
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;

    static EnsembleModel create(std::size_t state_dim, std::size_t action_dim,
                                std::size_t ensemble_size,
                                const std::vector<std::size_t>& hidden,
                                std::uint64_t seed);
    std::size_t size() const { return members.size(); }
};

struct EnsembleTrainConfig {
    std::size_t min_data = 250;
    std::size_t batch_size = 64;
    double learning_rate = 3e-3;
    double holdout_fraction = 0.1;
};

struct EnsembleTrainReport {
    // [member][epoch] mean bootstrap-sample training loss (normalized MSE).
    std::vector<std::vector<double>> epoch_losses;
};

EnsembleTrainReport train_ensemble(EnsembleModel& model, const ReplayBuffer& d_env,
                                   std::size_t epochs, std::uint64_t seed,
                                   const EnsembleTrainConfig& cfg = {});

// Indices of the `count` members with smallest validation loss,
// ties broken toward the lower index; output sorted by (loss, index).
std::vector<std::size_t> select_members(const EnsembleModel& model, std::size_t count);

// One member drawn uniformly from `members` per call; x_next = x + delta.
VecD ensemble_predict(const EnsembleModel& model, std::span<const std::size_t> members,
                      std::span<const double> x, std::span<const double> u, Rng& rng);
VecD ensemble_predict(const EnsembleModel& model, std::span<const std::size_t> members,
                      std::span<const double> x, std::span<const double> u,
                      std::uint64_t seed);

void save_ensemble(std::ostream& out, const EnsembleModel& model);
EnsembleModel load_ensemble(std::istream& in);
void save_ensemble_file(const std::string& path, const EnsembleModel& model);
EnsembleModel load_ensemble_file(const std::string& path);

}  // namespace demorl
