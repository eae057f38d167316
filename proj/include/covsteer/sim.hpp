#pragma once

#include "covsteer/batch.hpp"
#include "covsteer/steer.hpp"

#include <cstdint>
#include <functional>

namespace covsteer {

/// One step of a simulated trial. `u` is empty at the final step.
struct TrialState {
    Vector x;
    Vector x_hat_prior;
    Vector x_hat;
    Vector innovation;  // y_k - C_k x_hat_prior
    Vector u;
};

/// Control applied at step k. `xi[0] = x_hat_0 - mu_0` and `xi[j] = L_j innovation_j` for j >= 1,
/// available up to and including j = k.
using ControlLaw = std::function<Vector(int k, const Vector& x_hat, const VectorSeq& xi)>;

ControlLaw feedback_law(const Policy& policy);
ControlLaw innovation_law(const BatchPolicy& policy, const ProblemSpec& spec);

struct McReport {
    int trials = 0;
    std::uint64_t seed = 0;

    Vector terminal_mean;
    Matrix terminal_cov;

    // Per step k = 0..N; covariances are unbiased sample covariances.
    VectorSeq state_mean;
    MatrixSeq state_cov;
    MatrixSeq estimate_cov;  // of x_hat_k
    MatrixSeq error_cov;     // of x_hat_k - x_k

    std::vector<std::vector<double>> state_violation;  // aligned with ProblemSpec::state_halfspaces
    std::vector<std::vector<double>> input_violation;  // aligned with ProblemSpec::input_halfspaces
    double joint_state_violation = 0.0;                // trials violating any state half-space
    double joint_input_violation = 0.0;
    double average_cost = 0.0;

    bool operator==(const McReport& other) const;
};

/// Seed of trial `trial` in a run seeded with `seed` (splitmix64 of both).
std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial);

/// Runs one closed-loop trial with its own generator; states for k = 0..N.
std::vector<TrialState> simulate_trial(const ProblemSpec& spec, const FilterBundle& filt, const ControlLaw& law,
                                       std::uint64_t seed, std::uint64_t trial);

/// Closed-loop Monte Carlo on the true system. Results depend only on the arguments, never on
/// evaluation order. Throws std::invalid_argument for trials < 1 or a policy of the wrong shape.
McReport monte_carlo(const ProblemSpec& spec, const FilterBundle& filt, const ControlLaw& law, int trials,
                     std::uint64_t seed);
McReport monte_carlo(const ProblemSpec& spec, const FilterBundle& filt, const Policy& policy, int trials,
                     std::uint64_t seed);
McReport monte_carlo(const ProblemSpec& spec, const FilterBundle& filt, const BatchPolicy& policy, int trials,
                     std::uint64_t seed);

}  // namespace covsteer
