#pragma once

#include "covsteer/model.hpp"

namespace covsteer {

enum class Target { State, Input };

/// Per-constraint risks aligned with ProblemSpec::state_halfspaces / input_halfspaces.
struct RiskAllocation {
    std::vector<std::vector<double>> delta_state;  // k = 0..N
    std::vector<std::vector<double>> delta_input;  // k = 0..N-1

    double state_total() const;
    double input_total() const;
};

/// Affine constraint <coeff_cov, X> + coeff_mean^T v + constant <= 0.
///
/// For state targets X is the full state covariance Sigma_hat + Sigma_tilde and v the
/// state mean; for input targets X is the Y block and v the feedforward m.
struct AffineMomentConstraint {
    Target target = Target::State;
    int step = 0;
    Matrix coeff_cov;
    Vector coeff_mean;
    double constant = 0.0;

    double evaluate(const Matrix& cov, const Vector& mean) const;
};

/// Delta / (N * Nc). Throws std::invalid_argument for nonpositive arguments.
double uniform_risk(double Delta, int N, int Nc);

/// Uniform allocation over the constraint pattern of `spec`; N_c is the per-step maximum.
RiskAllocation allocate_risk(const ProblemSpec& spec);

double normal_cdf(double z);

/// Inverse of normal_cdf by bisection. Throws std::invalid_argument outside (0, 1).
double normal_quantile(double p);

/// Phi^{-1}(1-delta) sqrt(a^T Sigma a) + a^T mu - b; the chance constraint holds iff <= 0.
double exact_margin(const Vector& mu, const Matrix& Sigma, const Halfspace& hs, double delta);

/// Concave-side function g(mu) = (b - a^T mu)^2 of the squared constraint.
double dc_g(const Halfspace& hs, const Vector& mu);

/// First-order expansion of g around mu_ref, evaluated at mu.
double dc_g_linearized(const Halfspace& hs, const Vector& mu_ref, const Vector& mu);

/// Convex surrogate f - g_hat <= 0 of the squared chance constraint, linearized at mu_ref.
/// Throws InfeasibleError when b - a^T mu_ref < 0 (the reference violates the side constraint).
AffineMomentConstraint dc_linearize(const Vector& mu_ref, const Halfspace& hs, double delta, Target target,
                                    int step = 0);

/// Tangent-line overestimate of Phi^{-1}(1-delta) sqrt(a^T X a) at X = ref, combined with
/// the mean term into a conservative affine constraint. Throws NumericalError if a^T ref a <= 0.
AffineMomentConstraint tangent_linearize(const Matrix& ref, const Halfspace& hs, double delta, Target target,
                                         int step = 0);

}  // namespace covsteer
