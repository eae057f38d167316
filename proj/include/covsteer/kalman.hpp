#pragma once

#include "covsteer/model.hpp"

namespace covsteer {

/// Control-independent Kalman filter sequences, all indexed k = 0..N.
struct FilterBundle {
    MatrixSeq L;                  // gains, n_x x n_y
    MatrixSeq Sigma_tilde_prior;  // a-priori error covariance
    MatrixSeq Sigma_tilde;        // posterior error covariance
    MatrixSeq Sigma_innov;        // innovation covariance

    int horizon() const { return static_cast<int>(L.size()) - 1; }

    /// Covariance of the innovation-driven estimate increment, L_k Sigma_innov_k L_k^T.
    Matrix innovation_injection(int k) const;

    /// Covariance of the first posterior estimate x_hat_0.
    Matrix initial_estimate_cov(const ProblemSpec& spec) const;

    bool operator==(const FilterBundle& other) const;
};

/// Runs the covariance recursions (Joseph-form measurement update, symmetrized).
/// Throws NumericalError if an innovation covariance is numerically singular.
FilterBundle precompute_filter(const ProblemSpec& spec);

struct TerminalFeasibility {
    bool feasible = false;
    double margin = 0.0;  // smallest eigenvalue of Sigma_xf - Sigma_tilde_N
};

TerminalFeasibility terminal_feasibility(const ProblemSpec& spec, const FilterBundle& filt);

}  // namespace covsteer
