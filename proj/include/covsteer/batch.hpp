#pragma once

#include "covsteer/kalman.hpp"
#include "covsteer/sdp.hpp"

#include <vector>

namespace covsteer {

/// Stacked one-shot encoding of the output-feedback problem.
///
/// The estimate deviation x_hat_k - mu_k is driven by xi_0 = x_hat_0 - mu_0 and the filtered
/// innovations xi_j = L_j y_tilde_j (j = 1..N), which are independent with covariances
/// noise_cov[j]. The control is u_k = m_k + sum_{j<=k} F_kj xi_j.
struct BatchEncoding {
    int horizon = 0;
    int nx = 0;
    int nu = 0;

    Matrix from_initial;      // (N+1) nx x nx, block k = Phi(k, 0)
    Matrix from_feedforward;  // (N+1) nx x N nu
    Matrix from_innovation;   // (N+1) nx x N nx, block (k, j-1) = Phi(k, j) for 1 <= j <= k

    MatrixSeq noise_cov;     // j = 0..N
    MatrixSeq noise_factor;  // tall E_j with E_j E_j^T = noise_cov[j], r_j = numerical rank

    /// Number of feedback blocks F_kj (one per 0 <= j <= k < N).
    int gain_blocks() const { return horizon * (horizon + 1) / 2; }
    /// Side of the terminal Schur LMI [[T, P], [P^T, I]]: (N + 2) nx.
    int terminal_lmi_dim() const { return (horizon + 2) * nx; }
};

BatchEncoding encode_batch(const ProblemSpec& spec, const FilterBundle& filt);

/// Causal innovation-history feedback law with its predicted moments.
struct BatchPolicy {
    std::vector<MatrixSeq> F;  // F[k][j], j = 0..k, each nu x nx
    VectorSeq m;               // k = 0..N-1
    VectorSeq mu;              // k = 0..N
    MatrixSeq Sigma_hat;       // k = 0..N, predicted
    double cost_mean = 0.0;
    double cost_cov = 0.0;

    int horizon() const { return static_cast<int>(m.size()); }
    double total_cost() const { return cost_mean + cost_cov; }
    /// True when no gain references a future innovation.
    bool causal() const;
};

struct BatchStats {
    int terminal_lmi_dim = 0;
    int psd_blocks = 0;
    int variables = 0;
    int equalities = 0;
    int iterations = 0;
    sdp::SolveStatus status = sdp::SolveStatus::MaxIterations;
    double solve_ms = 0.0;
};

struct BatchResult {
    BatchPolicy policy;
    BatchStats stats;
};

/// Estimate covariances of the batch law, sum_j M_kj noise_cov[j] M_kj^T for k = 0..N.
MatrixSeq batch_covariances(const BatchPolicy& policy, const BatchEncoding& enc, const ProblemSpec& spec);

/// Solves the stacked program without chance constraints. The terminal condition is the
/// relaxation Sigma_hat_N <= Sigma_xf - Sigma_tilde_N written as one Schur LMI.
/// Throws InfeasibleError if the terminal target is not PD or the program is infeasible,
/// NumericalError if the solver stops without a usable iterate.
BatchResult solve_batch(const ProblemSpec& spec, const FilterBundle& filt, const sdp::SolverOptions& opts = {});

}  // namespace covsteer
