#pragma once

#include "covsteer/chance.hpp"
#include "covsteer/kalman.hpp"
#include "covsteer/sdp.hpp"

#include <optional>
#include <string>

namespace covsteer {

struct MeanPlan {
    VectorSeq mu;  // k = 0..N
    VectorSeq m;   // k = 0..N-1
    double cost = 0.0;
    double optimality_residual = 0.0;  // |Z^T grad| on the feasible affine set
};

/// Minimum-cost feedforward sequence steering mu0 to mu_f. Throws InfeasibleError if
/// mu_f - Phi(N,0) mu0 is outside the range of the reachability matrix.
MeanPlan solve_mean_unconstrained(const ProblemSpec& spec);

/// Filtered-state affine feedback u_k = K_k (x_hat_k - mu_k) + m_k with its planned moments.
struct Policy {
    MatrixSeq K;          // k = 0..N-1
    VectorSeq m;          // k = 0..N-1
    VectorSeq mu;         // k = 0..N
    MatrixSeq Sigma_hat;  // k = 0..N
    double cost_mean = 0.0;
    double cost_cov = 0.0;

    double total_cost() const { return cost_mean + cost_cov; }
    int horizon() const { return static_cast<int>(K.size()); }
};

/// Decoded values of a covariance (or joint mean-covariance) program.
struct SteeringSolution {
    MatrixSeq Sigma_hat;  // k = 0..N (k = 0 is the fixed initial estimate covariance)
    MatrixSeq U;          // k = 0..N-1
    MatrixSeq Y;          // k = 0..N-1
    VectorSeq mu;         // k = 0..N, empty when the mean was not part of the program
    VectorSeq m;          // k = 0..N-1
    double cost_mean = 0.0;
    double cost_cov = 0.0;
};

struct CovarianceSdp {
    sdp::ConicProgram program;
    Matrix Sigma_hat0;
    std::vector<sdp::VarHandle> Sigma_hat;  // k = 1..N at index k-1
    std::vector<sdp::VarHandle> U, Y;       // k = 0..N-1
    std::vector<sdp::VarHandle> mu;         // k = 1..N at index k-1 (include_mean only)
    std::vector<sdp::VarHandle> m;          // k = 0..N-1 (include_mean only)
    std::vector<sdp::VarHandle> epigraph;   // mean-cost epigraph scalars, k = 0..N-1
    bool include_mean = false;

    /// Covariance part of the objective evaluated at x (mean part separately).
    SteeringSolution decode(const ProblemSpec& spec, const Vector& x) const;
};

/// Relaxed sequential covariance program: one PSD block [[S_k, U_k^T], [U_k, Y_k]] per k,
/// covariance dynamics equalities, and the terminal equality S_N = Sigma_xf - Sigma_tilde_N.
/// With include_mean the mean trajectory, its cost epigraphs, the chance-constraint side
/// conditions and `extra` are added. Throws InfeasibleError if the terminal target is not PD.
CovarianceSdp build_covariance_sdp(const ProblemSpec& spec, const FilterBundle& filt,
                                   const std::vector<AffineMomentConstraint>& extra, bool include_mean);

/// K_k = U_k S_k^{-1}. Throws NumericalError naming k if S_k is singular or indefinite.
Policy recover_gains(const SteeringSolution& sol);

/// max_k tr(Y_k - U_k S_k^{-1} U_k^T).
double lossless_residual(const SteeringSolution& sol);

struct MomentTrajectory {
    VectorSeq mu;         // k = 0..N
    MatrixSeq Sigma_hat;  // k = 0..N
    MatrixSeq Sigma_x;    // k = 0..N, Sigma_hat + Sigma_tilde
    VectorSeq input_mean; // k = 0..N-1
    MatrixSeq input_cov;  // k = 0..N-1, K Sigma_hat K^T
};

MomentTrajectory propagate_moments(const Policy& policy, const FilterBundle& filt, const ProblemSpec& spec);

/// Largest exact chance-constraint margin over all constrained (k, i); -inf without constraints.
double max_exact_margin(const ProblemSpec& spec, const MomentTrajectory& traj, const RiskAllocation& risk);

enum class Method { DcCcp, Linearized, Unconstrained };

const char* to_string(Method m);
std::optional<Method> parse_method(const std::string& name);

struct SteerOptions {
    Method method = Method::DcCcp;
    int max_iters = 30;
    double cost_tol = 1e-9;  // relative
    /// Surrogates use offsets reduced by this amount so solver round-off cannot push the exact
    /// chance constraints above zero.
    double margin_backoff = 1e-7;
    sdp::SolverOptions solver{.tol = 1e-10};
};

struct CcpIteration {
    double cost = 0.0;
    double max_margin = 0.0;
    double lossless = 0.0;
    sdp::SolveStatus status = sdp::SolveStatus::Optimal;
};

struct CcpTrace {
    std::vector<CcpIteration> iterations;
    bool converged = false;

    int count() const { return static_cast<int>(iterations.size()); }
};

struct SteerResult {
    Policy policy;
    CcpTrace trace;
    SteeringSolution solution;
};

/// Solves the output-feedback steering problem. Unconstrained: analytic mean plus one
/// covariance SDP. Linearized / DcCcp: iterated joint programs with tangent or
/// difference-of-convex surrogates of the chance constraints.
/// Throws InfeasibleError (terminal condition or an infeasible subproblem) and
/// NumericalError (solver breakdown before any feasible iterate).
SteerResult solve_ofccs(const ProblemSpec& spec, const FilterBundle& filt, const SteerOptions& opts = {});

}  // namespace covsteer
