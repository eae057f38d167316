#include "covsteer/batch.hpp"

#include "covsteer/linalg.hpp"
#include "covsteer/steer.hpp"

#include <chrono>
#include <sstream>

namespace covsteer {

using sdp::AffineMatrix;
using sdp::LinExpr;

namespace {

// Phi(k, j) = A_{k-1} ... A_j.
Matrix transition(const ProblemSpec& spec, int k, int j) {
    Matrix phi = Matrix::Identity(spec.nx(), spec.nx());
    for (int i = j; i < k; ++i) phi = spec.A[static_cast<std::size_t>(i)] * phi;
    return phi;
}

bool is_zero(const Matrix& m) { return m.cwiseAbs().maxCoeff() == 0.0; }

// M_kj for every j <= k, from M_{k+1,j} = A_k M_kj + B_k F_kj and M_jj = I.
std::vector<MatrixSeq> deviation_maps(const BatchPolicy& policy, const ProblemSpec& spec) {
    const int N = spec.horizon;
    const int nx = spec.nx();
    std::vector<MatrixSeq> M(static_cast<std::size_t>(N + 1));
    M[0].push_back(Matrix::Identity(nx, nx));
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        for (int j = 0; j <= k; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            M[i + 1].push_back(spec.A[i] * M[i][jj] + spec.B[i] * policy.F[i][jj]);
        }
        M[i + 1].push_back(Matrix::Identity(nx, nx));
    }
    return M;
}

}  // namespace

bool BatchPolicy::causal() const {
    for (std::size_t k = 0; k < F.size(); ++k)
        if (F[k].size() != k + 1) return false;
    return true;
}

BatchEncoding encode_batch(const ProblemSpec& spec, const FilterBundle& filt) {
    BatchEncoding enc;
    const int N = spec.horizon;
    const int nx = spec.nx(), nu = spec.nu();
    enc.horizon = N;
    enc.nx = nx;
    enc.nu = nu;
    enc.from_initial = Matrix::Zero((N + 1) * nx, nx);
    enc.from_feedforward = Matrix::Zero((N + 1) * nx, N * nu);
    enc.from_innovation = Matrix::Zero((N + 1) * nx, N * nx);
    for (int k = 0; k <= N; ++k) {
        enc.from_initial.middleRows(k * nx, nx) = transition(spec, k, 0);
        for (int i = 0; i < k; ++i)
            enc.from_feedforward.block(k * nx, i * nu, nx, nu) =
                transition(spec, k, i + 1) * spec.B[static_cast<std::size_t>(i)];
        for (int j = 1; j <= k; ++j) enc.from_innovation.block(k * nx, (j - 1) * nx, nx, nx) = transition(spec, k, j);
    }
    enc.noise_cov.push_back(filt.initial_estimate_cov(spec));
    for (int j = 1; j <= N; ++j) enc.noise_cov.push_back(filt.innovation_injection(j));
    for (const auto& c : enc.noise_cov) enc.noise_factor.push_back(linalg::psd_factor(c));
    return enc;
}

MatrixSeq batch_covariances(const BatchPolicy& policy, const BatchEncoding& enc, const ProblemSpec& spec) {
    if (policy.horizon() != spec.horizon || !policy.causal())
        throw std::invalid_argument("batch policy does not match the problem horizon");
    const auto M = deviation_maps(policy, spec);
    MatrixSeq out;
    for (std::size_t k = 0; k < M.size(); ++k) {
        Matrix S = Matrix::Zero(spec.nx(), spec.nx());
        for (std::size_t j = 0; j <= k; ++j) S += M[k][j] * enc.noise_cov[j] * M[k][j].transpose();
        out.push_back(linalg::symmetrize(S));
    }
    return out;
}

BatchResult solve_batch(const ProblemSpec& spec, const FilterBundle& filt, const sdp::SolverOptions& opts) {
    const auto feas = terminal_feasibility(spec, filt);
    if (!feas.feasible) {
        std::ostringstream os;
        os << "terminal covariance target Sigma_xf - Sigma_tilde_N is not positive definite (smallest eigenvalue "
           << feas.margin << ")";
        throw InfeasibleError(os.str());
    }
    const auto start = std::chrono::steady_clock::now();

    const int N = spec.horizon;
    const int nx = spec.nx(), nu = spec.nu();
    const BatchEncoding enc = encode_batch(spec, filt);
    const MeanPlan plan = solve_mean_unconstrained(spec);

    // The program works with whitened gains H_kj = F_kj E_j (nu x r_j); the part of F_kj acting
    // outside the range of E_j never matters and is left out so that no variable is free.
    const MatrixSeq& E = enc.noise_factor;
    auto rank = [&](int j) { return static_cast<int>(E[static_cast<std::size_t>(j)].cols()); };

    sdp::ConicProgram prog;
    std::vector<std::vector<sdp::VarHandle>> H(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k)
        for (int j = 0; j <= k; ++j)
            H[static_cast<std::size_t>(k)].push_back(
                rank(j) > 0 ? prog.add_matrix(nu, rank(j), "H_" + std::to_string(k) + "_" + std::to_string(j))
                            : sdp::VarHandle{});
    auto gain = [&](int k, int j) {
        if (rank(j) == 0) return AffineMatrix::zero(nu, 0);
        return prog.var(H[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
    };
    auto epigraph = [&](const AffineMatrix& V, const std::string& label) {
        const auto Z = prog.add_symmetric(V.rows(), label);
        prog.add_psd(sdp::blocks(prog.var(Z), V, V.transpose(),
                                 AffineMatrix::constant(Matrix::Identity(V.cols(), V.cols()))),
                     label);
        return prog.var(Z).trace();
    };

    LinExpr objective;
    // tr(R_k F_kj C_j F_kj^T) = |W_R H_kj|_F^2.
    for (int k = 0; k < N; ++k) {
        const Matrix WR = linalg::weight_factor(spec.R[static_cast<std::size_t>(k)]);
        for (int j = 0; j <= k; ++j)
            if (rank(j) > 0) objective += epigraph(WR * gain(k, j), "input_cost");
    }

    // tr(Q_k Sigma_hat_k) = sum_j |W_Q M_kj E_j|_F^2 with M_{k+1,j} E_j = A_k M_kj E_j + B_k H_kj.
    bool state_weighted = false;
    for (const auto& Q : spec.Q) state_weighted = state_weighted || !is_zero(Q);
    if (state_weighted) {
        std::vector<AffineMatrix> ME{AffineMatrix::constant(E[0])};
        for (int k = 0; k < N; ++k) {
            const auto i = static_cast<std::size_t>(k);
            if (!is_zero(spec.Q[i])) {
                const Matrix WQ = linalg::weight_factor(spec.Q[i]);
                for (int j = 0; j <= k; ++j)
                    if (rank(j) > 0) objective += epigraph(WQ * ME[static_cast<std::size_t>(j)], "state_cost");
            }
            if (k + 1 == N) break;
            std::vector<AffineMatrix> next;
            for (int j = 0; j <= k; ++j)
                next.push_back(spec.A[i] * ME[static_cast<std::size_t>(j)] + spec.B[i] * gain(k, j));
            next.push_back(AffineMatrix::constant(E[i + 1]));
            ME = std::move(next);
        }
    }

    // Terminal relaxation [[T, P], [P^T, I]] >= 0 with P_j = M_Nj S_j, S_j = E_j V_j^T the symmetric
    // square root (V_j orthonormal). Each M_Nj E_j is lifted to a variable through an equality.
    const Matrix T = linalg::symmetrize(spec.Sigma_xf - filt.Sigma_tilde.back());
    MatrixSeq to_end(static_cast<std::size_t>(N + 1));  // Phi(N, j)
    to_end[static_cast<std::size_t>(N)] = Matrix::Identity(nx, nx);
    for (int j = N - 1; j >= 0; --j)
        to_end[static_cast<std::size_t>(j)] = to_end[static_cast<std::size_t>(j + 1)] * spec.A[static_cast<std::size_t>(j)];
    const int side = enc.terminal_lmi_dim();
    AffineMatrix lmi(side, side);
    lmi.set_block(0, 0, T);
    lmi.set_block(nx, nx, Matrix(Matrix::Identity(side - nx, side - nx)));
    for (int j = 0; j <= N; ++j) {
        if (rank(j) == 0) continue;
        const auto jj = static_cast<std::size_t>(j);
        const Vector norms = E[jj].colwise().norm();
        const Matrix V = E[jj] * norms.cwiseInverse().asDiagonal();
        AffineMatrix ME = AffineMatrix::constant(to_end[jj] * E[jj]);
        if (j < N) {
            for (int i = j; i < N; ++i)
                ME += (to_end[static_cast<std::size_t>(i + 1)] * spec.B[static_cast<std::size_t>(i)]) * gain(i, j);
            const auto h = prog.add_matrix(nx, rank(j), "P_" + std::to_string(j));
            prog.add_equality(prog.var(h) - ME, "terminal_factor_" + std::to_string(j));
            ME = prog.var(h);
        }
        const AffineMatrix Pj = ME * Matrix(V.transpose());
        lmi.set_block(0, nx * (j + 1), Pj);
        lmi.set_block(nx * (j + 1), 0, Pj.transpose());
    }
    prog.add_psd(std::move(lmi), "terminal_lmi");
    prog.minimize(objective);

    const auto sol = sdp::solve(prog, opts);
    if (sol.status == sdp::SolveStatus::Infeasible || sol.status == sdp::SolveStatus::Unbounded)
        throw InfeasibleError(std::string("batch program is ") + sdp::to_string(sol.status));
    if (!sol.usable()) {
        std::ostringstream os;
        os << "batch program: interior-point solver stopped without convergence (pres " << sol.primal_residual
           << ", dres " << sol.dual_residual << ")";
        throw NumericalError(os.str());
    }

    BatchResult out;
    BatchPolicy& pol = out.policy;
    pol.m = plan.m;
    pol.mu = plan.mu;
    pol.cost_mean = plan.cost;
    pol.F.resize(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k)
        for (int j = 0; j <= k; ++j) {
            Matrix Fkj = Matrix::Zero(nu, nx);
            if (rank(j) > 0) {
                // F = H E^+, with E^+ = (E^T E)^{-1} E^T and E^T E diagonal.
                const Matrix& Ej = E[static_cast<std::size_t>(j)];
                const Vector sq = Ej.colwise().squaredNorm();
                Fkj = prog.value(H[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)], sol.x) *
                      sq.cwiseInverse().asDiagonal() * Ej.transpose();
            }
            pol.F[static_cast<std::size_t>(k)].push_back(Fkj);
        }
    pol.Sigma_hat = batch_covariances(pol, enc, spec);
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        Matrix input_cov = Matrix::Zero(nu, nu);
        for (int j = 0; j <= k; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            input_cov += pol.F[i][jj] * enc.noise_cov[jj] * pol.F[i][jj].transpose();
        }
        pol.cost_cov += (spec.R[i].cwiseProduct(input_cov)).sum() + (spec.Q[i].cwiseProduct(pol.Sigma_hat[i])).sum();
    }

    out.stats.terminal_lmi_dim = side;
    out.stats.psd_blocks = static_cast<int>(prog.psd_constraints().size());
    out.stats.variables = prog.num_variables();
    out.stats.equalities = static_cast<int>(prog.equalities().size());
    out.stats.iterations = sol.iterations;
    out.stats.status = sol.status;
    out.stats.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace covsteer
