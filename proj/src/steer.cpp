#include "covsteer/steer.hpp"

#include "covsteer/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace covsteer {

using sdp::AffineMatrix;
using sdp::LinExpr;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

double mean_cost(const ProblemSpec& spec, const VectorSeq& mu, const VectorSeq& m) {
    double J = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        J += mu[k].dot(spec.Q[k] * mu[k]);
        J += m[k].dot(spec.R[k] * m[k]);
    }
    return J;
}

void require_solution(const sdp::ConicSolution& sol, const std::string& context) {
    if (sol.status == sdp::SolveStatus::Infeasible || sol.status == sdp::SolveStatus::Unbounded)
        throw InfeasibleError(context + ": conic program is " + sdp::to_string(sol.status));
    if (!sol.usable())
        throw NumericalError(context + ": interior-point solver stopped without convergence (pres " +
                             fmt(sol.primal_residual) + ", dres " + fmt(sol.dual_residual) + ")");
}

}  // namespace

MeanPlan solve_mean_unconstrained(const ProblemSpec& spec) {
    const int N = spec.horizon;
    const Eigen::Index nx = spec.nx(), nu = spec.nu();
    const Eigen::Index nm = N * nu;

    // mu_k = a_k + S_k m with m = [m_0; ...; m_{N-1}].
    std::vector<Vector> a(static_cast<std::size_t>(N + 1));
    std::vector<Matrix> S(static_cast<std::size_t>(N + 1));
    a[0] = spec.mu0;
    S[0] = Matrix::Zero(nx, nm);
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        a[i + 1] = spec.A[i] * a[i];
        S[i + 1] = spec.A[i] * S[i];
        S[i + 1].middleCols(k * nu, nu) += spec.B[i];
    }

    Matrix H = Matrix::Zero(nm, nm);
    Vector f = Vector::Zero(nm);
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        H += S[i].transpose() * spec.Q[i] * S[i];
        H.block(k * nu, k * nu, nu, nu) += spec.R[i];
        f += S[i].transpose() * spec.Q[i] * a[i];
    }

    const Matrix& Gamma = S.back();
    const Vector r = spec.mu_f - a.back();
    Eigen::JacobiSVD<Matrix> svd(Gamma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    const double thresh = 1e-10 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > thresh) ++rank;

    Vector m_p = Vector::Zero(nm);
    for (Eigen::Index i = 0; i < rank; ++i)
        m_p += svd.matrixV().col(i) * (svd.matrixU().col(i).dot(r) / sv(i));
    const double miss = (Gamma * m_p - r).norm();
    if (miss > 1e-9 * std::max(1.0, r.norm()))
        throw InfeasibleError("mean target unreachable: reachability matrix has rank " + std::to_string(rank) +
                              " of " + std::to_string(nx) + ", residual " + fmt(miss));

    // Minimize over the affine set m = m_p + Z w.
    const Matrix Z = svd.matrixV().rightCols(nm - rank);
    Vector m = m_p;
    if (Z.cols() > 0) {
        const Matrix Hz = Z.transpose() * H * Z;
        const Vector g = Z.transpose() * (H * m_p + f);
        m = m_p - Z * Hz.ldlt().solve(g);
    }

    MeanPlan plan;
    plan.mu.resize(static_cast<std::size_t>(N + 1));
    plan.m.resize(static_cast<std::size_t>(N));
    plan.mu[0] = spec.mu0;
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        plan.m[i] = m.segment(k * nu, nu);
        plan.mu[i + 1] = spec.A[i] * plan.mu[i] + spec.B[i] * plan.m[i];
    }
    plan.mu[static_cast<std::size_t>(N)] = spec.mu_f;  // exact by construction up to rounding
    plan.cost = mean_cost(spec, plan.mu, plan.m);
    plan.optimality_residual = Z.cols() > 0 ? (Z.transpose() * (H * m + f)).norm() : 0.0;
    return plan;
}

SteeringSolution CovarianceSdp::decode(const ProblemSpec& spec, const Vector& x) const {
    const int N = spec.horizon;
    SteeringSolution s;
    s.Sigma_hat.push_back(Sigma_hat0);
    for (const auto& h : Sigma_hat) s.Sigma_hat.push_back(linalg::symmetrize(program.value(h, x)));
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        s.U.push_back(program.value(U[i], x));
        s.Y.push_back(linalg::symmetrize(program.value(Y[i], x)));
        s.cost_cov += (spec.Q[i].cwiseProduct(s.Sigma_hat[i])).sum() + (spec.R[i].cwiseProduct(s.Y[i])).sum();
    }
    if (include_mean) {
        s.mu.push_back(spec.mu0);
        for (const auto& h : mu) s.mu.push_back(program.value(h, x));
        for (const auto& h : m) s.m.push_back(program.value(h, x));
        s.cost_mean = mean_cost(spec, s.mu, s.m);
    }
    return s;
}

CovarianceSdp build_covariance_sdp(const ProblemSpec& spec, const FilterBundle& filt,
                                   const std::vector<AffineMomentConstraint>& extra, bool include_mean) {
    const auto feas = terminal_feasibility(spec, filt);
    if (!feas.feasible)
        throw InfeasibleError("terminal covariance target Sigma_xf - Sigma_tilde_N is not positive definite "
                              "(smallest eigenvalue " + fmt(feas.margin) + ")");

    const int N = spec.horizon;
    const int nx = spec.nx(), nu = spec.nu();
    CovarianceSdp out;
    out.include_mean = include_mean;
    out.Sigma_hat0 = filt.initial_estimate_cov(spec);
    auto& prog = out.program;

    for (int k = 1; k <= N; ++k) out.Sigma_hat.push_back(prog.add_symmetric(nx, "Sigma_hat_" + std::to_string(k)));
    for (int k = 0; k < N; ++k) {
        out.U.push_back(prog.add_matrix(nu, nx, "U_" + std::to_string(k)));
        out.Y.push_back(prog.add_symmetric(nu, "Y_" + std::to_string(k)));
    }
    auto S = [&](int k) {
        return k == 0 ? AffineMatrix::constant(out.Sigma_hat0) : prog.var(out.Sigma_hat[static_cast<std::size_t>(k - 1)]);
    };

    LinExpr objective;
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Matrix& A = spec.A[i];
        const Matrix& B = spec.B[i];
        const AffineMatrix Sk = S(k);
        const AffineMatrix Uk = prog.var(out.U[i]);
        const AffineMatrix Yk = prog.var(out.Y[i]);

        objective += Sk.dot(spec.Q[i]);
        objective += Yk.dot(spec.R[i]);

        const AffineMatrix BUAt = (B * Uk) * A.transpose();
        AffineMatrix dyn = (A * Sk) * A.transpose() + BUAt + BUAt.transpose() + (B * Yk) * B.transpose();
        dyn += filt.innovation_injection(k + 1);
        dyn -= S(k + 1);
        prog.add_equality(dyn, "cov_dynamics_" + std::to_string(k));

        prog.add_psd(sdp::blocks(Sk, Uk.transpose(), Uk, Yk), "relax_" + std::to_string(k));
    }
    const Matrix target = linalg::symmetrize(spec.Sigma_xf - filt.Sigma_tilde.back());
    prog.add_equality(S(N) - target, "terminal_cov");

    if (include_mean) {
        for (int k = 1; k <= N; ++k) out.mu.push_back(prog.add_vector(nx, "mu_" + std::to_string(k)));
        for (int k = 0; k < N; ++k) out.m.push_back(prog.add_vector(nu, "m_" + std::to_string(k)));
        auto MU = [&](int k) {
            return k == 0 ? AffineMatrix::constant(spec.mu0) : prog.var(out.mu[static_cast<std::size_t>(k - 1)]);
        };
        for (int k = 0; k < N; ++k) {
            const auto i = static_cast<std::size_t>(k);
            const AffineMatrix mk = prog.var(out.m[i]);
            prog.add_equality(spec.A[i] * MU(k) + spec.B[i] * mk - MU(k + 1), "mean_dynamics_" + std::to_string(k));

            // t_k >= |W_Q mu_k|^2 + |W_R m_k|^2 through [[t, v^T], [v, I]] >= 0.
            const Matrix WQ = linalg::weight_factor(spec.Q[i]);
            const Matrix WR = linalg::weight_factor(spec.R[i]);
            const int r = static_cast<int>(WQ.rows() + WR.rows());
            AffineMatrix v(r, 1);
            if (WQ.rows() > 0) v.set_block(0, 0, WQ * MU(k));
            v.set_block(static_cast<int>(WQ.rows()), 0, WR * mk);
            const auto t = prog.add_scalar("t_" + std::to_string(k));
            out.epigraph.push_back(t);
            AffineMatrix tk(1, 1);
            tk(0, 0) = prog.scalar(t);
            prog.add_psd(sdp::blocks(tk, v.transpose(), v, AffineMatrix::constant(Matrix::Identity(r, r))),
                         "mean_cost_" + std::to_string(k));
            objective += prog.scalar(t);
        }
        prog.add_equality(MU(N) - spec.mu_f, "terminal_mean");

        for (int k = 1; k <= N; ++k)
            for (const auto& hs : spec.state_halfspaces[static_cast<std::size_t>(k)])
                prog.add_inequality(MU(k).transpose().dot(Matrix(hs.normal.transpose())) - hs.offset,
                                    "side_state_" + std::to_string(k));
        for (int k = 0; k < N; ++k)
            for (const auto& hs : spec.input_halfspaces[static_cast<std::size_t>(k)])
                prog.add_inequality(prog.var(out.m[static_cast<std::size_t>(k)]).transpose().dot(
                                        Matrix(hs.normal.transpose())) - hs.offset,
                                    "side_input_" + std::to_string(k));

        for (const auto& c : extra) {
            LinExpr e = LinExpr(c.constant);
            if (c.target == Target::State) {
                if (c.step < 1 || c.step > N) throw std::invalid_argument("state constraint step out of range");
                e += S(c.step).dot(c.coeff_cov);
                e += (c.coeff_cov.cwiseProduct(filt.Sigma_tilde[static_cast<std::size_t>(c.step)])).sum();
                e += MU(c.step).transpose().dot(Matrix(c.coeff_mean.transpose()));
                prog.add_inequality(e, "chance_state_" + std::to_string(c.step));
            } else {
                if (c.step < 0 || c.step >= N) throw std::invalid_argument("input constraint step out of range");
                const auto i = static_cast<std::size_t>(c.step);
                e += prog.var(out.Y[i]).dot(c.coeff_cov);
                e += prog.var(out.m[i]).transpose().dot(Matrix(c.coeff_mean.transpose()));
                prog.add_inequality(e, "chance_input_" + std::to_string(c.step));
            }
        }
    }
    prog.minimize(objective);
    return out;
}

Policy recover_gains(const SteeringSolution& sol) {
    Policy p;
    const std::size_t N = sol.U.size();
    for (std::size_t k = 0; k < N; ++k) {
        const Matrix S = linalg::symmetrize(sol.Sigma_hat[k]);
        const double lmax = linalg::max_eigenvalue(S);
        const double lmin = linalg::min_eigenvalue(S);
        if (lmax <= 1e-12 || lmin < -1e-9 * std::max(1.0, lmax))
            throw NumericalError("Sigma_hat is singular or indefinite at k=" + std::to_string(k));
        Matrix Sj = S;
        if (lmin < 1e-10) Sj += 1e-9 * Matrix::Identity(S.rows(), S.cols());
        // K S = U  <=>  S K^T = U^T
        p.K.push_back(Sj.ldlt().solve(sol.U[k].transpose()).transpose());
    }
    p.m = sol.m;
    p.mu = sol.mu;
    p.Sigma_hat = sol.Sigma_hat;
    p.cost_mean = sol.cost_mean;
    p.cost_cov = sol.cost_cov;
    return p;
}

double lossless_residual(const SteeringSolution& sol) {
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.U.size(); ++k) {
        const Matrix S = linalg::symmetrize(sol.Sigma_hat[k]);
        const Matrix inner = S.ldlt().solve(sol.U[k].transpose());
        const double r = (sol.Y[k] - sol.U[k] * inner).trace();
        worst = k == 0 ? r : std::max(worst, r);
    }
    return worst;
}

MomentTrajectory propagate_moments(const Policy& policy, const FilterBundle& filt, const ProblemSpec& spec) {
    const int N = spec.horizon;
    if (policy.horizon() != N || static_cast<int>(policy.m.size()) != N)
        throw std::invalid_argument("policy horizon does not match the problem");
    MomentTrajectory t;
    t.mu.push_back(spec.mu0);
    t.Sigma_hat.push_back(filt.initial_estimate_cov(spec));
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Matrix& K = policy.K[i];
        const Matrix closed = spec.A[i] + spec.B[i] * K;
        t.input_mean.push_back(policy.m[i]);
        t.input_cov.push_back(linalg::symmetrize(K * t.Sigma_hat[i] * K.transpose()));
        t.mu.push_back(spec.A[i] * t.mu[i] + spec.B[i] * policy.m[i]);
        t.Sigma_hat.push_back(
            linalg::symmetrize(closed * t.Sigma_hat[i] * closed.transpose() + filt.innovation_injection(k + 1)));
    }
    for (int k = 0; k <= N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        t.Sigma_x.push_back(t.Sigma_hat[i] + filt.Sigma_tilde[i]);
    }
    return t;
}

double max_exact_margin(const ProblemSpec& spec, const MomentTrajectory& traj, const RiskAllocation& risk) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < spec.state_halfspaces.size(); ++k)
        for (std::size_t i = 0; i < spec.state_halfspaces[k].size(); ++i)
            worst = std::max(worst, exact_margin(traj.mu[k], traj.Sigma_x[k], spec.state_halfspaces[k][i],
                                                 risk.delta_state[k][i]));
    for (std::size_t k = 0; k < spec.input_halfspaces.size(); ++k)
        for (std::size_t i = 0; i < spec.input_halfspaces[k].size(); ++i)
            worst = std::max(worst, exact_margin(traj.input_mean[k], traj.input_cov[k], spec.input_halfspaces[k][i],
                                                 risk.delta_input[k][i]));
    return worst;
}

const char* to_string(Method m) {
    switch (m) {
        case Method::DcCcp: return "dc-ccp";
        case Method::Linearized: return "linearized";
        case Method::Unconstrained: return "unconstrained";
    }
    return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
    if (name == "dc-ccp") return Method::DcCcp;
    if (name == "linearized") return Method::Linearized;
    if (name == "unconstrained") return Method::Unconstrained;
    return std::nullopt;
}

namespace {

Halfspace tightened(Halfspace hs, double backoff) {
    hs.offset -= backoff;
    return hs;
}

// Shifts the reference means along the constraint normals until every chance constraint
// holds exactly at the reference covariances, so each DC surrogate starts with slack.
void repair_reference(const ProblemSpec& spec, const FilterBundle& filt, const RiskAllocation& risk,
                      double backoff, SteeringSolution& ref) {
    const int N = spec.horizon;
    for (int k = 1; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Matrix Sx = ref.Sigma_hat[i] + filt.Sigma_tilde[i];
        for (int pass = 0; pass < 10; ++pass) {
            bool moved = false;
            for (std::size_t c = 0; c < spec.state_halfspaces[i].size(); ++c) {
                const Halfspace hs = tightened(spec.state_halfspaces[i][c], backoff);
                const double viol = exact_margin(ref.mu[i], Sx, hs, risk.delta_state[i][c]);
                if (viol > 0.0) {
                    ref.mu[i] -= viol * hs.normal / hs.normal.squaredNorm();
                    moved = true;
                }
            }
            if (!moved) break;
        }
    }
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        for (int pass = 0; pass < 10; ++pass) {
            bool moved = false;
            for (std::size_t c = 0; c < spec.input_halfspaces[i].size(); ++c) {
                const Halfspace hs = tightened(spec.input_halfspaces[i][c], backoff);
                const double viol = exact_margin(ref.m[i], ref.Y[i], hs, risk.delta_input[i][c]);
                if (viol > 0.0) {
                    ref.m[i] -= viol * hs.normal / hs.normal.squaredNorm();
                    moved = true;
                }
            }
            if (!moved) break;
        }
    }
}

Matrix tangent_reference(const Matrix& X, const Vector& normal) {
    if (normal.dot(X * normal) > 1e-12 * std::max(1.0, normal.squaredNorm())) return X;
    return X + 1e-9 * Matrix::Identity(X.rows(), X.cols());
}

std::vector<AffineMomentConstraint> surrogates(const ProblemSpec& spec, const FilterBundle& filt,
                                               const RiskAllocation& risk, const SteeringSolution& ref,
                                               const SteerOptions& opts) {
    const Method method = opts.method;
    std::vector<AffineMomentConstraint> out;
    for (std::size_t k = 0; k < spec.state_halfspaces.size(); ++k)
        for (std::size_t c = 0; c < spec.state_halfspaces[k].size(); ++c) {
            const Halfspace hs = tightened(spec.state_halfspaces[k][c], opts.margin_backoff);
            const double d = risk.delta_state[k][c];
            const int step = static_cast<int>(k);
            if (method == Method::DcCcp)
                out.push_back(dc_linearize(ref.mu[k], hs, d, Target::State, step));
            else
                out.push_back(tangent_linearize(tangent_reference(ref.Sigma_hat[k] + filt.Sigma_tilde[k], hs.normal),
                                                hs, d, Target::State, step));
        }
    for (std::size_t k = 0; k < spec.input_halfspaces.size(); ++k)
        for (std::size_t c = 0; c < spec.input_halfspaces[k].size(); ++c) {
            const Halfspace hs = tightened(spec.input_halfspaces[k][c], opts.margin_backoff);
            const double d = risk.delta_input[k][c];
            const int step = static_cast<int>(k);
            if (method == Method::DcCcp)
                out.push_back(dc_linearize(ref.m[k], hs, d, Target::Input, step));
            else
                out.push_back(tangent_linearize(tangent_reference(ref.Y[k], hs.normal), hs, d, Target::Input, step));
        }
    return out;
}

}  // namespace

SteerResult solve_ofccs(const ProblemSpec& spec, const FilterBundle& filt, const SteerOptions& opts) {
    const RiskAllocation risk = allocate_risk(spec);

    const MeanPlan plan = solve_mean_unconstrained(spec);
    const CovarianceSdp cov = build_covariance_sdp(spec, filt, {}, false);
    const auto base = sdp::solve(cov.program, opts.solver);
    require_solution(base, "covariance program");

    SteerResult result;
    result.solution = cov.decode(spec, base.x);
    result.solution.mu = plan.mu;
    result.solution.m = plan.m;
    result.solution.cost_mean = plan.cost;
    result.policy = recover_gains(result.solution);

    auto record = [&](const SteeringSolution& sol, const Policy& pol, sdp::SolveStatus status) {
        const MomentTrajectory traj = propagate_moments(pol, filt, spec);
        result.trace.iterations.push_back(
            {sol.cost_mean + sol.cost_cov, max_exact_margin(spec, traj, risk), lossless_residual(sol), status});
    };
    record(result.solution, result.policy, base.status);

    if (opts.method == Method::Unconstrained || !spec.has_chance_constraints()) {
        result.trace.converged = true;
        return result;
    }

    // Convex-concave iterations; every iterate is feasible for the exact chance constraints.
    result.trace.iterations.clear();
    SteeringSolution ref = result.solution;
    if (opts.method == Method::DcCcp) repair_reference(spec, filt, risk, opts.margin_backoff, ref);

    bool have_iterate = false;
    double prev_cost = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iters; ++it) {
        const CovarianceSdp prog = build_covariance_sdp(spec, filt, surrogates(spec, filt, risk, ref, opts), true);
        const auto sol = sdp::solve(prog.program, opts.solver);
        if (!sol.usable()) {
            const std::string context = std::string(to_string(opts.method)) + " iteration " + std::to_string(it + 1);
            if (!have_iterate) require_solution(sol, context);
            if (sol.status == sdp::SolveStatus::Infeasible)
                throw InfeasibleError(context + ": convexified subproblem is infeasible");
            break;  // keep the last optimal iterate, not converged
        }
        SteeringSolution cur = prog.decode(spec, sol.x);
        Policy pol = recover_gains(cur);
        record(cur, pol, sol.status);
        result.solution = cur;
        result.policy = std::move(pol);
        have_iterate = true;

        const double cost = cur.cost_mean + cur.cost_cov;
        if (std::abs(prev_cost - cost) <= opts.cost_tol * std::max(1.0, std::abs(cost))) {
            result.trace.converged = true;
            break;
        }
        prev_cost = cost;
        ref = std::move(cur);
    }
    return result;
}

}  // namespace covsteer
