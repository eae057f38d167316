#pragma once

// Independent reference computations and property checks shared by the unit tests and the
// acceptance gate. Nothing here calls the code path it is used to check.

#include "covsteer/chance.hpp"
#include "covsteer/kalman.hpp"
#include "covsteer/linalg.hpp"
#include "covsteer/results.hpp"
#include "covsteer/sim.hpp"
#include "covsteer/steer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace covsteer::testing {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline std::string data_path(const std::string& name) { return std::string(COVSTEER_DATA_DIR) + "/" + name; }

inline ProblemSpec double_integrator() { return load_problem(data_path("double_integrator.json")); }

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

inline Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
    return random_matrix(rng, n, 1, scale).col(0);
}

/// W W^T + floor I, symmetric positive definite.
inline Matrix random_spd(std::mt19937_64& rng, int n, double scale = 1.0, double floor = 0.1) {
    const Matrix W = random_matrix(rng, n, n, scale);
    return linalg::symmetrize(W * W.transpose() + floor * Matrix::Identity(n, n));
}

/// Time-invariant random instance without chance constraints. The terminal covariance is the
/// prior error covariance at N plus a random SPD margin, so the target dominates the last
/// innovation injection.
inline ProblemSpec random_spec(std::mt19937_64& rng, int nx, int nu, int ny, int N) {
    ProblemSpec s;
    s.horizon = N;
    const auto n = static_cast<std::size_t>(N);
    const Matrix A = Matrix::Identity(nx, nx) + random_matrix(rng, nx, nx, 0.2);
    s.A.assign(n, A);
    s.B.assign(n, random_matrix(rng, nx, nu));
    s.G.assign(n, random_matrix(rng, nx, nx, 0.1));
    s.C.assign(n + 1, random_matrix(rng, ny, nx));
    s.D.assign(n + 1, 0.2 * Matrix::Identity(ny, ny) + random_matrix(rng, ny, ny, 0.02));
    const Matrix WQ = random_matrix(rng, nx, nx, 0.3);
    s.Q.assign(n, WQ * WQ.transpose());
    s.R.assign(n, random_spd(rng, nu, 0.5, 0.5));
    s.mu0 = random_vector(rng, nx);
    s.mu_f = random_vector(rng, nx);
    s.Sigma_hat0_minus = random_spd(rng, nx, 0.3, 0.01);
    s.Sigma_tilde0_minus = random_spd(rng, nx, 0.3, 0.01);
    s.state_halfspaces.assign(n + 1, {});
    s.input_halfspaces.assign(n, {});
    s.Sigma_xf = Matrix::Identity(nx, nx);
    const FilterBundle f = precompute_filter(s);
    s.Sigma_xf = linalg::symmetrize(f.Sigma_tilde_prior.back() + random_spd(rng, nx, 0.3, 0.05));
    return s;
}

// ---------------------------------------------------------------------------------------------
// Kalman recursion against conditioning of the joint Gaussian of (x_0..x_N, y_0..y_N).

struct KalmanReference {
    MatrixSeq prior, posterior, innovation, gain;
};

inline KalmanReference kalman_by_conditioning(const ProblemSpec& s) {
    const int N = s.horizon, nx = s.nx(), ny = s.ny(), nw = s.nw();
    // Independent sources: x_0 deviation, w_0..w_{N-1}, v_0..v_N.
    const int ne = nx + N * nw + (N + 1) * ny;
    Matrix Lambda = Matrix::Identity(ne, ne);
    Lambda.topLeftCorner(nx, nx) = s.Sigma_tilde0_minus;

    std::vector<Matrix> X(static_cast<std::size_t>(N + 1)), Y(static_cast<std::size_t>(N + 1));
    X[0] = Matrix::Zero(nx, ne);
    X[0].leftCols(nx).setIdentity();
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        X[i + 1] = s.A[i] * X[i];
        X[i + 1].middleCols(nx + k * nw, nw) += s.G[i];
    }
    for (int k = 0; k <= N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        Y[i] = s.C[i] * X[i];
        Y[i].middleCols(nx + N * nw + k * ny, ny) += s.D[i];
    }
    auto stack = [&](int upto) {  // y_0..y_{upto-1}
        Matrix M(upto * ny, ne);
        for (int j = 0; j < upto; ++j) M.middleRows(j * ny, ny) = Y[static_cast<std::size_t>(j)];
        return M;
    };
    // Cov(a, b | Y) for rows a, b conditioned on stacked rows Ys.
    auto cond = [&](const Matrix& a, const Matrix& b, const Matrix& Ys) {
        Matrix c = a * Lambda * b.transpose();
        if (Ys.rows() == 0) return c;
        const Matrix Syy = Ys * Lambda * Ys.transpose();
        const Matrix Say = a * Lambda * Ys.transpose();
        const Matrix Sby = b * Lambda * Ys.transpose();
        return Matrix(c - Say * Syy.ldlt().solve(Sby.transpose()));
    };

    KalmanReference ref;
    for (int k = 0; k <= N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Matrix past = stack(k), upto = stack(k + 1);
        ref.prior.push_back(cond(X[i], X[i], past));
        ref.posterior.push_back(cond(X[i], X[i], upto));
        const Matrix S = cond(Y[i], Y[i], past);
        ref.innovation.push_back(S);
        ref.gain.push_back(cond(X[i], Y[i], past) * S.inverse());
    }
    return ref;
}

inline double max_abs_diff(const MatrixSeq& a, const MatrixSeq& b) {
    if (a.size() != b.size()) return kInf;
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) return kInf;
        e = std::max(e, (a[i] - b[i]).cwiseAbs().maxCoeff());
    }
    return e;
}

inline double kalman_oracle_error(const ProblemSpec& s) {
    const FilterBundle f = precompute_filter(s);
    const KalmanReference r = kalman_by_conditioning(s);
    return std::max({max_abs_diff(f.Sigma_tilde_prior, r.prior), max_abs_diff(f.Sigma_tilde, r.posterior),
                     max_abs_diff(f.Sigma_innov, r.innovation), max_abs_diff(f.L, r.gain)});
}

// ---------------------------------------------------------------------------------------------
// Mean steering as one equality-constrained least-squares problem in the stacked inputs.

struct StackedMean {
    Vector m;  // [m_0; ...; m_{N-1}]
    VectorSeq mu;
    double cost = 0.0;
};

inline StackedMean stacked_mean(const ProblemSpec& s) {
    const int N = s.horizon, nx = s.nx(), nu = s.nu();
    const int nm = N * nu;
    auto phi = [&](int k, int j) {
        Matrix P = Matrix::Identity(nx, nx);
        for (int i = j; i < k; ++i) P = s.A[static_cast<std::size_t>(i)] * P;
        return P;
    };
    // mu_k = Phi(k,0) mu0 + sum_{j<k} Phi(k,j+1) B_j m_j
    std::vector<Matrix> Mk;
    std::vector<Vector> ck;
    for (int k = 0; k <= N; ++k) {
        Matrix M = Matrix::Zero(nx, nm);
        for (int j = 0; j < k; ++j) M.middleCols(j * nu, nu) = phi(k, j + 1) * s.B[static_cast<std::size_t>(j)];
        Mk.push_back(M);
        ck.push_back(phi(k, 0) * s.mu0);
    }
    Matrix H = Matrix::Zero(nm, nm);
    Vector g = Vector::Zero(nm);
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        H += Mk[i].transpose() * s.Q[i] * Mk[i];
        g += Mk[i].transpose() * s.Q[i] * ck[i];
        H.block(k * nu, k * nu, nu, nu) += s.R[i];
    }
    Matrix K = Matrix::Zero(nm + nx, nm + nx);
    K.topLeftCorner(nm, nm) = H;
    K.topRightCorner(nm, nx) = Mk.back().transpose();
    K.bottomLeftCorner(nx, nm) = Mk.back();
    Vector rhs(nm + nx);
    rhs << -g, s.mu_f - ck.back();
    const Vector sol = K.fullPivLu().solve(rhs);

    StackedMean out;
    out.m = sol.head(nm);
    for (int k = 0; k <= N; ++k) out.mu.push_back(ck[static_cast<std::size_t>(k)] + Mk[static_cast<std::size_t>(k)] * out.m);
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Vector mk = out.m.segment(k * nu, nu);
        out.cost += out.mu[i].dot(s.Q[i] * out.mu[i]) + mk.dot(s.R[i] * mk);
    }
    return out;
}

inline double mean_oracle_error(const ProblemSpec& s) {
    const MeanPlan plan = solve_mean_unconstrained(s);
    const StackedMean ref = stacked_mean(s);
    double e = std::abs(plan.cost - ref.cost) / std::max(1.0, std::abs(ref.cost));
    for (int k = 0; k < s.horizon; ++k)
        e = std::max(e, (plan.m[static_cast<std::size_t>(k)] - ref.m.segment(k * s.nu(), s.nu())).cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < ref.mu.size(); ++k) e = std::max(e, (plan.mu[k] - ref.mu[k]).cwiseAbs().maxCoeff());
    return e;
}

// ---------------------------------------------------------------------------------------------
// One-step scalar covariance steering in closed form.

struct ScalarInstance {
    double a = 1.1, b = 0.7, g = 0.3, c = 1.0, d = 0.4, r = 2.0;
    double hat0 = 0.5, tilde0 = 0.2, xf = 0.9;
    double mu0 = 1.0, muf = -0.5;

    ProblemSpec spec() const {
        ProblemSpec s;
        s.horizon = 1;
        auto m = [](double v) { return Matrix::Constant(1, 1, v); };
        s.A = {m(a)};
        s.B = {m(b)};
        s.G = {m(g)};
        s.C = {m(c), m(c)};
        s.D = {m(d), m(d)};
        s.Q = {m(0.0)};
        s.R = {m(r)};
        s.mu0 = Vector::Constant(1, mu0);
        s.mu_f = Vector::Constant(1, muf);
        s.Sigma_hat0_minus = m(hat0);
        s.Sigma_tilde0_minus = m(tilde0);
        s.Sigma_xf = m(xf);
        s.state_halfspaces.assign(2, {});
        s.input_halfspaces.assign(1, {});
        return s;
    }

    struct Answer {
        double K = 0.0, cost_cov = 0.0, m = 0.0, cost_mean = 0.0;
    };

    Answer solve() const {
        auto update = [&](double prior) { return prior - prior * c * c * prior / (c * c * prior + d * d); };
        const double post0 = update(tilde0);
        const double est0 = hat0 + tilde0 - post0;  // covariance of x_hat_0
        const double prior1 = a * a * post0 + g * g;
        // (a + b K)^2 est0 + (prior1 - post1) = xf - post1  =>  (a + b K)^2 = (xf - prior1) / est0
        const double root = std::sqrt((xf - prior1) / est0);
        Answer out;
        out.K = ((a >= 0 ? root : -root) - a) / b;
        out.cost_cov = r * out.K * out.K * est0;
        out.m = (muf - a * mu0) / b;
        out.cost_mean = r * out.m * out.m;
        return out;
    }
};

inline double scalar_oracle_error(const ScalarInstance& inst) {
    const ProblemSpec s = inst.spec();
    const FilterBundle f = precompute_filter(s);
    const SteerResult res = solve_ofccs(s, f, SteerOptions{.method = Method::Unconstrained});
    const auto ans = inst.solve();
    return std::max({std::abs(res.policy.K[0](0, 0) - ans.K), std::abs(res.policy.cost_cov - ans.cost_cov),
                     std::abs(res.policy.m[0](0) - ans.m), std::abs(res.policy.cost_mean - ans.cost_mean)});
}

// ---------------------------------------------------------------------------------------------
// Property checks. Each returns a count of violations (or a worst error) over random samples.

inline double quantile_roundtrip_error() {
    double worst = 0.0;
    for (int i = 1; i < 1000; ++i) {
        const double p = i / 1000.0;
        worst = std::max(worst, std::abs(normal_cdf(normal_quantile(p)) - p));
    }
    for (double p : {1e-12, 1e-9, 1e-6, 1e-4, 1 - 1e-4, 1 - 1e-6, 1 - 1e-9})
        worst = std::max(worst, std::abs(normal_cdf(normal_quantile(p)) - p));
    return worst;
}

/// ghat(mu) <= g(mu) on random points around random references.
inline int ccp_underestimator_violations(std::mt19937_64& rng, int samples, double slack = 1e-9) {
    int bad = 0;
    for (int t = 0; t < samples; ++t) {
        const int n = 1 + t % 4;
        const Halfspace hs{random_vector(rng, n), random_vector(rng, 1)(0) + 3.0};
        const Vector ref = random_vector(rng, n);
        const Vector mu = ref + random_vector(rng, n, 2.0);
        const double g = dc_g(hs, mu);
        if (dc_g_linearized(hs, ref, mu) > g + slack * std::max(1.0, g)) ++bad;
    }
    return bad;
}

/// The tangent surrogate dominates the exact margin for every PSD covariance.
inline int tangent_overestimator_violations(std::mt19937_64& rng, int samples, double slack = 1e-9) {
    int bad = 0;
    std::uniform_real_distribution<double> risk(1e-4, 0.4);
    for (int t = 0; t < samples; ++t) {
        const int n = 1 + t % 4;
        const Halfspace hs{random_vector(rng, n), random_vector(rng, 1)(0)};
        const double delta = risk(rng);
        const Matrix ref = random_spd(rng, n, 0.5, 0.01);
        const Matrix X = (t % 10 == 0) ? Matrix(Matrix::Zero(n, n)) : random_spd(rng, n, 1.0, 0.0);
        const Vector mu = random_vector(rng, n);
        const AffineMomentConstraint c = tangent_linearize(ref, hs, delta, Target::State);
        const double exact = exact_margin(mu, X, hs, delta);
        if (exact > c.evaluate(X, mu) + slack * std::max(1.0, std::abs(exact))) ++bad;
    }
    return bad;
}

/// Filter invariants on random instances: PSD covariances, posterior below prior, gains consistent.
inline int filter_invariant_violations(std::mt19937_64& rng, int instances) {
    int bad = 0;
    for (int t = 0; t < instances; ++t) {
        const ProblemSpec s = random_spec(rng, 2 + t % 3, 1 + t % 2, 1 + t % 3, 4 + t % 5);
        const FilterBundle f = precompute_filter(s);
        for (int k = 0; k <= s.horizon; ++k) {
            const auto i = static_cast<std::size_t>(k);
            const Matrix& post = f.Sigma_tilde[i];
            const Matrix& prior = f.Sigma_tilde_prior[i];
            if (!linalg::is_symmetric(post) || !linalg::is_psd(post) || !linalg::is_psd(prior)) ++bad;
            if (!linalg::is_psd(prior - post, 1e-10)) ++bad;
            if (!linalg::is_psd(f.innovation_injection(k), 1e-10)) ++bad;
            if (linalg::min_eigenvalue(f.Sigma_innov[i]) <= 0.0) ++bad;
            // Injection equals the variance removed by the update.
            if ((f.innovation_injection(k) - (prior - post)).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, prior.norm()))
                ++bad;
        }
    }
    return bad;
}

/// Random constrained variants of the double integrator whose unconstrained mean path crosses
/// the half-space. Infeasible draws are skipped.
struct CcpRun {
    int attempted = 0;
    int solved = 0;
    int non_monotone = 0;
    double worst_increase = 0.0;  // relative
    double worst_margin = -kInf;
};

inline CcpRun ccp_monotonicity(std::mt19937_64& rng, int wanted, int horizon = 10, int max_attempts = 200) {
    const ProblemSpec base = rescale_horizon(double_integrator().without_constraints(), horizon);
    const FilterBundle filt = precompute_filter(base);
    const MeanPlan plan = solve_mean_unconstrained(base);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi), frac(0.15, 0.85);

    CcpRun run;
    while (run.solved < wanted && run.attempted < max_attempts) {
        ++run.attempted;
        const double th = angle(rng);
        Vector a = Vector::Zero(4);
        a << std::cos(th), std::sin(th), 0.0, 0.0;
        double lo = std::max(a.dot(base.mu0), a.dot(base.mu_f)), hi = -kInf;
        for (int k = 1; k < horizon; ++k) hi = std::max(hi, a.dot(plan.mu[static_cast<std::size_t>(k)]));
        if (hi - lo < 0.2) continue;  // the path never bulges past its endpoints in this direction
        ProblemSpec s = base;
        s.Delta_x = 0.05;
        const Halfspace hs{a, lo + 0.3 + frac(rng) * (hi - lo)};
        for (int k = 1; k < horizon; ++k) s.state_halfspaces[static_cast<std::size_t>(k)] = {hs};
        try {
            const SteerResult r = solve_ofccs(s, filt, SteerOptions{});
            ++run.solved;
            const auto& it = r.trace.iterations;
            bool mono = true;
            for (std::size_t i = 1; i < it.size(); ++i) {
                const double inc = (it[i].cost - it[i - 1].cost) / std::max(1.0, std::abs(it[i - 1].cost));
                run.worst_increase = std::max(run.worst_increase, inc);
                if (inc > 1e-7) mono = false;
            }
            if (!mono) ++run.non_monotone;
            run.worst_margin = std::max(run.worst_margin, it.back().max_margin);
        } catch (const InfeasibleError&) {
        }
    }
    return run;
}

/// Two runs with equal seeds give byte-identical serialized reports; a different seed does not.
inline bool simulator_deterministic(const ProblemSpec& s, const FilterBundle& f, const Policy& p, int trials) {
    const std::string a = serialize_report(monte_carlo(s, f, p, trials, 7));
    const std::string b = serialize_report(monte_carlo(s, f, p, trials, 7));
    const std::string c = serialize_report(monte_carlo(s, f, p, trials, 8));
    return a == b && a != c;
}

}  // namespace covsteer::testing
