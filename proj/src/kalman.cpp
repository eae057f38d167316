#include "covsteer/kalman.hpp"

#include "covsteer/linalg.hpp"

namespace covsteer {

namespace {

bool same(const MatrixSeq& a, const MatrixSeq& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols() || a[i] != b[i]) return false;
    return true;
}

}  // namespace

Matrix FilterBundle::innovation_injection(int k) const {
    const auto i = static_cast<std::size_t>(k);
    return linalg::symmetrize(L[i] * Sigma_innov[i] * L[i].transpose());
}

Matrix FilterBundle::initial_estimate_cov(const ProblemSpec& spec) const {
    return linalg::symmetrize(spec.Sigma_hat0_minus + innovation_injection(0));
}

bool FilterBundle::operator==(const FilterBundle& o) const {
    return same(L, o.L) && same(Sigma_tilde_prior, o.Sigma_tilde_prior) && same(Sigma_tilde, o.Sigma_tilde) &&
           same(Sigma_innov, o.Sigma_innov);
}

FilterBundle precompute_filter(const ProblemSpec& spec) {
    const int N = spec.horizon;
    const Eigen::Index nx = spec.nx();
    FilterBundle out;
    out.L.reserve(N + 1);
    out.Sigma_tilde_prior.reserve(N + 1);
    out.Sigma_tilde.reserve(N + 1);
    out.Sigma_innov.reserve(N + 1);

    Matrix prior = linalg::symmetrize(spec.Sigma_tilde0_minus);
    for (int k = 0; k <= N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Matrix& C = spec.C[i];
        const Matrix& D = spec.D[i];
        if (k > 0) {
            const Matrix& A = spec.A[i - 1];
            const Matrix& G = spec.G[i - 1];
            prior = linalg::symmetrize(A * out.Sigma_tilde.back() * A.transpose() + G * G.transpose());
        }
        const Matrix DDt = D * D.transpose();
        const Matrix S = linalg::symmetrize(C * prior * C.transpose() + DDt);
        if (linalg::inverse_condition(S) < 1e-13)
            throw NumericalError("innovation covariance is singular at k=" + std::to_string(k));

        // L = prior C^T S^{-1}, computed as a solve against the SPD innovation covariance.
        const Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success)
            throw NumericalError("innovation covariance is not positive definite at k=" + std::to_string(k));
        const Matrix L = llt.solve(C * prior).transpose();

        const Matrix IminusLC = Matrix::Identity(nx, nx) - L * C;
        const Matrix post =
            linalg::symmetrize(IminusLC * prior * IminusLC.transpose() + L * DDt * L.transpose());

        out.L.push_back(L);
        out.Sigma_tilde_prior.push_back(prior);
        out.Sigma_tilde.push_back(post);
        out.Sigma_innov.push_back(S);
    }
    return out;
}

TerminalFeasibility terminal_feasibility(const ProblemSpec& spec, const FilterBundle& filt) {
    const Matrix gap = linalg::symmetrize(spec.Sigma_xf - filt.Sigma_tilde.back());
    TerminalFeasibility out;
    out.margin = linalg::min_eigenvalue(gap);
    // Strict definiteness with a scale-aware floor: a zero gap must report infeasible.
    out.feasible = out.margin > 1e-12 * std::max(1.0, linalg::max_eigenvalue(spec.Sigma_xf));
    return out;
}

}  // namespace covsteer
