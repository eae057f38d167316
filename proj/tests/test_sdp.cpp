#include "covsteer/sdp.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <sstream>

using namespace covsteer;
using namespace covsteer::sdp;

namespace {

// min <C, X> s.t. tr X = 1, X >= 0, whose value is lambda_min(C).
double min_eig_by_sdp(const Matrix& C, SolveStatus* status = nullptr) {
    ConicProgram p;
    const auto X = p.add_symmetric(static_cast<int>(C.rows()), "X");
    p.add_equality(p.var(X).trace() - 1.0, "unit_trace");
    p.add_psd(p.var(X), "X_psd");
    p.minimize(p.var(X).dot(C));
    const auto sol = solve(p, {.tol = 1e-9});
    if (status) *status = sol.status;
    return sol.objective;
}

}  // namespace

TEST_SUITE("sdp") {

TEST_CASE("LinExpr merges terms and evaluates") {
    LinExpr e = LinExpr::variable(2, 3.0) + LinExpr::variable(0) - LinExpr::variable(2, 1.0) + 4.0;
    e.compress();
    REQUIRE(e.terms.size() == 2);
    CHECK(e.terms[0].first == 0);
    CHECK(e.terms[1].second == 2.0);
    Vector x(3);
    x << 1.0, 5.0, 2.0;
    CHECK(e.evaluate(x) == 9.0);
    LinExpr z = LinExpr::variable(1) - LinExpr::variable(1);
    z.compress();
    CHECK(z.is_constant());
}

TEST_CASE("AffineMatrix algebra evaluates like dense matrices") {
    std::mt19937_64 rng(41);
    ConicProgram p;
    const auto X = p.add_matrix(2, 3, "X");
    const auto S = p.add_symmetric(3, "S");
    Vector x = testing::random_vector(rng, p.num_variables());
    const Matrix Xv = p.value(X, x);
    const Matrix Sv = p.value(S, x);
    CHECK(linalg::asymmetry(Sv) == 0.0);
    const Matrix M = testing::random_matrix(rng, 4, 2);
    const AffineMatrix e = M * p.var(X) * Sv + 2.0 * AffineMatrix::constant(M * Xv);
    CHECK((e.evaluate(x) - (M * Xv * Sv + 2.0 * M * Xv)).norm() < 1e-12 * std::max(1.0, Xv.norm()));
    CHECK((p.var(X).transpose().evaluate(x) - Xv.transpose()).norm() == 0.0);
    CHECK((p.var(S).block(1, 0, 2, 2).evaluate(x) - Sv.block(1, 0, 2, 2)).norm() == 0.0);
    CHECK(p.var(S).trace().evaluate(x) == doctest::Approx(Sv.trace()));
    const Matrix W = testing::random_matrix(rng, 2, 3);
    CHECK(p.var(X).dot(W).evaluate(x) == doctest::Approx((W.cwiseProduct(Xv)).sum()));
}

TEST_CASE("small LP") {
    ConicProgram p;
    const auto x = p.add_scalar("x");
    const auto y = p.add_scalar("y");
    p.add_inequality(1.0 - p.scalar(x), "x_lb");
    p.add_inequality(2.0 - p.scalar(y), "y_lb");
    p.add_inequality(p.scalar(x) + p.scalar(y) - 10.0, "sum_ub");
    p.minimize(p.scalar(x) + 2.0 * p.scalar(y));
    const auto sol = solve(p);
    CHECK(sol.optimal());
    CHECK(sol.objective == doctest::Approx(5.0).epsilon(1e-7));
    CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("smallest eigenvalue through a trace-one SDP") {
    std::mt19937_64 rng(42);
    for (int n : {3, 8, 20}) {
        const Matrix W = testing::random_matrix(rng, n, n);
        const Matrix C = linalg::symmetrize(W + W.transpose());
        SolveStatus st;
        const double v = min_eig_by_sdp(C, &st);
        CAPTURE(n);
        CHECK((st == SolveStatus::Optimal || st == SolveStatus::Inaccurate));
        CHECK(v == doctest::Approx(linalg::min_eigenvalue(C)).epsilon(1e-7));
    }
}

TEST_CASE("largest eigenvalue through a linear matrix inequality") {
    std::mt19937_64 rng(43);
    const int n = 20;
    const Matrix C = testing::random_spd(rng, n);
    ConicProgram p;
    const auto t = p.add_scalar("t");
    AffineMatrix lmi = AffineMatrix::constant(-C);
    for (int i = 0; i < n; ++i) lmi(i, i) += p.scalar(t);
    p.add_psd(lmi, "tI_minus_C");
    p.minimize(p.scalar(t));
    const auto sol = solve(p, {.tol = 1e-9});
    CHECK(sol.usable());
    CHECK(sol.objective == doctest::Approx(linalg::max_eigenvalue(C)).epsilon(1e-7));
}

TEST_CASE("Schur complement bound on a quadratic form") {
    // min t s.t. [[t, v^T], [v, P]] >= 0 gives t = v^T P^{-1} v.
    std::mt19937_64 rng(44);
    const Matrix P = testing::random_spd(rng, 4);
    const Vector v = testing::random_vector(rng, 4);
    ConicProgram p;
    const auto t = p.add_scalar("t");
    AffineMatrix tt(1, 1);
    tt(0, 0) = p.scalar(t);
    const AffineMatrix vv = AffineMatrix::constant(v);
    p.add_psd(blocks(tt, vv.transpose(), vv, AffineMatrix::constant(P)), "schur");
    p.minimize(p.scalar(t));
    const auto sol = solve(p, {.tol = 1e-10});
    CHECK(sol.objective == doctest::Approx(v.dot(P.ldlt().solve(v))).epsilon(1e-8));
}

TEST_CASE("infeasible and unbounded programs are detected") {
    {
        ConicProgram p;
        const auto x = p.add_scalar("x");
        p.add_inequality(1.0 - p.scalar(x), "lb");
        p.add_inequality(p.scalar(x), "ub");
        p.minimize(p.scalar(x));
        CHECK(solve(p).status == SolveStatus::Infeasible);
    }
    {
        ConicProgram p;
        const auto X = p.add_symmetric(2, "X");
        p.add_psd(p.var(X), "X_psd");
        p.add_equality(p.var(X)(0, 0) + 1.0, "negative_diag");
        p.minimize(p.var(X).trace());
        CHECK(solve(p).status == SolveStatus::Infeasible);
    }
    {
        ConicProgram p;
        const auto x = p.add_scalar("x");
        p.add_inequality(p.scalar(x), "ub");
        p.minimize(p.scalar(x));
        CHECK(solve(p).status == SolveStatus::Unbounded);
    }
}

TEST_CASE("program bookkeeping") {
    ConicProgram p;
    const auto S = p.add_symmetric(3, "S");
    const auto U = p.add_matrix(2, 3, "U");
    CHECK(S.size() == 6);
    CHECK(U.size() == 6);
    CHECK(p.num_variables() == 12);
    p.add_equality(p.var(S) - Matrix::Identity(3, 3), "eq_S");
    p.add_equality(p.var(U) - Matrix::Zero(2, 3), "eq_U");
    CHECK(p.equality_groups() == 2);
    CHECK(p.count_equality_groups("eq_") == 2);
    CHECK(p.equalities().size() == 6 + 6);
    p.add_psd(p.var(S), "psd_S");
    CHECK(p.count_psd("psd") == 1);
    CHECK_THROWS_AS(p.add_psd(p.var(U), "bad"), std::invalid_argument);
    std::ostringstream os;
    p.dump(os);
    CHECK_FALSE(os.str().empty());
}

}
