#include "covsteer/steer.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace covsteer;

namespace {

double terminal_cov_error(const ProblemSpec& s, const FilterBundle& f, const Policy& p) {
    return (p.Sigma_hat.back() - (s.Sigma_xf - f.Sigma_tilde.back())).norm();
}

}  // namespace

TEST_SUITE("steer") {

TEST_CASE("mean steering matches the stacked least-squares solution") {
    std::mt19937_64 rng(51);
    for (int rep = 0; rep < 5; ++rep) {
        const ProblemSpec s = testing::random_spec(rng, 3, 1 + rep % 2, 2, 4 + rep);
        CHECK(testing::mean_oracle_error(s) <= 1e-8);
    }
    CHECK(testing::mean_oracle_error(testing::double_integrator()) <= 1e-8);
}

TEST_CASE("unreachable mean target is infeasible") {
    ProblemSpec s = testing::double_integrator();
    for (auto& B : s.B) B.col(1).setZero();  // only the first axis is actuated
    s.mu_f(1) = 100.0;
    CHECK_THROWS_AS(solve_mean_unconstrained(s), InfeasibleError);
}

TEST_CASE("one-step scalar steering matches the closed form") {
    testing::ScalarInstance inst;
    CHECK(testing::scalar_oracle_error(inst) <= 1e-8);
    inst.a = -0.8;
    inst.b = 1.5;
    inst.xf = 1.4;
    CHECK(testing::scalar_oracle_error(inst) <= 1e-8);
}

TEST_CASE("unconstrained solution meets the terminal covariance and is lossless") {
    std::mt19937_64 rng(52);
    for (int rep = 0; rep < 3; ++rep) {
        const ProblemSpec s = testing::random_spec(rng, 3, 3, 2, 5);
        const FilterBundle f = precompute_filter(s);
        const SteerResult r = solve_ofccs(s, f, {.method = Method::Unconstrained});
        CHECK(r.trace.converged);
        CHECK(terminal_cov_error(s, f, r.policy) <= 1e-6);
        CHECK(lossless_residual(r.solution) <= 1e-6);
        // closed-loop propagation with the recovered gains reproduces the program's covariances
        const MomentTrajectory t = propagate_moments(r.policy, f, s);
        CHECK(testing::max_abs_diff(t.Sigma_hat, r.policy.Sigma_hat) <= 1e-6);
    }
}

TEST_CASE("dc-ccp on the example steers exactly and satisfies every chance constraint") {
    const ProblemSpec s = testing::double_integrator();
    const FilterBundle f = precompute_filter(s);
    const SteerResult r = solve_ofccs(s, f);
    CHECK(r.trace.converged);
    CHECK(terminal_cov_error(s, f, r.policy) <= 1e-6);
    CHECK((r.policy.mu.back() - s.mu_f).norm() <= 1e-6);
    CHECK(lossless_residual(r.solution) <= 1e-6);
    for (const auto& it : r.trace.iterations) CHECK(it.lossless <= 1e-6);
    const MomentTrajectory t = propagate_moments(r.policy, f, s);
    CHECK(max_exact_margin(s, t, allocate_risk(s)) <= 1e-8);
    CHECK((t.mu.back() - s.mu_f).norm() <= 1e-6);

    // the chance constraints cost something relative to the unconstrained plan
    const SteerResult u = solve_ofccs(s, f, {.method = Method::Unconstrained});
    CHECK(u.policy.total_cost() < r.policy.total_cost());
    CHECK(max_exact_margin(s, propagate_moments(u.policy, f, s), allocate_risk(s)) > 0.0);
}

TEST_CASE("dc-ccp is no more conservative than the tangent baseline") {
    const ProblemSpec s = testing::double_integrator();
    const FilterBundle f = precompute_filter(s);
    const SteerResult dc = solve_ofccs(s, f, {.method = Method::DcCcp});
    const SteerResult lin = solve_ofccs(s, f, {.method = Method::Linearized});
    CHECK(lin.trace.converged);
    CHECK(dc.policy.total_cost() <= lin.policy.total_cost() + 1e-6);
    CHECK(lossless_residual(lin.solution) <= 1e-6);
    CHECK(max_exact_margin(s, propagate_moments(lin.policy, f, s), allocate_risk(s)) <= 1e-8);
}

TEST_CASE("without constraints all methods agree") {
    const ProblemSpec s = rescale_horizon(testing::double_integrator().without_constraints(), 8);
    const FilterBundle f = precompute_filter(s);
    const double base = solve_ofccs(s, f, {.method = Method::Unconstrained}).policy.total_cost();
    CHECK(solve_ofccs(s, f, {.method = Method::DcCcp}).policy.total_cost() == doctest::Approx(base).epsilon(1e-9));
    CHECK(solve_ofccs(s, f, {.method = Method::Linearized}).policy.total_cost() ==
          doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("CCP cost never increases across iterations") {
    std::mt19937_64 rng(53);
    const auto run = testing::ccp_monotonicity(rng, 5);
    CHECK(run.solved == 5);
    CHECK(run.non_monotone == 0);
    CHECK(run.worst_margin <= 1e-8);
}

TEST_CASE("terminal covariance below the error floor is infeasible") {
    ProblemSpec s = testing::double_integrator();
    const FilterBundle f = precompute_filter(s);
    s.Sigma_xf = f.Sigma_tilde.back();
    CHECK_THROWS_AS(solve_ofccs(s, f), InfeasibleError);
}

TEST_CASE("gain recovery rejects singular covariances") {
    SteeringSolution sol;
    sol.Sigma_hat = {Matrix::Zero(2, 2), Matrix::Identity(2, 2)};
    sol.U = {Matrix::Zero(1, 2)};
    sol.Y = {Matrix::Zero(1, 1)};
    CHECK_THROWS_AS(recover_gains(sol), NumericalError);
}

TEST_CASE("method names round trip") {
    for (Method m : {Method::DcCcp, Method::Linearized, Method::Unconstrained})
        CHECK(parse_method(to_string(m)) == m);
    CHECK_FALSE(parse_method("batch").has_value());
}

}
