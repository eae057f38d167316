// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include "covsteer/batch.hpp"
#include "covsteer/cli.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

using namespace covsteer;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Example {
    ProblemSpec spec = testing::double_integrator();
    FilterBundle filt = precompute_filter(spec);
    SteerResult dc, lin, unc;
    double dc_seconds = 0.0;
};

Verdict terminal_steering(Example& ex) {
    const auto t0 = clock_type::now();
    const ProblemSpec spec = testing::double_integrator();
    const FilterBundle filt = precompute_filter(spec);
    ex.dc = solve_ofccs(spec, filt, {.method = Method::DcCcp});
    ex.dc_seconds = seconds_since(t0);
    const double cov_err = (ex.dc.policy.Sigma_hat.back() - (spec.Sigma_xf - filt.Sigma_tilde.back())).norm();
    const double mean_err = (ex.dc.policy.mu.back() - spec.mu_f).norm();
    return {cov_err <= 1e-6 && mean_err <= 1e-6 && ex.dc_seconds < 10.0,
            fmt("|Sigma_hat_N - (Sigma_xf - Sigma_tilde_N)|_F = %.3e, |mu_N - mu_f| = %.3e, %.2f s", cov_err,
                mean_err, ex.dc_seconds)};
}

Verdict lossless(Example& ex) {
    double worst = -1.0;
    int optima = 0;
    auto take = [&](const SteerResult& r) {
        worst = std::max(worst, lossless_residual(r.solution));
        ++optima;
        for (const auto& it : r.trace.iterations) {
            worst = std::max(worst, it.lossless);
            ++optima;
        }
    };
    ex.lin = solve_ofccs(ex.spec, ex.filt, {.method = Method::Linearized});
    ex.unc = solve_ofccs(ex.spec, ex.filt, {.method = Method::Unconstrained});
    take(ex.dc);
    take(ex.lin);
    take(ex.unc);
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 5; ++rep) {
        const ProblemSpec s = testing::random_spec(rng, 3, 2 + rep % 2, 2, 5 + rep);
        take(solve_ofccs(s, precompute_filter(s), {.method = Method::Unconstrained}));
    }
    const ProblemSpec sc = testing::ScalarInstance{}.spec();
    take(solve_ofccs(sc, precompute_filter(sc), {.method = Method::Unconstrained}));
    return {worst <= 1e-6, fmt("max trace(Y - U S^-1 U^T) = %.3e over %d optima", worst, optima)};
}

Verdict monte_carlo_validation(const Example& ex) {
    const auto t0 = clock_type::now();
    const McReport r = monte_carlo(ex.spec, ex.filt, ex.dc.policy, 100000, 42);
    const double secs = seconds_since(t0);
    const double rel = (r.terminal_cov - ex.spec.Sigma_xf).norm() / ex.spec.Sigma_xf.norm();
    return {rel <= 0.05 && r.joint_state_violation <= ex.spec.Delta_x && secs < 60.0,
            fmt("terminal covariance rel. error %.4f, joint state violation %.5f (budget %.2f), %.2f s", rel,
                r.joint_state_violation, ex.spec.Delta_x, secs)};
}

Verdict conservatism(const Example& ex) {
    const double dc = ex.dc.policy.total_cost(), lin = ex.lin.policy.total_cost();
    return {dc <= lin + 1e-6, fmt("dc-ccp %.9f, linearized %.9f, linearized - dc-ccp = %.3e", dc, lin, lin - dc)};
}

Verdict scaling() {
    const std::vector<int> horizons{10, 20, 50, 100};
    const auto recs = cli::run_bench(testing::double_integrator(), horizons, {"sequential", "batch"}, 10);
    std::ofstream("acceptance_bench.csv") << cli::bench_csv(recs);
    std::vector<double> seq, bat;
    for (const auto& s : cli::summarize(recs)) {
        if (s.ok != 10) return {false, fmt("N=%d %s: only %d of 10 solves succeeded", s.N, s.formulation.c_str(), s.ok)};
        (s.formulation == "sequential" ? seq : bat).push_back(s.mean);
    }
    bool faster = true;
    std::string means;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        faster = faster && seq[i] < bat[i];
        means += fmt("N=%d %.1f/%.1f ms; ", horizons[i], seq[i], bat[i]);
    }
    const double ratio = bat.back() / seq.back();
    const double s_seq = cli::loglog_slope(horizons, seq), s_bat = cli::loglog_slope(horizons, bat);
    return {faster && ratio >= 10.0 && s_seq <= 1.5 && s_bat >= 1.8,
            means + fmt("ratio at N=100 %.1f, slopes sequential %.2f batch %.2f", ratio, s_seq, s_bat)};
}

Verdict oracles() {
    std::mt19937_64 rng(606);
    const double a = testing::kalman_oracle_error(testing::random_spec(rng, 2, 1, 1, 3));
    double b = testing::mean_oracle_error(testing::double_integrator());
    for (int rep = 0; rep < 3; ++rep) b = std::max(b, testing::mean_oracle_error(testing::random_spec(rng, 3, 2, 2, 6)));
    const double c = testing::scalar_oracle_error(testing::ScalarInstance{});
    return {a <= 1e-10 && b <= 1e-8 && c <= 1e-8,
            fmt("(a) Kalman vs conditioning %.2e, (b) mean vs stacked LS %.2e, (c) scalar N=1 %.2e", a, b, c)};
}

Verdict properties(const Example& ex) {
    std::mt19937_64 rng(707);
    const double q = testing::quantile_roundtrip_error();
    const int under = testing::ccp_underestimator_violations(rng, 1000);
    const int over = testing::tangent_overestimator_violations(rng, 1000);
    const auto ccp = testing::ccp_monotonicity(rng, 20);
    const int filt = testing::filter_invariant_violations(rng, 25);
    const bool det = testing::simulator_deterministic(ex.spec, ex.filt, ex.dc.policy, 2000);
    const bool pass = q <= 1e-10 && under == 0 && over == 0 && ccp.solved == 20 && ccp.non_monotone == 0 &&
                      filt == 0 && det;
    return {pass, fmt("quantile %.1e, under-estimator %d/1000, over-estimator %d/1000, CCP monotone %d/%d "
                      "(worst rel. increase %.1e), filter invariant violations %d, simulator deterministic %s",
                      q, under, over, ccp.solved - ccp.non_monotone, ccp.solved, ccp.worst_increase, filt,
                      det ? "yes" : "no")};
}

}  // namespace

int main() {
    Example ex;
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
        {1, [&] { return terminal_steering(ex); }},
        {2, [&] { return lossless(ex); }},
        {3, [&] { return monte_carlo_validation(ex); }},
        {4, [&] { return conservatism(ex); }},
        {6, [] { return oracles(); }},
        {7, [&] { return properties(ex); }},
        {5, [] { return scaling(); }},
    };
    std::vector<std::string> lines(8);
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += v.pass ? 0 : 1;
        lines[static_cast<std::size_t>(id)] = fmt("CRITERION %d: %s  %s", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::printf("%s\n", lines[static_cast<std::size_t>(id)].c_str());
        std::fflush(stdout);
    }
    std::printf("\nsummary (criteria 1-7):\n");
    for (std::size_t i = 1; i < lines.size(); ++i) std::printf("%s\n", lines[i].c_str());
    return failed == 0 ? 0 : 1;
}
