#include "covsteer/chance.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace covsteer {

namespace {

double total(const std::vector<std::vector<double>>& grid) {
    double s = 0.0;
    for (const auto& row : grid)
        for (double d : row) s += d;
    return s;
}

// erf for 0 <= x < 3 from the everywhere-positive series
// erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)).
double erf_series(double x) {
    double term = x;
    double sum = x;
    for (int n = 1; n < 500; ++n) {
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x) * sum;
}

// erfc for x >= 3 from the continued fraction
// erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), evaluated backwards.
double erfc_fraction(double x) {
    double tail = x;
    for (int n = 120; n >= 1; --n) tail = x + 0.5 * n / tail;
    return std::exp(-x * x) / std::sqrt(std::numbers::pi) / tail;
}

// Upper tail 1 - Phi(z) for z >= 0.
double upper_tail(double z) {
    const double x = z / std::numbers::sqrt2;
    return x < 3.0 ? 0.5 * (1.0 - erf_series(x)) : 0.5 * erfc_fraction(x);
}

}  // namespace

double AffineMomentConstraint::evaluate(const Matrix& cov, const Vector& mean) const {
    return (coeff_cov.cwiseProduct(cov)).sum() + coeff_mean.dot(mean) + constant;
}

double RiskAllocation::state_total() const { return total(delta_state); }
double RiskAllocation::input_total() const { return total(delta_input); }

double uniform_risk(double Delta, int N, int Nc) {
    if (!(Delta > 0.0) || N < 1 || Nc < 1) throw std::invalid_argument("uniform_risk needs Delta > 0, N >= 1, Nc >= 1");
    return Delta / (static_cast<double>(N) * static_cast<double>(Nc));
}

RiskAllocation allocate_risk(const ProblemSpec& spec) {
    RiskAllocation out;
    const int N = spec.horizon;
    const int ncx = spec.max_state_constraints();
    const int ncu = spec.max_input_constraints();
    out.delta_state.resize(spec.state_halfspaces.size());
    out.delta_input.resize(spec.input_halfspaces.size());
    for (std::size_t k = 0; k < spec.state_halfspaces.size(); ++k)
        out.delta_state[k].assign(spec.state_halfspaces[k].size(), ncx > 0 ? uniform_risk(spec.Delta_x, N, ncx) : 0.0);
    for (std::size_t k = 0; k < spec.input_halfspaces.size(); ++k)
        out.delta_input[k].assign(spec.input_halfspaces[k].size(), ncu > 0 ? uniform_risk(spec.Delta_u, N, ncu) : 0.0);
    return out;
}

double normal_cdf(double z) { return z >= 0.0 ? 1.0 - upper_tail(z) : upper_tail(-z); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile needs p in (0, 1)");
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (normal_cdf(mid) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double exact_margin(const Vector& mu, const Matrix& Sigma, const Halfspace& hs, double delta) {
    const double s = std::max(0.0, hs.normal.dot(Sigma * hs.normal));
    return normal_quantile(1.0 - delta) * std::sqrt(s) + hs.normal.dot(mu) - hs.offset;
}

double dc_g(const Halfspace& hs, const Vector& mu) {
    const double d = hs.offset - hs.normal.dot(mu);
    return d * d;
}

double dc_g_linearized(const Halfspace& hs, const Vector& mu_ref, const Vector& mu) {
    const double d = hs.offset - hs.normal.dot(mu_ref);
    return d * d - 2.0 * d * hs.normal.dot(mu - mu_ref);
}

AffineMomentConstraint dc_linearize(const Vector& mu_ref, const Halfspace& hs, double delta, Target target,
                                    int step) {
    const double d = hs.offset - hs.normal.dot(mu_ref);
    if (d < 0.0)
        throw InfeasibleError("reference violates the side constraint (offset - normal^T mu = " + std::to_string(d) +
                              ") at k=" + std::to_string(step));
    const double q = normal_quantile(1.0 - delta);
    AffineMomentConstraint c;
    c.target = target;
    c.step = step;
    c.coeff_cov = q * q * hs.normal * hs.normal.transpose();
    // f(X) - [d^2 - 2 d a^T (v - v_ref)] = f(X) + 2 d a^T v - 2 d a^T v_ref - d^2
    c.coeff_mean = 2.0 * d * hs.normal;
    c.constant = -d * d - 2.0 * d * hs.normal.dot(mu_ref);
    return c;
}

AffineMomentConstraint tangent_linearize(const Matrix& ref, const Halfspace& hs, double delta, Target target,
                                         int step) {
    const double s = hs.normal.dot(ref * hs.normal);
    if (!(s > 0.0))
        throw NumericalError("degenerate tangent reference (a^T X a = " + std::to_string(s) + ") at k=" +
                             std::to_string(step));
    const double q = normal_quantile(1.0 - delta);
    const double r = std::sqrt(s);
    AffineMomentConstraint c;
    c.target = target;
    c.step = step;
    // q sqrt(t) <= q r / 2 + q t / (2 r) for all t >= 0, with equality at t = s.
    c.coeff_cov = (q / (2.0 * r)) * hs.normal * hs.normal.transpose();
    c.coeff_mean = hs.normal;
    c.constant = 0.5 * q * r - hs.offset;
    return c;
}

}  // namespace covsteer
