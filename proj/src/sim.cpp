#include "covsteer/sim.hpp"

#include "covsteer/linalg.hpp"

#include <random>

namespace covsteer {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Square-root factors shared by every trial.
struct Sampler {
    Matrix hat0;    // Sigma_hat0_minus = hat0 hat0^T
    Matrix tilde0;  // Sigma_tilde0_minus = tilde0 tilde0^T

    explicit Sampler(const ProblemSpec& spec)
        : hat0(linalg::psd_factor(spec.Sigma_hat0_minus)), tilde0(linalg::psd_factor(spec.Sigma_tilde0_minus)) {}
};

class Normal {
public:
    explicit Normal(std::uint64_t seed) : gen_(seed) {}
    Vector draw(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = dist_(gen_);
        return v;
    }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> dist_;
};

void check_shapes(const ProblemSpec& spec, const FilterBundle& filt) {
    if (filt.horizon() != spec.horizon) throw std::invalid_argument("filter bundle horizon does not match the problem");
}

std::vector<TrialState> run_trial(const ProblemSpec& spec, const FilterBundle& filt, const ControlLaw& law,
                                  const Sampler& sampler, std::uint64_t seed) {
    const int N = spec.horizon;
    Normal rng(seed);
    std::vector<TrialState> states(static_cast<std::size_t>(N + 1));

    Vector x_hat_prior = spec.mu0 + sampler.hat0 * rng.draw(sampler.hat0.cols());
    Vector x = x_hat_prior + sampler.tilde0 * rng.draw(sampler.tilde0.cols());
    VectorSeq xi;
    for (int k = 0;; ++k) {
        const auto i = static_cast<std::size_t>(k);
        TrialState& st = states[i];
        const Vector y = spec.C[i] * x + spec.D[i] * rng.draw(spec.D[i].cols());
        st.x = x;
        st.x_hat_prior = x_hat_prior;
        st.innovation = y - spec.C[i] * x_hat_prior;
        const Vector correction = filt.L[i] * st.innovation;
        st.x_hat = x_hat_prior + correction;
        xi.push_back(k == 0 ? Vector(st.x_hat - spec.mu0) : correction);
        if (k == N) break;

        st.u = law(k, st.x_hat, xi);
        if (st.u.size() != spec.nu()) throw std::invalid_argument("control law returned a vector of the wrong size");
        x = spec.A[i] * x + spec.B[i] * st.u + spec.G[i] * rng.draw(spec.G[i].cols());
        x_hat_prior = spec.A[i] * st.x_hat + spec.B[i] * st.u;
    }
    return states;
}

// Running sums of shifted samples d = v - shift, giving mean and unbiased covariance.
struct Moments {
    Vector shift;
    Vector sum;
    Matrix outer;

    explicit Moments(const Vector& s) : shift(s), sum(Vector::Zero(s.size())), outer(Matrix::Zero(s.size(), s.size())) {}

    void add(const Vector& v) {
        const Vector d = v - shift;
        sum += d;
        outer.noalias() += d * d.transpose();
    }
    Vector mean(int n) const { return shift + sum / n; }
    Matrix cov(int n) const {
        if (n < 2) return Matrix::Zero(shift.size(), shift.size());
        const Vector m = sum / n;
        return linalg::symmetrize((outer - n * m * m.transpose()) / (n - 1));
    }
};

}  // namespace

bool McReport::operator==(const McReport& o) const {
    auto same_seq = [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].size() != b[i].size() || a[i] != b[i]) return false;
        return true;
    };
    return trials == o.trials && seed == o.seed && terminal_mean == o.terminal_mean && terminal_cov == o.terminal_cov &&
           same_seq(state_mean, o.state_mean) && same_seq(state_cov, o.state_cov) &&
           same_seq(estimate_cov, o.estimate_cov) && same_seq(error_cov, o.error_cov) &&
           state_violation == o.state_violation && input_violation == o.input_violation &&
           joint_state_violation == o.joint_state_violation && joint_input_violation == o.joint_input_violation &&
           average_cost == o.average_cost;
}

std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t trial) { return splitmix64(splitmix64(seed) ^ trial); }

ControlLaw feedback_law(const Policy& policy) {
    return [&policy](int k, const Vector& x_hat, const VectorSeq&) {
        const auto i = static_cast<std::size_t>(k);
        return Vector(policy.K[i] * (x_hat - policy.mu[i]) + policy.m[i]);
    };
}

ControlLaw innovation_law(const BatchPolicy& policy, const ProblemSpec&) {
    return [&policy](int k, const Vector&, const VectorSeq& xi) {
        const auto i = static_cast<std::size_t>(k);
        Vector u = policy.m[i];
        for (std::size_t j = 0; j <= i; ++j) u += policy.F[i][j] * xi[j];
        return u;
    };
}

std::vector<TrialState> simulate_trial(const ProblemSpec& spec, const FilterBundle& filt, const ControlLaw& law,
                                       std::uint64_t seed, std::uint64_t trial) {
    check_shapes(spec, filt);
    return run_trial(spec, filt, law, Sampler(spec), trial_seed(seed, trial));
}

McReport monte_carlo(const ProblemSpec& spec, const FilterBundle& filt, const ControlLaw& law, int trials,
                     std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("monte carlo needs at least one trial");
    check_shapes(spec, filt);
    const int N = spec.horizon;
    const Sampler sampler(spec);

    std::vector<Moments> state, estimate, error;
    for (int k = 0; k <= N; ++k) {
        state.emplace_back(spec.mu0);
        estimate.emplace_back(spec.mu0);
        error.emplace_back(Vector::Zero(spec.nx()));
    }
    McReport rep;
    rep.trials = trials;
    rep.seed = seed;
    for (const auto& hs : spec.state_halfspaces) rep.state_violation.emplace_back(hs.size(), 0.0);
    for (const auto& hs : spec.input_halfspaces) rep.input_violation.emplace_back(hs.size(), 0.0);

    std::vector<std::vector<long>> state_hits, input_hits;
    for (const auto& v : rep.state_violation) state_hits.emplace_back(v.size(), 0);
    for (const auto& v : rep.input_violation) input_hits.emplace_back(v.size(), 0);
    long joint_state = 0, joint_input = 0;
    double cost = 0.0;

    for (int t = 0; t < trials; ++t) {
        const auto traj = run_trial(spec, filt, law, sampler, trial_seed(seed, static_cast<std::uint64_t>(t)));
        bool any_state = false, any_input = false;
        double J = 0.0;
        for (int k = 0; k <= N; ++k) {
            const auto i = static_cast<std::size_t>(k);
            const TrialState& st = traj[i];
            state[i].add(st.x);
            estimate[i].add(st.x_hat);
            error[i].add(st.x_hat - st.x);
            for (std::size_t c = 0; c < spec.state_halfspaces[i].size(); ++c) {
                const auto& hs = spec.state_halfspaces[i][c];
                if (hs.normal.dot(st.x) > hs.offset) {
                    ++state_hits[i][c];
                    any_state = true;
                }
            }
            if (k == N) break;
            J += st.x.dot(spec.Q[i] * st.x) + st.u.dot(spec.R[i] * st.u);
            for (std::size_t c = 0; c < spec.input_halfspaces[i].size(); ++c) {
                const auto& hs = spec.input_halfspaces[i][c];
                if (hs.normal.dot(st.u) > hs.offset) {
                    ++input_hits[i][c];
                    any_input = true;
                }
            }
        }
        joint_state += any_state ? 1 : 0;
        joint_input += any_input ? 1 : 0;
        cost += J;
    }

    const double n = trials;
    for (int k = 0; k <= N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        rep.state_mean.push_back(state[i].mean(trials));
        rep.state_cov.push_back(state[i].cov(trials));
        rep.estimate_cov.push_back(estimate[i].cov(trials));
        rep.error_cov.push_back(error[i].cov(trials));
    }
    rep.terminal_mean = rep.state_mean.back();
    rep.terminal_cov = rep.state_cov.back();
    for (std::size_t k = 0; k < state_hits.size(); ++k)
        for (std::size_t c = 0; c < state_hits[k].size(); ++c) rep.state_violation[k][c] = state_hits[k][c] / n;
    for (std::size_t k = 0; k < input_hits.size(); ++k)
        for (std::size_t c = 0; c < input_hits[k].size(); ++c) rep.input_violation[k][c] = input_hits[k][c] / n;
    rep.joint_state_violation = joint_state / n;
    rep.joint_input_violation = joint_input / n;
    rep.average_cost = cost / n;
    return rep;
}

McReport monte_carlo(const ProblemSpec& spec, const FilterBundle& filt, const Policy& policy, int trials,
                     std::uint64_t seed) {
    const int N = spec.horizon;
    if (policy.horizon() != N || static_cast<int>(policy.m.size()) != N ||
        static_cast<int>(policy.mu.size()) != N + 1)
        throw std::invalid_argument("policy horizon does not match the problem");
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        if (policy.K[i].rows() != spec.nu() || policy.K[i].cols() != spec.nx() || policy.m[i].size() != spec.nu() ||
            policy.mu[i].size() != spec.nx())
            throw std::invalid_argument("policy dimensions do not match the problem at k=" + std::to_string(k));
    }
    return monte_carlo(spec, filt, feedback_law(policy), trials, seed);
}

McReport monte_carlo(const ProblemSpec& spec, const FilterBundle& filt, const BatchPolicy& policy, int trials,
                     std::uint64_t seed) {
    const int N = spec.horizon;
    if (policy.horizon() != N || !policy.causal())
        throw std::invalid_argument("batch policy horizon does not match the problem");
    for (int k = 0; k < N; ++k) {
        const auto i = static_cast<std::size_t>(k);
        if (policy.m[i].size() != spec.nu())
            throw std::invalid_argument("batch policy dimensions do not match the problem at k=" + std::to_string(k));
        for (const auto& F : policy.F[i])
            if (F.rows() != spec.nu() || F.cols() != spec.nx())
                throw std::invalid_argument("batch gain dimensions do not match the problem at k=" +
                                            std::to_string(k));
    }
    return monte_carlo(spec, filt, innovation_law(policy, spec), trials, seed);
}

}  // namespace covsteer
