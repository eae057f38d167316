#include "covsteer/cli.hpp"

#include "covsteer/batch.hpp"
#include "covsteer/linalg.hpp"
#include "covsteer/results.hpp"
#include "covsteer/sim.hpp"
#include "covsteer/steer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

namespace covsteer::cli {

namespace {

constexpr double kOrderingSlack = 1e-6;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << content;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
    if (!f) throw std::runtime_error("failed writing " + path);
}

ProblemSpec load_valid_problem(const std::string& path) {
    ProblemSpec spec = load_problem(path);
    const ValidationReport report = validate(spec);
    if (!report.ok()) {
        std::string msg = "invalid problem " + path + ":";
        for (const auto& issue : report.issues) msg += "\n  " + issue;
        throw ValidationError(msg);
    }
    return spec;
}

// Maps the library's exception taxonomy onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ParseError& e) {
        err << "error: " << e.what();
        if (!e.field().empty()) err << " (field " << e.field() << ")";
        err << "\n";
        return kUsage;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const NumericalError& e) {
        err << "not converged: " << e.what() << "\n";
        return kNotConverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
}

int cmd_solve(const std::string& problem_path, const std::string& method_name, const std::string& out_path,
              std::ostream& out, std::ostream& err) {
    const ProblemSpec spec = load_valid_problem(problem_path);
    const Method method = *parse_method(method_name);
    const FilterBundle filt = precompute_filter(spec);
    SteerOptions opts;
    opts.method = method;
    const SteerResult result = solve_ofccs(spec, filt, opts);
    const PolicyDocument doc = make_policy_document(spec, filt, result, method);
    write_output(out_path, serialize_policy(doc), out);

    err << method_name << ": cost " << std::setprecision(10) << result.policy.total_cost() << " after "
        << result.trace.count() << " iteration(s), lossless residual " << std::setprecision(3) << doc.lossless
        << "\n";
    if (!result.trace.converged) {
        err << "not converged within " << opts.max_iters << " iterations\n";
        return kNotConverged;
    }
    return kOk;
}

int cmd_simulate(const std::string& problem_path, const std::string& policy_path, int trials, std::uint64_t seed,
                 const std::string& out_path, std::ostream& out, std::ostream& err) {
    const ProblemSpec spec = load_valid_problem(problem_path);
    const PolicyDocument doc = parse_policy(read_file(policy_path));
    const FilterBundle filt = precompute_filter(spec);
    const McReport report = monte_carlo(spec, filt, doc.policy, trials, seed);
    write_output(out_path, serialize_report(report), out);

    const double rel = (report.terminal_cov - spec.Sigma_xf).norm() / spec.Sigma_xf.norm();
    err << trials << " trials: terminal covariance relative error " << std::setprecision(4) << rel
        << ", joint state violation " << report.joint_state_violation << "\n";
    return kOk;
}

int cmd_bench(const std::string& problem_path, const std::vector<int>& horizons,
              const std::vector<std::string>& formulations, int repeats, const std::string& out_path,
              std::ostream& out, std::ostream& err) {
    const ProblemSpec spec = load_valid_problem(problem_path);
    const auto records = run_bench(spec, horizons, formulations, repeats);
    write_output(out_path, bench_csv(records), out);

    for (const auto& s : summarize(records))
        err << "N=" << s.N << " " << s.formulation << ": mean " << std::fixed << std::setprecision(2) << s.mean
            << " ms over " << s.ok << " run(s)\n";
    const bool any_ok = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.status == "ok"; });
    return any_ok ? kOk : kNotConverged;
}

double solve_cost(const ProblemSpec& spec, const FilterBundle& filt, Method method, std::ostream& err, int& code) {
    SteerOptions opts;
    opts.method = method;
    try {
        const SteerResult r = solve_ofccs(spec, filt, opts);
        if (!r.trace.converged) {
            err << to_string(method) << ": not converged\n";
            code = kNotConverged;
        }
        return r.policy.total_cost();
    } catch (const InfeasibleError& e) {
        err << to_string(method) << ": infeasible: " << e.what() << "\n";
        code = kInfeasible;
    } catch (const NumericalError& e) {
        err << to_string(method) << ": not converged: " << e.what() << "\n";
        code = kNotConverged;
    }
    return std::nan("");
}

int cmd_compare(const std::string& problem_path, std::ostream& out, std::ostream& err) {
    const ProblemSpec spec = load_valid_problem(problem_path);
    const FilterBundle filt = precompute_filter(spec);
    int code = kOk;
    const double dc = solve_cost(spec, filt, Method::DcCcp, err, code);
    if (code != kOk) return code;
    const double lin = solve_cost(spec, filt, Method::Linearized, err, code);
    if (code != kOk) return code;

    out << std::setprecision(12) << "dc-ccp cost: " << dc << "\n"
        << "linearized cost: " << lin << "\n"
        << "difference (linearized - dc-ccp): " << lin - dc << "\n";
    if (dc > lin + kOrderingSlack) {
        err << "dc-ccp cost exceeds the linearized cost\n";
        return kOrderingViolated;
    }
    return kOk;
}

int cmd_export_ellipses(const std::string& policy_path, double sigma, const std::string& out_path,
                        std::ostream& out) {
    const PolicyDocument doc = parse_policy(read_file(policy_path));
    const Policy& p = doc.policy;
    if (p.mu.empty() || p.mu.front().size() < 2) throw ValidationError("ellipses need at least two state coordinates");

    std::ostringstream csv;
    csv << std::setprecision(17) << "k,kind,point,x,y\n";
    auto emit = [&](std::size_t k, const char* kind, const Matrix& cov, const Vector& center) {
        const Matrix pts = ellipse_points(cov, center, sigma);
        for (Eigen::Index i = 0; i < pts.cols(); ++i)
            csv << k << ',' << kind << ',' << i << ',' << pts(0, i) << ',' << pts(1, i) << '\n';
    };
    for (std::size_t k = 0; k < p.mu.size(); ++k) {
        emit(k, "state", doc.Sigma_x[k], p.mu[k]);
        emit(k, "estimate", p.Sigma_hat[k], p.mu[k]);
        emit(k, "error", doc.Sigma_tilde[k], Vector::Zero(p.mu[k].size()));
    }
    write_output(out_path, csv.str(), out);
    return kOk;
}

std::string format_ms(double ms) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << ms;
    return os.str();
}

}  // namespace

std::vector<BenchRecord> run_bench(const ProblemSpec& spec, const std::vector<int>& horizons,
                                   const std::vector<std::string>& formulations, int repeats) {
    using clock = std::chrono::steady_clock;
    std::vector<BenchRecord> records;
    const ProblemSpec base = spec.without_constraints();
    const SteerOptions seq_opts{.method = Method::Unconstrained};

    for (int N : horizons) {
        const ProblemSpec inst = rescale_horizon(base, N);
        const FilterBundle filt = precompute_filter(inst);
        for (const auto& form : formulations) {
            if (form != "sequential" && form != "batch") throw std::invalid_argument("unknown formulation " + form);
            const bool batch = form == "batch";
            for (int r = 0; r < repeats; ++r) {
                BenchRecord rec{.N = N, .formulation = form, .repeat = r, .ms = 0.0, .status = "", .lmi_dim = 0};
                rec.lmi_dim = batch ? static_cast<long>(N + 2) * inst.nx() : inst.nx() + inst.nu();
                const auto t0 = clock::now();
                try {
                    if (batch)
                        solve_batch(inst, filt, seq_opts.solver);
                    else
                        solve_ofccs(inst, filt, seq_opts);
                    rec.status = "ok";
                } catch (const InfeasibleError&) {
                    rec.status = "infeasible";
                } catch (const NumericalError&) {
                    rec.status = "failed";
                }
                rec.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                records.push_back(rec);
            }
        }
    }
    return records;
}

std::vector<BenchSummary> summarize(const std::vector<BenchRecord>& records) {
    std::vector<BenchSummary> out;
    std::vector<std::vector<double>> samples;
    for (const auto& r : records) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const BenchSummary& s) { return s.N == r.N && s.formulation == r.formulation; });
        if (it == out.end()) {
            out.push_back({.N = r.N, .formulation = r.formulation});
            samples.emplace_back();
            it = out.end() - 1;
        }
        if (r.status == "ok") samples[static_cast<std::size_t>(it - out.begin())].push_back(r.ms);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& v = samples[i];
        auto& s = out[i];
        s.ok = static_cast<int>(v.size());
        if (v.empty()) continue;
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        std::sort(v.begin(), v.end());
        const std::size_t h = v.size() / 2;
        s.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    }
    return out;
}

std::string bench_csv(const std::vector<BenchRecord>& records) {
    std::ostringstream os;
    os << "N,formulation,repeat,ms,status,lmi_dim\n";
    for (const auto& r : records)
        os << r.N << ',' << r.formulation << ',' << r.repeat << ',' << format_ms(r.ms) << ',' << r.status << ','
           << r.lmi_dim << '\n';
    std::map<std::pair<int, std::string>, long> dims;
    for (const auto& r : records) dims[{r.N, r.formulation}] = r.lmi_dim;
    for (const auto& s : summarize(records)) {
        os << s.N << ',' << s.formulation << ",summary," << format_ms(s.mean) << ',';
        if (s.ok == 0)
            os << "failed";
        else
            os << "ok;std=" << format_ms(s.stddev) << ";median=" << format_ms(s.median);
        os << ',' << dims[{s.N, s.formulation}] << '\n';
    }
    return os.str();
}

double loglog_slope(const std::vector<int>& N, const std::vector<double>& ms) {
    if (N.size() != ms.size() || N.size() < 2) throw std::invalid_argument("slope needs at least two matched points");
    const auto n = static_cast<double>(N.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < N.size(); ++i) {
        const double x = std::log(static_cast<double>(N[i]));
        const double y = std::log(ms[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Matrix ellipse_points(const Matrix& cov, const Vector& center, double sigma, int points) {
    if (cov.rows() < 2 || cov.cols() < 2 || center.size() < 2) throw std::invalid_argument("ellipse needs a 2-D block");
    if (points < 1) throw std::invalid_argument("ellipse needs at least one point");
    const Matrix block = linalg::symmetrize(cov.topLeftCorner(2, 2));
    if (!linalg::is_psd(block)) throw std::invalid_argument("ellipse covariance block is not PSD");
    const Matrix root = linalg::psd_sqrt(block);
    Matrix pts(2, points);
    for (int i = 0; i < points; ++i) {
        const double t = 2.0 * std::numbers::pi * i / points;
        pts.col(i) = center.head(2) + sigma * root * Eigen::Vector2d(std::cos(t), std::sin(t));
    }
    return pts;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Output-feedback chance-constrained covariance steering", "covsteer"};
    app.require_subcommand(1);

    std::string problem, policy, out_path, method = "dc-ccp";
    int trials = 100000, repeats = 10;
    std::uint64_t seed = 42;
    double sigma = 3.0;
    std::vector<int> horizons{10, 20, 50, 100};
    std::vector<std::string> formulations{"sequential", "batch"};

    auto* solve = app.add_subcommand("solve", "Solve a problem and write the policy document");
    solve->add_option("problem", problem, "Problem JSON")->required();
    solve->add_option("--method", method, "dc-ccp, linearized or unconstrained")
        ->check(CLI::IsMember({"dc-ccp", "linearized", "unconstrained"}));
    solve->add_option("--out", out_path, "Output path (stdout if omitted)");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo a policy on the true system");
    simulate->add_option("problem", problem, "Problem JSON")->required();
    simulate->add_option("--policy", policy, "Policy document")->required();
    simulate->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "Base seed");
    simulate->add_option("--out", out_path, "Output path (stdout if omitted)");

    auto* bench = app.add_subcommand("bench", "Time sequential and batch solves over horizons");
    bench->add_option("problem", problem, "Problem JSON")->required();
    bench->add_option("--horizons", horizons, "Horizons")->delimiter(',')->check(CLI::PositiveNumber);
    bench->add_option("--formulations", formulations, "sequential and/or batch")
        ->delimiter(',')
        ->check(CLI::IsMember({"sequential", "batch"}));
    bench->add_option("--repeats", repeats, "Repeats per horizon")->check(CLI::PositiveNumber);
    bench->add_option("--out", out_path, "CSV path (stdout if omitted)");

    auto* compare = app.add_subcommand("compare", "Compare dc-ccp against the linearized baseline");
    compare->add_option("problem", problem, "Problem JSON")->required();

    auto* ellipses = app.add_subcommand("export-ellipses", "Write covariance ellipse boundary points as CSV");
    ellipses->add_option("policy", policy, "Policy document")->required();
    ellipses->add_option("--sigma", sigma, "Sigma level")->check(CLI::PositiveNumber);
    ellipses->add_option("--out", out_path, "CSV path (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    return guarded(err, [&] {
        if (*solve) return cmd_solve(problem, method, out_path, out, err);
        if (*simulate) return cmd_simulate(problem, policy, trials, seed, out_path, out, err);
        if (*bench) return cmd_bench(problem, horizons, formulations, repeats, out_path, out, err);
        if (*compare) return cmd_compare(problem, out, err);
        return cmd_export_ellipses(policy, sigma, out_path, out);
    });
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace covsteer::cli
