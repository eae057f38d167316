#pragma once

#include "covsteer/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace covsteer::cli {

enum ExitCode : int {
    kOk = 0,
    kOrderingViolated = 1,  // compare: dc-ccp came out more expensive than the baseline
    kUsage = 2,
    kInfeasible = 3,
    kNotConverged = 4,
};

/// Entry point behind the `covsteer` executable. Never throws; errors become exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

struct BenchRecord {
    int N = 0;
    std::string formulation;  // "sequential" or "batch"
    int repeat = 0;
    double ms = 0.0;
    std::string status;  // "ok", "infeasible" or "failed"
    long lmi_dim = 0;    // largest LMI side
};

/// Solves the constraint-free rescaled instance for every (N, formulation, repeat); only the
/// solve calls are timed. Failures are recorded in the row.
std::vector<BenchRecord> run_bench(const ProblemSpec& spec, const std::vector<int>& horizons,
                                   const std::vector<std::string>& formulations, int repeats);

struct BenchSummary {
    int N = 0;
    std::string formulation;
    int ok = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double median = 0.0;
};

/// Statistics over the successful repeats, in first-appearance order of (N, formulation).
std::vector<BenchSummary> summarize(const std::vector<BenchRecord>& records);

/// Header `N,formulation,repeat,ms,status,lmi_dim`, the raw rows, then one summary row per
/// (N, formulation) with repeat=summary, ms=mean and the std/median packed into status.
std::string bench_csv(const std::vector<BenchRecord>& records);

/// Least-squares slope of log(ms) against log(N).
double loglog_slope(const std::vector<int>& N, const std::vector<double>& ms);

/// Boundary of {center + sigma * Sigma^{1/2} z : |z| = 1} for the leading 2x2 block, as a
/// 2 x points matrix. Throws std::invalid_argument for a non-PSD block or a 1-D state.
Matrix ellipse_points(const Matrix& cov, const Vector& center, double sigma, int points = 64);

}  // namespace covsteer::cli
