#pragma once

#include "covsteer/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace covsteer {

/// Half-space {v : normal^T v <= offset}.
struct Halfspace {
    Vector normal;
    double offset = 0.0;

    bool operator==(const Halfspace& other) const {
        return offset == other.offset && normal.size() == other.normal.size() && normal == other.normal;
    }
};

/// Output-feedback covariance steering instance.
///
/// Dynamics x_{k+1} = A_k x_k + B_k u_k + G_k w_k (k = 0..N-1), measurements
/// y_k = C_k x_k + D_k v_k (k = 0..N), w_k, v_k standard normal. Every sequence
/// is stored explicitly; files may give a single matrix which is broadcast.
struct ProblemSpec {
    int horizon = 0;

    MatrixSeq A, B, G;  // length N
    MatrixSeq C, D;     // length N + 1
    MatrixSeq Q, R;     // length N

    Vector mu0;
    Matrix Sigma_hat0_minus;
    Matrix Sigma_tilde0_minus;

    Vector mu_f;
    Matrix Sigma_xf;

    // state_halfspaces[k] for k = 0..N (k = 0 must be empty); input_halfspaces[k] for k = 0..N-1.
    std::vector<std::vector<Halfspace>> state_halfspaces;
    std::vector<std::vector<Halfspace>> input_halfspaces;
    double Delta_x = 0.5;
    double Delta_u = 0.5;

    int nx() const { return static_cast<int>(mu0.size()); }
    int nu() const { return B.empty() ? 0 : static_cast<int>(B.front().cols()); }
    int nw() const { return G.empty() ? 0 : static_cast<int>(G.front().cols()); }
    int ny() const { return C.empty() ? 0 : static_cast<int>(C.front().rows()); }

    /// Largest number of state (input) half-spaces at any single step.
    int max_state_constraints() const;
    int max_input_constraints() const;
    bool has_chance_constraints() const;

    /// Initial state covariance Sigma_hat0_minus + Sigma_tilde0_minus.
    Matrix initial_state_cov() const { return Sigma_hat0_minus + Sigma_tilde0_minus; }

    /// Same instance with every chance constraint removed.
    ProblemSpec without_constraints() const;

    bool operator==(const ProblemSpec& other) const;
};

struct ValidationReport {
    std::vector<std::string> issues;

    bool ok() const { return issues.empty(); }
    bool mentions(std::string_view fragment) const;
};

/// Parses the JSON problem document. Throws ParseError on schema violations
/// (naming the field) and ValidationError on dimension mismatches.
ProblemSpec parse_problem(std::string_view text);
ProblemSpec load_problem(const std::filesystem::path& path);

/// Writes the canonical document: every sequence explicit, one list per step.
std::string serialize_problem(const ProblemSpec& spec);

/// Checks every well-posedness condition; the report is empty iff the spec is usable.
ValidationReport validate(const ProblemSpec& spec);

/// Rebuilds `spec` with horizon `N`: time-invariant data is re-broadcast and
/// each half-space keeps its step range pattern. Requires constant sequences.
ProblemSpec rescale_horizon(const ProblemSpec& spec, int N);

}  // namespace covsteer
