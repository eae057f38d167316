#include "covsteer/model.hpp"

#include "covsteer/linalg.hpp"
#include "json_io.hpp"

#include <fstream>
#include <sstream>

namespace covsteer {

using namespace json_io;

namespace {

// One matrix (broadcast) or an explicit list of `length` matrices.
MatrixSeq read_sequence(const json& j, std::size_t length, const std::string& path) {
    const int depth = array_depth(j);
    if (depth == 2) return MatrixSeq(length, read_matrix(j, path));
    if (depth != 3) throw ParseError("expected a matrix or a list of matrices at " + path, path);
    if (j.size() != length)
        throw ValidationError(path + ": sequence has " + std::to_string(j.size()) + " entries, expected " +
                              std::to_string(length));
    MatrixSeq seq;
    seq.reserve(length);
    for (std::size_t k = 0; k < length; ++k) seq.push_back(read_matrix(j[k], path + "[" + std::to_string(k) + "]"));
    return seq;
}

void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        std::ostringstream os;
        os << what << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
        throw ValidationError(os.str());
    }
}

void check_seq(const MatrixSeq& seq, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    for (std::size_t k = 0; k < seq.size(); ++k)
        check_shape(seq[k], rows, cols, name + "[" + std::to_string(k) + "]");
}

int resolve_step(int s, int N) { return s < 0 ? N + 1 + s : s; }

// Appends each half-space of `list` to the per-step lists over its (inclusive) step range.
void read_halfspaces(const json& list, int dim, int N, int lo, int hi, std::vector<std::vector<Halfspace>>& out,
                     const std::string& path) {
    if (!list.is_array()) throw ParseError("expected a list at " + path, path);
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        const json& item = list[i];
        Halfspace hs;
        hs.normal = read_vector(require(item, "normal", p), p + ".normal");
        hs.offset = read_number(require(item, "offset", p), p + ".offset");
        if (hs.normal.size() != dim)
            throw ValidationError(p + ".normal has length " + std::to_string(hs.normal.size()) + ", expected " +
                                  std::to_string(dim));
        int first = lo, last = hi;
        if (const json* steps = optional(item, "steps")) {
            if (!steps->is_array() || steps->size() != 2 || !(*steps)[0].is_number_integer() ||
                !(*steps)[1].is_number_integer())
                throw ParseError("expected [first, last] at " + p + ".steps", p + ".steps");
            first = resolve_step((*steps)[0].get<int>(), N);
            last = resolve_step((*steps)[1].get<int>(), N);
        }
        if (first < lo || last > hi || first > last)
            throw ValidationError(p + ".steps must lie within " + std::to_string(lo) + ".." + std::to_string(hi));
        for (int k = first; k <= last; ++k) out[static_cast<std::size_t>(k)].push_back(hs);
    }
}

json write_halfspaces(const std::vector<std::vector<Halfspace>>& per_step) {
    json j = json::array();
    for (std::size_t k = 0; k < per_step.size(); ++k)
        for (const auto& hs : per_step[k])
            j.push_back({{"normal", write_vector(hs.normal)},
                         {"offset", hs.offset},
                         {"steps", {static_cast<int>(k), static_cast<int>(k)}}});
    return j;
}

bool seq_equal(const MatrixSeq& a, const MatrixSeq& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols() || a[i] != b[i]) return false;
    return true;
}

bool mat_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

int max_count(const std::vector<std::vector<Halfspace>>& per_step) {
    std::size_t n = 0;
    for (const auto& step : per_step) n = std::max(n, step.size());
    return static_cast<int>(n);
}

}  // namespace

int ProblemSpec::max_state_constraints() const { return max_count(state_halfspaces); }
int ProblemSpec::max_input_constraints() const { return max_count(input_halfspaces); }

bool ProblemSpec::has_chance_constraints() const {
    return max_state_constraints() > 0 || max_input_constraints() > 0;
}

ProblemSpec ProblemSpec::without_constraints() const {
    ProblemSpec out = *this;
    for (auto& s : out.state_halfspaces) s.clear();
    for (auto& s : out.input_halfspaces) s.clear();
    return out;
}

bool ProblemSpec::operator==(const ProblemSpec& o) const {
    return horizon == o.horizon && seq_equal(A, o.A) && seq_equal(B, o.B) && seq_equal(G, o.G) &&
           seq_equal(C, o.C) && seq_equal(D, o.D) && seq_equal(Q, o.Q) && seq_equal(R, o.R) &&
           mu0.size() == o.mu0.size() && mu0 == o.mu0 && mat_equal(Sigma_hat0_minus, o.Sigma_hat0_minus) &&
           mat_equal(Sigma_tilde0_minus, o.Sigma_tilde0_minus) && mu_f.size() == o.mu_f.size() &&
           mu_f == o.mu_f && mat_equal(Sigma_xf, o.Sigma_xf) && state_halfspaces == o.state_halfspaces &&
           input_halfspaces == o.input_halfspaces && Delta_x == o.Delta_x && Delta_u == o.Delta_u;
}

bool ValidationReport::mentions(std::string_view fragment) const {
    for (const auto& issue : issues)
        if (issue.find(fragment) != std::string::npos) return true;
    return false;
}

ProblemSpec parse_problem(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed document: ") + e.what(), "");
    }
    if (!doc.is_object()) throw ParseError("top level must be an object", "");

    ProblemSpec spec;
    const json& horizon = require(doc, "horizon", "");
    if (!horizon.is_number_integer() || horizon.get<long long>() < 1)
        throw ParseError("horizon must be a positive integer", "horizon");
    spec.horizon = horizon.get<int>();
    const auto N = static_cast<std::size_t>(spec.horizon);

    const json& dyn = require(doc, "dynamics", "");
    const json& meas = require(doc, "measurement", "");
    const json& init = require(doc, "initial", "");
    const json& term = require(doc, "terminal", "");

    spec.A = read_sequence(require(dyn, "A", "dynamics"), N, "dynamics.A");
    spec.B = read_sequence(require(dyn, "B", "dynamics"), N, "dynamics.B");
    spec.G = read_sequence(require(dyn, "G", "dynamics"), N, "dynamics.G");
    spec.C = read_sequence(require(meas, "C", "measurement"), N + 1, "measurement.C");
    spec.D = read_sequence(require(meas, "D", "measurement"), N + 1, "measurement.D");

    spec.mu0 = read_vector(require(init, "mu0", "initial"), "initial.mu0");
    spec.Sigma_hat0_minus = read_matrix(require(init, "Sigma_hat0_minus", "initial"), "initial.Sigma_hat0_minus");
    spec.Sigma_tilde0_minus =
        read_matrix(require(init, "Sigma_tilde0_minus", "initial"), "initial.Sigma_tilde0_minus");
    spec.mu_f = read_vector(require(term, "mu_f", "terminal"), "terminal.mu_f");
    spec.Sigma_xf = read_matrix(require(term, "Sigma_xf", "terminal"), "terminal.Sigma_xf");

    const Eigen::Index nx = spec.mu0.size();
    if (nx == 0) throw ValidationError("initial.mu0 is empty");
    const Eigen::Index nu = spec.B.front().cols();
    const Eigen::Index nw = spec.G.front().cols();
    const Eigen::Index ny = spec.C.front().rows();

    if (const json* cost = optional(doc, "cost")) {
        if (const json* q = optional(*cost, "Q"))
            spec.Q = read_sequence(*q, N, "cost.Q");
        if (const json* r = optional(*cost, "R"))
            spec.R = read_sequence(*r, N, "cost.R");
    }
    if (spec.Q.empty()) spec.Q.assign(N, Matrix::Zero(nx, nx));
    if (spec.R.empty()) spec.R.assign(N, Matrix::Identity(nu, nu));

    check_seq(spec.A, nx, nx, "A");
    check_seq(spec.B, nx, nu, "B");
    check_seq(spec.G, nx, nw, "G");
    check_seq(spec.C, ny, nx, "C");
    check_seq(spec.D, ny, ny, "D");
    check_seq(spec.Q, nx, nx, "Q");
    check_seq(spec.R, nu, nu, "R");
    check_shape(spec.Sigma_hat0_minus, nx, nx, "Sigma_hat0_minus");
    check_shape(spec.Sigma_tilde0_minus, nx, nx, "Sigma_tilde0_minus");
    check_shape(spec.Sigma_xf, nx, nx, "Sigma_xf");
    if (spec.mu_f.size() != nx) throw ValidationError("mu_f has the wrong length");

    spec.state_halfspaces.assign(N + 1, {});
    spec.input_halfspaces.assign(N, {});
    if (const json* cons = optional(doc, "constraints")) {
        const int n = spec.horizon;
        if (const json* st = optional(*cons, "state"))
            read_halfspaces(*st, static_cast<int>(nx), n, 1, n, spec.state_halfspaces, "constraints.state");
        if (const json* in = optional(*cons, "input"))
            read_halfspaces(*in, static_cast<int>(nu), n, 0, n - 1, spec.input_halfspaces, "constraints.input");
        if (const json* dx = optional(*cons, "Delta_x")) spec.Delta_x = read_number(*dx, "constraints.Delta_x");
        if (const json* du = optional(*cons, "Delta_u")) spec.Delta_u = read_number(*du, "constraints.Delta_u");
    }
    return spec;
}

ProblemSpec load_problem(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_problem(ss.str());
}

std::string serialize_problem(const ProblemSpec& spec) {
    json doc;
    doc["horizon"] = spec.horizon;
    doc["dynamics"] = {{"A", write_sequence(spec.A)}, {"B", write_sequence(spec.B)}, {"G", write_sequence(spec.G)}};
    doc["measurement"] = {{"C", write_sequence(spec.C)}, {"D", write_sequence(spec.D)}};
    doc["cost"] = {{"Q", write_sequence(spec.Q)}, {"R", write_sequence(spec.R)}};
    doc["initial"] = {{"mu0", write_vector(spec.mu0)},
                      {"Sigma_hat0_minus", write_matrix(spec.Sigma_hat0_minus)},
                      {"Sigma_tilde0_minus", write_matrix(spec.Sigma_tilde0_minus)}};
    doc["terminal"] = {{"mu_f", write_vector(spec.mu_f)}, {"Sigma_xf", write_matrix(spec.Sigma_xf)}};
    doc["constraints"] = {{"state", write_halfspaces(spec.state_halfspaces)},
                          {"input", write_halfspaces(spec.input_halfspaces)},
                          {"Delta_x", spec.Delta_x},
                          {"Delta_u", spec.Delta_u}};
    // max_digits10 output keeps the round trip exact.
    return doc.dump(2);
}

ValidationReport validate(const ProblemSpec& spec) {
    ValidationReport report;
    auto issue = [&](std::string s) { report.issues.push_back(std::move(s)); };

    const int N = spec.horizon;
    if (N < 1) {
        issue("horizon must be positive");
        return report;
    }
    const auto n = static_cast<std::size_t>(N);
    if (spec.A.size() != n || spec.B.size() != n || spec.G.size() != n || spec.Q.size() != n ||
        spec.R.size() != n)
        issue("A, B, G, Q, R must have N entries");
    if (spec.C.size() != n + 1 || spec.D.size() != n + 1) issue("C, D must have N+1 entries");
    if (!report.ok()) return report;

    const Eigen::Index nx = spec.nx(), nu = spec.nu(), nw = spec.nw(), ny = spec.ny();
    auto shape = [&](const Matrix& m, Eigen::Index r, Eigen::Index c, const std::string& what) {
        if (m.rows() != r || m.cols() != c) issue(what + " has inconsistent dimensions");
    };
    for (std::size_t k = 0; k < n; ++k) {
        const std::string at = " at k=" + std::to_string(k);
        shape(spec.A[k], nx, nx, "A_k" + at);
        shape(spec.B[k], nx, nu, "B_k" + at);
        shape(spec.G[k], nx, nw, "G_k" + at);
        shape(spec.Q[k], nx, nx, "Q_k" + at);
        shape(spec.R[k], nu, nu, "R_k" + at);
    }
    for (std::size_t k = 0; k <= n; ++k) {
        const std::string at = " at k=" + std::to_string(k);
        shape(spec.C[k], ny, nx, "C_k" + at);
        shape(spec.D[k], ny, ny, "D_k" + at);
    }
    shape(spec.Sigma_hat0_minus, nx, nx, "Sigma_hat0_minus");
    shape(spec.Sigma_tilde0_minus, nx, nx, "Sigma_tilde0_minus");
    shape(spec.Sigma_xf, nx, nx, "Sigma_xf");
    if (spec.mu_f.size() != nx) issue("mu_f has inconsistent dimensions");
    if (!report.ok()) return report;

    for (std::size_t k = 0; k <= n; ++k)
        if (linalg::inverse_condition(spec.D[k]) <= 1e-10) issue("D_k rank-deficient at k=" + std::to_string(k));

    auto psd_field = [&](const Matrix& m, const std::string& name, bool definite) {
        if (!linalg::is_symmetric(m)) {
            issue(name + " is not symmetric");
            return;
        }
        if (!linalg::is_psd(m)) {
            issue(name + " is not positive semidefinite");
        } else if (definite && linalg::min_eigenvalue(m) <= 1e-12 * std::max(1.0, linalg::max_eigenvalue(m))) {
            issue(name + " is not positive definite");
        }
    };
    for (std::size_t k = 0; k < n; ++k) {
        psd_field(spec.Q[k], "Q_k at k=" + std::to_string(k), false);
        psd_field(spec.R[k], "R_k at k=" + std::to_string(k), true);
    }
    psd_field(spec.Sigma_hat0_minus, "Sigma_hat0_minus", false);
    psd_field(spec.Sigma_tilde0_minus, "Sigma_tilde0_minus", false);
    psd_field(spec.Sigma_xf, "Sigma_xf", true);

    if (!(spec.Delta_x > 0.0 && spec.Delta_x <= 0.5)) issue("Delta_x must lie in (0, 0.5]");
    if (!(spec.Delta_u > 0.0 && spec.Delta_u <= 0.5)) issue("Delta_u must lie in (0, 0.5]");

    if (spec.state_halfspaces.size() != n + 1) issue("state_halfspaces must have N+1 entries");
    if (spec.input_halfspaces.size() != n) issue("input_halfspaces must have N entries");
    if (!report.ok()) return report;
    if (!spec.state_halfspaces[0].empty()) issue("state constraints at k=0 are not supported");
    for (std::size_t k = 0; k <= n; ++k)
        for (const auto& hs : spec.state_halfspaces[k]) {
            if (hs.normal.size() != nx) issue("state halfspace normal has wrong length at k=" + std::to_string(k));
            else if (hs.normal.isZero(0.0)) issue("state halfspace normal is zero at k=" + std::to_string(k));
        }
    for (std::size_t k = 0; k < n; ++k)
        for (const auto& hs : spec.input_halfspaces[k]) {
            if (hs.normal.size() != nu) issue("input halfspace normal has wrong length at k=" + std::to_string(k));
            else if (hs.normal.isZero(0.0)) issue("input halfspace normal is zero at k=" + std::to_string(k));
        }
    return report;
}

ProblemSpec rescale_horizon(const ProblemSpec& spec, int N) {
    if (N < 2) throw std::invalid_argument("rescale_horizon needs N >= 2");
    auto constant = [](const MatrixSeq& seq) {
        for (const auto& m : seq)
            if (m != seq.front()) return false;
        return true;
    };
    if (!constant(spec.A) || !constant(spec.B) || !constant(spec.G) || !constant(spec.C) || !constant(spec.D) ||
        !constant(spec.Q) || !constant(spec.R))
        throw ValidationError("rescale_horizon requires time-invariant data");

    const auto n = static_cast<std::size_t>(N);
    ProblemSpec out = spec;
    out.horizon = N;
    out.A.assign(n, spec.A.front());
    out.B.assign(n, spec.B.front());
    out.G.assign(n, spec.G.front());
    out.C.assign(n + 1, spec.C.front());
    out.D.assign(n + 1, spec.D.front());
    out.Q.assign(n, spec.Q.front());
    out.R.assign(n, spec.R.front());

    // Interior steps reuse the pattern at k=1, the terminal step keeps its own set.
    const auto old_n = static_cast<std::size_t>(spec.horizon);
    out.state_halfspaces.assign(n + 1, {});
    for (std::size_t k = 1; k < n; ++k) out.state_halfspaces[k] = spec.state_halfspaces[std::min<std::size_t>(1, old_n)];
    out.state_halfspaces[n] = spec.state_halfspaces[old_n];
    out.input_halfspaces.assign(n, spec.input_halfspaces.empty() ? std::vector<Halfspace>{} : spec.input_halfspaces[0]);
    return out;
}

}  // namespace covsteer
