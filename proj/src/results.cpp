#include "covsteer/results.hpp"

#include "json_io.hpp"

#include <cmath>
#include <limits>

namespace covsteer {

using namespace json_io;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

MatrixSeq read_matrices(const json& doc, const std::string& key) {
    const json& j = require(doc, key, "");
    if (!j.is_array()) throw ParseError("expected a list of matrices at " + key, key);
    MatrixSeq out;
    for (std::size_t k = 0; k < j.size(); ++k) out.push_back(read_matrix(j[k], key + "[" + std::to_string(k) + "]"));
    return out;
}

VectorSeq read_vectors(const json& doc, const std::string& key) {
    const json& j = require(doc, key, "");
    if (!j.is_array()) throw ParseError("expected a list of vectors at " + key, key);
    VectorSeq out;
    for (std::size_t k = 0; k < j.size(); ++k) out.push_back(read_vector(j[k], key + "[" + std::to_string(k) + "]"));
    return out;
}

sdp::SolveStatus parse_status(const std::string& s, const std::string& path) {
    for (auto st : {sdp::SolveStatus::Optimal, sdp::SolveStatus::Inaccurate, sdp::SolveStatus::Infeasible,
                    sdp::SolveStatus::Unbounded, sdp::SolveStatus::MaxIterations})
        if (s == sdp::to_string(st)) return st;
    throw ParseError("unknown solver status '" + s + "' at " + path, path);
}

json write_grid(const std::vector<std::vector<double>>& grid) {
    json j = json::array();
    for (const auto& row : grid) j.push_back(row);
    return j;
}

}  // namespace

PolicyDocument make_policy_document(const ProblemSpec& spec, const FilterBundle& filt, const SteerResult& result,
                                    Method method) {
    PolicyDocument doc;
    doc.method = to_string(method);
    doc.policy = result.policy;
    doc.Sigma_tilde = filt.Sigma_tilde;
    const MomentTrajectory traj = propagate_moments(result.policy, filt, spec);
    doc.Sigma_x = traj.Sigma_x;
    doc.trace = result.trace;
    doc.lossless = lossless_residual(result.solution);
    doc.max_margin = max_exact_margin(spec, traj, allocate_risk(spec));
    return doc;
}

std::string serialize_policy(const PolicyDocument& doc) {
    const Policy& p = doc.policy;
    json trace = json::array();
    for (const auto& it : doc.trace.iterations)
        trace.push_back({{"cost", it.cost},
                         {"max_margin", finite_or_null(it.max_margin)},
                         {"lossless", it.lossless},
                         {"status", sdp::to_string(it.status)}});
    json j = {{"method", doc.method},
              {"horizon", p.horizon()},
              {"K_seq", write_sequence(p.K)},
              {"m_seq", write_vectors(p.m)},
              {"mu_seq", write_vectors(p.mu)},
              {"Sigma_hat_seq", write_sequence(p.Sigma_hat)},
              {"Sigma_tilde_seq", write_sequence(doc.Sigma_tilde)},
              {"Sigma_x_seq", write_sequence(doc.Sigma_x)},
              {"cost_mean", p.cost_mean},
              {"cost_cov", p.cost_cov},
              {"cost_total", p.total_cost()},
              {"lossless_residual", doc.lossless},
              {"max_exact_margin", finite_or_null(doc.max_margin)},
              {"trace", {{"iterations", trace}, {"converged", doc.trace.converged}}}};
    return j.dump(2) + "\n";
}

PolicyDocument parse_policy(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("policy document is not valid JSON: ") + e.what(), "");
    }
    if (!j.is_object()) throw ParseError("policy document must be an object", "");
    PolicyDocument doc;
    const json& method = require(j, "method", "");
    if (!method.is_string()) throw ParseError("expected a string at method", "method");
    doc.method = method.get<std::string>();
    Policy& p = doc.policy;
    p.K = read_matrices(j, "K_seq");
    p.m = read_vectors(j, "m_seq");
    p.mu = read_vectors(j, "mu_seq");
    p.Sigma_hat = read_matrices(j, "Sigma_hat_seq");
    p.cost_mean = read_number(require(j, "cost_mean", ""), "cost_mean");
    p.cost_cov = read_number(require(j, "cost_cov", ""), "cost_cov");
    doc.Sigma_tilde = read_matrices(j, "Sigma_tilde_seq");
    doc.Sigma_x = read_matrices(j, "Sigma_x_seq");

    const std::size_t N = p.K.size();
    if (p.m.size() != N || p.mu.size() != N + 1 || p.Sigma_hat.size() != N + 1 || doc.Sigma_tilde.size() != N + 1 ||
        doc.Sigma_x.size() != N + 1)
        throw ValidationError("policy document sequences have inconsistent lengths");

    if (const json* l = optional(j, "lossless_residual")) doc.lossless = read_number(*l, "lossless_residual");
    doc.max_margin = -std::numeric_limits<double>::infinity();
    if (const json* m = optional(j, "max_exact_margin"); m && !m->is_null())
        doc.max_margin = read_number(*m, "max_exact_margin");
    if (const json* tr = optional(j, "trace")) {
        if (const json* c = optional(*tr, "converged"); c && c->is_boolean()) doc.trace.converged = c->get<bool>();
        if (const json* its = optional(*tr, "iterations"); its && its->is_array())
            for (std::size_t i = 0; i < its->size(); ++i) {
                const std::string path = "trace.iterations[" + std::to_string(i) + "]";
                const json& it = (*its)[i];
                CcpIteration rec;
                rec.cost = read_number(require(it, "cost", path), path + ".cost");
                const json& mm = require(it, "max_margin", path);
                rec.max_margin = mm.is_null() ? -std::numeric_limits<double>::infinity()
                                              : read_number(mm, path + ".max_margin");
                rec.lossless = read_number(require(it, "lossless", path), path + ".lossless");
                const json& st = require(it, "status", path);
                if (!st.is_string()) throw ParseError("expected a string at " + path + ".status", path + ".status");
                rec.status = parse_status(st.get<std::string>(), path + ".status");
                doc.trace.iterations.push_back(rec);
            }
    }
    return doc;
}

std::string serialize_report(const McReport& r) {
    json j = {{"trials", r.trials},
              {"seed", r.seed},
              {"terminal_mean", write_vector(r.terminal_mean)},
              {"terminal_cov", write_matrix(r.terminal_cov)},
              {"state_mean", write_vectors(r.state_mean)},
              {"state_cov", write_sequence(r.state_cov)},
              {"estimate_cov", write_sequence(r.estimate_cov)},
              {"error_cov", write_sequence(r.error_cov)},
              {"state_violation", write_grid(r.state_violation)},
              {"input_violation", write_grid(r.input_violation)},
              {"joint_state_violation", r.joint_state_violation},
              {"joint_input_violation", r.joint_input_violation},
              {"average_cost", r.average_cost}};
    return j.dump(2) + "\n";
}

}  // namespace covsteer
