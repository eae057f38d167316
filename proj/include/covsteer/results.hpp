#pragma once

#include "covsteer/sim.hpp"
#include "covsteer/steer.hpp"

#include <string>
#include <string_view>

namespace covsteer {

/// Everything a solve produces that later commands need: the law, its planned moments and the
/// filter error covariances, so Sigma_x = Sigma_hat + Sigma_tilde can be rebuilt without the problem.
struct PolicyDocument {
    std::string method;
    Policy policy;
    MatrixSeq Sigma_tilde;  // k = 0..N
    MatrixSeq Sigma_x;      // k = 0..N
    CcpTrace trace;
    double lossless = 0.0;
    double max_margin = 0.0;  // -inf (written as null) without chance constraints
};

PolicyDocument make_policy_document(const ProblemSpec& spec, const FilterBundle& filt, const SteerResult& result,
                                    Method method);

std::string serialize_policy(const PolicyDocument& doc);

/// Throws ParseError naming the field for malformed documents.
PolicyDocument parse_policy(std::string_view text);

std::string serialize_report(const McReport& report);

}  // namespace covsteer
