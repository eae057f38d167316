#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace covsteer {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixSeq = std::vector<Matrix>;
using VectorSeq = std::vector<Vector>;

/// Malformed problem document. `field()` names the offending key path.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::string field)
        : std::runtime_error(message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Problem data that is structurally inconsistent (dimensions, lengths).
class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A factorization or recursion hit a (near-)singular matrix.
class NumericalError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The optimization problem (or one of its convex subproblems) has no feasible point.
class InfeasibleError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace covsteer
