#pragma once

#include "covsteer/types.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace covsteer::sdp {

/// Affine scalar expression sum_i coeff_i x_i + constant over program variables.
struct LinExpr {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    LinExpr() = default;
    LinExpr(double c) : constant(c) {}  // NOLINT: implicit constants keep model code readable

    static LinExpr variable(int index, double coeff = 1.0);

    LinExpr& operator+=(const LinExpr& other);
    LinExpr& operator-=(const LinExpr& other);
    LinExpr& operator*=(double s);

    /// Merges duplicate indices and drops exact zeros; terms end up sorted by index.
    void compress();
    double evaluate(const Vector& x) const;
    bool is_constant() const;
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a);
LinExpr operator*(double s, LinExpr a);
LinExpr operator*(LinExpr a, double s);

/// Dense grid of LinExpr; the modeling type for matrix-valued affine expressions.
class AffineMatrix {
public:
    AffineMatrix() = default;
    AffineMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols)) {}

    static AffineMatrix constant(const Matrix& m);
    static AffineMatrix zero(int rows, int cols) { return AffineMatrix(rows, cols); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    LinExpr& operator()(int r, int c) { return data_[static_cast<std::size_t>(c * rows_ + r)]; }
    const LinExpr& operator()(int r, int c) const { return data_[static_cast<std::size_t>(c * rows_ + r)]; }

    AffineMatrix transpose() const;
    AffineMatrix block(int r0, int c0, int rows, int cols) const;
    void set_block(int r0, int c0, const AffineMatrix& b);
    void set_block(int r0, int c0, const Matrix& b);

    AffineMatrix& operator+=(const AffineMatrix& o);
    AffineMatrix& operator-=(const AffineMatrix& o);
    AffineMatrix& operator+=(const Matrix& m);
    AffineMatrix& operator-=(const Matrix& m);

    /// Inner product <W, X> = sum_ij W_ij X_ij.
    LinExpr dot(const Matrix& w) const;
    LinExpr trace() const;

    Matrix evaluate(const Vector& x) const;
    void compress();

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<LinExpr> data_;  // column-major
};

AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b);
AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b);
AffineMatrix operator+(AffineMatrix a, const Matrix& b);
AffineMatrix operator-(AffineMatrix a, const Matrix& b);
AffineMatrix operator*(const Matrix& m, const AffineMatrix& a);
AffineMatrix operator*(const AffineMatrix& a, const Matrix& m);
AffineMatrix operator*(double s, AffineMatrix a);

/// 2x2 block assembly [[a, b], [c, d]].
AffineMatrix blocks(const AffineMatrix& a, const AffineMatrix& b, const AffineMatrix& c, const AffineMatrix& d);

struct VarHandle {
    int offset = 0;
    int rows = 0;
    int cols = 0;
    bool symmetric = false;

    int size() const { return symmetric ? rows * (rows + 1) / 2 : rows * cols; }
};

struct LinearConstraint {
    LinExpr expr;
    std::string label;
};

struct PsdConstraint {
    AffineMatrix expr;
    std::string label;
};

/// Backend-neutral conic program: linear objective, affine equalities (expr = 0),
/// scalar inequalities (expr <= 0) and PSD constraints on symmetric affine matrices.
class ConicProgram {
public:
    VarHandle add_symmetric(int n, const std::string& name);
    VarHandle add_matrix(int rows, int cols, const std::string& name);
    VarHandle add_vector(int n, const std::string& name);
    VarHandle add_scalar(const std::string& name);

    AffineMatrix var(const VarHandle& h) const;
    LinExpr scalar(const VarHandle& h) const;

    void minimize(const LinExpr& objective);
    void add_to_objective(const LinExpr& term);

    void add_equality(LinExpr expr, const std::string& label);
    /// Matrix equality; for symmetric expressions only the upper triangle is added.
    void add_equality(const AffineMatrix& expr, const std::string& label);
    void add_inequality(LinExpr expr, const std::string& label);
    /// Throws std::invalid_argument if `expr` is not square and structurally symmetric.
    void add_psd(AffineMatrix expr, const std::string& label);

    int num_variables() const { return num_vars_; }
    const std::vector<std::string>& variable_names() const { return var_names_; }
    const LinExpr& objective() const { return objective_; }
    const std::vector<LinearConstraint>& equalities() const { return equalities_; }
    const std::vector<LinearConstraint>& inequalities() const { return inequalities_; }
    const std::vector<PsdConstraint>& psd_constraints() const { return psd_; }

    /// Number of distinct equality groups (one per add_equality call).
    int equality_groups() const { return equality_groups_; }
    int count_equality_groups(const std::string& label_prefix) const;
    int count_psd(const std::string& label_prefix) const;

    Matrix value(const VarHandle& h, const Vector& x) const;

    /// Sparse triplet text dump; see README for the format.
    void dump(std::ostream& os) const;

private:
    VarHandle add_block(int rows, int cols, bool symmetric, const std::string& name);

    int num_vars_ = 0;
    std::vector<std::string> var_names_;
    LinExpr objective_;
    std::vector<LinearConstraint> equalities_;
    std::vector<std::string> equality_group_labels_;
    std::vector<LinearConstraint> inequalities_;
    std::vector<PsdConstraint> psd_;
    int equality_groups_ = 0;
};

enum class SolveStatus { Optimal, Inaccurate, Infeasible, Unbounded, MaxIterations };

const char* to_string(SolveStatus s);

struct SolverOptions {
    double tol = 1e-8;
    /// A run that stalls is reported as Inaccurate when its best iterate reaches this accuracy.
    double inaccurate_tol = 1e-6;
    int max_iter = 100;
    bool verbose = false;
};

struct ConicSolution {
    SolveStatus status = SolveStatus::MaxIterations;
    Vector x;                   // primal variables
    Vector y;                   // equality multipliers
    double objective = 0.0;     // primal objective c^T x + constant
    double dual_objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    int iterations = 0;

    bool optimal() const { return status == SolveStatus::Optimal; }
    /// Optimal, or stopped early at reduced but bounded accuracy.
    bool usable() const { return status == SolveStatus::Optimal || status == SolveStatus::Inaccurate; }
};

class ConicBackend {
public:
    virtual ~ConicBackend() = default;
    virtual ConicSolution solve(const ConicProgram& prog, const SolverOptions& opts) const = 0;
};

/// Homogeneous self-dual primal-dual interior-point method with Nesterov-Todd scaling
/// and Mehrotra predictor-corrector steps over nonnegative and PSD cones.
class InteriorPointSolver : public ConicBackend {
public:
    ConicSolution solve(const ConicProgram& prog, const SolverOptions& opts) const override;
};

/// Solves with the embedded interior-point backend.
ConicSolution solve(const ConicProgram& prog, const SolverOptions& opts = {});

}  // namespace covsteer::sdp
