#include "covsteer/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace covsteer::sdp {

// ---------------------------------------------------------------------------
// LinExpr

LinExpr LinExpr::variable(int index, double coeff) {
    LinExpr e;
    e.terms.emplace_back(index, coeff);
    return e;
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
    terms.reserve(terms.size() + o.terms.size());
    for (const auto& [i, v] : o.terms) terms.emplace_back(i, -v);
    constant -= o.constant;
    return *this;
}

LinExpr& LinExpr::operator*=(double s) {
    for (auto& t : terms) t.second *= s;
    constant *= s;
    return *this;
}

void LinExpr::compress() {
    if (terms.empty()) return;
    std::stable_sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t out = 0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (out > 0 && terms[out - 1].first == terms[i].first) terms[out - 1].second += terms[i].second;
        else terms[out++] = terms[i];
    }
    terms.resize(out);
    std::erase_if(terms, [](const auto& t) { return t.second == 0.0; });
}

double LinExpr::evaluate(const Vector& x) const {
    double v = constant;
    for (const auto& [i, c] : terms) v += c * x(i);
    return v;
}

bool LinExpr::is_constant() const {
    return std::all_of(terms.begin(), terms.end(), [](const auto& t) { return t.second == 0.0; });
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator-(LinExpr a) { return a *= -1.0; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }
LinExpr operator*(LinExpr a, double s) { return a *= s; }

// ---------------------------------------------------------------------------
// AffineMatrix

AffineMatrix AffineMatrix::constant(const Matrix& m) {
    AffineMatrix a(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int c = 0; c < a.cols_; ++c)
        for (int r = 0; r < a.rows_; ++r) a(r, c).constant = m(r, c);
    return a;
}

AffineMatrix AffineMatrix::transpose() const {
    AffineMatrix t(cols_, rows_);
    for (int c = 0; c < cols_; ++c)
        for (int r = 0; r < rows_; ++r) t(c, r) = (*this)(r, c);
    return t;
}

AffineMatrix AffineMatrix::block(int r0, int c0, int rows, int cols) const {
    AffineMatrix b(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) b(r, c) = (*this)(r0 + r, c0 + c);
    return b;
}

void AffineMatrix::set_block(int r0, int c0, const AffineMatrix& b) {
    for (int c = 0; c < b.cols(); ++c)
        for (int r = 0; r < b.rows(); ++r) (*this)(r0 + r, c0 + c) = b(r, c);
}

void AffineMatrix::set_block(int r0, int c0, const Matrix& b) { set_block(r0, c0, constant(b)); }

AffineMatrix& AffineMatrix::operator+=(const AffineMatrix& o) {
    if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("AffineMatrix size mismatch in +");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

AffineMatrix& AffineMatrix::operator-=(const AffineMatrix& o) {
    if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("AffineMatrix size mismatch in -");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

AffineMatrix& AffineMatrix::operator+=(const Matrix& m) {
    if (m.rows() != rows_ || m.cols() != cols_) throw std::invalid_argument("AffineMatrix size mismatch in +");
    for (int c = 0; c < cols_; ++c)
        for (int r = 0; r < rows_; ++r) (*this)(r, c).constant += m(r, c);
    return *this;
}

AffineMatrix& AffineMatrix::operator-=(const Matrix& m) { return *this += Matrix(-m); }

LinExpr AffineMatrix::dot(const Matrix& w) const {
    if (w.rows() != rows_ || w.cols() != cols_) throw std::invalid_argument("AffineMatrix size mismatch in dot");
    LinExpr out;
    for (int c = 0; c < cols_; ++c)
        for (int r = 0; r < rows_; ++r)
            if (w(r, c) != 0.0) out += w(r, c) * (*this)(r, c);
    out.compress();
    return out;
}

LinExpr AffineMatrix::trace() const {
    LinExpr out;
    for (int i = 0; i < std::min(rows_, cols_); ++i) out += (*this)(i, i);
    out.compress();
    return out;
}

Matrix AffineMatrix::evaluate(const Vector& x) const {
    Matrix m(rows_, cols_);
    for (int c = 0; c < cols_; ++c)
        for (int r = 0; r < rows_; ++r) m(r, c) = (*this)(r, c).evaluate(x);
    return m;
}

void AffineMatrix::compress() {
    for (auto& e : data_) e.compress();
}

AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b) { return a += b; }
AffineMatrix operator-(AffineMatrix a, const AffineMatrix& b) { return a -= b; }
AffineMatrix operator+(AffineMatrix a, const Matrix& b) { return a += b; }
AffineMatrix operator-(AffineMatrix a, const Matrix& b) { return a -= b; }

AffineMatrix operator*(const Matrix& m, const AffineMatrix& a) {
    if (m.cols() != a.rows()) throw std::invalid_argument("Matrix * AffineMatrix size mismatch");
    AffineMatrix out(static_cast<int>(m.rows()), a.cols());
    for (int c = 0; c < a.cols(); ++c)
        for (int r = 0; r < out.rows(); ++r) {
            LinExpr& e = out(r, c);
            for (int k = 0; k < a.rows(); ++k)
                if (m(r, k) != 0.0) e += m(r, k) * a(k, c);
            e.compress();
        }
    return out;
}

AffineMatrix operator*(const AffineMatrix& a, const Matrix& m) {
    if (a.cols() != m.rows()) throw std::invalid_argument("AffineMatrix * Matrix size mismatch");
    AffineMatrix out(a.rows(), static_cast<int>(m.cols()));
    for (int c = 0; c < out.cols(); ++c)
        for (int r = 0; r < a.rows(); ++r) {
            LinExpr& e = out(r, c);
            for (int k = 0; k < a.cols(); ++k)
                if (m(k, c) != 0.0) e += m(k, c) * a(r, k);
            e.compress();
        }
    return out;
}

AffineMatrix operator*(double s, AffineMatrix a) {
    for (int c = 0; c < a.cols(); ++c)
        for (int r = 0; r < a.rows(); ++r) a(r, c) *= s;
    return a;
}

AffineMatrix blocks(const AffineMatrix& a, const AffineMatrix& b, const AffineMatrix& c, const AffineMatrix& d) {
    if (a.rows() != b.rows() || c.rows() != d.rows() || a.cols() != c.cols() || b.cols() != d.cols())
        throw std::invalid_argument("blocks: inconsistent block sizes");
    AffineMatrix out(a.rows() + c.rows(), a.cols() + b.cols());
    out.set_block(0, 0, a);
    out.set_block(0, a.cols(), b);
    out.set_block(a.rows(), 0, c);
    out.set_block(a.rows(), a.cols(), d);
    return out;
}

// ---------------------------------------------------------------------------
// ConicProgram

namespace {

bool nearly_equal(const LinExpr& a, const LinExpr& b) {
    LinExpr d = a - b;
    d.compress();
    const double scale = 1.0 + std::abs(a.constant) + std::abs(b.constant);
    if (std::abs(d.constant) > 1e-12 * scale) return false;
    for (const auto& [i, v] : d.terms) {
        double mag = 1.0;
        for (const auto& t : a.terms)
            if (t.first == i) mag = std::max(mag, std::abs(t.second));
        if (std::abs(v) > 1e-12 * mag) return false;
    }
    return true;
}

bool structurally_symmetric(const AffineMatrix& m) {
    if (m.rows() != m.cols()) return false;
    for (int c = 0; c < m.cols(); ++c)
        for (int r = c + 1; r < m.rows(); ++r)
            if (!nearly_equal(m(r, c), m(c, r))) return false;
    return true;
}

}  // namespace

VarHandle ConicProgram::add_block(int rows, int cols, bool symmetric, const std::string& name) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("variable block must be nonempty: " + name);
    VarHandle h{num_vars_, rows, cols, symmetric};
    if (symmetric) {
        for (int j = 0; j < rows; ++j)
            for (int i = 0; i <= j; ++i)
                var_names_.push_back(name + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
    } else {
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i)
                var_names_.push_back(name + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
    }
    num_vars_ += h.size();
    return h;
}

VarHandle ConicProgram::add_symmetric(int n, const std::string& name) { return add_block(n, n, true, name); }
VarHandle ConicProgram::add_matrix(int rows, int cols, const std::string& name) {
    return add_block(rows, cols, false, name);
}
VarHandle ConicProgram::add_vector(int n, const std::string& name) { return add_block(n, 1, false, name); }
VarHandle ConicProgram::add_scalar(const std::string& name) { return add_block(1, 1, false, name); }

AffineMatrix ConicProgram::var(const VarHandle& h) const {
    AffineMatrix m(h.rows, h.cols);
    if (h.symmetric) {
        int idx = h.offset;
        for (int j = 0; j < h.rows; ++j)
            for (int i = 0; i <= j; ++i, ++idx) {
                m(i, j) = LinExpr::variable(idx);
                m(j, i) = LinExpr::variable(idx);
            }
    } else {
        int idx = h.offset;
        for (int j = 0; j < h.cols; ++j)
            for (int i = 0; i < h.rows; ++i, ++idx) m(i, j) = LinExpr::variable(idx);
    }
    return m;
}

LinExpr ConicProgram::scalar(const VarHandle& h) const {
    if (h.size() != 1) throw std::invalid_argument("scalar() on a non-scalar variable");
    return LinExpr::variable(h.offset);
}

void ConicProgram::minimize(const LinExpr& objective) {
    objective_ = objective;
    objective_.compress();
}

void ConicProgram::add_to_objective(const LinExpr& term) {
    objective_ += term;
    objective_.compress();
}

void ConicProgram::add_equality(LinExpr expr, const std::string& label) {
    expr.compress();
    equalities_.push_back({std::move(expr), label});
    equality_group_labels_.push_back(label);
    ++equality_groups_;
}

void ConicProgram::add_equality(const AffineMatrix& expr, const std::string& label) {
    const bool symmetric = structurally_symmetric(expr);
    for (int c = 0; c < expr.cols(); ++c)
        for (int r = 0; r < (symmetric ? c + 1 : expr.rows()); ++r) {
            LinExpr e = expr(r, c);
            e.compress();
            equalities_.push_back({std::move(e), label});
        }
    equality_group_labels_.push_back(label);
    ++equality_groups_;
}

void ConicProgram::add_inequality(LinExpr expr, const std::string& label) {
    expr.compress();
    inequalities_.push_back({std::move(expr), label});
}

void ConicProgram::add_psd(AffineMatrix expr, const std::string& label) {
    if (expr.rows() != expr.cols()) throw std::invalid_argument("PSD constraint must be square: " + label);
    expr.compress();
    if (!structurally_symmetric(expr)) throw std::invalid_argument("PSD constraint is not symmetric: " + label);
    psd_.push_back({std::move(expr), label});
}

int ConicProgram::count_equality_groups(const std::string& prefix) const {
    return static_cast<int>(std::count_if(equality_group_labels_.begin(), equality_group_labels_.end(),
                                          [&](const std::string& l) { return l.starts_with(prefix); }));
}

int ConicProgram::count_psd(const std::string& prefix) const {
    return static_cast<int>(
        std::count_if(psd_.begin(), psd_.end(), [&](const PsdConstraint& p) { return p.label.starts_with(prefix); }));
}

Matrix ConicProgram::value(const VarHandle& h, const Vector& x) const { return var(h).evaluate(x); }

void ConicProgram::dump(std::ostream& os) const {
    const auto old_precision = os.precision(17);
    os << "conic_program vars " << num_vars_ << " eq " << equalities_.size() << " ineq " << inequalities_.size()
       << " psd " << psd_.size() << "\n";
    for (int i = 0; i < num_vars_; ++i) os << "var " << i << " " << var_names_[static_cast<std::size_t>(i)] << "\n";
    os << "obj const " << objective_.constant << "\n";
    for (const auto& [i, v] : objective_.terms) os << "obj " << i << " " << v << "\n";
    for (std::size_t r = 0; r < equalities_.size(); ++r) {
        const auto& e = equalities_[r];
        os << "eq " << r << " const " << e.expr.constant << " # " << e.label << "\n";
        for (const auto& [i, v] : e.expr.terms) os << "eq " << r << " " << i << " " << v << "\n";
    }
    for (std::size_t r = 0; r < inequalities_.size(); ++r) {
        const auto& e = inequalities_[r];
        os << "ineq " << r << " const " << e.expr.constant << " # " << e.label << "\n";
        for (const auto& [i, v] : e.expr.terms) os << "ineq " << r << " " << i << " " << v << "\n";
    }
    for (std::size_t b = 0; b < psd_.size(); ++b) {
        const auto& p = psd_[b];
        os << "psd " << b << " dim " << p.expr.rows() << " # " << p.label << "\n";
        for (int c = 0; c < p.expr.cols(); ++c)
            for (int r = 0; r <= c; ++r) {
                const LinExpr& e = p.expr(r, c);
                if (e.constant != 0.0) os << "psd " << b << " " << r << " " << c << " const " << e.constant << "\n";
                for (const auto& [i, v] : e.terms) os << "psd " << b << " " << r << " " << c << " " << i << " " << v << "\n";
            }
    }
    os.precision(old_precision);
}

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Inaccurate: return "inaccurate";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::MaxIterations: return "max_iter";
    }
    return "unknown";
}

ConicSolution solve(const ConicProgram& prog, const SolverOptions& opts) {
    return InteriorPointSolver{}.solve(prog, opts);
}

}  // namespace covsteer::sdp
