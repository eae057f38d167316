#include "covsteer/sdp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace covsteer::sdp {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Standard form: minimize c^T x + c0  s.t.  A x = b,  G x + s = h,  s in K.
// K is a nonnegative orthant (rows of Gl) times PSD blocks. A PSD block holds
// S(x) = F0 + sum_i x_i F_i, so its rows of G are -F_i and its part of h is F0.

struct Entry {
    int r;
    int c;  // r <= c
    double coef;
};

struct PsdBlock {
    int dim = 0;
    Matrix F0;
    std::vector<int> vars;                     // sorted, distinct
    std::vector<std::vector<Entry>> entries;   // aligned with vars
};

struct Standard {
    int n = 0;
    Vector c;
    double c0 = 0.0;
    SpMat A;
    Vector b;
    SpMat Gl;
    Vector hl;
    std::vector<PsdBlock> blocks;
    int degree = 0;
    Vector col_scale;  // original x = col_scale .* scaled x
    Vector eq_scale;   // original y = eq_scale .* scaled y
};

struct ConeVec {
    Vector l;
    std::vector<Matrix> p;
};

double dot(const ConeVec& a, const ConeVec& b) {
    double v = a.l.dot(b.l);
    for (std::size_t j = 0; j < a.p.size(); ++j) v += a.p[j].cwiseProduct(b.p[j]).sum();
    return v;
}

double norm(const ConeVec& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const ConeVec& x, ConeVec& y) {
    y.l += alpha * x.l;
    for (std::size_t j = 0; j < y.p.size(); ++j) y.p[j] += alpha * x.p[j];
}

ConeVec scaled(double alpha, const ConeVec& x) {
    ConeVec out = x;
    out.l *= alpha;
    for (auto& m : out.p) m *= alpha;
    return out;
}

Standard to_standard(const ConicProgram& prog) {
    Standard sf;
    sf.n = prog.num_variables();
    sf.c = Vector::Zero(sf.n);
    for (const auto& [i, v] : prog.objective().terms) sf.c(i) += v;
    sf.c0 = prog.objective().constant;

    const auto& eqs = prog.equalities();
    std::vector<Triplet> t;
    sf.b.resize(static_cast<Eigen::Index>(eqs.size()));
    for (std::size_t r = 0; r < eqs.size(); ++r) {
        for (const auto& [i, v] : eqs[r].expr.terms) t.emplace_back(static_cast<int>(r), i, v);
        sf.b(static_cast<Eigen::Index>(r)) = -eqs[r].expr.constant;
    }
    sf.A.resize(static_cast<Eigen::Index>(eqs.size()), sf.n);
    sf.A.setFromTriplets(t.begin(), t.end());

    const auto& ineqs = prog.inequalities();
    t.clear();
    sf.hl.resize(static_cast<Eigen::Index>(ineqs.size()));
    for (std::size_t r = 0; r < ineqs.size(); ++r) {
        for (const auto& [i, v] : ineqs[r].expr.terms) t.emplace_back(static_cast<int>(r), i, v);
        sf.hl(static_cast<Eigen::Index>(r)) = -ineqs[r].expr.constant;
    }
    sf.Gl.resize(static_cast<Eigen::Index>(ineqs.size()), sf.n);
    sf.Gl.setFromTriplets(t.begin(), t.end());
    sf.degree = static_cast<int>(ineqs.size());

    for (const auto& psd : prog.psd_constraints()) {
        PsdBlock blk;
        blk.dim = psd.expr.rows();
        blk.F0 = Matrix::Zero(blk.dim, blk.dim);
        std::map<int, std::vector<Entry>> by_var;
        for (int c = 0; c < blk.dim; ++c)
            for (int r = 0; r <= c; ++r) {
                const LinExpr& e = psd.expr(r, c);
                blk.F0(r, c) = e.constant;
                blk.F0(c, r) = e.constant;
                for (const auto& [i, v] : e.terms) by_var[i].push_back({r, c, v});
            }
        for (auto& [i, es] : by_var) {
            blk.vars.push_back(i);
            blk.entries.push_back(std::move(es));
        }
        sf.degree += blk.dim;
        sf.blocks.push_back(std::move(blk));
    }
    return sf;
}

// Ruiz equilibration: variables, equality rows, orthant rows and whole PSD blocks are rescaled
// until every row and column has unit infinity norm. Cones are preserved because each PSD block
// is multiplied by one positive scalar.
void equilibrate(Standard& sf, int passes = 12) {
    const int n = sf.n;
    sf.col_scale = Vector::Ones(n);
    sf.eq_scale = Vector::Ones(sf.A.rows());
    for (int pass = 0; pass < passes; ++pass) {
        Vector cn = Vector::Zero(n);
        Vector rn_eq = Vector::Zero(sf.A.rows());
        Vector rn_l = Vector::Zero(sf.Gl.rows());
        std::vector<double> rn_p(sf.blocks.size(), 0.0);
        for (int k = 0; k < sf.A.outerSize(); ++k)
            for (SpMat::InnerIterator it(sf.A, k); it; ++it) {
                cn(it.col()) = std::max(cn(it.col()), std::abs(it.value()));
                rn_eq(it.row()) = std::max(rn_eq(it.row()), std::abs(it.value()));
            }
        for (int k = 0; k < sf.Gl.outerSize(); ++k)
            for (SpMat::InnerIterator it(sf.Gl, k); it; ++it) {
                cn(it.col()) = std::max(cn(it.col()), std::abs(it.value()));
                rn_l(it.row()) = std::max(rn_l(it.row()), std::abs(it.value()));
            }
        for (std::size_t j = 0; j < sf.blocks.size(); ++j) {
            const auto& blk = sf.blocks[j];
            for (std::size_t a = 0; a < blk.vars.size(); ++a)
                for (const auto& e : blk.entries[a]) {
                    cn(blk.vars[a]) = std::max(cn(blk.vars[a]), std::abs(e.coef));
                    rn_p[j] = std::max(rn_p[j], std::abs(e.coef));
                }
        }
        auto factor = [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; };
        const Vector d = cn.unaryExpr(factor);
        const Vector e = rn_eq.unaryExpr(factor);
        const Vector f = rn_l.unaryExpr(factor);

        sf.A = e.asDiagonal() * sf.A * d.asDiagonal();
        sf.b = e.cwiseProduct(sf.b);
        sf.Gl = f.asDiagonal() * sf.Gl * d.asDiagonal();
        sf.hl = f.cwiseProduct(sf.hl);
        for (std::size_t j = 0; j < sf.blocks.size(); ++j) {
            auto& blk = sf.blocks[j];
            const double g = factor(rn_p[j]);
            blk.F0 *= g;
            for (std::size_t a = 0; a < blk.vars.size(); ++a)
                for (auto& en : blk.entries[a]) en.coef *= g * d(blk.vars[a]);
        }
        sf.c = d.cwiseProduct(sf.c);
        sf.col_scale = sf.col_scale.cwiseProduct(d);
        sf.eq_scale = sf.eq_scale.cwiseProduct(e);
    }
}

// G x as a cone vector.
ConeVec apply_G(const Standard& sf, const Vector& x) {
    ConeVec out;
    out.l = sf.Gl * x;
    out.p.reserve(sf.blocks.size());
    for (const auto& blk : sf.blocks) {
        Matrix m = Matrix::Zero(blk.dim, blk.dim);
        for (std::size_t a = 0; a < blk.vars.size(); ++a) {
            const double xv = x(blk.vars[a]);
            if (xv == 0.0) continue;
            for (const auto& e : blk.entries[a]) m(e.r, e.c) -= e.coef * xv;
        }
        m.triangularView<Eigen::StrictlyLower>() = m.transpose().triangularView<Eigen::StrictlyLower>();
        out.p.push_back(std::move(m));
    }
    return out;
}

// G^T z.
Vector apply_Gt(const Standard& sf, const ConeVec& z) {
    Vector out = sf.Gl.transpose() * z.l;
    for (std::size_t j = 0; j < sf.blocks.size(); ++j) {
        const auto& blk = sf.blocks[j];
        const Matrix& m = z.p[j];
        for (std::size_t a = 0; a < blk.vars.size(); ++a) {
            double v = 0.0;
            for (const auto& e : blk.entries[a]) v += e.coef * (e.r == e.c ? m(e.r, e.c) : m(e.r, e.c) + m(e.c, e.r));
            out(blk.vars[a]) -= v;
        }
    }
    return out;
}

ConeVec cone_h(const Standard& sf) {
    ConeVec h;
    h.l = sf.hl;
    for (const auto& blk : sf.blocks) h.p.push_back(blk.F0);
    return h;
}

ConeVec cone_identity(const Standard& sf) {
    ConeVec e;
    e.l = Vector::Ones(sf.Gl.rows());
    for (const auto& blk : sf.blocks) e.p.push_back(Matrix::Identity(blk.dim, blk.dim));
    return e;
}

double min_eig(const Matrix& m) {
    if (m.rows() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

// Largest t with v + t e not in the interior, i.e. -min eigenvalue over all cones.
double max_violation(const ConeVec& v) {
    double t = -std::numeric_limits<double>::infinity();
    if (v.l.size() > 0) t = std::max(t, -v.l.minCoeff());
    for (const auto& m : v.p) t = std::max(t, -min_eig(m));
    return t;
}

// Nesterov-Todd scaling: s = R diag(lambda) R^T, z = R^{-T} diag(lambda) R^{-1};
// for the orthant s = d lambda, z = lambda / d.
struct Scaling {
    Vector d;
    Vector lambda_l;
    std::vector<Matrix> R;
    std::vector<Matrix> Rinv;
    std::vector<Vector> lambda_p;
};

bool nt_factor(const Matrix& s, const Matrix& z, Matrix& left, Matrix& right_inv, Vector& lambda) {
    Eigen::LLT<Matrix> ls(s), lz(z);
    if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
    const Matrix Ls = ls.matrixL();
    const Matrix Lz = lz.matrixL();
    Eigen::BDCSVD<Matrix> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
    lambda = svd.singularValues();
    if (!(lambda.minCoeff() > 0.0) || !lambda.allFinite()) return false;
    const Vector isq = lambda.cwiseSqrt().cwiseInverse();
    left = Ls * svd.matrixV() * isq.asDiagonal();
    right_inv = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
    return true;
}

bool initial_scaling(const ConeVec& s, const ConeVec& z, Scaling& w) {
    if (s.l.size() > 0 && (s.l.minCoeff() <= 0.0 || z.l.minCoeff() <= 0.0)) return false;
    w.d = (s.l.array() / z.l.array()).sqrt();
    w.lambda_l = (s.l.array() * z.l.array()).sqrt();
    w.R.resize(s.p.size());
    w.Rinv.resize(s.p.size());
    w.lambda_p.resize(s.p.size());
    for (std::size_t j = 0; j < s.p.size(); ++j)
        if (!nt_factor(s.p[j], z.p[j], w.R[j], w.Rinv[j], w.lambda_p[j])) return false;
    return true;
}

// Moves the scaling to the new pair given in scaled coordinates (s_new = R st R^T, z_new = R^{-T} zt R^{-1}).
bool update_scaling(Scaling& w, const ConeVec& st, const ConeVec& zt) {
    if (st.l.size() > 0) {
        if (st.l.minCoeff() <= 0.0 || zt.l.minCoeff() <= 0.0) return false;
        w.d = w.d.array() * (st.l.array() / zt.l.array()).sqrt();
        w.lambda_l = (st.l.array() * zt.l.array()).sqrt();
    }
    for (std::size_t j = 0; j < st.p.size(); ++j) {
        Matrix left, right_inv;
        Vector lam;
        if (!nt_factor(st.p[j], zt.p[j], left, right_inv, lam)) return false;
        w.R[j] = w.R[j] * left;
        w.Rinv[j] = right_inv * w.Rinv[j];
        w.lambda_p[j] = lam;
    }
    return true;
}

ConeVec lambda_vec(const Scaling& w) {
    ConeVec out;
    out.l = w.lambda_l;
    for (const auto& lam : w.lambda_p) out.p.push_back(lam.asDiagonal().toDenseMatrix());
    return out;
}

ConeVec primal_slack(const Scaling& w) {
    ConeVec s;
    s.l = w.d.cwiseProduct(w.lambda_l);
    for (std::size_t j = 0; j < w.R.size(); ++j)
        s.p.push_back(w.R[j] * w.lambda_p[j].asDiagonal() * w.R[j].transpose());
    return s;
}

ConeVec dual_slack(const Scaling& w) {
    ConeVec z;
    z.l = w.lambda_l.cwiseQuotient(w.d);
    for (std::size_t j = 0; j < w.R.size(); ++j)
        z.p.push_back(w.Rinv[j].transpose() * w.lambda_p[j].asDiagonal() * w.Rinv[j]);
    return z;
}

// Jordan product (u v + v u) / 2 and its inverse against a diagonal lambda.
ConeVec jordan(const ConeVec& u, const ConeVec& v) {
    ConeVec out;
    out.l = u.l.cwiseProduct(v.l);
    for (std::size_t j = 0; j < u.p.size(); ++j) out.p.push_back(0.5 * (u.p[j] * v.p[j] + v.p[j] * u.p[j]));
    return out;
}

ConeVec lambda_solve(const Scaling& w, const ConeVec& rhs) {
    ConeVec out;
    out.l = rhs.l.cwiseQuotient(w.lambda_l);
    for (std::size_t j = 0; j < rhs.p.size(); ++j) {
        const Vector& lam = w.lambda_p[j];
        Matrix m = rhs.p[j];
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) *= 2.0 / (lam(r) + lam(c));
        out.p.push_back(std::move(m));
    }
    return out;
}

// Scaled-space vector (LP: times d, PSD: R x R^T) back to the original space.
ConeVec unscale_primal(const Scaling& w, const ConeVec& v) {
    ConeVec out;
    out.l = w.d.cwiseProduct(v.l);
    for (std::size_t j = 0; j < v.p.size(); ++j) out.p.push_back(w.R[j] * v.p[j] * w.R[j].transpose());
    return out;
}

// Largest step t <= 1/eps-ish keeping lambda + t dir in the cone, returned as the
// inverse: max(0, -min eigenvalue of lambda^{-1/2} dir lambda^{-1/2}).
double step_ratio(const Scaling& w, const ConeVec& dir) {
    double t = 0.0;
    if (dir.l.size() > 0) t = std::max(t, -(dir.l.cwiseQuotient(w.lambda_l)).minCoeff());
    for (std::size_t j = 0; j < dir.p.size(); ++j) {
        const Vector isq = w.lambda_p[j].cwiseSqrt().cwiseInverse();
        const Matrix m = isq.asDiagonal() * dir.p[j] * isq.asDiagonal();
        t = std::max(t, -min_eig(0.5 * (m + m.transpose())));
    }
    return t;
}

// Newton system  A^T uy + G^T uz = bx,  A ux = by,  G ux - W^T W uz = bz.
//
// Small PSD blocks and the orthant keep uz as unknowns (svec coordinates, off-diagonal entries
// scaled by sqrt(2)), which avoids squaring the conditioning of W near the boundary. Large blocks
// are condensed: their uz is eliminated through W^{-1} (.) W^{-1}, adding G_j^T (W^{-1} (.) W^{-1}) G_j
// to the primal block, since their svec dimension would make the expanded matrix far too big.
// The assembled matrix goes through a sparse LU with partial pivoting; solutions are refined
// against the three block equations.
class KktSolver {
public:
    static constexpr int kExpandedMaxDim = 16;

    explicit KktSolver(const Standard& sf) : sf_(sf) {
        n_ = sf_.n;
        m_ = static_cast<int>(sf_.A.rows());
        int off = static_cast<int>(sf_.Gl.rows());
        for (const auto& blk : sf_.blocks) {
            if (blk.dim <= kExpandedMaxDim) {
                block_offset_.push_back(off);
                off += blk.dim * (blk.dim + 1) / 2;
            } else {
                block_offset_.push_back(-1);
            }
        }
        nz_ = off;
    }

    bool factor(const Scaling* w) {
        w_ = w;
        const int zo = n_ + m_;
        trip_.clear();
        for (int i = 0; i < n_ + m_; ++i) trip_.emplace_back(i, i, 0.0);
        for (int k = 0; k < sf_.A.outerSize(); ++k)
            for (SpMat::InnerIterator it(sf_.A, k); it; ++it) {
                trip_.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
                trip_.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()), it.value());
            }
        for (int k = 0; k < sf_.Gl.outerSize(); ++k)
            for (SpMat::InnerIterator it(sf_.Gl, k); it; ++it) {
                trip_.emplace_back(zo + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
                trip_.emplace_back(static_cast<int>(it.col()), zo + static_cast<int>(it.row()), it.value());
            }
        for (int r = 0; r < sf_.Gl.rows(); ++r) {
            const double d = w ? w->d(r) : 1.0;
            trip_.emplace_back(zo + r, zo + r, -d * d);
        }
        for (std::size_t j = 0; j < sf_.blocks.size(); ++j) {
            const auto& blk = sf_.blocks[j];
            if (block_offset_[j] < 0) {
                // Condensed: H_ab = <F_a, P F_b P> with P = W^{-1}.
                Matrix P = Matrix::Identity(blk.dim, blk.dim);
                if (w) P = w->Rinv[j].transpose() * w->Rinv[j];
                for (std::size_t a = 0; a < blk.vars.size(); ++a)
                    for (std::size_t b = 0; b < blk.vars.size(); ++b) {
                        double v = 0.0;
                        for (const auto& e : blk.entries[a])
                            for (const auto& f : blk.entries[b]) {
                                const double k = 2.0 / ((e.r == e.c ? 2.0 : 1.0) * (f.r == f.c ? 2.0 : 1.0));
                                v += e.coef * f.coef * k * (P(e.r, f.r) * P(e.c, f.c) + P(e.r, f.c) * P(e.c, f.r));
                            }
                        trip_.emplace_back(blk.vars[a], blk.vars[b], v);
                    }
                continue;
            }
            const int base = zo + block_offset_[j];
            for (std::size_t a = 0; a < blk.vars.size(); ++a)
                for (const auto& e : blk.entries[a]) {
                    const int row = base + svec_index(e.r, e.c);
                    const double v = -e.coef * svec_weight(e.r, e.c);
                    trip_.emplace_back(row, blk.vars[a], v);
                    trip_.emplace_back(blk.vars[a], row, v);
                }
            Matrix W = Matrix::Identity(blk.dim, blk.dim);
            if (w) W = w->R[j] * w->R[j].transpose();
            // Column (a, b) holds svec(W E_ab W) for the orthonormal svec basis matrix E_ab.
            for (int b = 0; b < blk.dim; ++b)
                for (int a = 0; a <= b; ++a) {
                    const int col = svec_index(a, b);
                    const double u = a == b ? 0.5 : 1.0 / std::sqrt(2.0);
                    for (int c = 0; c < blk.dim; ++c)
                        for (int r = 0; r <= c; ++r) {
                            const int row = svec_index(r, c);
                            const double v = svec_weight(r, c) * u * (W(r, a) * W(b, c) + W(r, b) * W(a, c));
                            trip_.emplace_back(base + row, base + col, -v);
                        }
                }
        }
        const int total = n_ + m_ + nz_;
        K_.resize(total, total);
        K_.setFromTriplets(trip_.begin(), trip_.end());
        K_.makeCompressed();
        if (!analyzed_) {
            lu_.analyzePattern(K_);
            analyzed_ = true;
        }
        lu_.factorize(K_);
        return lu_.info() == Eigen::Success;
    }

    // Also returns the scaled dual direction uzs = W uz (d uz on the orthant, R^T uz R on PSD blocks).
    // Condensed blocks produce it directly as R^{-1} (G ux - bz) R^{-T}, which keeps its accuracy when
    // the scaling is badly conditioned; going through uz would square that conditioning.
    void solve(const Vector& bx, const Vector& by, const ConeVec& bz, Vector& ux, Vector& uy, ConeVec& uz,
               ConeVec& uzs) const {
        solve_assembled(bx, by, bz, ux, uy, uz, uzs);
        const double scale = std::max({1.0, bx.lpNorm<Eigen::Infinity>(), by.lpNorm<Eigen::Infinity>(), norm(bz)});
        double last = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 5; ++it) {
            const Vector r1 = bx - sf_.A.transpose() * uy - apply_Gt(sf_, uz);
            const Vector r2 = by - sf_.A * ux;
            ConeVec r3 = bz;
            axpy(-1.0, apply_G(sf_, ux), r3);
            axpy(1.0, apply_Wt(uzs), r3);
            const double r = std::max({r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>(), norm(r3)});
            if (r <= 1e-15 * scale || r > 0.5 * last) break;
            last = r;
            Vector cx, cy;
            ConeVec cz, czs;
            solve_assembled(r1, r2, r3, cx, cy, cz, czs);
            ux += cx;
            uy += cy;
            axpy(1.0, cz, uz);
            axpy(1.0, czs, uzs);
        }
    }

    void solve(const Vector& bx, const Vector& by, const ConeVec& bz, Vector& ux, Vector& uy, ConeVec& uz) const {
        ConeVec uzs;
        solve(bx, by, bz, ux, uy, uz, uzs);
    }

private:
    void solve_assembled(const Vector& bx, const Vector& by, const ConeVec& bz, Vector& ux, Vector& uy,
                         ConeVec& uz, ConeVec& uzs) const {
        const int total = n_ + m_ + nz_;
        Vector rhs = Vector::Zero(total);
        rhs.head(n_) = bx;
        rhs.segment(n_, m_) = by;
        rhs.segment(n_ + m_, sf_.Gl.rows()) = bz.l;
        for (std::size_t j = 0; j < sf_.blocks.size(); ++j) {
            const auto& blk = sf_.blocks[j];
            if (block_offset_[j] < 0) {
                rhs.head(n_) += apply_Gt_block(j, condense(j, bz.p[j]));
                continue;
            }
            for (int c = 0; c < blk.dim; ++c)
                for (int r = 0; r <= c; ++r)
                    rhs(n_ + m_ + block_offset_[j] + svec_index(r, c)) = svec_weight(r, c) * bz.p[j](r, c);
        }
        Vector sol = lu_.solve(rhs);
        const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
        double last = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 10; ++it) {
            const Vector res = rhs - K_ * sol;
            const double r = res.lpNorm<Eigen::Infinity>();
            if (r <= 1e-15 * scale || r > 0.5 * last) break;
            last = r;
            sol += lu_.solve(res);
        }
        ux = sol.head(n_);
        uy = sol.segment(n_, m_);
        uz.l = sol.segment(n_ + m_, sf_.Gl.rows());
        uzs.l = w_ ? Vector(w_->d.cwiseProduct(uz.l)) : uz.l;
        uz.p.clear();
        uzs.p.clear();
        for (std::size_t j = 0; j < sf_.blocks.size(); ++j) {
            const auto& blk = sf_.blocks[j];
            if (block_offset_[j] < 0) {
                Matrix g = apply_G_block(j, ux);
                g -= bz.p[j];
                if (!w_) {
                    uz.p.push_back(g);
                    uzs.p.push_back(std::move(g));
                    continue;
                }
                const Matrix& Ri = w_->Rinv[j];
                Matrix v = Ri * g * Ri.transpose();
                uz.p.push_back(Ri.transpose() * v * Ri);
                uzs.p.push_back(std::move(v));
                continue;
            }
            Matrix mtx(blk.dim, blk.dim);
            for (int c = 0; c < blk.dim; ++c)
                for (int r = 0; r <= c; ++r) {
                    mtx(r, c) = sol(n_ + m_ + block_offset_[j] + svec_index(r, c)) / svec_weight(r, c);
                    mtx(c, r) = mtx(r, c);
                }
            uzs.p.push_back(w_ ? Matrix(w_->R[j].transpose() * mtx * w_->R[j]) : mtx);
            uz.p.push_back(std::move(mtx));
        }
    }

    // W^{-1} v W^{-1} for block j.
    Matrix condense(std::size_t j, const Matrix& v) const {
        if (!w_) return v;
        const Matrix P = w_->Rinv[j].transpose() * w_->Rinv[j];
        return P * v * P;
    }

    Matrix apply_G_block(std::size_t j, const Vector& x) const {
        const auto& blk = sf_.blocks[j];
        Matrix m = Matrix::Zero(blk.dim, blk.dim);
        for (std::size_t a = 0; a < blk.vars.size(); ++a) {
            const double xv = x(blk.vars[a]);
            if (xv == 0.0) continue;
            for (const auto& e : blk.entries[a]) m(e.r, e.c) -= e.coef * xv;
        }
        m.triangularView<Eigen::StrictlyLower>() = m.transpose().triangularView<Eigen::StrictlyLower>();
        return m;
    }

    Vector apply_Gt_block(std::size_t j, const Matrix& z) const {
        const auto& blk = sf_.blocks[j];
        Vector out = Vector::Zero(n_);
        for (std::size_t a = 0; a < blk.vars.size(); ++a) {
            double v = 0.0;
            for (const auto& e : blk.entries[a]) v += e.coef * (e.r == e.c ? z(e.r, e.c) : z(e.r, e.c) + z(e.c, e.r));
            out(blk.vars[a]) -= v;
        }
        return out;
    }

    // W^T v for a scaled vector: d v on the orthant, R v R^T on the semidefinite blocks.
    ConeVec apply_Wt(const ConeVec& v) const {
        if (!w_) return v;
        ConeVec out;
        out.l = v.l.cwiseProduct(w_->d);
        for (std::size_t j = 0; j < v.p.size(); ++j) out.p.push_back(w_->R[j] * v.p[j] * w_->R[j].transpose());
        return out;
    }

    // Column-major upper triangle, r <= c.
    static int svec_index(int r, int c) { return c * (c + 1) / 2 + r; }
    static double svec_weight(int r, int c) { return r == c ? 1.0 : std::sqrt(2.0); }

    const Standard& sf_;
    const Scaling* w_ = nullptr;
    int n_ = 0, m_ = 0, nz_ = 0;
    std::vector<int> block_offset_;  // -1 for condensed blocks
    std::vector<Triplet> trip_;
    SpMat K_;
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
    bool analyzed_ = false;
};

struct Direction {
    Vector dx, dy;
    ConeVec dzs;   // scaled dual direction, R^T dz R
    ConeVec dss;   // scaled primal direction
    double dtau = 0.0;
    double dkappa = 0.0;
};

}  // namespace

ConicSolution InteriorPointSolver::solve(const ConicProgram& prog, const SolverOptions& opts) const {
    Standard sf = to_standard(prog);
    equilibrate(sf);
    const int n = sf.n;
    ConicSolution out;
    out.x = Vector::Zero(n);
    out.y = Vector::Zero(sf.A.rows());

    const ConeVec h = cone_h(sf);
    const ConeVec e = cone_identity(sf);
    const double resx0 = std::max(1.0, sf.c.norm());
    const double resy0 = std::max(1.0, sf.b.norm());
    const double resz0 = std::max(1.0, norm(h));

    KktSolver kkt(sf);
    Vector x, y;
    ConeVec s, z;

    // Starting point: least-squares primal and dual solutions shifted into the cone.
    if (!kkt.factor(nullptr)) return out;
    {
        ConeVec zero_cone = scaled(0.0, h);
        Vector ux, uy;
        ConeVec uz;
        kkt.solve(Vector::Zero(n), sf.b, h, ux, uy, uz);
        x = ux;
        s = scaled(-1.0, uz);
        kkt.solve(-sf.c, Vector::Zero(sf.b.size()), zero_cone, ux, uy, uz);
        y = uy;
        z = uz;
    }
    const double nrms = norm(s), nrmz = norm(z);
    const double ts = max_violation(s), tz = max_violation(z);
    if (ts >= -1e-8 * std::max(1.0, nrms)) axpy(1.0 + ts, e, s);
    if (tz >= -1e-8 * std::max(1.0, nrmz)) axpy(1.0 + tz, e, z);
    double tau = 1.0, kappa = 1.0;

    Scaling w;
    if (!initial_scaling(s, z, w)) return out;

    const double m1 = sf.degree + 1.0;
    double best_merit = std::numeric_limits<double>::infinity();
    int best_iter = 0;
    const double step_frac = 0.99;

    for (int iter = 0; iter <= opts.max_iter; ++iter) {
        s = primal_slack(w);
        z = dual_slack(w);

        const Vector Gtz = apply_Gt(sf, z);
        const Vector Aty = sf.A.transpose() * y;
        const Vector Ax = sf.A * x;
        const ConeVec Gx = apply_G(sf, x);

        const Vector rx = Aty + Gtz + sf.c * tau;
        const Vector ry = -Ax + sf.b * tau;
        ConeVec rz = s;
        axpy(1.0, Gx, rz);
        axpy(-tau, h, rz);
        const double cx = sf.c.dot(x), by = sf.b.dot(y), hz = dot(h, z);
        const double rt = kappa + cx + by + hz;
        const double gap = dot(s, z);
        const double mu = (gap + tau * kappa) / m1;

        const double pcost = cx / tau;
        const double dcost = -(by + hz) / tau;
        const double pres = std::max(ry.norm() / resy0, norm(rz) / resz0) / tau;
        const double dres = rx.norm() / resx0 / tau;
        const double rel_gap = gap / (tau * tau);

        const double merit = std::max({pres, dres, rel_gap / std::max(1.0, std::abs(pcost))});
        if (opts.verbose)
            std::printf("%3d  pcost % .8e  dcost % .8e  gap %.2e  pres %.2e  dres %.2e  tau %.2e  kappa %.2e\n", iter,
                        pcost + sf.c0, dcost + sf.c0, rel_gap, pres, dres, tau, kappa);
        if (merit < best_merit) {
            best_merit = merit;
            best_iter = iter;
            out.iterations = iter;
            out.x = sf.col_scale.cwiseProduct(x) / tau;
            out.y = sf.eq_scale.cwiseProduct(y) / tau;
            out.objective = pcost + sf.c0;
            out.dual_objective = dcost + sf.c0;
            out.primal_residual = pres;
            out.dual_residual = dres;
            out.gap = rel_gap;
        }

        if (pres <= opts.tol && dres <= opts.tol && rel_gap <= opts.tol * std::max(1.0, std::abs(pcost))) {
            out.status = SolveStatus::Optimal;
            return out;
        }
        if (by + hz < 0.0) {
            const double pinf = (Aty + Gtz).norm() / resx0 / (-(by + hz));
            if (pinf <= opts.tol) {
                out.status = SolveStatus::Infeasible;
                return out;
            }
        }
        if (cx < 0.0) {
            ConeVec gxs = Gx;
            axpy(1.0, s, gxs);
            const double dinf = std::max(Ax.norm() / resy0, norm(gxs) / resz0) / (-cx);
            if (dinf <= opts.tol) {
                out.status = SolveStatus::Unbounded;
                return out;
            }
        }
        // Near a degenerate optimum round-off eventually stalls or reverses progress.
        if (best_merit <= opts.inaccurate_tol && (merit > 1e3 * best_merit || iter - best_iter >= 5)) break;
        if (iter == opts.max_iter) break;

        if (!kkt.factor(&w)) break;

        // Direction for the tau column, shared by predictor and corrector.
        Vector x2, y2;
        ConeVec z2, z2s;
        kkt.solve(-sf.c, sf.b, h, x2, y2, z2, z2s);
        const double denom_base = -sf.c.dot(x2) - sf.b.dot(y2) - dot(h, z2);

        const ConeVec lam = lambda_vec(w);
        const ConeVec lamsq = jordan(lam, lam);

        auto newton = [&](const ConeVec& ds_rhs, double dk_rhs, Direction& d) {
            const ConeVec q = lambda_solve(w, ds_rhs);
            ConeVec bz = unscale_primal(w, q);
            axpy(1.0, rz, bz);
            bz = scaled(-1.0, bz);  // -d_z - R q R^T with d_z = r_z
            Vector x1, y1;
            ConeVec z1, z1s;
            kkt.solve(-rx, ry, bz, x1, y1, z1, z1s);
            const double num = rt + dk_rhs / tau + sf.c.dot(x1) + sf.b.dot(y1) + dot(h, z1);
            d.dtau = num / (kappa / tau + denom_base);
            d.dx = x1 + d.dtau * x2;
            d.dy = y1 + d.dtau * y2;
            d.dzs = z1s;
            axpy(d.dtau, z2s, d.dzs);
            d.dss = q;
            axpy(-1.0, d.dzs, d.dss);
            d.dkappa = (dk_rhs - kappa * d.dtau) / tau;
        };

        auto max_step = [&](const Direction& d) {
            double t = std::max(step_ratio(w, d.dss), step_ratio(w, d.dzs));
            t = std::max(t, -d.dtau / tau);
            t = std::max(t, -d.dkappa / kappa);
            return t;
        };

        // Predictor.
        Direction aff;
        newton(scaled(-1.0, lamsq), -tau * kappa, aff);
        const double t_aff = max_step(aff);
        const double alpha_aff = t_aff > 0.0 ? std::min(1.0, 1.0 / t_aff) : 1.0;
        const double sigma = std::pow(1.0 - alpha_aff, 3);

        // Corrector with second-order term.
        ConeVec ds_rhs = scaled(-1.0, lamsq);
        axpy(-1.0, jordan(aff.dss, aff.dzs), ds_rhs);
        axpy(sigma * mu, e, ds_rhs);
        Direction dir;
        newton(ds_rhs, -tau * kappa - aff.dtau * aff.dkappa + sigma * mu, dir);
        const double t = max_step(dir);
        const double alpha = t > 0.0 ? std::min(1.0, step_frac / t) : 1.0;

        if (!dir.dx.allFinite() || !std::isfinite(dir.dtau)) break;

        x += alpha * dir.dx;
        y += alpha * dir.dy;
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        ConeVec st = lam, zt = lam;
        axpy(alpha, dir.dss, st);
        axpy(alpha, dir.dzs, zt);
        if (!update_scaling(w, st, zt)) break;
    }
    out.status = best_merit <= opts.inaccurate_tol ? SolveStatus::Inaccurate : SolveStatus::MaxIterations;
    return out;
}

}  // namespace covsteer::sdp
