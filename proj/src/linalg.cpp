#include "covsteer/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace covsteer::linalg {

double asymmetry(const Matrix& m) {
    if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
    if (m.size() == 0) return 0.0;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

bool is_symmetric(const Matrix& m, double rel_tol) { return asymmetry(m) <= rel_tol; }

double min_eigenvalue(const Matrix& symmetric) {
    if (symmetric.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(symmetric), Eigen::EigenvaluesOnly);
    return eig.eigenvalues()(0);
}

double max_eigenvalue(const Matrix& symmetric) {
    if (symmetric.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(symmetric), Eigen::EigenvaluesOnly);
    return eig.eigenvalues()(eig.eigenvalues().size() - 1);
}

bool is_psd(const Matrix& symmetric, double tol) {
    if (symmetric.size() == 0) return true;
    const double scale = std::max(1.0, symmetric.cwiseAbs().maxCoeff());
    return min_eigenvalue(symmetric) >= -tol * scale;
}

Matrix psd_sqrt(const Matrix& symmetric) {
    if (symmetric.size() == 0) return symmetric;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(symmetric));
    const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix psd_factor(const Matrix& symmetric, double rel_tol) {
    const Eigen::Index n = symmetric.rows();
    if (n == 0) return Matrix(0, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(symmetric));
    const Vector& lambda = eig.eigenvalues();
    const double cutoff = rel_tol * std::max(1.0, lambda(n - 1));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (lambda(i) > cutoff) keep.push_back(i);
    }
    Matrix factor(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        factor.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]) * std::sqrt(lambda(keep[c]));
    }
    return factor;
}

Matrix weight_factor(const Matrix& symmetric, double rel_tol) {
    return psd_factor(symmetric, rel_tol).transpose();
}

double inverse_condition(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& sv = svd.singularValues();
    const double largest = sv(0);
    if (largest <= 0.0) return 0.0;
    return sv(sv.size() - 1) / largest;
}

}  // namespace covsteer::linalg
