#pragma once

// Dense complex-matrix substrate: tensor products, partial traces,
// Hermitian eigendecomposition, isometry completion, density validation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

namespace cqm {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kDefaultTol = 1e-10;

// All invariant violations carry a short kind tag ("NotHermitian", ...)
// so callers and the CLI can name the failed check.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& detail)
        : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

inline bool is_finite(const Matrix& m) {
    return m.allFinite();
}

inline double hermiticity_residual(const Matrix& m) {
    return (m - m.adjoint()).norm();
}

// Kronecker product; composite row index is (i_a * rows_b + i_b).
inline Matrix tensor_product(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

enum class Keep { A, B };

// Trace over the discarded tensor factor of a (dim_a*dim_b)^2 matrix.
inline Matrix partial_trace(const Matrix& m, int dim_a, int dim_b, Keep keep) {
    if (m.rows() != Eigen::Index(dim_a) * dim_b || m.cols() != m.rows())
        throw Error("DimMismatch", "partial_trace expects a square (dim_a*dim_b) matrix");
    if (keep == Keep::A) {
        Matrix out = Matrix::Zero(dim_a, dim_a);
        for (int i = 0; i < dim_a; ++i)
            for (int j = 0; j < dim_a; ++j)
                for (int b = 0; b < dim_b; ++b)
                    out(i, j) += m(i * dim_b + b, j * dim_b + b);
        return out;
    }
    Matrix out = Matrix::Zero(dim_b, dim_b);
    for (int a = 0; a < dim_b; ++a)
        for (int b = 0; b < dim_b; ++b)
            for (int i = 0; i < dim_a; ++i)
                out(a, b) += m(i * dim_b + a, i * dim_b + b);
    return out;
}

struct HermitianEigenSystem {
    RealVector eigenvalues;  // descending
    Matrix eigenvectors;     // orthonormal columns, phase-fixed
};

// Eigendecomposition of a Hermitian matrix. Eigenvalues come out
// descending; each eigenvector is rotated so that its component of
// largest modulus (first such index on ties) is real and non-negative.
inline HermitianEigenSystem hermitian_eig(const Matrix& a, double tol = kDefaultTol) {
    if (hermiticity_residual(a) > tol)
        throw Error("NotHermitian", "residual " + std::to_string(hermiticity_residual(a)));
    Eigen::SelfAdjointEigenSolver<Matrix> solver((a + a.adjoint()) / 2.0);
    if (solver.info() != Eigen::Success)
        throw Error("EigFailure", "self-adjoint eigensolver did not converge");
    const Eigen::Index n = a.rows();
    HermitianEigenSystem out;
    out.eigenvalues = solver.eigenvalues().reverse();
    out.eigenvectors.resize(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        Vector v = solver.eigenvectors().col(n - 1 - c);
        Eigen::Index pivot = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(v(r)) > best + 1e-14) {
                best = std::abs(v(r));
                pivot = r;
            }
        }
        if (best > 0) {
            Complex phase = v(pivot) / best;
            v /= phase;
        }
        out.eigenvectors.col(c) = v;
    }
    return out;
}

// Extends an n x k isometry to an n x n unitary whose first k columns
// are the input. Remaining columns come from Gram-Schmidt against the
// standard basis vectors in index order.
inline Matrix complete_to_unitary(const Matrix& v, double tol = kDefaultTol) {
    const Eigen::Index n = v.rows();
    const Eigen::Index k = v.cols();
    if (k > n)
        throw Error("DimMismatch", "more columns than rows");
    const double ortho = (v.adjoint() * v - Matrix::Identity(k, k)).norm();
    if (ortho > tol)
        throw Error("NotIsometry", "columns not orthonormal, residual " + std::to_string(ortho));
    Matrix u(n, n);
    u.leftCols(k) = v;
    Eigen::Index filled = k;
    for (Eigen::Index j = 0; j < n && filled < n; ++j) {
        Vector w = Vector::Zero(n);
        w(j) = 1.0;
        // two projection passes for stability
        for (int pass = 0; pass < 2; ++pass)
            w -= u.leftCols(filled) * (u.leftCols(filled).adjoint() * w);
        const double norm = w.norm();
        if (norm > 1e-8)
            u.col(filled++) = w / norm;
    }
    if (filled < n)
        throw Error("EigFailure", "could not complete orthonormal basis");
    return u;
}

// Checks Hermiticity, positivity (eigenvalues >= -tol), and unit trace;
// returns the operator with negative eigenvalues clipped to zero.
inline Matrix validate_density(const Matrix& rho, double tol = kDefaultTol) {
    if (rho.rows() != rho.cols())
        throw Error("DimMismatch", "density operator must be square");
    if (!is_finite(rho))
        throw Error("NotFinite", "density operator has non-finite entries");
    if (hermiticity_residual(rho) > tol)
        throw Error("NotHermitian", "residual " + std::to_string(hermiticity_residual(rho)));
    const auto eig = hermitian_eig(rho, tol);
    const double min_eig = eig.eigenvalues(eig.eigenvalues.size() - 1);
    if (min_eig < -tol)
        throw Error("NotPositive", "minimum eigenvalue " + std::to_string(min_eig));
    const double tr = rho.trace().real();
    if (std::abs(tr - 1.0) > tol)
        throw Error("TraceNotOne", "trace " + std::to_string(tr));
    RealVector clipped = eig.eigenvalues.cwiseMax(0.0);
    return eig.eigenvectors * clipped.asDiagonal() * eig.eigenvectors.adjoint();
}

// |u><v|
inline Matrix dyad(const Vector& u, const Vector& v) {
    return u * v.adjoint();
}

inline Matrix projector(const Vector& v) {
    return v * v.adjoint();
}

// Square root of a positive semidefinite matrix (negative eigenvalues
// below tol are clipped).
inline Matrix psd_sqrt(const Matrix& a, double tol = kDefaultTol) {
    const auto eig = hermitian_eig(a, tol);
    RealVector s = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors * s.asDiagonal() * eig.eigenvectors.adjoint();
}

}  // namespace cqm
