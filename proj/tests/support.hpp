#pragma once

// Shared fixtures and random generators for the test suites. The random
// generators are seeded explicitly so failures reproduce.

#include "cqm/instrument.hpp"
#include "cqm/matrix.hpp"
#include "cqm/povm.hpp"

#include <random>
#include <string>
#include <vector>

namespace cqm::test {

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = Complex(gauss(rng), gauss(rng));
    return m;
}

inline Matrix random_hermitian(std::mt19937_64& rng, int dim) {
    const Matrix m = random_matrix(rng, dim, dim);
    return (m + m.adjoint()) / 2.0;
}

inline Matrix random_psd(std::mt19937_64& rng, int dim) {
    const Matrix m = random_matrix(rng, dim, dim);
    return m * m.adjoint();
}

inline Matrix random_density(std::mt19937_64& rng, int dim) {
    Matrix rho = random_psd(rng, dim);
    return rho / rho.trace().real();
}

inline Vector random_unit_vector(std::mt19937_64& rng, int dim) {
    Vector v = random_matrix(rng, dim, 1).col(0);
    return v / v.norm();
}

inline Matrix random_unitary(std::mt19937_64& rng, int dim) {
    const Matrix m = random_matrix(rng, dim, dim);
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < dim; ++i) {
        const Complex d = r(i, i);
        if (std::abs(d) > 0)
            q.col(i) *= d / std::abs(d);
    }
    return q;
}

// Random POVM: random PSD pieces Q_i whitened by S^(-1/2) on both sides.
inline DiscretePOVM random_povm(std::mt19937_64& rng, int dim, int outcomes) {
    std::vector<Matrix> pieces;
    Matrix sum = Matrix::Zero(dim, dim);
    for (int i = 0; i < outcomes; ++i) {
        pieces.push_back(random_psd(rng, dim));
        sum += pieces.back();
    }
    const auto eig = hermitian_eig(sum);
    Matrix inv_sqrt = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i)
        inv_sqrt += eig.eigenvectors.col(i) * eig.eigenvectors.col(i).adjoint() /
                    std::sqrt(eig.eigenvalues(i));
    std::vector<PovmOutcome> labeled;
    for (int i = 0; i < outcomes; ++i)
        labeled.push_back({"m" + std::to_string(i), inv_sqrt * pieces[i] * inv_sqrt});
    return validate_povm(labeled, 1e-8);
}

// Random PVM: random unitary columns partitioned into blocks.
inline DiscretePOVM random_pvm(std::mt19937_64& rng, int dim, int outcomes) {
    const Matrix u = random_unitary(rng, dim);
    std::vector<int> sizes(outcomes, 1);
    for (int extra = dim - outcomes; extra > 0; --extra)
        sizes[rng() % outcomes] += 1;
    std::vector<PovmOutcome> labeled;
    int col = 0;
    for (int i = 0; i < outcomes; ++i) {
        Matrix p = Matrix::Zero(dim, dim);
        for (int c = 0; c < sizes[i]; ++c)
            p += projector(u.col(col++));
        labeled.push_back({"p" + std::to_string(i), p});
    }
    return validate_povm(labeled, 1e-8);
}

// Random instrument: random Kraus pieces whitened so the total map is
// trace preserving, grouped one outcome each.
inline Instrument random_instrument(std::mt19937_64& rng, int dim, int outcomes,
                                    int kraus_per_outcome = 2) {
    std::vector<std::vector<Matrix>> groups(outcomes);
    Matrix total = Matrix::Zero(dim, dim);
    for (int i = 0; i < outcomes; ++i) {
        for (int s = 0; s < kraus_per_outcome; ++s) {
            groups[i].push_back(random_matrix(rng, dim, dim));
            total += groups[i].back().adjoint() * groups[i].back();
        }
    }
    const auto eig = hermitian_eig(total);
    Matrix inv_sqrt = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i)
        inv_sqrt += eig.eigenvectors.col(i) * eig.eigenvectors.col(i).adjoint() /
                    std::sqrt(eig.eigenvalues(i));
    std::vector<InstrumentOutcome> labeled;
    for (int i = 0; i < outcomes; ++i) {
        for (auto& a : groups[i])
            a = a * inv_sqrt;
        labeled.push_back({"m" + std::to_string(i), groups[i]});
    }
    return instrument_from_kraus(dim, labeled, 1e-8);
}

// ---- named fixtures ----

inline Vector basis_vector(int dim, int index) {
    Vector v = Vector::Zero(dim);
    v(index) = 1.0;
    return v;
}

inline DiscretePOVM z_pvm() {
    return validate_povm({{"0", projector(basis_vector(2, 0))},
                          {"1", projector(basis_vector(2, 1))}});
}

inline DiscretePOVM x_pvm() {
    Vector plus(2), minus(2);
    plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    minus << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    return validate_povm({{"+", projector(plus)}, {"-", projector(minus)}});
}

inline Vector trine_vector(int j) {
    const double theta = 2.0 * M_PI * j / 3.0;
    Vector t(2);
    t << std::cos(theta / 2.0), std::sin(theta / 2.0);
    return t;
}

inline DiscretePOVM trine_povm() {
    std::vector<PovmOutcome> outcomes;
    for (int j = 0; j < 3; ++j)
        outcomes.push_back({"t" + std::to_string(j), (2.0 / 3.0) * projector(trine_vector(j))});
    return validate_povm(outcomes);
}

// M_+- = (I +- sigma_z / 2) / 2 = diag(0.75, 0.25) / diag(0.25, 0.75)
inline DiscretePOVM unsharp_qubit_povm() {
    Matrix plus = Matrix::Zero(2, 2), minus = Matrix::Zero(2, 2);
    plus(0, 0) = 0.75;
    plus(1, 1) = 0.25;
    minus(0, 0) = 0.25;
    minus(1, 1) = 0.75;
    return validate_povm({{"+", plus}, {"-", minus}});
}

inline DiscretePOVM qutrit_degenerate_pvm() {
    Matrix a = Matrix::Zero(3, 3), b = Matrix::Zero(3, 3);
    a(0, 0) = a(1, 1) = 1.0;
    b(2, 2) = 1.0;
    return validate_povm({{"a", a}, {"b", b}});
}

inline Instrument trine_preparator() {
    const auto povm = trine_povm();
    std::vector<Matrix> states;
    for (int j = 0; j < 3; ++j)
        states.push_back(projector(trine_vector(j)));
    return preparator_instrument(povm, states);
}

// Maximally refinable instrument with the phi vectors equal to the
// normalized d vectors of the refinement.
inline Instrument max_refinable_d_choice(const DiscretePOVM& povm) {
    const auto refined = refine(povm);
    std::vector<Vector> phis;
    for (const auto& e : refined.entries)
        phis.push_back(e.d / e.d.norm());
    return max_refinable_instrument(refined, phis);
}

// The g-choice: phi_ik = g_ik / |g_ik|.
inline Instrument max_refinable_g_choice(const DiscretePOVM& povm) {
    const auto refined = refine(povm);
    std::vector<Vector> phis;
    for (const auto& e : refined.entries)
        phis.push_back(e.g / e.g.norm());
    return max_refinable_instrument(refined, phis);
}

// Lüders-type instrument of any POVM: single Kraus operator sqrt(M_i).
inline Instrument sqrt_instrument(const DiscretePOVM& povm) {
    std::vector<InstrumentOutcome> outcomes;
    for (const auto& o : povm.outcomes)
        outcomes.push_back({o.label, {psd_sqrt(o.effect)}});
    return instrument_from_kraus(povm.dim, outcomes);
}

inline double trace_distance(const Matrix& a, const Matrix& b) {
    const auto eig = hermitian_eig(a - b, 1e-8);
    return 0.5 * eig.eigenvalues.cwiseAbs().sum();
}

inline double fidelity_with_pure(const Matrix& rho, const Vector& psi) {
    return (psi.adjoint() * rho * psi).real()(0, 0) / psi.squaredNorm();
}

}  // namespace cqm::test
