#pragma once

// Minimal pure measurement models <H', P, |xi><xi|, U> realizing an
// instrument, post-interaction joint states, and pointer refinement.

#include "cqm/instrument.hpp"
#include "cqm/matrix.hpp"
#include "cqm/povm.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cqm {

struct MeasurementModel {
    int system_dim = 0;
    int ancilla_dim = 0;
    // label -> ancilla basis indices, disjoint blocks covering 0..ancilla_dim-1
    std::vector<std::pair<std::string, std::vector<int>>> pointer_blocks;
    Vector xi;  // unit probe vector
    Matrix U;   // coupling on system_dim * ancilla_dim (system-major indexing)
    std::optional<Instrument> source;  // retained by minimal_dilation

    const std::vector<int>& block(const std::string& label) const {
        for (const auto& [l, idx] : pointer_blocks)
            if (l == label) return idx;
        throw Error("UnknownLabel", label);
    }
};

struct JointState {
    int system_dim = 0;
    int ancilla_dim = 0;
    Matrix state;  // density operator on the composite space
};

inline void validate_model(const MeasurementModel& model, double tol = kDefaultTol) {
    const int n = model.system_dim * model.ancilla_dim;
    if (model.U.rows() != n || model.U.cols() != n)
        throw Error("DimMismatch", "coupling unitary has wrong dimensions");
    if (std::abs(model.xi.norm() - 1.0) > tol || model.xi.size() != model.ancilla_dim)
        throw Error("NotUnit", "probe vector xi");
    const double unit_res = (model.U.adjoint() * model.U - Matrix::Identity(n, n)).norm();
    if (unit_res > tol)
        throw Error("NotUnitary", "U residual " + std::to_string(unit_res));
    std::vector<bool> covered(model.ancilla_dim, false);
    for (const auto& [label, idx] : model.pointer_blocks) {
        for (int b : idx) {
            if (b < 0 || b >= model.ancilla_dim || covered[b])
                throw Error("BadBlocks", "pointer blocks do not partition the ancilla basis");
            covered[b] = true;
        }
    }
    for (bool c : covered)
        if (!c) throw Error("BadBlocks", "pointer blocks do not cover the ancilla basis");
}

// Builds the minimal pure model of an instrument: ancilla dimension
// sum_i r_i, pointer block per outcome, and a coupling U with
// U(psi (x) xi) = sum_{i,s} A_is psi (x) b_is. The extension of U beyond
// these columns is the deterministic completion from operator-core.
inline MeasurementModel minimal_dilation(const Instrument& inst,
                                         std::optional<Vector> xi_choice = std::nullopt) {
    const int d = inst.dim;
    MeasurementModel model;
    model.system_dim = d;
    model.ancilla_dim = 0;
    for (const auto& o : inst.outcomes) {
        std::vector<int> idx;
        for (std::size_t s = 0; s < o.kraus.size(); ++s)
            idx.push_back(model.ancilla_dim + static_cast<int>(s));
        model.pointer_blocks.emplace_back(o.label, std::move(idx));
        model.ancilla_dim += static_cast<int>(o.kraus.size());
    }
    const int big = d * model.ancilla_dim;

    if (xi_choice) {
        if (xi_choice->size() != model.ancilla_dim ||
            std::abs(xi_choice->norm() - 1.0) > kDefaultTol)
            throw Error("NotUnit", "xi must be a unit vector of ancilla dimension");
        model.xi = *xi_choice;
    } else {
        model.xi = Vector::Zero(model.ancilla_dim);
        model.xi(0) = 1.0;
    }

    // Images of the system basis under psi -> sum_{i,s} A_is psi (x) b_is.
    Matrix images(big, d);
    images.setZero();
    int offset = 0;
    for (const auto& o : inst.outcomes) {
        for (std::size_t s = 0; s < o.kraus.size(); ++s) {
            const Matrix& a = o.kraus[s];
            for (int j = 0; j < d; ++j)
                for (int r = 0; r < d; ++r)
                    images(r * model.ancilla_dim + offset + static_cast<int>(s), j) += a(r, j);
        }
        offset += static_cast<int>(o.kraus.size());
    }

    // U must satisfy U (e_j (x) xi) = images.col(j). With C completing the
    // images, B completing xi, Q the permutation sending e_j to the
    // composite index of e_j (x) e_0 (j < d), this is U = C Q^dag (I (x) B)^dag.
    const Matrix c = complete_to_unitary(images);
    const Matrix b = complete_to_unitary(model.xi);
    Matrix q = Matrix::Zero(big, big);
    for (int j = 0; j < d; ++j)
        q(j * model.ancilla_dim, j) = 1.0;
    int next = d;
    for (int m = 0; m < big; ++m)
        if (m % model.ancilla_dim != 0)
            q(m, next++) = 1.0;
    model.U = c * q.adjoint() * tensor_product(Matrix::Identity(d, d), b).adjoint();
    model.source = inst;
    return model;
}

namespace detail {

inline Matrix pointer_projection(const MeasurementModel& model, const std::vector<int>& block) {
    Matrix p = Matrix::Zero(model.ancilla_dim, model.ancilla_dim);
    for (int b : block)
        p(b, b) = 1.0;
    return p;
}

// tr_anc[omega (I (x) P_block)] for an arbitrary composite operator.
inline Matrix trace_out_pointer(const MeasurementModel& model, const Matrix& omega,
                                const std::vector<int>& block) {
    const int d = model.system_dim;
    const int da = model.ancilla_dim;
    Matrix out = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int b : block)
                out(i, j) += omega(i * da + b, j * da + b);
    return out;
}

}  // namespace detail

// Unnormalized CP action realized by the model for one outcome; accepts
// any input operator, not just density matrices.
inline Matrix realized_apply(const MeasurementModel& model, const std::string& label,
                             const Matrix& rho) {
    const Matrix omega = model.U * tensor_product(rho, projector(model.xi)) * model.U.adjoint();
    return detail::trace_out_pointer(model, omega, model.block(label));
}

// M_*(x_i, rho) via the model: couple, project the pointer, trace the
// ancilla, normalize.
inline ConditionalOutput realized_instrument(const MeasurementModel& model,
                                             const std::string& label, const Matrix& rho) {
    const Matrix unnormalized = realized_apply(model, label, rho);
    ConditionalOutput out;
    out.probability = unnormalized.trace().real();
    if (out.probability > kProbabilityFloor)
        out.state = unnormalized / out.probability;
    else if (out.probability < 0)
        out.probability = 0;
    return out;
}

// omega_rho, or the projection-postulate state omega_rho^i when a label
// is given.
inline JointState post_measurement_joint_state(const MeasurementModel& model, const Matrix& rho,
                                               std::optional<std::string> label = std::nullopt) {
    JointState joint;
    joint.system_dim = model.system_dim;
    joint.ancilla_dim = model.ancilla_dim;
    const Matrix omega = model.U * tensor_product(rho, projector(model.xi)) * model.U.adjoint();
    if (!label) {
        joint.state = omega;
        return joint;
    }
    const Matrix proj = tensor_product(Matrix::Identity(model.system_dim, model.system_dim),
                                       detail::pointer_projection(model, model.block(*label)));
    const Matrix selected = proj * omega * proj;
    const double p = selected.trace().real();
    if (p <= kProbabilityFloor)
        throw Error("ZeroProbabilityBranch", *label);
    joint.state = selected / p;
    return joint;
}

namespace detail {

inline bool is_rank_one(const Matrix& a, double tol) {
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0) > tol &&
           (svd.singularValues().size() < 2 || svd.singularValues()(1) <= tol);
}

}  // namespace detail

// Same H', xi, U, but the pointer read at multiplicity
// resolution. Requires the source instrument to be maximally refinable:
// every Kraus operator a dyad |phi_ik><d_ik| and as many of them per
// outcome as the rank of the outcome's effect (r_i = m_i).
inline MeasurementModel refine_pointer(const MeasurementModel& model,
                                       double tol = kDefaultTol) {
    if (!model.source)
        throw Error("NotMaximallyRefinable", "model carries no source instrument");
    MeasurementModel out = model;
    out.pointer_blocks.clear();
    for (const auto& outcome : model.source->outcomes) {
        Matrix effect = Matrix::Zero(model.system_dim, model.system_dim);
        for (const auto& a : outcome.kraus) {
            if (!detail::is_rank_one(a, tol))
                throw Error("NotMaximallyRefinable",
                            outcome.label + ": Kraus operator is not a dyad");
            effect += a.adjoint() * a;
        }
        const auto eig = hermitian_eig(effect, tol);
        int rank = 0;
        for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i)
            if (eig.eigenvalues(i) > tol * std::max(eig.eigenvalues(0), 1e-30)) ++rank;
        if (rank != static_cast<int>(outcome.kraus.size()))
            throw Error("NotMaximallyRefinable",
                        outcome.label + ": Kraus rank differs from multiplicity");
        const auto& block = model.block(outcome.label);
        // ancilla index s within the block pairs with multiplicity k = s+1
        for (std::size_t s = 0; s < outcome.kraus.size(); ++s)
            out.pointer_blocks.emplace_back(
                refined_label(outcome.label, static_cast<int>(s) + 1),
                std::vector<int>{block[s]});
    }
    return out;
}

}  // namespace cqm
