#pragma once

// Sequential composition of instruments, joint POVMs with margins, and
// the complete-measurement scheme: measure M, then a Lüders measurement
// of a multiplicity PVM, recovering the maximally refined POVM.

#include "cqm/instrument.hpp"
#include "cqm/matrix.hpp"
#include "cqm/povm.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace cqm {

struct JointOutcome {
    std::string first;
    std::string second;
    std::vector<Matrix> kraus;  // may be empty for probability-0 branches
};

struct JointInstrument {
    int dim = 0;
    std::vector<JointOutcome> outcomes;

    std::string key(const JointOutcome& o) const { return o.first + "|" + o.second; }
};

// First M, then N: joint Kraus list of (i,j) is {B_jt A_is}, minimized.
inline JointInstrument compose_sequential(const Instrument& first, const Instrument& second,
                                          double rank_tol = kDefaultTol) {
    if (first.dim != second.dim)
        throw Error("DimMismatch", "sequential instruments must share a dimension");
    JointInstrument joint;
    joint.dim = first.dim;
    for (const auto& fo : first.outcomes) {
        for (const auto& so : second.outcomes) {
            std::vector<Matrix> ops;
            for (const auto& b : so.kraus)
                for (const auto& a : fo.kraus)
                    ops.push_back(b * a);
            joint.outcomes.push_back({fo.label, so.label, minimal_kraus(ops, rank_tol)});
        }
    }
    return joint;
}

inline Matrix joint_effect(const JointInstrument& joint, const JointOutcome& o) {
    Matrix effect = Matrix::Zero(joint.dim, joint.dim);
    for (const auto& a : o.kraus)
        effect += a.adjoint() * a;
    return effect;
}

inline DiscretePOVM joint_povm(const JointInstrument& joint) {
    DiscretePOVM povm;
    povm.dim = joint.dim;
    for (const auto& o : joint.outcomes)
        povm.outcomes.push_back({joint.key(o), joint_effect(joint, o)});
    return povm;
}

namespace detail {

inline DiscretePOVM joint_margin(const JointInstrument& joint, bool first) {
    DiscretePOVM povm;
    povm.dim = joint.dim;
    std::map<std::string, std::size_t> index;
    for (const auto& o : joint.outcomes) {
        const std::string& label = first ? o.first : o.second;
        auto it = index.find(label);
        if (it == index.end()) {
            index[label] = povm.outcomes.size();
            povm.outcomes.push_back({label, joint_effect(joint, o)});
        } else {
            povm.outcomes[it->second].effect += joint_effect(joint, o);
        }
    }
    return povm;
}

}  // namespace detail

// X -> J(X x Omega_N, I); always equals the first POVM.
inline DiscretePOVM margin_first(const JointInstrument& joint) {
    return detail::joint_margin(joint, true);
}

// Y -> J(Omega_M x Y, I) = M(Omega, N(Y)); carries the disturbance.
inline DiscretePOVM margin_second(const JointInstrument& joint) {
    return detail::joint_margin(joint, false);
}

// Projections N_1..N_K plus the completion N_0 = I - sum N_k.
struct MultiplicityPVM {
    int dim = 0;
    std::vector<Matrix> projections;  // N_1..N_K

    Matrix completion() const {
        Matrix n0 = Matrix::Identity(dim, dim);
        for (const auto& n : projections)
            n0 -= n;
        return n0;
    }
};

inline MultiplicityPVM validate_multiplicity_pvm(int dim, const std::vector<Matrix>& projections,
                                                 double tol = kDefaultTol) {
    for (std::size_t k = 0; k < projections.size(); ++k) {
        if (projections[k].rows() != dim || projections[k].cols() != dim)
            throw Error("DimMismatch", "projection " + std::to_string(k + 1));
        for (std::size_t l = 0; l <= k; ++l) {
            const Matrix prod = projections[k] * projections[l];
            const Matrix expected = (k == l) ? projections[k] : Matrix::Zero(dim, dim);
            if ((prod - expected).norm() > tol)
                throw Error("NotPVM", "N_" + std::to_string(k + 1) + " N_" +
                                          std::to_string(l + 1) + " violates orthogonality");
        }
    }
    return {dim, projections};
}

// Lüders instrument of the multiplicity PVM: outcomes "1".."K" and the
// completion branch "0", which is kept even when its projection vanishes.
inline Instrument multiplicity_luders(const MultiplicityPVM& mult) {
    Instrument inst;
    inst.dim = mult.dim;
    for (std::size_t k = 0; k < mult.projections.size(); ++k)
        inst.outcomes.push_back({std::to_string(k + 1), {mult.projections[k]}});
    inst.outcomes.push_back({"0", {mult.completion()}});
    return inst;
}

struct CompleteMeasurement {
    Instrument first;
    Instrument second;
    JointInstrument joint;
};

// The rank-1 scheme: first the instrument with single Kraus operators
// A_i = sum_k |phi_k><d_ik|, then the Lüders measurement of the
// multiplicity PVM. The joint outcome (x_i, k) occurs with probability
// <d_ik|rho|d_ik> and collapses the system to |phi_k><phi_k|.
inline CompleteMeasurement complete_measurement(const RefinedPOVM& refined,
                                                const MultiplicityPVM& mult,
                                                const std::vector<Vector>& phis,
                                                double tol = kDefaultTol) {
    const std::size_t big_k = mult.projections.size();
    if (phis.size() != big_k)
        throw Error("DimMismatch", "one phi vector per projection required");
    int max_mult = 0;
    std::vector<std::string> labels;
    for (const auto& entry : refined.entries) {
        max_mult = std::max(max_mult, entry.k);
        if (labels.empty() || labels.back() != entry.label)
            labels.push_back(entry.label);
    }
    if (static_cast<int>(big_k) < max_mult)
        throw Error("InsufficientK", "need at least " + std::to_string(max_mult) +
                                         " projections, got " + std::to_string(big_k));
    for (std::size_t k = 0; k < big_k; ++k) {
        if (std::abs(phis[k].norm() - 1.0) > tol)
            throw Error("NotUnit", "phi_" + std::to_string(k + 1));
        if ((mult.projections[k] * phis[k] - phis[k]).norm() > tol)
            throw Error("NotInRange", "phi_" + std::to_string(k + 1) +
                                          " is not in the range of its projection");
    }
    CompleteMeasurement out;
    out.first.dim = refined.dim;
    for (const auto& label : labels) {
        Matrix a = Matrix::Zero(refined.dim, refined.dim);
        for (const auto& entry : refined.entries)
            if (entry.label == label)
                a += dyad(phis[entry.k - 1], entry.d);
        out.first.outcomes.push_back({label, {a}});
    }
    out.second = multiplicity_luders(mult);
    out.joint = compose_sequential(out.first, out.second, tol);
    return out;
}

struct RefinementConditionEntry {
    std::string label;
    int k = 1;
    double residual = 0;   // off-target terms plus trace deviation of sigma
    Matrix sigma;          // extracted conditional state on N_k H
};

struct RefinementConditionReport {
    double max_residual = 0;
    std::vector<RefinementConditionEntry> entries;
};

// Verifies the condition sum_s |N_k phi_ibs><N_k phi_ias| =
// delta_ak delta_bk sigma_ik with sigma_ik a state; passing means the
// sequential joint implements the maximally refined POVM. The phi
// vectors are extracted from the Kraus operators via the duals,
// phi_ias = A_is g_ia.
inline RefinementConditionReport verify_refinement_condition(const Instrument& first,
                                                             const MultiplicityPVM& mult,
                                                             const RefinedPOVM& refined,
                                                             double tol = kDefaultTol) {
    const DiscretePOVM target = relabel(refined);
    const DiscretePOVM actual = associated_povm(first);
    if (actual.outcomes.size() != target.outcomes.size())
        throw Error("IncompatibleFirst", "outcome counts differ");
    for (std::size_t i = 0; i < target.outcomes.size(); ++i) {
        if (actual.outcomes[i].label != target.outcomes[i].label ||
            (actual.outcomes[i].effect - target.outcomes[i].effect).norm() > std::max(tol, 1e-8))
            throw Error("IncompatibleFirst",
                        "associated POVM differs at '" + target.outcomes[i].label + "'");
    }
    RefinementConditionReport report;
    for (const auto& outcome : first.outcomes) {
        std::vector<const RefinedEntry*> entries;
        for (const auto& e : refined.entries)
            if (e.label == outcome.label) entries.push_back(&e);
        const int m = static_cast<int>(entries.size());
        // phi_ias, projected by each N_k
        for (std::size_t kk = 0; kk < mult.projections.size(); ++kk) {
            const int k = static_cast<int>(kk) + 1;
            RefinementConditionEntry rec;
            rec.label = outcome.label;
            rec.k = k;
            rec.sigma = Matrix::Zero(first.dim, first.dim);
            double residual = 0;
            for (int a = 1; a <= m; ++a) {
                for (int b = 1; b <= m; ++b) {
                    Matrix t = Matrix::Zero(first.dim, first.dim);
                    for (const auto& op : outcome.kraus) {
                        const Vector pa = mult.projections[kk] * (op * entries[a - 1]->g);
                        const Vector pb = mult.projections[kk] * (op * entries[b - 1]->g);
                        t += dyad(pb, pa);
                    }
                    if (a == k && b == k) {
                        rec.sigma = t;
                        residual = std::max(residual, std::abs(t.trace().real() - 1.0));
                    } else {
                        residual = std::max(residual, t.norm());
                    }
                }
            }
            if (k > m) {
                // no (k,k) target exists; all terms must vanish
                rec.sigma = Matrix::Zero(first.dim, first.dim);
            }
            rec.residual = residual;
            report.max_residual = std::max(report.max_residual, residual);
            report.entries.push_back(std::move(rec));
        }
    }
    return report;
}

}  // namespace cqm
