#pragma once

// Instruments in minimal Kraus form: construction (Lüders, preparator,
// maximally refinable), state update, refinement/compression, and
// repeatability predicates.

#include "cqm/matrix.hpp"
#include "cqm/povm.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cqm {

inline constexpr double kProbabilityFloor = 1e-12;

struct InstrumentOutcome {
    std::string label;
    std::vector<Matrix> kraus;
};

struct Instrument {
    int dim = 0;
    std::vector<InstrumentOutcome> outcomes;

    const InstrumentOutcome& outcome(const std::string& label) const {
        for (const auto& o : outcomes)
            if (o.label == label) return o;
        throw Error("UnknownLabel", label);
    }
};

struct QuantumChannel {
    std::vector<Matrix> kraus;
};

struct ConditionalOutput {
    double probability = 0;
    std::optional<Matrix> state;  // absent when probability is below floor
};

// Heisenberg action of one outcome: B -> sum_s A_s^dag B A_s.
inline Matrix heisenberg_apply(const InstrumentOutcome& outcome, const Matrix& b) {
    Matrix out = Matrix::Zero(b.rows(), b.cols());
    for (const auto& a : outcome.kraus)
        out += a.adjoint() * b * a;
    return out;
}

// Schrödinger action of one outcome: rho -> sum_s A_s rho A_s^dag.
inline Matrix schrodinger_apply(const InstrumentOutcome& outcome, const Matrix& rho) {
    Matrix out = Matrix::Zero(rho.rows(), rho.cols());
    for (const auto& a : outcome.kraus)
        out += a * rho * a.adjoint();
    return out;
}

namespace detail {

inline Vector vec(const Matrix& a) {
    Vector v(a.size());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            v(j * a.rows() + i) = a(i, j);
    return v;
}

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    Matrix a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            a(i, j) = v(j * rows + i);
    return a;
}

}  // namespace detail

// Minimal Kraus list for the CP map sum_s A_s^dag B A_s, via the
// eigendecomposition of sum_s vec(A_s) vec(A_s)^dag. The output size is
// the Kraus rank; a linearly independent input passes through with the
// same span.
inline std::vector<Matrix> minimal_kraus(const std::vector<Matrix>& ops,
                                         double rank_tol = kDefaultTol) {
    if (ops.empty()) return {};
    const Eigen::Index d = ops.front().rows();
    Matrix choi = Matrix::Zero(d * d, d * d);
    for (const auto& a : ops) {
        Vector v = detail::vec(a);
        choi += v * v.adjoint();
    }
    const auto eig = hermitian_eig(choi, 1e-8 * std::max(1.0, choi.norm()));
    const double cutoff = rank_tol * std::max(eig.eigenvalues(0), 0.0);
    std::vector<Matrix> out;
    for (Eigen::Index idx = 0; idx < eig.eigenvalues.size(); ++idx) {
        const double lambda = eig.eigenvalues(idx);
        if (lambda <= cutoff) break;
        out.push_back(detail::unvec(std::sqrt(lambda) * eig.eigenvectors.col(idx), d, d));
    }
    return out;
}

struct BuildReport {
    std::vector<std::string> reduced_labels;  // outcomes whose lists were reduced
};

inline Instrument instrument_from_kraus(int dim, std::vector<InstrumentOutcome> outcomes,
                                        double tol = kDefaultTol,
                                        BuildReport* report = nullptr) {
    Matrix total = Matrix::Zero(dim, dim);
    for (auto& o : outcomes) {
        if (o.kraus.empty())
            throw Error("EmptyOutcome", o.label);
        for (const auto& a : o.kraus) {
            if (a.rows() != dim || a.cols() != dim)
                throw Error("DimMismatch", "Kraus operator of '" + o.label + "'");
            total += a.adjoint() * a;
        }
        auto reduced = minimal_kraus(o.kraus, tol);
        if (reduced.size() < o.kraus.size()) {
            if (report) report->reduced_labels.push_back(o.label);
            o.kraus = std::move(reduced);
        }
    }
    const double residual = (total - Matrix::Identity(dim, dim)).norm();
    if (residual > tol)
        throw Error("NotTotal", std::to_string(residual));
    Instrument inst;
    inst.dim = dim;
    inst.outcomes = std::move(outcomes);
    return inst;
}

inline DiscretePOVM associated_povm(const Instrument& inst) {
    DiscretePOVM povm;
    povm.dim = inst.dim;
    for (const auto& o : inst.outcomes)
        povm.outcomes.push_back({o.label, heisenberg_apply(o, Matrix::Identity(inst.dim, inst.dim))});
    return povm;
}

// von Neumann-Lüders instrument of a PVM: one Kraus operator A_i = M_i.
inline Instrument luders_instrument(const DiscretePOVM& pvm, double tol = kDefaultTol) {
    if (!is_pvm(pvm, tol))
        throw Error("NotPVM", "effects are not orthogonal projections");
    Instrument inst;
    inst.dim = pvm.dim;
    for (const auto& o : pvm.outcomes)
        inst.outcomes.push_back({o.label, {o.effect}});
    return inst;
}

// PVM measurement followed through a channel: A_is = M_i K_s. Checked
// rather than assumed compatible with the PVM.
inline Instrument pvm_channel_instrument(const DiscretePOVM& pvm, const QuantumChannel& channel,
                                         double tol = kDefaultTol) {
    if (!is_pvm(pvm, tol))
        throw Error("NotPVM", "effects are not orthogonal projections");
    Instrument inst;
    inst.dim = pvm.dim;
    for (const auto& o : pvm.outcomes) {
        std::vector<Matrix> ops;
        for (const auto& k : channel.kraus)
            ops.push_back(o.effect * k);
        Matrix effect = Matrix::Zero(pvm.dim, pvm.dim);
        for (const auto& a : ops)
            effect += a.adjoint() * a;
        const double residual = (effect - o.effect).norm();
        if (residual > tol)
            throw Error("NotCompatible",
                        o.label + ": effect residual " + std::to_string(residual));
        inst.outcomes.push_back({o.label, minimal_kraus(ops, tol)});
    }
    return inst;
}

// State preparator for a rank-1 POVM: outcome i prepares sigma_i.
// Kraus operators are sqrt(p_s)|psi_s><d_i| over sigma_i's spectrum.
inline Instrument preparator_instrument(const DiscretePOVM& povm,
                                        const std::vector<Matrix>& states,
                                        double rank_tol = kDefaultTol) {
    if (states.size() != povm.outcomes.size())
        throw Error("DimMismatch", "one state per outcome required");
    const RefinedPOVM refined = refine(povm, rank_tol);
    Instrument inst;
    inst.dim = povm.dim;
    for (std::size_t i = 0; i < povm.outcomes.size(); ++i) {
        const auto& label = povm.outcomes[i].label;
        if (refined.multiplicity(label) != 1)
            throw Error("NotRank1", label);
        Vector d;
        for (const auto& entry : refined.entries)
            if (entry.label == label) d = entry.d;
        const Matrix sigma = validate_density(states[i]);
        const auto eig = hermitian_eig(sigma);
        std::vector<Matrix> ops;
        for (Eigen::Index idx = 0; idx < eig.eigenvalues.size(); ++idx) {
            const double p = eig.eigenvalues(idx);
            if (p <= rank_tol * std::max(eig.eigenvalues(0), 0.0)) break;
            ops.push_back(std::sqrt(p) * dyad(Vector(eig.eigenvectors.col(idx)), d));
        }
        inst.outcomes.push_back({label, std::move(ops)});
    }
    return inst;
}

// Maximally refinable instrument: A_ik = |phi_ik><d_ik|, one per refined
// entry, so r_i = m_i. The phi vectors are given in refined-entry order.
inline Instrument max_refinable_instrument(const RefinedPOVM& refined,
                                           const std::vector<Vector>& phis,
                                           double tol = kDefaultTol) {
    if (phis.size() != refined.entries.size())
        throw Error("DimMismatch", "one phi vector per refined entry required");
    std::map<std::string, std::size_t> index;
    Instrument inst;
    inst.dim = refined.dim;
    for (std::size_t e = 0; e < refined.entries.size(); ++e) {
        const auto& entry = refined.entries[e];
        if (std::abs(phis[e].norm() - 1.0) > tol)
            throw Error("NotUnit", refined_label(entry.label, entry.k));
        const Matrix a = dyad(phis[e], entry.d);
        auto it = index.find(entry.label);
        if (it == index.end()) {
            index[entry.label] = inst.outcomes.size();
            inst.outcomes.push_back({entry.label, {a}});
        } else {
            inst.outcomes[it->second].kraus.push_back(a);
        }
    }
    return inst;
}

namespace detail {

// For a maximally refinable instrument over `refined`, recovers for each
// outcome the map k -> phi_ik by matching each Kraus dyad |phi><d_ik| to
// its multiplicity index. Throws NotMaximallyRefinable otherwise.
inline std::vector<std::pair<const RefinedEntry*, Vector>>
match_dyads(const InstrumentOutcome& outcome, const RefinedPOVM& refined, double tol) {
    std::vector<const RefinedEntry*> entries;
    for (const auto& e : refined.entries)
        if (e.label == outcome.label) entries.push_back(&e);
    if (outcome.kraus.size() != entries.size())
        throw Error("NotMaximallyRefinable",
                    outcome.label + ": Kraus rank differs from multiplicity");
    std::vector<bool> used(entries.size(), false);
    std::vector<std::pair<const RefinedEntry*, Vector>> matched;
    for (const auto& a : outcome.kraus) {
        // phi_k = A g_ik; a dyad |phi><d_ik| must yield exactly one nonzero.
        int hit = -1;
        Vector phi;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            Vector cand = a * entries[k]->g;
            if (cand.norm() > tol) {
                if (hit >= 0)
                    throw Error("NotMaximallyRefinable",
                                outcome.label + ": Kraus operator mixes multiplicities");
                hit = static_cast<int>(k);
                phi = cand;
            }
        }
        if (hit < 0 || used[hit])
            throw Error("NotMaximallyRefinable", outcome.label);
        if ((a - dyad(phi, entries[hit]->d)).norm() > tol ||
            std::abs(phi.norm() - 1.0) > tol)
            throw Error("NotMaximallyRefinable", outcome.label + ": not a unit dyad");
        used[hit] = true;
        matched.emplace_back(entries[hit], std::move(phi));
    }
    return matched;
}

}  // namespace detail

// Splits a maximally refinable instrument into the rank-1 instrument on
// labels (x_i, k); its associated POVM is as_refined_povm(refined).
inline Instrument refine_instrument(const Instrument& inst, const RefinedPOVM& refined,
                                    double tol = kDefaultTol) {
    Instrument out;
    out.dim = inst.dim;
    for (const auto& outcome : inst.outcomes) {
        auto matched = detail::match_dyads(outcome, refined, tol);
        // emit in multiplicity order regardless of Kraus list order
        std::sort(matched.begin(), matched.end(),
                  [](const auto& a, const auto& b) { return a.first->k < b.first->k; });
        for (const auto& [entry, phi] : matched)
            out.outcomes.push_back({refined_label(entry->label, entry->k),
                                    {dyad(phi, entry->d)}});
    }
    return out;
}

namespace detail {

// "(base,k)" -> base
inline std::string compressed_label(const std::string& label) {
    if (label.size() < 4 || label.front() != '(' || label.back() != ')')
        throw Error("BadLabel", label + " is not of the form (base,k)");
    const auto comma = label.rfind(',');
    if (comma == std::string::npos)
        throw Error("BadLabel", label + " is not of the form (base,k)");
    return label.substr(1, comma - 1);
}

}  // namespace detail

// Merges outcomes (i,k) of a refined instrument back into outcome i,
// reducing each merged Kraus list to minimal rank.
inline Instrument compress_instrument(const Instrument& refined_inst,
                                      double rank_tol = kDefaultTol) {
    Instrument out;
    out.dim = refined_inst.dim;
    std::map<std::string, std::size_t> index;
    for (const auto& o : refined_inst.outcomes) {
        const std::string base = detail::compressed_label(o.label);
        auto it = index.find(base);
        if (it == index.end()) {
            index[base] = out.outcomes.size();
            out.outcomes.push_back({base, o.kraus});
        } else {
            auto& list = out.outcomes[it->second].kraus;
            list.insert(list.end(), o.kraus.begin(), o.kraus.end());
        }
    }
    for (auto& o : out.outcomes)
        o.kraus = minimal_kraus(o.kraus, rank_tol);
    return out;
}

inline ConditionalOutput apply(const Instrument& inst, const std::string& label,
                               const Matrix& rho) {
    if (rho.rows() != inst.dim || rho.cols() != inst.dim)
        throw Error("DimMismatch", "state dimension does not match instrument");
    const Matrix unnormalized = schrodinger_apply(inst.outcome(label), rho);
    ConditionalOutput out;
    out.probability = unnormalized.trace().real();
    if (out.probability > kProbabilityFloor)
        out.state = unnormalized / out.probability;
    else if (out.probability < 0)
        out.probability = 0;
    return out;
}

// Strong repeatability M_i(M_j(B)) = delta_ij M_i(B), verified on all
// matrix units (a spanning set, hence a complete criterion).
inline bool is_strongly_repeatable(const Instrument& inst, double tol = kDefaultTol) {
    const int d = inst.dim;
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            Matrix unit = Matrix::Zero(d, d);
            unit(a, b) = 1.0;
            for (const auto& oi : inst.outcomes) {
                for (const auto& oj : inst.outcomes) {
                    const Matrix composed = heisenberg_apply(oi, heisenberg_apply(oj, unit));
                    const Matrix expected = (&oi == &oj) ? heisenberg_apply(oi, unit)
                                                         : Matrix::Zero(d, d);
                    if ((composed - expected).norm() > tol)
                        return false;
                }
            }
        }
    }
    return true;
}

struct RepeatabilityEntry {
    std::string label;
    int k = 1;
    double expected_probability = 0;
    double probability_residual = 0;
    double state_residual = 0;
};

struct RepeatabilityReport {
    double max_residual = 0;
    std::vector<RepeatabilityEntry> entries;
};

// Very weak repeatability of the g-choice instrument: on input
// |g1_il><g1_il| outcome i occurs with probability |g_il|^-2 and returns
// the input state unchanged.
inline RepeatabilityReport check_very_weak_repeatability(const RefinedPOVM& refined,
                                                         const Instrument& inst) {
    RepeatabilityReport report;
    for (const auto& entry : refined.entries) {
        const Vector g1 = entry.g / entry.g.norm();
        const Matrix rho = projector(g1);
        const auto out = apply(inst, entry.label, rho);
        RepeatabilityEntry r;
        r.label = entry.label;
        r.k = entry.k;
        r.expected_probability = 1.0 / entry.g.squaredNorm();
        r.probability_residual = std::abs(out.probability - r.expected_probability);
        r.state_residual = out.state ? (*out.state - rho).norm()
                                     : 1.0;  // branch vanished entirely
        report.max_residual =
            std::max({report.max_residual, r.probability_residual, r.state_residual});
        report.entries.push_back(std::move(r));
    }
    return report;
}

}  // namespace cqm
