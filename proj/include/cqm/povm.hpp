#pragma once

// Discrete POVMs, maximal rank-1 refinement with biorthogonal duals,
// relabeling, and Born-rule probabilities.

#include "cqm/matrix.hpp"

#include <map>
#include <string>
#include <vector>

namespace cqm {

struct PovmOutcome {
    std::string label;
    Matrix effect;
};

struct DiscretePOVM {
    int dim = 0;
    std::vector<PovmOutcome> outcomes;
};

// One rank-1 entry (x_i, k) of a refined POVM: effect |d><d| with dual g,
// <d_ik|g_il> = delta_kl within a label.
struct RefinedEntry {
    std::string label;
    int k = 1;  // multiplicity index, 1-based
    Vector d;
    Vector g;
};

struct RefinedPOVM {
    int dim = 0;
    std::vector<RefinedEntry> entries;

    int multiplicity(const std::string& label) const {
        int m = 0;
        for (const auto& e : entries)
            if (e.label == label) ++m;
        return m;
    }
};

struct EffectRange {
    std::string label;
    double min_eigenvalue = 0;
    double max_eigenvalue = 0;
};

struct PovmReport {
    std::vector<EffectRange> effect_ranges;
    double normalization_residual = 0;
};

inline PovmReport describe_povm(const std::vector<PovmOutcome>& outcomes, double tol = kDefaultTol) {
    PovmReport report;
    if (outcomes.empty()) return report;
    Matrix sum = Matrix::Zero(outcomes.front().effect.rows(), outcomes.front().effect.cols());
    for (const auto& o : outcomes) {
        const auto eig = hermitian_eig(o.effect, tol);
        report.effect_ranges.push_back({o.label,
                                        eig.eigenvalues(eig.eigenvalues.size() - 1),
                                        eig.eigenvalues(0)});
        sum += o.effect;
    }
    report.normalization_residual = (sum - Matrix::Identity(sum.rows(), sum.cols())).norm();
    return report;
}

inline DiscretePOVM validate_povm(const std::vector<PovmOutcome>& candidates,
                                  double tol = kDefaultTol) {
    if (candidates.empty())
        throw Error("NotNormalized", "POVM needs at least one outcome");
    const Eigen::Index dim = candidates.front().effect.rows();
    std::map<std::string, int> seen;
    for (const auto& c : candidates) {
        if (c.effect.rows() != dim || c.effect.cols() != dim)
            throw Error("DimMismatch", "effect '" + c.label + "' has wrong dimensions");
        if (!is_finite(c.effect))
            throw Error("NotEffect", c.label + ": non-finite entries");
        if (++seen[c.label] > 1)
            throw Error("DuplicateLabel", c.label);
    }
    Matrix sum = Matrix::Zero(dim, dim);
    for (const auto& c : candidates) {
        if (hermiticity_residual(c.effect) > tol)
            throw Error("NotEffect", c.label + ": not Hermitian");
        const auto eig = hermitian_eig(c.effect, tol);
        const double lo = eig.eigenvalues(eig.eigenvalues.size() - 1);
        const double hi = eig.eigenvalues(0);
        if (lo < -tol || hi > 1.0 + tol)
            throw Error("NotEffect", c.label + ": eigenvalues in [" + std::to_string(lo) +
                                         ", " + std::to_string(hi) + "]");
        if (c.effect.norm() <= tol)
            throw Error("ZeroEffect", c.label);
        sum += c.effect;
    }
    const double residual = (sum - Matrix::Identity(dim, dim)).norm();
    if (residual > tol)
        throw Error("NotNormalized", std::to_string(residual));
    DiscretePOVM povm;
    povm.dim = static_cast<int>(dim);
    povm.outcomes = candidates;
    return povm;
}

// Maximal refinement: each effect M_i = sum_k |d_ik><d_ik| over its
// nonzero eigenvalues, d_ik = sqrt(lambda) u_ik, g_ik = u_ik / sqrt(lambda).
// Entries keep the input outcome order, with descending eigenvalues
// within each label.
inline RefinedPOVM refine(const DiscretePOVM& povm, double rank_tol = kDefaultTol) {
    RefinedPOVM refined;
    refined.dim = povm.dim;
    for (const auto& outcome : povm.outcomes) {
        const auto eig = hermitian_eig(outcome.effect);
        const double cutoff = rank_tol * std::max(eig.eigenvalues(0), 0.0);
        int k = 1;
        for (Eigen::Index idx = 0; idx < eig.eigenvalues.size(); ++idx) {
            const double lambda = eig.eigenvalues(idx);
            if (lambda <= cutoff) break;
            RefinedEntry entry;
            entry.label = outcome.label;
            entry.k = k++;
            entry.d = std::sqrt(lambda) * eig.eigenvectors.col(idx);
            entry.g = eig.eigenvectors.col(idx) / std::sqrt(lambda);
            refined.entries.push_back(std::move(entry));
        }
    }
    return refined;
}

// Groups refined entries by label and sums the rank-1 effects back.
inline DiscretePOVM relabel(const RefinedPOVM& refined) {
    DiscretePOVM povm;
    povm.dim = refined.dim;
    std::map<std::string, std::size_t> index;
    for (const auto& entry : refined.entries) {
        auto it = index.find(entry.label);
        if (it == index.end()) {
            index[entry.label] = povm.outcomes.size();
            povm.outcomes.push_back({entry.label, projector(entry.d)});
        } else {
            povm.outcomes[it->second].effect += projector(entry.d);
        }
    }
    return povm;
}

inline std::string refined_label(const std::string& label, int k) {
    return "(" + label + "," + std::to_string(k) + ")";
}

// The refined POVM viewed as an ordinary POVM on composite labels "(x,k)".
inline DiscretePOVM as_refined_povm(const RefinedPOVM& refined) {
    DiscretePOVM povm;
    povm.dim = refined.dim;
    for (const auto& entry : refined.entries)
        povm.outcomes.push_back({refined_label(entry.label, entry.k), projector(entry.d)});
    return povm;
}

inline bool is_pvm(const DiscretePOVM& povm, double tol = kDefaultTol) {
    for (const auto& o : povm.outcomes)
        if ((o.effect * o.effect - o.effect).norm() > tol)
            return false;
    return true;
}

inline std::vector<double> born_probabilities(const DiscretePOVM& povm, const Matrix& rho) {
    if (rho.rows() != povm.dim || rho.cols() != povm.dim)
        throw Error("DimMismatch", "state dimension does not match POVM");
    std::vector<double> p;
    p.reserve(povm.outcomes.size());
    for (const auto& o : povm.outcomes) {
        double prob = (rho * o.effect).trace().real();
        if (prob < 0) {
            if (prob < -1e-12)
                throw Error("NotPositive", "negative Born probability " + std::to_string(prob));
            prob = 0;
        }
        p.push_back(prob);
    }
    return p;
}

}  // namespace cqm
