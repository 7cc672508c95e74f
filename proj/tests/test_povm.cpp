#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cqm/povm.hpp"
#include "support.hpp"

using namespace cqm;
using namespace cqm::test;

TEST_CASE("validate_povm accepts the standard fixtures") {
    CHECK_NOTHROW(z_pvm());
    CHECK_NOTHROW(trine_povm());
    CHECK_NOTHROW(unsharp_qubit_povm());
}

TEST_CASE("validate_povm rejections name the violated invariant") {
    SUBCASE("not normalized") {
        try {
            validate_povm({{"only", 0.9 * Matrix::Identity(2, 2)}});
            FAIL("expected NotNormalized");
        } catch (const Error& e) {
            CHECK(e.kind() == "NotNormalized");
        }
    }
    SUBCASE("zero effect") {
        try {
            validate_povm({{"z", Matrix::Zero(2, 2)}, {"i", Matrix::Identity(2, 2)}});
            FAIL("expected ZeroEffect");
        } catch (const Error& e) {
            CHECK(e.kind() == "ZeroEffect");
        }
    }
    SUBCASE("duplicate label") {
        try {
            validate_povm({{"m", Matrix::Identity(2, 2) / 2.0},
                           {"m", Matrix::Identity(2, 2) / 2.0}});
            FAIL("expected DuplicateLabel");
        } catch (const Error& e) {
            CHECK(e.kind() == "DuplicateLabel");
        }
    }
    SUBCASE("eigenvalues outside [0, 1]") {
        Matrix big = Matrix::Zero(2, 2), rest = Matrix::Zero(2, 2);
        big(0, 0) = 1.4;
        big(1, 1) = 0.5;
        rest(0, 0) = -0.4;
        rest(1, 1) = 0.5;
        try {
            validate_povm({{"a", big}, {"b", rest}});
            FAIL("expected NotEffect");
        } catch (const Error& e) {
            CHECK(e.kind() == "NotEffect");
        }
    }
}

TEST_CASE("describe_povm reports residual and ranges") {
    const auto report = describe_povm({{"only", 0.9 * Matrix::Identity(2, 2)}});
    CHECK(report.normalization_residual == doctest::Approx(0.1 * std::sqrt(2.0)));
    CHECK(report.effect_ranges.front().max_eigenvalue == doctest::Approx(0.9));
}

TEST_CASE("refine on the diagonal fixtures") {
    SUBCASE("degenerate qutrit PVM") {
        const auto refined = refine(qutrit_degenerate_pvm());
        CHECK(refined.multiplicity("a") == 2);
        CHECK(refined.multiplicity("b") == 1);
        // span{d_a1, d_a2} = span{e1, e2}
        Matrix span = Matrix::Zero(3, 3);
        for (const auto& e : refined.entries)
            if (e.label == "a") span += projector(e.d);
        Matrix expected = Matrix::Zero(3, 3);
        expected(0, 0) = expected(1, 1) = 1.0;
        CHECK((span - expected).norm() < 1e-12);
        CHECK((refined.entries.back().d - basis_vector(3, 2)).norm() < 1e-12);
    }
    SUBCASE("unsharp qubit eigen-data") {
        const auto refined = refine(unsharp_qubit_povm());
        REQUIRE(refined.entries.size() == 4);
        CHECK((refined.entries[0].d - std::sqrt(0.75) * basis_vector(2, 0)).norm() < 1e-12);
        CHECK((refined.entries[1].d - std::sqrt(0.25) * basis_vector(2, 1)).norm() < 1e-12);
        CHECK((refined.entries[0].g - basis_vector(2, 0) / std::sqrt(0.75)).norm() < 1e-12);
    }
    SUBCASE("trine is already rank-1") {
        const auto refined = refine(trine_povm());
        REQUIRE(refined.entries.size() == 3);
        for (int j = 0; j < 3; ++j) {
            CHECK(refined.entries[j].k == 1);
            // d up to sign equals sqrt(2/3) t_j
            const Vector expected = std::sqrt(2.0 / 3.0) * trine_vector(j);
            const double match = std::min((refined.entries[j].d - expected).norm(),
                                          (refined.entries[j].d + expected).norm());
            CHECK(match < 1e-12);
        }
    }
}

TEST_CASE("refinement invariants: normalization, biorthogonality, round trip") {
    auto rng = make_rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 2 + static_cast<int>(rng() % 3);
        const int outcomes = 2 + static_cast<int>(rng() % 3);
        const auto povm = random_povm(rng, dim, outcomes);
        const auto refined = refine(povm);

        Matrix sum = Matrix::Zero(dim, dim);
        for (const auto& e : refined.entries)
            sum += projector(e.d);
        CHECK((sum - Matrix::Identity(dim, dim)).norm() < 1e-10);

        for (const auto& a : refined.entries)
            for (const auto& b : refined.entries)
                if (a.label == b.label) {
                    const Complex inner = a.d.dot(b.g);  // <d|g>
                    CHECK(std::abs(inner - Complex(a.k == b.k ? 1.0 : 0.0)) < 1e-10);
                }

        const auto back = relabel(refined);
        REQUIRE(back.outcomes.size() == povm.outcomes.size());
        for (std::size_t i = 0; i < povm.outcomes.size(); ++i) {
            CHECK(back.outcomes[i].label == povm.outcomes[i].label);
            CHECK((back.outcomes[i].effect - povm.outcomes[i].effect).norm() < 1e-10);
        }
    }
}

TEST_CASE("as_refined_povm") {
    SUBCASE("Z PVM keeps its effects under composite labels") {
        const auto refined_povm = as_refined_povm(refine(z_pvm()));
        REQUIRE(refined_povm.outcomes.size() == 2);
        CHECK(refined_povm.outcomes[0].label == "(0,1)");
        CHECK(refined_povm.outcomes[1].label == "(1,1)");
        CHECK((refined_povm.outcomes[0].effect - projector(basis_vector(2, 0))).norm() < 1e-12);
    }
    SUBCASE("unsharp qubit yields the 4-outcome diagonal rank-1 POVM") {
        const auto refined_povm = as_refined_povm(refine(unsharp_qubit_povm()));
        REQUIRE(refined_povm.outcomes.size() == 4);
        // within each label entries come in descending eigenvalue order
        const double weights[4] = {0.75, 0.25, 0.75, 0.25};
        const int slots[4] = {0, 1, 1, 0};
        for (int i = 0; i < 4; ++i)
            CHECK((refined_povm.outcomes[i].effect -
                   weights[i] * projector(basis_vector(2, slots[i])))
                      .norm() < 1e-12);
        CHECK_NOTHROW(validate_povm(refined_povm.outcomes));
    }
    SUBCASE("output is always a valid rank-1 POVM") {
        auto rng = make_rng(22);
        const auto povm = random_povm(rng, 4, 3);
        const auto refined_povm = as_refined_povm(refine(povm));
        const auto validated = validate_povm(refined_povm.outcomes);
        for (const auto& o : validated.outcomes) {
            const auto eig = hermitian_eig(o.effect);
            CHECK(eig.eigenvalues(1) < 1e-10);  // rank 1
        }
    }
}

TEST_CASE("is_pvm") {
    CHECK(is_pvm(z_pvm()));
    CHECK(is_pvm(qutrit_degenerate_pvm()));
    CHECK_FALSE(is_pvm(trine_povm()));
    CHECK_FALSE(is_pvm(unsharp_qubit_povm()));
}

TEST_CASE("born_probabilities") {
    const Vector plus = (basis_vector(2, 0) + basis_vector(2, 1)) / std::sqrt(2.0);
    const auto p = born_probabilities(z_pvm(), projector(plus));
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));

    const auto trine = born_probabilities(trine_povm(), projector(basis_vector(2, 0)));
    CHECK(trine[0] == doctest::Approx(2.0 / 3.0));
    CHECK(trine[1] == doctest::Approx(1.0 / 6.0));
    CHECK(trine[2] == doctest::Approx(1.0 / 6.0));

    auto rng = make_rng(23);
    const auto povm = random_povm(rng, 3, 4);
    const auto uniform = born_probabilities(povm, Matrix::Identity(3, 3) / 3.0);
    for (std::size_t i = 0; i < uniform.size(); ++i)
        CHECK(uniform[i] == doctest::Approx(povm.outcomes[i].effect.trace().real() / 3.0));
}

TEST_CASE("refined Born probabilities group back to the coarse ones") {
    auto rng = make_rng(24);
    const auto povm = random_povm(rng, 3, 3);
    const auto refined = refine(povm);
    const Matrix rho = random_density(rng, 3);
    const auto coarse = born_probabilities(povm, rho);
    const auto fine = born_probabilities(as_refined_povm(refined), rho);
    std::vector<double> grouped(coarse.size(), 0.0);
    for (std::size_t e = 0; e < refined.entries.size(); ++e)
        for (std::size_t i = 0; i < povm.outcomes.size(); ++i)
            if (refined.entries[e].label == povm.outcomes[i].label) grouped[i] += fine[e];
    for (std::size_t i = 0; i < coarse.size(); ++i)
        CHECK(grouped[i] == doctest::Approx(coarse[i]).epsilon(1e-10));
}
