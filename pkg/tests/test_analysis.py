from itertools import product

import numpy as np
import pytest

from clausecraft.analysis import (
    accepted_set,
    check_memorization,
    check_nesting,
    classify_constraints,
    enumerate_domain,
    reject_set,
)
from clausecraft.errors import EnumerationCapError
from clausecraft.theory import generate_space, learn, valiant_filter
from conftest import random_observations, random_schema

# E = {(D,1),(A,4),(B,4),(C,4)} on the 4x4 analysis domain
E_4x4 = np.array([[3, 0], [0, 3], [1, 3], [2, 3]])


def _clause(schema, *literals):
    return tuple(
        frozenset(f.values.index(t) for t in tokens)
        for f, tokens in zip(schema.features, literals)
    )


class TestEnumeration:
    def test_domain_size(self, four_by_four):
        domain = enumerate_domain(four_by_four)
        assert domain.shape == (16, 2)
        assert len({tuple(r) for r in domain}) == 16

    def test_cap(self, four_by_four):
        with pytest.raises(EnumerationCapError):
            enumerate_domain(four_by_four, cap=15)


class TestWorstCaseDomain:
    def test_k1_single_clause_and_psi(self, four_by_four):
        theory = valiant_filter(generate_space(four_by_four, 1, cardinality="exact"), E_4x4)
        assert theory.clause_set_family() == frozenset({_clause(four_by_four, ("D",), ("4",))})
        psi = reject_set(theory, four_by_four)
        assert len(psi) == 9
        # the reject box is {A,B,C} x {1,2,3}
        assert psi.rejected == frozenset(product((0, 1, 2), (0, 1, 2)))

    def test_k2_learned_clauses_and_psi(self, four_by_four):
        theory = valiant_filter(generate_space(four_by_four, 2, cardinality="exact"), E_4x4)
        expected = {
            _clause(four_by_four, ab, cd)
            for ab, cd in (
                (("A", "B"), ("1", "4")),
                (("A", "C"), ("1", "4")),
                (("A", "D"), ("1", "4")),
                (("A", "D"), ("2", "4")),
                (("A", "D"), ("3", "4")),
                (("B", "C"), ("1", "4")),
                (("B", "D"), ("1", "4")),
                (("B", "D"), ("2", "4")),
                (("B", "D"), ("3", "4")),
                (("C", "D"), ("1", "4")),
                (("C", "D"), ("2", "4")),
                (("C", "D"), ("3", "4")),
            )
        }
        assert theory.clause_set_family() == frozenset(expected)
        assert len(reject_set(theory, four_by_four)) == 11

    def test_k3_memorizes(self, four_by_four):
        space = generate_space(four_by_four, 3, cardinality="exact")
        theory = valiant_filter(space, E_4x4)
        assert space.n_clauses == 16 and theory.n_clauses == 12
        # the four dropped clauses are exactly the reject boxes of E
        dropped = space.clause_set_family() - theory.clause_set_family()
        assert len(dropped) == 4
        psi = reject_set(theory, four_by_four)
        assert len(psi) == 12
        assert accepted_set(theory, four_by_four) == {tuple(e) for e in E_4x4.tolist()}

    def test_nesting_report(self, four_by_four):
        report = check_nesting(four_by_four, E_4x4, 3)
        assert report.psi_sizes == (9, 11, 12)
        assert report.holds and report.counterexample is None

    def test_memorization(self, four_by_four):
        assert check_memorization(four_by_four, E_4x4)


class TestRandomizedTheorems:
    def test_nesting_holds_on_random_trials(self):
        rng = np.random.default_rng(1234)
        for _ in range(100):
            schema = random_schema(rng, max_features=4, max_values=5)
            E = random_observations(rng, schema, int(rng.integers(1, 12)))
            k_max = max(schema.universe_sizes()) - 1
            report = check_nesting(schema, E, k_max)
            assert report.holds, report.counterexample

    def test_full_domain_observations_reject_nothing(self, four_by_four):
        domain = enumerate_domain(four_by_four)
        report = check_nesting(four_by_four, domain, 3)
        assert report.psi_sizes == (0, 0, 0)

    def test_memorization_on_random_trials(self):
        rng = np.random.default_rng(4321)
        for _ in range(100):
            schema = random_schema(rng, max_features=4, max_values=5, min_values=3)
            E = random_observations(rng, schema, int(rng.integers(1, 12)))
            assert check_memorization(schema, E)

    def test_k1_is_maximally_general(self):
        # accepted(T_1) is the largest accepted set across cardinalities
        rng = np.random.default_rng(555)
        for _ in range(30):
            schema = random_schema(rng, max_features=3, max_values=4)
            E = random_observations(rng, schema, int(rng.integers(1, 8)))
            sizes = []
            for k in range(1, max(schema.universe_sizes())):
                theory = valiant_filter(
                    generate_space(schema, k, cardinality="exact"), E
                )
                sizes.append(len(accepted_set(theory, schema)))
            assert sizes[0] == max(sizes)


class TestClassification:
    def test_service_protocol_worked_example(self, proto_service):
        learned = learn(proto_service, np.array([[0, 0], [0, 1], [1, 1], [1, 2]]), 2)
        result = classify_constraints(learned, proto_service, 0, 1)
        assert result[0].kind == "exclusive" and result[0].partners == (0,)  # A with 0
        assert result[1].kind == "inclusive" and result[1].partners == (0, 1)  # B with both
        assert result[2].kind == "exclusive" and result[2].partners == (1,)  # C with 1

    def test_prohibitive_value(self, proto_service):
        # C never appears: every clause requires x2 in {A,B} or pins x1 jointly
        learned = learn(proto_service, np.array([[0, 0], [1, 1]]), 2)
        result = classify_constraints(learned, proto_service, 0, 1)
        assert result[2].kind == "prohibitive" and result[2].partners == ()

    def test_classification_matches_enumeration(self, four_by_four):
        # oracle: exhaustive co-certifiability over the full domain
        theory = valiant_filter(generate_space(four_by_four, 2, cardinality="exact"), E_4x4)
        accepted = accepted_set(theory, four_by_four)
        result = classify_constraints(theory, four_by_four, 0, 1)
        for vb in range(4):
            partners = tuple(sorted({a for (a, b) in accepted if b == vb}))
            assert result[vb].partners == partners
