from itertools import product

import numpy as np
import pytest

from clausecraft.dataset import Feature, FeatureSchema
from clausecraft.errors import EnumerationCapError, ValidationError
from clausecraft.theory import (
    certifies,
    certify_many,
    clause_satisfaction_counts,
    estimate_clause_count,
    format_theory,
    generate_space,
    learn,
    load_theory,
    satisfaction_counts_many,
    save_theory,
    valiant_filter,
)
from conftest import random_observations, random_schema


def _clause(schema, *literals):
    """Literal tokens -> per-feature frozensets of value indices."""
    out = []
    for f, tokens in zip(schema.features, literals):
        out.append(frozenset(f.values.index(t) for t in tokens))
    return tuple(out)


def _brute_force_satisfied(clause_sets, e) -> bool:
    return any(int(e[i]) in s for i, s in enumerate(clause_sets))


class TestGenerateSpace:
    def test_boolean_pair_k1_is_the_four_clause_space(self, boolean_pair):
        space = generate_space(boolean_pair, 1)
        expected = {
            _clause(boolean_pair, ("F",), ("F",)),
            _clause(boolean_pair, ("F",), ("T",)),
            _clause(boolean_pair, ("T",), ("F",)),
            _clause(boolean_pair, ("T",), ("T",)),
        }
        assert space.clause_set_family() == frozenset(expected)

    def test_mixed_cardinality_space_size(self, proto_service):
        # pseudo-power sets: 2 for the binary feature, 6 for the 3-valued one
        space = generate_space(proto_service, 2)
        assert space.n_clauses == 2 * 6
        family = space.clause_set_family()
        assert _clause(proto_service, ("1",), ("B", "C")) in family

    def test_exact_cardinality_mode(self, four_by_four):
        assert generate_space(four_by_four, 2, cardinality="exact").n_clauses == 36
        assert generate_space(four_by_four, 3, cardinality="exact").n_clauses == 16

    def test_estimate_matches_generation(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            schema = random_schema(rng)
            sizes = schema.universe_sizes()
            k = int(rng.integers(1, max(s - 1 for s in sizes) + 1))
            space = generate_space(schema, k)
            assert space.n_clauses == estimate_clause_count(sizes, k)

    def test_cap_reports_estimate(self, four_by_four):
        with pytest.raises(EnumerationCapError) as err:
            generate_space(four_by_four, 1, max_clauses=10)
        assert err.value.estimate == 16

    def test_k_out_of_range(self, boolean_pair):
        with pytest.raises(ValidationError):
            generate_space(boolean_pair, 0)
        with pytest.raises(ValidationError):
            generate_space(boolean_pair, 2)

    def test_literals_respect_per_feature_cap(self, proto_service):
        # the binary feature can only carry singleton literals even at k=2
        for clause in generate_space(proto_service, 2).all_clause_sets():
            assert len(clause[0]) == 1
            assert 1 <= len(clause[1]) <= 2


class TestValiantFilter:
    def test_boolean_worked_example(self, boolean_pair):
        learned = learn(boolean_pair, np.array([[0, 0], [1, 1]]), 1)
        assert learned.clause_set_family() == frozenset(
            {
                _clause(boolean_pair, ("F",), ("T",)),  # not x1 or x2
                _clause(boolean_pair, ("T",), ("F",)),  # x1 or not x2
            }
        )

    def test_categorical_worked_example(self, proto_service):
        E = np.array([[0, 0], [0, 1], [1, 1], [1, 2]])  # (0,A),(0,B),(1,B),(1,C)
        learned = learn(proto_service, E, 2)
        assert learned.clause_set_family() == frozenset(
            {
                _clause(proto_service, ("0",), ("B", "C")),
                _clause(proto_service, ("1",), ("A", "B")),
            }
        )

    def test_every_training_observation_is_certified(self):
        # filter soundness over random draws
        rng = np.random.default_rng(101)
        for _ in range(50):
            schema = random_schema(rng)
            E = random_observations(rng, schema, int(rng.integers(1, 20)))
            k = int(rng.integers(1, max(schema.universe_sizes()) - 1 + 1))
            learned = learn(schema, E, k)
            assert certify_many(learned, E).all()

    def test_monotone_in_observations(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            schema = random_schema(rng)
            E = random_observations(rng, schema, 12)
            extra = random_observations(rng, schema, 6)
            small = learn(schema, E, 1)
            big = learn(schema, np.vstack([E, extra]), 1)
            assert big.clause_set_family() <= small.clause_set_family()

    def test_order_independent(self):
        rng = np.random.default_rng(77)
        schema = random_schema(rng)
        E = random_observations(rng, schema, 15)
        a = learn(schema, E, 1)
        b = learn(schema, E[::-1].copy(), 1)
        assert a.clause_set_family() == b.clause_set_family()

    def test_filter_agrees_with_brute_force(self):
        # oracle: per-clause python re-check of the set-membership semantics
        rng = np.random.default_rng(2024)
        for _ in range(20):
            schema = random_schema(rng, max_features=3, max_values=4)
            E = random_observations(rng, schema, 8)
            k = min(2, max(schema.universe_sizes()) - 1)
            space = generate_space(schema, k)
            learned = valiant_filter(space, E)
            expected = {
                clause
                for clause in space.all_clause_sets()
                if all(_brute_force_satisfied(clause, e) for e in E)
            }
            assert learned.clause_set_family() == frozenset(expected)

    def test_rejects_sentinel_observations(self, boolean_pair):
        space = generate_space(boolean_pair, 1)
        with pytest.raises(ValidationError, match="binned"):
            valiant_filter(space, np.array([[0, -1]]))


class TestCertifies:
    def test_worked_example_certifications(self, proto_service):
        learned = learn(proto_service, np.array([[0, 0], [0, 1], [1, 1], [1, 2]]), 2)
        for e in ([0, 0], [0, 1], [1, 1], [1, 2]):
            assert certifies(learned, e)
        assert not certifies(learned, [0, 2])  # (0, C)
        assert not certifies(learned, [1, 0])  # (1, A)

    def test_empty_theory_certifies_anything(self, boolean_pair):
        space = generate_space(boolean_pair, 1)
        empty = valiant_filter(space, np.array([[0, 0], [0, 1], [1, 0], [1, 1]]))
        assert empty.n_clauses == 0
        assert certifies(empty, [0, 1]) and certifies(empty, [1, 0])

    def test_sentinel_never_satisfies_a_literal(self, four_by_four):
        # single-clause theory: x1 in {D} or x2 in {4}
        learned = learn(four_by_four, np.array([[3, 0], [0, 3], [1, 3], [2, 3]]), 1)
        assert not certifies(learned, [-1, -1])
        assert certifies(learned, [3, -1])  # x1=D satisfies the clause alone
        assert certifies(learned, [-1, 3])
        assert not certifies(learned, [0, -1])

    def test_learned_theory_certifies_training_set_randomized(self):
        rng = np.random.default_rng(404)
        for _ in range(1000):
            schema = random_schema(rng, max_features=3, max_values=4)
            E = random_observations(rng, schema, int(rng.integers(1, 6)))
            learned = learn(schema, E, 1)
            assert certify_many(learned, E).all()


class TestSatisfactionCounts:
    def test_single_clause_counts(self, four_by_four):
        learned = learn(four_by_four, np.array([[3, 0], [0, 3], [1, 3], [2, 3]]), 1)
        assert learned.n_clauses == 1
        assert clause_satisfaction_counts(learned, [3, 0]).tolist() == [1, 0]  # (D,1)
        assert clause_satisfaction_counts(learned, [0, 0]).tolist() == [0, 0]  # (A,1)

    def test_counts_match_inclusion_exclusion(self):
        # oracle: brute-force per-feature hit sets; inclusion-exclusion over
        # them must reproduce the number of satisfied clauses
        rng = np.random.default_rng(99)
        for _ in range(25):
            schema = random_schema(rng, max_features=3, max_values=4)
            E = random_observations(rng, schema, 6)
            theory = learn(schema, E, 1)
            clauses = theory.all_clause_sets()
            e = random_observations(rng, schema, 1)[0]
            counts = clause_satisfaction_counts(theory, e)
            n = schema.n_features
            hits = [
                {j for j, c in enumerate(clauses) if int(e[i]) in c[i]} for i in range(n)
            ]
            for i in range(n):
                assert counts[i] == len(hits[i])
            union = set().union(*hits) if hits else set()
            ie = 0.0
            for mask in range(1, 2**n):
                subset = [hits[i] for i in range(n) if mask >> i & 1]
                inter = set.intersection(*subset)
                ie += (-1) ** (bin(mask).count("1") + 1) * len(inter)
            assert len(union) == ie
            satisfied = sum(1 for c in clauses if _brute_force_satisfied(c, e))
            assert satisfied == len(union)

    def test_batch_counts_match_single(self):
        rng = np.random.default_rng(7)
        schema = random_schema(rng)
        E = random_observations(rng, schema, 10)
        theory = learn(schema, E, 1)
        batch = random_observations(rng, schema, 17)
        stacked = satisfaction_counts_many(theory, batch)
        for i, e in enumerate(batch):
            assert stacked[i].tolist() == clause_satisfaction_counts(theory, e).tolist()


class TestPersistence:
    def test_roundtrip(self, tmp_path, proto_service):
        learned = learn(proto_service, np.array([[0, 0], [0, 1], [1, 1], [1, 2]]), 2)
        path = tmp_path / "theory.bin"
        save_theory(learned, path)
        back = load_theory(path)
        assert back.k == learned.k
        assert back.fingerprint == learned.fingerprint
        assert back.clause_set_family() == learned.clause_set_family()

    def test_text_dump(self, proto_service):
        learned = learn(proto_service, np.array([[0, 0], [0, 1], [1, 1], [1, 2]]), 2)
        text = format_theory(learned, proto_service)
        assert "(x1 ∈ {0} ∨ x2 ∈ {B,C})" in text
        assert " ∧ " in text

    def test_continuous_bins_render_as_ranges(self):
        schema = FeatureSchema(
            (
                Feature("flag", "boolean", ("0", "1")),
                Feature("rate", "continuous", (), ((0.25, 0.5), (0.75, 1.0))),
            ),
            ("a",),
        )
        learned = learn(schema, np.array([[0, 0], [1, 0]]), 1)
        assert "[0.25,0.5)" in format_theory(learned, schema)
