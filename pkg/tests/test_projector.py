import math
from itertools import product

import numpy as np
import pytest

from clausecraft.attacks import ClassBounds, learn_class_bounds
from clausecraft.dataset import Dataset, Feature, FeatureSchema, Observation, to_index_vector
from clausecraft.projector import (
    PartialAssignment,
    select_free_features,
    dpll_solve,
    project,
)
from clausecraft.theory import Theory, certifies, generate_space, learn, valiant_filter
from conftest import random_observations, random_schema

E_4x4 = np.array([[3, 0], [0, 3], [1, 3], [2, 3]])


def _theory_d_or_4(four_by_four):
    return learn(four_by_four, E_4x4, 1)


def _random_set_cnf(rng, sizes, n_clauses) -> Theory:
    """Arbitrary set-literal CNF: per clause and feature, a random nonempty
    proper subset of the value universe. Hostile literals (the observation's
    own value excluded) appear often enough to exercise UNSAT paths."""
    words = [(s + 63) // 64 for s in sizes]
    width = sum(words)
    masks = np.zeros((n_clauses, width), dtype=np.uint64)
    offset = np.cumsum([0] + words[:-1])
    for j in range(n_clauses):
        for i, s in enumerate(sizes):
            take = int(rng.integers(1, s))
            members = rng.choice(s, size=take, replace=False)
            for v in members:
                masks[j, offset[i] + (v >> 6)] |= np.uint64(1) << np.uint64(v & 63)
    return Theory(tuple(sizes), max(s - 1 for s in sizes), "test", masks)


def _exhaustive_sat(theory, partial, domains=None):
    """Brute-force oracle: try every completion of the free features."""
    free = partial.free
    if domains is None:
        domains = {f: tuple(range(theory.sizes[f])) for f in free}
    clauses = theory.all_clause_sets()
    for combo in product(*(domains[f] for f in free)):
        values = list(partial.assigned)
        for f, v in zip(free, combo):
            values[f] = v
        if all(any(values[i] in lit for i, lit in enumerate(c)) for c in clauses):
            return dict(zip(free, combo))
    return None


class TestSelectFreeFeatures:
    def test_phi_20_of_10_features_frees_two(self):
        schema = FeatureSchema(
            tuple(Feature(f"f{i}", "categorical", ("a", "b", "c")) for i in range(10)),
            ("x",),
        )
        rng = np.random.default_rng(0)
        E = random_observations(rng, schema, 20)
        theory = learn(schema, E, 1)
        e_star = np.array([2] * 10)
        partial = select_free_features(theory, e_star, 20.0)
        assert len(partial.free) == 2

    def test_lowest_counts_freed_with_index_tiebreak(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        # (A,1): counts (0,0); tie broken toward feature 0
        partial = select_free_features(theory, [0, 0], 50.0)
        assert partial.free == (0,)
        assert partial.assigned == (None, 0)

    def test_at_least_one_freed_when_unsatisfied(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        partial = select_free_features(theory, [0, 0], 10.0)  # floor(0.2) == 0
        assert len(partial.free) == 1

    def test_ranking_by_counts(self):
        schema = FeatureSchema(
            tuple(Feature(f"f{i}", "categorical", ("a", "b")) for i in range(10)),
            ("x",),
        )
        space = generate_space(schema, 1)
        theory = valiant_filter(space, np.zeros((1, 10), dtype=np.int32))
        # e* agreeing with the training row only on features 2..9 leaves
        # features 0 and 1 satisfying the fewest clauses
        e_star = np.array([1, 1] + [0] * 8)
        partial = select_free_features(theory, e_star, 20.0)
        assert partial.free == (0, 1)


class TestDpllSolve:
    def test_unit_repair_on_the_analysis_domain(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        # e* = (A,1), feature 1 free: the single clause forces x2 = 4
        partial = PartialAssignment((0, None), (0, 0))
        assert dpll_solve(theory, partial) == {1: 3}

    def test_no_free_features_is_unsat_at_entry(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        partial = PartialAssignment((0, 0), (0, 0))
        assert dpll_solve(theory, partial) is None

    def test_certified_input_keeps_origin_values(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        partial = PartialAssignment((None, None), (3, 0))  # (D,1) certified
        assert dpll_solve(theory, partial) == {0: 3, 1: 0}

    def test_restricted_domains_respected(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        partial = PartialAssignment((0, None), (0, 0))
        assert dpll_solve(theory, partial, {1: (0, 1, 2)}) is None
        assert dpll_solve(theory, partial, {1: (0, 3)}) == {1: 3}

    def test_matches_exhaustive_oracle_on_random_instances(self):
        # 200 seeded random set-CNF instances, up to 12 features of up to 4
        # values; SAT/UNSAT verdicts must match exhaustive enumeration and
        # returned assignments must certify
        rng = np.random.default_rng(20_24)
        sat = unsat = 0
        for _ in range(200):
            n = int(rng.integers(2, 13))
            sizes = tuple(int(rng.integers(2, 5)) for _ in range(n))
            theory = _random_set_cnf(rng, sizes, n_clauses=int(rng.integers(3, 26)))
            e_star = np.array([rng.integers(0, s) for s in sizes])
            # free a subset small enough for the oracle to enumerate
            n_free = int(rng.integers(1, min(n, 7) + 1))
            free = sorted(rng.choice(n, size=n_free, replace=False).tolist())
            assigned = tuple(None if i in free else int(e_star[i]) for i in range(n))
            partial = PartialAssignment(assigned, tuple(int(v) for v in e_star))
            got = dpll_solve(theory, partial)
            expected = _exhaustive_sat(theory, partial)
            assert (got is None) == (expected is None)
            if got is None:
                unsat += 1
            else:
                sat += 1
                values = list(partial.assigned)
                for f, v in got.items():
                    values[f] = v
                assert certifies(theory, np.array(values))
        assert sat > 20 and unsat > 20  # both verdicts exercised

    def test_deterministic_under_value_ordering(self, four_by_four):
        theory = valiant_filter(generate_space(four_by_four, 2, cardinality="exact"), E_4x4)
        partial = PartialAssignment((None, None), (2, 1))
        a = dpll_solve(theory, partial)
        b = dpll_solve(theory, partial)
        assert a == b


def _cont_schema():
    return FeatureSchema(
        (
            Feature("flag", "categorical", ("x", "y", "z")),
            Feature("rate", "continuous", (), ((0.25, 0.5), (0.75, 1.0))),
        ),
        ("only",),
    )


def _cont_setup():
    """Theory over (flag, rate-bin); training pairs x<->bin0, y<->bin1."""
    schema = _cont_schema()
    rows = (
        Observation(("x", 0.3), 0),
        Observation(("x", 0.45), 0),
        Observation(("y", 0.8), 0),
        Observation(("y", 0.95), 0),
    )
    dataset = Dataset(schema, rows)
    theory = learn(schema, np.stack([to_index_vector(schema, r) for r in rows]), 1)
    bounds = learn_class_bounds(dataset)
    return schema, theory, bounds


class TestProject:
    def test_already_compliant_short_circuits(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        bounds = ClassBounds(((frozenset(range(4)), frozenset(range(4))),))
        obs = Observation(("D", "1"), 0)
        result = project(theory, four_by_four, obs, 20.0, bounds, 0)
        assert result.outcome == "already_compliant"
        assert result.repaired == obs
        assert result.changed_features == ()

    def test_upward_perturbation_repairs_to_top_edge(self):
        schema, theory, bounds = _cont_setup()
        # 0.6 was pushed up and out of bin [0.25, 0.50); repairing back into
        # that bin must land just below 0.50
        e_star = Observation(("x", 0.6), 0)
        result = project(theory, schema, e_star, 50.0, bounds, 0)
        assert result.outcome == "projected"
        repaired = result.repaired.values[1]
        assert repaired == math.nextafter(0.5, -math.inf)
        assert result.certified_after

    def test_downward_perturbation_repairs_to_bottom_edge(self):
        schema, theory, bounds = _cont_setup()
        e_star = Observation(("y", 0.6), 0)
        result = project(theory, schema, e_star, 50.0, bounds, 0)
        assert result.outcome == "projected"
        assert result.repaired.values[1] == 0.75
        assert result.certified_after

    def test_frozen_features_never_change(self, four_by_four):
        theory = _theory_d_or_4(four_by_four)
        bounds = ClassBounds(((frozenset(range(4)), frozenset(range(4))),))
        result = project(theory, four_by_four, Observation(("A", "1"), 0), 50.0, bounds, 0)
        assert result.outcome == "projected"
        # feature 0 had the tied-lowest count and was freed; feature 1 frozen
        assert result.repaired.values[1] == "1"
        assert result.repaired.values[0] == "D"
        assert result.changed_features == (0,)

    def test_unsat_within_budget(self):
        schema, theory, bounds = _cont_setup()
        # both features wrong and only one may move: freeing one feature
        # cannot satisfy the pairing clauses
        e_star = Observation(("z", 0.6), 0)
        result = project(theory, schema, e_star, 50.0, bounds, 0)
        assert result.outcome == "unsat_within_budget"
        assert result.repaired is None

    def test_bounds_restrict_candidate_values(self):
        schema = _cont_schema()
        rows = (
            Observation(("x", 0.3), 0),
            Observation(("y", 0.8), 0),
        )
        theory = learn(schema, np.stack([to_index_vector(schema, r) for r in rows]), 1)
        # class bounds that keep rate below 0.5: bin 1 is unreachable
        bounds = ClassBounds(((frozenset({0, 1, 2}), (0.0, 0.5)),))
        e_star = Observation(("z", 0.6), 0)
        result = project(theory, schema, e_star, 100.0, bounds, 0)
        if result.outcome == "projected":
            assert result.repaired.values[1] < 0.5

    def test_projection_soundness_randomized(self):
        # projected outcome implies certification and bounds compliance
        rng = np.random.default_rng(555)
        schema = FeatureSchema(
            tuple(Feature(f"f{i}", "categorical", ("a", "b", "c", "d")) for i in range(6)),
            ("cls",),
        )
        for trial in range(50):
            E = random_observations(rng, schema, 12)
            theory = learn(schema, E, 1)
            allowed = tuple(
                frozenset(rng.choice(4, size=3, replace=False).tolist()) for _ in range(6)
            )
            bounds = ClassBounds((allowed,))
            e = random_observations(rng, schema, 1)[0]
            obs = Observation(tuple(schema.features[i].values[v] for i, v in enumerate(e)), 0)
            result = project(theory, schema, obs, 35.0, bounds, 0)
            if result.outcome == "projected":
                iv = to_index_vector(schema, result.repaired)
                assert certifies(theory, iv)
                for f in result.changed_features:
                    assert iv[f] in allowed[f]
                frozen = set(range(6)) - set(result.changed_features)
                for f in frozen:
                    assert result.repaired.values[f] == obs.values[f]
