"""Exhaustive analysis of learned theories over small enumerable domains.

This is test infrastructure promoted to a public API: the guarantees it
checks (reject-set nesting across cardinalities, memorization at the top
cardinality) are the core correctness story of the learning approach, and
users should be able to run them against their own schemas.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .dataset import FeatureSchema
from .errors import EnumerationCapError, ValidationError
from .projector import PartialAssignment, dpll_solve
from .theory import Theory, certify_many, generate_space, valiant_filter

ENUMERATION_CAP_DEFAULT = 1_000_000


def enumerate_domain(schema: FeatureSchema, cap: int = ENUMERATION_CAP_DEFAULT) -> np.ndarray:
    """Every possible observation as an index matrix, lexicographic order."""
    sizes = schema.universe_sizes()
    total = prod(sizes)
    if total > cap:
        raise EnumerationCapError(
            f"domain holds {total} observations, above the cap of {cap}", total
        )
    grids = np.meshgrid(*(np.arange(s) for s in sizes), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int32)


@dataclass(frozen=True)
class RejectSet:
    rejected: frozenset

    def __len__(self) -> int:
        return len(self.rejected)


def reject_set(theory: Theory, schema: FeatureSchema, cap: int = ENUMERATION_CAP_DEFAULT) -> RejectSet:
    """Exact reject set by exhaustive certification."""
    domain = enumerate_domain(schema, cap)
    ok = certify_many(theory, domain)
    return RejectSet(frozenset(tuple(int(v) for v in row) for row in domain[~ok]))


def accepted_set(theory: Theory, schema: FeatureSchema, cap: int = ENUMERATION_CAP_DEFAULT) -> frozenset:
    domain = enumerate_domain(schema, cap)
    ok = certify_many(theory, domain)
    return frozenset(tuple(int(v) for v in row) for row in domain[ok])


@dataclass(frozen=True)
class NestingReport:
    k_values: tuple[int, ...]
    clause_counts: tuple[int, ...]
    psi_sizes: tuple[int, ...]
    holds: bool
    counterexample: tuple | None  # (k, observation) rejected at k but not k+1

    def to_json_dict(self) -> dict:
        return {
            "per_k": [
                {"k": k, "clauses": c, "rejected": p}
                for k, c, p in zip(self.k_values, self.clause_counts, self.psi_sizes)
            ],
            "nesting_holds": self.holds,
            "counterexample": None
            if self.counterexample is None
            else {"k": self.counterexample[0], "observation": list(self.counterexample[1])},
        }


def check_nesting(
    schema: FeatureSchema,
    observations: np.ndarray,
    k_max: int,
    *,
    cap: int = ENUMERATION_CAP_DEFAULT,
) -> NestingReport:
    """Learn the per-cardinality theory for each k, compute its reject set,
    and confirm the chain of reject sets only ever grows. A violation is
    reported with a concrete counterexample; it would indicate a bug, not a
    property of the data."""
    sizes = schema.universe_sizes()
    if k_max > max(sizes) - 1:
        raise ValidationError(f"k_max can be at most {max(sizes) - 1} for this schema")
    k_values = tuple(range(1, k_max + 1))
    counts, psis = [], []
    for k in k_values:
        theory = valiant_filter(generate_space(schema, k, cardinality="exact"), observations)
        counts.append(theory.n_clauses)
        psis.append(reject_set(theory, schema, cap).rejected)
    holds = True
    counterexample = None
    for k, (a, b) in zip(k_values, zip(psis, psis[1:])):
        if not a <= b:
            holds = False
            counterexample = (k, sorted(a - b)[0])
            break
    return NestingReport(k_values, tuple(counts), tuple(len(p) for p in psis), holds, counterexample)


def check_memorization(
    schema: FeatureSchema,
    observations: np.ndarray,
    *,
    cap: int = ENUMERATION_CAP_DEFAULT,
) -> bool:
    """True iff the top-cardinality theory accepts exactly the distinct
    observations it was learned from."""
    sizes = schema.universe_sizes()
    if any(s < 2 for s in sizes):
        raise ValidationError("memorization needs at least two values per feature")
    k = max(sizes) - 1
    theory = valiant_filter(generate_space(schema, k, cardinality="exact"), observations)
    accepted = accepted_set(theory, schema, cap)
    obs = np.atleast_2d(np.asarray(observations))
    distinct = frozenset(tuple(int(v) for v in row) for row in obs)
    return accepted == distinct


@dataclass(frozen=True)
class PairClassification:
    kind: str  # "exclusive" | "inclusive" | "prohibitive"
    partners: tuple[int, ...]


def classify_constraints(
    theory: Theory, schema: FeatureSchema, feature_a: int, feature_b: int
) -> dict[int, PairClassification]:
    """Label each value of ``feature_b`` by its certifiable partners on
    ``feature_a``: exactly one partner is exclusive, several are inclusive,
    none is prohibitive.

    A pair counts as co-certifiable when some observation holding both values
    is certified with every other feature left free; that existence check is
    a satisfiability query, answered by the projection solver.
    """
    if feature_a == feature_b:
        raise ValidationError("classification needs two distinct features")
    sizes = theory.sizes
    n = theory.n_features
    out = {}
    for vb in range(sizes[feature_b]):
        partners = []
        for va in range(sizes[feature_a]):
            assigned = [None] * n
            assigned[feature_a] = va
            assigned[feature_b] = vb
            origin = [0] * n
            origin[feature_a] = va
            origin[feature_b] = vb
            partial = PartialAssignment(tuple(assigned), tuple(origin))
            if dpll_solve(theory, partial) is not None:
                partners.append(va)
        if not partners:
            kind = "prohibitive"
        elif len(partners) == 1:
            kind = "exclusive"
        else:
            kind = "inclusive"
        out[vb] = PairClassification(kind, tuple(partners))
    return out
