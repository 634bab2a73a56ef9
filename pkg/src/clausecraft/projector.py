"""Project constraint-noncompliant examples onto a learned theory.

The repair works on a partial assignment: the features whose values satisfy
the fewest clauses are freed (a configurable percentage of all features) and
a DPLL search with unit propagation and a set-generalized pure-literal rule
completes them so that every clause is satisfied, or reports UNSAT within
the budget. Continuous repairs materialize as the bin edge closest to the
perturbed value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attacks import ClassBounds
from .dataset import NO_BIN, FeatureSchema, Observation, to_index_vector
from .errors import ValidationError
from .theory import Theory, certifies, clause_satisfaction_counts


@dataclass(frozen=True)
class PartialAssignment:
    """Per feature: a fixed value index, or None for a free feature."""

    assigned: tuple
    origin: tuple

    @property
    def free(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.assigned) if a is None)


@dataclass(frozen=True)
class ProjectionResult:
    outcome: str  # "already_compliant" | "projected" | "unsat_within_budget"
    repaired: Observation | None
    changed_features: tuple[int, ...]
    certified_before: bool
    certified_after: bool


def select_free_features(theory: Theory, e_star, phi: float) -> PartialAssignment:
    """Free the bottom phi percent of features, ranked ascending by how many
    clauses each feature's value satisfies; ties break toward the lower
    feature index. At least one feature is freed whenever some clause is
    unsatisfied."""
    if not 0.0 < phi <= 100.0:
        raise ValidationError("phi must be in (0, 100]")
    e_star = np.asarray(e_star)
    n = theory.n_features
    counts = clause_satisfaction_counts(theory, e_star)
    n_free = int(math.floor(phi * n / 100.0))
    if n_free == 0 and not certifies(theory, e_star):
        n_free = 1
    ranked = sorted(range(n), key=lambda i: (counts[i], i))
    freed = set(ranked[:n_free])
    assigned = tuple(None if i in freed else int(e_star[i]) for i in range(n))
    return PartialAssignment(assigned, tuple(int(v) for v in e_star))


def _default_order(size: int, origin: int) -> tuple[int, ...]:
    """Original value first, then remaining values by ascending index distance
    (lower index on ties); a NO_BIN origin anchors at index 0."""
    anchor = origin if origin >= 0 else 0
    order = sorted(range(size), key=lambda v: (abs(v - anchor), v))
    if 0 <= origin < size:
        order.remove(origin)
        order.insert(0, origin)
    return tuple(order)


def dpll_solve(theory: Theory, partial: PartialAssignment, domains=None):
    """Complete the free features so every clause is satisfied, or return None.

    ``domains`` optionally restricts and orders each free feature's candidate
    values; by default the original value is tried first. Unit propagation
    fires when a clause's only possible support is a single free feature;
    the pure rule fixes a free feature to a value that satisfies every clause
    the feature could still support.
    """
    if len(partial.assigned) != theory.n_features:
        raise ValidationError("partial assignment length does not match the theory")
    free = partial.free
    if domains is None:
        domains = {f: _default_order(theory.sizes[f], partial.origin[f]) for f in free}
    cand = {}
    for f in free:
        vals = tuple(int(v) for v in domains[f])
        if not vals:
            return None  # no admissible value at all for a free feature
        if any(not 0 <= v < theory.sizes[f] for v in vals):
            raise ValidationError(f"candidate value out of range for feature {f}")
        cand[f] = vals

    # Reduce each clause against the frozen features, then dedupe: clauses
    # satisfied by frozen values vanish, the rest keep only free literals.
    reduced = []
    seen = set()
    for clause in theory.all_clause_sets():
        frozen_sat = False
        for i, a in enumerate(partial.assigned):
            if a is not None and a in clause[i]:
                frozen_sat = True
                break
        if frozen_sat:
            continue
        support = tuple((f, clause[f]) for f in free if clause[f])
        if not support:
            return None  # contradiction at entry: no free feature can help
        if support not in seen:
            seen.add(support)
            reduced.append(dict(support))

    solution = _search(reduced, cand, {})
    if solution is None:
        return None
    for f in free:
        solution.setdefault(f, cand[f][0])
    return {f: solution[f] for f in free}


def _search(clauses, cand, assigned):
    clauses = list(clauses)
    cand = dict(cand)
    assigned = dict(assigned)
    while True:
        changed = False
        active = []
        for c in clauses:
            if any(f in assigned and assigned[f] in lit for f, lit in c.items()):
                continue
            supports = []
            for f, lit in c.items():
                if f in assigned:
                    continue
                vals = tuple(v for v in cand[f] if v in lit)
                if vals:
                    supports.append((f, vals))
            if not supports:
                return None
            if len(supports) == 1:
                f, vals = supports[0]
                if len(vals) == 1:
                    assigned[f] = vals[0]
                    changed = True
                    continue  # the clause is now satisfied
                if len(vals) < len(cand[f]):
                    cand[f] = vals
                    changed = True
            active.append(c)
        clauses = active
        if not clauses:
            return assigned
        if not changed:
            # pure rule: a value that satisfies every clause its feature touches
            for f in sorted(cand):
                if f in assigned:
                    continue
                touching = [c for c in clauses if f in c and any(v in c[f] for v in cand[f])]
                if not touching:
                    continue
                for v in cand[f]:
                    if all(v in c[f] for c in touching):
                        assigned[f] = v
                        changed = True
                        break
                if changed:
                    break
        if changed:
            continue
        branch = min(
            f
            for c in clauses
            for f in c
            if f not in assigned and any(v in c[f] for v in cand[f])
        )
        for v in cand[branch]:
            result = _search(clauses, cand, {**assigned, branch: v})
            if result is not None:
                return result
        return None


def _bounds_interval(bin_range, lo, hi):
    """Reachable value interval inside one bin under the class bounds, or None."""
    blo, bhi = bin_range
    top = math.nextafter(bhi, -math.inf)
    left = max(blo, lo)
    right = min(top, hi)
    if left > right:
        return None
    return left, right


def project(
    theory: Theory,
    schema: FeatureSchema,
    e_star: Observation,
    phi: float,
    bounds: ClassBounds,
    source_class: int,
) -> ProjectionResult:
    """Repair one adversarial example so the theory certifies it.

    Frozen features keep their values. Free features may only take values
    that also satisfy the source class's bounds. A repaired continuous
    feature lands on the edge of its new bin closest to the perturbed value
    (the top edge when projected from above, the bottom edge from below).
    Post-repair adversariality is not enforced here; the evaluation layer
    re-classifies repaired samples.
    """
    indices = to_index_vector(schema, e_star)
    if certifies(theory, indices):
        return ProjectionResult("already_compliant", e_star, (), True, True)

    partial = select_free_features(theory, indices, phi)
    class_bounds = bounds.per_class[source_class]
    domains = {}
    intervals = {}
    for f in partial.free:
        feature = schema.features[f]
        order = _default_order(theory.sizes[f], partial.origin[f])
        if feature.is_discrete:
            allowed = class_bounds[f]
            domains[f] = tuple(v for v in order if v in allowed)
        else:
            lo, hi = class_bounds[f]
            keep = []
            for b in order:
                interval = _bounds_interval(feature.bins[b], lo, hi)
                if interval is not None:
                    keep.append(b)
                    intervals[(f, b)] = interval
            domains[f] = tuple(keep)

    solution = dpll_solve(theory, partial, domains)
    if solution is None:
        return ProjectionResult("unsat_within_budget", None, (), False, False)

    values = list(e_star.values)
    changed = []
    for f, chosen in sorted(solution.items()):
        feature = schema.features[f]
        if feature.is_discrete:
            token = feature.values[chosen]
            if values[f] != token:
                values[f] = token
                changed.append(f)
        else:
            if chosen == partial.origin[f]:
                continue  # the original bin was admissible; keep the raw value
            left, right = intervals[(f, chosen)]
            values[f] = min(max(float(values[f]), left), right)
            changed.append(f)
    repaired = Observation(tuple(values), e_star.label)
    certified_after = certifies(theory, to_index_vector(schema, repaired))
    return ProjectionResult("projected", repaired, tuple(changed), False, certified_after)
