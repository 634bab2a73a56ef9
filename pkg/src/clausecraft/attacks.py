"""Adversarial crafting under class-conditional feature bounds.

Two attacks are provided. PGD takes a signed-gradient step on every
continuous coordinate each iteration and may switch one one-hot group per
iteration to its most beneficial category. The saliency-projection attack
perturbs exactly one feature per iteration, chosen by a saliency map over
the model Jacobian.

Both attacks clip continuous coordinates to the source class's observed
bounds intersected with [0, 1], and only ever move a one-hot group to a
category observed for the source class, so every output stays within the
class-conditional bounds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ColumnMap, Dataset
from .errors import ValidationError
from .mlp import MlpModel, input_gradient, jacobian


@dataclass(frozen=True)
class AttackConfig:
    step: float = 0.01
    iterations: int = 10
    norm: str = "inf"  # "inf" for PGD, "0" for the saliency attack
    targeted: bool = False
    target_class: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise ValidationError("step must be positive")
        if self.iterations < 1:
            raise ValidationError("iterations must be at least 1")
        if self.targeted and self.target_class is None:
            raise ValidationError("a targeted attack needs a target class")


@dataclass(frozen=True)
class ClassBounds:
    """Per class, per feature: (min, max) for continuous features, or the
    frozenset of observed value indices for discrete ones."""

    per_class: tuple[tuple, ...]


@dataclass(frozen=True)
class AttackResult:
    x: np.ndarray
    trace: np.ndarray  # (iterations_run + 1, width); row r = after r iterations
    iterations_run: int
    saturated: bool = False


def learn_class_bounds(dataset: Dataset) -> ClassBounds:
    """Exact per-class bounds from the labeled rows: value min/max for
    continuous features, observed token sets for discrete ones."""
    schema = dataset.schema
    lookups = schema.token_indices()
    n_classes = len(schema.classes)
    if n_classes == 0:
        raise ValidationError("the schema declares no classes")
    buckets: list[list] = [[] for _ in range(n_classes)]
    for row in dataset.rows:
        if row.label is not None:
            buckets[row.label].append(row)
    per_class = []
    for cls, rows in enumerate(buckets):
        if not rows:
            raise ValidationError(f"class {schema.classes[cls]!r} has no rows to learn bounds from")
        entries = []
        for i, f in enumerate(schema.features):
            if f.is_discrete:
                entries.append(frozenset(lookups[i][r.values[i]] for r in rows))
            else:
                col = [float(r.values[i]) for r in rows]
                entries.append((min(col), max(col)))
        per_class.append(tuple(entries))
    return ClassBounds(tuple(per_class))


def _continuous_limits(bounds: ClassBounds, source_class: int, cmap: ColumnMap, width: int):
    """Per-column clip range: class bounds intersected with [0, 1] for
    continuous columns; one-hot columns keep [0, 1]."""
    lo = np.zeros(width)
    hi = np.ones(width)
    for g in cmap:
        if g.kind == "continuous":
            blo, bhi = bounds.per_class[source_class][g.feature]
            lo[g.start] = max(0.0, blo)
            hi[g.start] = min(1.0, bhi)
    return lo, hi


def _active_category(x: np.ndarray, group) -> int:
    return group.start + int(np.argmax(x[group.start : group.stop]))


def _allowed_columns(bounds: ClassBounds, source_class: int, group) -> list[int]:
    allowed = bounds.per_class[source_class][group.feature]
    return [group.start + v for v in sorted(allowed)]


def pgd(
    model: MlpModel,
    x,
    y: int,
    config: AttackConfig,
    bounds: ClassBounds,
    cmap: ColumnMap,
) -> AttackResult:
    """Iterated signed-gradient ascent on the loss (descent toward the target
    class when targeted), with per-iteration snapshots."""
    x0 = np.asarray(x, dtype=np.float64).copy()
    lo, hi = _continuous_limits(bounds, y, cmap, len(x0))
    cont_cols = [g.start for g in cmap if g.kind == "continuous"]
    onehot_groups = [g for g in cmap if g.kind == "onehot"]

    cur = x0.copy()
    trace = [cur.copy()]
    for _ in range(config.iterations):
        if config.targeted:
            g = -input_gradient(model, cur, config.target_class)
        else:
            g = input_gradient(model, cur, y)
        if cont_cols:
            step = config.step * np.sign(g[cont_cols])
            cur[cont_cols] = np.clip(cur[cont_cols] + step, lo[cont_cols], hi[cont_cols])
        # At most one one-hot group switches per iteration, to the in-bounds
        # category with the largest gradient benefit.
        best = None
        for group in onehot_groups:
            active = _active_category(cur, group)
            for col in _allowed_columns(bounds, y, group):
                if col == active:
                    continue
                benefit = g[col] - g[active]
                if benefit > 0 and (best is None or benefit > best[0]):
                    best = (benefit, group, active, col)
        if best is not None:
            _, group, active, col = best
            cur[active] = 0.0
            cur[col] = 1.0
        trace.append(cur.copy())
    return AttackResult(cur, np.stack(trace), config.iterations)


def saliency_map(target_class: int, J: np.ndarray) -> np.ndarray:
    """Zero where the target-class derivative agrees in sign with the summed
    other-class derivatives; otherwise their signed product magnitude."""
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2 or J.shape[0] < 2:
        raise ValidationError("the Jacobian needs at least two class rows")
    target = J[target_class]
    others = J[np.arange(J.shape[0]) != target_class].sum(axis=0)
    disagree = np.sign(target) != np.sign(others)
    return np.where(disagree, target * np.abs(others), 0.0)


def csp_attack(
    model: MlpModel,
    x,
    y: int,
    config: AttackConfig,
    bounds: ClassBounds,
    cmap: ColumnMap,
) -> AttackResult:
    """Single most influential feature per iteration, by saliency magnitude.

    Untargeted runs use the true label with the negated Jacobian. Continuous
    picks move by one signed step; one-hot picks flip the group's active
    category. The attack stops early once no admissible move remains, and
    flags saturation when that happens on the very first iteration.
    """
    x0 = np.asarray(x, dtype=np.float64).copy()
    lo, hi = _continuous_limits(bounds, y, cmap, len(x0))
    col_group = {}
    for g in cmap:
        for col in range(g.start, g.stop):
            col_group[col] = g

    cur = x0.copy()
    trace = [cur.copy()]
    saturated = False
    for r in range(config.iterations):
        J = jacobian(model, cur)
        if config.targeted:
            S = saliency_map(config.target_class, J)
        else:
            S = saliency_map(y, -J)

        best = None  # (|S|, column, move) with the lowest column winning ties
        for col in range(len(cur)):
            s = S[col]
            if s == 0.0:
                continue
            group = col_group[col]
            if group.kind == "continuous":
                proposed = float(np.clip(cur[col] + config.step * np.sign(s), lo[col], hi[col]))
                if proposed == cur[col]:
                    continue  # frozen at a bound in this direction
                move = ("set", col, proposed)
            else:
                allowed = _allowed_columns(bounds, y, group)
                active = _active_category(cur, group)
                if s > 0.0 and cur[col] == 0.0 and col in allowed:
                    move = ("flip", active, col)
                elif s < 0.0 and cur[col] == 1.0:
                    alternates = [c for c in allowed if c != col]
                    if not alternates:
                        continue
                    target = max(alternates, key=lambda c: (S[c], -c))
                    move = ("flip", col, target)
                else:
                    continue
            score = abs(s)
            # columns are scanned in ascending order, so on a tie the lowest
            # column index keeps the slot
            if best is None or score > best[0]:
                best = (score, col, move)
        if best is None:
            saturated = r == 0
            break
        _, _, move = best
        if move[0] == "set":
            cur[move[1]] = move[2]
        else:
            cur[move[1]] = 0.0
            cur[move[2]] = 1.0
        trace.append(cur.copy())
    return AttackResult(cur, np.stack(trace), len(trace) - 1, saturated)
