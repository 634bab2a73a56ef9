"""Self-contained synthetic constrained domain.

Generates a planted ground-truth theory (one admissible value per feature
per clause), rejection-samples latent observations that comply with it,
materializes continuous features as tight value clusters around evenly
spaced centers, and plants class structure with a random linear teacher.
This makes the full pipeline runnable with zero external data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Feature, FeatureSchema, Observation
from .errors import ValidationError


@dataclass(frozen=True)
class SynthSpec:
    n_continuous: int = 4
    n_categorical: int = 2
    latent_values: int = 4
    n_classes: int = 3
    n_rows: int = 1200
    n_planted_clauses: int = 6
    jitter_step: float = 0.005
    jitter_span: int = 3  # jitter = step * integer in [-span, span]
    min_class_share: float = 0.05

    def __post_init__(self):
        if self.n_continuous + self.n_categorical < 2:
            raise ValidationError("need at least two features")
        if self.latent_values < 2 or self.n_classes < 2 or self.n_rows < 10:
            raise ValidationError("degenerate synthetic spec")


def _make_schema(spec: SynthSpec) -> FeatureSchema:
    feats = []
    for i in range(spec.n_continuous):
        feats.append(Feature(f"c{i}", "continuous"))
    letters = [chr(ord("A") + v) for v in range(spec.latent_values)]
    for i in range(spec.n_categorical):
        feats.append(Feature(f"k{i}", "categorical", tuple(letters)))
    classes = tuple(f"class{c}" for c in range(spec.n_classes))
    return FeatureSchema(tuple(feats), classes)


def _centers(spec: SynthSpec) -> np.ndarray:
    u = spec.latent_values
    return (np.arange(u) + 0.5) / u


def _sample_planted(rng, n_features: int, u: int, n_clauses: int) -> list[tuple[int, ...]]:
    seen = set()
    clauses = []
    while len(clauses) < n_clauses:
        clause = tuple(int(v) for v in rng.integers(0, u, size=n_features))
        if clause not in seen:
            seen.add(clause)
            clauses.append(clause)
    return clauses


def _latent_certified(cells: np.ndarray, clauses) -> np.ndarray:
    ok = np.ones(len(cells), dtype=bool)
    for clause in clauses:
        ok &= (cells == np.asarray(clause)[None, :]).any(axis=1)
    return ok


def synthesize(spec: SynthSpec, seed: int) -> tuple[Dataset, list[tuple[int, ...]]]:
    """Returns the dataset plus the planted clause list (one admissible latent
    value per feature each), mainly so tests can verify recovery."""
    rng = np.random.default_rng(seed)
    schema = _make_schema(spec)
    n = schema.n_features
    u = spec.latent_values
    centers = _centers(spec)

    clauses = None
    for _ in range(50):
        candidate = _sample_planted(rng, n, u, spec.n_planted_clauses)
        probe = rng.integers(0, u, size=(512, n))
        rate = _latent_certified(probe, candidate).mean()
        if rate >= 0.10:
            clauses = candidate
            break
    if clauses is None:
        raise ValidationError("could not plant a theory with workable acceptance; adjust the spec")

    cells = np.empty((spec.n_rows, n), dtype=np.int64)
    filled = 0
    while filled < spec.n_rows:
        batch = rng.integers(0, u, size=(4 * spec.n_rows, n))
        good = batch[_latent_certified(batch, clauses)]
        take = min(len(good), spec.n_rows - filled)
        cells[filled : filled + take] = good[:take]
        filled += take

    onehot = np.zeros((spec.n_rows, n * u))
    for i in range(n):
        onehot[np.arange(spec.n_rows), i * u + cells[:, i]] = 1.0

    labels = None
    for _ in range(50):
        teacher = rng.normal(size=(n * u, spec.n_classes))
        cand = (onehot @ teacher).argmax(axis=1)
        shares = np.bincount(cand, minlength=spec.n_classes) / spec.n_rows
        if shares.min() >= spec.min_class_share:
            labels = cand
            break
    if labels is None:
        raise ValidationError("could not plant balanced class structure; adjust the spec")

    jitter = rng.integers(-spec.jitter_span, spec.jitter_span + 1, size=(spec.n_rows, spec.n_continuous))
    rows = []
    for r in range(spec.n_rows):
        values: list = []
        for i in range(spec.n_continuous):
            values.append(float(centers[cells[r, i]] + spec.jitter_step * jitter[r, i]))
        for i in range(spec.n_categorical):
            values.append(schema.features[spec.n_continuous + i].values[cells[r, spec.n_continuous + i]])
        rows.append(Observation(tuple(values), int(labels[r])))
    return Dataset(schema, tuple(rows)), clauses
