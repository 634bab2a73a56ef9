"""Experiment runner reproducing the measurement protocol: invalid-rate and
accuracy versus attack iterations, clause-satisfaction profiles, drift
checking against held-out data, and learning-time scaling benchmarks.

Measurement rules: the invalid rate is the fraction of crafted examples the
learned theory does not certify; for constrained variants, samples that
still violate the constraints after projection are counted as correctly
classified. Confidence intervals are seeded nonparametric bootstraps.
"""

from __future__ import annotations

import csv as _csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, AttackResult, ClassBounds, csp_attack, learn_class_bounds, pgd
from .dataset import (
    Dataset,
    Feature,
    FeatureSchema,
    Observation,
    apply_normalization,
    encode,
    normalize,
    split,
    to_index_matrix,
    to_index_vector,
)
from .discretize import DiscretizerConfig, discretize_dataset
from .errors import ValidationError
from .mlp import MlpModel, TrainConfig, predict
from .mlp import train as train_mlp
from .projector import project
from .theory import (
    MAX_CLAUSES_DEFAULT,
    Theory,
    certify_many,
    generate_space,
    learn,
    satisfaction_counts_many,
    valiant_filter,
)

ATTACKS = {"pgd": pgd, "csp": csp_attack}


@dataclass(frozen=True)
class ExperimentConfig:
    attacks: tuple[str, ...] = ("pgd", "csp")
    iterations: tuple[int, ...] = (1, 2, 5, 10, 15, 20)
    step: float = 0.01
    phi: float = 20.0
    k: int = 1
    seed: int = 0
    test_fraction: float = 0.25
    n_eval: int = 128
    bootstrap: int = 1000
    threads: int = 1
    max_clauses: int = MAX_CLAUSES_DEFAULT
    discretizer: DiscretizerConfig = field(default_factory=lambda: DiscretizerConfig(threshold_quantile=0.99))
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if list(self.iterations) != sorted(self.iterations):
            raise ValidationError("the iteration grid must be sorted ascending")
        for name in self.attacks:
            if name not in ATTACKS:
                raise ValidationError(f"unknown attack {name!r}; choose from {sorted(ATTACKS)}")


@dataclass(frozen=True)
class MetricsRow:
    attack: str
    iterations: int
    invalid_rate: float
    invalid_rate_ci: float
    model_accuracy: float
    model_accuracy_ci: float
    constrained_accuracy: float
    constrained_accuracy_ci: float
    projection_success_rate: float
    projection_success_rate_ci: float


@dataclass(frozen=True)
class ChartData:
    """Per-feature mean clause-satisfaction counts with bootstrap CIs."""

    feature_names: tuple[str, ...]
    means: np.ndarray
    ci_halfwidths: np.ndarray


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple[MetricsRow, ...]
    clean_accuracy: float
    train_accuracy: float
    theory: Theory
    schema: FeatureSchema
    model: MlpModel
    bounds: ClassBounds
    charts: dict[str, ChartData]


def bootstrap_halfwidth(values: np.ndarray, n_resamples: int, rng) -> float:
    """Half-width of the 95% bootstrap interval of the mean."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return 0.0
    idx = rng.integers(0, len(values), size=(n_resamples, len(values)))
    means = values[idx].mean(axis=1)
    lo, hi = np.quantile(means, [0.025, 0.975])
    return float((hi - lo) / 2.0)


def _craft_batch(attack_fn, model, X, y, cfg, bounds, cmap, threads: int) -> list[AttackResult]:
    def one(i: int) -> AttackResult:
        return attack_fn(model, X[i], int(y[i]), cfg, bounds, cmap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(X))))
    return [one(i) for i in range(len(X))]


def _encode_observation(schema: FeatureSchema, obs: Observation, cmap) -> np.ndarray:
    X, _, _ = encode(Dataset(schema, (obs,)))
    return X[0]


def clause_satisfaction_chart(
    theory: Theory,
    observations: np.ndarray,
    feature_names: tuple[str, ...],
    *,
    n_resamples: int = 1000,
    seed: int = 0,
) -> ChartData:
    """Mean per-feature clause-satisfaction counts over a batch, with 95%
    bootstrap CIs (zero half-width for a single-sample batch)."""
    obs = np.atleast_2d(np.asarray(observations))
    if obs.shape[0] == 0:
        raise ValidationError("the batch must be non-empty")
    counts = satisfaction_counts_many(theory, obs).astype(np.float64)
    rng = np.random.default_rng(seed)
    means = counts.mean(axis=0)
    cis = np.array([bootstrap_halfwidth(counts[:, i], n_resamples, rng) for i in range(counts.shape[1])])
    return ChartData(tuple(feature_names), means, cis)


def run_experiment(dataset: Dataset, config: ExperimentConfig) -> ExperimentResult:
    """Full pipeline on one labeled dataset: split, normalize, discretize,
    learn the theory, train the model, craft each attack once at the top of
    the iteration grid, then score every grid point from the traces."""
    train_ds, test_ds = split(dataset, config.test_fraction, config.seed)
    train_norm, norm_params = normalize(train_ds)
    test_norm = apply_normalization(test_ds, norm_params)
    schema_b = discretize_dataset(train_norm, config.discretizer)
    train_b = Dataset(schema_b, train_norm.rows)
    test_b = Dataset(schema_b, test_norm.rows)

    theory = learn(schema_b, to_index_matrix(schema_b, train_b), config.k, max_clauses=config.max_clauses)
    X_train, y_train, cmap = encode(train_b)
    model, train_accuracy = train_mlp(X_train, y_train, config.train, n_classes=len(schema_b.classes))
    bounds = learn_class_bounds(train_b)

    eval_rows = test_b.rows[: config.n_eval]
    eval_ds = Dataset(schema_b, eval_rows)
    X_eval, y_eval, _ = encode(eval_ds)
    clean_accuracy = float((predict(model, X_eval).argmax(axis=1) == y_eval).mean())

    feature_names = tuple(f.name for f in schema_b.features)
    rows: list[MetricsRow] = []
    charts: dict[str, ChartData] = {}
    r_max = max(config.iterations)
    for attack_name in config.attacks:
        cfg = AttackConfig(
            step=config.step,
            iterations=r_max,
            norm="0" if attack_name == "csp" else "inf",
            seed=config.seed,
        )
        traces = _craft_batch(
            ATTACKS[attack_name], model, X_eval, y_eval, cfg, bounds, cmap, config.threads
        )
        adv_final_idx = []
        for r in config.iterations:
            invalid = np.zeros(len(eval_rows))
            correct_plain = np.zeros(len(eval_rows))
            correct_constrained = np.zeros(len(eval_rows))
            proj_success: list[float] = []
            for b, result in enumerate(traces):
                vec = result.trace[min(r, result.iterations_run)]
                values = _decode_vector(vec, schema_b, cmap)
                iv = to_index_vector(schema_b, values)
                cert = bool(certify_many(theory, iv[None, :])[0])
                pred = int(predict(model, vec).argmax())
                correct_plain[b] = float(pred == y_eval[b])
                invalid[b] = float(not cert)
                if r == config.iterations[-1]:
                    adv_final_idx.append(iv)
                if cert:
                    correct_constrained[b] = correct_plain[b]
                    continue
                outcome = project(
                    theory,
                    schema_b,
                    Observation(values, int(y_eval[b])),
                    config.phi,
                    bounds,
                    int(y_eval[b]),
                )
                if outcome.outcome == "projected":
                    proj_success.append(1.0)
                    x_rep = _encode_observation(schema_b, outcome.repaired, cmap)
                    correct_constrained[b] = float(int(predict(model, x_rep).argmax()) == y_eval[b])
                else:
                    # unprojectable within budget: counted as correctly classified
                    proj_success.append(0.0)
                    correct_constrained[b] = 1.0
            rng = np.random.default_rng([config.seed, sorted(ATTACKS).index(attack_name), r])
            rows.append(
                MetricsRow(
                    attack=attack_name,
                    iterations=r,
                    invalid_rate=float(invalid.mean()),
                    invalid_rate_ci=bootstrap_halfwidth(invalid, config.bootstrap, rng),
                    model_accuracy=float(correct_plain.mean()),
                    model_accuracy_ci=bootstrap_halfwidth(correct_plain, config.bootstrap, rng),
                    constrained_accuracy=float(correct_constrained.mean()),
                    constrained_accuracy_ci=bootstrap_halfwidth(correct_constrained, config.bootstrap, rng),
                    projection_success_rate=float(np.mean(proj_success)) if proj_success else 1.0,
                    projection_success_rate_ci=bootstrap_halfwidth(
                        np.asarray(proj_success), config.bootstrap, rng
                    ),
                )
            )
        charts[attack_name] = clause_satisfaction_chart(
            theory,
            np.stack(adv_final_idx),
            feature_names,
            n_resamples=config.bootstrap,
            seed=config.seed,
        )
    return ExperimentResult(
        tuple(rows), clean_accuracy, train_accuracy, theory, schema_b, model, bounds, charts
    )


def _decode_vector(vec: np.ndarray, schema: FeatureSchema, cmap) -> tuple:
    values = []
    for g in cmap:
        if g.kind == "onehot":
            local = int(np.argmax(vec[g.start : g.stop]))
            values.append(schema.features[g.feature].values[local])
        else:
            values.append(float(vec[g.start]))
    return tuple(values)


@dataclass(frozen=True)
class DriftReport:
    clauses: int
    observations: int
    violations: int
    violation_rate: float

    def to_json_dict(self) -> dict:
        return {
            "clauses": self.clauses,
            "observations": self.observations,
            "violations": self.violations,
            "violation_rate": self.violation_rate,
        }


def drift_check(theory: Theory, schema: FeatureSchema, dataset: Dataset) -> DriftReport:
    """Count held-out observations the theory does not certify. High rates
    flag concept drift; a theory checked against its own training data
    reports zero."""
    idx = to_index_matrix(schema, dataset)
    ok = certify_many(theory, idx)
    violations = int((~ok).sum())
    return DriftReport(theory.n_clauses, len(ok), violations, violations / max(1, len(ok)))


@dataclass(frozen=True)
class BenchCell:
    samples: int
    space: int
    n_features: int
    seconds: float
    normalized: float  # seconds / (samples * space)


def bench_learning(
    sample_counts,
    space_sizes,
    repetitions: int = 3,
    seed: int = 0,
    max_clauses: int = MAX_CLAUSES_DEFAULT,
) -> list[BenchCell]:
    """Wall-clock filtering time per (|E|, clause-space) cell on uniform random
    binary data at k=1. The clause space of b binary features holds 2^b
    clauses, so each space size must be a power of two. Generation is not
    timed; the filter pass is the term the complexity model scales."""
    cells = []
    for space in space_sizes:
        n_features = int(space).bit_length() - 1
        if 2**n_features != space:
            raise ValidationError(f"space size {space} is not a power of two")
        if n_features < 1:
            raise ValidationError("space size must be at least 2")
        schema = FeatureSchema(
            tuple(Feature(f"b{i}", "boolean", ("0", "1")) for i in range(n_features)),
            ("x",),
        )
        theory0 = generate_space(schema, 1, max_clauses=max_clauses)
        for samples in sample_counts:
            rng = np.random.default_rng([seed, space, samples])
            obs = rng.integers(0, 2, size=(samples, n_features)).astype(np.int32)
            best = np.inf
            for _ in range(repetitions):
                start = time.perf_counter()
                valiant_filter(theory0, obs)
                best = min(best, time.perf_counter() - start)
            cells.append(BenchCell(samples, space, n_features, best, best / (samples * space)))
    return cells


_METRIC_FIELDS = (
    "attack",
    "iterations",
    "invalid_rate",
    "invalid_rate_ci",
    "model_accuracy",
    "model_accuracy_ci",
    "constrained_accuracy",
    "constrained_accuracy_ci",
    "projection_success_rate",
    "projection_success_rate_ci",
)


def write_metrics_csv(rows, path) -> None:
    """Fixed six-decimal formatting keeps reruns byte-identical."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(_METRIC_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.attack,
                    row.iterations,
                    *(f"{getattr(row, f):.6f}" for f in _METRIC_FIELDS[2:]),
                ]
            )


def write_chart_csv(chart: ChartData, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["feature", "mean_clauses_satisfied", "ci_halfwidth"])
        for name, mean, ci in zip(chart.feature_names, chart.means, chart.ci_halfwidths):
            writer.writerow([name, f"{mean:.6f}", f"{ci:.6f}"])


def write_bench_csv(cells, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["samples", "space", "n_features", "seconds", "normalized"])
        for c in cells:
            writer.writerow([c.samples, c.space, c.n_features, f"{c.seconds:.6f}", f"{c.normalized:.3e}"])
