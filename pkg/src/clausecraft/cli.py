"""Command-line interface.

Subcommands mirror the pipeline: synth, discretize, learn, train, attack,
project, evaluate, drift, bench, analyze. Metrics land in CSV files, reports
in JSON, and the report paths additionally render matplotlib figures next to
the delimited output. Exit code 0 on success, 2 on validation errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, evaluation, plots, synth
from . import dataset as ds
from . import theory as th
from .attacks import AttackConfig, csp_attack, learn_class_bounds, pgd
from .discretize import DiscretizerConfig, discretize_dataset
from .errors import ValidationError
from .evaluation import ExperimentConfig
from .mlp import TrainConfig, load_model, predict, save_model, train
from .projector import project


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global random seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for batch steps")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    parser = argparse.ArgumentParser(prog="clausecraft", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic constrained dataset")
    p.add_argument("--rows", type=int, default=1200)
    p.add_argument("--continuous", type=int, default=4)
    p.add_argument("--categorical", type=int, default=2)
    p.add_argument("--values", type=int, default=4, help="latent values per feature")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--clauses", type=int, default=6, help="planted ground-truth clauses")

    p = sub.add_parser("discretize", parents=[common], help="fit bins for continuous features")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--min-pts", type=int, default=5)
    p.add_argument("--quantile", type=float, default=0.95)
    p.add_argument("--subsample", type=float, default=1.0)
    p.add_argument("--extend-edges", action="store_true")

    p = sub.add_parser("learn", parents=[common], help="learn a constraint theory from a CSV")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True, help="schema with bins for continuous features")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--cardinality", choices=("upto", "exact"), default="upto")
    p.add_argument("--max-clauses", type=int, default=th.MAX_CLAUSES_DEFAULT)
    p.add_argument("--text", action="store_true", help="also write a readable clause dump")

    p = sub.add_parser("train", parents=[common], help="train the classifier")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--hidden", type=_int_list, default=(32,))
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=16)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--activation", choices=("relu", "sigmoid", "tanh"), default="relu")
    p.add_argument("--no-normalize", action="store_true", help="train on raw feature values")

    p = sub.add_parser("attack", parents=[common], help="craft adversarial examples")
    p.add_argument("--data", type=Path, required=True, help="labeled CSV to perturb")
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--normalization", type=Path, help="JSON written by the train command")
    p.add_argument("--attack", choices=("pgd", "csp"), default="pgd")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--target-class", type=int, help="run targeted instead of untargeted")
    p.add_argument("--bounds-data", type=Path, help="CSV to learn class bounds from (default: --data)")
    p.add_argument("--limit", type=int, help="cap the number of rows attacked")

    p = sub.add_parser("project", parents=[common], help="project observations onto a theory")
    p.add_argument("--data", type=Path, required=True, help="CSV of (adversarial) observations")
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--theory", type=Path, required=True)
    p.add_argument("--phi", type=float, default=20.0)
    p.add_argument("--bounds-data", type=Path, required=True, help="labeled CSV to learn class bounds from")

    p = sub.add_parser("evaluate", parents=[common], help="run the full robustness experiment")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--attacks", default="pgd,csp")
    p.add_argument("--iterations", type=_int_list, default=(1, 2, 5, 10, 15, 20))
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--phi", type=float, default=20.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--n-eval", type=int, default=128)
    p.add_argument("--quantile", type=float, default=0.99)
    p.add_argument("--min-pts", type=int, default=5)
    p.add_argument("--hidden", type=_int_list, default=(32,))
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=16)
    p.add_argument("--batch", type=int, default=128)

    p = sub.add_parser("drift", parents=[common], help="violation rate of held-out data")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--theory", type=Path, required=True)

    p = sub.add_parser("bench", parents=[common], help="learning-time scaling benchmark")
    p.add_argument("--samples", type=_int_list, default=(2048, 4096, 8192))
    p.add_argument("--spaces", type=_int_list, default=(1024, 2048, 4096))
    p.add_argument("--reps", type=int, default=3)

    p = sub.add_parser("analyze", parents=[common], help="exhaustive guarantees on a small domain")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--classify", help="two feature names, comma separated")
    p.add_argument("--cap", type=int, default=analysis.ENUMERATION_CAP_DEFAULT)
    return parser


def _load(data: Path, schema: Path) -> ds.Dataset:
    return ds.load_csv(data, ds.load_schema(schema))


def _write_json(doc: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        n_continuous=args.continuous,
        n_categorical=args.categorical,
        latent_values=args.values,
        n_classes=args.classes,
        n_rows=args.rows,
        n_planted_clauses=args.clauses,
    )
    dataset, _ = synth.synthesize(spec, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    ds.save_csv(dataset, args.out / "data.csv")
    ds.save_schema(dataset.schema, args.out / "schema.json")
    print(f"wrote {len(dataset)} rows to {args.out / 'data.csv'}")
    return 0


def _cmd_discretize(args) -> int:
    dataset = _load(args.data, args.schema)
    config = DiscretizerConfig(
        min_pts=args.min_pts,
        threshold_quantile=args.quantile,
        subsample=args.subsample,
        seed=args.seed,
        extend_edges=args.extend_edges,
    )
    schema = discretize_dataset(dataset, config)
    args.out.mkdir(parents=True, exist_ok=True)
    ds.save_schema(schema, args.out / "schema_binned.json")
    for f in schema.features:
        if not f.is_discrete:
            print(f"{f.name}: {len(f.bins)} bins")
    return 0


def _cmd_learn(args) -> int:
    dataset = _load(args.data, args.schema)
    idx = ds.to_index_matrix(dataset.schema, dataset)
    theory = th.learn(
        dataset.schema, idx, args.k, cardinality=args.cardinality, max_clauses=args.max_clauses
    )
    args.out.mkdir(parents=True, exist_ok=True)
    th.save_theory(theory, args.out / "theory.bin")
    if args.text:
        with open(args.out / "theory.txt", "w", encoding="utf-8") as fh:
            fh.write(th.format_theory(theory, dataset.schema) + "\n")
    print(f"learned {theory.n_clauses} clauses (k={args.k})")
    return 0


def _cmd_train(args) -> int:
    dataset = _load(args.data, args.schema)
    if args.no_normalize:
        fitted = dataset
        params = ds.NormalizationParams(tuple(None for _ in dataset.schema.features))
    else:
        fitted, params = ds.normalize(dataset)
    X, y, _ = ds.encode(fitted)
    if (y < 0).any():
        raise ValidationError("training data must be fully labeled")
    config = TrainConfig(
        hidden=args.hidden,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        activation=args.activation,
    )
    model, accuracy = train(X, y, config, n_classes=len(dataset.classes))
    args.out.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out / "model.bin")
    ds.save_normalization(params, args.out / "normalization.json")
    print(f"train accuracy {accuracy:.4f}; saved {args.out / 'model.bin'}")
    return 0


def _cmd_attack(args) -> int:
    dataset = _load(args.data, args.schema)
    if args.normalization:
        params = ds.load_normalization(args.normalization)
        dataset = ds.apply_normalization(dataset, params)
    model = load_model(args.model)
    bounds_ds = dataset if args.bounds_data is None else _load(args.bounds_data, args.schema)
    if args.bounds_data is not None and args.normalization:
        bounds_ds = ds.apply_normalization(bounds_ds, ds.load_normalization(args.normalization))
    bounds = learn_class_bounds(bounds_ds)
    X, y, cmap = ds.encode(dataset)
    if (y < 0).any():
        raise ValidationError("attacked rows need labels (the source class)")
    rows = range(len(X)) if args.limit is None else range(min(args.limit, len(X)))
    config = AttackConfig(
        step=args.step,
        iterations=args.iterations,
        norm="0" if args.attack == "csp" else "inf",
        targeted=args.target_class is not None,
        target_class=args.target_class,
        seed=args.seed,
    )
    attack_fn = csp_attack if args.attack == "csp" else pgd
    args.out.mkdir(parents=True, exist_ok=True)
    adv_rows = []
    with open(args.out / "traces.jsonl", "w", encoding="utf-8") as fh:
        for i in rows:
            result = attack_fn(model, X[i], int(y[i]), config, bounds, cmap)
            for r in range(result.iterations_run + 1):
                vec = result.trace[r]
                record = {
                    "sample": i,
                    "iteration": r,
                    "values": [round(float(v), 10) for v in vec],
                    "prediction": int(predict(model, vec).argmax()),
                }
                fh.write(json.dumps(record) + "\n")
            adv_rows.append(
                ds.Observation(tuple(ds.decode(result.x, dataset.schema, cmap)[0]), int(y[i]))
            )
    ds.save_csv(ds.Dataset(dataset.schema, tuple(adv_rows)), args.out / "adversarial.csv")
    print(f"crafted {len(adv_rows)} examples; traces in {args.out / 'traces.jsonl'}")
    return 0


def _cmd_project(args) -> int:
    dataset = _load(args.data, args.schema)
    theory = th.load_theory(args.theory)
    bounds = learn_class_bounds(_load(args.bounds_data, args.schema))
    args.out.mkdir(parents=True, exist_ok=True)
    outcomes = {"already_compliant": 0, "projected": 0, "unsat_within_budget": 0}
    with open(args.out / "projections.jsonl", "w", encoding="utf-8") as fh:
        for i, row in enumerate(dataset.rows):
            if row.label is None:
                raise ValidationError(f"row {i}: projection needs the source class label")
            result = project(theory, dataset.schema, row, args.phi, bounds, row.label)
            outcomes[result.outcome] += 1
            record = {
                "sample": i,
                "outcome": result.outcome,
                "changed_features": [dataset.schema.features[f].name for f in result.changed_features],
                "certified_before": result.certified_before,
                "certified_after": result.certified_after,
            }
            fh.write(json.dumps(record) + "\n")
    print(json.dumps(outcomes))
    return 0


def _cmd_evaluate(args) -> int:
    dataset = _load(args.data, args.schema)
    config = ExperimentConfig(
        attacks=tuple(args.attacks.split(",")),
        iterations=args.iterations,
        step=args.step,
        phi=args.phi,
        k=args.k,
        seed=args.seed,
        test_fraction=args.test_fraction,
        n_eval=args.n_eval,
        threads=args.threads,
        discretizer=DiscretizerConfig(
            min_pts=args.min_pts, threshold_quantile=args.quantile, seed=args.seed
        ),
        train=TrainConfig(
            hidden=args.hidden,
            learning_rate=args.lr,
            epochs=args.epochs,
            batch_size=args.batch,
            seed=args.seed,
        ),
    )
    result = evaluation.run_experiment(dataset, config)
    args.out.mkdir(parents=True, exist_ok=True)
    evaluation.write_metrics_csv(result.rows, args.out / "metrics.csv")
    for attack, chart in result.charts.items():
        evaluation.write_chart_csv(chart, args.out / f"clause_satisfaction_{attack}.csv")
    plots.plot_invalid_rate(result.rows, args.out / "invalid_rate.png")
    plots.plot_accuracy(result.rows, args.out / "accuracy.png", result.clean_accuracy)
    plots.plot_clause_satisfaction(result.charts, args.out / "clause_satisfaction.png")
    _write_json(
        {
            "clean_accuracy": result.clean_accuracy,
            "train_accuracy": result.train_accuracy,
            "clauses": result.theory.n_clauses,
            "k": config.k,
            "seed": config.seed,
        },
        args.out / "summary.json",
    )
    print(f"wrote metrics and figures to {args.out}")
    return 0


def _cmd_drift(args) -> int:
    dataset = _load(args.data, args.schema)
    theory = th.load_theory(args.theory)
    report = evaluation.drift_check(theory, dataset.schema, dataset)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(report.to_json_dict(), args.out / "drift.json")
    print(json.dumps(report.to_json_dict()))
    return 0


def _cmd_bench(args) -> int:
    cells = evaluation.bench_learning(args.samples, args.spaces, args.reps, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    evaluation.write_bench_csv(cells, args.out / "bench.csv")
    plots.plot_bench(cells, args.out / "bench.png")
    normalized = np.array([c.normalized for c in cells])
    print(
        f"{len(cells)} cells; normalized time mean {normalized.mean():.3e}s "
        f"cv {normalized.std() / normalized.mean():.3f}"
    )
    return 0


def _cmd_analyze(args) -> int:
    dataset = _load(args.data, args.schema)
    idx = ds.to_index_matrix(dataset.schema, dataset)
    report = analysis.check_nesting(dataset.schema, idx, args.k_max, cap=args.cap)
    doc = report.to_json_dict()
    doc["memorization_holds"] = analysis.check_memorization(dataset.schema, idx, cap=args.cap)
    if args.classify:
        name_a, name_b = (part.strip() for part in args.classify.split(","))
        fa = dataset.schema.feature_index(name_a)
        fb = dataset.schema.feature_index(name_b)
        theory = th.learn(dataset.schema, idx, args.k_max)
        labels = dataset.schema.features[fb]
        doc["classification"] = {
            dataset.schema.value_label(fb, vb): {
                "kind": c.kind,
                "partners": [dataset.schema.value_label(fa, p) for p in c.partners],
            }
            for vb, c in analysis.classify_constraints(theory, dataset.schema, fa, fb).items()
        }
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(doc, args.out / "analysis.json")
    print(json.dumps(doc))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "discretize": _cmd_discretize,
    "learn": _cmd_learn,
    "train": _cmd_train,
    "attack": _cmd_attack,
    "project": _cmd_project,
    "evaluate": _cmd_evaluate,
    "drift": _cmd_drift,
    "bench": _cmd_bench,
    "analyze": _cmd_analyze,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
