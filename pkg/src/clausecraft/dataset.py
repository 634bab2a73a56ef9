"""Tabular data handling: feature schemas, CSV ingestion, normalization,
stratified splitting, and one-hot encoding for the model.

All types are immutable after construction; every operation is a pure
function of its inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaViolationError, ValidationError

BOOLEAN = "boolean"
CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
DISCRETE_KINDS = (BOOLEAN, CATEGORICAL)
KINDS = (BOOLEAN, CATEGORICAL, CONTINUOUS)

#: Index assigned to a continuous value that falls between bins. No learned
#: literal ever contains it, so such observations always fail certification.
NO_BIN = -1


@dataclass(frozen=True)
class Feature:
    """One column of the schema.

    ``values`` holds the admissible tokens for discrete kinds. ``bins`` holds
    sorted disjoint half-open ``[lo, hi)`` ranges for continuous features and
    is empty until a discretizer fills it in.
    """

    name: str
    kind: str
    values: tuple[str, ...] = ()
    bins: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind in DISCRETE_KINDS:
            if not self.values:
                raise ValidationError(f"feature {self.name!r}: discrete feature needs a value set")
            if len(set(self.values)) != len(self.values):
                raise ValidationError(f"feature {self.name!r}: duplicate values")
            if self.bins:
                raise ValidationError(f"feature {self.name!r}: discrete feature cannot carry bins")
        else:
            if self.values:
                raise ValidationError(f"feature {self.name!r}: continuous feature cannot carry values")
            for lo, hi in self.bins:
                if not lo < hi:
                    raise ValidationError(f"feature {self.name!r}: empty bin [{lo}, {hi})")
            for (_, hi), (lo, _) in zip(self.bins, self.bins[1:]):
                if hi > lo:
                    raise ValidationError(f"feature {self.name!r}: bins overlap or are unsorted")

    @property
    def is_discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    def universe_size(self) -> int:
        """Number of distinct certifiable values (tokens, or bin indices)."""
        if self.is_discrete:
            return len(self.values)
        if not self.bins:
            raise ValidationError(
                f"feature {self.name!r}: continuous feature has no bins yet; run the discretizer first"
            )
        return len(self.bins)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list plus the class-name list.

    The feature order is fixed and identical across every artifact derived
    from one schema; theories and models record a fingerprint of it.
    """

    features: tuple[Feature, ...]
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")
        if not self.features:
            raise ValidationError("schema has no features")

    @property
    def n_features(self) -> int:
        return len(self.features)

    def feature_index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise ValidationError(f"unknown feature {name!r}")

    def universe_sizes(self) -> tuple[int, ...]:
        return tuple(f.universe_size() for f in self.features)

    def token_indices(self) -> tuple[dict[str, int] | None, ...]:
        """Per-feature token-to-index lookup, None for continuous features."""
        return tuple(
            {v: i for i, v in enumerate(f.values)} if f.is_discrete else None
            for f in self.features
        )

    def value_label(self, feature: int, index: int) -> str:
        """Human-readable name of value ``index`` of ``feature``."""
        f = self.features[feature]
        if f.is_discrete:
            return f.values[index]
        lo, hi = f.bins[index]
        return f"[{lo:g},{hi:g})"

    def with_bins(self, bins_by_feature: dict[int, tuple[tuple[float, float], ...]]) -> "FeatureSchema":
        feats = list(self.features)
        for i, bins in bins_by_feature.items():
            f = feats[i]
            if f.is_discrete:
                raise ValidationError(f"feature {f.name!r} is discrete; cannot set bins")
            feats[i] = Feature(f.name, f.kind, (), tuple(bins))
        return FeatureSchema(tuple(feats), self.classes)

    def to_json_dict(self) -> dict:
        out = {"features": [], "classes": list(self.classes)}
        for f in self.features:
            entry: dict = {"name": f.name, "kind": f.kind}
            if f.is_discrete:
                entry["values"] = list(f.values)
            if f.bins:
                entry["bins"] = [[lo, hi] for lo, hi in f.bins]
            out["features"].append(entry)
        return out

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_schema(path) -> FeatureSchema:
    """Parse the JSON sidecar schema file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read schema {path}: {exc}") from exc
    if not isinstance(doc, dict) or "features" not in doc:
        raise ParseError(f"schema {path}: expected an object with a 'features' list")
    feats = []
    for entry in doc["features"]:
        feats.append(
            Feature(
                name=entry["name"],
                kind=entry["kind"],
                values=tuple(entry.get("values", ())),
                bins=tuple((float(lo), float(hi)) for lo, hi in entry.get("bins", ())),
            )
        )
    return FeatureSchema(tuple(feats), tuple(doc.get("classes", ())))


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_json_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class Observation:
    """One feature-value vector with an optional class id."""

    values: tuple
    label: int | None = None


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    rows: tuple[Observation, ...]

    @property
    def classes(self) -> tuple[str, ...]:
        return self.schema.classes

    def __len__(self) -> int:
        return len(self.rows)

    def labels(self) -> np.ndarray:
        return np.array([-1 if r.label is None else r.label for r in self.rows], dtype=np.int64)


def _parse_value(feature: Feature, raw: str, lookup: dict[str, int] | None, row_no: int):
    if raw == "":
        raise SchemaViolationError(
            f"row {row_no}: missing value for feature {feature.name!r} (imputation is not supported)"
        )
    if feature.is_discrete:
        if raw not in lookup:
            raise SchemaViolationError(
                f"row {row_no}: value {raw!r} not in the schema value set of feature {feature.name!r}"
            )
        return raw
    try:
        return float(raw)
    except ValueError as exc:
        raise SchemaViolationError(
            f"row {row_no}: cannot parse {raw!r} as a number for feature {feature.name!r}"
        ) from exc


def load_csv(path, schema_path) -> Dataset:
    """Load an RFC-4180-style CSV whose header is the schema feature names
    plus one final label column. Labels may be empty (unlabeled row)."""
    schema = schema_path if isinstance(schema_path, FeatureSchema) else load_schema(schema_path)
    lookups = schema.token_indices()
    class_to_id = {c: i for i, c in enumerate(schema.classes)}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None
        expected = [f.name for f in schema.features]
        if len(header) != len(expected) + 1 or header[: len(expected)] != expected:
            raise ParseError(
                f"{path}: header must be the schema feature names plus a final label column; got {header}"
            )
        width = len(header)
        for row_no, raw in enumerate(reader, start=2):
            if len(raw) != width:
                raise ParseError(f"{path}: row {row_no} has {len(raw)} fields, expected {width}")
            values = tuple(
                _parse_value(f, v, lk, row_no)
                for f, v, lk in zip(schema.features, raw, lookups)
            )
            raw_label = raw[-1]
            if raw_label == "":
                label = None
            elif raw_label in class_to_id:
                label = class_to_id[raw_label]
            else:
                try:
                    label = int(raw_label)
                except ValueError:
                    raise SchemaViolationError(
                        f"{path}: row {row_no}: label {raw_label!r} is not a known class"
                    ) from None
                if not 0 <= label < len(schema.classes):
                    raise SchemaViolationError(
                        f"{path}: row {row_no}: label id {label} out of range"
                    )
            rows.append(Observation(values, label))
    return Dataset(schema, tuple(rows))


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f.name for f in dataset.schema.features] + ["label"])
        for row in dataset.rows:
            rendered = [
                v if isinstance(v, str) else repr(float(v))
                for v in row.values
            ]
            rendered.append("" if row.label is None else dataset.classes[row.label])
            writer.writerow(rendered)


@dataclass(frozen=True)
class NormalizationParams:
    """Per-continuous-feature (min, max) from the fitting split; None for
    discrete features. ``constant_features`` lists features with max == min."""

    ranges: tuple[tuple[float, float] | None, ...]
    constant_features: tuple[str, ...] = ()


def save_normalization(params: NormalizationParams, path) -> None:
    doc = {
        "ranges": [list(r) if r is not None else None for r in params.ranges],
        "constant_features": list(params.constant_features),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_normalization(path) -> NormalizationParams:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read normalization file {path}: {exc}") from exc
    ranges = tuple(None if r is None else (float(r[0]), float(r[1])) for r in doc["ranges"])
    return NormalizationParams(ranges, tuple(doc.get("constant_features", ())))


def normalize(dataset: Dataset) -> tuple[Dataset, NormalizationParams]:
    """Min-max scale each continuous feature to [0, 1] using this dataset's
    own statistics. Constant features map to 0.0 and are flagged."""
    if not dataset.rows:
        raise ValidationError("cannot normalize an empty dataset")
    ranges: list[tuple[float, float] | None] = []
    constant = []
    for i, f in enumerate(dataset.schema.features):
        if f.is_discrete:
            ranges.append(None)
            continue
        col = np.array([r.values[i] for r in dataset.rows], dtype=np.float64)
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            constant.append(f.name)
        ranges.append((lo, hi))
    params = NormalizationParams(tuple(ranges), tuple(constant))
    return apply_normalization(dataset, params), params


def apply_normalization(dataset: Dataset, params: NormalizationParams) -> Dataset:
    """Apply previously fitted min-max parameters. Values outside the fitted
    range are not clipped; bounds and bin assignment handle them downstream."""
    rows = []
    for row in dataset.rows:
        values = list(row.values)
        for i, rng in enumerate(params.ranges):
            if rng is None:
                continue
            lo, hi = rng
            values[i] = 0.0 if lo == hi else (float(values[i]) - lo) / (hi - lo)
        rows.append(Observation(tuple(values), row.label))
    return Dataset(dataset.schema, tuple(rows))


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic stratified partition into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must be strictly between 0 and 1")
    labels = dataset.labels()
    if (labels < 0).any():
        raise ValidationError("split requires every row to be labeled")
    rng = np.random.default_rng(seed)
    test_idx: list[int] = []
    train_idx: list[int] = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        n_test = int(round(test_fraction * len(members)))
        if n_test == 0 or n_test == len(members):
            raise ValidationError(
                f"class {dataset.classes[cls]!r} would end up empty in one split "
                f"({len(members)} rows at fraction {test_fraction})"
            )
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    train_idx.sort()
    test_idx.sort()
    pick = lambda idx: Dataset(dataset.schema, tuple(dataset.rows[i] for i in idx))
    return pick(train_idx), pick(test_idx)


@dataclass(frozen=True)
class ColumnGroup:
    """Maps a contiguous run of model-input columns back to one schema feature."""

    feature: int
    start: int
    stop: int
    kind: str  # "onehot" | "continuous"


ColumnMap = tuple[ColumnGroup, ...]


def column_map(schema: FeatureSchema) -> ColumnMap:
    groups = []
    col = 0
    for i, f in enumerate(schema.features):
        if f.is_discrete:
            groups.append(ColumnGroup(i, col, col + len(f.values), "onehot"))
            col += len(f.values)
        else:
            groups.append(ColumnGroup(i, col, col + 1, "continuous"))
            col += 1
    return tuple(groups)


def encode(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, ColumnMap]:
    """One-hot encode discrete features and pass continuous ones through.

    Returns the matrix, the label vector (-1 for unlabeled rows), and the
    column map that lets attacks treat a one-hot group as one logical feature.
    """
    cmap = column_map(dataset.schema)
    width = cmap[-1].stop
    X = np.zeros((len(dataset.rows), width), dtype=np.float64)
    lookups = dataset.schema.token_indices()
    for r, row in enumerate(dataset.rows):
        for g, value in zip(cmap, row.values):
            if g.kind == "onehot":
                X[r, g.start + lookups[g.feature][value]] = 1.0
            else:
                X[r, g.start] = float(value)
    return X, dataset.labels(), cmap


def decode(X: np.ndarray, schema: FeatureSchema, cmap: ColumnMap | None = None) -> list[tuple]:
    """Invert :func:`encode` row-wise: argmax within each one-hot group."""
    if cmap is None:
        cmap = column_map(schema)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = []
    for r in range(X.shape[0]):
        values = []
        for g in cmap:
            if g.kind == "onehot":
                local = int(np.argmax(X[r, g.start : g.stop]))
                values.append(schema.features[g.feature].values[local])
            else:
                values.append(float(X[r, g.start]))
        out.append(tuple(values))
    return out


def to_index_vector(schema: FeatureSchema, values, *, extend_edges: bool = False) -> np.ndarray:
    """Map one observation into per-feature value-index space.

    Discrete tokens map to their position in the schema value set; continuous
    values map to their bin index or to ``NO_BIN`` when they fall in a gap.
    """
    from .discretize import BinSet, assign_bin  # local import to avoid a cycle

    if isinstance(values, Observation):
        values = values.values
    if len(values) != schema.n_features:
        raise SchemaViolationError(
            f"observation has {len(values)} values, schema has {schema.n_features} features"
        )
    out = np.empty(schema.n_features, dtype=np.int32)
    lookups = schema.token_indices()
    for i, (f, v) in enumerate(zip(schema.features, values)):
        if f.is_discrete:
            try:
                out[i] = lookups[i][v]
            except KeyError:
                raise SchemaViolationError(
                    f"value {v!r} not in the schema value set of feature {f.name!r}"
                ) from None
        else:
            if not f.bins:
                raise ValidationError(
                    f"feature {f.name!r} has no bins; run the discretizer before certification"
                )
            out[i] = assign_bin(float(v), BinSet(f.bins, extend_edges))
    return out


def to_index_matrix(schema: FeatureSchema, dataset: Dataset, *, extend_edges: bool = False) -> np.ndarray:
    return np.stack([to_index_vector(schema, r, extend_edges=extend_edges) for r in dataset.rows])
