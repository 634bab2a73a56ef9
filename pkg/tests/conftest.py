import numpy as np
import pytest

from clausecraft.dataset import Feature, FeatureSchema


@pytest.fixture
def boolean_pair() -> FeatureSchema:
    """Two binary features."""
    return FeatureSchema(
        (Feature("x1", "boolean", ("F", "T")), Feature("x2", "boolean", ("F", "T"))),
        ("a", "b"),
    )


@pytest.fixture
def proto_service() -> FeatureSchema:
    """A binary protocol-like feature plus a three-valued service-like one."""
    return FeatureSchema(
        (
            Feature("x1", "categorical", ("0", "1")),
            Feature("x2", "categorical", ("A", "B", "C")),
        ),
        ("a", "b"),
    )


@pytest.fixture
def four_by_four() -> FeatureSchema:
    """Two four-valued features; the worst-case analysis domain."""
    return FeatureSchema(
        (
            Feature("x1", "categorical", ("A", "B", "C", "D")),
            Feature("x2", "categorical", ("1", "2", "3", "4")),
        ),
        ("a", "b"),
    )


def random_schema(rng, max_features=4, max_values=5, min_values=2) -> FeatureSchema:
    n = int(rng.integers(2, max_features + 1))
    feats = []
    for i in range(n):
        size = int(rng.integers(min_values, max_values + 1))
        feats.append(Feature(f"f{i}", "categorical", tuple(f"v{j}" for j in range(size))))
    return FeatureSchema(tuple(feats), ("a", "b"))


def random_observations(rng, schema: FeatureSchema, n_rows: int) -> np.ndarray:
    sizes = schema.universe_sizes()
    return np.stack(
        [rng.integers(0, s, size=n_rows) for s in sizes], axis=1
    ).astype(np.int32)
