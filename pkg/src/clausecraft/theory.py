"""Set-literal CNF constraint theories: clause-space generation, the
generate-and-test learning filter, and fast certification.

A clause holds exactly one literal per feature; a literal is a set of
admissible value indices for that feature. A clause is satisfied when at
least one feature's value is a member of its literal, and a theory certifies
an observation when every clause is satisfied.

Clauses are stored as packed per-feature bitmasks in one contiguous uint64
matrix, so a literal test is a single AND and learning is one vectorized
pass over the observations with an alive-flag vector, compacted at the end.
"""

from __future__ import annotations

import struct
from math import comb, prod

import numpy as np

from .dataset import FeatureSchema
from .errors import EnumerationCapError, ParseError, ValidationError

MAX_CLAUSES_DEFAULT = 50_000_000
_MAGIC = b"CLTH"
_VERSION = 1

# Element budget for the (clauses x rows x features) temporaries used by the
# vectorized passes; keeps peak memory around 64 MB of uint64.
_CHUNK_ELEMENTS = 8_000_000


def _layout(sizes: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...], int]:
    """Per-feature word counts and word offsets for the packed mask matrix."""
    words = tuple((s + 63) // 64 for s in sizes)
    offsets = []
    acc = 0
    for w in words:
        offsets.append(acc)
        acc += w
    return words, tuple(offsets), acc


class Theory:
    """Immutable conjunction of set-literal clauses with cardinality bound k."""

    __slots__ = ("sizes", "k", "fingerprint", "masks", "words", "offsets", "_sets")

    def __init__(self, sizes: tuple[int, ...], k: int, fingerprint: str, masks: np.ndarray):
        words, offsets, width = _layout(sizes)
        if masks.ndim != 2 or masks.shape[1] != width or masks.dtype != np.uint64:
            raise ValidationError("mask matrix does not match the schema layout")
        masks = np.ascontiguousarray(masks)
        masks.setflags(write=False)
        self.sizes = tuple(sizes)
        self.k = int(k)
        self.fingerprint = fingerprint
        self.masks = masks
        self.words = words
        self.offsets = offsets
        self._sets = None

    @property
    def n_features(self) -> int:
        return len(self.sizes)

    @property
    def n_clauses(self) -> int:
        return self.masks.shape[0]

    def __len__(self) -> int:
        return self.n_clauses

    def clause_sets(self, j: int) -> tuple[frozenset[int], ...]:
        """Clause ``j`` as one frozenset of admissible value indices per feature."""
        out = []
        for i, size in enumerate(self.sizes):
            o = self.offsets[i]
            members = [
                v for v in range(size) if self.masks[j, o + (v >> 6)] >> np.uint64(v & 63) & np.uint64(1)
            ]
            out.append(frozenset(members))
        return tuple(out)

    def all_clause_sets(self) -> list[tuple[frozenset[int], ...]]:
        """Every clause in generation order; cached (theories are immutable)."""
        if self._sets is None:
            self._sets = [self.clause_sets(j) for j in range(self.n_clauses)]
        return self._sets

    def clause_set_family(self) -> frozenset[tuple[frozenset[int], ...]]:
        """Order-free view for equality tests between theories."""
        return frozenset(self.all_clause_sets())

    def replace_masks(self, masks: np.ndarray) -> "Theory":
        return Theory(self.sizes, self.k, self.fingerprint, masks)


def _check_schema(theory: Theory, schema: FeatureSchema) -> None:
    if theory.fingerprint != schema.fingerprint():
        raise ValidationError("theory was learned against a different schema (fingerprint mismatch)")


def estimate_clause_count(sizes: tuple[int, ...], k: int, cardinality: str = "upto") -> int:
    """Clause count of the generated space, computed before any allocation."""
    total = 1
    for s in sizes:
        cap = min(k, s - 1)
        if cardinality == "exact":
            total *= comb(s, cap)
        else:
            total *= sum(comb(s, j) for j in range(1, cap + 1))
    return total


def _feature_literal_masks(size: int, words: int, k: int, cardinality: str) -> np.ndarray:
    """All admissible literals of one feature as packed masks, in deterministic
    order: cardinality ascending, then lexicographic by member indices."""
    from itertools import combinations

    cap = min(k, size - 1)
    cards = [cap] if cardinality == "exact" else list(range(1, cap + 1))
    rows = []
    for j in cards:
        for members in combinations(range(size), j):
            row = [0] * words
            for v in members:
                row[v >> 6] |= 1 << (v & 63)
            rows.append(row)
    return np.array(rows, dtype=np.uint64)


def generate_space(
    schema: FeatureSchema,
    k: int,
    *,
    cardinality: str = "upto",
    max_clauses: int = MAX_CLAUSES_DEFAULT,
) -> Theory:
    """Build the full space of candidate clauses.

    Per feature, the pseudo-power set excludes the empty set and the full
    value set; ``k`` bounds literal cardinality, capped per feature at
    ``|X_i| - 1``. ``cardinality="exact"`` keeps only literals of the capped
    size itself, which is the per-k batch used by the worst-case analysis;
    the default keeps every size up to the cap.
    """
    if cardinality not in ("upto", "exact"):
        raise ValidationError("cardinality must be 'upto' or 'exact'")
    sizes = schema.universe_sizes()
    if any(s < 2 for s in sizes):
        bad = [f.name for f, s in zip(schema.features, sizes) if s < 2]
        raise ValidationError(f"features {bad} have single-value universes; no literal is expressible")
    k_max = max(s - 1 for s in sizes)
    if not 1 <= k <= k_max:
        raise ValidationError(f"k must be in [1, {k_max}] for this schema, got {k}")
    estimate = estimate_clause_count(sizes, k, cardinality)
    if estimate > max_clauses:
        raise EnumerationCapError(
            f"clause space would hold {estimate} clauses, above the cap of {max_clauses}",
            estimate,
        )

    words, offsets, width = _layout(sizes)
    per_feature = [
        _feature_literal_masks(s, w, k, cardinality) for s, w in zip(sizes, words)
    ]
    total = estimate
    masks = np.empty((total, width), dtype=np.uint64)
    inner = total
    for i, arr in enumerate(per_feature):
        c = arr.shape[0]
        inner //= c
        outer = total // (c * inner)
        block = np.repeat(arr, inner, axis=0)
        masks[:, offsets[i] : offsets[i] + words[i]] = np.tile(block, (outer, 1))
    return Theory(sizes, k, schema.fingerprint(), masks)


def _observation_words_bits(theory: Theory, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Word indices and test bits for a batch of index vectors. The NO_BIN
    sentinel gets a zero bit, which can never pass an AND test."""
    obs = np.atleast_2d(np.asarray(obs))
    if obs.shape[1] != theory.n_features:
        raise ValidationError(
            f"observations have {obs.shape[1]} features, theory has {theory.n_features}"
        )
    sizes = np.asarray(theory.sizes)
    if (obs >= sizes[None, :]).any() or (obs < -1).any():
        raise ValidationError("observation value index out of range for the schema universe")
    valid = obs >= 0
    safe = np.where(valid, obs, 0)
    offs = np.asarray(theory.offsets, dtype=np.int64)
    word_idx = offs[None, :] + (safe >> 6)
    bits = np.where(valid, np.uint64(1) << safe.astype(np.uint64) % np.uint64(64), np.uint64(0))
    return word_idx, bits


def _iter_chunks(n_rows: int, n_clauses: int, n_features: int):
    rows_per_chunk = max(1, min(n_rows, _CHUNK_ELEMENTS // max(1, n_clauses * n_features)))
    for start in range(0, n_rows, rows_per_chunk):
        yield start, min(n_rows, start + rows_per_chunk)


def valiant_filter(theory: Theory, observations: np.ndarray) -> Theory:
    """Keep exactly the clauses satisfied by every observation.

    Observations are index vectors (discrete tokens and bin indices share one
    index space per feature); continuous values must be binned beforehand.
    One vectorized pass over the observations maintains an alive flag per
    clause; the surviving clauses are compacted at the end, preserving
    generation order.
    """
    obs = np.atleast_2d(np.asarray(observations))
    if (obs < 0).any():
        raise ValidationError(
            "observations for learning must be fully binned; a NO_BIN sentinel was passed"
        )
    word_idx, bits = _observation_words_bits(theory, obs)
    alive = np.ones(theory.n_clauses, dtype=bool)
    for start, stop in _iter_chunks(obs.shape[0], theory.n_clauses, theory.n_features):
        tested = theory.masks[:, word_idx[start:stop]] & bits[None, start:stop]
        satisfied = tested.any(axis=2)  # (clauses, rows)
        alive &= satisfied.all(axis=1)
    return theory.replace_masks(theory.masks[alive])


def certify_many(theory: Theory, observations: np.ndarray) -> np.ndarray:
    """Boolean vector: does the theory certify each observation."""
    obs = np.atleast_2d(np.asarray(observations))
    word_idx, bits = _observation_words_bits(theory, obs)
    out = np.empty(obs.shape[0], dtype=bool)
    if theory.n_clauses == 0:
        out[:] = True  # the empty theory certifies anything
        return out
    for start, stop in _iter_chunks(obs.shape[0], theory.n_clauses, theory.n_features):
        tested = theory.masks[:, word_idx[start:stop]] & bits[None, start:stop]
        out[start:stop] = tested.any(axis=2).all(axis=0)
    return out


def certifies(theory: Theory, observation) -> bool:
    """True iff every clause has at least one satisfied literal."""
    return bool(certify_many(theory, np.atleast_2d(np.asarray(observation)))[0])


def satisfaction_counts_many(theory: Theory, observations: np.ndarray) -> np.ndarray:
    """Per-observation, per-feature count of clauses whose literal at that
    feature contains the observation's value."""
    obs = np.atleast_2d(np.asarray(observations))
    word_idx, bits = _observation_words_bits(theory, obs)
    out = np.zeros((obs.shape[0], theory.n_features), dtype=np.int64)
    if theory.n_clauses == 0:
        return out
    for start, stop in _iter_chunks(obs.shape[0], theory.n_clauses, theory.n_features):
        tested = (theory.masks[:, word_idx[start:stop]] & bits[None, start:stop]) != 0
        out[start:stop] = tested.sum(axis=0)
    return out


def clause_satisfaction_counts(theory: Theory, observation) -> np.ndarray:
    """Counts for one observation; the ranking signal behind projection."""
    return satisfaction_counts_many(theory, np.atleast_2d(np.asarray(observation)))[0]


def learn(
    schema: FeatureSchema,
    observations: np.ndarray,
    k: int = 1,
    *,
    cardinality: str = "upto",
    max_clauses: int = MAX_CLAUSES_DEFAULT,
) -> Theory:
    """generate_space followed by valiant_filter."""
    return valiant_filter(
        generate_space(schema, k, cardinality=cardinality, max_clauses=max_clauses),
        observations,
    )


def format_theory(theory: Theory, schema: FeatureSchema, limit: int | None = None) -> str:
    """Human-readable dump: ``(x1 ∈ {0} ∨ x2 ∈ {B,C}) ∧ ...``."""
    _check_schema(theory, schema)
    parts = []
    n = theory.n_clauses if limit is None else min(limit, theory.n_clauses)
    for j in range(n):
        lits = []
        for i, members in enumerate(theory.clause_sets(j)):
            labels = ",".join(schema.value_label(i, v) for v in sorted(members))
            lits.append(f"{schema.features[i].name} ∈ {{{labels}}}")
        parts.append("(" + " ∨ ".join(lits) + ")")
    text = " ∧ ".join(parts)
    if limit is not None and theory.n_clauses > limit:
        text += f" ∧ … ({theory.n_clauses - limit} more)"
    return text


def save_theory(theory: Theory, path) -> None:
    """Binary layout: magic, version, k, feature count, universe sizes,
    fingerprint, clause count, packed little-endian masks."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI I", _VERSION, theory.k, theory.n_features))
        fh.write(struct.pack(f"<{theory.n_features}I", *theory.sizes))
        fh.write(bytes.fromhex(theory.fingerprint))
        fh.write(struct.pack("<Q", theory.n_clauses))
        fh.write(np.ascontiguousarray(theory.masks, dtype="<u8").tobytes())


def load_theory(path) -> Theory:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ParseError(f"{path}: not a theory file (bad magic)")
        version, k, n = struct.unpack("<BI I", fh.read(9))
        if version != _VERSION:
            raise ParseError(f"{path}: unsupported theory format version {version}")
        sizes = struct.unpack(f"<{n}I", fh.read(4 * n))
        fingerprint = fh.read(32).hex()
        (count,) = struct.unpack("<Q", fh.read(8))
        _, _, width = _layout(sizes)
        buf = fh.read(count * width * 8)
        if len(buf) != count * width * 8:
            raise ParseError(f"{path}: truncated theory file")
        masks = np.frombuffer(buf, dtype="<u8").reshape(count, width).astype(np.uint64)
    return Theory(sizes, k, fingerprint, masks)
