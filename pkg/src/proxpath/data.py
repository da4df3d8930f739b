"""Observation model, CSV ingestion and feature-map evaluation.

Every unit carries an outcome ``y``, a binary treatment ``a`` and five real
blocks: the recanting witness ``d``, the mediator ``m``, the treatment proxy
``z``, the outcome proxy ``w`` and covariates ``x``.  Blocks are stored as
2-D float64 arrays so multivariate variables need no special casing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, ParseError, SchemaError

BLOCKS = ("d", "m", "z", "w", "x")
ROLES = ("intercept", "w", "m", "d", "z", "x")
TRANSFORMS = ("identity", "corrupted")


@dataclass(frozen=True)
class ColumnSchema:
    """Per-block dimensions.  ``x`` may be empty, every other block may not."""

    d: int = 1
    m: int = 1
    z: int = 1
    w: int = 1
    x: int = 1

    def __post_init__(self):
        for b in BLOCKS:
            k = getattr(self, b)
            if not isinstance(k, (int, np.integer)) or k < 0:
                raise SchemaError(f"dimension of block {b!r} must be a non-negative integer")
            if b != "x" and k < 1:
                raise SchemaError(f"block {b!r} needs at least one column")

    def dim(self, block: str) -> int:
        return getattr(self, block)

    def block_columns(self, block: str) -> list[str]:
        return [f"{block}{j + 1}" for j in range(self.dim(block))]

    def columns(self) -> list[str]:
        cols = ["y", "a"]
        for b in BLOCKS:
            cols.extend(self.block_columns(b))
        return cols

    @classmethod
    def from_header(cls, header: Sequence[str]) -> "ColumnSchema":
        """Infer block dimensions from a header using the ``d1..dK`` convention."""
        dims = {}
        names = set(header)
        for b in BLOCKS:
            k = 0
            while f"{b}{k + 1}" in names:
                k += 1
            dims[b] = k
        for req in ("y", "a"):
            if req not in names:
                raise SchemaError(f"missing column {req!r}")
        for b in BLOCKS:
            if b != "x" and dims[b] == 0:
                raise SchemaError(f"missing column {b}1")
        return cls(**dims)


@dataclass(frozen=True)
class Observation:
    y: float
    a: int
    d: tuple
    m: tuple
    z: tuple
    w: tuple
    x: tuple = ()

    def __post_init__(self):
        if self.a not in (0, 1):
            raise ParseError(f"treatment must be 0 or 1, got {self.a!r}")
        for b in BLOCKS:
            object.__setattr__(self, b, tuple(float(v) for v in np.atleast_1d(getattr(self, b))))
        vals = [self.y, *self.d, *self.m, *self.z, *self.w, *self.x]
        if not np.all(np.isfinite(np.asarray(vals, dtype=float))):
            raise ParseError("observation contains non-finite values")

    def block(self, name: str) -> np.ndarray:
        if name == "intercept":
            return np.ones(1)
        return np.asarray(getattr(self, name), dtype=float)


def _frozen(arr, ndim):
    out = np.array(arr, dtype=np.float64, copy=True)
    if ndim == 2 and out.ndim == 1:
        out = out.reshape(-1, 1)
    out.setflags(write=False)
    return out


class Dataset:
    """Immutable column store of ``n`` observations.

    Parameters
    ----------
    y, a : array_like, shape (n,)
    d, m, z, w, x : array_like, shape (n, k) or (n,)
        Block columns.  ``x`` may be omitted (zero covariates).
    schema : ColumnSchema, optional
        Checked against the block widths if given, inferred otherwise.
    """

    __slots__ = ("y", "a", "d", "m", "z", "w", "x", "schema", "n")

    def __init__(self, y, a, d, m, z, w, x=None, schema: ColumnSchema | None = None):
        y = _frozen(y, 1).reshape(-1)
        n = y.shape[0]
        if x is None:
            x = np.zeros((n, 0))
        blocks = {b: _frozen(v, 2) for b, v in zip(BLOCKS, (d, m, z, w, x))}
        a = _frozen(a, 1).reshape(-1)
        for name, arr in (("a", a), *blocks.items()):
            if arr.shape[0] != n:
                raise SchemaError(f"block {name!r} has {arr.shape[0]} rows, expected {n}")
        inferred = ColumnSchema(**{b: blocks[b].shape[1] for b in BLOCKS})
        if schema is not None and schema != inferred:
            raise SchemaError(f"block widths {inferred} do not match schema {schema}")
        bad = np.flatnonzero((a != 0) & (a != 1))
        if bad.size:
            raise ParseError(f"treatment not in {{0,1}} at row {bad[0]}", row=int(bad[0]))
        for name, arr in (("y", y), *blocks.items()):
            if not np.all(np.isfinite(arr)):
                row = int(np.flatnonzero(~np.isfinite(arr.reshape(n, -1)).all(axis=1))[0])
                raise ParseError(f"non-finite value in {name!r} at row {row}", row=row)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        for b in BLOCKS:
            object.__setattr__(self, b, blocks[b])
        object.__setattr__(self, "schema", inferred)
        object.__setattr__(self, "n", n)

    def __setattr__(self, key, value):
        raise AttributeError("Dataset is immutable")

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("y", "a", *BLOCKS)
        )

    def __repr__(self):
        return f"Dataset(n={self.n}, schema={self.schema})"

    def block(self, name: str) -> np.ndarray:
        if name == "intercept":
            return np.ones((self.n, 1))
        if name in ("y", "a"):
            return getattr(self, name).reshape(-1, 1)
        if name not in BLOCKS:
            raise ConfigurationError(f"unknown role {name!r}")
        return getattr(self, name)

    def take(self, idx) -> "Dataset":
        """Rows ``idx`` (any integer index array, repeats allowed) as a new Dataset."""
        idx = np.asarray(idx)
        return Dataset(*(getattr(self, f)[idx] for f in ("y", "a", *BLOCKS)))

    def row(self, i: int) -> Observation:
        return Observation(
            y=float(self.y[i]), a=int(self.a[i]),
            **{b: tuple(getattr(self, b)[i]) for b in BLOCKS},
        )

    @property
    def rows(self) -> Iterator[Observation]:
        return (self.row(i) for i in range(self.n))

    @classmethod
    def from_rows(cls, rows: Iterable[Observation], schema: ColumnSchema | None = None) -> "Dataset":
        rows = list(rows)
        if not rows:
            raise SchemaError("cannot build a Dataset from zero rows")
        cols = {f: [] for f in ("y", "a", *BLOCKS)}
        for r in rows:
            cols["y"].append(r.y)
            cols["a"].append(r.a)
            for b in BLOCKS:
                cols[b].append(r.block(b))
        width = {b: len(cols[b][0]) for b in BLOCKS}
        for b in BLOCKS:
            if any(len(v) != width[b] for v in cols[b]):
                raise SchemaError(f"rows disagree on the width of block {b!r}")
        arrs = {b: np.asarray(cols[b], dtype=float).reshape(len(rows), width[b]) for b in BLOCKS}
        return cls(cols["y"], cols["a"], schema=schema, **arrs)

    def is_binary_outcome(self) -> bool:
        return bool(np.all((self.y == 0) | (self.y == 1)))


def load_csv(path, schema: ColumnSchema | None = None) -> Dataset:
    """Read a dataset from a UTF-8 CSV with header ``y,a,d1..,m1..,z1..,w1..,x1..``.

    Extra columns are ignored.  When ``schema`` is omitted the block widths are
    inferred from the header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file, header row required") from None
        if schema is None:
            schema = ColumnSchema.from_header(header)
        pos = {name: j for j, name in enumerate(header)}
        cols = schema.columns()
        for c in cols:
            if c not in pos:
                raise SchemaError(f"missing column {c!r}")
        take = [pos[c] for c in cols]
        values = []
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            try:
                row = [float(rec[j]) for j in take]
            except (ValueError, IndexError):
                raise ParseError(f"non-numeric or missing cell in data row {i}", row=i) from None
            if not np.all(np.isfinite(row)):
                raise ParseError(f"non-finite value in data row {i}", row=i)
            if row[1] not in (0.0, 1.0):
                raise ParseError(f"treatment a={rec[take[1]]} not in {{0,1}} in data row {i}", row=i)
            values.append(row)
    if not values:
        raise SchemaError("file has a header but no data rows")
    arr = np.asarray(values, dtype=float)
    out, j = {}, 2
    for b in BLOCKS:
        k = schema.dim(b)
        out[b] = arr[:, j:j + k]
        j += k
    return Dataset(arr[:, 0], arr[:, 1], schema=schema, **out)


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces it bit for bit."""
    mat = np.column_stack([ds.y, ds.a] + [ds.block(b) for b in BLOCKS])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(ds.schema.columns())
        for r in mat:
            out = [repr(float(v)) for v in r]
            out[1] = str(int(r[1]))
            wr.writerow(out)


# --------------------------------------------------------------------------
# feature maps


def corrupt_values(v):
    """Misspecification transform ``v -> |v| + 0.5 v**2`` (elementwise)."""
    v = np.asarray(v, dtype=float)
    return np.abs(v) + 0.5 * v * v


@dataclass(frozen=True)
class FeatureSpec:
    """A feature map: intercept plus raw (or corrupted) blocks in declared order.

    ``serves`` names the bridge fit (``h2`` ... ``q2``) the map belongs to, which
    is what the misspecification machinery keys on.  ``binary`` lists column
    names (e.g. ``"x2"``) that hold 0/1 indicators; the corruption transform
    leaves those untouched, as it does the intercept.
    """

    id: str
    roles: tuple
    transform: str = "identity"
    serves: str | None = None
    binary: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        roles = tuple(self.roles)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "binary", frozenset(self.binary))
        for r in roles:
            if r not in ROLES:
                raise ConfigurationError(f"unknown role {r!r} in feature map {self.id!r}")
        if len(set(roles)) != len(roles):
            raise ConfigurationError(f"repeated role in feature map {self.id!r}")
        if self.transform not in TRANSFORMS:
            raise ConfigurationError(f"unknown transform {self.transform!r}")

    def dim(self, schema: ColumnSchema) -> int:
        return sum(1 if r == "intercept" else schema.dim(r) for r in self.roles)

    def column_names(self, schema: ColumnSchema) -> list[str]:
        names = []
        for r in self.roles:
            names.extend(["1"] if r == "intercept" else schema.block_columns(r))
        return names

    def with_transform(self, transform: str) -> "FeatureSpec":
        return FeatureSpec(self.id, self.roles, transform, self.serves, self.binary)


def _check_roles(spec: FeatureSpec, dims: ColumnSchema):
    for r in spec.roles:
        if r != "intercept" and dims.dim(r) == 0 and r != "x":
            raise ConfigurationError(f"role {r!r} of feature map {spec.id!r} missing from schema")


def evaluate_features(spec: FeatureSpec, obs: Observation) -> np.ndarray:
    """Feature vector of one observation."""
    parts = []
    for r in spec.roles:
        v = obs.block(r)
        if spec.transform == "corrupted" and r != "intercept":
            v = _corrupt_block(v.reshape(1, -1), r, spec.binary).reshape(-1)
        parts.append(v)
    out = np.concatenate(parts) if parts else np.zeros(0)
    if not np.all(np.isfinite(out)):
        raise ConfigurationError(f"feature map {spec.id!r} produced non-finite values")
    return out


def _corrupt_block(v, role, binary):
    if not binary:
        return corrupt_values(v)
    names = [f"{role}{j + 1}" for j in range(v.shape[1])]
    keep = np.array([nm in binary for nm in names])
    return np.where(keep[None, :], v, corrupt_values(v))


def feature_matrix(spec: FeatureSpec, ds: Dataset) -> np.ndarray:
    """Row-wise :func:`evaluate_features` over a whole dataset, shape (n, dim)."""
    _check_roles(spec, ds.schema)
    parts = []
    for r in spec.roles:
        v = ds.block(r)
        if spec.transform == "corrupted" and r != "intercept":
            v = _corrupt_block(v, r, spec.binary)
        parts.append(v)
    if not parts:
        return np.zeros((ds.n, 0))
    return np.concatenate(parts, axis=1)
