"""Complete categorical datasets: CSV ingestion, ordering and sampling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tree import ModelError, StagedTree, VariableSpec

__all__ = [
    "Dataset",
    "DataError",
    "MissingColumnError",
    "UnknownLevelError",
    "EmptyDataError",
    "load_csv",
    "infer_variables",
    "order_by",
    "sample_from_ceg",
    "rng_stream",
]

# fixed stream keys for the splittable generator; adding new streams must not renumber these
STREAM_SAMPLE = 0
STREAM_SHUFFLE = 1


class DataError(ValueError):
    pass


class MissingColumnError(DataError):
    pass


class UnknownLevelError(DataError):
    pass


class EmptyDataError(DataError):
    pass


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one consumer of a 64-bit master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream,)))


@dataclass(frozen=True)
class Dataset:
    """Observations as level indices, one row per case in prequential order."""

    variables: tuple[VariableSpec, ...]
    rows: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1, len(self.variables))
        for j, v in enumerate(self.variables):
            if rows.size and (rows[:, j].min() < 0 or rows[:, j].max() >= v.cardinality):
                raise UnknownLevelError(f"column {v.name!r} has level indices outside 0..{v.cardinality - 1}")
        rows = np.ascontiguousarray(rows)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.names.index(name)]

    def labels(self, m: int) -> dict[str, str]:
        return {v.name: v.levels[j] for v, j in zip(self.variables, self.rows[m])}

    def reorder_columns(self, variables: Sequence[VariableSpec]) -> "Dataset":
        """Same cases with columns matching ``variables`` (names and levels)."""
        idx = []
        for v in variables:
            if v.name not in self.names:
                raise MissingColumnError(f"dataset has no column {v.name!r}")
            mine = self.variables[self.names.index(v.name)]
            if mine.levels != v.levels:
                remap = np.array([v.index(lev) for lev in mine.levels])
            else:
                remap = None
            idx.append((self.names.index(v.name), remap))
        cols = [self.rows[:, i] if r is None else r[self.rows[:, i]] for i, r in idx]
        rows = np.stack(cols, axis=1) if cols else np.empty((len(self), 0), dtype=np.int64)
        return Dataset(tuple(variables), rows, dict(self.provenance))

    def subset(self, index) -> "Dataset":
        return Dataset(self.variables, self.rows[index], dict(self.provenance))

    def concat(self, other: "Dataset") -> "Dataset":
        other = other.reorder_columns(self.variables)
        return Dataset(self.variables, np.vstack([self.rows, other.rows]), dict(self.provenance))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for row in self.rows:
                w.writerow([v.levels[j] for v, j in zip(self.variables, row)])


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path}: file is empty") from None
        records = [r for r in reader if r]
    header = [h.strip() for h in header]
    return header, records


def infer_variables(path, columns: Sequence[str] | None = None) -> tuple[VariableSpec, ...]:
    """Variables from a CSV: header order, levels in order of first appearance."""
    header, records = _read_csv(path)
    if not records:
        raise EmptyDataError(f"{path}: no data rows")
    names = list(columns) if columns else header
    out = []
    for name in names:
        if name not in header:
            raise MissingColumnError(f"{path}: missing column {name!r}")
        j = header.index(name)
        levels = list(dict.fromkeys(r[j].strip() for r in records))
        out.append(VariableSpec(name, tuple(levels)))
    return tuple(out)


def load_csv(path, variables: Sequence[VariableSpec] | None = None) -> Dataset:
    """Read a header-first CSV; rows keep file order."""
    if variables is None:
        variables = infer_variables(path)
    variables = tuple(variables)
    header, records = _read_csv(path)
    if not records:
        raise EmptyDataError(f"{path}: no data rows")
    cols = []
    for v in variables:
        if v.name not in header:
            raise MissingColumnError(f"{path}: missing column {v.name!r}")
        cols.append(header.index(v.name))
    rows = np.empty((len(records), len(variables)), dtype=np.int64)
    lookup = [{lev: k for k, lev in enumerate(v.levels)} for v in variables]
    for i, rec in enumerate(records):
        for j, (c, v) in enumerate(zip(cols, variables)):
            value = rec[c].strip() if c < len(rec) else ""
            try:
                rows[i, j] = lookup[j][value]
            except KeyError:
                raise UnknownLevelError(
                    f"{path}: row {i + 1}, column {v.name!r}: unknown level {value!r} "
                    f"(expected one of {list(v.levels)})") from None
    return Dataset(variables, rows, {"file": str(path), "order": "file"})


def order_by(data: Dataset, covariate: str | None = None, seed: int | None = None) -> Dataset:
    """Stable sort by a covariate's level index, or a seeded uniform shuffle."""
    if (covariate is None) == (seed is None):
        raise ValueError("give exactly one of covariate or seed")
    prov = dict(data.provenance)
    if covariate is not None:
        if covariate not in data.names:
            raise DataError(f"unknown covariate {covariate!r}")
        perm = np.argsort(data.column(covariate), kind="stable")
        prov["order"] = f"by:{covariate}"
    else:
        perm = rng_stream(seed, STREAM_SHUFFLE).permutation(len(data))
        prov["order"] = f"shuffle:{seed}"
    return Dataset(data.variables, data.rows[perm], prov)


def sample_from_ceg(model: StagedTree, n: int, seed: int) -> Dataset:
    """n independent root-to-sink walks using the model's stage probabilities."""
    if model.probabilities is None:
        raise ModelError("sampling needs edge probabilities; none are specified")
    tree = model.tree
    rng = rng_stream(seed, STREAM_SAMPLE)
    rows = np.zeros((n, tree.n_cuts), dtype=np.int64)
    kmax = max(tree.cards)
    cum = np.ones((model.n_stages, kmax))
    for i, p in enumerate(model.probabilities):
        c = np.cumsum(p)
        c[-1] = 1.0
        cum[i, :len(c)] = c
    u = rng.random((n, tree.n_cuts))
    for d in range(tree.n_cuts):
        sit = tree.path_situations(rows)[:, d] if d else np.zeros(n, dtype=np.int64)
        stage = model.stage_of[sit]
        rows[:, d] = np.minimum((u[:, d, None] >= cum[stage, :tree.cards[d]]).sum(axis=1), tree.cards[d] - 1)
    return Dataset(tree.variables, rows, {"sampled": True, "seed": int(seed)})
