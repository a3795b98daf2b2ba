"""Event trees, staged trees and chain event graphs for stratified models.

Situations are identified by their root path: the tuple of level labels
leading to them from the root.  Inside the package every situation also has
an integer index in *tree order* (by depth, then lexicographically by level
index), which is what the numerical code works with.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "VariableSpec",
    "EventTree",
    "Staging",
    "StagedTree",
    "ChainEventGraph",
    "SINK",
    "build_event_tree",
    "compute_positions",
    "to_ceg",
    "edge_event_paths",
    "saturated_staging",
    "path_id",
    "parse_path_id",
    "ModelError",
]

SINK = -1
PATH_SEP = "/"


class ModelError(ValueError):
    """Raised for structurally invalid trees, stagings or model files."""


def path_id(path: Sequence[str]) -> str:
    """String form of a situation path; the root is the empty string."""
    return PATH_SEP.join(path)


def parse_path_id(text: str) -> tuple[str, ...]:
    return tuple(text.split(PATH_SEP)) if text else ()


@dataclass(frozen=True)
class VariableSpec:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.name:
            raise ModelError("variable name must be non-empty")
        if len(self.levels) < 2:
            raise ModelError(f"variable {self.name!r} needs at least 2 levels, got {len(self.levels)}")
        if len(set(self.levels)) != len(self.levels):
            raise ModelError(f"variable {self.name!r} has duplicate level names")
        for lev in self.levels:
            if not lev or PATH_SEP in lev:
                raise ModelError(f"invalid level name {lev!r} for {self.name!r}")

    @property
    def cardinality(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise ModelError(f"{level!r} is not a level of {self.name!r}") from None


class EventTree:
    """A stratified event tree over an ordered list of categorical variables.

    Cut ``d`` holds the situations at depth ``d``; each of them emits
    variable ``d``.  Leaves sit at depth ``n``.
    """

    def __init__(self, variables: Sequence[VariableSpec]):
        variables = tuple(variables)
        if not variables:
            raise ModelError("an event tree needs at least one variable")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate variable names in {names}")
        self.variables = variables
        self.cards = tuple(v.cardinality for v in variables)
        self.n_cuts = len(variables)

        sizes = [1]
        for k in self.cards[:-1]:
            sizes.append(sizes[-1] * k)
        self.cut_sizes = tuple(sizes)
        self.cut_offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)]))
        self.n_situations = self.cut_offsets[-1]
        self.n_leaves = sizes[-1] * self.cards[-1]

        # mixed-radix weights so that index within cut d = sum(row[i] * w[d][i])
        self._radix = []
        for d in range(self.n_cuts + 1):
            w = np.zeros(self.n_cuts, dtype=np.int64)
            acc = 1
            for i in reversed(range(d)):
                w[i] = acc
                acc *= self.cards[i]
            self._radix.append(w)

        self._paths: list[tuple[int, ...]] = []
        for d in range(self.n_cuts):
            self._paths.extend(itertools.product(*(range(k) for k in self.cards[:d])))

    # -- identification ---------------------------------------------------
    @property
    def root(self) -> tuple[str, ...]:
        return ()

    def cut_of(self, situation: int) -> int:
        return int(np.searchsorted(self.cut_offsets, situation, side="right") - 1)

    def cut_range(self, cut: int) -> range:
        return range(self.cut_offsets[cut], self.cut_offsets[cut + 1])

    def index_path(self, situation: int) -> tuple[int, ...]:
        return self._paths[situation]

    def label_path(self, situation: int) -> tuple[str, ...]:
        return tuple(self.variables[i].levels[j] for i, j in enumerate(self._paths[situation]))

    def situation_index(self, path: Sequence) -> int:
        """Index of a situation given a path of level labels or level indices."""
        d = len(path)
        if d >= self.n_cuts:
            raise ModelError(f"path {tuple(path)} is a leaf, not a situation")
        idx = 0
        for i, lev in enumerate(path):
            j = self.variables[i].index(lev) if isinstance(lev, str) else int(lev)
            if not 0 <= j < self.cards[i]:
                raise ModelError(f"level index {j} out of range for {self.variables[i].name!r}")
            idx = idx * self.cards[i] + j
        return self.cut_offsets[d] + idx

    def situation_of_id(self, text: str) -> int:
        return self.situation_index(parse_path_id(text))

    def situation_id(self, situation: int) -> str:
        return path_id(self.label_path(situation))

    def children(self, situation: int) -> list[int]:
        """Child situation indices, or SINK entries when the children are leaves."""
        d = self.cut_of(situation)
        k = self.cards[d]
        if d == self.n_cuts - 1:
            return [SINK] * k
        first = self.cut_offsets[d + 1] + (situation - self.cut_offsets[d]) * k
        return list(range(first, first + k))

    def path_situations(self, rows: np.ndarray) -> np.ndarray:
        """Situation index visited at every cut, for each row of level indices."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
        out = np.empty((rows.shape[0], self.n_cuts), dtype=np.int64)
        for d in range(self.n_cuts):
            out[:, d] = self.cut_offsets[d] + rows @ self._radix[d]
        return out

    # -- explicit graph view ---------------------------------------------
    @property
    def situations(self) -> list[tuple[str, ...]]:
        return [self.label_path(i) for i in range(self.n_situations)]

    @property
    def leaves(self) -> list[tuple[str, ...]]:
        return [tuple(self.variables[i].levels[j] for i, j in enumerate(p))
                for p in itertools.product(*(range(k) for k in self.cards))]

    @property
    def edges(self) -> list[tuple[tuple[str, ...], tuple[str, ...], str]]:
        out = []
        for s in range(self.n_situations):
            p = self.label_path(s)
            for lev in self.variables[len(p)].levels:
                out.append((p, p + (lev,), lev))
        return out

    def __repr__(self):
        return f"EventTree({', '.join(f'{v.name}[{v.cardinality}]' for v in self.variables)})"


def build_event_tree(variables: Iterable[VariableSpec]) -> EventTree:
    return EventTree(list(variables))


def edge_event_paths(tree: EventTree, edge: tuple[Sequence[str], str]) -> set[tuple[str, ...]]:
    """Root-to-leaf paths passing through ``edge = (situation path, level)``."""
    parent, level = edge
    parent = tuple(parent)
    if len(parent) >= tree.n_cuts:
        raise ModelError(f"unknown edge {edge!r}")
    try:
        tree.situation_index(parent)
        tree.variables[len(parent)].index(level)
    except ModelError as exc:
        raise ModelError(f"unknown edge {edge!r}") from exc
    prefix = parent + (level,)
    rest = tree.variables[len(prefix):]
    return {prefix + tail for tail in itertools.product(*(v.levels for v in rest))}


@dataclass(frozen=True)
class Staging:
    """Partition of every cut's situations into stages.

    ``blocks[d]`` is a tuple of blocks for cut ``d``; each block is a sorted
    tuple of situation indices.  ``null[d]`` holds the situations pooled into
    that cut's null stage (usually empty).
    """

    blocks: tuple[tuple[tuple[int, ...], ...], ...]
    null: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        blocks = tuple(tuple(tuple(sorted(b)) for b in cut) for cut in self.blocks)
        null = tuple(tuple(sorted(n)) for n in self.null) or tuple(() for _ in blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "null", null)

    def stages(self) -> list[tuple[int, tuple[int, ...]]]:
        """All stages as (cut, members), cut by cut, null stage last in its cut."""
        out = []
        for d, cut in enumerate(self.blocks):
            out.extend((d, b) for b in cut)
            if self.null[d]:
                out.append((d, self.null[d]))
        return out

    def replace_cut(self, cut: int, blocks: Iterable[Iterable[int]]) -> "Staging":
        new = list(self.blocks)
        new[cut] = tuple(tuple(sorted(b)) for b in blocks)
        return Staging(tuple(new), self.null)

    def canonical_cut(self, cut: int) -> tuple[tuple[int, ...], ...]:
        return tuple(sorted(self.blocks[cut]))

    def validate(self, tree: EventTree) -> None:
        if len(self.blocks) != tree.n_cuts or len(self.null) != tree.n_cuts:
            raise ModelError(f"staging has {len(self.blocks)} cuts, tree has {tree.n_cuts}")
        for d in range(tree.n_cuts):
            members = [s for b in self.blocks[d] for s in b] + list(self.null[d])
            expected = set(tree.cut_range(d))
            if any(len(b) == 0 for b in self.blocks[d]):
                raise ModelError(f"empty stage in cut {d}")
            if len(members) != len(set(members)):
                raise ModelError(f"stages overlap in cut {d}")
            stray = set(members) - expected
            if stray:
                raise ModelError(
                    f"cut {d} ({tree.variables[d].name}) contains situations from another cut: "
                    f"{sorted(tree.situation_id(s) if 0 <= s < tree.n_situations else s for s in stray)}")
            if set(members) != expected:
                raise ModelError(f"stages of cut {d} do not cover the cut")


def saturated_staging(tree: EventTree) -> Staging:
    return Staging(tuple(tuple((s,) for s in tree.cut_range(d)) for d in range(tree.n_cuts)))


@dataclass(frozen=True)
class StagedTree:
    """An event tree with a staging and optional per-stage parameters.

    ``priors`` holds Dirichlet hyperparameters and ``probabilities`` floret
    probabilities, both as one vector per stage in ``staging.stages()``
    order.
    """

    tree: EventTree
    staging: Staging
    priors: tuple[np.ndarray, ...] | None = None
    probabilities: tuple[np.ndarray, ...] | None = None
    stage_of: np.ndarray = field(init=False, repr=False, compare=False)
    stage_cut: tuple[int, ...] = field(init=False, repr=False, compare=False)
    stage_members: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.staging.validate(self.tree)
        stages = self.staging.stages()
        stage_of = np.full(self.tree.n_situations, -1, dtype=np.int64)
        for i, (_, members) in enumerate(stages):
            stage_of[list(members)] = i
        stage_of.setflags(write=False)
        object.__setattr__(self, "stage_of", stage_of)
        object.__setattr__(self, "stage_cut", tuple(d for d, _ in stages))
        object.__setattr__(self, "stage_members", tuple(m for _, m in stages))
        for attr in ("priors", "probabilities"):
            vecs = getattr(self, attr)
            if vecs is None:
                continue
            vecs = tuple(np.array(v, dtype=float) for v in vecs)
            if len(vecs) != len(stages):
                raise ModelError(f"{attr}: expected {len(stages)} stage vectors, got {len(vecs)}")
            for i, v in enumerate(vecs):
                k = self.tree.cards[self.stage_cut[i]]
                if v.shape != (k,):
                    raise ModelError(f"{attr}: stage {i} needs {k} entries, got {v.shape}")
                if np.any(v < 0) or not np.all(np.isfinite(v)):
                    raise ModelError(f"{attr}: stage {i} has negative or non-finite entries")
                if attr == "probabilities" and abs(v.sum() - 1.0) > 1e-12:
                    raise ModelError(f"probabilities of stage {i} sum to {v.sum()!r}, not 1")
                v.setflags(write=False)
            object.__setattr__(self, attr, vecs)

    @property
    def n_stages(self) -> int:
        return len(self.stage_members)

    def stage_name(self, stage: int) -> str:
        return f"u{stage}"

    def with_priors(self, priors) -> "StagedTree":
        return StagedTree(self.tree, self.staging, tuple(priors), self.probabilities)

    def with_probabilities(self, probabilities) -> "StagedTree":
        return StagedTree(self.tree, self.staging, self.priors, tuple(probabilities))

    def with_staging(self, staging: Staging) -> "StagedTree":
        return StagedTree(self.tree, staging)

    def floret_probabilities(self, situation: int) -> np.ndarray:
        if self.probabilities is None:
            raise ModelError("staged tree has no edge probabilities")
        return self.probabilities[self.stage_of[situation]]


def compute_positions(st: StagedTree) -> np.ndarray:
    """Map every situation to a position id (root is position 0).

    Two situations share a position when they are in the same stage and
    their children, level by level, share positions.  Leaves all collapse
    into the sink.  Positions are numbered cut by cut in tree order.
    """
    tree = st.tree
    raw = np.full(tree.n_situations, -1, dtype=np.int64)
    next_id = 0
    for d in reversed(range(tree.n_cuts)):
        seen: dict[tuple, int] = {}
        for s in tree.cut_range(d):
            key = (int(st.stage_of[s]), tuple(c if c == SINK else int(raw[c]) for c in tree.children(s)))
            if key not in seen:
                seen[key] = next_id
                next_id += 1
            raw[s] = seen[key]
    # renumber top-down in tree order
    order: dict[int, int] = {}
    pos = np.empty_like(raw)
    for s in range(tree.n_situations):
        pos[s] = order.setdefault(int(raw[s]), len(order))
    return pos


@dataclass(frozen=True)
class ChainEventGraph:
    """Quotient of a staged tree by its positions.

    ``edges`` lists ``(position, level index, child position)`` with
    ``SINK`` for the merged leaves.
    """

    staged_tree: StagedTree
    position_of: np.ndarray
    positions: tuple[tuple[int, ...], ...]
    position_stage: tuple[int, ...]
    position_cut: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]

    @property
    def tree(self) -> EventTree:
        return self.staged_tree.tree

    @property
    def n_positions(self) -> int:
        return len(self.positions)

    def out_edges(self, w: int) -> list[tuple[int, int, int]]:
        k = self.tree.cards[self.position_cut[w]]
        first = self._edge_start[w]
        return list(self.edges[first:first + k])

    @property
    def _edge_start(self):
        starts, acc = [], 0
        for w in range(self.n_positions):
            starts.append(acc)
            acc += self.tree.cards[self.position_cut[w]]
        return starts

    def child_table(self) -> np.ndarray:
        """(n_positions, max K) array of child positions, SINK for leaves, -2 padding."""
        kmax = max(self.tree.cards)
        out = np.full((self.n_positions, kmax), -2, dtype=np.int64)
        for w, j, c in self.edges:
            out[w, j] = c
        return out

    def edge_label(self, w: int, j: int) -> float:
        return float(self.staged_tree.probabilities[self.position_stage[w]][j])

    def position_name(self, w: int) -> str:
        return "w_inf" if w == SINK else f"w{w}"


def to_ceg(st: StagedTree) -> ChainEventGraph:
    tree = st.tree
    pos = compute_positions(st)
    n_pos = int(pos.max()) + 1
    members: list[list[int]] = [[] for _ in range(n_pos)]
    for s in range(tree.n_situations):
        members[pos[s]].append(s)
    edges = []
    stage, cut = [], []
    for w in range(n_pos):
        rep = members[w][0]
        stage.append(int(st.stage_of[rep]))
        cut.append(tree.cut_of(rep))
        for j, c in enumerate(tree.children(rep)):
            edges.append((w, j, SINK if c == SINK else int(pos[c])))
    pos.setflags(write=False)
    return ChainEventGraph(st, pos, tuple(tuple(m) for m in members), tuple(stage), tuple(cut), tuple(edges))


def staging_from_ids(tree: EventTree, cuts: Sequence[Sequence[Sequence[str]]],
                     null: Sequence[str] | None = None) -> Staging:
    """Build a staging from per-cut lists of path-id blocks."""
    if len(cuts) != tree.n_cuts:
        raise ModelError(f"staging lists {len(cuts)} cuts, model has {tree.n_cuts} variables")
    null_by_cut: list[list[int]] = [[] for _ in range(tree.n_cuts)]
    for text in null or ():
        s = tree.situation_of_id(text)
        null_by_cut[tree.cut_of(s)].append(s)
    blocks = []
    for cut in cuts:
        blocks.append(tuple(tuple(tree.situation_of_id(t) for t in block) for block in cut))
    staging = Staging(tuple(blocks), tuple(tuple(n) for n in null_by_cut))
    staging.validate(tree)
    return staging


def stage_colouring(tree: EventTree, groups: Mapping[int, Sequence[Sequence[int]]]) -> Staging:
    """Saturated staging except for the cuts given in ``groups``."""
    st = saturated_staging(tree)
    for d, blocks in groups.items():
        st = st.replace_cut(d, blocks)
    st.validate(tree)
    return st
