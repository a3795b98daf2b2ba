"""Discrete Bayesian networks with Dirichlet CPT rows and their monitors.

Node monitors need predictive marginals and conditionals; these are
obtained by enumerating the full joint table, which is cheap for
desk-scale networks and refused above ``cell_cap`` cells.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .data import Dataset
from .dirichlet import DirichletState
from .scoring import MonitorTrace
from .tree import ModelError, StagedTree, Staging, VariableSpec, build_event_tree

__all__ = [
    "DiscreteBN",
    "InferenceTooLarge",
    "bn_global_monitor",
    "marginal_node_monitor",
    "conditional_node_monitor",
    "node_monitors",
    "parent_child_monitor",
    "bn_to_staged_tree",
]

DEFAULT_CELL_CAP = 10**6


class InferenceTooLarge(RuntimeError):
    pass


class DiscreteBN:
    """A DAG over categorical variables with one Dirichlet row per parent configuration.

    ``parents[name]`` is listed in variable order; parent configurations are
    numbered in mixed radix over that list (first parent most significant).
    """

    def __init__(self, variables: Sequence[VariableSpec], edges: Sequence[tuple[str, str]] = (),
                 priors: Mapping[str, Sequence[Sequence[float]]] | None = None,
                 ess: float | None = None, counts: Mapping[str, np.ndarray] | None = None):
        self.variables = tuple(variables)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate variable names in {names}")
        self.names = names
        self.edges = tuple((str(a), str(b)) for a, b in edges)
        for a, b in self.edges:
            for x in (a, b):
                if x not in names:
                    raise ModelError(f"edge mentions unknown variable {x!r}")
            if a == b:
                raise ModelError(f"self loop on {a!r}")
        self.parents = {n: tuple(p for p in names if (p, n) in set(self.edges)) for n in names}
        self.order = self._topological_order()
        self.cards = {v.name: v.cardinality for v in self.variables}
        self.n_configs = {n: int(np.prod([self.cards[p] for p in self.parents[n]], dtype=np.int64))
                          for n in names}
        self.ess = float(ess) if ess is not None else float(max(self.cards.values()))
        if not self.ess > 0:
            raise ValueError("effective sample size must be positive")
        self.alpha: dict[str, np.ndarray] = {}
        for n in names:
            shape = (self.n_configs[n], self.cards[n])
            if priors is not None and n in priors:
                a = np.array(priors[n], dtype=float)
                if a.shape != shape:
                    raise ModelError(f"prior for {n!r} must have shape {shape}, got {a.shape}")
                if np.any(a <= 0):
                    raise ModelError(f"prior for {n!r} must be positive")
            else:
                a = np.full(shape, self.ess / self.cards[n])
            self.alpha[n] = a
        self.counts = {n: np.zeros_like(self.alpha[n]) for n in names}
        if counts:
            for n, c in counts.items():
                self.counts[n] = np.array(c, dtype=float).reshape(self.alpha[n].shape)

    def _topological_order(self) -> list[str]:
        order, done = [], set()
        pending = list(self.names)
        while pending:
            ready = [n for n in pending if all(p in done for p in self.parents[n])]
            if not ready:
                raise ModelError(f"graph has a cycle among {pending}")
            for n in ready:
                order.append(n)
                done.add(n)
                pending.remove(n)
        return order

    def variable(self, name: str) -> VariableSpec:
        return self.variables[self.names.index(name)]

    def config_index(self, node: str, rows: np.ndarray) -> np.ndarray:
        """Parent-configuration row index for each data row (columns in variable order)."""
        rows = np.atleast_2d(rows)
        idx = np.zeros(rows.shape[0], dtype=np.int64)
        for p in self.parents[node]:
            idx = idx * self.cards[p] + rows[:, self.names.index(p)]
        return idx

    def config_of(self, node: str, assignment: Mapping[str, str] | Sequence[str]) -> int:
        pa = self.parents[node]
        if not isinstance(assignment, Mapping):
            assignment = dict(zip(pa, assignment))
        missing = [p for p in pa if p not in assignment]
        if missing or len(assignment) != len(pa):
            raise ModelError(f"parent configuration for {node!r} must assign exactly {list(pa)}")
        idx = 0
        for p in pa:
            idx = idx * self.cards[p] + self.variable(p).index(assignment[p])
        return idx

    def config_labels(self, node: str, j: int) -> tuple[str, ...]:
        out = []
        for p in reversed(self.parents[node]):
            out.append(self.variable(p).levels[j % self.cards[p]])
            j //= self.cards[p]
        return tuple(reversed(out))

    def dirichlet_state(self) -> DirichletState:
        alpha, counts = [], []
        for n in self.names:
            alpha.extend(self.alpha[n])
            counts.extend(self.counts[n].astype(np.int64))
        return DirichletState(tuple(alpha), tuple(counts))

    def fit(self, data: Dataset) -> "DiscreteBN":
        """Copy of this network with the data's counts added."""
        data = data.reorder_columns(self.variables)
        counts = {}
        for n in self.names:
            j = self.config_index(n, data.rows)
            k = data.rows[:, self.names.index(n)]
            c = self.counts[n].copy()
            np.add.at(c, (j, k), 1)
            counts[n] = c
        priors = {n: self.alpha[n] for n in self.names}
        return DiscreteBN(self.variables, self.edges, priors, self.ess, counts)

    def predictive_tables(self) -> dict[str, np.ndarray]:
        out = {}
        for n in self.names:
            post = self.alpha[n] + self.counts[n]
            out[n] = post / post.sum(axis=1, keepdims=True)
        return out

    def n_cells(self) -> int:
        return int(np.prod([self.cards[n] for n in self.names], dtype=object))

    def joint(self, cell_cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
        """Posterior-mean joint distribution over all cells, axes in variable order."""
        enum = _Enumerator(self, cell_cap)
        return enum.joint(self.predictive_tables()).reshape([self.cards[n] for n in self.names])

    def __repr__(self):
        return f"DiscreteBN({self.names}, edges={list(self.edges)})"


class _Enumerator:
    """Gather indices mapping joint cells to CPT entries."""

    def __init__(self, bn: DiscreteBN, cell_cap: int):
        n_cells = bn.n_cells()
        if n_cells > cell_cap:
            raise InferenceTooLarge(
                f"joint table has {n_cells} cells, above the cap of {cell_cap}; "
                "raise cell_cap (CLI: --cell-cap) or monitor a smaller sub-network")
        self.bn = bn
        cells = np.array(list(itertools.product(*(range(v.cardinality) for v in bn.variables))),
                         dtype=np.int64).reshape(-1, len(bn.variables))
        self.cells = cells
        self.radix = np.array([int(np.prod([v.cardinality for v in bn.variables[i + 1:]], dtype=np.int64))
                               for i in range(len(bn.variables))], dtype=np.int64)
        self.gather = {n: bn.config_index(n, cells) * bn.cards[n] + cells[:, bn.names.index(n)]
                       for n in bn.names}

    def joint(self, tables: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.ones(len(self.cells))
        for n, g in self.gather.items():
            out *= tables[n].ravel()[g]
        return out

    def cell_of(self, row: np.ndarray) -> int:
        return int(row @ self.radix)


def _entropy_moments(p: np.ndarray) -> tuple[float, float]:
    nz = p[p > 0]
    lg = np.log(nz)
    e = float(-(nz * lg).sum())
    return e, float((nz * lg * lg).sum() - e * e)


def _sequential(bn: DiscreteBN, data: Dataset, nodes: Sequence[str], cell_cap: int, want_global: bool):
    """Run the prequential pass once, scoring the global monitor and node monitors together."""
    data = data.reorder_columns(bn.variables)
    for n in nodes:
        if n not in bn.names:
            raise ModelError(f"unknown node {n!r}")
    enum = _Enumerator(bn, cell_cap) if (nodes or want_global) else None
    post = {n: bn.alpha[n] + bn.counts[n] for n in bn.names}
    M = len(data)
    glob = np.full((M, 3), np.nan)
    marg = {n: np.full((M, 3), np.nan) for n in nodes}
    cond = {n: np.full((M, 3), np.nan) for n in nodes}
    marg_pred = {n: np.zeros((M, bn.cards[n])) for n in nodes}
    cond_pred = {n: np.zeros((M, bn.cards[n])) for n in nodes}
    col = {n: bn.names.index(n) for n in bn.names}
    cfg = {n: bn.config_index(n, data.rows) for n in bn.names}
    for m in range(M):
        row = data.rows[m]
        tables = {n: post[n] / post[n].sum(axis=1, keepdims=True) for n in bn.names}
        joint = enum.joint(tables)
        here = enum.cell_of(row)
        if want_global:
            p = joint[here]
            e, v = _entropy_moments(joint)
            glob[m] = (np.inf if p <= 0 else -np.log(p), e, v)
        for n in nodes:
            i = col[n]
            k = row[i]
            pm = np.bincount(enum.cells[:, i], weights=joint, minlength=bn.cards[n])
            pm = pm / pm.sum()
            marg_pred[n][m] = pm
            e, v = _entropy_moments(pm)
            marg[n][m] = (np.inf if pm[k] <= 0 else -np.log(pm[k]), e, v)
            idx = here + (np.arange(bn.cards[n]) - k) * enum.radix[i]
            pc = joint[idx]
            z = pc.sum()
            if z <= 0:
                cond_pred[n][m] = np.nan
                cond[n][m] = (np.inf, 0.0, 0.0)
                continue
            pc = pc / z
            cond_pred[n][m] = pc
            e, v = _entropy_moments(pc)
            cond[n][m] = (np.inf if pc[k] <= 0 else -np.log(pc[k]), e, v)
        for n in bn.names:
            post[n][cfg[n][m], row[col[n]]] += 1.0
    return glob, marg, cond, marg_pred, cond_pred


def bn_global_monitor(bn: DiscreteBN, data: Dataset, cell_cap: int = DEFAULT_CELL_CAP
                      ) -> tuple[MonitorTrace, float]:
    """Per-case joint surprise; the total is minus the log marginal likelihood."""
    glob, *_ = _sequential(bn, data, (), cell_cap, True)
    trace = MonitorTrace.from_arrays("global", np.arange(1, len(data) + 1), glob[:, 0], glob[:, 1], glob[:, 2])
    return trace, trace.total


def node_monitors(bn: DiscreteBN, data: Dataset, nodes: Sequence[str] | None = None,
                  cell_cap: int = DEFAULT_CELL_CAP) -> dict[str, tuple[MonitorTrace, MonitorTrace]]:
    """(marginal, conditional) node monitor traces for each node."""
    nodes = list(nodes) if nodes is not None else list(bn.names)
    _, marg, cond, mp, cp = _sequential(bn, data, nodes, cell_cap, False)
    ms = np.arange(1, len(data) + 1)
    out = {}
    for n in nodes:
        out[n] = (MonitorTrace.from_arrays(f"{n}:marginal", ms, *marg[n].T, predictives=mp[n]),
                  MonitorTrace.from_arrays(f"{n}:conditional", ms, *cond[n].T, predictives=cp[n]))
    return out


def marginal_node_monitor(bn: DiscreteBN, data: Dataset, node: str,
                          cell_cap: int = DEFAULT_CELL_CAP) -> MonitorTrace:
    return node_monitors(bn, data, [node], cell_cap)[node][0]


def conditional_node_monitor(bn: DiscreteBN, data: Dataset, node: str,
                             cell_cap: int = DEFAULT_CELL_CAP) -> MonitorTrace:
    return node_monitors(bn, data, [node], cell_cap)[node][1]


def parent_child_monitor(bn: DiscreteBN, data: Dataset, node: str,
                         parent_config: Mapping[str, str] | Sequence[str]) -> MonitorTrace:
    """Score ``node`` only on cases whose parents take ``parent_config``.

    The predictive is the CPT row learned from earlier matching cases.  The
    trace's ``m`` is the case's position in the full dataset; raw
    predictives are kept on each row.
    """
    if node not in bn.names:
        raise ModelError(f"unknown node {node!r}")
    data = data.reorder_columns(bn.variables)
    j = bn.config_of(node, parent_config)
    match = np.flatnonzero(bn.config_index(node, data.rows) == j)
    label = ",".join(f"{p}={lev}" for p, lev in zip(bn.parents[node], bn.config_labels(node, j)))
    target = f"{node}|{label}" if label else node
    if not len(match):
        return MonitorTrace(target)
    alpha = np.ascontiguousarray(bn.alpha[node][j:j + 1])
    counts = np.array(bn.counts[node][j:j + 1], dtype=float)  # the fold writes into it
    outcomes = data.rows[match, bn.names.index(node)]
    preds = []
    post = alpha[0] + counts[0]
    for k in outcomes:
        preds.append(post / post.sum())
        post = post.copy()
        post[k] += 1
    S, E, V = kernels.floret_fold(alpha, counts, [bn.cards[node]], np.zeros(len(match)), outcomes)
    return MonitorTrace.from_arrays(target, match + 1, S, E, V, predictives=preds)


def bn_to_staged_tree(bn: DiscreteBN) -> StagedTree:
    """Staged tree (variables in the BN's variable order) encoding the same factorisation.

    Requires the variable order to be topological.  Situations at a cut are
    staged together when they agree on the emitted node's parents; stage
    priors are the matching CPT rows.
    """
    pos = {n: i for i, n in enumerate(bn.names)}
    for n in bn.names:
        if any(pos[p] > pos[n] for p in bn.parents[n]):
            raise ModelError("variable order must be topological to express the BN as a staged tree")
    tree = build_event_tree(bn.variables)
    blocks, priors = [], []
    for d, n in enumerate(bn.names):
        groups: dict[int, list[int]] = {}
        for s in tree.cut_range(d):
            path = np.array(tree.index_path(s) + (0,) * (tree.n_cuts - d), dtype=np.int64)
            groups.setdefault(int(bn.config_index(n, path[None, :])[0]), []).append(s)
        cut = []
        for j in sorted(groups):
            cut.append(tuple(groups[j]))
            priors.append(bn.alpha[n][j])
        blocks.append(tuple(cut))
    return StagedTree(tree, Staging(tuple(blocks)), tuple(priors))
