"""Prequential monitors for stratified chain event graphs.

Coarse to fine: the global monitor scores whole cases, the staging monitor
weighs alternative stagings of one cut, position monitors score the
florets of one position, and situation monitors check that the situations
pooled in a stage behave alike.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .data import Dataset
from .dirichlet import (BetaState, DirichletState, beta_binomial, model_prior, situation_counts,
                        situation_priors, stage_counts, stage_log_ml)
from .scoring import MonitorTrace, fmt_float
from .tree import SINK, ChainEventGraph, ModelError, StagedTree, Staging, to_ceg

log = logging.getLogger(__name__)

__all__ = [
    "ceg_global_monitor",
    "hasse_neighbors",
    "staging_monitor",
    "StagingMonitorResult",
    "position_monitor_marginal",
    "position_monitor_conditional",
    "propagate_evidence",
    "Transporter",
    "EvidenceError",
    "loo_situation_monitor",
    "LooReport",
    "LooRow",
    "situation_order_monitor",
    "OrderRow",
]


class EvidenceError(ValueError):
    """Evidence of probability zero; ``cut`` is the first cut where it is blocked."""

    def __init__(self, message: str, cut: int):
        super().__init__(message)
        self.cut = cut


def _split(model) -> tuple[StagedTree, ChainEventGraph]:
    if isinstance(model, ChainEventGraph):
        return model.staged_tree, model
    return model, to_ceg(model)


def _cut_index(st: StagedTree, cut) -> int:
    if isinstance(cut, str):
        names = [v.name for v in st.tree.variables]
        if cut not in names:
            raise ModelError(f"unknown cut {cut!r}; variables are {names}")
        return names.index(cut)
    if not 0 <= int(cut) < st.tree.n_cuts:
        raise ModelError(f"cut {cut} out of range")
    return int(cut)


def _aligned(st: StagedTree, data: Dataset) -> Dataset:
    return data.reorder_columns(st.tree.variables)


# -- global ---------------------------------------------------------------

def ceg_global_monitor(model, data: Dataset, ess: float | None = None, quotient: bool = True
                       ) -> tuple[MonitorTrace, float]:
    """Surprise of each case's full path under the one-step-ahead predictive.

    The expectation and variance are taken over all root-to-sink paths.
    With ``quotient`` they are computed on the CEG's positions, otherwise
    on the tree's situations; the numbers agree.
    """
    st, ceg = _split(model)
    data = _aligned(st, data)
    prior = model_prior(st, ess)
    A, C, _ = prior.padded()
    tree = st.tree
    sits = tree.path_situations(data.rows) if len(data) else np.empty((0, tree.n_cuts), dtype=np.int64)
    if quotient:
        node_stage = np.array(ceg.position_stage)
        node_nout = np.array([tree.cards[c] for c in ceg.position_cut])
        node_child = ceg.child_table()
        obs_node = ceg.position_of[sits]
    else:
        node_stage = st.stage_of
        node_nout = np.array([tree.cards[tree.cut_of(s)] for s in range(tree.n_situations)])
        node_child = np.full((tree.n_situations, max(tree.cards)), -2, dtype=np.int64)
        for s in range(tree.n_situations):
            kids = tree.children(s)
            node_child[s, :len(kids)] = kids
        obs_node = sits
    S, E, V = kernels.path_fold(A, C, node_stage, node_nout, node_child, obs_node, data.rows, True)
    trace = MonitorTrace.from_arrays("global", np.arange(1, len(data) + 1), S, E, V)
    return trace, trace.total


# -- staging --------------------------------------------------------------

def _bipartitions(block: tuple[int, ...], max_block: int):
    if len(block) < 2:
        return
    if len(block) > max_block:
        for s in block:
            yield (s,), tuple(x for x in block if x != s)
        return
    first, rest = block[0], block[1:]
    for r in range(len(rest)):  # r = how many of ``rest`` join ``first``
        for combo in itertools.combinations(rest, r):
            a = (first,) + combo
            yield a, tuple(x for x in rest if x not in combo)


def hasse_neighbors(staging: Staging, cut: int, max_split_block: int = 12) -> list[Staging]:
    """Stagings one merge or one split away within ``cut``.

    Blocks larger than ``max_split_block`` only offer singleton-vs-rest
    splits.  The null stage never moves.
    """
    blocks = list(staging.blocks[cut])
    out = []
    for i, j in itertools.combinations(range(len(blocks)), 2):
        merged = [b for k, b in enumerate(blocks) if k not in (i, j)] + [blocks[i] + blocks[j]]
        out.append(staging.replace_cut(cut, merged))
    for i, b in enumerate(blocks):
        for a, c in _bipartitions(b, max_split_block):
            out.append(staging.replace_cut(cut, blocks[:i] + [a, c] + blocks[i + 1:]))
    return out


@dataclass
class StagingMonitorResult:
    """Posterior weight of each candidate staging after each case (row 0 = prior)."""

    cut: int
    candidates: list[Staging]
    weights: np.ndarray
    staged_tree: StagedTree = field(repr=False)

    def labels(self) -> list[str]:
        return [format_cut_blocks(self.staged_tree, s, self.cut) for s in self.candidates]

    def dominant(self) -> np.ndarray:
        return self.weights.argmax(axis=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("m,candidate_id,posterior\n")
            for m, row in enumerate(self.weights):
                for c, w in enumerate(row):
                    fh.write(f"{m},{c},{fmt_float(float(w))}\n")

    def sidecar(self) -> dict:
        tree = self.staged_tree.tree
        return {
            "cut": tree.variables[self.cut].name,
            "candidates": [
                {"id": i, "label": lab,
                 "blocks": [[tree.situation_id(s) for s in b] for b in cand.blocks[self.cut]]}
                for i, (cand, lab) in enumerate(zip(self.candidates, self.labels()))
            ],
        }

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2)
            fh.write("\n")


def format_cut_blocks(st: StagedTree, staging: Staging, cut: int) -> str:
    """Blocks as 1-based indices within the cut, e.g. ``(1)(23)(4)``."""
    off = st.tree.cut_offsets[cut]
    sep = "" if st.tree.cut_sizes[cut] < 10 else ","
    return "".join("(" + sep.join(str(s - off + 1) for s in b) + ")" for b in sorted(staging.blocks[cut]))


def staging_monitor(model, data: Dataset, cut, candidates: Sequence[Staging] | None = None,
                    ess: float | None = None, max_split_block: int = 12) -> StagingMonitorResult:
    """Sequential Bayes over a fixed set of stagings of one cut.

    Uniform prior over candidates; each case multiplies a candidate's weight
    by the Dirichlet predictive of the candidate stage holding the case's
    situation.  By default the candidates are the model's own staging and
    its Hasse neighbours.
    """
    st, _ = _split(model)
    d = _cut_index(st, cut)
    data = _aligned(st, data)
    if candidates is None:
        candidates = [st.staging] + hasse_neighbors(st.staging, d, max_split_block)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("staging monitor needs at least one candidate staging")
    tree = st.tree
    sit_prior = situation_priors(st, ess)
    situation = tree.path_situations(data.rows)[:, d] if len(data) else np.empty(0, dtype=np.int64)
    edges = data.rows[:, d]
    logw = np.zeros((len(data) + 1, len(candidates)))
    for c, cand in enumerate(candidates):
        cand.validate(tree)
        blocks = list(cand.blocks[d]) + ([cand.null[d]] if cand.null[d] else [])
        local = np.empty(tree.n_situations, dtype=np.int64)
        alpha = np.zeros((len(blocks), tree.cards[d]))
        for i, b in enumerate(blocks):
            local[list(b)] = i
            alpha[i] = np.sum([sit_prior[s] for s in b], axis=0)
        S, _, _ = kernels.floret_fold(alpha, np.zeros_like(alpha), [tree.cards[d]] * len(blocks),
                                      local[situation], edges)
        logw[1:, c] = -np.cumsum(S)
    logw -= np.log(len(candidates))
    weights = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    return StagingMonitorResult(d, candidates, weights, st)


# -- positions ------------------------------------------------------------

def _check_position(ceg: ChainEventGraph, position: int) -> int:
    if not 0 <= position < ceg.n_positions:
        raise ModelError(f"unknown position w{position}")
    return position


def _arrival(ceg: ChainEventGraph, theta: list[np.ndarray], target: int) -> float:
    """Probability of passing through ``target`` under stage probabilities ``theta``."""
    cut = ceg.position_cut[target]
    mass = np.zeros(ceg.n_positions)
    mass[0] = 1.0
    for w in range(ceg.n_positions):
        if ceg.position_cut[w] >= cut:
            break
        p = theta[ceg.position_stage[w]]
        for _, j, c in ceg.out_edges(w):
            if c != SINK:
                mass[c] += mass[w] * p[j]
    return float(mass[target])


def position_monitor_marginal(model, data: Dataset, position: int, ess: float | None = None) -> MonitorTrace:
    """Score the outcome at ``position`` for cases whose path reaches it.

    Learning uses every earlier case.  The predictive over the emanating
    edges is the path-sum through each edge divided by the arrival
    probability; the undivided path sums are kept in ``trace.extra``.
    """
    st, ceg = _split(model)
    w = _check_position(ceg, position)
    data = _aligned(st, data)
    tree = st.tree
    cut = ceg.position_cut[w]
    u = ceg.position_stage[w]
    prior = model_prior(st, ess)
    sits = tree.path_situations(data.rows) if len(data) else np.empty((0, tree.n_cuts), dtype=np.int64)
    in_stage = st.stage_of[sits[:, cut]] == u
    reach = ceg.position_of[sits[:, cut]] == w
    idx = np.flatnonzero(in_stage)
    alpha = np.ascontiguousarray(prior.alpha[u][None, :])
    S, E, V = kernels.floret_fold(alpha, np.zeros_like(alpha), [tree.cards[cut]], np.zeros(len(idx)),
                                  data.rows[idx, cut], reach[idx])
    keep = reach[idx]
    scored = idx[keep]
    # predictives and raw path sums need the full running posterior
    post = [a.astype(float).copy() for a in prior.alpha]
    preds, path_sums = [], []
    case_stage = st.stage_of[sits] if len(data) else np.empty((0, tree.n_cuts), dtype=np.int64)
    want = set(scored.tolist())
    for m in range(len(data)):
        if m in want:
            theta = [p / p.sum() for p in post]
            pr = theta[u]
            preds.append(pr)
            path_sums.append(_arrival(ceg, theta, w) * pr)
        for dd in range(tree.n_cuts):
            post[case_stage[m, dd]][data.rows[m, dd]] += 1.0
    trace = MonitorTrace.from_arrays(f"w{w}", scored + 1, S[keep], E[keep], V[keep], predictives=preds)
    trace.extra["path_sum"] = np.array(path_sums).reshape(len(scored), tree.cards[cut])
    return trace


@dataclass
class Transporter:
    """Evidence-consistent part of a CEG with back-propagated potentials.

    ``phi[w]`` is the probability of the evidence below position ``w``;
    ``updated[(w, j)]`` is the conditional probability of edge ``j`` at
    ``w`` given the evidence, for every retained edge.
    """

    ceg: ChainEventGraph = field(repr=False)
    evidence: dict
    phi: np.ndarray
    retained: list[tuple[int, int, int]]
    updated: dict[tuple[int, int], float]
    probability: float

    def floret(self, w: int) -> np.ndarray:
        k = self.ceg.tree.cards[self.ceg.position_cut[w]]
        return np.array([self.updated.get((w, j), 0.0) for j in range(k)])


def _allowed(tree, evidence: Mapping) -> list[np.ndarray]:
    allowed = [np.ones(k, dtype=bool) for k in tree.cards]
    names = [v.name for v in tree.variables]
    for name, level in evidence.items():
        if name not in names:
            raise ModelError(f"evidence names unknown variable {name!r}")
        d = names.index(name)
        j = tree.variables[d].index(level) if isinstance(level, str) else int(level)
        allowed[d][:] = False
        allowed[d][j] = True
    return allowed


def _potentials(ceg: ChainEventGraph, theta, allowed) -> np.ndarray:
    phi = np.zeros(ceg.n_positions)
    for w in reversed(range(ceg.n_positions)):
        d = ceg.position_cut[w]
        p = theta[ceg.position_stage[w]]
        total = 0.0
        for _, j, c in ceg.out_edges(w):
            if allowed[d][j]:
                total += p[j] * (1.0 if c == SINK else phi[c])
        phi[w] = total
    return phi


def _theta_of(st: StagedTree, theta) -> list[np.ndarray]:
    if theta is not None:
        return [np.asarray(t, dtype=float) for t in theta]
    if st.probabilities is None:
        raise ModelError("propagation needs edge probabilities; the model has none")
    return list(st.probabilities)


def propagate_evidence(model, evidence: Mapping[str, str], theta=None) -> Transporter:
    """Condition the CEG on a partial assignment ``{variable: level}``."""
    st, ceg = _split(model)
    theta = _theta_of(st, theta)
    allowed = _allowed(st.tree, evidence)
    phi = _potentials(ceg, theta, allowed)
    if phi[0] <= 0:
        cut = _first_blocked_cut(ceg, theta, allowed)
        raise EvidenceError(
            f"evidence {dict(evidence)} has probability zero; first blocked at cut {cut} "
            f"({st.tree.variables[cut].name})", cut)
    reach = np.zeros(ceg.n_positions, dtype=bool)
    reach[0] = True
    retained, updated = [], {}
    for w in range(ceg.n_positions):
        if not reach[w]:
            continue
        d = ceg.position_cut[w]
        p = theta[ceg.position_stage[w]]
        for _, j, c in ceg.out_edges(w):
            below = 1.0 if c == SINK else phi[c]
            if not allowed[d][j] or p[j] * below <= 0:
                continue
            retained.append((w, j, c))
            updated[(w, j)] = p[j] * below / phi[w]
            if c != SINK:
                reach[c] = True
    return Transporter(ceg, dict(evidence), phi, retained, updated, float(phi[0]))


def _first_blocked_cut(ceg: ChainEventGraph, theta, allowed) -> int:
    mass = np.zeros(ceg.n_positions)
    mass[0] = 1.0
    n_cuts = ceg.tree.n_cuts
    for d in range(n_cuts):
        reached = 0.0
        for w in range(ceg.n_positions):
            if ceg.position_cut[w] != d or mass[w] <= 0:
                continue
            p = theta[ceg.position_stage[w]]
            for _, j, c in ceg.out_edges(w):
                if allowed[d][j] and p[j] > 0:
                    reached += mass[w] * p[j]
                    if c != SINK:
                        mass[c] += mass[w] * p[j]
        if reached <= 0:
            return d
    return n_cuts - 1


def position_monitor_conditional(model, data: Dataset, position: int, ess: float | None = None) -> MonitorTrace:
    """Like the marginal monitor, but the predictive at ``position`` also
    conditions on every other value of the case (upstream and downstream)."""
    st, ceg = _split(model)
    w = _check_position(ceg, position)
    data = _aligned(st, data)
    tree = st.tree
    cut = ceg.position_cut[w]
    prior = model_prior(st, ess)
    post = [a.astype(float).copy() for a in prior.alpha]
    sits = tree.path_situations(data.rows) if len(data) else np.empty((0, tree.n_cuts), dtype=np.int64)
    case_stage = st.stage_of[sits] if len(data) else sits
    reach = ceg.position_of[sits[:, cut]] == w if len(data) else np.zeros(0, dtype=bool)
    ms, steps, preds = [], [], []
    for m in range(len(data)):
        if reach[m]:
            theta = [p / p.sum() for p in post]
            allowed = [np.zeros(k, dtype=bool) for k in tree.cards]
            for dd in range(tree.n_cuts):
                if dd == cut:
                    allowed[dd][:] = True
                else:
                    allowed[dd][data.rows[m, dd]] = True
            phi = _potentials(ceg, theta, allowed)
            pr = theta[ceg.position_stage[w]].copy()
            for _, j, c in ceg.out_edges(w):
                pr[j] *= 1.0 if c == SINK else phi[c]
            z = pr.sum()
            k = data.rows[m, cut]
            ms.append(m + 1)
            if z <= 0:
                steps.append((math.inf, 0.0, 0.0))
                preds.append(np.full(len(pr), np.nan))
            else:
                pr = pr / z
                preds.append(pr)
                nz = pr[pr > 0]
                lg = np.log(nz)
                e = float(-(nz * lg).sum())
                steps.append((math.inf if pr[k] <= 0 else -math.log(pr[k]), e, float((nz * lg * lg).sum() - e * e)))
        for dd in range(tree.n_cuts):
            post[case_stage[m, dd]][data.rows[m, dd]] += 1.0
    arr = np.array(steps).reshape(-1, 3)
    return MonitorTrace.from_arrays(f"w{w}:conditional", ms, arr[:, 0], arr[:, 1], arr[:, 2], predictives=preds)


# -- situations -----------------------------------------------------------

@dataclass(frozen=True)
class LooRow:
    stage: str
    situation: str
    n: int
    Q: float
    expected_prop: float
    observed_prop: float
    lower: float
    upper: float
    note: str = ""


@dataclass
class LooReport:
    stage: str
    level: str
    rows: list[LooRow]
    notice: str = ""

    def write_csv(self, path_or_file, header=True) -> None:
        lines = ["stage,situation,n,Q,expected_prop,observed_prop\n"] if header else []
        for r in self.rows:
            lines.append(f"{r.stage},{_csv_quote(r.situation)},{r.n},{fmt_float(r.Q)},"
                         f"{fmt_float(r.expected_prop)},{fmt_float(r.observed_prop)}\n")
        _write_lines(path_or_file, lines)


def _csv_quote(text: str) -> str:
    return f'"{text}"' if any(ch in text for ch in ',"\n') else text


def _write_lines(path_or_file, lines) -> None:
    if hasattr(path_or_file, "write"):
        path_or_file.writelines(lines)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.writelines(lines)


def _level_index(st: StagedTree, stage: int, level) -> tuple[int, str]:
    var = st.tree.variables[st.stage_cut[stage]]
    if level is None:
        return var.cardinality - 1, var.levels[-1]
    j = var.index(level) if isinstance(level, str) else int(level)
    return j, var.levels[j]


def _stage_index(st: StagedTree, stage) -> int:
    if isinstance(stage, str):
        if not (stage.startswith("u") and stage[1:].isdigit()):
            raise ModelError(f"stage ids look like 'u3', got {stage!r}")
        stage = int(stage[1:])
    if not 0 <= stage < st.n_stages:
        raise ModelError(f"unknown stage u{stage}")
    return int(stage)


def _beta_binomial_interval(prior: BetaState, n: int, level: float = 0.95) -> tuple[int, int]:
    pmf = np.array([beta_binomial(prior, n, k) for k in range(n + 1)])
    cdf = np.cumsum(pmf)
    lo = int(np.searchsorted(cdf, (1 - level) / 2))
    hi = int(np.searchsorted(cdf, 1 - (1 - level) / 2))
    return lo, min(hi, n)


def loo_situation_monitor(model, data: Dataset, stage, level=None, ess: float | None = None) -> LooReport:
    """Leave-one-situation-out Bayes factor contributions within a stage.

    For each member situation: Q = log f(stage counts without it) - log f(all
    stage counts), under the stage prior; and the Beta posterior mean of the
    level-of-interest proportion learned without it, with a 95% predictive
    band, next to the proportion observed in it.
    """
    st, _ = _split(model)
    u = _stage_index(st, stage)
    data = _aligned(st, data)
    j, lname = _level_index(st, u, level)
    members = st.stage_members[u]
    name = st.stage_name(u)
    if len(members) < 2:
        notice = f"{name} has a single situation; leave-one-out is undefined and skipped"
        log.info(notice)
        return LooReport(name, lname, [], notice)
    prior = model_prior(st, ess).alpha[u]
    sit = situation_counts(st, data.rows)
    total = np.sum([sit[s] for s in members], axis=0)
    full = stage_log_ml(prior, total)
    rows = []
    for s in members:
        y = sit[s]
        rest = total - y
        q = stage_log_ml(prior, rest) - full
        a = prior[j] + rest[j]
        b = float((prior + rest).sum() - a)
        n = int(y.sum())
        note = ""
        if n == 0:
            q, note = 0.0, "unpopulated"
            observed = math.nan
            lo = hi = math.nan
        else:
            observed = y[j] / n
            klo, khi = _beta_binomial_interval(BetaState(a, b), n)
            lo, hi = klo / n, khi / n
        rows.append(LooRow(name, st.tree.situation_id(s), n, float(q), a / (a + b), observed, lo, hi, note))
    return LooReport(name, lname, rows)


@dataclass(frozen=True)
class OrderRow:
    stage: str
    situation: str
    order_index: int
    n: int
    k: int
    prob: float
    surprise: float


def write_order_csv(rows: Sequence[OrderRow], path_or_file, header=True) -> None:
    from .scoring import fmt_float
    lines = ["stage,situation,order_index,n,k,prob,surprise\n"] if header else []
    for r in rows:
        lines.append(f"{r.stage},{_csv_quote(r.situation)},{r.order_index},{r.n},{r.k},"
                     f"{fmt_float(r.prob)},{fmt_float(r.surprise)}\n")
    _write_lines(path_or_file, lines)


def situation_order_monitor(model, data: Dataset, stage, ordering: Sequence | None = None,
                            level=None, ess: float | None = None) -> list[OrderRow]:
    """Prequential check across the situations of a stage in a chosen order.

    The stage prior is collapsed to Beta(level of interest, everything else)
    and updated with the counts of the situations already visited; each
    situation's count of the level of interest is scored by the
    beta-binomial predictive for its number of cases.
    """
    st, _ = _split(model)
    u = _stage_index(st, stage)
    data = _aligned(st, data)
    j, _ = _level_index(st, u, level)
    members = st.stage_members[u]
    if ordering is None:
        order = list(members)
    else:
        order = [st.tree.situation_of_id(s) if isinstance(s, str) else int(s) for s in ordering]
    if sorted(order) != sorted(members):
        raise ModelError(f"ordering must be a permutation of the situations of {st.stage_name(u)}")
    prior = model_prior(st, ess).alpha[u]
    a = float(prior[j])
    b = float(prior.sum() - prior[j])
    sit = situation_counts(st, data.rows)
    out = []
    for i, s in enumerate(order, start=1):
        n = int(sit[s].sum())
        k = int(sit[s][j])
        p = beta_binomial(BetaState(a, b), n, k)
        out.append(OrderRow(st.stage_name(u), st.tree.situation_id(s), i, n, k, p,
                            math.inf if p <= 0 else -math.log(p)))
        a += k
        b += n - k
    return out


def stage_posterior(model, data: Dataset, ess: float | None = None) -> DirichletState:
    st, _ = _split(model)
    return model_prior(st, ess).with_counts(stage_counts(st, _aligned(st, data).rows))


def posterior_mean_model(model, data: Dataset, ess: float | None = None) -> StagedTree:
    """The staged tree with edge probabilities set to posterior means."""
    st, _ = _split(model)
    state = stage_posterior(st, data, ess)
    return st.with_probabilities(p / p.sum() for p in state.posterior)


__all__ += ["stage_posterior", "posterior_mean_model", "write_order_csv", "format_cut_blocks"]
