"""Conjugate Dirichlet-multinomial learning on stages.

Log-Gamma values come from :func:`scipy.special.gammaln` (Cody/Lanczos
style, accurate to ~1e-15 relative for arguments >= 0.5; smaller
hyperparameters work but lose a few digits).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .tree import StagedTree

__all__ = [
    "DirichletState",
    "BetaState",
    "reference_prior",
    "situation_reference_prior",
    "situation_priors",
    "log_marginal_likelihood",
    "stage_log_ml",
    "bn_log_marginal_likelihood",
    "predictive",
    "observe",
    "beta_binomial",
    "stage_counts",
    "situation_counts",
]


@dataclass(frozen=True)
class DirichletState:
    """Prior hyperparameters and accumulated counts, one vector per stage."""

    alpha: tuple[np.ndarray, ...]
    counts: tuple[np.ndarray, ...]

    def __post_init__(self):
        alpha = tuple(np.array(a, dtype=float) for a in self.alpha)
        counts = tuple(np.array(c, dtype=np.int64) for c in self.counts)
        if len(alpha) != len(counts):
            raise ValueError("alpha and counts must list the same stages")
        for i, (a, c) in enumerate(zip(alpha, counts)):
            if a.shape != c.shape or a.ndim != 1:
                raise ValueError(f"stage {i}: alpha shape {a.shape} vs counts shape {c.shape}")
            if np.any(a < 0) or np.any(c < 0):
                raise ValueError(f"stage {i}: negative hyperparameter or count")
            a.setflags(write=False)
            c.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_prior(cls, alpha: Sequence[Sequence[float]]) -> "DirichletState":
        return cls(tuple(alpha), tuple(np.zeros(len(a), dtype=np.int64) for a in alpha))

    def with_counts(self, counts) -> "DirichletState":
        return DirichletState(self.alpha, tuple(counts))

    @property
    def posterior(self) -> tuple[np.ndarray, ...]:
        return tuple(a + c for a, c in zip(self.alpha, self.counts))

    @property
    def n_stages(self) -> int:
        return len(self.alpha)

    def padded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(alpha, counts, out-degree) as zero-padded float matrices for the kernels."""
        kmax = max(len(a) for a in self.alpha)
        A = np.zeros((self.n_stages, kmax))
        C = np.zeros((self.n_stages, kmax))
        for i, (a, c) in enumerate(zip(self.alpha, self.counts)):
            A[i, :len(a)] = a
            C[i, :len(c)] = c
        return A, C, np.array([len(a) for a in self.alpha], dtype=np.int64)


@dataclass(frozen=True)
class BetaState:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def situation_reference_prior(st: StagedTree, ess: float) -> list[np.ndarray]:
    """ess spread evenly over each situation's floret."""
    if not ess > 0:
        raise ValueError(f"effective sample size must be positive, got {ess}")
    tree = st.tree
    return [np.full(tree.cards[tree.cut_of(s)], ess / tree.cards[tree.cut_of(s)])
            for s in range(tree.n_situations)]


def situation_priors(st: StagedTree, ess: float | None = None) -> list[np.ndarray]:
    """Per-situation hyperparameters.

    Uses the reference rule when ``ess`` is given or the model carries no
    priors; otherwise splits each stage prior evenly among its members.
    """
    if ess is not None or st.priors is None:
        return situation_reference_prior(st, ess if ess is not None else default_ess(st))
    out: list[np.ndarray] = [None] * st.tree.n_situations  # type: ignore[list-item]
    for i, members in enumerate(st.stage_members):
        for s in members:
            out[s] = st.priors[i] / len(members)
    return out


def default_ess(st: StagedTree) -> float:
    """Largest cardinality among the variables."""
    return float(max(st.tree.cards))


def reference_prior(st: StagedTree, ess: float) -> DirichletState:
    """Stage prior = sum of its members' reference priors (ess / out-degree per edge)."""
    sit = situation_reference_prior(st, ess)
    alpha = [np.sum([sit[s] for s in members], axis=0) for members in st.stage_members]
    return DirichletState.from_prior(alpha)


def model_prior(st: StagedTree, ess: float | None = None) -> DirichletState:
    """The staged tree's own priors, or the reference prior when it has none."""
    if ess is None and st.priors is not None:
        return DirichletState.from_prior(st.priors)
    return reference_prior(st, ess if ess is not None else default_ess(st))


def stage_log_ml(alpha, counts) -> float:
    """Log marginal likelihood contribution of one stage (ordered sample)."""
    alpha = np.asarray(alpha, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if not counts.any():
        return 0.0
    post = alpha + counts
    return float(gammaln(alpha.sum()) - gammaln(post.sum()) + np.sum(gammaln(post) - gammaln(alpha)))


def log_marginal_likelihood(state: DirichletState) -> float:
    return float(sum(stage_log_ml(a, c) for a, c in zip(state.alpha, state.counts)))


def bn_log_marginal_likelihood(bn_state) -> float:
    """Log marginal likelihood of a discrete BN: each (node, parent config) row is a stage."""
    state = bn_state.dirichlet_state() if hasattr(bn_state, "dirichlet_state") else bn_state
    return log_marginal_likelihood(state)


def predictive(state: DirichletState, stage: int) -> np.ndarray:
    if not 0 <= stage < state.n_stages:
        raise IndexError(f"unknown stage {stage}")
    post = state.alpha[stage] + state.counts[stage]
    return post / post.sum()


def observe(state: DirichletState, stage: int, edge: int) -> DirichletState:
    if not 0 <= stage < state.n_stages:
        raise IndexError(f"unknown stage {stage}")
    if not 0 <= edge < len(state.counts[stage]):
        raise IndexError(f"edge {edge} out of range for stage {stage}")
    counts = list(state.counts)
    row = counts[stage].copy()
    row[edge] += 1
    counts[stage] = row
    return DirichletState(state.alpha, tuple(counts))


def beta_binomial(prior: BetaState, n: int, k: int) -> float:
    """P(k successes in n trials) under a Beta(alpha, beta) success probability."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    a, b = prior.alpha, prior.beta
    log_choose = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    logp = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + log_choose
            + math.lgamma(a + k) + math.lgamma(b + n - k) - math.lgamma(a + b + n))
    return math.exp(logp)


def situation_counts(st: StagedTree, rows: np.ndarray) -> list[np.ndarray]:
    """Edge counts per situation for a matrix of level indices."""
    tree = st.tree
    sits = tree.path_situations(rows) if len(rows) else np.empty((0, tree.n_cuts), dtype=np.int64)
    out = [np.zeros(tree.cards[tree.cut_of(s)], dtype=np.int64) for s in range(tree.n_situations)]
    for d in range(tree.n_cuts):
        if not len(rows):
            break
        flat = np.bincount((sits[:, d] - tree.cut_offsets[d]) * tree.cards[d] + rows[:, d],
                           minlength=tree.cut_sizes[d] * tree.cards[d]).reshape(-1, tree.cards[d])
        for i, s in enumerate(tree.cut_range(d)):
            out[s] = flat[i]
    return out


def stage_counts(st: StagedTree, rows: np.ndarray) -> list[np.ndarray]:
    sit = situation_counts(st, rows)
    return [np.sum([sit[s] for s in members], axis=0) for members in st.stage_members]


def posterior_state(st: StagedTree, rows: np.ndarray, ess: float | None = None) -> DirichletState:
    prior = model_prior(st, ess)
    return prior.with_counts(stage_counts(st, rows))
