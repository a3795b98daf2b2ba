"""Greedy agglomerative hierarchical clustering (AHC) of stages within cuts."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .dirichlet import DirichletState, log_marginal_likelihood, situation_counts, situation_reference_prior, stage_log_ml
from .tree import EventTree, ModelError, StagedTree, Staging, saturated_staging

log = logging.getLogger(__name__)

__all__ = ["MergeStep", "SearchResult", "ahc_search", "score_merge"]

TIE_TOL = 1e-12


@dataclass(frozen=True)
class MergeStep:
    step: int
    cut: int
    block_a: tuple[int, ...]
    block_b: tuple[int, ...]
    delta: float
    score: float


@dataclass
class SearchResult:
    staged_tree: StagedTree
    log_ml: float
    history: list[MergeStep]

    @property
    def staging(self) -> Staging:
        return self.staged_tree.staging

    def write_history(self, path) -> None:
        tree = self.staged_tree.tree
        with open(path, "w", newline="") as fh:
            fh.write("step,cut,block_a,block_b,delta,score\n")
            for h in self.history:
                a = "|".join(tree.situation_id(s) for s in h.block_a)
                b = "|".join(tree.situation_id(s) for s in h.block_b)
                fh.write(f'{h.step},{tree.variables[h.cut].name},"{a}","{b}",{h.delta!r},{h.score!r}\n')


def score_merge(state: DirichletState, stage_a: int, stage_b: int, stage_cut=None) -> float:
    """Change in log marginal likelihood from pooling two stages (priors and counts add)."""
    if stage_cut is not None and stage_cut[stage_a] != stage_cut[stage_b]:
        raise ModelError(f"stages {stage_a} and {stage_b} lie in different cuts")
    a_alpha, b_alpha = state.alpha[stage_a], state.alpha[stage_b]
    if a_alpha.shape != b_alpha.shape:
        raise ModelError("stages with different out-degree cannot be merged")
    a_cnt, b_cnt = state.counts[stage_a], state.counts[stage_b]
    return (stage_log_ml(a_alpha + b_alpha, a_cnt + b_cnt)
            - stage_log_ml(a_alpha, a_cnt) - stage_log_ml(b_alpha, b_cnt))


def ahc_search(tree: EventTree, data: Dataset, ess: float | None = None) -> SearchResult:
    """Start from singleton stages and keep merging the best-scoring pair.

    Only pairs within the same cut are considered; the search stops when no
    merge increases the log marginal likelihood.  Equal gains are broken by
    the smaller pair of first situations in tree order.
    """
    ess = float(max(tree.cards)) if ess is None else float(ess)
    data = data.reorder_columns(tree.variables)
    base = StagedTree(tree, saturated_staging(tree))
    sit_alpha = situation_reference_prior(base, ess)
    sit_counts = situation_counts(base, data.rows) if len(data) else [np.zeros_like(a, dtype=np.int64) for a in sit_alpha]

    blocks = [[(s,) for s in tree.cut_range(d)] for d in range(tree.n_cuts)]
    alpha = {(s,): sit_alpha[s] for s in range(tree.n_situations)}
    counts = {(s,): sit_counts[s] for s in range(tree.n_situations)}
    term = {b: stage_log_ml(alpha[b], counts[b]) for b in alpha}
    score = sum(term.values())

    def gain(a, b):
        return stage_log_ml(alpha[a] + alpha[b], counts[a] + counts[b]) - term[a] - term[b]

    # pair cache per cut: (a, b) with a < b by first situation
    cache = [{(a, b): gain(a, b) for i, a in enumerate(bl) for b in bl[i + 1:]} for bl in blocks]
    history: list[MergeStep] = []
    while True:
        options = [(g, d, a, b) for d, pairs in enumerate(cache) for (a, b), g in pairs.items() if g > 0]
        if not options:
            break
        top = max(o[0] for o in options)
        tied = [o for o in options if o[0] >= top - TIE_TOL]
        if len(tied) > 1:
            log.info("%d merges tie at gain %.6g; taking the lexicographically smallest", len(tied), top)
        best = min(tied, key=lambda o: (tree.index_path(o[2][0]), tree.index_path(o[3][0])))
        g, d, a, b = best
        merged = tuple(sorted(a + b))
        alpha[merged] = alpha[a] + alpha[b]
        counts[merged] = counts[a] + counts[b]
        term[merged] = term[a] + term[b] + g
        score += g
        history.append(MergeStep(len(history) + 1, d, a, b, g, score))
        blocks[d] = sorted([x for x in blocks[d] if x not in (a, b)] + [merged])
        cache[d] = {k: v for k, v in cache[d].items() if a not in k and b not in k}
        for other in blocks[d]:
            if other == merged:
                continue
            pair = (other, merged) if other[0] < merged[0] else (merged, other)
            cache[d][pair] = gain(*pair)

    staging = Staging(tuple(tuple(bl) for bl in blocks))
    priors = [alpha[members] for _, members in staging.stages()]
    st = StagedTree(tree, staging, tuple(priors))
    final = log_marginal_likelihood(DirichletState(tuple(priors), tuple(counts[m] for _, m in staging.stages())))
    return SearchResult(st, final, history)
