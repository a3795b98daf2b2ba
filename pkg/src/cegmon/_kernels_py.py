"""Pure-Python twins of the compiled folds in ``_kernels.pyx``."""
import math

import numpy as np


def path_fold(alpha, counts, node_stage, node_nout, node_child, obs_node, obs_edge, moments):
    M, depth = obs_node.shape
    n_nodes = len(node_stage)
    S = np.empty(M)
    E = np.full(M, np.nan)
    V = np.full(M, np.nan)
    tot = (alpha + counts).sum(axis=1)
    stage = node_stage.tolist()
    nout = node_nout.tolist()
    child = node_child.tolist()
    mus = [0.0] * n_nodes
    qs = [0.0] * n_nodes
    for m in range(M):
        if moments:
            for w in range(n_nodes - 1, -1, -1):
                u = stage[w]
                a, c, t = alpha[u], counts[u], tot[u]
                mu = q = 0.0
                for j in range(nout[w]):
                    p = (a[j] + c[j]) / t
                    if p <= 0.0:
                        continue
                    lp = -math.log(p)
                    ch = child[w][j]
                    mu_c, q_c = (mus[ch], qs[ch]) if ch >= 0 else (0.0, 0.0)
                    mu += p * (lp + mu_c)
                    q += p * (lp * lp + 2.0 * lp * mu_c + q_c)
                mus[w] = mu
                qs[w] = q
            E[m] = mus[0]
            V[m] = qs[0] - mus[0] * mus[0]
        s = 0.0
        for d in range(depth):
            u = stage[obs_node[m, d]]
            j = obs_edge[m, d]
            p = (alpha[u, j] + counts[u, j]) / tot[u]
            s = math.inf if p <= 0.0 else s - math.log(p)
        S[m] = s
        for d in range(depth):
            u = stage[obs_node[m, d]]
            counts[u, obs_edge[m, d]] += 1.0
            tot[u] += 1.0
    return S, E, V


def floret_fold(alpha, counts, nout, stage_seq, edge_seq, score_mask):
    T = len(stage_seq)
    S = np.full(T, np.nan)
    E = np.full(T, np.nan)
    V = np.full(T, np.nan)
    tot = (alpha + counts).sum(axis=1)
    for t in range(T):
        u = stage_seq[t]
        k = edge_seq[t]
        if score_mask[t]:
            e = v = 0.0
            for j in range(nout[u]):
                p = (alpha[u, j] + counts[u, j]) / tot[u]
                if p > 0.0:
                    lp = math.log(p)
                    e -= p * lp
                    v += p * lp * lp
            E[t] = e
            V[t] = v - e * e
            p = (alpha[u, k] + counts[u, k]) / tot[u]
            S[t] = -math.log(p) if p > 0.0 else math.inf
        counts[u, k] += 1.0
        tot[u] += 1.0
    return S, E, V
