# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled prequential folds.  Must stay in sync with ``_kernels_py``."""
import numpy as np
from libc.math cimport log, sqrt, INFINITY, NAN


def path_fold(const double[:, ::1] alpha, double[:, ::1] counts,
              const long long[::1] node_stage, const long long[::1] node_nout,
              const long long[:, ::1] node_child,
              const long long[:, ::1] obs_node, const long long[:, ::1] obs_edge,
              bint moments):
    """One-step-ahead surprise of whole root-to-sink paths.

    ``counts`` is updated in place.  Returns (S, E, V) per observation; E and
    V are NaN when ``moments`` is false.
    """
    cdef Py_ssize_t M = obs_node.shape[0], depth = obs_node.shape[1]
    cdef Py_ssize_t n_nodes = node_stage.shape[0], n_stage = alpha.shape[0], kmax = alpha.shape[1]
    cdef Py_ssize_t m, d, w, j, u, c
    cdef double p, lp, mu_c, q_c, mu, q, s
    S_arr = np.empty(M, dtype=np.float64)
    E_arr = np.full(M, NAN, dtype=np.float64)
    V_arr = np.full(M, NAN, dtype=np.float64)
    cdef double[::1] S = S_arr, E = E_arr, V = V_arr
    tot_arr = np.empty(n_stage, dtype=np.float64)
    mu_arr = np.zeros(n_nodes, dtype=np.float64)
    q_arr = np.zeros(n_nodes, dtype=np.float64)
    cdef double[::1] tot = tot_arr, mus = mu_arr, qs = q_arr
    for u in range(n_stage):
        tot[u] = 0.0
        for j in range(kmax):
            tot[u] += alpha[u, j] + counts[u, j]

    for m in range(M):
        if moments:
            for w in range(n_nodes - 1, -1, -1):
                u = node_stage[w]
                mu = 0.0
                q = 0.0
                for j in range(node_nout[w]):
                    p = (alpha[u, j] + counts[u, j]) / tot[u]
                    if p <= 0.0:
                        continue
                    lp = -log(p)
                    c = node_child[w, j]
                    if c >= 0:
                        mu_c = mus[c]
                        q_c = qs[c]
                    else:
                        mu_c = 0.0
                        q_c = 0.0
                    mu += p * (lp + mu_c)
                    q += p * (lp * lp + 2.0 * lp * mu_c + q_c)
                mus[w] = mu
                qs[w] = q
            E[m] = mus[0]
            V[m] = qs[0] - mus[0] * mus[0]
        s = 0.0
        for d in range(depth):
            u = node_stage[obs_node[m, d]]
            j = obs_edge[m, d]
            p = (alpha[u, j] + counts[u, j]) / tot[u]
            if p <= 0.0:
                s = INFINITY
            else:
                s += -log(p)
        S[m] = s
        for d in range(depth):
            u = node_stage[obs_node[m, d]]
            counts[u, obs_edge[m, d]] += 1.0
            tot[u] += 1.0
    return S_arr, E_arr, V_arr


def floret_fold(const double[:, ::1] alpha, double[:, ::1] counts, const long long[::1] nout,
                const long long[::1] stage_seq, const long long[::1] edge_seq,
                const unsigned char[::1] score_mask):
    """Sequential Dirichlet scoring of single floret outcomes.

    Every event updates ``counts`` (in place); only events with a nonzero
    mask are scored.  Returns (S, E, V) with NaN at unscored events.
    """
    cdef Py_ssize_t T = stage_seq.shape[0], n_stage = alpha.shape[0], kmax = alpha.shape[1]
    cdef Py_ssize_t t, j, u, k
    cdef double p, lp, e, v, tu
    S_arr = np.full(T, NAN, dtype=np.float64)
    E_arr = np.full(T, NAN, dtype=np.float64)
    V_arr = np.full(T, NAN, dtype=np.float64)
    cdef double[::1] S = S_arr, E = E_arr, V = V_arr
    tot_arr = np.empty(n_stage, dtype=np.float64)
    cdef double[::1] tot = tot_arr
    for u in range(n_stage):
        tot[u] = 0.0
        for j in range(kmax):
            tot[u] += alpha[u, j] + counts[u, j]
    for t in range(T):
        u = stage_seq[t]
        k = edge_seq[t]
        if score_mask[t]:
            tu = tot[u]
            e = 0.0
            v = 0.0
            for j in range(nout[u]):
                p = (alpha[u, j] + counts[u, j]) / tu
                if p > 0.0:
                    lp = log(p)
                    e -= p * lp
                    v += p * lp * lp
            E[t] = e
            V[t] = v - e * e
            p = (alpha[u, k] + counts[u, k]) / tu
            S[t] = -log(p) if p > 0.0 else INFINITY
        counts[u, k] += 1.0
        tot[u] += 1.0
    return S_arr, E_arr, V_arr
