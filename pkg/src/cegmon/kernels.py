"""Backend selection for the prequential folds.

The compiled extension is used when it imports; ``CEGMON_PURE_PYTHON=1``
forces the pure-Python implementation.  Both take the same arguments:
float64 C-contiguous ``alpha``/``counts`` matrices (stages x max out-degree,
zero padded) and int64 index arrays.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
if os.environ.get("CEGMON_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def path_fold(alpha, counts, node_stage, node_nout, node_child, obs_node, obs_edge,
              moments=True, impl=None):
    impl = impl or _impl
    return impl.path_fold(alpha, counts, _i64(node_stage), _i64(node_nout), _i64(node_child),
                          _i64(obs_node), _i64(obs_edge), bool(moments))


def floret_fold(alpha, counts, nout, stage_seq, edge_seq, score_mask=None, impl=None):
    impl = impl or _impl
    if score_mask is None:
        score_mask = np.ones(len(stage_seq), dtype=np.uint8)
    return impl.floret_fold(alpha, counts, _i64(nout), _i64(stage_seq), _i64(edge_seq),
                            np.ascontiguousarray(score_mask, dtype=np.uint8))
