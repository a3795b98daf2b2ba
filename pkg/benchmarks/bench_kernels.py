"""Time the compiled and pure-Python prequential folds on the same inputs.

    python3 benchmarks/bench_kernels.py [--rows N] [--repeat R]
"""
import argparse
import timeit
from importlib.resources import files

import numpy as np

from cegmon import _kernels_py
from cegmon.data import sample_from_ceg
from cegmon.dirichlet import model_prior
from cegmon.modelio import load_model
from cegmon.tree import to_ceg

try:
    from cegmon import _kernels as compiled
except ImportError:
    compiled = None


def path_inputs(n_rows):
    st = load_model(files("cegmon") / "models" / "chds_ceg_ahc.json")
    rng = np.random.default_rng(0)
    st = st.with_probabilities([rng.dirichlet(np.full(len(a), 2.0)) for a in model_prior(st).alpha])
    rows = sample_from_ceg(st, n_rows, 0).rows
    ceg = to_ceg(st)
    A, C, _ = model_prior(st).padded()
    sits = st.tree.path_situations(rows)
    nout = [st.tree.cards[c] for c in ceg.position_cut]
    return A, C, ceg.position_stage, nout, ceg.child_table(), ceg.position_of[sits], rows


def floret_inputs(n_rows):
    rng = np.random.default_rng(1)
    alpha = rng.uniform(0.5, 2.0, size=(8, 3))
    return alpha, np.zeros_like(alpha), [3] * 8, rng.integers(0, 8, n_rows), rng.integers(0, 3, n_rows)


def bench(label, fn, repeat):
    t = min(timeit.repeat(fn, number=1, repeat=repeat))
    print(f"{label:<28}{t * 1e3:10.2f} ms")
    return t


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    from cegmon import kernels
    impls = [("python", _kernels_py)] + ([("cython", compiled)] if compiled is not None else [])
    p_args, f_args = path_inputs(args.rows), floret_inputs(args.rows)
    times = {}
    for name, impl in impls:
        times[("path", name)] = bench(f"path_fold   [{name}]", lambda: kernels.path_fold(
            p_args[0], p_args[1].copy(), *p_args[2:], impl=impl), args.repeat)
        times[("floret", name)] = bench(f"floret_fold [{name}]", lambda: kernels.floret_fold(
            f_args[0], f_args[1].copy(), *f_args[2:], impl=impl), args.repeat)
    if compiled is None:
        print("compiled extension not built; only the Python backend was timed")
        return
    for k in ("path", "floret"):
        print(f"{k}_fold speed-up: {times[(k, 'python')] / times[(k, 'cython')]:.1f}x on {args.rows} rows")


if __name__ == "__main__":
    main()
