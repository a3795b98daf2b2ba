"""Command line interface.

Exit status: 0 on success, 2 for bad input (flags, files, models, data),
3 when a monitor met an observation it gave probability zero.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bn import DiscreteBN, InferenceTooLarge, bn_global_monitor, node_monitors, parent_child_monitor
from .data import DataError, Dataset, infer_variables, load_csv, order_by, sample_from_ceg
from .dirichlet import bn_log_marginal_likelihood, log_marginal_likelihood, posterior_state
from .modelio import dump_model, load_any
from .monitors import (EvidenceError, ceg_global_monitor, loo_situation_monitor, posterior_mean_model,
                       position_monitor_conditional, position_monitor_marginal, situation_order_monitor,
                       staging_monitor, to_ceg, write_order_csv)
from .scoring import write_traces
from .search import ahc_search
from .tree import EventTree, ModelError, StagedTree

log = logging.getLogger("cegmon")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("CEGMON_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_data_args(p, required=True):
    p.add_argument("--data", required=required, help="CSV with a header row")
    order = p.add_mutually_exclusive_group()
    order.add_argument("--order-by", metavar="VAR", help="stable sort cases by this variable's level order")
    order.add_argument("--shuffle-seed", type=int, metavar="SEED", help="seeded shuffle of the cases")


def _add_out(p):
    p.add_argument("--out-dir", default=".", help="directory for CSV traces and summary.json")
    p.add_argument("--ess", type=float, help="effective sample size of the reference prior "
                   "(default: model priors, else the largest cardinality)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cegmon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cegmon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="AHC search for a staged tree")
    _add_data_args(p)
    p.add_argument("--columns", help="comma-separated variable order (default: CSV header order)")
    p.add_argument("--ess", type=float, help="reference prior ess (default: largest cardinality)")
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--history", help="merge history CSV (default: <out>.history.csv)")

    p = sub.add_parser("score", help="global monitors and Bayes factor of two models")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    _add_data_args(p)
    _add_out(p)

    p = sub.add_parser("monitor", help="run one monitor family")
    msub = p.add_subparsers(dest="monitor", required=True)

    m = msub.add_parser("node", help="BN marginal and conditional node monitors")
    m.add_argument("--model", required=True)
    m.add_argument("--node", action="append", help="node to monitor (repeatable; default all)")
    m.add_argument("--cell-cap", type=int, default=10**6)
    _add_data_args(m)
    _add_out(m)

    m = msub.add_parser("parent-child", help="BN parent-child monitors")
    m.add_argument("--model", required=True)
    m.add_argument("--node", required=True)
    m.add_argument("--config", help="parent assignment like 'X_s=Low,X_e=Low' (default: every configuration)")
    _add_data_args(m)
    _add_out(m)

    m = msub.add_parser("staging", help="staging monitor for one cut")
    m.add_argument("--model", required=True)
    m.add_argument("--cut", required=True, help="variable name of the cut")
    m.add_argument("--max-split-block", type=int, default=12)
    _add_data_args(m)
    _add_out(m)

    m = msub.add_parser("position", help="marginal and conditional position monitors")
    m.add_argument("--model", required=True)
    m.add_argument("--position", type=int, action="append", help="position index w (repeatable; default all)")
    _add_data_args(m)
    _add_out(m)

    for name, helptext in (("situation-loo", "leave-one-out situation monitor"),
                           ("situation-order", "situation order monitor")):
        m = msub.add_parser(name, help=helptext)
        m.add_argument("--model", required=True)
        m.add_argument("--stage", required=True, help="stage id such as u3")
        m.add_argument("--level", help="level of interest (default: the cut variable's last level)")
        if name == "situation-order":
            m.add_argument("--ordering", help="comma-separated situation path ids (default: tree order)")
        _add_data_args(m)
        _add_out(m)

    p = sub.add_parser("sample", help="draw cases from a staged tree")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="use posterior-mean probabilities learned from this CSV")
    p.add_argument("--ess", type=float)
    return parser


# -- helpers --------------------------------------------------------------

def _variables_of(model):
    return model.variables if isinstance(model, DiscreteBN) else model.tree.variables


def _load_data(args, variables=None) -> Dataset:
    data = load_csv(args.data, variables)
    if getattr(args, "order_by", None):
        data = order_by(data, covariate=args.order_by)
    elif getattr(args, "shuffle_seed", None) is not None:
        data = order_by(data, seed=args.shuffle_seed)
    return data


def _model(path, kind=None, ess=None):
    model = load_any(path, ess)
    if kind == "bn" and not isinstance(model, DiscreteBN):
        raise InputError(f"{path}: this monitor needs a BN model file (with 'edges')")
    if kind == "ceg" and not isinstance(model, StagedTree):
        raise InputError(f"{path}: this monitor needs a staged tree model file (with 'staging')")
    return model


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _z(trace):
    return trace.final_z if len(trace) else None


def _strict(x):
    """Replace non-finite floats so summaries stay valid JSON."""
    if isinstance(x, dict):
        return {k: _strict(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_strict(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


def _write_summary(path: Path, summary: dict) -> None:
    text = json.dumps(_strict(summary), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n")
    print(text)


def _global(model, data, ess):
    if isinstance(model, DiscreteBN):
        trace, total = bn_global_monitor(model, data)
        return trace, total, bn_log_marginal_likelihood(model.fit(data))
    trace, total = ceg_global_monitor(model, data, ess)
    return trace, total, log_marginal_likelihood(posterior_state(model, data.reorder_columns(model.tree.variables).rows, ess))


# -- commands -------------------------------------------------------------

def cmd_fit(args) -> int:
    columns = args.columns.split(",") if args.columns else None
    variables = infer_variables(args.data, columns)
    data = _load_data(args, variables)
    result = ahc_search(EventTree(variables), data, args.ess)
    dump_model(result.staged_tree, args.out)
    history = args.history or f"{args.out}.history.csv"
    result.write_history(history)
    summary = {"model": str(args.out), "history": str(history), "log_marginal_likelihood": result.log_ml,
               "merges": len(result.history), "stages": result.staged_tree.n_stages}
    print(json.dumps(_strict(summary), indent=2, sort_keys=True, allow_nan=False))
    return EXIT_OK


def cmd_score(args) -> int:
    a = _model(args.model_a, ess=args.ess)
    b = _model(args.model_b, ess=args.ess)
    if [v.name for v in _variables_of(a)] != [v.name for v in _variables_of(b)]:
        log.warning("models order their variables differently; scores remain comparable")
    data = _load_data(args, _variables_of(a))
    out = _out_dir(args)
    ta, tot_a, lml_a = _global(a, data, args.ess)
    tb, tot_b, lml_b = _global(b, data, args.ess)
    write_traces([ta], out / "global_a.csv")
    write_traces([tb], out / "global_b.csv")
    delta = lml_a - lml_b
    summary = {
        "n": len(data),
        "model_a": {"file": args.model_a, "log_marginal_likelihood": lml_a, "global_monitor": tot_a, "Z": _z(ta)},
        "model_b": {"file": args.model_b, "log_marginal_likelihood": lml_b, "global_monitor": tot_b, "Z": _z(tb)},
        "delta_log_ml": delta,
        "bayes_factor_a_vs_b": math.inf if delta >= 700 else math.exp(delta),
    }
    _write_summary(out / "summary.json", summary)
    return EXIT_NUMERIC if ta.flagged or tb.flagged else EXIT_OK


def cmd_monitor(args) -> int:
    kind = "bn" if args.monitor in ("node", "parent-child") else "ceg"
    model = _model(args.model, kind, args.ess if kind == "bn" else None)
    data = _load_data(args, _variables_of(model))
    out = _out_dir(args)
    flagged = False
    summary: dict = {"monitor": args.monitor, "n": len(data)}
    ess = args.ess

    if args.monitor == "node":
        res = node_monitors(model, data, args.node, args.cell_cap)
        traces = [t for pair in res.values() for t in pair]
        write_traces(traces, out / "node.csv")
        summary["Z"] = {n: {"marginal": _z(m), "conditional": _z(c)} for n, (m, c) in res.items()}
        flagged = any(t.flagged for t in traces)
    elif args.monitor == "parent-child":
        if args.config:
            pairs = dict(kv.split("=", 1) for kv in args.config.split(","))
            configs = [model.config_of(args.node, pairs)]
        else:
            configs = range(model.n_configs[args.node])
        traces = [parent_child_monitor(model, data, args.node, model.config_labels(args.node, j)) for j in configs]
        write_traces(traces, out / "parent_child.csv")
        summary["Z"] = {t.target: _z(t) for t in traces}
        flagged = any(t.flagged for t in traces)
    elif args.monitor == "staging":
        res = staging_monitor(model, data, args.cut, ess=ess, max_split_block=args.max_split_block)
        res.write_csv(out / "staging.csv")
        res.write_sidecar(out / "staging_candidates.json")
        labels = res.labels()
        summary.update(cut=args.cut, candidates=labels, current=labels[0],
                       final_weights=dict(zip(labels, res.weights[-1].tolist())),
                       most_likely_final=labels[int(res.weights[-1].argmax())])
    elif args.monitor == "position":
        ceg = to_ceg(model)
        positions = args.position or [w for w in range(ceg.n_positions)]
        traces = []
        for w in positions:
            traces.append(position_monitor_marginal(ceg, data, w, ess))
            traces.append(position_monitor_conditional(ceg, data, w, ess))
        write_traces(traces, out / "position.csv")
        summary["Z"] = {t.target: _z(t) for t in traces}
        flagged = any(t.flagged for t in traces)
    elif args.monitor == "situation-loo":
        rep = loo_situation_monitor(model, data, args.stage, args.level, ess)
        rep.write_csv(out / "situation_loo.csv")
        summary.update(stage=rep.stage, level=rep.level, notice=rep.notice,
                       rows=[{"situation": r.situation, "n": r.n, "Q": r.Q, "expected_prop": r.expected_prop,
                              "observed_prop": None if math.isnan(r.observed_prop) else r.observed_prop,
                              "band": None if math.isnan(r.lower) else [r.lower, r.upper]} for r in rep.rows])
    elif args.monitor == "situation-order":
        ordering = args.ordering.split(",") if args.ordering else None
        rows = situation_order_monitor(model, data, args.stage, ordering, args.level, ess)
        write_order_csv(rows, out / "situation_order.csv")
        summary.update(stage=args.stage, probabilities=[{"situation": r.situation, "prob": r.prob} for r in rows])
        flagged = any(math.isinf(r.surprise) for r in rows)
    _write_summary(out / "summary.json", summary)
    return EXIT_NUMERIC if flagged else EXIT_OK


def cmd_sample(args) -> int:
    model = _model(args.model, "ceg")
    if args.data:
        model = posterior_mean_model(model, load_csv(args.data, model.tree.variables), args.ess)
    if args.n < 0:
        raise InputError("--n must be nonnegative")
    sample_from_ceg(model, args.n, args.seed).to_csv(args.out)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "score": cmd_score, "monitor": cmd_monitor, "sample": cmd_sample}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ModelError, DataError, EvidenceError, InferenceTooLarge, OSError, json.JSONDecodeError) as exc:
        print(f"cegmon: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
