"""JSON model files.

Staged tree file::

    {"variables": [{"name": ..., "levels": [...]}, ...],
     "staging": [[["" ]], [["High"], ["Low"]], ...],    # per cut, blocks of path ids
     "priors": [[[1.5, 1.5]], ...] | null,               # per cut, per block
     "probabilities": [[[0.5, 0.5]], ...] | null,        # per cut, per block
     "null_stage": ["High/Low", ...]}                    # optional

Path ids join level labels with ``/``; the root is ``""``.  BN file::

    {"variables": [...], "edges": [["X_s", "X_e"], ...],
     "priors": {"X_e": [[...], [...]], ...}}              # optional

Unknown keys are rejected.  Writing is canonical (fixed key order,
shortest round-trip floats) so load -> dump is byte-stable.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bn import DiscreteBN
from .tree import EventTree, ModelError, StagedTree, Staging, VariableSpec, staging_from_ids

__all__ = [
    "load_model", "dump_model", "model_to_dict", "model_from_dict",
    "load_bn", "dump_bn", "bn_to_dict", "bn_from_dict", "load_any", "is_bn_document",
]

MODEL_KEYS = ("variables", "staging", "priors", "probabilities", "null_stage")
BN_KEYS = ("variables", "edges", "priors")


def _variables(doc) -> tuple[VariableSpec, ...]:
    if not isinstance(doc, list) or not doc:
        raise ModelError("'variables' must be a non-empty list")
    out = []
    for v in doc:
        if not isinstance(v, dict) or set(v) != {"name", "levels"}:
            raise ModelError(f"each variable needs exactly 'name' and 'levels', got {v!r}")
        out.append(VariableSpec(str(v["name"]), tuple(str(x) for x in v["levels"])))
    return tuple(out)


def _per_stage(doc, staging: Staging, tree: EventTree, what: str):
    if doc is None:
        return None
    if len(doc) != tree.n_cuts:
        raise ModelError(f"'{what}' must list {tree.n_cuts} cuts")
    vecs = []
    for d, (cut, blocks) in enumerate(zip(doc, staging.blocks)):
        n_blocks = len(blocks) + (1 if staging.null[d] else 0)
        if len(cut) != n_blocks:
            raise ModelError(f"'{what}' cut {d} lists {len(cut)} vectors for {n_blocks} stages")
        vecs.extend(np.array(v, dtype=float) for v in cut)
    return tuple(vecs)


def model_from_dict(doc: dict) -> StagedTree:
    unknown = set(doc) - set(MODEL_KEYS)
    if unknown:
        raise ModelError(f"unknown model fields: {sorted(unknown)}")
    for key in ("variables", "staging"):
        if key not in doc:
            raise ModelError(f"model file lacks {key!r}")
    tree = EventTree(_variables(doc["variables"]))
    staging = staging_from_ids(tree, doc["staging"], doc.get("null_stage"))
    priors = _per_stage(doc.get("priors"), staging, tree, "priors")
    probs = _per_stage(doc.get("probabilities"), staging, tree, "probabilities")
    return StagedTree(tree, staging, priors, probs)


def _group(st: StagedTree, vecs):
    if vecs is None:
        return None
    out = [[] for _ in range(st.tree.n_cuts)]
    for d, v in zip(st.stage_cut, vecs):
        out[d].append([float(x) for x in v])
    return out


def model_to_dict(st: StagedTree) -> dict:
    tree = st.tree
    doc = {
        "variables": [{"name": v.name, "levels": list(v.levels)} for v in tree.variables],
        "staging": [[[tree.situation_id(s) for s in b] for b in cut] for cut in st.staging.blocks],
        "priors": _group(st, st.priors),
        "probabilities": _group(st, st.probabilities),
    }
    null = [tree.situation_id(s) for cut in st.staging.null for s in cut]
    if null:
        doc["null_stage"] = null
    return doc


def _dumps(doc) -> str:
    return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"


def dump_model(st: StagedTree, path) -> None:
    Path(path).write_text(_dumps(model_to_dict(st)))


def load_model(path) -> StagedTree:
    return model_from_dict(_read(path))


def _read(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ModelError(f"{path}: top level must be an object")
    return doc


def bn_from_dict(doc: dict, ess: float | None = None) -> DiscreteBN:
    unknown = set(doc) - set(BN_KEYS)
    if unknown:
        raise ModelError(f"unknown BN fields: {sorted(unknown)}")
    variables = _variables(doc.get("variables"))
    edges = [tuple(e) for e in doc.get("edges", [])]
    if any(len(e) != 2 for e in edges):
        raise ModelError("each edge must be a [parent, child] pair")
    return DiscreteBN(variables, edges, doc.get("priors"), ess)


def bn_to_dict(bn: DiscreteBN, with_priors: bool = True) -> dict:
    doc = {
        "variables": [{"name": v.name, "levels": list(v.levels)} for v in bn.variables],
        "edges": [list(e) for e in bn.edges],
    }
    if with_priors:
        doc["priors"] = {n: bn.alpha[n].tolist() for n in bn.names}
    return doc


def dump_bn(bn: DiscreteBN, path, with_priors: bool = True) -> None:
    Path(path).write_text(_dumps(bn_to_dict(bn, with_priors)))


def load_bn(path, ess: float | None = None) -> DiscreteBN:
    return bn_from_dict(_read(path), ess)


def is_bn_document(doc: dict) -> bool:
    return "edges" in doc and "staging" not in doc


def load_any(path, ess: float | None = None):
    """Load either kind of model file, telling them apart by their keys."""
    doc = _read(path)
    return bn_from_dict(doc, ess) if is_bn_document(doc) else model_from_dict(doc)
