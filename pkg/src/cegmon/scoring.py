"""Logarithmic scores, their standardisation, and trace files.

Natural logarithms throughout.  A zero-probability observation is not an
error: its surprise is recorded as +inf and the trace is flagged.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = ["ScoreStep", "TraceRow", "MonitorTrace", "score", "cumulative_z", "SUSPICION_THRESHOLD"]

SUSPICION_THRESHOLD = 1.96
V_EPS = 1e-12  # summed variances at or below this are treated as zero
TRACE_HEADER = ("m", "target", "S", "E", "V", "Z_cum")


@dataclass(frozen=True)
class ScoreStep:
    S: float
    E: float
    V: float


def score(predictive: Sequence[float], observed: int) -> ScoreStep:
    p = np.asarray(predictive, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"predictive sums to {p.sum()!r}, not 1")
    if not 0 <= observed < len(p):
        raise IndexError(f"observed index {observed} out of range")
    nz = p[p > 0]
    logs = np.log(nz)
    E = float(-(nz * logs).sum())
    V = float((nz * logs * logs).sum() - E * E)
    S = math.inf if p[observed] <= 0 else -math.log(p[observed])
    return ScoreStep(S, E, V)


@dataclass(frozen=True)
class TraceRow:
    m: int
    target: str
    step: ScoreStep
    Z: float | None
    predictive: tuple[float, ...] | None = None


def _running_z(S, E, V):
    out = []
    for cs, ce, cv in zip(np.cumsum(S), np.cumsum(E), np.cumsum(V)):
        if cv <= V_EPS:
            out.append(None)
        elif math.isinf(cs):
            out.append(math.inf)
        else:
            out.append(float((cs - ce) / math.sqrt(cv)))
    return out


@dataclass
class MonitorTrace:
    """Ordered record of one monitor's score steps with running Z."""

    target: str
    rows: list[TraceRow] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, target: str, m, S, E, V, predictives=None) -> "MonitorTrace":
        S, E, V = (np.asarray(x, dtype=float) for x in (S, E, V))
        zs = _running_z(S, E, V) if len(S) else []
        rows = [TraceRow(int(mi), target, ScoreStep(float(s), float(e), float(v)), z,
                         None if predictives is None else tuple(map(float, predictives[i])))
                for i, (mi, s, e, v, z) in enumerate(zip(m, S, E, V, zs))]
        return cls(target, rows)

    def __len__(self):
        return len(self.rows)

    @property
    def flagged(self) -> bool:
        return any(math.isinf(r.step.S) for r in self.rows)

    @property
    def S(self):
        return np.array([r.step.S for r in self.rows])

    @property
    def E(self):
        return np.array([r.step.E for r in self.rows])

    @property
    def V(self):
        return np.array([r.step.V for r in self.rows])

    @property
    def total(self) -> float:
        return float(self.S.sum()) if self.rows else 0.0

    @property
    def final_z(self) -> float | None:
        return cumulative_z(self)

    def suspicious(self, threshold: float = SUSPICION_THRESHOLD) -> bool:
        z = self.final_z
        return z is not None and abs(z) > threshold

    def write_csv(self, path_or_file, append_header=True) -> None:
        write_traces([self], path_or_file, header=append_header)


def cumulative_z(trace: MonitorTrace | Iterable[ScoreStep]) -> float | None:
    steps = [r.step for r in trace.rows] if isinstance(trace, MonitorTrace) else list(trace)
    if not steps:
        raise ValueError("cumulative Z of an empty trace")
    s = sum(x.S for x in steps)
    e = sum(x.E for x in steps)
    v = sum(x.V for x in steps)
    if v <= V_EPS:
        return None
    if math.isinf(s):
        return math.inf
    return (s - e) / math.sqrt(v)


def fmt_float(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x) + 0.0)  # + 0.0 folds -0.0 into 0.0


def write_traces(traces: Iterable[MonitorTrace], path_or_file, header: bool = True) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(TRACE_HEADER)
        for tr in traces:
            for r in tr.rows:
                w.writerow([r.m, r.target, fmt_float(r.step.S), fmt_float(r.step.E),
                            fmt_float(r.step.V), fmt_float(r.Z)])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def read_traces(path) -> list[dict]:
    def parse(x):
        return None if x == "NA" else float(x)

    with open(path, newline="") as fh:
        return [{"m": int(r["m"]), "target": r["target"], "S": parse(r["S"]), "E": parse(r["E"]),
                 "V": parse(r["V"]), "Z_cum": parse(r["Z_cum"])} for r in csv.DictReader(fh)]
