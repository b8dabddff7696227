"""Per-step CSV output.

Columns: ``step,tau,t,h_fictive,h_physical,q1..qn,p1..pn,pt,energy_error``,
floats with 17 significant digits so values round-trip exactly.  Row 0 is the
initial state.
"""

from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from ..integrators.driver import Trajectory, TrajectoryChunk


def csv_header(n: int) -> list:
    return (["step", "tau", "t", "h_fictive", "h_physical"] + [f"q{i}" for i in range(1, n + 1)]
            + [f"p{i}" for i in range(1, n + 1)] + ["pt", "energy_error"])


def _fmt(x) -> str:
    return format(float(x), ".17g")


class CsvWriter:
    """Streams trajectory chunks to a file; usable as an ``integrate`` sink."""

    def __init__(self, path, n: int):
        self.n = n
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(csv_header(n))
        self.rows = 0

    def write_initial(self, state, t0: Optional[float] = None):
        q = np.ravel(state.q)
        p = np.ravel(state.p)
        t = float(state.qt) if t0 is None else t0
        self._w.writerow(["0", _fmt(0.0), _fmt(t), _fmt(0.0), _fmt(0.0)]
                         + [_fmt(v) for v in q] + [_fmt(v) for v in p] + [_fmt(state.pt), _fmt(0.0)])
        self.rows += 1

    def __call__(self, chunk: TrajectoryChunk):
        for i in range(len(chunk)):
            self._w.writerow([str(int(chunk.step[i])), _fmt(chunk.tau[i]), _fmt(chunk.t[i]),
                              _fmt(chunk.h_fictive[i]), _fmt(chunk.h_physical[i])]
                             + [_fmt(v) for v in chunk.q[i]] + [_fmt(v) for v in chunk.p[i]]
                             + [_fmt(chunk.pt[i]), _fmt(chunk.energy_error[i])])
        self.rows += len(chunk)

    def close(self):
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(trajectory: Optional[Trajectory], path, n: Optional[int] = None):
    """Write a recorded trajectory; ``None`` gives a header-only file (``n`` required)."""
    if trajectory is None:
        if n is None:
            raise ValueError("need the dimension n to write an empty trajectory")
        with CsvWriter(path, n):
            return
    n = int(np.size(trajectory.initial_state.q))
    with CsvWriter(path, n) as w:
        w.write_initial(trajectory.initial_state)
        if trajectory.steps:
            if trajectory.columns is None:
                raise ValueError("trajectory was run without recording")
            w(trajectory.columns)


def read_csv(path):
    """Header and float rows of a file written by :func:`write_csv` (for tests and tools)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
