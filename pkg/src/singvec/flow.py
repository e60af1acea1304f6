"""The diagonal flow a_t acting on h(x) Z^3: systoles and the weighted Dirichlet test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lattice import DEFAULT_CAP, LatticeRep, Weight, shortest_vector


def a_diag(w: Weight, t: float) -> tuple:
    return (math.exp(w.a * t), math.exp(w.b * t), math.exp(-t))


def flow_lattice(x, w: Weight, t: float, pre: Optional[Sequence[float]] = None) -> LatticeRep:
    """a_t h(x) Z^3, optionally left-multiplied by a further diagonal matrix."""
    d = a_diag(w, t)
    if pre is not None:
        d = tuple(float(p) * v for p, v in zip(pre, d))
    return LatticeRep.structured(d, x, t)


@dataclass(frozen=True)
class SystoleSeries:
    grid: tuple
    values: tuple
    witnesses: tuple


def systole_profile(x, w: Weight, grid: Sequence[float], cap: int = DEFAULT_CAP) -> SystoleSeries:
    grid = [float(t) for t in grid]
    if any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be increasing and non-negative")
    vals, wits = [], []
    for t in grid:
        sv = shortest_vector(flow_lattice(x, w, t), cap=cap)
        vals.append(sv.norm)
        wits.append(tuple(int(v) for v in sv.coords))
    return SystoleSeries(tuple(grid), tuple(vals), tuple(wits))


@dataclass(frozen=True)
class DirichletResult:
    ok: bool
    witness: Optional[tuple] = None
    near_boundary: tuple = field(default_factory=tuple)

    def __bool__(self):
        return self.ok


def dirichlet_test(x, w: Weight, eps: float, T: float, slack: float = 1e-12) -> DirichletResult:
    """Is there 0 < q < T with |q x_i - p_i| < eps^{w_i} T^{-w_i}?

    Only the nearest p_i can work, so the scan is over q alone.  Candidates within
    `slack` of a bound are reported separately and do not count as witnesses.
    """
    if not T > 1:
        raise ValueError("T must exceed 1")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    qhi = math.ceil(T) - 1
    q = np.arange(1, qhi + 1, dtype=np.int64)
    xs = np.array([float(v) for v in x])
    qx = np.outer(q, xs)
    p = np.rint(qx)
    d = np.abs(qx - p)
    bound = np.array([(eps / T) ** w.a, (eps / T) ** w.b])
    clear = np.all(d < bound - slack, axis=1)
    near = np.all(d < bound + slack, axis=1) & ~clear
    near_w = tuple((int(p[i, 0]), int(p[i, 1]), int(q[i])) for i in np.flatnonzero(near))
    hit = np.flatnonzero(clear)
    if len(hit):
        i = int(hit[0])
        return DirichletResult(True, (int(p[i, 0]), int(p[i, 1]), int(q[i])), near_w)
    return DirichletResult(False, None, near_w)


@dataclass(frozen=True)
class DIProfile:
    grid: tuple
    results: tuple
    threshold: Optional[float]


def di_profile(x, w: Weight, eps: float, Tgrid: Sequence[float]) -> DIProfile:
    res = tuple(dirichlet_test(x, w, eps, T).ok for T in Tgrid)
    threshold = None
    for i in range(len(res) - 1, -1, -1):
        if not res[i]:
            break
        threshold = float(Tgrid[i])
    return DIProfile(tuple(float(T) for T in Tgrid), res, threshold)
