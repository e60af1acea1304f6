"""Dimension calculus: closed form, the lower-bound exponent from sequence data,
the local-ratio estimate, the covering relation, and a box-counting estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .approx import center, quality, r_route_a, r_of
from .errors import (AssumptionViolated, DegenerateFit, HorizonTooShort, InvalidWeight,
                     NotInQEps)
from .lattice import Weight, _expand


@dataclass(frozen=True)
class DimResult:
    dim: object
    degenerate: bool = False


def closed_form_dim(w: Weight) -> DimResult:
    """2 - 1/(1 + w1); exact for rational weights.  w = (1, 0) gives 1, flagged."""
    if w.w1 == 1 and w.w2 == 0:
        return DimResult(Fraction(1) if w.exact else 1.0, True)
    if not (w.w1 >= w.w2 > 0):
        raise InvalidWeight(f"need w1 >= w2 > 0, got ({w.w1}, {w.w2})")
    return DimResult(2 - 1 / (1 + w.w1), False)


# ---- sequence data --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SeqData:
    """Logarithms of W_n, L_n, rho_n, C_n for n = 0..n_max."""
    log_W: np.ndarray
    log_L: np.ndarray
    log_rho: np.ndarray
    log_C: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.log_W, self.log_L, self.log_rho, self.log_C)]
        if len({len(a) for a in arrs}) != 1 or len(arrs[0]) < 3:
            raise ValueError("sequences must share a length of at least 3")
        for name, a in zip(("log_W", "log_L", "log_rho", "log_C"), arrs):
            object.__setattr__(self, name, a)

    @property
    def n_max(self) -> int:
        return len(self.log_W) - 1

    @classmethod
    def from_functions(cls, W: Callable, L: Callable, rho: Callable, C: Callable, n_max: int) -> "SeqData":
        n = range(n_max + 1)
        return cls(*(np.log([float(f(k)) for k in n]) for f in (W, L, rho, C)))

    def validate(self, strict_C: bool = True):
        bad = []
        if np.any(self.log_W > self.log_L + 1e-12):
            bad.append("W_n <= L_n")
        if np.any(np.diff(self.log_W) >= 0):
            bad.append("W strictly decreasing")
        if np.any(self.log_rho > 1e-12):
            bad.append("rho_n <= 1")
        if strict_C and np.any(self.log_C < -1e-12):
            bad.append("C_n >= 1")
        if abs(self.log_C[0]) > 1e-12:
            bad.append("C_0 = 1")
        return bad


def cantor_dust(n_max: int, ratio: float = 3.0, children: int = 4) -> SeqData:
    n = np.arange(n_max + 1, dtype=float)
    logC = np.full(n_max + 1, math.log(children))
    logC[0] = 0.0
    return SeqData(-n * math.log(ratio), -n * math.log(ratio), np.full(n_max + 1, -math.log(ratio)), logC)


def tree_sequences(w: Weight, n_max: int, eps: float = 0.01, t: Optional[float] = None) -> SeqData:
    """Sequence data of the singular-vector tree; t defaults to 100/eps^2.

    W_n, L_n are the full side lengths of beta at level n, C_n the guaranteed
    son count and rho_n = e^{-w1 n t}.
    """
    t = 100 / eps ** 2 if t is None else t
    n = np.arange(n_max + 1, dtype=float)
    tn = n * (n + 1) / 2 * t
    tn1 = (n + 1) * (n + 2) / 2 * t
    with np.errstate(divide="ignore"):
        lead = np.log(2 * eps / n)
        logC = np.log(eps ** 2 / (100 * n ** 2)) + 2 * n * t
    logW = lead - w.a * tn1 - tn
    logL = lead - w.b * tn1 - tn
    logW[0], logL[0], logC[0] = -w.a * t, -w.b * t, 0.0
    return SeqData(logW, logL, -w.a * n * t, logC)


@dataclass
class LowerBoundResult:
    s: Optional[float]
    applicable: bool
    horizon: int
    n_threshold: int
    window: list
    D: list
    saturated: list
    series: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"s": self.s, "applicable": self.applicable, "horizon": self.horizon,
                "n_threshold": self.n_threshold, "window": self.window}


def _D_indices(seq: SeqData):
    N = seq.n_max
    D, sat = [], []
    for n in range(N + 1):
        ok = np.flatnonzero(seq.log_L[n:] >= seq.log_W[n] - 1e-12)
        d = n + int(ok[-1]) if len(ok) else n
        D.append(d)
        sat.append(d == N)
    return D, sat


def lower_bound_s(seq: SeqData, t_grid: Sequence[float], n_threshold: Optional[int] = None,
                  value_threshold: Optional[float] = None) -> LowerBoundResult:
    """Largest grid exponent whose defining expression keeps increasing past n_threshold.

    For each n the expression is
        [log P_n + t log W_n + t log rho_{n+1} + sum_{i=n+1}^{D_n} log(rho_i C_i)] / max(D_n - n, 1).
    Increasing means its least-squares slope over the unsaturated n >= n_threshold
    is positive; n_threshold defaults to half the horizon.  With value_threshold
    set, the expression must also stay above it on that window.
    """
    bad = seq.validate(strict_C=False)
    if bad:
        raise ValueError("invalid sequence data: " + ", ".join(bad))
    N = seq.n_max
    n0 = N // 2 if n_threshold is None else int(n_threshold)
    D, sat = _D_indices(seq)
    ns = np.array([n for n in range(n0, N) if not sat[n]], dtype=np.int64)
    if len(ns) < 3:
        raise HorizonTooShort(f"fewer than 3 unsaturated n in [{n0}, {N})")
    logP = np.cumsum(seq.log_C)
    pref = np.concatenate([[0.0], np.cumsum(seq.log_rho + seq.log_C)])
    Dn = np.array([D[n] for n in ns])
    base = logP[ns] + pref[Dn + 1] - pref[ns + 1]
    slope = seq.log_W[ns] + seq.log_rho[ns + 1]
    den = np.maximum(Dn - ns, 1)
    xs = ns.astype(float)
    best = None
    series = {}
    for t in t_grid:
        E = (base + t * slope) / den
        series[float(t)] = E.tolist()
        above = value_threshold is None or bool(np.all(E > value_threshold))
        if above and np.polyfit(xs, E, 1)[0] > 0:
            best = float(t) if best is None else max(best, float(t))
    return LowerBoundResult(best, best is not None and best > 1, N, n0,
                            [int(xs[0]), int(xs[-1])], D, sat, series)


@dataclass
class LocalDimResult:
    dim: float
    ratios: list
    k: float


def local_dim_cor(seq: SeqData, quartile: float = 0.25) -> LocalDimResult:
    """1 + average over the last quartile of log(L_n C_n / L_{n-1}) / -log(W_n / W_{n-1}).

    The growth assumptions are checked on the upper half of the horizon; the
    reported k is the smallest constant making them hold there.
    """
    N = seq.n_max
    if np.any(np.diff(seq.log_W) >= 0):
        raise AssumptionViolated("W_n must be strictly decreasing")
    n = np.arange(max(2, N // 2), N + 1)
    lc = seq.log_C[n]
    if np.any(lc <= 0):
        raise AssumptionViolated("son counts must exceed 1 (e^{n/k} <= C_n)")
    if np.any(seq.log_rho[n] > 0):
        raise AssumptionViolated("rho_n must not exceed 1")
    prod = seq.log_rho[n] + seq.log_C[n] + seq.log_L[n] - seq.log_L[n - 1]
    k = float(max(np.max(n / lc), np.max(lc / n), np.max(-seq.log_rho[n] / n),
                  np.max(np.maximum(-prod, 0) / np.log(n))))
    m = np.arange(1, N + 1)
    ratios = (seq.log_L[m] + seq.log_C[m] - seq.log_L[m - 1]) / -(seq.log_W[m] - seq.log_W[m - 1])
    q = max(1, int(math.ceil(quartile * len(ratios))))
    return LocalDimResult(1 + float(np.mean(ratios[-q:])), ratios.tolist(), k)


# ---- upper bound relation ---------------------------------------------------

@dataclass(frozen=True)
class CoverNode:
    u: tuple

    @property
    def size(self) -> int:
        return int(self.u[2])

    def rect(self, w: Weight) -> tuple:
        q = self.size
        c = center(self.u)
        return ((float(c[0]), float(c[1])), (q ** -(w.a + 1), q ** -(w.b + 1)))

    def L(self, w: Weight) -> float:
        return 2 * self.size ** -(w.b + 1)

    def W(self, w: Weight) -> float:
        return 2 * self.size ** -(w.a + 1)


def upper_relation_check(nodes, sigma: Callable, s: float, w: Weight, rtol: float = 1e-12) -> dict:
    """Sum over children of L W^{s-1} against the parent's value, node by node."""
    if not s > 1:
        raise ValueError("s must exceed 1")
    expo = (s - 1) * (w.a + 1) + w.b + 1
    rows, worst = [], None
    for node in nodes:
        kids = list(sigma(node))
        lhs = sum(k.L(w) * k.W(w) ** (s - 1) for k in kids)
        rhs = node.L(w) * node.W(w) ** (s - 1)
        power = sum((node.size / k.size) ** expo for k in kids)
        row = {"u": list(node.u), "children": len(kids), "ratio": lhs / rhs, "power_sum": power,
               "pass": lhs <= rhs * (1 + rtol)}
        rows.append(row)
        if worst is None or row["ratio"] > worst["ratio"]:
            worst = row
    return {"s": s, "exponent": expo, "rows": rows, "worst": worst,
            "pass": all(r["pass"] for r in rows)}


# ---- covering relation -----------------------------------------------------

def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return sum(int(x) * int(y) for x, y in zip(a, b))


def in_Q_eps(v, w: Weight, eps: float) -> bool:
    q = int(v[2])
    if q <= 1 or math.gcd(*(int(c) for c in v)) != 1:
        return False
    return r_route_a(v, w)[0] * q < eps


def _plane_basis(normal):
    """Integer basis (b1, b2) of {v in Z^3 : normal . v = 0} with b2[2] == 0, b1[2] > 0."""
    n = [int(c) for c in normal]
    g = math.gcd(*n)
    if g == 0:
        raise ValueError("zero normal")
    n = [c // g for c in n]
    # column-reduce n to (+-1, 0, 0) by unimodular steps; track the transform
    M = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]  # columns are images of e_j
    row = n[:]

    def combine(i, j, k):  # col_j -= k * col_i
        row[j] -= k * row[i]
        for r in range(3):
            M[r][j] -= k * M[r][i]

    def swap(i, j):
        row[i], row[j] = row[j], row[i]
        for r in range(3):
            M[r][i], M[r][j] = M[r][j], M[r][i]

    for j in (1, 2):
        while row[j] != 0:
            combine(j, 0, row[0] // row[j])
            swap(0, j)
    b1 = [M[r][1] for r in range(3)]
    b2 = [M[r][2] for r in range(3)]
    # make the second vector horizontal
    while b2[2] != 0:
        k = b1[2] // b2[2]
        b1 = [x - k * y for x, y in zip(b1, b2)]
        b1, b2 = b2, b1
    if b1[2] < 0:
        b1 = [-x for x in b1]
    return tuple(b1), tuple(b2)


def _modinv(a: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Elementwise inverse of a mod m (gcd 1 assumed); 0 where m == 1."""
    r0, r1 = m.copy(), a % m
    s0, s1 = np.zeros_like(a), np.ones_like(a)
    while r1.any():
        nz = r1 != 0
        k = np.where(nz, r0 // np.where(nz, r1, 1), 0)
        r0, r1 = np.where(nz, r1, r0), np.where(nz, r0 - k * r1, r1)
        s0, s1 = np.where(nz, s1, s0), np.where(nz, s0 - k * s1, s1)
    return s0 % m


def q_eps_mask(V, w: Weight, eps: float) -> np.ndarray:
    """Batched Q_eps membership for rows (p1, p2, q).

    r(v)|v| < eps iff the planar lattice Z^2 + Z v^ has a nonzero point in the
    box |y_i| < (eps/q)^{w_i}.  After rescaling that box to the unit square and
    Lagrange-reducing, only b1, b2 and b1 +- b2 can land inside it.  Rows within
    1e-9 of the boundary are settled by the residue scan.
    """
    V = np.asarray(V, dtype=np.int64).reshape(-1, 3)
    out = np.zeros(len(V), dtype=bool)
    good = (V[:, 2] > 1) & (_gcd3(V) == 1)
    idx = np.flatnonzero(good)
    if len(idx) == 0:
        return out
    q = V[idx, 2]
    p1, p2 = V[idx, 0] % q, V[idx, 1] % q
    # basis of {(a, b): (a, b) = l (p1, p2) mod q}: (g, s p2 mod q), (0, q/g)
    g = np.gcd(p1, q)
    s = _modinv(p1 // g, q // g)
    rho = eps / q.astype(float)
    sx, sy = rho ** w.a, rho ** w.b
    qf = q.astype(float)
    b1 = np.stack([g / qf / sx, ((s * p2) % q) / qf / sy], axis=1)
    b2 = np.stack([np.zeros(len(q)), (q // g) / qf / sy], axis=1)
    for _ in range(200):
        n1 = (b1 ** 2).sum(1)
        n2 = (b2 ** 2).sum(1)
        sw = n2 < n1
        b1[sw], b2[sw] = b2[sw].copy(), b1[sw].copy()
        n1 = (b1 ** 2).sum(1)
        mu = np.rint((b1 * b2).sum(1) / n1)
        if not mu.any():
            break
        b2 = b2 - mu[:, None] * b1
    cands = np.stack([b1, b2, b1 + b2, b1 - b2])
    sup = np.abs(cands).max(axis=2).min(axis=0)
    res = sup < 1
    edge = np.flatnonzero(np.abs(sup - 1) < 1e-9)
    for i in edge:
        res[i] = in_Q_eps(V[idx[i]], w, eps)
    out[idx] = res
    return out


def _gcd3(V: np.ndarray) -> np.ndarray:
    return np.gcd(np.gcd(V[:, 0], V[:, 1]), V[:, 2])


def _qualities(V: np.ndarray, u, w: Weight) -> np.ndarray:
    """A(v^, u) for each row v, in floating point."""
    q = float(u[2])
    d1 = np.abs(q * V[:, 0] / V[:, 2] - u[0])
    d2 = np.abs(q * V[:, 1] / V[:, 2] - u[1])
    return np.maximum(d1 ** (1 / w.a), d2 ** (1 / w.b))


def _box_candidates(u, qmin: int, qmax: int, half_fn, cap: int) -> np.ndarray:
    """Integer (p1, p2, q) with qmin <= q <= qmax and |p_i/q - u_i/|u|| <= half_i(q)."""
    if qmax < qmin:
        return np.zeros((0, 3), dtype=np.int64)
    qs = np.arange(qmin, qmax + 1, dtype=np.int64)
    h1, h2 = half_fn(qs.astype(float))
    t1, t2 = u[0] / u[2], u[1] / u[2]
    lo1 = np.ceil(qs * (t1 - h1) - 1e-9).astype(np.int64)
    hi1 = np.floor(qs * (t1 + h1) + 1e-9).astype(np.int64)
    lo2 = np.ceil(qs * (t2 - h2) - 1e-9).astype(np.int64)
    hi2 = np.floor(qs * (t2 + h2) + 1e-9).astype(np.int64)
    i1, a = _expand(lo1, hi1, cap)
    i2, b = _expand(lo2[i1], hi2[i1], cap)
    return np.column_stack([a[i2], b, qs[i1][i2]])


@dataclass
class CoverResult:
    """D(u, eps) as an (N, 3) array sorted by (|v|, p1, p2); E_sets keeps only
    the v whose E-set is nonempty."""
    u: tuple
    u_prime: tuple
    r_u: float
    eps: float
    vmax: int
    D: np.ndarray
    E_sets: dict

    @property
    def D_set(self) -> list:
        return [tuple(v) for v in self.D.tolist()]

    def contains(self, v) -> bool:
        return bool((self.D == np.asarray(v, dtype=np.int64)).all(axis=1).any())

    def D_sum(self, t: float) -> float:
        return float(((self.u[2] / self.D[:, 2].astype(float)) ** t).sum())

    def E_sum(self, t: float) -> float:
        return float(sum((v[2] / x[2]) ** t for v, es in self.E_sets.items() for x in es))

    def E_count(self) -> int:
        return sum(len(es) for es in self.E_sets.values())


def _D_set(u, normal, c: float, w: Weight, eps: float, vmax: int) -> list:
    """Lattice points of the plane with |u| <= |v| <= vmax and A(v^, u) < c, then Q_eps."""
    b1, b2 = _plane_basis(normal)
    g = b1[2]
    q = u[2]
    alphas = np.arange(-(-q // g), vmax // g + 1, dtype=np.int64)
    if len(alphas) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    v3 = alphas * g
    lo = np.full(len(alphas), -np.inf)
    hi = np.full(len(alphas), np.inf)
    ok = np.ones(len(alphas), dtype=bool)
    for i, wi in ((0, w.a), (1, w.b)):
        # |alpha b1_i + beta b2_i - v3 u_i/q| < v3 c^{w_i}/q
        centre = alphas * b1[i] - v3 * u[i] / q
        rad = v3 * c ** wi / q
        if b2[i] == 0:
            ok &= np.abs(centre) < rad
            continue
        e1 = (-rad - centre) / b2[i]
        e2 = (rad - centre) / b2[i]
        lo = np.maximum(lo, np.minimum(e1, e2))
        hi = np.minimum(hi, np.maximum(e1, e2))
    lo_i = np.where(ok, np.ceil(lo - 1e-9), 0).astype(np.int64)
    hi_i = np.where(ok, np.floor(hi + 1e-9), -1).astype(np.int64)
    idx, beta = _expand(lo_i, hi_i, 10 ** 7)
    V = alphas[idx, None] * np.array(b1) + beta[:, None] * np.array(b2)
    if len(V) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    V = V[(_gcd3(V) == 1) & (_qualities(V, u, w) < c)]
    is_u = (V == np.array(u)).all(axis=1)
    V = V[is_u | q_eps_mask(V, w, eps)]
    return V[np.lexsort((V[:, 1], V[:, 0], V[:, 2]))]


def _e_reach(normal, w: Weight, eps: float, vmax: int, qv) -> np.ndarray:
    """Smallest |x| that can lie in E(., v, eps) for each |v|.

    x off the plane has |n.x| >= 1 while n.v = 0, which forces
    |n1| eps^{w1} |x|^{w2} + |n2| eps^{w2} |x|^{w1} > |v|.
    """
    qq = np.arange(vmax + 1, dtype=float)
    reach = (abs(normal[0]) * eps ** w.a * qq ** w.b
             + abs(normal[1]) * eps ** w.b * qq ** w.a) * (1 + 1e-9)
    return np.searchsorted(reach, qv, side="right")


def _E_set(v, normal, w: Weight, eps: float, vmax: int, qmin: Optional[int] = None,
           cap: int = 10 ** 8) -> list:
    """Primitive x off the plane with |v| < |x| <= vmax and A(x^, v) < eps/|x|."""
    qv = int(v[2])
    qmin = qv + 1 if qmin is None else max(qmin, qv + 1)
    # A(x^, v) < eps/|x|  <=>  |x^_i - v^_i| < (eps/|x|)^{w_i}/|v|
    X = _box_candidates(v, qmin, vmax,
                        lambda qs: ((eps / qs) ** w.a / qv, (eps / qs) ** w.b / qv), cap)
    if len(X):
        X = X[(X @ np.array(normal, dtype=np.int64) != 0) & (_gcd3(X) == 1)]
        X = X[_qualities(X, v, w) < eps / X[:, 2]]
    return [tuple(x) for x in X.tolist()]


def cover_relation(u, w: Weight, eps: float, vmax: int, cap: int = 10 ** 8) -> CoverResult:
    """The sets D(u, eps) and E(u, v, eps) up to denominator vmax."""
    w.require_nondegenerate()
    u = tuple(int(c) for c in u)
    rv = r_of(u, w)
    if not (u[2] > 1 and rv.value * u[2] < eps):
        raise NotInQEps(f"r(u)|u| = {rv.value * u[2]:g} is not below eps = {eps}")
    up = tuple(int(c) for c in rv.witness)
    normal = _cross(u, up)
    c = 2 ** (2 / w.b) * rv.value
    D = _D_set(u, normal, c, w, eps, vmax)
    E = {}
    qv = D[:, 2]
    qmin = np.maximum(qv + 1, _e_reach(normal, w, eps, vmax, qv))
    for i in np.flatnonzero(qmin <= vmax):
        v = tuple(int(c) for c in D[i])
        es = _E_set(v, normal, w, eps, vmax, int(qmin[i]), cap)
        if es:
            E[v] = es
    return CoverResult(u, up, rv.value, eps, vmax, D, E)


def plane_equal(u, up, v, vp) -> bool:
    """span(u, u') == span(v, v') as planes, by integer cross products."""
    n1, n2 = _cross(u, up), _cross(v, vp)
    return _cross(n1, n2) == (0, 0, 0) and any(n1)


# ---- box counting -----------------------------------------------------------

@dataclass
class BoxCountFit:
    dim: float
    intercept: float
    r2: float
    log_inv_scale: list
    log_count: list
    residuals: list


def box_counting_dim(points, scales: Sequence[float]) -> BoxCountFit:
    P = np.asarray(points, dtype=float)
    scales = np.asarray(sorted(scales), dtype=float)
    if P.ndim != 2 or len(P) < 100:
        raise DegenerateFit("need at least 100 points")
    if len(scales) < 4 or scales[-1] / scales[0] < 10 * (1 - 1e-9):
        raise DegenerateFit("need at least 4 scales spanning a decade")
    counts = [len(np.unique(np.floor(P / d).astype(np.int64), axis=0)) for d in scales]
    x = np.log(1 / scales)
    y = np.log(counts)
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - float(np.sum(res ** 2)) / ss if ss > 0 else 1.0
    return BoxCountFit(float(slope), float(icpt), r2, x.tolist(), y.tolist(), res.tolist())
