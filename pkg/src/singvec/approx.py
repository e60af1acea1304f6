"""Weighted best approximation: the quasi-norm, record sequences, r(u) and the cells Δ(u)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import DenominatorOne, NotPrimitive, RouteMismatch, SequenceTooShort
from .lattice import LatticeRep, Weight, enumerate_points

DOUBLE_QMAX = 10**6


def wnorm(y, w: Weight) -> float:
    return max(abs(float(y[0])) ** (1 / w.a), abs(float(y[1])) ** (1 / w.b))


def wnorm_rows(Y: np.ndarray, w: Weight) -> np.ndarray:
    Y = np.abs(np.asarray(Y, dtype=float))
    return np.maximum(Y[..., 0] ** (1 / w.a), Y[..., 1] ** (1 / w.b))


def _as_point(x):
    return tuple(v if isinstance(v, Fraction) else (Fraction(v) if isinstance(v, int) else float(v)) for v in x)


def quality(x, u, w: Weight) -> float:
    """A(x, u) = ||q x - p||_w for u = (p1, p2, q)."""
    p1, p2, q = (int(v) for v in u)
    if q < 1:
        raise ValueError("quality needs q >= 1")
    x = _as_point(x)
    return wnorm((q * x[0] - p1, q * x[1] - p2), w)


def center(u) -> tuple:
    return (Fraction(int(u[0]), int(u[2])), Fraction(int(u[1]), int(u[2])))


@dataclass(frozen=True)
class BestApproxRecord:
    u: tuple
    quality: float
    exact: bool = False


@dataclass(frozen=True)
class SigmaSequence:
    records: tuple
    x: tuple
    qmax: int
    w: Weight

    def __len__(self):
        return len(self.records)

    @property
    def qualities(self):
        return [r.quality for r in self.records]

    @property
    def exact(self) -> bool:
        return bool(self.records) and self.records[-1].exact

    def singularity_series(self):
        """quality_i * |u_{i+1}|; tends to 0 exactly for singular x."""
        rs = self.records
        return [rs[i].quality * rs[i + 1].u[2] for i in range(len(rs) - 1)]


def _nearest_half_even_int(num: np.ndarray, den: int) -> np.ndarray:
    fl = num // den
    rem = num - fl * den
    up = (2 * rem > den) | ((2 * rem == den) & (fl % 2 == 1))
    return fl + up


def _scan_double(x, w, qmax):
    q = np.arange(1, qmax + 1, dtype=np.int64)
    P, D = [], []
    for xi in x:
        if isinstance(xi, Fraction):
            num = q * xi.numerator
            p = _nearest_half_even_int(num, xi.denominator)
            d = np.abs(num - p * xi.denominator) / xi.denominator
        else:
            qx = q * xi
            p = np.rint(qx).astype(np.int64)
            d = np.abs(qx - p)
        P.append(p)
        D.append(d)
    A = np.maximum(D[0] ** (1 / w.a), D[1] ** (1 / w.b))
    return q, P[0], P[1], A


def _scan_quad(x, w, qmax):
    import mpmath
    with mpmath.workprec(113):
        xs = [mpmath.mpf(v.numerator) / v.denominator if isinstance(v, Fraction) else mpmath.mpf(v) for v in x]
        inv = [mpmath.mpf(v.denominator) / v.numerator if isinstance(v, Fraction) else 1 / mpmath.mpf(v)
               for v in (w.w1, w.w2)]
        out_p1, out_p2, out_a = [], [], []
        for q in range(1, qmax + 1):
            ps, ds = [], []
            for xi in xs:
                qx = q * xi
                p = int(mpmath.nint(qx))
                ps.append(p)
                ds.append(abs(qx - p))
            out_p1.append(ps[0])
            out_p2.append(ps[1])
            out_a.append(float(max(ds[0] ** inv[0], ds[1] ** inv[1])))
    return (np.arange(1, qmax + 1), np.array(out_p1, dtype=object),
            np.array(out_p2, dtype=object), np.array(out_a))


def best_approx_sequence(x, w: Weight, qmax: int, precision: str = "double") -> SigmaSequence:
    """Record-breaking approximants (p, q) with 2 <= q <= qmax.

    For each q the numerator is the componentwise nearest integer (ties to even);
    q is a record when its quality is strictly below every earlier one.
    """
    if qmax < 2:
        raise ValueError("qmax must be at least 2")
    x = _as_point(x)
    if precision == "double":
        if qmax > DOUBLE_QMAX:
            raise ValueError(f"qmax > {DOUBLE_QMAX} needs precision='quad'")
        q, p1, p2, A = _scan_double(x, w, qmax)
    elif precision == "quad":
        q, p1, p2, A = _scan_quad(x, w, qmax)
    else:
        raise ValueError(f"unknown precision {precision!r}")
    zeros = np.flatnonzero(A == 0)
    stop = int(zeros[0]) + 1 if len(zeros) else len(A)
    A = A[:stop]
    prev = np.concatenate([[np.inf], np.minimum.accumulate(A)[:-1]])
    idx = np.flatnonzero(A < prev)
    records = tuple(
        BestApproxRecord((int(p1[i]), int(p2[i]), int(q[i])), float(A[i]), bool(A[i] == 0))
        for i in idx if q[i] > 1)
    return SigmaSequence(records, x, qmax, w)


def _ext_gcd(a: int, b: int):
    old_r, r, old_s, s, old_t, t = a, b, 1, 0, 0, 1
    while r:
        k = old_r // r
        old_r, r = r, old_r - k * r
        old_s, s = s, old_s - k * s
        old_t, t = t, old_t - k * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def planar_basis(rows) -> list:
    """Row-echelon basis of the integer lattice in Z^2 spanned by the given rows."""
    top = None
    rest = []
    for r in rows:
        r = [int(r[0]), int(r[1])]
        if top is None:
            top = r
            continue
        a, b = top[0], r[0]
        if a == 0 and b == 0:
            rest.append(r)
            continue
        g, s, t = _ext_gcd(a, b)
        top, other = ([s * top[0] + t * r[0], s * top[1] + t * r[1]],
                      [(b // g) * top[0] - (a // g) * r[0], (b // g) * top[1] - (a // g) * r[1]])
        rest.append(other)
    h = 0
    for r in rest:
        h = math.gcd(h, r[1])
    return [top, [0, h]]


def _check_u(u):
    p1, p2, q = (int(v) for v in u)
    if q < 0:
        p1, p2, q = -p1, -p2, -q
    if math.gcd(p1, p2, q) != 1:
        raise NotPrimitive(f"{u} is not primitive")
    if q <= 1:
        raise DenominatorOne(f"{u} needs |u| > 1")
    return p1, p2, q


def r_route_a(u, w: Weight):
    """min over 1 <= l <= q/2 of the quality of the nearest (s, l) to û; returns (value, v)."""
    p1, p2, q = _check_u(u)
    l = np.arange(1, q // 2 + 1, dtype=np.int64)
    d, s = [], []
    for p in (p1, p2):
        res = (l * p) % q
        down = q - res
        d.append(np.minimum(res, down) / q)
        # nearest integer to l p / q, ties to even
        s.append(_nearest_half_even_int(l * p, q))
    A = np.maximum(d[0] ** (1 / w.a), d[1] ** (1 / w.b))
    i = int(np.argmin(A))
    return float(A[i]), (int(s[0][i]), int(s[1][i]), int(l[i]))


def projected_lattice(u) -> LatticeRep:
    """Z^2 + Z p/q as a planar lattice, basis from integer echelon form."""
    p1, p2, q = _check_u(u)
    (a, b), (c, d) = planar_basis([(q, 0), (0, q), (p1, p2)])
    return LatticeRep(np.array([[a, c], [b, d]], dtype=float) / q)


def r_route_b(u, w: Weight):
    """Shortest w-quasi-norm vector of the projected lattice; returns (value, vector)."""
    L = projected_lattice(u)
    rho = L.covolume * (1 + 1e-9)
    M = enumerate_points(L, [rho ** w.a, rho ** w.b])
    Y = M @ L.transform.T
    vals = wnorm_rows(Y, w)
    i = int(np.argmin(vals))
    return float(vals[i]), Y[i]


@dataclass(frozen=True)
class RValue:
    value: float
    witness: tuple
    lattice_value: float


def r_of(u, w: Weight, rtol: float = 1e-9) -> RValue:
    """r(u) by brute force over small denominators, confirmed on the projected lattice."""
    a, v = r_route_a(u, w)
    b, _ = r_route_b(u, w)
    if abs(a - b) > rtol * max(a, b):
        raise RouteMismatch(f"r({u}) routes disagree: {a!r} vs {b!r}")
    return RValue(a, v, b)


def bw_rect(u, w: Weight, rho: float):
    """B_w(u, rho) as (center, half-widths); open rectangle."""
    c = center(u)
    q = int(u[2])
    return (float(c[0]), float(c[1])), (rho ** w.a / q, rho ** w.b / q)


@dataclass(frozen=True)
class ApproxGeometry:
    u: tuple
    r_of_u: float
    bw_inner: tuple
    bw_outer: tuple


def approx_geometry(u, w: Weight) -> ApproxGeometry:
    r = r_of(u, w).value
    return ApproxGeometry(tuple(int(v) for v in u), r,
                          bw_rect(u, w, 2 ** (-1 / w.b) * r),
                          bw_rect(u, w, 2 ** (1 / w.b) * r))


def delta_membership(x, u, w: Weight, qscan: Optional[int] = None) -> bool:
    """Whether x lies in the cell Δ(u) where u is the best approximate."""
    p1, p2, q = (int(v) for v in u)
    if qscan is not None and qscan < q:
        raise ValueError("qscan must be at least |u|")
    x = np.array([float(v) for v in _as_point(x)])
    Au = quality(x, u, w)
    if q > 1:
        l = np.arange(1, q, dtype=float)
        lx = np.outer(l, x)
        A = wnorm_rows(lx - np.rint(lx), w)
        if np.any(A <= Au):
            return False
    # same denominator: only numerators inside the quality window can compete
    half = [Au ** w.a, Au ** w.b]
    rng = [np.arange(math.floor(q * x[i] - half[i]), math.ceil(q * x[i] + half[i]) + 1) for i in range(2)]
    S1, S2 = np.meshgrid(rng[0], rng[1], indexing="ij")
    S = np.column_stack([S1.ravel(), S2.ravel()])
    S = S[(S[:, 0] != p1) | (S[:, 1] != p2)]
    if len(S):
        A = wnorm_rows(q * x - S, w)
        if np.any(A < Au):
            return False
    return True


def _grid(rect, scale):
    (c1, c2), (h1, h2) = rect
    pts = []
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            pts.append((c1 + scale * a * h1, c2 + scale * b * h2))
    return pts


@dataclass
class SandwichReport:
    x: tuple
    w: Weight
    qmax: int
    n_records: int
    checks: int = 0
    violations: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    delta_checks: int = 0
    delta_contradictions: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.delta_contradictions


def _estimate_violations(x, u, w, c):
    """A(x, v) < c A(û, v) for all v with |v| <= |u|/2, sampled near both targets."""
    q = int(u[2])
    if q < 2:
        return []
    uh = np.array([u[0] / q, u[1] / q])
    l = np.arange(1, q // 2 + 1, dtype=float)
    bad = []
    cand = []
    for i in range(2):
        base = np.stack([np.rint(l * x[i]), np.rint(l * uh[i])], axis=1)
        cand.append(np.concatenate([base - 1, base, base + 1], axis=1))
    for a in range(cand[0].shape[1]):
        for b in range(cand[1].shape[1]):
            s1, s2 = cand[0][:, a], cand[1][:, b]
            Ax = np.maximum(np.abs(l * x[0] - s1) ** (1 / w.a), np.abs(l * x[1] - s2) ** (1 / w.b))
            Au = np.maximum(np.abs(l * uh[0] - s1) ** (1 / w.a), np.abs(l * uh[1] - s2) ** (1 / w.b))
            k = np.flatnonzero(~(Ax < c * Au))
            for j in k[:5]:
                bad.append({"check": "estimate", "u": list(u), "v": [int(s1[j]), int(s2[j]), int(l[j])],
                            "lhs": float(Ax[j]), "rhs": float(c * Au[j])})
    return bad


def sandwich_check(x, w: Weight, qmax: int, grids: bool = True) -> SandwichReport:
    """Check the two-sided quality bounds along the record sequence of x."""
    w.require_nondegenerate()
    seq = best_approx_sequence(x, w, qmax)
    recs = seq.records
    if len(recs) < 2:
        raise SequenceTooShort(f"only {len(recs)} records below qmax={qmax}")
    xf = np.array([float(v) for v in seq.x])
    c = 2 ** (1 / w.b)
    rep = SandwichReport(tuple(float(v) for v in seq.x), w, qmax, len(recs))
    rvals = [None] + [r_of(rec.u, w).value for rec in recs[1:]]
    for i in range(len(recs) - 1):
        Ai = recs[i].quality
        rn = rvals[i + 1]
        rep.checks += 1
        if not Ai < c * rn:
            rep.violations.append({"check": "upper", "i": i, "A": Ai, "bound": c * rn})
        rep.ratios.append(Ai / rn)
        if not (1 / c <= Ai / rn <= c):
            rep.violations.append({"check": "same-size", "i": i, "ratio": Ai / rn})
        for j in range(i + 1, len(recs)):
            lhs = quality(center(recs[j].u), recs[i].u, w) / c
            rep.checks += 1
            if not lhs < Ai:
                rep.violations.append({"check": "lower", "i": i, "j": j - i, "lhs": lhs, "A": Ai})
    for rec in recs:
        rep.checks += 1
        rep.violations.extend(_estimate_violations(xf, rec.u, w, c))
    if grids:
        for rec, rv in zip(recs, [r_of(recs[0].u, w).value] + rvals[1:]):
            u = rec.u
            inner = bw_rect(u, w, rv / c)
            outer = bw_rect(u, w, rv * c)
            for pt in _grid(inner, 0.99):
                rep.delta_checks += 1
                if not delta_membership(pt, u, w):
                    rep.delta_contradictions.append({"u": list(u), "point": list(pt), "expected": True})
            for k, pt in enumerate(_grid(outer, 1.01)):
                if k == 4:
                    continue
                rep.delta_checks += 1
                if delta_membership(pt, u, w):
                    rep.delta_contradictions.append({"u": list(u), "point": list(pt), "expected": False})
            rep.delta_checks += 1
            if not delta_membership(xf, u, w):
                rep.delta_contradictions.append({"u": list(u), "point": list(xf), "expected": True})
    return rep
