"""Lattice primitives in dimensions 2 and 3.

A lattice is stored as ``transform @ Z^d``.  Enumeration pulls the box
constraints back to integer coordinates and walks the resulting polytope
slice by slice, so the only floating-point error is in the real bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import (CapacityExceeded, InvalidWeight, PreconditionViolated,
                     SingularMatrix)

DEFAULT_CAP = 10**8
BOUNDARY_TOL = 1e-9
_INT_LIMIT = 2**53


def _exact(v):
    """Keep ints/Fractions/rational strings exact, everything else becomes float."""
    if isinstance(v, (int, Fraction)) and not isinstance(v, bool):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v.strip())
    return float(v)


@dataclass(frozen=True)
class Weight:
    w1: object
    w2: object

    def __post_init__(self):
        w1, w2 = _exact(self.w1), _exact(self.w2)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        if isinstance(w1, Fraction) and isinstance(w2, Fraction):
            if w1 + w2 != 1:
                raise InvalidWeight(f"weights must sum to 1, got {w1}+{w2}")
        elif abs(float(w1) + float(w2) - 1.0) > 1e-12:
            raise InvalidWeight(f"weights must sum to 1, got {w1}+{w2}")
        if not (0 < w1 <= 1 and 0 <= w2 < 1):
            raise InvalidWeight(f"need w1 in (0,1], w2 in [0,1), got ({w1}, {w2})")

    @classmethod
    def parse(cls, text: str) -> "Weight":
        parts = text.split(",")
        if len(parts) != 2:
            raise InvalidWeight(f"expected 'w1,w2', got {text!r}")
        try:
            vals = [Fraction(p.strip()) for p in parts]
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidWeight(f"cannot parse weight {text!r}") from exc
        return cls(*vals)

    @property
    def exact(self) -> bool:
        return isinstance(self.w1, Fraction) and isinstance(self.w2, Fraction)

    @property
    def a(self) -> float:
        return float(self.w1)

    @property
    def b(self) -> float:
        return float(self.w2)

    @property
    def degenerate(self) -> bool:
        return self.w2 == 0

    def require_nondegenerate(self) -> "Weight":
        if not (self.w1 >= self.w2 > 0):
            raise InvalidWeight(f"need w1 >= w2 > 0, got ({self.w1}, {self.w2})")
        return self

    def __str__(self):
        return f"{self.w1},{self.w2}"


@dataclass(frozen=True)
class Box3:
    r1: float
    r2: float
    r3: float

    def __post_init__(self):
        for r in (self.r1, self.r2, self.r3):
            if not (r > 0 and math.isfinite(r)):
                raise ValueError(f"box half-widths must be positive, got {self.radii}")

    @classmethod
    def cube(cls, r: float) -> "Box3":
        return cls(r, r, r)

    @property
    def radii(self) -> np.ndarray:
        return np.array([self.r1, self.r2, self.r3], dtype=float)

    @property
    def volume(self) -> float:
        return 8.0 * self.r1 * self.r2 * self.r3

    def scaled(self, s: float) -> "Box3":
        return Box3(self.r1 * s, self.r2 * s, self.r3 * s)


@dataclass(frozen=True)
class StructuredTag:
    """Lattice is diag(diag) @ h(x) @ Z^3 with x kept exact when rational."""
    diag: tuple
    x: tuple
    t: Optional[float] = None

    @property
    def rational(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.x)


def hmat(x) -> np.ndarray:
    return np.array([[1.0, 0.0, float(x[0])], [0.0, 1.0, float(x[1])], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class LatticeRep:
    transform: np.ndarray
    tag: Optional[StructuredTag] = field(default=None)

    def __post_init__(self):
        T = np.array(self.transform, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] not in (2, 3):
            raise ValueError("transform must be a 2x2 or 3x3 matrix")
        if not np.all(np.isfinite(T)) or abs(np.linalg.det(T)) == 0:
            raise SingularMatrix("transform is not of full rank")
        T.setflags(write=False)
        object.__setattr__(self, "transform", T)

    @classmethod
    def standard(cls, d: int = 3) -> "LatticeRep":
        return cls(np.eye(d))

    @classmethod
    def diagonal(cls, *entries) -> "LatticeRep":
        return cls(np.diag([float(e) for e in entries]))

    @classmethod
    def structured(cls, diag: Sequence[float], x, t=None) -> "LatticeRep":
        x = tuple(_exact(v) for v in x)
        diag = tuple(float(d) for d in diag)
        return cls(np.diag(diag) @ hmat(x), StructuredTag(diag, x, t))

    @property
    def dim(self) -> int:
        return self.transform.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.transform))

    @property
    def covolume(self) -> float:
        return abs(self.det)

    def is_unimodular(self, tol: float = 1e-9) -> bool:
        return abs(self.covolume - 1.0) <= tol

    def vectors(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.transform.T


def knorm(v, K) -> float:
    """Norm whose unit ball is the box K."""
    radii = K.radii if isinstance(K, Box3) else np.asarray(K, dtype=float)
    return float(np.max(np.abs(np.asarray(v, dtype=float)) / radii))


def _knorms(V: np.ndarray, radii: np.ndarray) -> np.ndarray:
    if len(V) == 0:
        return np.zeros(0)
    return np.max(np.abs(V) / radii, axis=1)


def _ceil(v):
    return np.ceil(v - 1e-9 * np.maximum(1.0, np.abs(v)))


def _floor(v):
    return np.floor(v + 1e-9 * np.maximum(1.0, np.abs(v)))


def _check_range(hi):
    if np.any(np.abs(hi) > _INT_LIMIT):
        raise CapacityExceeded("integer coordinates exceed the exact float range")


def _expand(lo: np.ndarray, hi: np.ndarray, cap: int):
    """For intervals [lo_i, hi_i] return (interval index, integer value) pairs."""
    n = np.maximum(hi - lo + 1, 0).astype(np.int64)
    total = int(n.sum())
    if total > cap:
        raise CapacityExceeded(f"enumeration needs {total} candidates (cap {cap})")
    idx = np.repeat(np.arange(len(lo)), n)
    starts = np.cumsum(n) - n
    vals = lo.astype(np.int64)[idx] + (np.arange(total) - starts[idx])
    return idx, vals


def _first_coord_range(T, rr, cols, tail, cap):
    """Interval of the first integer coordinate given the remaining ones.

    cols: values of the later coordinates (n x k); tail = T[:, 1:].
    Returns lo, hi arrays and a boolean mask of rows that are feasible at all.
    """
    c = cols @ tail.T
    n = len(cols)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    ok = np.ones(n, dtype=bool)
    for i in range(T.shape[0]):
        a = T[i, 0]
        if a == 0:
            ok &= np.abs(c[:, i]) <= rr[i] * (1 + 1e-9) + 1e-12
            continue
        with np.errstate(over="ignore"):
            b1 = (-rr[i] - c[:, i]) / a
            b2 = (rr[i] - c[:, i]) / a
        lo = np.maximum(lo, np.minimum(b1, b2))
        hi = np.minimum(hi, np.maximum(b1, b2))
    # a tiny leading entry can push an infeasible row to +-inf
    ok &= np.isfinite(lo) & np.isfinite(hi) & (lo <= hi + 1e-9 * np.maximum(1.0, np.abs(hi)))
    lo = np.where(ok, lo, 1.0)
    hi = np.where(ok, hi, 0.0)
    return _ceil(lo), _floor(hi), ok


def _enum2(T, rr, cap):
    S = np.linalg.inv(T)
    h = float(np.abs(S[1]) @ rr)
    _check_range(np.array([h]))
    m2 = np.arange(-int(_floor(np.array(h))), int(_floor(np.array(h))) + 1)
    lo, hi, ok = _first_coord_range(T, rr, m2[:, None].astype(float), T[:, 1:], cap)
    hi = np.where(ok, hi, lo - 1)
    idx, m1 = _expand(lo, hi, cap)
    return np.column_stack([m1, m2[idx]])


def _m2_range_3d(T, rr, m3):
    """Range of m2 over the planar slice {m1, m2 real : |T(m1,m2,m3)| <= rr}."""
    c = np.outer(m3, T[:, 2])
    A = T[:, :2]
    tol = 1e-9 * (rr[None, :] + np.abs(c)) + 1e-12
    lo = np.full(len(m3), np.inf)
    hi = np.full(len(m3), -np.inf)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        M = A[[i, j]]
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if abs(det) <= 1e-14 * (np.abs(M).max() ** 2):
            continue
        Minv = np.linalg.inv(M)
        for si in (-1.0, 1.0):
            for sj in (-1.0, 1.0):
                rhs = np.column_stack([si * rr[i] - c[:, i], sj * rr[j] - c[:, j]])
                v = rhs @ Minv.T
                resid = np.abs(v @ A.T + c)
                feas = np.all(resid <= rr[None, :] + tol * (1 + np.abs(v @ np.abs(A).T)), axis=1)
                lo = np.where(feas, np.minimum(lo, v[:, 1]), lo)
                hi = np.where(feas, np.maximum(hi, v[:, 1]), hi)
    empty = ~np.isfinite(lo)
    lo = np.where(empty, 1.0, _ceil(np.where(empty, 0, lo)))
    hi = np.where(empty, 0.0, _floor(np.where(empty, 0, hi)))
    return lo, hi


def _enum3(T, rr, cap):
    S = np.linalg.inv(T)
    h3 = float(np.abs(S[2]) @ rr)
    _check_range(np.array([h3]))
    k = int(_floor(np.array(h3)))
    if 2 * k + 1 > cap:
        raise CapacityExceeded(f"last-coordinate range {2 * k + 1} exceeds cap {cap}")
    m3 = np.arange(-k, k + 1)
    lo2, hi2 = _m2_range_3d(T, rr, m3.astype(float))
    _check_range(np.concatenate([lo2, hi2]))
    idx, m2 = _expand(lo2, hi2, cap)
    m3 = m3[idx]
    tail = np.column_stack([m2, m3]).astype(float)
    lo1, hi1, ok = _first_coord_range(T, rr, tail, T[:, 1:], cap)
    hi1 = np.where(ok, hi1, lo1 - 1)
    _check_range(np.concatenate([lo1[ok], hi1[ok]]) if ok.any() else np.zeros(1))
    idx, m1 = _expand(lo1, hi1, cap)
    return np.column_stack([m1, m2[idx], m3[idx]])


def lex_order(M: np.ndarray) -> np.ndarray:
    """Sort integer points by (last coordinate, first, second)."""
    if len(M) == 0:
        return M
    if M.shape[1] == 3:
        return M[np.lexsort((M[:, 1], M[:, 0], M[:, 2]))]
    return M[np.lexsort((M[:, 0], M[:, 1]))]


def primitive_mask(M: np.ndarray) -> np.ndarray:
    return np.gcd.reduce(np.abs(M), axis=1) == 1


def enumerate_points(L: LatticeRep, K, primitive_only: bool = False,
                     cap: int = DEFAULT_CAP, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Integer coordinate vectors m != 0 with L.transform @ m in the closed box K.

    K is a Box3 or a sequence of half-widths matching the lattice dimension.
    Returns an (N, d) int64 array sorted by (q, p1, p2).
    """
    T = L.transform
    radii = K.radii if isinstance(K, Box3) else np.asarray(K, dtype=float)
    if radii.shape != (T.shape[0],) or np.any(radii <= 0):
        raise ValueError("box does not match lattice dimension")
    predicted = np.prod(2 * radii) / L.covolume
    if predicted > cap:
        raise CapacityExceeded(f"predicted {predicted:.3g} points exceeds cap {cap}")
    rr = radii * (1 + tol)
    M = _enum3(T, rr, cap) if T.shape[0] == 3 else _enum2(T, rr, cap)
    if len(M):
        keep = (_knorms(M @ T.T, radii) <= 1 + tol) & np.any(M != 0, axis=1)
        M = M[keep]
    if primitive_only and len(M):
        M = M[primitive_mask(M)]
    return lex_order(M.astype(np.int64))


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    order = [v.shape[0] - 1] + list(range(v.shape[0] - 1))
    for i in order:
        if v[i] != 0:
            return v if v[i] > 0 else -v
    return v


@dataclass(frozen=True)
class ShortVector:
    norm: float
    coords: np.ndarray
    vector: np.ndarray


def shortest_vector(L: LatticeRep, cap: int = DEFAULT_CAP) -> ShortVector:
    """Euclidean shortest nonzero vector by cube enumeration.

    The cube of half-width covolume^(1/d) always holds a nonzero point, and once
    a vector of norm m is in hand every shorter one lies in the cube of half-width m.
    """
    d = L.dim
    R = L.covolume ** (1.0 / d) * (1 + 1e-9)
    for _ in range(2):
        M = enumerate_points(L, [R] * d, cap=cap)
        V = M @ L.transform.T
        norms = np.sqrt(np.sum(V * V, axis=1))
        i = int(np.argmin(norms))
        if norms[i] <= R:
            break
        R = float(norms[i]) * (1 + 1e-9)
    m = _canonical_sign(M[i])
    return ShortVector(float(norms[i]), m, L.vectors(m))


@dataclass(frozen=True, eq=False)
class MinimaReport:
    lambdas: tuple
    witnesses: np.ndarray
    theta: float

    @property
    def product(self) -> float:
        return float(np.prod(self.lambdas)) * self.theta

    def sandwich_ok(self, tol: float = 1e-6) -> bool:
        d = len(self.lambdas)
        lower = 2.0 ** d / math.factorial(d)
        p = self.product
        return lower * (1 - tol) <= p <= 2.0 ** d * (1 + tol)


def _increases_rank(basis: list, m: np.ndarray) -> bool:
    # exact integer arithmetic
    vecs = [list(map(int, b)) for b in basis] + [list(map(int, m))]
    if len(vecs) == 1:
        return any(vecs[0])
    if len(vecs) == 2:
        a, b = vecs
        if len(a) == 2:
            return a[0] * b[1] - a[1] * b[0] != 0
        return any((a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]))
    a, b, c = vecs
    return (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0])) != 0


def successive_minima(L: LatticeRep, K, cap: int = DEFAULT_CAP) -> MinimaReport:
    """Successive minima of L with respect to the box K.

    The shell radius doubles until the enumerated set has full rank; the minima
    are then read off exactly by a greedy pass in order of K-norm.
    """
    radii = K.radii if isinstance(K, Box3) else np.asarray(K, dtype=float)
    d = L.dim
    theta = float(np.prod(2 * radii)) / L.covolume
    r = 2.0 * theta ** (-1.0 / d)
    while True:
        M = enumerate_points(L, radii * r, cap=cap)
        if len(M) >= d and np.linalg.matrix_rank(M.astype(float)) == d:
            break
        r *= 2.0
    norms = _knorms(M @ L.transform.T, radii)
    basis, lams = [], []
    # ties in K-norm go to the coordinate vector with smallest entries
    for i in np.lexsort((np.abs(M).sum(axis=1), norms)):
        if _increases_rank(basis, M[i]):
            basis.append(_canonical_sign(M[i]))
            lams.append(float(norms[i]))
            if len(basis) == d:
                break
    return MinimaReport(tuple(lams), np.array(basis, dtype=np.int64), theta)


def dual_lattice(L: LatticeRep) -> LatticeRep:
    if abs(L.det) < 1e-15:
        raise SingularMatrix("determinant below 1e-15")
    return LatticeRep(np.linalg.inv(L.transform).T)


@dataclass(frozen=True, eq=False)
class KStarResult:
    ok: bool
    coords: Optional[np.ndarray] = None   # integer coordinates in the dual basis
    witness: Optional[np.ndarray] = None  # the dual vector itself
    norm: Optional[float] = None

    def __bool__(self):
        return self.ok


def _gauss_reduce(B: np.ndarray, U: list):
    """Lagrange reduction of a planar basis (rows of B) tracking integer coefficients U."""
    b1, b2 = B[0].copy(), B[1].copy()
    u1, u2 = list(U[0]), list(U[1])
    for _ in range(10000):
        if b1 @ b1 > b2 @ b2:
            b1, b2, u1, u2 = b2, b1, u2, u1
        mu = round(float(b1 @ b2) / float(b1 @ b1))
        if mu == 0:
            break
        b2 = b2 - mu * b1
        u2 = [u2[0] - mu * u1[0], u2[1] - mu * u1[1]]
    if b1 @ b1 > b2 @ b2:
        b1, u1 = b2, u2
    return b1, u1


def kstar_structured(diag, x, eps: float):
    """Shortest dual vector of diag @ h(x) @ Z^3 for rational x, when it is below 1/(Q d3).

    Every dual vector shorter than eps then pairs (k1, k2) on the planar
    congruence lattice P1 k1 + P2 k2 = 0 mod Q, so a Lagrange reduction decides.
    Returns (coords, vector, norm) of the shortest such vector, or None when
    the shortcut does not apply.
    """
    d1, d2, d3 = diag
    x1, x2 = x
    Q = math.lcm(x1.denominator, x2.denominator)
    if eps * Q * abs(d3) > 1:
        return None
    P1, P2 = int(x1 * Q), int(x2 * Q)
    # short dual vectors must satisfy P1 k1 + P2 k2 = Q k3 exactly
    g1 = math.gcd(P1, Q)
    c = g1 // math.gcd(g1, P2)
    mod = Q // g1
    if mod == 1:
        k1c = 0
    else:
        inv = pow((P1 // g1) % mod, -1, mod)
        k1c = (-(P2 * c) // g1 * inv) % mod
    U = [[mod, 0], [k1c, c]]
    B = np.array([[U[0][0] / d1, U[0][1] / d2], [U[1][0] / d1, U[1][1] / d2]])
    b, u = _gauss_reduce(B, U)
    k1, k2 = u
    num = P1 * k1 + P2 * k2
    assert num % Q == 0
    coords = np.array([k1, k2, num // Q], dtype=np.int64)
    vec = np.array([k1 / d1, k2 / d2, 0.0])
    return coords, vec, float(math.hypot(vec[0], vec[1]))


def in_Kstar(L: LatticeRep, eps: float, cap: int = DEFAULT_CAP,
             structured: bool = True) -> KStarResult:
    """Whether every nonzero dual vector has Euclidean norm >= eps."""
    if not L.is_unimodular():
        raise PreconditionViolated("lattice is not unimodular")
    if not eps > 0:
        raise PreconditionViolated(f"need eps > 0, got {eps}")
    thresh = eps * (1 - 1e-12)
    if structured and L.tag is not None and L.tag.rational and L.dim == 3:
        found = kstar_structured(L.tag.diag, L.tag.x, eps)
        if found is not None:
            coords, vec, n = found
            if n < thresh:
                return KStarResult(False, _canonical_sign(coords), vec, n)
            return KStarResult(True)
    D = dual_lattice(L)
    M = enumerate_points(D, [eps] * L.dim, cap=cap)
    if len(M) == 0:
        return KStarResult(True)
    V = M @ D.transform.T
    norms = np.sqrt(np.sum(V * V, axis=1))
    best = float(norms.min())
    if best < thresh:
        # among equally short vectors keep the lexicographically largest sign-normalized one
        ties = [tuple(_canonical_sign(m).tolist()) for m in M[norms <= best * (1 + 1e-12)]]
        m = np.array(max(ties), dtype=np.int64)
        return KStarResult(False, m, D.vectors(m), float(np.linalg.norm(D.vectors(m))))
    return KStarResult(True)


def in_L3prime(L: LatticeRep, tol: float = BOUNDARY_TOL, cap: int = DEFAULT_CAP) -> Optional[float]:
    """Generator length r of L ∩ R e3 when 1/2 < r <= 1, else None."""
    if L.tag is not None and L.tag.rational:
        Q = math.lcm(*(v.denominator for v in L.tag.x))
        r = abs(L.tag.diag[2]) * Q
    else:
        T = L.transform
        delta = tol * max(1.0, float(np.abs(T).max()))
        M = enumerate_points(L, [delta, delta, 1.0 + tol], cap=cap)
        if len(M) == 0:
            return None
        r = float(np.min(np.abs((M @ T.T)[:, 2])))
    if 0.5 + tol < r <= 1.0 + tol:
        return r
    return None


def is_primitive(m) -> bool:
    return math.gcd(*(int(v) for v in m)) == 1
