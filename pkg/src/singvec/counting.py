"""Brute-force counting checks: primitive densities, count ratios, hyperplane slices,
and the sets of points lying on dense dual hyperplanes."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import PreconditionViolated, ZeroFunctional
from .flow import a_diag
from .lattice import (DEFAULT_CAP, Box3, LatticeRep, Weight, _increases_rank, _knorms,
                      dual_lattice, enumerate_points, in_Kstar, in_L3prime, successive_minima)


def zeta3(tol: float = 1e-12) -> float:
    """Apery's constant from a partial sum plus an Euler-Maclaurin tail."""
    N = 1000
    n = np.arange(1, N + 1, dtype=float)
    s = float(np.sum(1.0 / n[::-1] ** 3))
    tail = 1 / (2 * N**2) - 1 / (2 * N**3) + 1 / (4 * N**4)
    assert 1 / N**6 < tol
    return s + tail


def mobius_upto(n: int) -> np.ndarray:
    mu = np.ones(n + 1, dtype=np.int64)
    mu[0] = 0
    is_p = np.ones(n + 1, dtype=bool)
    for p in range(2, n + 1):
        if is_p[p]:
            is_p[2 * p::p] = False
            mu[p::p] *= -1
            mu[p * p::p * p] = 0
    return mu


def _context(K, L) -> dict:
    radii = K.radii if isinstance(K, Box3) else np.asarray(K, dtype=float)
    return {"box": [float(r) for r in radii], "transform": L.transform.tolist()}


@dataclass
class CountReport:
    context: dict
    count: int
    theta: float
    ratio: float
    bound_window: Optional[list] = None
    passed: Optional[bool] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"context": self.context, "count": self.count, "theta": self.theta, "ratio": self.ratio,
                "bound_window": self.bound_window, "pass": self.passed, **self.extra}


def _face_masks(V: np.ndarray, radii: np.ndarray, tol: float):
    on_face = np.abs(np.abs(V) - radii) <= tol * radii
    return np.any(on_face, axis=1), np.any(on_face & (V > 0), axis=1)


def primitive_density(K: Box3, L: LatticeRep, primitive: bool = True, tol: float = 0.02,
                      convention: str = "half-open", cap: int = DEFAULT_CAP) -> CountReport:
    """Count (primitive) lattice points of K against theta = vol(K)/covolume.

    The measured ratio uses `convention`: 'closed', 'open' or 'half-open'
    (lower faces in, upper faces out, so every point stands for one cell).
    All three counts are reported.
    """
    lam = successive_minima(L, K, cap=cap).lambdas
    if lam[-1] > 1 + 1e-12:
        raise PreconditionViolated(f"lambda_3 = {lam[-1]:g} > 1")
    M = enumerate_points(L, K, primitive_only=primitive, cap=cap)
    boundary, upper = _face_masks(M @ L.transform.T, K.radii, 1e-9)
    counts = {"closed": len(M), "open": int(len(M) - boundary.sum()),
              "half-open": int(len(M) - upper.sum())}
    if convention not in counts:
        raise ValueError(f"unknown convention {convention!r}")
    theta = K.volume / L.covolume
    ratio = counts[convention] / theta
    target = 1 / zeta3() if primitive else 1.0
    dev = abs(ratio - target)
    return CountReport(_context(K, L), counts[convention], theta, ratio,
                       [target * (1 - tol), target * (1 + tol)], dev <= tol * target,
                       {"primitive": primitive, "convention": convention, "counts": counts,
                        "target": target, "deviation": dev, "lambdas": list(lam)})


def mobius_count(K: Box3, L: LatticeRep, cap: int = DEFAULT_CAP) -> int:
    """Primitive count as sum of mu(n) times the count of nonzero points of n L in K."""
    lam1 = successive_minima(L, K, cap=cap).lambdas[0]
    nmax = int(math.floor(1 / lam1 + 1e-9))
    mu = mobius_upto(max(nmax, 1))
    total = 0
    for n in range(1, nmax + 1):
        if mu[n]:
            total += int(mu[n]) * len(enumerate_points(L, K.scaled(1 / n), cap=cap))
    return total


def count_ratio_bounds(K: Box3, L: LatticeRep, s: float, s_prime: float,
                       window=(1 / 64, 64), cap: int = DEFAULT_CAP) -> dict:
    if not 0 < s <= s_prime:
        raise PreconditionViolated("need 0 < s <= s'")
    lam = list(successive_minima(L, K, cap=cap).lambdas) + [math.inf]
    i = max((k for k in range(1, 4) if lam[k - 1] <= s), default=0)
    if i == 0:
        raise PreconditionViolated(f"s = {s} is below lambda_1 = {lam[0]:g}")
    j = min(k for k in range(i, 4) if s_prime <= lam[k])
    a = len(enumerate_points(L, K.scaled(s), cap=cap))
    b = len(enumerate_points(L, K.scaled(s_prime), cap=cap))
    ratio = b / a
    lo, hi = ratio / (s_prime / s) ** i, ratio / (s_prime / s) ** j
    ok = all(window[0] <= v <= window[1] for v in (lo, hi))
    return {"context": _context(K, L), "s": s, "s_prime": s_prime, "i": i, "j": j,
            "count_s": a, "count_s_prime": b, "ratio": ratio, "normalized_i": lo, "normalized_j": hi,
            "bound_window": list(window), "pass": ok}


def _clip(poly: list, normal: np.ndarray, offset: float) -> list:
    """Keep the part of a planar polygon with normal . p <= offset."""
    out = []
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        fa, fb = normal @ a - offset, normal @ b - offset
        if fa <= 0:
            out.append(a)
        if fa * fb < 0:
            out.append(a + (b - a) * (fa / (fa - fb)))
    return out


def slice_area(K: Box3, phi) -> float:
    """Area of the central section of the box by the plane phi = 0."""
    phi = np.asarray(phi, dtype=float)
    n = phi / np.linalg.norm(phi)
    e1 = np.cross(n, np.eye(3)[int(np.argmin(np.abs(n)))])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    E = np.array([e1, e2])  # plane coordinates -> space: y @ E
    R = 2 * np.linalg.norm(K.radii)
    poly = [np.array(p, dtype=float) for p in ((-R, -R), (R, -R), (R, R), (-R, R))]
    for i in range(3):
        for sgn in (1.0, -1.0):
            poly = _clip(poly, sgn * E[:, i], K.radii[i])
            if not poly:
                return 0.0
    P = np.array(poly)
    x, y = P[:, 0], P[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


def hyperplane_slice(K: Box3, phi, window=(1 / 12, 3)) -> dict:
    phi = np.asarray(phi, dtype=float)
    if not np.any(phi):
        raise ZeroFunctional("phi must be nonzero")
    area = slice_area(K, phi)
    dual_norm = float(K.radii @ np.abs(phi))  # sup of |phi| over K
    ref = np.linalg.norm(phi) * K.volume / dual_norm
    ref = float(ref)
    ratio = area / ref
    return {"box": [float(r) for r in K.radii], "phi": phi.tolist(), "slice_area": area,
            "reference": ref, "ratio": ratio, "bound_window": list(window),
            "pass": bool(window[0] <= ratio <= window[1]),
            # the two explicit volume inequalities give the narrower [1/4, 3]
            "tight_pass": bool(0.25 * (1 - 1e-12) <= ratio <= 3 * (1 + 1e-12))}


def dual_box_halfwidths(r, s: float, q: float) -> list:
    """N_q(r, s) is the box with these half-widths."""
    return [min(s, q / r[0]), min(s, q / r[1]), q]


def bad_hyperplane_count(L: LatticeRep, r, s: float, cap: int = DEFAULT_CAP) -> dict:
    r = [float(v) for v in r]
    if not (r[0] <= r[1] and r[2] == 1 and 0 < s < 0.5):
        raise PreconditionViolated("need r1 <= r2, r3 = 1 and 0 < s < 1/2")
    D = dual_lattice(L)
    Phi = enumerate_points(D, dual_box_halfwidths(r, s, 3 * s * r[1]), primitive_only=True, cap=cap)
    M = enumerate_points(L, r, primitive_only=True, cap=cap)
    hit = np.zeros(len(M), dtype=bool)
    # phi(v) is the integer pairing of dual and primal coordinates
    for k in Phi:
        hit |= (M @ k) == 0
    vol = 8 * r[0] * r[1] * r[2]
    n = int(hit.sum())
    return {"r": r, "s": s, "dual_vectors": int(len(Phi)), "count": n, "volume": vol,
            "ratio_sqrt_s": n / (math.sqrt(s) * vol), "ratio_s2": n / (s * s * vol),
            "case": "equal" if r[0] == r[1] else "unequal"}


def q_minima(L: LatticeRep, r, s: float, qmax: float = 1e6, cap: int = DEFAULT_CAP) -> list:
    """q_1 <= q_2 <= q_3: the smallest q for which N_q(r,s) holds i independent dual vectors.

    Entries are inf when the slab |phi_1|, |phi_2| <= s has fewer independent
    dual vectors up to qmax.
    """
    D = dual_lattice(L)
    rw = np.array([r[0], r[1], 1.0])
    q = 1.0
    while True:
        M = enumerate_points(D, dual_box_halfwidths(r, s, q), cap=cap)
        if len(M) and np.linalg.matrix_rank(M.astype(float)) == 3:
            break
        if q >= qmax:
            break
        q = min(2 * q, qmax)
    V = M @ D.transform.T if len(M) else np.zeros((0, 3))
    norms = _knorms(V, 1 / rw) if len(M) else np.zeros(0)
    basis, out = [], []
    for i in np.lexsort((np.abs(M).sum(axis=1), norms)) if len(M) else []:
        if _increases_rank(basis, M[i]):
            basis.append(M[i])
            out.append(float(norms[i]))
            if len(out) == 3:
                break
    return out + [math.inf] * (3 - len(out))


def application_regimes(which: int, L: LatticeRep, eps: float, s: Optional[float], t: float,
                        w: Weight, cap: int = DEFAULT_CAP) -> dict:
    """Transport L by the relevant diagonal matrix and measure the bad-point count.

    Hard preconditions raise PreconditionViolated; the regime inequalities,
    which no desk-scale parameters can satisfy, are reported as flags.
    """
    w.require_nondegenerate()
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    if not 0 < eps < 1:
        raise PreconditionViolated(f"eps < 1 fails (eps = {eps}); the threshold constant is taken to be 1")
    if which == 1:
        s = eps ** 2 if s is None else s
        if abs(s - eps ** 2) > 1e-12:
            raise PreconditionViolated("case 1 fixes s = eps^2")
    if not 0 < s < 0.5:
        raise PreconditionViolated(f"0 < s < 1/2 fails (s = {s})")
    kst = in_Kstar(L, eps ** 2, cap=cap)
    if not kst.ok:
        raise PreconditionViolated(f"lattice is not in K*_(eps^2): dual vector of norm {kst.norm:g}")
    et = math.exp(t)
    flags = {}
    if which == 1:
        if in_L3prime(L) is None:
            raise PreconditionViolated("lattice has no axis vector r e3 with 1/2 < r <= 1")
        diag = a_diag(w, t)
        r = [eps * et, eps * et, 1.0]
        flags["exp(-w2 t/20) < eps"] = math.exp(-w.b * t / 20) < eps
        bound_name, bound_scale = "eps^(1/2) vol", math.sqrt(eps)
    else:
        diag = (math.exp((w.a - w.b) * t), math.exp(2 * w.b * t), math.exp(-t))
        r = [eps * math.exp(w.a * t), eps * math.exp((w.a + 2 * w.b) * t), 1.0]
        delta = min(w.b, w.a - w.b) / 20
        flags["exp(-delta t) < eps"] = math.exp(-delta * t) < eps
        flags["eps < s"] = eps < s
        bound_name, bound_scale = "s vol", s
    flags["1 <= r1"] = r[0] >= 1
    T = LatticeRep(np.diag(diag) @ L.transform)
    qs = q_minima(T, r, s, cap=cap)
    flags["q1 >= s^-2"] = qs[0] >= s ** -2
    if which == 1:
        flags["q3 <= 2 s^(-1/2) r2"] = qs[2] <= 2 * s ** -0.5 * r[1]
    else:
        flags["q3 log q3 <= s r2"] = math.isfinite(qs[2]) and qs[2] * math.log(qs[2]) <= s * r[1]
    bad = bad_hyperplane_count(T, r, s, cap=cap)
    return {"which": which, "eps": eps, "s": s, "t": t, "w": str(w), "r": r, "q": qs,
            "flags": flags, "bad_count": bad["count"], "volume": bad["volume"],
            "bound": bound_name, "measured_ratio": bad["count"] / (bound_scale * bad["volume"])}


def boundary_bookkeeping(K: Box3, L: LatticeRep, tol: float = 1e-9, cap: int = DEFAULT_CAP) -> dict:
    """Closed, open and half-open box counts from one closed enumeration."""
    M = enumerate_points(L, K, cap=cap)
    boundary, upper = _face_masks(M @ L.transform.T, K.radii, tol)
    closed = len(M)
    return {"closed": closed, "boundary": int(boundary.sum()), "open": int(closed - boundary.sum()),
            "half_open": int(closed - upper.sum())}
