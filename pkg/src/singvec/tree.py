"""The rational-vertex self-affine tree whose limit set consists of singular vectors.

Level n holds rationals tau = (-p1/q, -p2/q) with e^{t_n}/2 < q <= e^{t_n};
each carries the rectangle beta(tau) and the smaller beta_tilde(tau) which
bounds where refined children may sit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import CapacityExceeded, EmptyLevel, PreconditionViolated, RegimeInfeasible
from .flow import a_diag, flow_lattice
from .lattice import (DEFAULT_CAP, LatticeRep, Weight, _expand, in_L3prime,
                      kstar_structured, shortest_vector)


def _exact_pos(v):
    if isinstance(v, (int, Fraction)) and not isinstance(v, bool):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    f = float(v)
    return Fraction(f).limit_denominator(10**9) if float(Fraction(f).limit_denominator(10**9)) == f else f


@dataclass(frozen=True)
class TreeParams:
    """Tree parameters; `et` is e^t, so level n uses e^{t_n} = et^{n(n+1)/2}."""
    w: Weight
    eps: float
    r: float
    et: object
    depth: int
    strict_regime: bool = False
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "et", _exact_pos(self.et))
        if not self.et > 1:
            raise ValueError("e^t must exceed 1")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if not (0 < self.eps <= 1):
            raise ValueError("eps must lie in (0, 1]")
        if not (0 < self.r <= 1):
            raise ValueError("r must lie in (0, 1]")
        self.w.require_nondegenerate()
        if self.strict_regime:
            self._refuse()

    def _refuse(self):
        w = self.w
        # the unspecified regime constants are taken to be 1
        lim = 1e-4 * min(1.0, w.b, w.a - w.b)
        if not self.r < lim:
            raise PreconditionViolated(f"strict regime needs r < {lim:g} (1e-4 min{{1, w2, w1-w2}}), got r={self.r}")
        if not 0 < self.eps < self.r:
            raise PreconditionViolated(f"strict regime needs 0 < eps < r, got eps={self.eps}")
        # the regime fixes t = 100/eps^2, far beyond any e^t that can be written down
        need = 100 / self.eps ** 2
        raise RegimeInfeasible(
            f"strict regime has e^t = 10^{need / math.log(10):.3g}; level 1 alone would need "
            f"~10^{2 * need / math.log(10):.3g} denominators")

    @property
    def t(self) -> float:
        return math.log(self.et)

    def tn(self, n: int) -> float:
        return n * (n + 1) / 2 * self.t

    def etn(self, n: int):
        """e^{t_n}, exact when e^t is rational."""
        k = n * (n + 1) // 2
        return self.et ** k if isinstance(self.et, Fraction) else float(self.et) ** k

    def eps_n(self, n: int) -> float:
        return 1.0 if n == 0 else self.eps / n

    def half_widths(self, n: int, tilde: bool = False) -> tuple:
        e = self.eps_n(n + 1 if tilde else n)
        t1, tn = self.tn(n + 1), self.tn(n)
        return (e * math.exp(-self.w.a * t1 - tn), e * math.exp(-self.w.b * t1 - tn))

    def b_diag(self, n: int) -> tuple:
        s = self.w.b * n * self.t
        return (math.exp(-s), math.exp(s), 1.0)

    def as_dict(self) -> dict:
        return {"w": str(self.w), "eps": self.eps, "r": self.r, "et": str(self.et),
                "depth": self.depth, "strict_regime": self.strict_regime, "cap": self.cap}


@dataclass(frozen=True)
class TreeNode:
    level: int
    p1: int
    p2: int
    q: int
    parent: int = -1

    @property
    def tau(self) -> tuple:
        return (Fraction(-self.p1, self.q), Fraction(-self.p2, self.q))

    def beta(self, params: TreeParams, tilde: bool = False) -> tuple:
        """((x1_lo, x1_hi), (x2_lo, x2_hi))."""
        h1, h2 = params.half_widths(self.level, tilde)
        c1, c2 = (float(v) for v in self.tau)
        return ((c1 - h1, c1 + h1), (c2 - h2, c2 + h2))

    def beta_tilde(self, params: TreeParams) -> tuple:
        return self.beta(params, True)


ROOT = TreeNode(0, 0, 0, 1)


@dataclass
class Level:
    p1: np.ndarray
    p2: np.ndarray
    q: np.ndarray
    parent: np.ndarray

    def __len__(self):
        return len(self.q)

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), z.copy())


def _candidates(parent: TreeNode, params: TreeParams, n: int, tilde: bool):
    """All primitive (p1, p2, q) at level n with tau inside the parent's rectangle."""
    E = params.etn(n)
    qlo = math.floor(E / 2) + 1
    qhi = math.floor(E)
    if qhi - qlo + 1 > params.cap:
        raise CapacityExceeded(f"level {n} has {qhi - qlo + 1} denominators (cap {params.cap})")
    if qhi >= 2**53:
        raise CapacityExceeded("denominators exceed exact float range")
    q = np.arange(qlo, qhi + 1, dtype=np.int64)
    h = params.half_widths(parent.level, tilde)
    c = parent.tau
    qf = q.astype(float)
    ranges = []
    for i in range(2):
        # -p/q in [c - h, c + h]  <=>  p in [-q (c + h), -q (c - h)]
        lo = -qf * (float(c[i]) + h[i])
        hi = -qf * (float(c[i]) - h[i])
        tol = 1e-9 * np.maximum(1.0, np.abs(lo) + np.abs(hi))
        ranges.append((np.ceil(lo - tol).astype(np.int64), np.floor(hi + tol).astype(np.int64)))
    (lo1, hi1), (lo2, hi2) = ranges
    n1 = np.maximum(hi1 - lo1 + 1, 0)
    n2 = np.maximum(hi2 - lo2 + 1, 0)
    if int((n1 * n2).sum()) > params.cap:
        raise CapacityExceeded(f"{int((n1 * n2).sum())} candidate sons exceeds cap {params.cap}")
    i1, p1 = _expand(lo1, hi1, params.cap)
    i2, p2 = _expand(lo2[i1], hi2[i1], params.cap)
    qq = q[i1][i2]
    p1 = p1[i2]
    keep = np.gcd(np.gcd(np.abs(p1), np.abs(p2)), qq) == 1
    return p1[keep], p2[keep], qq[keep]


def refined_ok(p1: int, p2: int, q: int, n: int, params: TreeParams) -> bool:
    """Both dual-norm conditions on a_{t_n} h(tau) Z^3 (and its b_n image)."""
    x = (Fraction(-p1, q), Fraction(-p2, q))
    base = a_diag(params.w, params.tn(n))
    e2 = params.eps_n(n) ** 2
    for diag, eps in ((base, e2), (tuple(b * d for b, d in zip(params.b_diag(n), base)), params.r)):
        found = kstar_structured(diag, x, eps)
        if found is None:
            from .lattice import in_Kstar
            ok = in_Kstar(LatticeRep.structured(diag, x), eps, structured=False).ok
        else:
            ok = found[2] >= eps * (1 - 1e-12)
        if not ok:
            return False
    return True


def _sons_arrays(parent: TreeNode, params: TreeParams, refined: bool):
    n = parent.level + 1
    p1, p2, q = _candidates(parent, params, n, refined)
    if refined and len(q):
        keep = np.array([refined_ok(int(a), int(b), int(c), n, params) for a, b, c in zip(p1, p2, q)],
                        dtype=bool)
        p1, p2, q = p1[keep], p2[keep], q[keep]
    order = np.lexsort((p2, p1, q))
    return p1[order], p2[order], q[order]


def enumerate_sons(parent: TreeNode, params: TreeParams, refined: bool, parent_index: int = -1) -> list:
    p1, p2, q = _sons_arrays(parent, params, refined)
    return [TreeNode(parent.level + 1, int(a), int(b), int(c), parent_index) for a, b, c in zip(p1, p2, q)]


@dataclass
class FractalTree:
    params: TreeParams
    refined: bool
    levels: list
    childless: list = field(default_factory=list)

    def node(self, level: int, i: int) -> TreeNode:
        if level == 0:
            return ROOT
        L = self.levels[level]
        return TreeNode(level, int(L.p1[i]), int(L.p2[i]), int(L.q[i]), int(L.parent[i]))

    def nodes(self, level: int):
        for i in range(len(self.levels[level])):
            yield self.node(level, i)

    @property
    def counts(self) -> list:
        return [len(L) for L in self.levels]

    def children_index(self, level: int) -> list:
        """For each node at `level`, the index range of its sons at level + 1."""
        par = self.levels[level + 1].parent
        out = []
        for i in range(len(self.levels[level])):
            lo = int(np.searchsorted(par, i, "left"))
            hi = int(np.searchsorted(par, i, "right"))
            out.append((lo, hi))
        return out

    def son_count_range(self, level: int) -> tuple:
        c = [hi - lo for lo, hi in self.children_index(level)]
        return (min(c), max(c)) if c else (0, 0)

    def export_lines(self) -> list:
        """One record per node: level,q,p1,p2,tau1,tau2,x1lo,x1hi,x2lo,x2hi,parent."""
        lines = []
        for n in range(len(self.levels)):
            for nd in self.nodes(n):
                (a, b), (c, d) = nd.beta(self.params)
                t1, t2 = nd.tau
                lines.append(",".join([str(n), str(nd.q), str(nd.p1), str(nd.p2), str(t1), str(t2),
                                       repr(a), repr(b), repr(c), repr(d), str(nd.parent)]))
        return lines


def build_tree(params: TreeParams, refined: bool = True, on_empty: str = "raise") -> FractalTree:
    """Breadth-first construction down to params.depth.

    on_empty='raise' stops with EmptyLevel at the first childless node;
    'record' keeps going and lists such nodes in tree.childless.
    """
    root = Level(np.zeros(1, np.int64), np.zeros(1, np.int64), np.ones(1, np.int64), np.full(1, -1, np.int64))
    tree = FractalTree(params, refined, [root])
    total = 1
    for n in range(1, params.depth + 1):
        parts = []
        for i, parent in enumerate(tree.nodes(n - 1)):
            p1, p2, q = _sons_arrays(parent, params, refined)
            if len(q) == 0:
                if on_empty == "raise":
                    raise EmptyLevel(f"node {parent} at level {n - 1} has no sons", parent)
                tree.childless.append(parent)
            parts.append((p1, p2, q, np.full(len(q), i, np.int64)))
            total += len(q)
            if total > params.cap:
                raise CapacityExceeded(f"tree exceeds {params.cap} nodes")
        if parts:
            lev = Level(*(np.concatenate([p[k] for p in parts]) for k in range(4)))
        else:
            lev = Level.empty()
        tree.levels.append(lev)
        if len(lev) == 0:
            raise EmptyLevel(f"level {n} is empty")
    return tree


# ---- verification -------------------------------------------------------

def _inside(inner, outer, tol=1e-12) -> bool:
    return all(o[0] - tol <= i[0] and i[1] <= o[1] + tol for i, o in zip(inner, outer))


@dataclass
class InvariantReport:
    nesting_checked: int = 0
    nesting_failures: list = field(default_factory=list)
    denominators_checked: int = 0
    denominator_failures: list = field(default_factory=list)
    l3_checked: int = 0
    l3_failures: list = field(default_factory=list)
    l3_numeric_checked: int = 0

    @property
    def ok(self) -> bool:
        return not (self.nesting_failures or self.denominator_failures or self.l3_failures)


def verify_invariants(tree: FractalTree, numeric_sample: int = 200, seed: int = 0) -> InvariantReport:
    """Nesting, denominator window and the axis-vector condition for every node.

    The axis condition is recomputed from tau alone; a random sample is also
    re-checked on the untagged floating-point lattice.
    """
    P = tree.params
    rep = InvariantReport()
    rng = np.random.default_rng(seed)
    for n in range(1, len(tree.levels)):
        E = P.etn(n)
        parents = list(tree.nodes(n - 1))
        pbeta = [nd.beta(P, tree.refined) for nd in parents]
        pbig = [nd.beta(P) for nd in parents]
        sample = set(rng.choice(len(tree.levels[n]), size=min(numeric_sample, len(tree.levels[n])),
                                replace=False).tolist())
        for i, nd in enumerate(tree.nodes(n)):
            b = nd.beta(P)
            c = tuple(float(v) for v in nd.tau)
            rep.nesting_checked += 1
            if not (_inside(b, pbig[nd.parent]) and _inside(((c[0], c[0]), (c[1], c[1])), pbeta[nd.parent])):
                rep.nesting_failures.append((n, i))
            rep.denominators_checked += 1
            if not (E / 2 < nd.q <= E):
                rep.denominator_failures.append((n, i))
            rep.l3_checked += 1
            L = flow_lattice(nd.tau, P.w, P.tn(n))
            if in_L3prime(L) is None:
                rep.l3_failures.append((n, i, "exact"))
            if i in sample:
                rep.l3_numeric_checked += 1
                if in_L3prime(LatticeRep(L.transform)) is None:
                    rep.l3_failures.append((n, i, "numeric"))
    return rep


@dataclass
class CardinalityReport:
    rows: list
    window: tuple = (0.01, 10.0)

    @property
    def flagged(self) -> list:
        return [r for r in self.rows if not (self.window[0] <= r["ratio"] <= self.window[1])]


def verify_cardinality(tree: FractalTree) -> CardinalityReport:
    """Son counts against eps_n^2 e^{2nt}; informational away from the asymptotic regime."""
    P = tree.params
    rows = []
    for n in range(1, len(tree.levels)):
        scale = P.eps_n(n) ** 2 * math.exp(2 * n * P.t)
        for i, (lo, hi) in enumerate(tree.children_index(n - 1)):
            rows.append({"level": n - 1, "index": i, "sons": hi - lo, "ratio": (hi - lo) / scale})
    return CardinalityReport(rows)


def separation_bound(P: TreeParams, n: int) -> float:
    """Lower bound on the distance between beta-rectangles of distinct sons at level n."""
    e = P.eps_n(n - 1)
    W = 2 * e * math.exp(-P.w.a * P.tn(n) - P.tn(n - 1))
    f = min(math.exp(-P.w.a * n * P.t), math.exp((P.w.a - P.w.b) * P.tn(n) - (1 + P.w.b) * n * P.t))
    return W * P.r / (8 * e) * f


def rect_distance(a, b) -> float:
    gaps = [max(0.0, b[k][0] - a[k][1], a[k][0] - b[k][1]) for k in range(2)]
    return math.hypot(*gaps)


@dataclass
class SeparationReport:
    pairs_examined: int = 0
    violations: list = field(default_factory=list)
    worst_margin: Optional[float] = None

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_separation(tree: FractalTree) -> SeparationReport:
    """Distance between every pair of distinct sons against the explicit bound.

    Sons at one level share their rectangle size, so only pairs whose centers
    are within (full width + bound) in each axis can come closer than the
    bound; a KD-tree in the rescaled sup-norm finds them.
    """
    from scipy.spatial import cKDTree

    P = tree.params
    rep = SeparationReport()
    for n in range(1, len(tree.levels)):
        bound = separation_bound(P, n)
        h = P.half_widths(n)
        win = np.array([2 * h[0] + 2 * bound, 2 * h[1] + 2 * bound])
        L = tree.levels[n]
        for i, (lo, hi) in enumerate(tree.children_index(n - 1)):
            if hi - lo < 2:
                continue
            c = np.column_stack([-L.p1[lo:hi] / L.q[lo:hi], -L.p2[lo:hi] / L.q[lo:hi]])
            pairs = cKDTree(c / win).query_pairs(1.0, p=np.inf, output_type="ndarray")
            rep.pairs_examined += (hi - lo) * (hi - lo - 1) // 2
            for a, b in pairs:
                d = rect_distance(((c[a, 0] - h[0], c[a, 0] + h[0]), (c[a, 1] - h[1], c[a, 1] + h[1])),
                                  ((c[b, 0] - h[0], c[b, 0] + h[0]), (c[b, 1] - h[1], c[b, 1] + h[1])))
                m = d / bound
                if rep.worst_margin is None or m < rep.worst_margin:
                    rep.worst_margin = m
                if d < bound:
                    na, nb = tree.node(n, lo + a), tree.node(n, lo + b)
                    rep.violations.append({"level": n, "parent": i, "a": [na.p1, na.p2, na.q],
                                           "b": [nb.p1, nb.p2, nb.q], "distance": d, "bound": bound})
    return rep


def sample_points(tree: FractalTree, per_leaf: int = 0, seed: int = 0) -> np.ndarray:
    """Centers of the deepest nodes, plus per_leaf uniform points inside each beta."""
    n = len(tree.levels) - 1
    L = tree.levels[n]
    c = np.column_stack([-L.p1 / L.q, -L.p2 / L.q]).astype(float)
    if per_leaf <= 0:
        return c
    h = np.array(tree.params.half_widths(n))
    rng = np.random.default_rng(seed)
    jit = rng.uniform(-1, 1, size=(len(c), per_leaf, 2)) * h
    return (c[:, None, :] + jit).reshape(-1, 2)


def contained_bound(P: TreeParams, n: int, t: float) -> float:
    e = P.eps_n(n)
    t1, tn = P.tn(n + 1), P.tn(n)
    return 3 * max(e * math.exp(-P.w.a * (t1 - t)), e * math.exp(-P.w.b * (t1 - t)), math.exp(-(t - tn)))


def contained_profile(tree: FractalTree, index: int, points_per_level: int = 5) -> list:
    """Systole of a_t h(x) Z^3 against the path bound, x a deepest-level center."""
    P = tree.params
    N = len(tree.levels) - 1
    nd = tree.node(N, index)
    out = []
    for n in range(N):
        for t in np.linspace(P.tn(n), P.tn(n + 1), points_per_level):
            sys = shortest_vector(flow_lattice(nd.tau, P.w, float(t)), cap=P.cap).norm
            out.append({"t": float(t), "systole": sys, "bound": contained_bound(P, n, float(t))})
    return out
