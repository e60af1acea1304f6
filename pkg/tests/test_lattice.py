import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singvec.errors import CapacityExceeded, InvalidWeight, SingularMatrix
from singvec.lattice import (Box3, LatticeRep, Weight, dual_lattice, enumerate_points, in_Kstar,
                             in_L3prime, is_primitive, knorm, shortest_vector, successive_minima)


def oracle_points(T, radii, primitive=False, tol=1e-9):
    """Brute force over the integer bounding box of T^-1 K."""
    T = np.asarray(T, dtype=float)
    radii = np.asarray(radii, dtype=float)
    Ti = np.linalg.inv(T)
    bound = np.floor(np.abs(Ti) @ radii + 1e-9).astype(int)
    out = set()
    axes = [range(-b, b + 1) for b in bound]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(bound), -1).T
    V = grid @ T.T
    inside = np.all(np.abs(V) <= radii * (1 + tol), axis=1)
    for m in grid[inside]:
        m = tuple(int(c) for c in m)
        if not any(m):
            continue
        if primitive and math.gcd(*m) != 1:
            continue
        out.add(m)
    return out


def aflow(w, t, x):
    return LatticeRep.structured((math.exp(w.a * t), math.exp(w.b * t), math.exp(-t)), x, t)


# ---- examples ----

def test_knorm_examples():
    assert knorm((0, 0, 0), Box3(1, 1, 1)) == 0
    assert knorm((2, 0, 0), Box3(1, 1, 1)) == 2
    assert knorm((1, 3, 0.5), Box3(2, 1, 1)) == 3


def test_enumeration_examples():
    Z = LatticeRep.standard()
    assert len(enumerate_points(Z, Box3.cube(1.5))) == 26
    assert len(enumerate_points(Z, Box3.cube(0.5))) == 0
    M = enumerate_points(LatticeRep.diagonal(2, 0.5, 1), Box3.cube(1))
    assert len(M) == 14
    assert set(map(tuple, M.tolist())) == {(0, b, c) for b in range(-2, 3) for c in (-1, 0, 1)} - {(0, 0, 0)}


def test_enumeration_is_sorted_and_capped():
    M = enumerate_points(LatticeRep.standard(), Box3.cube(2))
    assert len(M) == 124
    keys = [(m[2], m[0], m[1]) for m in M.tolist()]
    assert keys == sorted(keys)
    with pytest.raises(CapacityExceeded):
        enumerate_points(LatticeRep.standard(), Box3.cube(50), cap=1000)


def test_minima_examples():
    r = successive_minima(LatticeRep.standard(), Box3.cube(1))
    assert np.allclose(r.lambdas, (1, 1, 1))
    r = successive_minima(LatticeRep.diagonal(2, 0.5, 1), Box3.cube(1))
    assert np.allclose(r.lambdas, (0.5, 1, 2))
    assert r.product == pytest.approx(8)
    assert r.sandwich_ok()


def test_dual_examples():
    assert np.allclose(dual_lattice(LatticeRep.standard()).transform, np.eye(3))
    assert np.allclose(dual_lattice(LatticeRep.diagonal(2, 0.5, 1)).transform, np.diag([0.5, 2, 1]))


def test_dual_pairing_is_integral_on_flow_lattice():
    rng = np.random.default_rng(3)
    w = Weight.parse("2/3,1/3")
    L = aflow(w, 1.7, (0.31, -0.77))
    D = dual_lattice(L)
    for _ in range(20):
        m, k = rng.integers(-9, 10, 3), rng.integers(-9, 10, 3)
        val = L.vectors(m) @ D.vectors(k)
        assert abs(val - round(val)) < 1e-9


def test_kstar_examples():
    Z = LatticeRep.standard()
    assert in_Kstar(Z, 1.0).ok
    r = in_Kstar(Z, 1.01)
    assert not r.ok
    assert tuple(r.coords) == (1, 0, 0)
    res = in_Kstar(LatticeRep.diagonal(4, 0.5, 0.5), 0.3)
    assert not res.ok
    assert res.norm == pytest.approx(0.25)


def test_kstar_short_dual_axis_vector():
    L = LatticeRep.diagonal(1.01, 1 / 1.01, 1.0)
    res = in_Kstar(L, 1.0)
    assert not res.ok
    assert res.norm == pytest.approx(1 / 1.01)
    assert abs(int(res.coords[0])) == 1 and not res.coords[1:].any()


def test_l3prime_examples():
    assert in_L3prime(LatticeRep.standard()) == pytest.approx(1.0)
    L = LatticeRep.diagonal(math.exp(0.2), math.exp(0.2), math.exp(-0.4))
    assert in_L3prime(L) == pytest.approx(math.exp(-0.4))
    assert in_L3prime(LatticeRep.diagonal(math.sqrt(3), math.sqrt(3), 1 / 3)) is None


def test_systole_of_diagonal_orbit():
    w = Weight.parse("2/3,1/3")
    sv = shortest_vector(aflow(w, 2.0, (0, 0)))
    assert sv.norm == pytest.approx(math.exp(-2))
    assert tuple(abs(sv.coords)) == (0, 0, 1)


def test_weight_validation():
    with pytest.raises(InvalidWeight):
        Weight.parse("3/4,1/2")
    with pytest.raises(InvalidWeight):
        Weight.parse("1/2")
    assert Weight.parse("0.5,0.5").exact
    assert Weight.parse("1,0").degenerate


def test_singular_transform_rejected():
    with pytest.raises(SingularMatrix):
        LatticeRep(np.zeros((3, 3)))


# ---- oracle equivalence ----

def _random_instance(rng):
    while True:
        A = rng.normal(size=(3, 3))
        A /= abs(np.linalg.det(A)) ** (1 / 3)
        radii = rng.uniform(0.3, 4.0, 3)
        bound = np.abs(np.linalg.inv(A)) @ radii
        if np.prod(2 * bound + 1) < 2e5:
            return A, radii


def test_enumeration_matches_triple_loop_oracle():
    rng = np.random.default_rng(11)
    for _ in range(60):
        A, radii = _random_instance(rng)
        prim = bool(rng.integers(2))
        got = enumerate_points(LatticeRep(A), Box3(*radii), primitive_only=prim)
        assert set(map(tuple, got.tolist())) == oracle_points(A, radii, prim)


def test_structured_enumeration_matches_oracle():
    rng = np.random.default_rng(5)
    w = Weight.parse("2/3,1/3")
    for _ in range(20):
        x = (Fraction(int(rng.integers(-20, 20)), int(rng.integers(1, 30))),
             Fraction(int(rng.integers(-20, 20)), int(rng.integers(1, 30))))
        L = aflow(w, float(rng.uniform(0, 3)), x)
        radii = rng.uniform(0.5, 2.5, 3)
        got = enumerate_points(L, Box3(*radii))
        assert set(map(tuple, got.tolist())) == oracle_points(L.transform, radii)


def test_shortest_vector_matches_oracle():
    rng = np.random.default_rng(2)
    for _ in range(25):
        A, _ = _random_instance(rng)
        sv = shortest_vector(LatticeRep(A))
        pts = oracle_points(A, [2.0] * 3)
        best = min(np.linalg.norm(A @ np.array(m)) for m in pts)
        assert sv.norm == pytest.approx(best, rel=1e-12)


def test_structured_kstar_matches_generic_dual_enumeration():
    rng = np.random.default_rng(8)
    w = Weight.parse("2/3,1/3")
    checked = 0
    for _ in range(150):
        q = int(rng.integers(2, 40))
        x = (Fraction(int(rng.integers(0, q)), q), Fraction(int(rng.integers(0, q)), q))
        t = float(rng.uniform(0.5, 4))
        eps = float(rng.uniform(0.05, 1.0))
        L = aflow(w, t, x)
        fast = in_Kstar(L, eps, structured=True)
        slow = in_Kstar(LatticeRep(L.transform), eps)
        assert fast.ok == slow.ok
        if not fast.ok:
            assert fast.norm == pytest.approx(slow.norm, rel=1e-9)
        checked += 1
    assert checked == 150


def test_l3prime_exact_and_numeric_paths_agree():
    rng = np.random.default_rng(4)
    w = Weight.parse("1/2,1/2")
    for _ in range(40):
        q = int(rng.integers(1, 12))
        x = (Fraction(int(rng.integers(0, q)), q), Fraction(int(rng.integers(0, q)), q))
        Q = math.lcm(x[0].denominator, x[1].denominator)
        t = math.log(Q) + float(rng.uniform(-0.9, 0.9))
        L = aflow(w, t, x)
        a, b = in_L3prime(L), in_L3prime(LatticeRep(L.transform))
        assert (a is None) == (b is None)
        if a is not None:
            assert a == pytest.approx(b, rel=1e-9)


# ---- properties ----

mats = st.lists(st.floats(-3, 3, allow_nan=False), min_size=9, max_size=9).map(
    lambda v: np.array(v).reshape(3, 3)).filter(lambda A: abs(np.linalg.det(A)) > 0.2)
radii = st.tuples(*[st.floats(0.3, 3.0)] * 3)


@given(mats, radii)
def test_minkowski_sandwich(A, r):
    A = A / abs(np.linalg.det(A)) ** (1 / 3)
    rep = successive_minima(LatticeRep(A), Box3(*r))
    assert rep.sandwich_ok(1e-6)
    assert rep.lambdas[0] <= rep.lambdas[1] <= rep.lambdas[2]


@given(mats)
def test_dual_is_an_involution(A):
    L = LatticeRep(A)
    back = dual_lattice(dual_lattice(L)).transform
    assert np.allclose(back, A, rtol=1e-12, atol=1e-12 * np.abs(A).max())


vec = st.tuples(*[st.floats(-50, 50, allow_nan=False)] * 3)


@given(vec, vec, radii, st.floats(-10, 10, allow_nan=False))
def test_knorm_is_a_norm(u, v, r, c):
    K = Box3(*r)
    s = tuple(a + b for a, b in zip(u, v))
    assert knorm(s, K) <= knorm(u, K) + knorm(v, K) + 1e-9
    assert knorm(tuple(c * a for a in u), K) == pytest.approx(abs(c) * knorm(u, K), rel=1e-12, abs=1e-12)


@given(mats, radii)
def test_enumeration_symmetric_and_primitive_subset(A, r):
    A = A / abs(np.linalg.det(A)) ** (1 / 3)
    L, K = LatticeRep(A), Box3(*r)
    try:
        allp = set(map(tuple, enumerate_points(L, K, cap=10**5).tolist()))
    except CapacityExceeded:
        return
    prim = set(map(tuple, enumerate_points(L, K, primitive_only=True).tolist()))
    assert {tuple(-c for c in m) for m in allp} == allp
    assert prim <= allp
    assert all(is_primitive(m) for m in prim)
