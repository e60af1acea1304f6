import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singvec import dimension as dm
from singvec.approx import r_of
from singvec.errors import AssumptionViolated, DegenerateFit, InvalidWeight, NotInQEps
from singvec.lattice import Weight

W23 = Weight.parse("2/3,1/3")
W12 = Weight.parse("1/2,1/2")
LOG43 = math.log(4) / math.log(3)
GRID = np.round(np.arange(1, 2.0005, 0.001), 12)


# ---- closed form ------------------------------------------------------------

def test_closed_form_examples():
    assert dm.closed_form_dim(W12).dim == Fraction(4, 3)
    assert float(dm.closed_form_dim(W23).dim) == pytest.approx(1.4, abs=1e-12)
    r = dm.closed_form_dim(Weight.parse("1,0"))
    assert r.dim == 1 and r.degenerate


def test_closed_form_rejects_swapped_weight():
    with pytest.raises(InvalidWeight):
        dm.closed_form_dim(Weight.parse("1/3,2/3"))


@given(st.fractions(Fraction(1, 2), Fraction(99, 100)))
def test_closed_form_range(a):
    d = dm.closed_form_dim(Weight(a, 1 - a)).dim
    assert Fraction(4, 3) <= d < Fraction(3, 2)


# ---- sequence evaluators ----------------------------------------------------

def test_cantor_dust_lower_bound():
    r = dm.lower_bound_s(dm.cantor_dust(40), GRID)
    assert abs(r.s - LOG43) < 0.01 and r.applicable


@pytest.mark.parametrize("m,b", [(4, 3), (5, 4), (9, 4)])
def test_self_similar_similarity_dimension(m, b):
    seq = dm.cantor_dust(60, ratio=b, children=m)
    target = math.log(m) / math.log(b)
    grid = np.round(np.arange(0.5, 2.5, 0.001), 12)
    assert abs(dm.lower_bound_s(seq, grid).s - target) <= 0.0015
    assert dm.local_dim_cor(seq).dim == pytest.approx(target, abs=1e-9)


def test_value_threshold_is_stricter():
    seq = dm.cantor_dust(40)
    loose = dm.lower_bound_s(seq, GRID).s
    strict = dm.lower_bound_s(seq, np.round(np.arange(0.1, 2.0005, 0.001), 12), value_threshold=10).s
    # n (log 4 - t log 3) - t log 3 > 10 on n >= 20 forces t < 0.88
    assert strict < 0.88 < loose


def test_single_child_sequences_are_inapplicable():
    seq = dm.cantor_dust(40, children=1)
    r = dm.lower_bound_s(seq, GRID)
    assert not r.applicable
    with pytest.raises(AssumptionViolated):
        dm.local_dim_cor(seq)


def test_constant_W_is_rejected():
    n = 20
    seq = dm.SeqData(np.zeros(n), np.zeros(n), np.full(n, -1.0), np.r_[0, np.full(n - 1, 1.0)])
    with pytest.raises(AssumptionViolated):
        dm.local_dim_cor(seq)
    with pytest.raises(ValueError):
        dm.lower_bound_s(seq, GRID)


def test_tree_sequences_satisfy_hypotheses():
    seq = dm.tree_sequences(W23, 40)
    assert seq.validate() == []


def test_tree_local_dim_converges():
    vals = [dm.local_dim_cor(dm.tree_sequences(W23, n)).dim for n in (40, 100, 400)]
    errs = [abs(v - 1.4) for v in vals]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 2e-3


# ---- upper relation ---------------------------------------------------------

def _grid_children(k):
    def sigma(node):
        p1, p2, q = node.u
        return [dm.CoverNode((k * p1 + a, k * p2 + b, k * q)) for a in range(k) for b in range(k)]
    return sigma


def test_upper_relation_power_sum():
    root = dm.CoverNode((0, 0, 1))
    for s in (1.2, 1.5, 1.9):
        rep = dm.upper_relation_check([root], _grid_children(2), s, W23)
        row = rep["rows"][0]
        assert row["children"] == 4
        assert row["ratio"] == pytest.approx(row["power_sum"], rel=1e-12)
        assert row["power_sum"] == pytest.approx(4 * 2 ** -rep["exponent"])
    # 4 * 2^{-((s-1) 5/3 + 4/3)} <= 1  <=>  s >= 1.4
    assert dm.upper_relation_check([root], _grid_children(2), 1.41, W23)["pass"]
    assert not dm.upper_relation_check([root], _grid_children(2), 1.39, W23)["pass"]
    with pytest.raises(ValueError):
        dm.upper_relation_check([root], _grid_children(2), 1.0, W23)


def test_upper_relation_scale_invariant():
    a = dm.upper_relation_check([dm.CoverNode((0, 0, 1))], _grid_children(3), 1.5, W23)
    b = dm.upper_relation_check([dm.CoverNode((1, 2, 7))], _grid_children(3), 1.5, W23)
    assert a["rows"][0]["ratio"] == pytest.approx(b["rows"][0]["ratio"], rel=1e-12)


# ---- covering relation --------------------------------------------------------

def test_q_eps_mask_matches_residue_scan():
    rng = np.random.default_rng(5)
    q = rng.integers(2, 150, 600)
    V = np.column_stack([rng.integers(-q, 2 * q), rng.integers(-q, 2 * q), q])
    for w in (W23, W12):
        for eps in (0.05, 0.3, 1.0):
            got = dm.q_eps_mask(V, w, eps)
            want = [dm.in_Q_eps(v, w, eps) for v in V]
            assert got.tolist() == want
            assert 0 < got.sum() < len(V) or eps == 1.0


@given(st.tuples(*[st.integers(-30, 30)] * 3).filter(any))
def test_plane_basis_spans_the_plane_lattice(n):
    b1, b2 = dm._plane_basis(n)
    assert dm._dot(n, b1) == 0 and dm._dot(n, b2) == 0
    assert b2[2] == 0 and b1[2] >= 0
    g = math.gcd(*n)
    c = dm._cross(b1, b2)
    assert c in (tuple(x // g for x in n), tuple(-x // g for x in n))


def _E_oracle(v, normal, w, eps, vmax):
    out = []
    qv = v[2]
    for q in range(qv + 1, vmax + 1):
        P = np.array(list(itertools.product(range(-q, 2 * q + 1), repeat=2)))
        X = np.column_stack([P, np.full(len(P), q)])
        X = X[(X @ np.array(normal) != 0) & (dm._gcd3(X) == 1)]
        A = dm._qualities(X, v, w)
        out += [tuple(x) for x in X[A < eps / q].tolist()]
    return sorted(out)


@pytest.mark.parametrize("v,normal", [((1, 1, 3), (1, -1, 0)), ((2, 3, 7), (3, -2, 0)),
                                      ((1, 2, 5), (1, 2, -1))])
def test_E_set_against_oracle(v, normal):
    assert dm._dot(v, normal) == 0
    got = sorted(dm._E_set(v, normal, W23, 1.0, 40))
    assert got == _E_oracle(v, normal, W23, 1.0, 40)
    assert got


def _D_oracle(u, up, w, eps, vmax):
    n = dm._cross(u, up)
    c = 2 ** (2 / w.b) * r_of(u, w).value
    out = []
    for q in range(u[2], vmax + 1):
        for p1 in range(-2 * q, 3 * q):
            for p2 in range(-2 * q, 3 * q):
                v = (p1, p2, q)
                if dm._dot(n, v) or math.gcd(*v) != 1:
                    continue
                if dm._qualities(np.array([v]), u, w)[0] >= c:
                    continue
                if v == tuple(u) or dm.in_Q_eps(v, w, eps):
                    out.append(v)
    return sorted(out)


@pytest.mark.parametrize("u,eps", [((1, 1, 5), 0.5), ((2, 1, 9), 0.8), ((3, 5, 13), 0.9)])
def test_D_set_against_oracle(u, eps):
    c = dm.cover_relation(u, W23, eps, 30)
    assert sorted(c.D_set) == _D_oracle(u, c.u_prime, W23, eps, 30)
    assert c.contains(u)


def _sample_Q(w, eps, k, seed):
    rng = np.random.default_rng(seed)
    q = rng.integers(3, 60, 4000)
    V = np.column_stack([rng.integers(0, q), rng.integers(0, q), q])
    return [tuple(v) for v in V[dm.q_eps_mask(V, w, eps)][:k].tolist()]


def test_cover_relation_structure():
    eps = 2 ** (-2 / W23.b)  # the plane-coherence threshold
    for u in _sample_Q(W23, eps, 4, seed=1):
        c = dm.cover_relation(u, W23, eps, 400)
        assert c.contains(u)
        assert np.all(c.D[:, 2] >= u[2])
        n = dm._cross(u, c.u_prime)
        for v, es in c.E_sets.items():
            assert all(dm._dot(n, x) != 0 and x[2] > v[2] for x in es)
        for v in c.D_set[:40]:
            if v[2] > 1:
                vp = r_of(v, W23).witness
                assert dm.plane_equal(u, c.u_prime, v, vp), (u, v)
        assert math.isfinite(c.D_sum(2.5)) and c.D_sum(2.5) >= 1


def test_cover_relation_gate():
    with pytest.raises(NotInQEps):
        dm.cover_relation((1, 2, 5), W23, 1e-3, 100)


def test_E_reach_is_a_valid_prune():
    # pruned and unpruned searches agree
    u = _sample_Q(W23, 0.9, 1, seed=3)[0]
    c = dm.cover_relation(u, W23, 0.9, 80)
    n = dm._cross(u, c.u_prime)
    for v in c.D_set:
        full = dm._E_set(v, n, W23, 0.9, 80)
        assert sorted(full) == sorted(c.E_sets.get(v, []))


# ---- box counting -------------------------------------------------------------

def test_box_counting_line_and_square():
    t = np.linspace(0, 1, 20000)
    line = dm.box_counting_dim(np.column_stack([t, 0.3 * t]), np.geomspace(1e-3, 1e-1, 6))
    assert line.dim == pytest.approx(1, abs=0.05)
    rng = np.random.default_rng(0)
    sq = dm.box_counting_dim(rng.random((200000, 2)), np.geomspace(1e-2, 2e-1, 6))
    assert sq.dim == pytest.approx(2, abs=0.08)


def test_box_counting_cantor_product():
    pts = np.zeros((1, 2))
    for k in range(1, 8):
        shifts = np.array([(a, b) for a in (0, 2) for b in (0, 2)]) * 3.0 ** -k
        pts = (pts[:, None, :] + shifts[None]).reshape(-1, 2)
    fit = dm.box_counting_dim(pts + 1e-9, 3.0 ** -np.arange(1, 7))
    assert fit.dim == pytest.approx(LOG43, abs=0.08)


def test_box_counting_degenerate():
    with pytest.raises(DegenerateFit):
        dm.box_counting_dim(np.zeros((10, 2)), [0.1, 0.01, 0.001, 1e-4])
    with pytest.raises(DegenerateFit):
        dm.box_counting_dim(np.random.default_rng(0).random((500, 2)), [0.1, 0.09, 0.08, 0.07])
