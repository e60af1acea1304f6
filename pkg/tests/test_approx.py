import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singvec.approx import (approx_geometry, best_approx_sequence, center, delta_membership,
                            quality, r_of, r_route_a, r_route_b, sandwich_check)
from singvec.errors import RouteMismatch
from singvec.lattice import Weight

W = {k: Weight.parse(k) for k in ("1/2,1/2", "2/3,1/3", "3/4,1/4")}


def raw_table_records(x, w, qmax):
    """Records from the full (q -> min over floor/ceil numerators) table."""
    out, best = [], math.inf
    for q in range(1, qmax + 1):
        cands = []
        for a in (math.floor(q * x[0]), math.ceil(q * x[0])):
            for b in (math.floor(q * x[1]), math.ceil(q * x[1])):
                d = max(abs(q * x[0] - a) ** (1 / w.a), abs(q * x[1] - b) ** (1 / w.b))
                # equal qualities: the componentwise nearest numerators win
                cands.append((d, abs(q * x[0] - a), abs(q * x[1] - b), a, b))
        d, _, _, a, b = min(cands)
        if d < best:
            best = d
            if q > 1:
                out.append(((a, b, q), d))
        if d == 0:
            break
    return out


def test_quality_examples():
    assert quality((Fraction(1, 3), Fraction(2, 3)), (1, 2, 3), W["1/2,1/2"]) == 0
    assert quality((0.5, 0.25), (1, 1, 2), W["2/3,1/3"]) == pytest.approx(0.125)
    assert quality((Fraction(1, 3), Fraction(2, 3)), (0, 1, 1), W["1/2,1/2"]) == pytest.approx(1 / 9)


def test_rational_point_single_exact_record():
    seq = best_approx_sequence((Fraction(1, 3), Fraction(2, 3)), W["1/2,1/2"], 10)
    assert [r.u for r in seq.records] == [(1, 2, 3)]
    assert seq.exact and seq.records[0].quality == 0


@pytest.mark.parametrize("x", [(Fraction(3, 7), Fraction(5, 7)), (Fraction(2, 9), Fraction(1, 6))])
def test_rational_point_ends_exact(x):
    seq = best_approx_sequence(x, W["2/3,1/3"], 100)
    q = math.lcm(x[0].denominator, x[1].denominator)
    assert seq.exact and seq.records[-1].u[2] == q


def test_records_match_raw_table_oracle():
    rng = np.random.default_rng(21)
    for k in range(100):
        x = tuple(rng.random(2))
        w = list(W.values())[k % 3]
        got = [(r.u, r.quality) for r in best_approx_sequence(x, w, 500).records]
        want = raw_table_records(x, w, 500)
        assert [u for u, _ in got] == [u for u, _ in want]
        assert np.allclose([a for _, a in got], [a for _, a in want], rtol=1e-12, atol=0)


def test_quad_precision_agrees_with_double():
    x = (math.sqrt(2) - 1, math.sqrt(3) - 1)
    a = best_approx_sequence(x, W["2/3,1/3"], 3000)
    b = best_approx_sequence(x, W["2/3,1/3"], 3000, precision="quad")
    assert [r.u for r in a.records] == [r.u for r in b.records]


def test_singularity_series_emitted():
    x = (math.sqrt(2) % 1, (1 - math.sqrt(2)) % 1)
    seq = best_approx_sequence(x, W["2/3,1/3"], 5000)
    s = seq.singularity_series()
    assert len(s) == len(seq) - 1 and all(v >= 0 for v in s)


@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True),
       st.integers(-5, 5), st.integers(-5, 5))
def test_translation_invariance(x1, x2, m1, m2):
    w = W["2/3,1/3"]
    # integer shifts of dyadic-exact floats keep q x - p exact
    x1, x2 = round(x1 * 2**20) / 2**20, round(x2 * 2**20) / 2**20
    a = best_approx_sequence((x1, x2), w, 300)
    b = best_approx_sequence((x1 + m1, x2 + m2), w, 300)
    assert [r.quality for r in a.records] == [r.quality for r in b.records]
    for ra, rb in zip(a.records, b.records):
        q = ra.u[2]
        assert rb.u == (ra.u[0] + q * m1, ra.u[1] + q * m2, q)


@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from(list(W)))
def test_qualities_strictly_decrease(x1, x2, wk):
    qs = best_approx_sequence((x1, x2), W[wk], 400).qualities
    assert all(b < a for a, b in zip(qs, qs[1:]))


def test_r_examples():
    r = r_of((1, 1, 2), W["1/2,1/2"])
    assert r.value == pytest.approx(0.25)
    assert r.witness == (0, 0, 1)
    assert r_of((0, 1, 2), W["1/2,1/2"]).value == pytest.approx(0.25)


def test_r_routes_agree():
    rng = np.random.default_rng(9)
    n = 0
    while n < 200:
        q = int(rng.integers(2, 201))
        p1, p2 = (int(v) for v in rng.integers(0, q, 2))
        if math.gcd(p1, p2, q) != 1:
            continue
        w = list(W.values())[n % 3]
        a, b = r_route_a((p1, p2, q), w)[0], r_route_b((p1, p2, q), w)[0]
        assert a == pytest.approx(b, rel=1e-9)
        n += 1


def test_r_witness_balance():
    # A(û, v) = A(û, u - v)
    rng = np.random.default_rng(10)
    w = W["2/3,1/3"]
    for _ in range(50):
        q = int(rng.integers(3, 150))
        u = (int(rng.integers(0, q)), int(rng.integers(0, q)), q)
        if math.gcd(*u) != 1:
            continue
        r = r_of(u, w)
        v = r.witness
        uv = tuple(a - b for a, b in zip(u, v))
        c = center(u)
        assert quality(c, v, w) == pytest.approx(r.value, rel=1e-9)
        assert quality(c, uv, w) == pytest.approx(r.value, rel=1e-9)


def test_r_of_rejects_disagreement(monkeypatch):
    import singvec.approx as ap
    monkeypatch.setattr(ap, "r_route_b", lambda u, w: (1.0, None))
    with pytest.raises(RouteMismatch):
        ap.r_of((1, 1, 2), W["1/2,1/2"])


def test_delta_membership_examples():
    w = W["2/3,1/3"]
    u = (3, 5, 7)
    g = approx_geometry(u, w)
    assert delta_membership(center(u), u, w)
    (c1, c2), (h1, h2) = g.bw_inner
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            assert delta_membership((c1 + 0.99 * a * h1, c2 + 0.99 * b * h2), u, w)
    (c1, c2), (h1, h2) = g.bw_outer
    for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert not delta_membership((c1 + 1.01 * a * h1, c2 + 1.01 * b * h2), u, w)


@pytest.mark.parametrize("wk", list(W))
def test_sandwich_on_sample_points(wk):
    rng = np.random.default_rng(1)
    for _ in range(5):
        rep = sandwich_check(tuple(rng.random(2)), W[wk], 2000)
        assert rep.ok, (rep.violations[:3], rep.delta_contradictions[:3])
        assert rep.checks > 0 and rep.delta_checks > 0
