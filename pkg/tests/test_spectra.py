import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltsi_lab.errors import EvalOffGrid, SingularAtFrequency
from ltsi_lab.models import model
from ltsi_lab.spectra import (
    ClosedFormSymbol,
    FrequencyGrid,
    SampledSymbol,
    adjoint,
    continuity_report,
    dumps_symbol,
    eval_symbol,
    growth_verdict,
    loads_symbol,
    pointwise_inverse,
    sup_norm,
)

J = 1j


def test_default_grid_punctures_origin():
    g = FrequencyGrid.default()
    assert g.count == 401
    assert g.samples[200] == 0.0
    assert g.excluded == (200,)
    assert g.omega_max == pytest.approx(10.0)


def test_parse_and_roundtrip():
    g = FrequencyGrid.parse("-1:0.25:1")
    assert g.count == 9 and g.excluded == ()
    assert np.allclose(g.samples, np.linspace(-1, 1, 9))
    assert FrequencyGrid.from_dict(json.loads(json.dumps(g.exclude([3]).to_dict()))) == g.exclude([3])


@pytest.mark.parametrize("spec", ["1:2", "1:0:2", "2:0.1:1", "a:b:c"])
def test_parse_rejects(spec):
    with pytest.raises(ValueError):
        FrequencyGrid.parse(spec)


def test_refined_contains_samples():
    g = FrequencyGrid.from_range(-2, 0.5, 2, excluded=[4])
    r = g.refined(4)
    assert np.allclose(r.samples[::4], g.samples)
    assert r.excluded == (16,)


def test_timoshenko_A_at_zero():
    A = eval_symbol(model("timoshenko-naive").sys.A_sym, 0.0)
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 2] = expected[1, 3] = 1
    expected[3, 1] = -1
    assert np.array_equal(A, expected)


def test_timoshenko_S_at_one():
    S = model("timoshenko-naive").known_S(1.0)
    expected = np.array([[-1, J, 0, 0], [-J, -2, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    assert np.allclose(S, expected, atol=0)


def test_zero_symbol():
    assert not ClosedFormSymbol.zeros(2, 3)(4.2).any()


def test_closed_form_matches_polyval():
    rng = np.random.default_rng(1)
    coeffs = rng.normal(size=(2, 3, 4)) + 1j * rng.normal(size=(2, 3, 4))
    sym = ClosedFormSymbol(coeffs)
    for w in rng.uniform(-5, 5, 6):
        ref = np.array([[np.polyval(coeffs[i, j, ::-1], w) for j in range(3)] for i in range(2)])
        assert np.allclose(sym(w), ref, rtol=1e-13)


def test_sampled_off_grid():
    g = FrequencyGrid.parse("0:0.5:2")
    sym = ClosedFormSymbol.identity(2).sample(g)
    assert np.array_equal(sym(1.0), np.eye(2))
    with pytest.raises(EvalOffGrid):
        sym(0.3)
    with pytest.raises(EvalOffGrid):
        sym(7.0)


def test_adjoint_examples():
    bundle = model("timoshenko-naive")
    Q = bundle.known_Q
    B = bundle.sys.B_sym
    for w in (-3.0, 0.0, 1.0, 2.5):
        assert np.array_equal(adjoint(Q)(w), Q(w))
        assert np.array_equal(adjoint(B)(w), bundle.sys.C_sym(w))
    jw = ClosedFormSymbol.from_entries([[[0, J]]])
    assert adjoint(jw)(2.0)[0, 0] == -2j


def test_pointwise_inverse_examples():
    S = model("timoshenko-naive").known_S
    g = FrequencyGrid.parse("-2:0.5:2")
    inv = pointwise_inverse(S, g).symbol
    expected = np.eye(4, dtype=complex)
    expected[:2, :2] = [[-2, -J], [J, -1]]
    assert np.allclose(inv(1.0), expected, atol=1e-14)
    ident = pointwise_inverse(ClosedFormSymbol.identity(3), g).symbol
    assert np.array_equal(ident(0.5), np.eye(3))


def test_pointwise_inverse_singular():
    Q = model("timoshenko-naive").known_Q
    g = FrequencyGrid.parse("-1:0.5:1")
    res = pointwise_inverse(Q, g)
    assert [w for w, _ in res.auto_excluded] == [0.0]
    assert g.index_of(0.0) in res.symbol.grid.excluded
    with pytest.raises(SingularAtFrequency):
        pointwise_inverse(Q, g, strict=True)


def test_sup_norm_examples():
    g = FrequencyGrid.default()
    two = sup_norm(ClosedFormSymbol.constant(2 * np.eye(3)), g)
    assert two.value == pytest.approx(2) and two.argmax == -10.0 and two.verdict == "bounded"
    zero = sup_norm(ClosedFormSymbol.zeros(2, 2), g)
    assert zero.value == 0 and zero.argmax == -10.0
    # top-left block [[w^2, -jw], [jw, w^2+1]] at w = 10: (2w^2+1 + sqrt(4w^2+1)) / 2
    q = sup_norm(model("timoshenko-naive").known_Q, g)
    assert q.value == pytest.approx((201 + np.sqrt(401)) / 2, rel=1e-13)
    assert abs(q.argmax) == 10.0
    assert q.suspected_unbounded


def test_continuity_examples():
    g = FrequencyGrid.parse("-1:0.1:1")
    assert continuity_report(ClosedFormSymbol.identity(2).sample(g)) == 0
    sign = SampledSymbol(g, np.sign(g.samples + 0.05)[:, None, None])
    assert continuity_report(sign) == pytest.approx(2)
    h = 0.05
    S = model("timoshenko-naive").known_S.sample(FrequencyGrid.default())
    assert continuity_report(S) <= h * (2 * 10 + 1) + 10 * h * h


def test_growth_verdict_cases():
    w = np.linspace(-10, 10, 41)
    assert growth_verdict(w, np.ones_like(w)) == "bounded"
    assert growth_verdict(w, 1 + w**2) == "suspected-unbounded"
    assert growth_verdict(w, 1 / (1 + w**2)) == "bounded"


def test_symbol_json_roundtrip():
    S = model("timoshenko-naive").known_S
    back = loads_symbol(dumps_symbol(S))
    for w in (-1.5, 0.0, 3.0):
        assert np.array_equal(back(w), S(w))
    g = FrequencyGrid.parse("0:1:3").exclude([1])
    sampled = S.sample(g)
    back = loads_symbol(dumps_symbol(sampled))
    assert back.grid == g
    assert np.array_equal(back(2.0), S(2.0))
    assert np.isnan(back.values[1]).all()


complex_coeffs = st.builds(
    lambda re, im: np.array(re) + 1j * np.array(im),
    st.lists(st.floats(-3, 3), min_size=2 * 2 * 3, max_size=2 * 2 * 3),
    st.lists(st.floats(-3, 3), min_size=2 * 2 * 3, max_size=2 * 2 * 3),
)


@settings(max_examples=40, deadline=None)
@given(complex_coeffs, st.floats(-5, 5))
def test_adjoint_involution(c, w):
    sym = ClosedFormSymbol(c.reshape(2, 2, 3))
    assert np.array_equal(adjoint(adjoint(sym))(w), sym(w))
    g = FrequencyGrid.parse("-1:0.5:1")
    sampled = sym.sample(g)
    assert np.array_equal(adjoint(adjoint(sampled)).sample(g).values, sampled.values)


@settings(max_examples=40, deadline=None)
@given(complex_coeffs)
def test_inverse_times_symbol_is_identity(c):
    sym = ClosedFormSymbol(c.reshape(2, 2, 3))
    g = FrequencyGrid.parse("-2:0.25:2")
    res = pointwise_inverse(sym, g)
    for k in res.symbol.grid.active_indices:
        M = sym(g.samples[k])
        err = np.linalg.norm(res.symbol.values[k] @ M - np.eye(2))
        assert err <= 1e-10 * max(1.0, np.linalg.cond(M))


@settings(max_examples=40, deadline=None)
@given(complex_coeffs, st.integers(2, 5))
def test_sup_norm_monotone_under_refinement(c, factor):
    sym = ClosedFormSymbol(c.reshape(2, 2, 3))
    g = FrequencyGrid.parse("-3:0.5:3")
    assert sup_norm(sym, g.refined(factor)).value >= sup_norm(sym, g).value
