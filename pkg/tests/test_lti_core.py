import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltsi_lab.errors import InfeasibleStorage, NotMinimal, NotReciprocal, NotStable, SingularN, SingularTransform
from ltsi_lab.lti_core import (
    Lossless,
    LtiRealization,
    Relaxation,
    Supplied,
    compatible_storage,
    congruence_transform,
    impulse_response,
    is_positive_real,
    is_reciprocal,
    lagrangian_from_io,
    minimality_ranks,
    reciprocity_matrix,
    storage_residuals,
    storage_synthesis,
    transfer,
)
from ltsi_lab.models import model
from oracles import canonical_passive, change_coordinates, crandn, partition_system, random_transform

J = 1j
T_SAMPLES = np.arange(0, 5.01, 0.5)


def timo(w):
    return model("timoshenko-naive").sys.member(w)


def scalar(a, b=1.0, c=1.0):
    return LtiRealization(a, b, c)


def test_realization_shapes():
    s = scalar(-1.0)
    assert (s.n, s.m, s.p) == (1, 1, 1)
    with pytest.raises(ValueError):
        LtiRealization(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))


def test_impulse_response_examples():
    for t in (0.0, 0.7, 3.0):
        assert impulse_response(timo(0.0), t)[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert impulse_response(timo(1.3), 0.0)[0, 0] == pytest.approx(1.0)
    assert impulse_response(scalar(-5.0), 1.0)[0, 0] == pytest.approx(np.exp(-5), rel=1e-14)
    with pytest.raises(ValueError):
        impulse_response(scalar(-1.0), -1.0)


def test_transfer_examples():
    assert transfer(timo(0.0), 2.0)[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert transfer(timo(1.0), 1j)[0, 0] == pytest.approx(-1j, abs=1e-14)
    assert transfer(scalar(-1.0), 0.0)[0, 0] == pytest.approx(1.0)


def test_transfer_matches_closed_form():
    g = model("timoshenko-naive").known_transfer
    rng = np.random.default_rng(3)
    for _ in range(20):
        w = rng.uniform(-10, 10)
        s = complex(rng.uniform(0.1, 5), rng.uniform(-5, 5))
        val = transfer(timo(w), s)[0, 0]
        assert abs(val - g(s, w)) <= 1e-9 * abs(g(s, w))


def test_minimality_examples():
    r1 = minimality_ranks(timo(1.0))
    assert (r1.rank_W, r1.rank_O, r1.minimal) == (4, 4, True)
    # at omega = 0 the spring couples q to nothing: W spans (q, dq/dt), O sees only dq/dt
    r0 = minimality_ranks(timo(0.0))
    assert (r0.rank_W, r0.rank_O, r0.minimal) == (2, 1, False)
    diag = LtiRealization(np.diag([-1.0, -2.0]), [[1.0], [0.0]], [[1.0, 0.0]])
    rd = minimality_ranks(diag)
    assert (rd.rank_W, rd.rank_O) == (1, 1)


def test_minimality_oracle_at_zero():
    # direct Krylov construction without the library helpers
    m = timo(0.0)
    W = np.hstack([np.linalg.matrix_power(m.A, k) @ m.B for k in range(4)])
    O = np.vstack([m.C @ np.linalg.matrix_power(m.A, k) for k in range(4)])
    assert np.linalg.matrix_rank(W) == 2 and np.linalg.matrix_rank(O) == 1


def test_reciprocity_matrix_timoshenko():
    S = reciprocity_matrix(timo(1.0)).S
    expected = np.array([[-1, J, 0, 0], [-J, -2, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    assert np.allclose(S, expected, atol=1e-12)


def test_reciprocity_matrix_symmetric_is_identity():
    rng = np.random.default_rng(5)
    X = crandn(rng, 3, 3)
    A = X + X.conj().T
    B = crandn(rng, 3, 1)
    S = reciprocity_matrix(LtiRealization(A, B, B.conj().T)).S
    assert np.allclose(S, np.eye(3), atol=1e-9)


def test_reciprocity_matrix_errors():
    with pytest.raises(NotMinimal):
        reciprocity_matrix(timo(0.0))
    rng = np.random.default_rng(2)
    bad = LtiRealization(crandn(rng, 3, 3), crandn(rng, 3, 1), crandn(rng, 1, 3))
    with pytest.raises(NotReciprocal):
        reciprocity_matrix(bad)


def test_is_reciprocal_examples():
    ok, res = is_reciprocal(timo(1.0), T_SAMPLES)
    assert ok and res <= 1e-12
    ok, _ = is_reciprocal(LtiRealization(-np.eye(2), np.eye(2), [[0, 1], [0, 0]]), T_SAMPLES)
    assert not ok
    assert is_reciprocal(scalar(-0.3, 2.0, 5.0), T_SAMPLES)[0]


def test_positive_real_examples():
    nu = np.arange(-50, 50.01, 0.1)
    rd = is_positive_real(scalar(-1.0), nu)
    assert rd.margin > 0 and rd.certified
    assert is_positive_real(scalar(-1.0), [0.0]).margin == pytest.approx(2.0)
    tm = is_positive_real(timo(1.0), nu)
    assert abs(tm.margin) <= 1e-9
    assert is_positive_real(scalar(1.0), nu).margin < 0


@pytest.mark.parametrize("w", [0.5, 1.0, 2.0, 5.0])
def test_reaction_diffusion_margin_closed_form(w):
    # G(j nu) = 1 / (j nu + a), a = 1 + w^2: 2 Re G = 2a / (a^2 + nu^2), smallest at |nu| = 50
    a = 1 + w * w
    nu = np.round(np.arange(-500, 501) * 0.1, 10)
    rep = is_positive_real(scalar(-a), nu)
    assert rep.margin == pytest.approx(2 * a / (a * a + 2500), rel=1e-12)
    assert abs(rep.argmin) == 50.0


def test_storage_examples():
    Q = storage_synthesis(timo(1.0), Lossless())
    expected = np.array([[1, -J, 0, 0], [J, 2, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    assert np.allclose(Q, expected, atol=1e-10)
    assert storage_synthesis(scalar(-2.0), Relaxation(1.0))[0, 0] == pytest.approx(1.0)
    assert np.allclose(storage_synthesis(timo(1.0), Supplied(expected)), expected)
    with pytest.raises(InfeasibleStorage):
        storage_synthesis(scalar(1.0), Supplied(1.0))
    with pytest.raises(NotMinimal):
        storage_synthesis(timo(0.0), Lossless())


def test_lossless_storage_infeasible_for_dissipative():
    with pytest.raises(InfeasibleStorage):
        storage_synthesis(scalar(-1.0), Lossless())


def test_compatible_storage_examples():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(compatible_storage(Q, Q).Q, Q)
    assert compatible_storage(-9.0, 4.0).Q[0, 0] == pytest.approx(9.0)
    S1 = reciprocity_matrix(timo(1.0)).S
    Q1 = storage_synthesis(timo(1.0), Lossless())
    assert np.allclose(compatible_storage(S1, Q1).Q, Q1, atol=1e-10)
    with pytest.raises(SingularN):
        compatible_storage(np.diag([1.0, 0.0]), np.eye(2))


def test_lagrangian_examples():
    integral, quad = lagrangian_from_io(scalar(-1.0, 1.0, 2.0), 2.0, lambda t: np.exp(t), 40.0)
    assert integral == pytest.approx(0.5, abs=1e-9) and quad == pytest.approx(0.5, abs=1e-12)
    assert lagrangian_from_io(scalar(-1.0), 1.0, lambda t: 0.0, 40.0) == (0.0, 0.0)
    integral, quad = lagrangian_from_io(scalar(-2.0), 1.0, lambda t: np.exp(2 * t), 20.0)
    assert integral == pytest.approx(1 / 16, abs=1e-9) and quad == pytest.approx(1 / 16, abs=1e-12)
    with pytest.raises(NotStable):
        lagrangian_from_io(scalar(1.0), 1.0, lambda t: np.exp(t), 10.0)


def test_congruence_examples():
    s = timo(1.0)
    same = congruence_transform(s, np.eye(4))
    assert np.allclose(same.A, s.A) and np.allclose(same.B, s.B) and np.allclose(same.C, s.C)
    two = congruence_transform(s, 2 * np.eye(4))
    assert np.allclose(two.B, 2 * s.B) and np.allclose(two.C, s.C / 2)
    assert np.allclose(transfer(two, 1.0), transfer(s, 1.0))
    with pytest.raises(SingularTransform):
        congruence_transform(s, np.diag([1.0, 1.0, 1.0, 0.0]))


def test_congruence_with_pipeline_transform():
    bundle = model("timoshenko-naive")
    out = congruence_transform(timo(1.0), bundle.known_T(1.0))
    assert np.linalg.norm(out.C.conj().T - out.B) <= 1e-10
    assert np.linalg.norm(out.A + out.A.conj().T) <= 1e-10


# -- properties ---------------------------------------------------------------

seeds = st.integers(0, 2**32 - 1)
dims = st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(1, 2)).filter(lambda d: d[0] + d[1] >= 1)


@settings(max_examples=60, deadline=None)
@given(seeds, dims)
def test_construct_then_recover(seed, d):
    n1, n2, m = d
    sys, D = partition_system(np.random.default_rng(seed), n1, n2, m)
    S = reciprocity_matrix(sys).S
    assert np.linalg.norm(S - D, 2) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 6))
def test_transfer_invariance(seed, n):
    rng = np.random.default_rng(seed)
    sys = LtiRealization(crandn(rng, n, n), crandn(rng, n, 2), crandn(rng, 2, n))
    T = random_transform(rng, n)
    out = congruence_transform(sys, T)
    abscissa = np.linalg.eigvals(sys.A).real.max()
    for _ in range(10):
        s = complex(abscissa + rng.uniform(0.5, 3), rng.uniform(-3, 3))
        G, GT = transfer(sys, s), transfer(out, s)
        assert np.linalg.norm(G - GT, 2) <= 1e-8 * max(1.0, np.linalg.norm(G, 2))


@settings(max_examples=40, deadline=None)
@given(seeds, dims)
def test_certificate_consistency(seed, d):
    n1, n2, m = d
    sys, _ = partition_system(np.random.default_rng(seed), n1, n2, m)
    cert = reciprocity_matrix(sys)
    _, res = is_reciprocal(sys, T_SAMPLES)
    # both residuals are rounding-level; the floor covers n-term accumulation in expm
    floor = 64 * np.finfo(float).eps * sys.n
    assert res <= 10 * max(cert.residual, floor)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.floats(0.2, 5.0))
def test_compatible_storage_properties(seed, n1, n2, beta):
    rng = np.random.default_rng(seed)
    base, D, Q0 = canonical_passive(rng, n1, n2, 1, beta)
    sys, S, Q = change_coordinates(base, D, Q0, random_transform(rng, n1 + n2))
    c = compatible_storage(S, Q, sys)
    assert np.linalg.norm(c.Q - S @ np.linalg.solve(c.Q, S), 2) <= 1e-8 * np.linalg.norm(c.Q, 2)
    assert np.linalg.eigvalsh(c.Q)[0] > 0
    assert c.residuals.feasible(1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.5, 3.0), st.floats(0.3, 3.0))
def test_lagrangian_scalar_family(a, b, rate):
    # A = -a, B = b, C = c, S = c / b; u(tau) = exp(rate tau)
    c = 1.7
    sys = scalar(-a, b, c)
    horizon = 40.0 / min(a, rate)
    integral, quad = lagrangian_from_io(sys, c / b, lambda t: np.exp(rate * t), horizon)
    z0 = b / (a + rate)
    assert quad == pytest.approx(z0 * z0 * c / b, rel=1e-12)
    assert abs(integral - quad) <= 1e-6 * max(1.0, abs(quad))


def test_storage_residuals_sign_convention():
    r = storage_residuals(scalar(-2.0), 1.0)
    assert r.lmi_margin == pytest.approx(-4.0)
    assert r.output_residual == 0 and r.positivity_margin == 1.0
