import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltsi_lab.analysis import (
    LtsiRealization,
    family_reciprocity,
    generator_diagnostic,
    impedance_passivity,
    minimal_frequency_set,
    s_field,
    self_duality_check,
    weak_impedance_passivity,
)
from ltsi_lab.errors import InfeasibleStorage, NotReciprocal
from ltsi_lab.lti_core import SEMIDEF_TOL, Lossless, Relaxation, Supplied
from ltsi_lab.models import model
from ltsi_lab.spectra import ClosedFormSymbol, FrequencyGrid
from oracles import crandn, hermitian, signature

J = 1j
H = 0.05
FULL = FrequencyGrid.parse("-10:0.05:10")


@pytest.fixture(scope="module")
def naive_cert():
    sys = model("timoshenko-naive", FULL).sys
    return sys, s_field(sys)


def partition_family(rng, n1, n2, grid):
    """Reciprocal family with constant signature: polynomial-in-omega partition blocks."""
    n = n1 + n2
    D = signature(n1, n2)
    coeffs = np.zeros((n, n, 2), dtype=complex)
    for k in range(2):
        coeffs[:n1, :n1, k] = hermitian(rng, n1)
        coeffs[n1:, n1:, k] = hermitian(rng, n2)
        X = crandn(rng, n1, n2)
        coeffs[:n1, n1:, k] = X
        coeffs[n1:, :n1, k] = -X.conj().T
    B = crandn(rng, n, 1)
    A = ClosedFormSymbol(coeffs)
    return LtsiRealization(A, ClosedFormSymbol.constant(B), ClosedFormSymbol.constant((D @ B).conj().T), grid), D


def test_family_reciprocity_examples():
    fam = family_reciprocity(model("timoshenko-naive").sys)
    assert fam.reciprocal and fam.worst_residual <= 1e-10
    assert family_reciprocity(model("heat").sys).reciprocal
    A = ClosedFormSymbol.from_entries([[-1, [0, J]], [0, -2]])
    B = ClosedFormSymbol.constant([[1], [1]])
    bad = LtsiRealization(A, B, ClosedFormSymbol.constant([[2, 2]]), FrequencyGrid.parse("-2:0.5:2"))
    fam = family_reciprocity(bad)
    assert not fam.reciprocal
    assert fam.per_sample[bad.grid.index_of(0.0)]


def test_rank_drops():
    drops = minimal_frequency_set(model("timoshenko-naive", FULL).sys)
    assert [(d.omega, d.rank_W, d.rank_O) for d in drops] == [(0.0, 2, 1)]
    # also found when the origin is punctured
    assert [d.omega for d in minimal_frequency_set(model("timoshenko-naive").sys)] == [0.0]
    assert minimal_frequency_set(model("heat", FULL).sys) == []
    wave = minimal_frequency_set(model("wave", FULL).sys)
    assert [(d.omega, d.rank_W, d.rank_O) for d in wave] == [(0.0, 1, 1)]


def test_s_field_matches_closed_form(naive_cert):
    sys, cert = naive_cert
    known = model("timoshenko-naive").known_S
    for k in cert.minimal_grid.active_indices:
        w = FULL.samples[k]
        assert np.abs(cert.S_sym.values[k] - known(w)).max() <= 1e-8
    assert cert.certified_residual <= 1e-10 * 200


def test_s_field_limit_extension(naive_cert):
    _, cert = naive_cert
    (ext,) = cert.limit_extensions
    assert ext.omega == 0.0
    # linear extrapolation of -w^2 from +-h, +-2h lands at 2 h^2 from the limit
    assert np.abs(ext.value - np.diag([0, -1, 1, 1])).max() <= 3 * H * H
    assert ext.gap <= 1e-12


def test_s_field_heat_and_random_family():
    heat = s_field(model("heat").sys)
    active = heat.S_sym.grid.active_indices
    assert np.allclose(heat.S_sym.values[active], 1.0, atol=1e-12)
    rng = np.random.default_rng(11)
    sys, D = partition_family(rng, 2, 1, FrequencyGrid.parse("-3:0.25:3"))
    cert = s_field(sys)
    assert cert.rank_drops == []
    for k in sys.grid.active_indices:
        assert np.linalg.norm(cert.S_sym.values[k] - D, 2) <= 1e-6


def test_s_field_rejects_nonreciprocal():
    rng = np.random.default_rng(4)
    A = ClosedFormSymbol(crandn(rng, 2, 2, 2))
    bad = LtsiRealization(A, ClosedFormSymbol.constant(crandn(rng, 2, 1)),
                          ClosedFormSymbol.constant(crandn(rng, 1, 2)), FrequencyGrid.parse("-1:0.5:1"))
    with pytest.raises(NotReciprocal):
        s_field(bad)


def test_self_duality_examples(naive_cert):
    _, cert = naive_cert
    v = self_duality_check(cert)
    assert not v.certified
    assert cert.sup_S.value == pytest.approx((201 + np.sqrt(401)) / 2, rel=1e-9)
    assert cert.sup_S.suspected_unbounded
    for name in ("heat", "timoshenko-physical"):
        c = s_field(model(name).sys)
        v = self_duality_check(c)
        assert v.certified and c.sup_S.value == pytest.approx(1.0, abs=1e-9)


def test_weak_passivity_examples(naive_cert):
    sys, cert = naive_cert
    q = weak_impedance_passivity(sys, Lossless(), s_cert=cert)
    assert q.weakly_passive
    known = model("timoshenko-naive").known_Q
    for k in q.Q_sym.grid.active_indices:
        assert np.abs(q.Q_sym.values[k] - known(FULL.samples[k])).max() <= 1e-8
    heat = model("heat").sys
    qh = weak_impedance_passivity(heat, Relaxation())
    idx = qh.Q_sym.grid.active_indices
    assert np.allclose(qh.Q_sym.values[idx], 1.0)
    assert np.allclose(qh.lmi_margin[idx], -2 * heat.grid.samples[idx] ** 2)
    anti = LtsiRealization(ClosedFormSymbol.constant([[1.0]]), ClosedFormSymbol.identity(1),
                           ClosedFormSymbol.identity(1), FrequencyGrid.parse("-1:0.5:1"))
    with pytest.raises(InfeasibleStorage):
        weak_impedance_passivity(anti, Supplied(np.eye(1)))


def test_impedance_passivity_examples(naive_cert):
    sys, cert = naive_cert
    q = weak_impedance_passivity(sys, Lossless(), s_cert=cert)
    v = impedance_passivity(q)
    assert not v.certified
    assert q.sup_Q.value == pytest.approx(110.51, abs=5e-3) and abs(q.sup_Q.argmax) == 10.0
    phys = model("timoshenko-physical").sys
    qp = weak_impedance_passivity(phys, Lossless())
    assert impedance_passivity(qp).certified and qp.sup_Q.value == pytest.approx(1.0, abs=1e-9)
    qh = weak_impedance_passivity(model("heat").sys, Relaxation())
    assert impedance_passivity(qh).certified and qh.sup_Q.value == pytest.approx(1.0)


def test_generator_examples():
    naive = generator_diagnostic(model("timoshenko-naive").sys, 1.0, omegas=[10, 20, 40, 80])
    assert np.all(np.diff(naive.norms) > 0)
    assert naive.verdict == "suspected unbounded"
    for name in ("timoshenko-physical", "heat"):
        rep = generator_diagnostic(model(name).sys, 1.0)
        assert rep.max_norm <= 1 + 1e-9 and rep.verdict == "contraction"
    with pytest.raises(ValueError):
        generator_diagnostic(model("heat").sys, 0.0)


def test_generator_oracle_values():
    # independent propagator: eigendecomposition of the (diagonalizable) member at each omega
    sys = model("timoshenko-naive").sys
    rep = generator_diagnostic(sys, 1.0, omegas=[10.0, 80.0])
    for w, got in zip((10.0, 80.0), rep.norms):
        lam, V = np.linalg.eig(sys.A_sym(w))
        P = V @ np.diag(np.exp(lam)) @ np.linalg.inv(V)
        assert got == pytest.approx(np.linalg.norm(P, 2), rel=1e-8)


def test_exclusion_stability():
    sys = model("timoshenko-naive", FULL).sys
    with_zero = s_field(sys)
    without = s_field(model("timoshenko-naive").sys)
    mask = np.arange(FULL.count) != 200
    assert np.array_equal(with_zero.S_sym.values[mask], without.S_sym.values[mask])


def test_threads_do_not_change_results(naive_cert):
    sys, cert = naive_cert
    par = s_field(sys, threads=4)
    assert np.array_equal(np.nan_to_num(par.S_sym.values), np.nan_to_num(cert.S_sym.values))


def test_hermitian_defect(naive_cert):
    _, cert = naive_cert
    assert np.nanmax(cert.hermitian_defect) <= 1e-10
    for k in cert.S_sym.grid.active_indices:
        S = cert.S_sym.values[k]
        assert np.linalg.norm(S - S.conj().T) <= 1e-10 * np.linalg.norm(S)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(1, 2), st.integers(0, 2))
def test_family_reciprocity_iff_s_field(seed, n1, n2):
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid.parse("-2:0.5:2")
    sys, _ = partition_family(rng, n1, n2, grid)
    if rng.uniform() < 0.5:
        # break reciprocity with a non-Hermitian perturbation of A
        A = ClosedFormSymbol(sys.A_sym.coeffs + 0.5 * crandn(rng, *sys.A_sym.coeffs.shape))
        sys = LtsiRealization(A, sys.B_sym, sys.C_sym, grid)
    fam = family_reciprocity(sys)
    try:
        s_field(sys)
        succeeded = True
    except NotReciprocal:
        succeeded = False
    assert fam.reciprocal == succeeded


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.1, 2.0))
def test_impedance_certified_implies_weak(shift, gain):
    # scalar relaxation family A = -(shift + w^2), B = C = gain, Q = S = 1
    A = ClosedFormSymbol.from_entries([[[-shift, 0, -1]]])
    g = ClosedFormSymbol.constant([[gain]])
    sys = LtsiRealization(A, g, g, FrequencyGrid.parse("-4:0.5:4"))
    q = weak_impedance_passivity(sys, Relaxation())
    if impedance_passivity(q).certified:
        idx = q.Q_sym.grid.active_indices
        assert np.all(q.lmi_margin[idx] <= SEMIDEF_TOL * q.lmi_scale[idx])
