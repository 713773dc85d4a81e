"""Family-level certificates on a frequency grid.

An LTSI system is handled through its symbols ``A(omega)``, ``B(omega)``,
``C(omega)``; every certificate here is a per-sample computation on the
member ``(A(omega), B(omega), C(omega))`` followed by a deterministic
reduction in grid order.  Claims are certified at grid samples only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import lti_core
from ._parallel import parallel_map
from .errors import InfeasibleStorage, LimitDisagreement, LtsiError, NotReciprocal
from .lti_core import Lossless, LtiRealization, Relaxation, Supplied
from .spectra import (
    FrequencyGrid,
    MatrixSymbol,
    SampledSymbol,
    SupNormReport,
    growth_verdict,
    pointwise_inverse,
    spectral_norms,
    sup_norm,
)

log = logging.getLogger(__name__)

DEFAULT_BOUND = 1e6
DEFAULT_T_SAMPLES = tuple(0.5 * k for k in range(11))  # 0, 0.5, ..., 5


@dataclass(frozen=True)
class LtsiRealization:
    A_sym: MatrixSymbol
    B_sym: MatrixSymbol
    C_sym: MatrixSymbol
    grid: FrequencyGrid

    def __post_init__(self):
        n = self.A_sym.rows
        if self.A_sym.shape != (n, n):
            raise ValueError("A symbol must be square")
        if self.B_sym.rows != n or self.C_sym.cols != n:
            raise ValueError("B/C symbol dimensions do not match A")

    @property
    def n(self) -> int:
        return self.A_sym.rows

    @property
    def m(self) -> int:
        return self.B_sym.cols

    @property
    def p(self) -> int:
        return self.C_sym.rows

    def member(self, omega: float) -> LtiRealization:
        return LtiRealization(self.A_sym(omega), self.B_sym(omega), self.C_sym(omega))

    def with_grid(self, grid: FrequencyGrid) -> "LtsiRealization":
        return replace(self, grid=grid)


@dataclass(frozen=True)
class FamilyReciprocity:
    reciprocal: bool
    per_sample: np.ndarray  # bool per grid index (False on excluded samples)
    residuals: np.ndarray  # NaN on excluded samples
    worst_residual: float
    worst_omega: float


def family_reciprocity(sys: LtsiRealization, tol: float = 1e-10, t_samples=DEFAULT_T_SAMPLES,
                       threads: int = 1) -> FamilyReciprocity:
    """Member-wise check that the impulse response is Hermitian; verdict is the conjunction."""
    grid = sys.grid
    idx = grid.active_indices
    omegas = grid.samples[idx]
    out = parallel_map(lambda w: lti_core.is_reciprocal(sys.member(w), t_samples, tol), omegas, threads)
    ok = np.zeros(grid.count, dtype=bool)
    res = np.full(grid.count, np.nan)
    for k, (flag, r) in zip(idx, out):
        ok[k], res[k] = flag, r
    j = int(np.nanargmax(res)) if idx.size else 0
    return FamilyReciprocity(bool(ok[idx].all()), ok, res, float(res[j]), float(grid.samples[j]))


@dataclass(frozen=True)
class RankDrop:
    omega: float
    rank_W: int
    rank_O: int
    index: int


def minimal_frequency_set(sys: LtsiRealization, threshold: float = lti_core.RANK_THRESHOLD,
                          threads: int = 1) -> list[RankDrop]:
    """Every grid sample (excluded ones included) where the member is not minimal.

    Samples where a sampled symbol carries no value are skipped.
    """
    omegas = sys.grid.samples

    def one(w):
        try:
            member = sys.member(w)
        except LtsiError:
            return None
        if not all(np.isfinite(M).all() for M in (member.A, member.B, member.C)):
            return None
        return lti_core.minimality_ranks(member, threshold)

    reports = parallel_map(one, omegas, threads)
    return [RankDrop(float(w), r.rank_W, r.rank_O, k)
            for k, (w, r) in enumerate(zip(omegas, reports)) if r is not None and not r.minimal]


def punctured(sys: LtsiRealization, drops: list[RankDrop]) -> LtsiRealization:
    return sys.with_grid(sys.grid.exclude(d.index for d in drops))


@dataclass(frozen=True)
class LimitExtension:
    omega: float
    value: np.ndarray | None
    gap: float  # two-sided disagreement; NaN when only one side exists
    residual: float  # ||A^H S - S A|| + ||C^H - S B|| at the extension


@dataclass
class ReciprocityCertificate:
    S_sym: SampledSymbol
    residual_reciprocity: np.ndarray  # per grid index, NaN where not computed
    rank_drops: list[RankDrop]
    limit_extensions: list[LimitExtension]
    sup_S: SupNormReport
    sup_S_inv: SupNormReport
    S_inv_sym: SampledSymbol
    hermitian_defect: np.ndarray = field(repr=False, default=None)

    @property
    def certified_residual(self) -> float:
        return float(np.nanmax(self.residual_reciprocity))

    @property
    def minimal_grid(self) -> FrequencyGrid:
        """Grid without rank-drop samples."""
        return self.S_inv_sym.grid


def _absolute_reciprocity_residual(member: LtiRealization, S: np.ndarray) -> float:
    A, B, C = member.A, member.B, member.C
    return float(np.linalg.norm(A.conj().T @ S - S @ A, 2) + np.linalg.norm(C.conj().T - S @ B, 2))


def s_field(sys: LtsiRealization, tol: float = 1e-8, gap_rtol: float = 1e-4,
            threads: int = 1, drops: list[RankDrop] | None = None) -> ReciprocityCertificate:
    """The reciprocity-matrix field ``S(omega)`` over the grid.

    ``S`` is computed at every minimal active sample.  At a rank-drop sample
    the value is the average of the left and right linear extrapolations
    (two samples per side); the two must agree within
    ``gap_rtol * (1 + ||S|| nearby)`` or :class:`LimitDisagreement` is raised.
    """
    grid = sys.grid
    if drops is None:
        drops = minimal_frequency_set(sys, threads=threads)
    drop_idx = {d.index for d in drops}
    work = [k for k in grid.active_indices if k not in drop_idx]
    omegas = grid.samples

    def one(k):
        return lti_core.reciprocity_matrix(sys.member(omegas[k]), tol=tol)

    try:
        results = parallel_map(one, work, threads)
    except NotReciprocal as exc:
        raise NotReciprocal(f"family is not reciprocal: {exc}") from exc

    n = sys.n
    values = np.full((grid.count, n, n), np.nan, dtype=complex)
    residual = np.full(grid.count, np.nan)
    defect = np.full(grid.count, np.nan)
    have = np.zeros(grid.count, dtype=bool)
    for k, r in zip(work, results):
        values[k] = r.S
        residual[k] = _absolute_reciprocity_residual(sys.member(omegas[k]), r.S)
        defect[k] = r.hermitian_defect
        have[k] = True

    extensions = []
    for d in drops:
        k = d.index
        sides = []
        if k - 2 >= 0 and have[k - 1] and have[k - 2]:
            sides.append(2 * values[k - 1] - values[k - 2])
        if k + 2 < grid.count and have[k + 1] and have[k + 2]:
            sides.append(2 * values[k + 1] - values[k + 2])
        if not sides:
            extensions.append(LimitExtension(d.omega, None, float("nan"), float("nan")))
            continue
        if len(sides) == 2:
            gap = float(np.linalg.norm(sides[0] - sides[1], 2))
            nearby = max(np.linalg.norm(values[j], 2) for j in (k - 1, k + 1))
            if gap > gap_rtol * (1 + nearby):
                raise LimitDisagreement(d.omega, gap)
        else:
            gap = float("nan")
        ext = 0.5 * (sides[0] + sides[-1])
        ext = 0.5 * (ext + ext.conj().T)
        values[k] = ext
        r = _absolute_reciprocity_residual(sys.member(d.omega), ext)
        extensions.append(LimitExtension(d.omega, ext, gap, r))

    s_grid = FrequencyGrid(grid.omega_min, grid.step, grid.count,
                           tuple(k for k in range(grid.count) if not np.isfinite(values[k]).all()))
    S_sym = SampledSymbol(s_grid, values)
    minimal_grid = grid.exclude(drop_idx)
    inv = pointwise_inverse(S_sym, minimal_grid)
    if inv.auto_excluded:
        log.info("S inverse skipped %d ill-conditioned samples", len(inv.auto_excluded))
    return ReciprocityCertificate(
        S_sym=S_sym,
        residual_reciprocity=residual,
        rank_drops=list(drops),
        limit_extensions=extensions,
        sup_S=sup_norm(S_sym, minimal_grid),
        sup_S_inv=sup_norm(inv.symbol, inv.symbol.grid),
        S_inv_sym=inv.symbol,
        hermitian_defect=defect,
    )


@dataclass(frozen=True)
class BoundednessVerdict:
    certified: bool
    reports: dict

    def to_dict(self) -> dict:
        return {"certified": self.certified, **{k: v.to_dict() for k, v in self.reports.items()}}


def _bounded(report: SupNormReport, bound: float) -> bool:
    return report.value <= bound and report.verdict == "bounded"


def self_duality_check(cert: ReciprocityCertificate, bound: float = DEFAULT_BOUND) -> BoundednessVerdict:
    """Grid-scale evidence that ``S`` and ``S^{-1}`` are uniformly bounded."""
    ok = _bounded(cert.sup_S, bound) and _bounded(cert.sup_S_inv, bound)
    return BoundednessVerdict(ok, {"sup_S": cert.sup_S, "sup_S_inv": cert.sup_S_inv})


@dataclass
class StorageCertificate:
    Q_sym: SampledSymbol
    lmi_margin: np.ndarray  # lambda_max(A^H Q + Q A), per grid index
    output_residual: np.ndarray  # ||C^H - Q B||
    positivity_margin: np.ndarray  # lambda_min(Q)
    sup_Q: SupNormReport
    weakly_passive: bool
    lmi_scale: np.ndarray = field(repr=False, default=None)
    output_scale: np.ndarray = field(repr=False, default=None)


def _family_strategy(strategy, sys, s_cert, omega):
    if isinstance(strategy, Lossless):
        return strategy
    if isinstance(strategy, Relaxation):
        if strategy.S is not None:
            S = strategy.S
            return Relaxation(S(omega) if isinstance(S, MatrixSymbol) else S)
        return Relaxation(s_cert.S_sym(omega))
    if isinstance(strategy, Supplied):
        Q = strategy.Q
        return Supplied(Q(omega) if isinstance(Q, MatrixSymbol) else Q)
    raise TypeError(f"unknown storage strategy {strategy!r}")


def weak_impedance_passivity(sys: LtsiRealization, strategy, tol: float = lti_core.SEMIDEF_TOL,
                             s_cert: ReciprocityCertificate | None = None, threads: int = 1,
                             drops: list[RankDrop] | None = None) -> StorageCertificate:
    """Per-sample storage synthesis; raises :class:`InfeasibleStorage` at the first failing sample.

    Lossless and S-field relaxation storages need minimal members, so
    rank-drop samples are skipped for those strategies.
    """
    grid = sys.grid
    needs_minimal = isinstance(strategy, Lossless) or (isinstance(strategy, Relaxation) and strategy.S is None)
    if isinstance(strategy, Relaxation) and strategy.S is None and s_cert is None:
        s_cert = s_field(sys, threads=threads, drops=drops)
    skip = set()
    if needs_minimal:
        if drops is None:
            drops = s_cert.rank_drops if s_cert is not None else minimal_frequency_set(sys, threads=threads)
        skip = {d.index for d in drops}
    work = [k for k in grid.active_indices if k not in skip]
    omegas = grid.samples

    def one(k):
        w = omegas[k]
        member = sys.member(w)
        try:
            Q = lti_core.storage_synthesis(member, _family_strategy(strategy, sys, s_cert, w), tol)
        except LtsiError as exc:
            raise InfeasibleStorage(f"no storage: {exc}", omega=float(w)) from exc
        return Q, lti_core.storage_residuals(member, Q)

    results = parallel_map(one, work, threads)
    n = sys.n
    values = np.full((grid.count, n, n), np.nan, dtype=complex)
    arrays = {name: np.full(grid.count, np.nan) for name in
              ("lmi_margin", "output_residual", "positivity_margin", "lmi_scale", "output_scale")}
    weak = True
    for k, (Q, r) in zip(work, results):
        values[k] = Q
        for name in arrays:
            arrays[name][k] = getattr(r, name)
        weak &= r.feasible(tol)
    q_grid = grid.exclude(skip)
    Q_sym = SampledSymbol(q_grid, values)
    return StorageCertificate(Q_sym=Q_sym, sup_Q=sup_norm(Q_sym, q_grid), weakly_passive=bool(weak), **arrays)


def impedance_passivity(cert: StorageCertificate, bound: float = DEFAULT_BOUND) -> BoundednessVerdict:
    """Weak passivity plus a bounded storage field."""
    ok = cert.weakly_passive and _bounded(cert.sup_Q, bound)
    return BoundednessVerdict(ok, {"sup_Q": cert.sup_Q})


@dataclass(frozen=True)
class GeneratorReport:
    t: float
    omegas: np.ndarray
    norms: np.ndarray
    max_norm: float
    argmax: float
    verdict: str  # contraction | uniformly bounded | suspected unbounded | inconclusive

    def to_dict(self) -> dict:
        return {"t": self.t, "max_norm": self.max_norm, "argmax": self.argmax, "verdict": self.verdict}


def generator_diagnostic(sys: LtsiRealization, t: float, omegas=None, ceiling: float = DEFAULT_BOUND,
                         tol: float = 1e-9, threads: int = 1) -> GeneratorReport:
    """Propagator norms ``||expm(A(omega) t)||`` as a proxy for semigroup generation."""
    if not t > 0:
        raise ValueError("generator diagnostic needs t > 0")
    omegas = sys.grid.active_samples if omegas is None else np.asarray(omegas, dtype=float)
    mats = parallel_map(lambda w: scipy.linalg.expm(sys.A_sym(w) * t), omegas, threads)
    norms = spectral_norms(np.stack(mats))
    k = int(np.argmax(norms))
    vmax = float(norms[k])
    growth = growth_verdict(omegas, norms)
    if vmax <= 1 + tol:
        verdict = "contraction"
    elif growth == "suspected-unbounded" or vmax > ceiling:
        verdict = "suspected unbounded"
    elif growth == "bounded":
        verdict = "uniformly bounded"
    else:
        verdict = "inconclusive"
    return GeneratorReport(float(t), omegas, norms, vmax, float(omegas[k]), verdict)
