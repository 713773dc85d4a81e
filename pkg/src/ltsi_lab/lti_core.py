"""Finite-dimensional computations on a single LTI member ``(A, B, C)``.

Everything here is in the complex setting: transposes of the real theory are
replaced by conjugate transposes, so a member is reciprocal when its impulse
response is Hermitian at every time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import (
    InfeasibleStorage,
    NotMinimal,
    NotPositiveSemidefinite,
    NotReciprocal,
    NotStable,
    ResolventSingular,
    SingularN,
    SingularTransform,
)
from .spectra import DEFAULT_CONDITION_CEILING

log = logging.getLogger(__name__)

RANK_THRESHOLD = 1e-9
SEMIDEF_TOL = 1e-9


def _herm(M):
    return 0.5 * (M + M.conj().T)


def _norm(M) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


@dataclass(frozen=True)
class LtiRealization:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        B = np.atleast_2d(np.asarray(self.B, dtype=complex))
        C = np.atleast_2d(np.asarray(self.C, dtype=complex))
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def _require_square_io(self):
        if self.m != self.p:
            raise ValueError(f"reciprocity needs m == p, got m={self.m}, p={self.p}")


def impulse_response(sys: LtiRealization, t: float) -> np.ndarray:
    """``C expm(A t) B``."""
    if t < 0:
        raise ValueError("impulse response is defined for t >= 0")
    return sys.C @ scipy.linalg.expm(sys.A * t) @ sys.B


def transfer(sys: LtiRealization, s: complex) -> np.ndarray:
    """``C (sI - A)^{-1} B`` by a linear solve."""
    M = s * np.eye(sys.n) - sys.A
    if np.linalg.cond(M) > DEFAULT_CONDITION_CEILING:
        raise ResolventSingular(f"s={s} is an eigenvalue of A to working precision")
    return sys.C @ np.linalg.solve(M, sys.B)


def controllability_matrix(sys: LtiRealization) -> np.ndarray:
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(sys: LtiRealization) -> np.ndarray:
    blocks = [sys.C]
    for _ in range(sys.n - 1):
        blocks.append(blocks[-1] @ sys.A)
    return np.vstack(blocks)


@dataclass(frozen=True)
class MinimalityReport:
    rank_W: int
    rank_O: int
    sigma_min_W: float
    sigma_min_O: float
    minimal: bool


def _numerical_rank(M, threshold):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0, sv
    return int(np.sum(sv > threshold * sv[0])), sv


def minimality_ranks(sys: LtiRealization, threshold: float = RANK_THRESHOLD) -> MinimalityReport:
    """Numerical ranks of the controllability and observability matrices.

    Singular values below ``threshold * sigma_max`` count as zero;
    ``sigma_min_*`` is the n-th singular value (the margin to rank loss).
    """
    n = sys.n
    rW, svW = _numerical_rank(controllability_matrix(sys), threshold)
    rO, svO = _numerical_rank(observability_matrix(sys), threshold)
    smin_W = float(svW[n - 1]) if svW.size >= n else 0.0
    smin_O = float(svO[n - 1]) if svO.size >= n else 0.0
    return MinimalityReport(rW, rO, smin_W, smin_O, rW == n and rO == n)


@dataclass(frozen=True)
class ReciprocityMatrix:
    S: np.ndarray
    commutation_residual: float  # ||A^H S - S A|| / (||A|| ||S||)
    output_residual: float  # ||C^H - S B|| / max(||C||, ||S|| ||B||)
    hermitian_defect: float  # ||S - S^H|| / ||S|| before symmetrization

    @property
    def residual(self) -> float:
        return max(self.commutation_residual, self.output_residual, self.hermitian_defect)


def reciprocity_residuals(sys: LtiRealization, S: np.ndarray) -> tuple[float, float]:
    """Relative residuals of ``A^H S = S A`` and ``C^H = S B``."""
    nS = max(_norm(S), 1e-300)
    comm = _norm(sys.A.conj().T @ S - S @ sys.A) / max(_norm(sys.A) * nS, 1e-300)
    out = _norm(sys.C.conj().T - S @ sys.B) / max(_norm(sys.C), nS * _norm(sys.B), 1e-300)
    return comm, out


def reciprocity_matrix(sys: LtiRealization, tol: float = 1e-8,
                       threshold: float = RANK_THRESHOLD) -> ReciprocityMatrix:
    """Recover the unique Hermitian ``S`` with ``A^H S = S A`` and ``C^H = S B``.

    Computes ``O^H W^H (W W^H)^{-1}`` through a QR factorization of ``W^H``:
    with ``W^H = Q R`` the product collapses to ``O^H Q R^{-H}``.
    """
    sys._require_square_io()
    report = minimality_ranks(sys, threshold)
    if not report.minimal:
        raise NotMinimal(f"ranks (W, O) = ({report.rank_W}, {report.rank_O}) < n = {sys.n}")
    W = controllability_matrix(sys)
    O = observability_matrix(sys)
    Q, R = np.linalg.qr(W.conj().T)
    # S = O^H Q R^{-H}  <=>  S R^H = O^H Q  <=>  R S^H = Q^H O
    S = scipy.linalg.solve_triangular(R, Q.conj().T @ O, lower=False).conj().T
    defect = _norm(S - S.conj().T) / max(_norm(S), 1e-300)
    S = _herm(S)
    comm, out = reciprocity_residuals(sys, S)
    result = ReciprocityMatrix(S, comm, out, defect)
    if result.residual > tol:
        raise NotReciprocal(
            f"no reciprocity certificate: commutation {comm:.2e}, output {out:.2e}, hermitian {defect:.2e}")
    return result


def is_reciprocal(sys: LtiRealization, t_samples: Sequence[float], tol: float = 1e-10) -> tuple[bool, float]:
    """Check ``g(t) == g(t)^H`` at the given times; residual is relative to ``max(1, ||g||)``."""
    sys._require_square_io()
    worst = 0.0
    for t in t_samples:
        g = impulse_response(sys, t)
        worst = max(worst, _norm(g - g.conj().T) / max(1.0, _norm(g)))
    return worst <= tol, worst


@dataclass(frozen=True)
class PositiveRealReport:
    margin: float
    argmin: float
    skipped: list[float]
    certified: bool


def is_positive_real(sys: LtiRealization, nu_grid: Sequence[float], tol: float = 1e-9) -> PositiveRealReport:
    """Sampled positive-realness: ``min_nu lambda_min(G(j nu) + G(j nu)^H)``.

    Frequencies where ``j nu`` hits an eigenvalue of ``A`` are skipped.
    """
    sys._require_square_io()
    eigs = np.linalg.eigvals(sys.A)
    scale = max(1.0, float(np.abs(eigs).max()))
    if eigs.real.max() > 1e-9 * scale:
        log.info("positive-real test on a member with unstable eigenvalues (max Re %.3e)", eigs.real.max())
    margin, argmin, skipped = np.inf, float("nan"), []
    for nu in nu_grid:
        if np.min(np.abs(1j * nu - eigs)) <= 1e-9 * scale:
            skipped.append(float(nu))
            continue
        try:
            G = transfer(sys, 1j * nu)
        except ResolventSingular:
            skipped.append(float(nu))
            continue
        lam = float(np.linalg.eigvalsh(G + G.conj().T)[0])
        if lam < margin:
            margin, argmin = lam, float(nu)
    return PositiveRealReport(float(margin), argmin, skipped, margin >= -tol)


# -- storage functions ---------------------------------------------------------


@dataclass(frozen=True)
class Supplied:
    Q: object  # matrix, or a symbol at family level


@dataclass(frozen=True)
class Lossless:
    pass


@dataclass(frozen=True)
class Relaxation:
    S: object = None  # matrix; at family level None means "use the S-field"


@dataclass(frozen=True)
class StorageResiduals:
    lmi_margin: float  # lambda_max(A^H Q + Q A)
    output_residual: float  # ||C^H - Q B||
    positivity_margin: float  # lambda_min(Q)
    lmi_scale: float
    output_scale: float

    def feasible(self, tol: float = SEMIDEF_TOL) -> bool:
        return (self.lmi_margin <= tol * self.lmi_scale
                and self.output_residual <= tol * self.output_scale
                and self.positivity_margin >= -tol * self.lmi_scale)


def storage_residuals(sys: LtiRealization, Q: np.ndarray) -> StorageResiduals:
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    lyap = _herm(sys.A.conj().T @ Q + Q @ sys.A)
    nQ = _norm(Q)
    return StorageResiduals(
        lmi_margin=float(np.linalg.eigvalsh(lyap)[-1]),
        output_residual=_norm(sys.C.conj().T - Q @ sys.B),
        positivity_margin=float(np.linalg.eigvalsh(_herm(Q))[0]),
        lmi_scale=max(1.0, _norm(sys.A) * nQ),
        output_scale=max(1.0, _norm(sys.C), nQ * _norm(sys.B)),
    )


def _hermitian_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[i, i] = 1
        basis.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = E[j, i] = 1
            basis.append(E)
            F = np.zeros((n, n), dtype=complex)
            F[i, j], F[j, i] = 1j, -1j
            basis.append(F)
    return basis


def lossless_storage(sys: LtiRealization) -> tuple[np.ndarray, float, int]:
    """Least-squares solve of ``A^H Q + Q A = 0``, ``Q B = C^H`` over Hermitian ``Q``.

    Returns ``(Q, relative_residual, nullity)``; a nullity above zero means the
    solution is not unique (the member is not minimal).
    """
    n = sys.n
    basis = _hermitian_basis(n)
    cols = []
    for E in basis:
        lyap = sys.A.conj().T @ E + E @ sys.A
        out = E @ sys.B
        v = np.concatenate([lyap.ravel(), out.ravel()])
        cols.append(np.concatenate([v.real, v.imag]))
    M = np.array(cols).T
    rhs_c = np.concatenate([np.zeros(n * n, dtype=complex), sys.C.conj().T.ravel()])
    rhs = np.concatenate([rhs_c.real, rhs_c.imag])
    # column scaling keeps the least-squares problem balanced when |omega| is large
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0] = 1.0
    x, _, rank, _ = np.linalg.lstsq(M / scale, rhs, rcond=None)
    x = x / scale
    Q = sum(c * E for c, E in zip(x, basis))
    resid = np.linalg.norm(M @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return Q, float(resid), int(len(basis) - rank)


def storage_synthesis(sys: LtiRealization, strategy, tol: float = SEMIDEF_TOL) -> np.ndarray:
    """Return a storage ``Q = Q^H >= 0`` with ``A^H Q + Q A <= 0`` and ``C^H = Q B``."""
    sys._require_square_io()
    if isinstance(strategy, Supplied):
        Q = _herm(np.atleast_2d(np.asarray(strategy.Q, dtype=complex)))
    elif isinstance(strategy, Relaxation):
        if strategy.S is None:
            raise ValueError("Relaxation strategy needs S at member level")
        Q = _herm(np.atleast_2d(np.asarray(strategy.S, dtype=complex)))
        if np.linalg.eigvalsh(Q)[0] <= 0:
            raise NotPositiveSemidefinite("relaxation storage needs S > 0")
    elif isinstance(strategy, Lossless):
        if not minimality_ranks(sys).minimal:
            raise NotMinimal("lossless storage is unique only for minimal members")
        Q, resid, nullity = lossless_storage(sys)
        Q = _herm(Q)
        log.debug("lossless storage: residual %.2e, nullity %d", resid, nullity)
        if resid > tol * 10:
            raise InfeasibleStorage(f"lossless storage equations inconsistent (residual {resid:.2e})")
    else:
        raise TypeError(f"unknown storage strategy {strategy!r}")
    r = storage_residuals(sys, Q)
    if r.positivity_margin < -tol * r.lmi_scale:
        raise NotPositiveSemidefinite(f"storage has eigenvalue {r.positivity_margin:.3e}")
    if not r.feasible(tol):
        raise InfeasibleStorage(
            f"storage residuals too large: lmi {r.lmi_margin:.2e}, output {r.output_residual:.2e}")
    return Q


def _hermitian_sqrt(Q):
    lam, V = np.linalg.eigh(_herm(Q))
    if lam[0] <= 0:
        raise NotPositiveSemidefinite("compatible storage needs Q > 0")
    r = np.sqrt(lam)
    return (V * r) @ V.conj().T, (V / r) @ V.conj().T


@dataclass(frozen=True)
class CompatibleStorage:
    Q: np.ndarray
    compatibility_residual: float  # ||Qc - S Qc^{-1} S|| / ||Qc||
    residuals: StorageResiduals | None = None


def compatible_storage(S: np.ndarray, Q: np.ndarray, sys: LtiRealization | None = None,
                       tol: float = SEMIDEF_TOL) -> CompatibleStorage:
    """Geometric-mean correction ``Qc = Q^{1/2} |N| Q^{1/2}``, ``N = Q^{-1/2} S Q^{-1/2}``.

    ``Qc`` is positive definite and satisfies ``Qc = S Qc^{-1} S``.  When
    ``sys`` is given the storage inequalities are re-checked and reported.
    """
    S = _herm(np.atleast_2d(np.asarray(S, dtype=complex)))
    root, inv_root = _hermitian_sqrt(np.atleast_2d(np.asarray(Q, dtype=complex)))
    N = _herm(inv_root @ S @ inv_root)
    mu, V = np.linalg.eigh(N)
    if np.min(np.abs(mu)) <= tol * np.max(np.abs(mu)):
        raise SingularN("S is singular relative to Q; no compatible storage")
    Qc = _herm(root @ ((V * np.abs(mu)) @ V.conj().T) @ root)
    compat = _norm(Qc - S @ np.linalg.solve(Qc, S)) / _norm(Qc)
    residuals = storage_residuals(sys, Qc) if sys is not None else None
    if residuals is not None:
        log.debug("compatible storage: lmi %.2e output %.2e", residuals.lmi_margin, residuals.output_residual)
    return CompatibleStorage(Qc, float(compat), residuals)


def lagrangian_from_io(sys: LtiRealization, S: np.ndarray, u_past: Callable[[float], np.ndarray],
                       horizon: float) -> tuple[float, float]:
    """Both sides of the Lagrangian identity for a past input ``u_past`` on ``(-inf, 0]``.

    ``z(0) = int_{-inf}^0 expm(-A tau) B u(tau) dtau`` and the free response
    ``y(t) = C expm(A t) z(0)`` give::

        integral  = int_0^horizon <u(-t), y(t)> dt
        quadratic = z(0)^H S z(0)

    Returned unscaled; for a reciprocal stable member they coincide.
    """
    eigs = np.linalg.eigvals(sys.A)
    if eigs.real.max() >= 0:
        raise NotStable(f"member not asymptotically stable (max Re eig {eigs.real.max():.3e})")
    A, B, C = sys.A, sys.B, sys.C
    m = sys.m

    def as_vec(u):
        return np.atleast_1d(np.asarray(u, dtype=complex)).reshape(m)

    def z0_integrand(sigma):
        return scipy.linalg.expm(A * sigma) @ B @ as_vec(u_past(-sigma))

    z0 = _quad_complex(z0_integrand, 0.0, np.inf)

    def pairing(t):
        y = C @ scipy.linalg.expm(A * t) @ z0
        return np.array([np.vdot(as_vec(u_past(-t)), y)])

    integral = _quad_complex(pairing, 0.0, horizon)[0]
    quadratic = np.vdot(z0, np.atleast_2d(np.asarray(S, dtype=complex)) @ z0)
    return float(integral.real), float(quadratic.real)


def _quad_complex(f, a, b):
    def stacked(x):
        v = f(x)
        return np.concatenate([v.real, v.imag])

    val, _ = scipy.integrate.quad_vec(stacked, a, b, epsabs=1e-13, epsrel=1e-11)
    k = val.size // 2
    return val[:k] + 1j * val[k:]


def congruence_transform(sys: LtiRealization, T: np.ndarray,
                         ceiling: float = DEFAULT_CONDITION_CEILING) -> LtiRealization:
    """State change ``zbar = T z``: ``(T A T^{-1}, T B, C T^{-1})``."""
    T = np.asarray(T, dtype=complex)
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > ceiling:
        raise SingularTransform(f"transform condition estimate {cond:.3e}")
    # X T^{-1} computed as solve(T^T, X^T)^T
    TA = T @ sys.A
    Abar = np.linalg.solve(T.T, TA.T).T
    Cbar = np.linalg.solve(T.T, sys.C.T).T
    return LtiRealization(Abar, T @ sys.B, Cbar)
