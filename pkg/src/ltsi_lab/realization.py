"""Passive, self-dual realization of a reciprocal, weakly passive family.

Per sample, with ``Q = L L^H`` (Cholesky) and ``L^{-1} S L^{-H} = U D U^H``,
the state change ``T = U^H L^H`` gives a member with ``Abar + Abar^H <= 0``,
``Cbar^H = Bbar`` and ``Abar^H D = D Abar`` for the constant signature
``D = diag(I_n1, -I_n2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import lti_core
from ._parallel import parallel_map
from .analysis import LtsiRealization, ReciprocityCertificate, StorageCertificate
from .errors import NotCompatible, NotPositiveDefinite, PartitionViolation, SignatureNotConstant
from .spectra import FrequencyGrid, SampledSymbol

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignatureFactor:
    L: np.ndarray
    U: np.ndarray
    D: np.ndarray  # diagonal entries, +1 first
    rounding_error: float  # max |eigenvalue - nearest(+1, -1)|


def _phase_fix(U):
    U = U.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        U[:, j] *= np.exp(-1j * np.angle(U[i, j]))
    return U


def signature_factorize(S, Q, tol: float = 1e-8) -> SignatureFactor:
    """Cholesky ``Q = L L^H`` and Hermitian eigendecomposition of ``L^{-1} S L^{-H}``.

    Eigenvalues are sorted descending (+1 block first) and rounded to ``+-1``.
    ``NotCompatible`` when they are farther than ``tol`` from ``+-1``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=complex))
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    try:
        L = np.linalg.cholesky(0.5 * (Q + Q.conj().T))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("storage matrix is not positive definite") from None
    X = scipy.linalg.solve_triangular(L, S, lower=True)
    M = scipy.linalg.solve_triangular(L, X.conj().T, lower=True)  # L^{-1} S L^{-H}, S Hermitian
    M = 0.5 * (M + M.conj().T)
    lam, V = np.linalg.eigh(M)
    order = np.argsort(-lam, kind="stable")
    lam, V = lam[order], V[:, order]
    D = np.where(lam >= 0, 1.0, -1.0)
    err = float(np.max(np.abs(lam - D)))
    if err > tol:
        raise NotCompatible(f"eigenvalues of L^-1 S L^-H deviate from +-1 by {err:.3e}")
    return SignatureFactor(L, _phase_fix(V), D, err)


def _polar_unitary(M):
    W, _, Vh = np.linalg.svd(M)
    return W @ Vh


@dataclass
class PassiveReciprocalRealization:
    Abar_sym: SampledSymbol
    Bbar_sym: SampledSymbol
    Cbar_sym: SampledSymbol
    T_sym: SampledSymbol
    Tinv_sym: SampledSymbol
    D: np.ndarray
    n1: int
    n2: int
    residuals: dict  # name -> per grid index array
    csqb: np.ndarray  # ||C S^{-1} Q B|| per grid index
    sup_CSQB: float
    compatibility_events: list = field(default_factory=list)
    alignment_log: list = field(default_factory=list)

    @property
    def grid(self) -> FrequencyGrid:
        return self.Abar_sym.grid

    def as_ltsi(self) -> LtsiRealization:
        return LtsiRealization(self.Abar_sym, self.Bbar_sym, self.Cbar_sym, self.grid)

    def max_residuals(self) -> dict:
        return {k: float(np.nanmax(v)) for k, v in self.residuals.items()}


def _realization_residuals(Abar, Bbar, Cbar, D, n1):
    return {
        "passivity": float(np.linalg.eigvalsh(Abar + Abar.conj().T)[-1]),
        "output": float(np.linalg.norm(Cbar.conj().T - Bbar, 2)),
        "self_duality": float(np.linalg.norm(Abar.conj().T @ D - D @ Abar, 2)),
        "signature_output": float(np.linalg.norm(Cbar.conj().T - D @ Bbar, 2)),
        "port_tail": float(np.linalg.norm(Bbar[n1:], 2)) if Bbar[n1:].size else 0.0,
    }


def canonical_transform(sys: LtsiRealization, s_cert: ReciprocityCertificate, q_cert: StorageCertificate,
                        tol: float = 1e-9, threads: int = 1) -> PassiveReciprocalRealization:
    """Transform every usable sample into internally passive, self-dual coordinates.

    Usable samples are active, not rank drops, and carry both ``S`` and ``Q``.
    A storage that is not compatible with ``S`` is replaced by
    :func:`lti_core.compatible_storage` (recorded in ``compatibility_events``).
    Within each signature block, eigenbases are rotated sample-to-sample by the
    polar factor of their overlap so ``T`` varies continuously over the grid.
    """
    grid = sys.grid
    drop_idx = {d.index for d in s_cert.rank_drops}
    s_ok = set(s_cert.S_sym.grid.active_indices.tolist())
    q_ok = set(q_cert.Q_sym.grid.active_indices.tolist())
    work = [int(k) for k in grid.active_indices if k not in drop_idx and k in s_ok and k in q_ok]
    if not work:
        raise ValueError("no usable samples for the transform")
    omegas = grid.samples

    def factor(k):
        S = s_cert.S_sym.at_index(k)
        Q = q_cert.Q_sym.at_index(k)
        event = None
        compat = np.linalg.norm(Q - S @ np.linalg.solve(Q, S), 2) / np.linalg.norm(Q, 2)
        if compat > tol:
            Q = lti_core.compatible_storage(S, Q, sys.member(omegas[k])).Q
            event = {"omega": float(omegas[k]), "compatibility_residual_before": float(compat)}
        return S, Q, signature_factorize(S, Q), event

    factors = parallel_map(factor, work, threads)

    D = factors[0][2].D
    for k, (_, _, f, _) in zip(work, factors):
        if not np.array_equal(f.D, D):
            raise SignatureNotConstant(
                f"signature changes at omega={omegas[k]:g}: {f.D.tolist()} vs {D.tolist()}")
    n1 = int(np.sum(D > 0))
    n = sys.n
    blocks = [slice(0, n1), slice(n1, n)]
    Dm = np.diag(D).astype(complex)

    shape_n = (grid.count, n, n)
    vals = {name: np.full(shape, np.nan, dtype=complex) for name, shape in
            (("A", shape_n), ("B", (grid.count, n, sys.m)), ("C", (grid.count, sys.p, n)),
             ("T", shape_n), ("Tinv", shape_n))}
    res_names = ("passivity", "output", "self_duality", "signature_output", "port_tail")
    residuals = {name: np.full(grid.count, np.nan) for name in res_names}
    csqb = np.full(grid.count, np.nan)
    events, alignment = [], []

    prev_U = None
    for k, (S, Q, f, event) in zip(work, factors):
        if event:
            events.append(event)
        U = f.U
        if prev_U is not None:
            U = U.copy()
            before = float(np.linalg.norm(U - prev_U))
            for b in blocks:
                if b.stop > b.start:
                    U[:, b] = U[:, b] @ _polar_unitary(U[:, b].conj().T @ prev_U[:, b])
            alignment.append({"omega": float(omegas[k]), "jump_before": before,
                              "jump_after": float(np.linalg.norm(U - prev_U))})
        prev_U = U
        T = U.conj().T @ f.L.conj().T
        Tinv = scipy.linalg.solve_triangular(f.L.conj().T, U, lower=False)
        member = sys.member(omegas[k])
        Abar = T @ member.A @ Tinv
        Bbar = T @ member.B
        Cbar = member.C @ Tinv
        vals["A"][k], vals["B"][k], vals["C"][k], vals["T"][k], vals["Tinv"][k] = Abar, Bbar, Cbar, T, Tinv
        for name, v in _realization_residuals(Abar, Bbar, Cbar, Dm, n1).items():
            residuals[name][k] = v
        csqb[k] = np.linalg.norm(member.C @ np.linalg.solve(S, Q @ member.B), 2)

    out_grid = FrequencyGrid(grid.omega_min, grid.step, grid.count,
                             tuple(k for k in range(grid.count) if k not in set(work)))
    sym = {name: SampledSymbol(out_grid, v) for name, v in vals.items()}
    return PassiveReciprocalRealization(
        sym["A"], sym["B"], sym["C"], sym["T"], sym["Tinv"], Dm.real, n1, n - n1, residuals, csqb,
        float(np.nanmax(csqb)), events, alignment)


@dataclass
class PortHamiltonianParts:
    J_sym: SampledSymbol
    R_sym: SampledSymbol
    G_sym: SampledSymbol
    skew_residual: float  # max ||J + J^H||
    min_dissipation: float  # min lambda_min(R)
    port_tail: float  # max norm of the last n2 rows of G


def ph_parts(real: PassiveReciprocalRealization, tol: float = 1e-9) -> PortHamiltonianParts:
    """Split ``Abar = J - R`` along the signature partition; ``G = Bbar``."""
    grid = real.grid
    n1 = real.n1
    n = real.n1 + real.n2
    Jv = np.full((grid.count, n, n), np.nan, dtype=complex)
    Rv = np.full_like(Jv, np.nan)
    skew, diss, tail = 0.0, np.inf, 0.0
    for k in grid.active_indices:
        A = real.Abar_sym.at_index(k)
        scale = max(1.0, np.linalg.norm(A, 2))
        for b in (slice(0, n1), slice(n1, n)):
            blk = A[b, b]
            if blk.size and np.linalg.norm(blk - blk.conj().T, 2) > tol * scale:
                raise PartitionViolation(f"diagonal block not self-adjoint at omega={grid.samples[k]:g}")
        Jk = np.zeros((n, n), dtype=complex)
        Jk[:n1, n1:] = A[:n1, n1:]
        Jk[n1:, :n1] = -A[:n1, n1:].conj().T
        Rk = -0.5 * (A + A.conj().T)
        Rk[:n1, n1:] = 0
        Rk[n1:, :n1] = 0
        Jv[k], Rv[k] = Jk, Rk
        skew = max(skew, float(np.linalg.norm(Jk + Jk.conj().T, 2)))
        diss = min(diss, float(np.linalg.eigvalsh(Rk)[0]))
        G = real.Bbar_sym.at_index(k)
        if G[n1:].size:
            tail = max(tail, float(np.linalg.norm(G[n1:], 2)))
    return PortHamiltonianParts(SampledSymbol(grid, Jv), SampledSymbol(grid, Rv), real.Bbar_sym,
                                skew, diss, tail)
