"""Matrix-valued functions of a scalar spatial frequency.

Three backings are supported:

* :class:`ClosedFormSymbol` -- every entry is a polynomial in ``omega`` with
  complex coefficients (monomial basis, lowest degree first).
* :class:`SampledSymbol` -- one matrix per sample of a :class:`FrequencyGrid`.
  Evaluation is only defined at grid samples; nothing is interpolated.
* :class:`CompositeSymbol` -- lazy pointwise product / sum / inverse /
  adjoint of other symbols.

All symbols are immutable; evaluation is a pure function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EvalOffGrid, SingularAtFrequency

DEFAULT_CONDITION_CEILING = 1e12


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``omega_k = omega_min + k * step``, ``k = 0..count-1``.

    ``excluded`` lists sample indices that are skipped by every sweep
    (rank-drop frequencies, singular samples, ...).
    """

    omega_min: float
    step: float
    count: int
    excluded: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"grid needs at least 2 samples, got {self.count}")
        object.__setattr__(self, "omega_min", float(self.omega_min))
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "count", int(self.count))
        excluded = tuple(sorted({int(k) for k in self.excluded}))
        if excluded and (excluded[0] < 0 or excluded[-1] >= self.count):
            raise ValueError("excluded index out of range")
        object.__setattr__(self, "excluded", excluded)

    @classmethod
    def from_range(cls, omega_min, step, omega_max, excluded=()):
        if not step > 0:
            raise ValueError(f"grid step must be positive, got {step}")
        count = int(round((omega_max - omega_min) / step)) + 1
        return cls(omega_min, step, count, tuple(excluded))

    @classmethod
    def parse(cls, spec: str) -> "FrequencyGrid":
        """Parse ``"min:step:max"``."""
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid spec must be 'min:step:max', got {spec!r}")
        lo, step, hi = (float(p) for p in parts)
        if hi <= lo:
            raise ValueError(f"grid max must exceed min in {spec!r}")
        return cls.from_range(lo, step, hi)

    @classmethod
    def default(cls) -> "FrequencyGrid":
        """[-10, 10] at step 0.05 with the sample at the origin punctured."""
        return cls.from_range(-10.0, 0.05, 10.0).punctured_at_zero()

    @property
    def samples(self) -> np.ndarray:
        return self.omega_min + self.step * np.arange(self.count)

    @property
    def omega_max(self) -> float:
        return self.omega_min + self.step * (self.count - 1)

    @property
    def active_indices(self) -> np.ndarray:
        mask = np.ones(self.count, dtype=bool)
        mask[list(self.excluded)] = False
        return np.flatnonzero(mask)

    @property
    def active_samples(self) -> np.ndarray:
        return self.samples[self.active_indices]

    def index_of(self, omega: float) -> int | None:
        """Index of the sample equal to ``omega`` (to rounding), else None."""
        k = int(round((omega - self.omega_min) / self.step))
        if 0 <= k < self.count and abs(self.samples[k] - omega) <= 1e-9 * self.step:
            return k
        return None

    def exclude(self, indices: Iterable[int]) -> "FrequencyGrid":
        return FrequencyGrid(self.omega_min, self.step, self.count, self.excluded + tuple(indices))

    def unpunctured(self) -> "FrequencyGrid":
        return FrequencyGrid(self.omega_min, self.step, self.count)

    def punctured_at_zero(self, atol: float = 1e-8) -> "FrequencyGrid":
        k = int(np.argmin(np.abs(self.samples)))
        if abs(self.samples[k]) < atol:
            return self.exclude([k])
        return self

    def refined(self, factor: int) -> "FrequencyGrid":
        """Grid with ``factor`` times the resolution containing every current sample."""
        factor = int(factor)
        excluded = tuple(k * factor for k in self.excluded)
        return FrequencyGrid(self.omega_min, self.step / factor, (self.count - 1) * factor + 1, excluded)

    def to_dict(self) -> dict:
        return {"omega_min": self.omega_min, "step": self.step, "count": self.count,
                "excluded": list(self.excluded)}

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyGrid":
        return cls(d["omega_min"], d["step"], d["count"], tuple(d.get("excluded", ())))


class MatrixSymbol:
    """Base class: a ``rows x cols`` complex matrix for every frequency."""

    rows: int
    cols: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def __call__(self, omega: float) -> np.ndarray:
        return self.evaluate(omega)

    def evaluate(self, omega: float) -> np.ndarray:
        raise NotImplementedError

    def evaluate_many(self, omegas: Sequence[float]) -> np.ndarray:
        """Stack of evaluations, shape ``(len(omegas), rows, cols)``."""
        if len(omegas) == 0:
            return np.zeros((0, self.rows, self.cols), dtype=complex)
        return np.stack([self.evaluate(w) for w in omegas])

    def sample(self, grid: FrequencyGrid) -> "SampledSymbol":
        """Sample on every active grid sample; excluded samples hold NaN."""
        values = np.full((grid.count, self.rows, self.cols), np.nan, dtype=complex)
        idx = grid.active_indices
        values[idx] = self.evaluate_many(grid.samples[idx])
        return SampledSymbol(grid, values)

    # pointwise algebra, evaluated lazily
    def __matmul__(self, other: "MatrixSymbol") -> "CompositeSymbol":
        return CompositeSymbol("mul", (self, other))

    def __add__(self, other: "MatrixSymbol") -> "CompositeSymbol":
        return CompositeSymbol("add", (self, other))

    def __sub__(self, other: "MatrixSymbol") -> "CompositeSymbol":
        return CompositeSymbol("sub", (self, other))

    @property
    def H(self) -> "MatrixSymbol":
        return adjoint(self)


class ClosedFormSymbol(MatrixSymbol):
    """Polynomial entries: ``M(omega) = sum_k coeffs[:, :, k] * omega**k``."""

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim == 2:
            coeffs = coeffs[:, :, None]
        if coeffs.ndim != 3 or coeffs.shape[2] < 1:
            raise ValueError("coefficients must have shape (rows, cols, degree+1)")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.rows, self.cols = coeffs.shape[:2]

    @classmethod
    def from_entries(cls, entries) -> "ClosedFormSymbol":
        """Build from nested lists where each entry is a scalar or a coefficient list.

        ``[[0, [0, 1j]], [[0, 0, -1], 1]]`` is ``[[0, j*omega], [-omega**2, 1]]``.
        """
        rows = len(entries)
        cols = len(entries[0])
        lists = [[np.atleast_1d(np.asarray(e, dtype=complex)) for e in row] for row in entries]
        if any(len(row) != cols for row in lists):
            raise ValueError("ragged entry list")
        deg = max(len(c) for row in lists for c in row)
        coeffs = np.zeros((rows, cols, deg), dtype=complex)
        for i, row in enumerate(lists):
            for j, c in enumerate(row):
                coeffs[i, j, : len(c)] = c
        return cls(coeffs)

    @classmethod
    def constant(cls, matrix) -> "ClosedFormSymbol":
        return cls(np.asarray(matrix, dtype=complex)[:, :, None])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "ClosedFormSymbol":
        return cls(np.zeros((rows, cols, 1), dtype=complex))

    @classmethod
    def identity(cls, n: int) -> "ClosedFormSymbol":
        return cls.constant(np.eye(n))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[2] - 1

    def evaluate(self, omega: float) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=complex)
        for k in range(self.coeffs.shape[2] - 1, -1, -1):
            out = out * omega + self.coeffs[:, :, k]
        return out

    def evaluate_many(self, omegas: Sequence[float]) -> np.ndarray:
        w = np.asarray(omegas, dtype=float)
        out = np.zeros((w.size, self.rows, self.cols), dtype=complex)
        for k in range(self.coeffs.shape[2] - 1, -1, -1):
            out = out * w[:, None, None] + self.coeffs[None, :, :, k]
        return out

    def to_dict(self) -> dict:
        entries = [[{"coeffs": [[c.real, c.imag] for c in self.coeffs[i, j]]}
                    for j in range(self.cols)] for i in range(self.rows)]
        return {"rows": self.rows, "cols": self.cols, "entries": entries}


class SampledSymbol(MatrixSymbol):
    """One matrix per grid sample; evaluation off the grid raises :class:`EvalOffGrid`."""

    def __init__(self, grid: FrequencyGrid, values):
        values = np.array(values, dtype=complex)
        if values.ndim != 3 or values.shape[0] != grid.count:
            raise ValueError(f"values must have shape ({grid.count}, rows, cols)")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.rows, self.cols = values.shape[1:]

    def evaluate(self, omega: float) -> np.ndarray:
        k = self.grid.index_of(omega)
        if k is None:
            raise EvalOffGrid(f"omega={omega!r} is not a sample of the grid")
        return self.values[k].copy()

    def at_index(self, k: int) -> np.ndarray:
        return self.values[k]

    def sample(self, grid: FrequencyGrid) -> "SampledSymbol":
        if grid == self.grid:
            return self
        return super().sample(grid)

    def to_dict(self) -> dict:
        def enc(z):
            if not np.isfinite(z):
                return None
            return [z.real, z.imag]

        values = [[[enc(v[i, j]) for j in range(self.cols)] for i in range(self.rows)]
                  for v in self.values]
        return {"rows": self.rows, "cols": self.cols, "grid": self.grid.to_dict(), "values": values}


class CompositeSymbol(MatrixSymbol):
    _OPS = {"mul", "add", "sub", "inv", "adj"}

    def __init__(self, op: str, operands: tuple[MatrixSymbol, ...]):
        if op not in self._OPS:
            raise ValueError(f"unknown op {op!r}")
        self.op = op
        self.operands = operands
        if op == "mul":
            a, b = operands
            if a.cols != b.rows:
                raise ValueError(f"shape mismatch {a.shape} @ {b.shape}")
            self.rows, self.cols = a.rows, b.cols
        elif op in ("add", "sub"):
            a, b = operands
            if a.shape != b.shape:
                raise ValueError(f"shape mismatch {a.shape} + {b.shape}")
            self.rows, self.cols = a.shape
        elif op == "inv":
            (a,) = operands
            if a.rows != a.cols:
                raise ValueError("inverse of a non-square symbol")
            self.rows, self.cols = a.shape
        else:
            (a,) = operands
            self.rows, self.cols = a.cols, a.rows

    def evaluate(self, omega: float) -> np.ndarray:
        vals = [s.evaluate(omega) for s in self.operands]
        if self.op == "mul":
            return vals[0] @ vals[1]
        if self.op == "add":
            return vals[0] + vals[1]
        if self.op == "sub":
            return vals[0] - vals[1]
        if self.op == "adj":
            return vals[0].conj().T
        return invert(vals[0], omega)


def eval_symbol(sym: MatrixSymbol, omega: float) -> np.ndarray:
    return sym.evaluate(omega)


def invert(M: np.ndarray, omega: float = float("nan"), ceiling: float = DEFAULT_CONDITION_CEILING) -> np.ndarray:
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > ceiling:
        raise SingularAtFrequency(omega, cond)
    return np.linalg.solve(M, np.eye(M.shape[0], dtype=complex))


def adjoint(sym: MatrixSymbol) -> MatrixSymbol:
    """Pointwise conjugate transpose.  ClosedForm stays ClosedForm (omega is real)."""
    if isinstance(sym, ClosedFormSymbol):
        return ClosedFormSymbol(np.conj(sym.coeffs).transpose(1, 0, 2))
    if isinstance(sym, SampledSymbol):
        return SampledSymbol(sym.grid, np.conj(sym.values).transpose(0, 2, 1))
    if isinstance(sym, CompositeSymbol) and sym.op == "adj":
        return sym.operands[0]
    return CompositeSymbol("adj", (sym,))


@dataclass(frozen=True)
class InverseResult:
    symbol: SampledSymbol
    auto_excluded: list[tuple[float, float]] = field(default_factory=list)  # (omega, condition)


def pointwise_inverse(sym: MatrixSymbol, grid: FrequencyGrid, ceiling: float = DEFAULT_CONDITION_CEILING,
                      strict: bool = False) -> InverseResult:
    """Invert ``sym`` at every active sample of ``grid``.

    Samples whose condition estimate exceeds ``ceiling`` are excluded from the
    returned symbol's grid and listed in ``auto_excluded``; with ``strict=True``
    the first such sample raises :class:`SingularAtFrequency` instead.
    """
    if sym.rows != sym.cols:
        raise ValueError("pointwise inverse needs a square symbol")
    sampled = sym.sample(grid)
    values = np.full_like(sampled.values, np.nan)
    dropped = []
    n = sym.rows
    for k in grid.active_indices:
        M = sampled.values[k]
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > ceiling:
            if strict:
                raise SingularAtFrequency(grid.samples[k], cond)
            dropped.append((int(k), float(grid.samples[k]), float(cond)))
            continue
        values[k] = np.linalg.solve(M, np.eye(n, dtype=complex))
    out_grid = grid.exclude(k for k, _, _ in dropped)
    return InverseResult(SampledSymbol(out_grid, values), [(w, c) for _, w, c in dropped])


def growth_verdict(omegas, values, flat_rtol: float = 1e-9, growth_rtol: float = 1e-3) -> str:
    """Classify a norm profile as ``bounded``, ``suspected-unbounded`` or ``inconclusive``.

    A profile is suspected unbounded when its maximum sits in the outer half of
    the frequency range (``|omega| > max|omega| / 2``) and exceeds the inner-half
    maximum by more than ``growth_rtol``.  No finite grid proves either way.
    """
    omegas = np.abs(np.asarray(omegas, dtype=float))
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return "inconclusive"
    vmax = values.max()
    if vmax <= (1 + flat_rtol) * values.min() + 1e-300:
        return "bounded"
    inner = omegas <= 0.5 * omegas.max()
    if not inner.any() or inner.all():
        return "inconclusive"
    inner_max = values[inner].max()
    if vmax <= (1 + flat_rtol) * inner_max:
        return "bounded"
    if vmax > (1 + growth_rtol) * inner_max:
        return "suspected-unbounded"
    return "inconclusive"


@dataclass(frozen=True)
class SupNormReport:
    value: float
    argmax: float
    left_endpoint: float
    right_endpoint: float
    verdict: str  # bounded | suspected-unbounded | inconclusive

    @property
    def suspected_unbounded(self) -> bool:
        return self.verdict == "suspected-unbounded"

    def to_dict(self) -> dict:
        return {"value": self.value, "argmax": self.argmax, "left_endpoint": self.left_endpoint,
                "right_endpoint": self.right_endpoint, "verdict": self.verdict}


def spectral_norms(values: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of matrices."""
    if values.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.svd(values, compute_uv=False)[:, 0]


def sup_norm(sym: MatrixSymbol, grid: FrequencyGrid) -> SupNormReport:
    """Largest spectral norm over the active samples and where it is attained.

    This is a grid estimate; boundedness of the true supremum is only
    suggested through :func:`growth_verdict`.
    """
    if isinstance(sym, SampledSymbol) and sym.grid.unpunctured() == grid.unpunctured():
        idx = np.intersect1d(grid.active_indices, sym.grid.active_indices)
        omegas = grid.samples[idx]
        vals = sym.values[idx]
    else:
        omegas = grid.active_samples
        vals = sym.evaluate_many(omegas)
    if omegas.size == 0:
        raise ValueError("grid has no active samples")
    norms = spectral_norms(vals)
    k = int(np.argmax(norms))
    return SupNormReport(float(norms[k]), float(omegas[k]), float(norms[0]), float(norms[-1]),
                         growth_verdict(omegas, norms))


def continuity_report(sym: SampledSymbol) -> float:
    """Largest spectral-norm jump between consecutive active samples."""
    idx = sym.grid.active_indices
    if idx.size < 2:
        raise ValueError("continuity needs at least two active samples")
    vals = sym.values[idx]
    return float(spectral_norms(np.diff(vals, axis=0)).max())


def symbol_to_dict(sym: MatrixSymbol, grid: FrequencyGrid | None = None) -> dict:
    if isinstance(sym, (ClosedFormSymbol, SampledSymbol)):
        return sym.to_dict()
    if grid is None:
        raise TypeError("composite symbols serialize as samples; pass a grid")
    return sym.sample(grid).to_dict()


def symbol_from_dict(d: dict) -> MatrixSymbol:
    rows, cols = int(d["rows"]), int(d["cols"])
    if "entries" in d:
        entries = d["entries"]
        deg = max(len(e["coeffs"]) for row in entries for e in row)
        coeffs = np.zeros((rows, cols, max(deg, 1)), dtype=complex)
        for i, row in enumerate(entries):
            for j, e in enumerate(row):
                for k, (re, im) in enumerate(e["coeffs"]):
                    coeffs[i, j, k] = complex(re, im)
        return ClosedFormSymbol(coeffs)
    if "values" in d:
        grid = FrequencyGrid.from_dict(d["grid"])
        vals = np.full((grid.count, rows, cols), np.nan, dtype=complex)
        for k, mat in enumerate(d["values"]):
            for i, row in enumerate(mat):
                for j, v in enumerate(row):
                    if v is not None:
                        vals[k, i, j] = complex(v[0], v[1])
        return SampledSymbol(grid, vals)
    raise ValueError("symbol JSON needs 'entries' (closed form) or 'values' (sampled)")


def dumps_symbol(sym: MatrixSymbol, grid: FrequencyGrid | None = None) -> str:
    return json.dumps(symbol_to_dict(sym, grid))


def loads_symbol(text: str) -> MatrixSymbol:
    return symbol_from_dict(json.loads(text))
