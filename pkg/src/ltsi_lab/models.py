"""Built-in model families with closed-form ground truth.

Symbols use the sign convention ``d/dx -> -j*omega`` throughout, under which
the Timoshenko symbols, the energy symbol and the physical state transform
are mutually consistent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .analysis import LtsiRealization
from .errors import UnknownModel
from .spectra import ClosedFormSymbol, FrequencyGrid, MatrixSymbol, symbol_from_dict

J = 1j


@dataclass(frozen=True)
class ModelBundle:
    name: str
    sys: LtsiRealization
    known_S: MatrixSymbol | None = None
    known_Q: MatrixSymbol | None = None
    known_T: MatrixSymbol | None = None
    known_transfer: Callable[[complex, float], complex] | None = None
    notes: str = ""


def _const(M):
    return ClosedFormSymbol.constant(np.asarray(M, dtype=complex))


def _timoshenko_naive(grid):
    # state (q, phi, dq/dt, dphi/dt); load u drives q
    A = ClosedFormSymbol.from_entries([
        [0, 0, 1, 0],
        [0, 0, 0, 1],
        [[0, 0, -1], [0, J], 0, 0],
        [[0, -J], [-1, 0, -1], 0, 0],
    ])
    B = _const([[0], [0], [1], [0]])
    S = ClosedFormSymbol.from_entries([
        [[0, 0, -1], [0, J], 0, 0],
        [[0, -J], [-1, 0, -1], 0, 0],
        [0, 0, 1, 0],
        [0, 0, 0, 1],
    ])
    Q = ClosedFormSymbol.from_entries([
        [[0, 0, 1], [0, -J], 0, 0],
        [[0, J], [1, 0, 1], 0, 0],
        [0, 0, 1, 0],
        [0, 0, 0, 1],
    ])
    # velocity-first physical state: permutation of (q_x - phi, phi_x, q_t, phi_t) applied to L^H
    T = ClosedFormSymbol.from_entries([
        [0, 0, 1, 0],
        [0, 0, 0, 1],
        [[0, -J], -1, 0, 0],
        [0, [0, -J], 0, 0],
    ])

    def transfer(s, w):
        return (s**3 + (w**2 + 1) * s) / (s**4 + (2 * w**2 + 1) * s**2 + w**4)

    return ModelBundle(
        "timoshenko-naive", LtsiRealization(A, B, B.H, grid), S, Q, T, transfer,
        "Timoshenko beam, all constants 1, displacement/velocity state; ill-posed, unbounded energy symbol.")


def _timoshenko_physical(grid):
    # state (dq/dt, dphi/dt, dq/dx - phi, dphi/dx)
    A = ClosedFormSymbol.from_entries([
        [0, 0, [0, -J], 0],
        [0, 0, 1, [0, -J]],
        [[0, -J], -1, 0, 0],
        [0, [0, -J], 0, 0],
    ])
    B = _const([[1], [0], [0], [0]])
    naive = _timoshenko_naive(grid)
    return ModelBundle(
        "timoshenko-physical", LtsiRealization(A, B, B.H, grid),
        known_S=_const(np.diag([1, 1, -1, -1])), known_Q=ClosedFormSymbol.identity(4),
        known_T=ClosedFormSymbol.identity(4), known_transfer=naive.known_transfer,
        notes="Timoshenko beam in velocity / shear-strain / bending-strain coordinates; "
              "internally lossless (A + A^H = 0).")


def _heat(grid):
    A = ClosedFormSymbol.from_entries([[[0, 0, -1]]])
    one = ClosedFormSymbol.identity(1)
    return ModelBundle("heat", LtsiRealization(A, one, one, grid), one, one, one,
                       lambda s, w: 1 / (s + w**2), "Heat equation with distributed source; relaxation type.")


def _reaction_diffusion(grid):
    A = ClosedFormSymbol.from_entries([[[-1, 0, -1]]])
    one = ClosedFormSymbol.identity(1)
    return ModelBundle("reaction-diffusion", LtsiRealization(A, one, one, grid), one, one, one,
                       lambda s, w: 1 / (s + 1 + w**2),
                       "Reaction-diffusion z_t = z_xx - z + u; relaxation type, strictly stable.")


def _wave(grid):
    A = ClosedFormSymbol.from_entries([[0, [0, J]], [[0, J], 0]])
    B = _const([[1], [0]])
    return ModelBundle("wave", LtsiRealization(A, B, B.H, grid), _const(np.diag([1, -1])),
                       ClosedFormSymbol.identity(2), ClosedFormSymbol.identity(2),
                       lambda s, w: s / (s**2 + w**2),
                       "First-order wave system (velocity, strain); lossless, rank drop at omega = 0.")


_MODELS = {
    "timoshenko-naive": _timoshenko_naive,
    "timoshenko-physical": _timoshenko_physical,
    "heat": _heat,
    "reaction-diffusion": _reaction_diffusion,
    "wave": _wave,
}

MODEL_NAMES = tuple(_MODELS)


def model(name: str, grid: FrequencyGrid | None = None) -> ModelBundle:
    """Built-in bundle by name; ``grid`` defaults to :meth:`FrequencyGrid.default`."""
    try:
        factory = _MODELS[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(MODEL_NAMES)}") from None
    return factory(grid if grid is not None else FrequencyGrid.default())


def load_model(path: str | Path, grid: FrequencyGrid | None = None) -> ModelBundle:
    """Custom model from JSON ``{"name", "A", "B", "C", ["grid"], ["S"], ["Q"]}`` (symbol format)."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise UnknownModel(f"model file {str(path)!r} not found") from None
    if grid is None:
        grid = FrequencyGrid.from_dict(d["grid"]) if "grid" in d else FrequencyGrid.default()
    sys = LtsiRealization(symbol_from_dict(d["A"]), symbol_from_dict(d["B"]), symbol_from_dict(d["C"]), grid)
    return ModelBundle(d.get("name", path.stem), sys,
                       known_S=symbol_from_dict(d["S"]) if "S" in d else None,
                       known_Q=symbol_from_dict(d["Q"]) if "Q" in d else None,
                       notes=d.get("notes", ""))


def resolve_model(name_or_path: str, grid: FrequencyGrid | None = None) -> ModelBundle:
    if name_or_path in _MODELS:
        return model(name_or_path, grid)
    if name_or_path.endswith(".json"):
        return load_model(name_or_path, grid)
    raise UnknownModel(f"unknown model {name_or_path!r}; known: {', '.join(MODEL_NAMES)}")
