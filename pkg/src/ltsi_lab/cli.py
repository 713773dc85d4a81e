"""Batch command-line front end.

Exit codes: 0 when every certificate check passed, 1 when a property check
failed (outputs are still written), 2 for invalid input or configuration.
Errors go to stderr as a single ``ERROR {json}`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys as _sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, lti_core, plotting, realization, simulation
from ._parallel import resolve_threads
from .errors import InfeasibleStorage, LtsiError, NotReciprocal, UnknownModel
from .models import MODEL_NAMES, ModelBundle, resolve_model
from .spectra import FrequencyGrid, symbol_to_dict

log = logging.getLogger("ltsi_lab")

STORAGE_CHOICES = ("auto", "lossless", "relaxation", "known")
INPUT_PRESETS = ("pulse", "zero", "initial")
_FLOAT_DIGITS = 15


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str
    grid: FrequencyGrid | None
    storage: str
    out: Path
    tol: float
    bound: float
    threads: int
    length: float
    points: int
    dt: float
    t_final: float
    input: str


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ltsi-lab", description="Reciprocity and passivity certificates for LTSI families.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("analyze", "reciprocity, storage and boundedness certificates"),
                        ("realize", "passive self-dual realization"),
                        ("simulate", "spectral time-domain simulation with energy audit"),
                        ("report", "analyze, realize and simulate into one output directory")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--model", required=True, help=f"one of {', '.join(MODEL_NAMES)} or a JSON path")
        c.add_argument("--grid", default=None, help='frequency grid "min:step:max"')
        c.add_argument("--storage", choices=STORAGE_CHOICES, default="auto")
        c.add_argument("--out", default="out")
        c.add_argument("--tol", type=float, default=1e-9)
        c.add_argument("--bound", type=float, default=analysis.DEFAULT_BOUND)
        c.add_argument("--threads", type=int, default=None)
        c.add_argument("--length", type=float, default=50.0)
        c.add_argument("--points", type=int, default=512)
        c.add_argument("--dt", type=float, default=1e-3)
        c.add_argument("--t-final", type=float, default=5.0)
        c.add_argument("--input", choices=INPUT_PRESETS, default="pulse")
        c.add_argument("-v", "--verbose", action="store_true")
    return p


def _join_grid(argv: list[str]) -> list[str]:
    # grid specs such as "-10:0.05:10" start with a dash; bind them to the flag explicitly
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--grid" and i + 1 < len(argv):
            out.append(f"--grid={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def _config(ns) -> RunConfig:
    try:
        grid = FrequencyGrid.parse(ns.grid) if ns.grid else None
    except ValueError as exc:
        raise ConfigError(f"bad --grid: {exc}") from None
    if not ns.dt > 0 or not ns.t_final > 0:
        raise ConfigError("--dt and --t-final must be positive")
    if ns.points < 8 or ns.points & (ns.points - 1):
        raise ConfigError("--points must be a power of two >= 8")
    if not ns.length > 0 or not ns.tol > 0 or not ns.bound > 0:
        raise ConfigError("--length, --tol and --bound must be positive")
    return RunConfig(ns.command, ns.model, grid, ns.storage, Path(ns.out), ns.tol, ns.bound,
                     resolve_threads(ns.threads), ns.length, ns.points, ns.dt, ns.t_final, ns.input)


# -- serialization -------------------------------------------------------------

def _clean(obj):
    """JSON-ready copy with floats at fixed precision and NaN/inf as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{_FLOAT_DIGITS}g}") if math.isfinite(x) else None
    if isinstance(obj, complex):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def _plot(path: Path, series: dict, **kw) -> None:
    try:
        plotting.write_line_chart(path, series, **kw)
    except Exception as exc:  # plots never decide the exit code
        log.warning("plot %s failed: %s", path.name, exc)


# -- commands ------------------------------------------------------------------

def _strategy(cfg: RunConfig, bundle: ModelBundle):
    if cfg.storage == "lossless":
        return lti_core.Lossless()
    if cfg.storage == "relaxation":
        return lti_core.Relaxation()
    if cfg.storage == "known":
        if bundle.known_Q is None:
            raise ConfigError(f"model {bundle.name!r} has no known storage")
        return lti_core.Supplied(bundle.known_Q)
    return None  # auto


def _storage(cfg, bundle, sys, s_cert):
    """Storage certificate for the configured strategy; ``auto`` tries lossless then relaxation."""
    strategy = _strategy(cfg, bundle)
    candidates = [strategy] if strategy is not None else [lti_core.Lossless(), lti_core.Relaxation()]
    last = None
    for st in candidates:
        try:
            cert = analysis.weak_impedance_passivity(sys, st, tol=cfg.tol, s_cert=s_cert,
                                                     threads=cfg.threads, drops=s_cert.rank_drops)
            return cert, type(st).__name__.lower(), None
        except LtsiError as exc:
            last = exc
    return None, None, last


def _analyze(cfg: RunConfig, bundle: ModelBundle) -> tuple[dict, int, dict]:
    sys = bundle.sys
    grid = sys.grid
    report = {"model": bundle.name, "grid": grid.to_dict(), "storage_strategy": None}
    ctx = {}
    ok = True
    drops = analysis.minimal_frequency_set(sys, threads=cfg.threads)
    report["rank_drops"] = [d.omega for d in drops]
    report["rank_drop_detail"] = [{"omega": d.omega, "rank_W": d.rank_W, "rank_O": d.rank_O} for d in drops]
    try:
        s_cert = analysis.s_field(sys, threads=cfg.threads, drops=drops)
    except NotReciprocal as exc:
        report.update(reciprocal=False, error=str(exc))
        return report, 1, ctx
    ctx["s_cert"] = s_cert
    fam = analysis.family_reciprocity(sys, threads=cfg.threads)
    report["reciprocal"] = bool(fam.reciprocal)
    ok &= bool(fam.reciprocal)
    duality = analysis.self_duality_check(s_cert, cfg.bound)
    report["sup_S"] = s_cert.sup_S.to_dict()
    report["sup_S_inv"] = s_cert.sup_S_inv.to_dict()
    report["self_dual"] = duality.certified
    report["limit_extensions"] = [{"omega": e.omega, "gap": e.gap, "residual": e.residual,
                                   "value": None if e.value is None else _matrix_dict(e.value)}
                                  for e in s_cert.limit_extensions]

    q_cert, strategy_name, failure = _storage(cfg, bundle, sys, s_cert)
    if q_cert is None:
        report.update(weakly_passive=False, sup_Q=None, impedance_passive=False,
                      storage_error=str(failure))
        if isinstance(failure, InfeasibleStorage) and failure.omega is not None:
            report["storage_error_omega"] = failure.omega
        ok = False
    else:
        ctx["q_cert"] = q_cert
        report["storage_strategy"] = strategy_name
        report["weakly_passive"] = q_cert.weakly_passive
        report["sup_Q"] = q_cert.sup_Q.to_dict()
        report["impedance_passive"] = analysis.impedance_passivity(q_cert, cfg.bound).certified
        ok &= q_cert.weakly_passive

    gen = analysis.generator_diagnostic(sys, 1.0, threads=cfg.threads)
    report["generator"] = gen.to_dict()
    ctx["generator"] = gen

    S_norms = _norm_profile(s_cert.S_sym)
    Sinv_norms = _norm_profile(s_cert.S_inv_sym)
    Q_norms = _norm_profile(q_cert.Q_sym) if q_cert is not None else np.full(grid.count, np.nan)
    per = []
    drop_at = {d.index: d for d in drops}
    active = set(grid.active_indices.tolist())
    for k, w in enumerate(grid.samples):
        if k not in active and k not in drop_at:
            continue
        row = {"omega": float(w), "rank_drop": k in drop_at,
               "reciprocity_residual": s_cert.residual_reciprocity[k],
               "norm_S": S_norms[k], "norm_S_inv": Sinv_norms[k], "norm_Q": Q_norms[k]}
        if q_cert is not None:
            row.update(lmi_margin=q_cert.lmi_margin[k], output_residual=q_cert.output_residual[k],
                       positivity_margin=q_cert.positivity_margin[k])
        per.append(row)
    report["per_omega"] = per
    ctx["profiles"] = (grid.samples, S_norms, Sinv_norms, Q_norms, s_cert.residual_reciprocity)
    return report, 0 if ok else 1, ctx


def _matrix_dict(M):
    M = np.asarray(M)
    return {"re": M.real.tolist(), "im": M.imag.tolist()}


def _norm_profile(sym):
    vals = sym.values
    out = np.full(vals.shape[0], np.nan)
    finite = np.isfinite(vals).all(axis=(1, 2))
    if finite.any():
        out[finite] = np.linalg.svd(vals[finite], compute_uv=False)[:, 0]
    return out


def _analysis_plots(cfg, ctx):
    if "profiles" not in ctx:
        return
    w, S, Sinv, Q, res = ctx["profiles"]
    _plot(cfg.out / "plots" / "sup_norms.svg", {"||S||": (w, S), "||S^-1||": (w, Sinv), "||Q||": (w, Q)},
          title="Symbol norms", xlabel="omega", ylabel="spectral norm (log10)", logy=True)
    _plot(cfg.out / "plots" / "reciprocity_residual.svg", {"residual": (w, res)},
          title="Reciprocity residual", xlabel="omega", ylabel="log10 residual", logy=True)
    gen = ctx.get("generator")
    if gen is not None:
        _plot(cfg.out / "plots" / "generator.svg", {"||exp(A t)||": (gen.omegas, gen.norms)},
              title=f"Propagator norm, t = {gen.t:g}", xlabel="omega", ylabel="norm")


def _realize(cfg: RunConfig, bundle: ModelBundle, ctx: dict | None = None) -> tuple[dict, int]:
    if ctx is None or "q_cert" not in ctx or "s_cert" not in ctx:
        _, code, ctx = _analyze(cfg, bundle)
        if "q_cert" not in ctx:
            raise InfeasibleStorage("no storage certificate; cannot realize")
    sys = bundle.sys
    real = realization.canonical_transform(sys, ctx["s_cert"], ctx["q_cert"], tol=cfg.tol, threads=cfg.threads)
    ph = realization.ph_parts(real, tol=max(cfg.tol, 1e-9))
    maxres = real.max_residuals()
    limits = {"passivity": 1e-10, "output": 1e-10, "self_duality": 1e-9, "port_tail": 1e-10,
              "signature_output": 1e-9}
    # thresholds are absolute on unit-size members and grow with the largest ||A||
    a_scale = max(1.0, max(np.linalg.norm(sys.A_sym(w), 2) for w in real.grid.active_samples) / 100.0)
    checks = {k: bool(maxres[k] <= limits[k] * a_scale) for k in limits}
    gen_before = ctx.get("generator") or analysis.generator_diagnostic(sys, 1.0, threads=cfg.threads)
    gen_after = analysis.generator_diagnostic(real.as_ltsi(), 1.0, threads=cfg.threads)

    rng = np.random.default_rng(0)
    active = real.grid.active_samples
    transfer_gap = 0.0
    for _ in range(5):
        w = float(rng.choice(active))
        s = complex(rng.uniform(0.1, 3.0), rng.uniform(-3.0, 3.0))
        g0 = lti_core.transfer(sys.member(w), s)
        g1 = lti_core.transfer(real.as_ltsi().member(w), s)
        transfer_gap = max(transfer_gap, float(np.abs(g0 - g1).max() / max(1.0, np.abs(g0).max())))
    checks["transfer"] = transfer_gap <= 1e-8
    checks["contraction"] = gen_after.verdict == "contraction"

    per = []
    for k in real.grid.active_indices:
        per.append({"omega": float(real.grid.samples[k]), "CSinvQB": real.csqb[k],
                    **{name: v[k] for name, v in real.residuals.items()}})
    out = {
        "model": bundle.name,
        "storage_strategy": None,
        "D": np.diag(real.D).tolist(),
        "n1": real.n1, "n2": real.n2,
        "sup_CSQB": real.sup_CSQB,
        "max_residuals": maxres,
        "checks": checks,
        "transfer_max_relative_gap": transfer_gap,
        "port_hamiltonian": {"skew_residual": ph.skew_residual, "min_dissipation": ph.min_dissipation,
                             "port_tail": ph.port_tail},
        "generator_before": gen_before.to_dict(),
        "generator_after": gen_after.to_dict(),
        "compatibility_events": real.compatibility_events,
        "per_omega": per,
        "T": symbol_to_dict(real.T_sym),
        "Abar": symbol_to_dict(real.Abar_sym),
        "Bbar": symbol_to_dict(real.Bbar_sym),
    }
    ctx["realization"] = real
    w = real.grid.samples
    _plot(cfg.out / "plots" / "realization_residuals.svg",
          {k: (w, v) for k, v in real.residuals.items() if k != "signature_output"},
          title="Realization residuals", xlabel="omega", ylabel="log10 residual", logy=True)
    _plot(cfg.out / "plots" / "csqb.svg", {"|C S^-1 Q B|": (w, real.csqb)},
          title="C S^-1 Q B", xlabel="omega", ylabel="value")
    return out, 0 if all(checks.values()) else 1


def _input(cfg: RunConfig, sys):
    m, n = sys.m, sys.n
    if cfg.input == "pulse":
        def u(t, x):
            prof = np.exp(-x**2) if t < 1.0 else np.zeros_like(x)
            return np.tile(prof, (m, 1))
        return u, None
    if cfg.input == "zero":
        return None, None
    def z0(x):
        z = np.zeros((n, x.size))
        z[0] = np.exp(-x**2)
        return z
    return None, z0


def _internal_type(sys, sgrid, tol=1e-12):
    """``"lossless"``, ``"passive"`` or ``None`` for the state norm as storage on every bin."""
    lossless, passive = True, True
    for w in sgrid.omegas:
        mem = sys.member(w)
        H = mem.A + mem.A.conj().T
        scale = max(1.0, np.linalg.norm(mem.A, 2))
        if np.linalg.norm(mem.C.conj().T - mem.B, 2) > tol * scale:
            return None
        if np.linalg.norm(H, 2) > tol * scale:
            lossless = False
        if np.linalg.eigvalsh(H)[-1] > tol * scale:
            passive = False
    return "lossless" if lossless else "passive" if passive else None


def _simulate(cfg: RunConfig, bundle: ModelBundle) -> tuple[dict, int]:
    sys = bundle.sys
    sgrid = simulation.SpatialGrid(cfg.length, cfg.points)
    u, z0f = _input(cfg, sys)
    z0 = z0f(sgrid.x) if z0f is not None else None
    steps = int(round(cfg.t_final / cfg.dt))
    stride = max(1, steps // 50)
    trace = simulation.simulate(sys, u, sgrid, cfg.t_final, cfg.dt, z0=z0, stride=stride)
    kind = _internal_type(sys, sgrid)
    summary = {"model": bundle.name, "length": cfg.length, "points": cfg.points, "dt": cfg.dt,
               "t_final": cfg.t_final, "input": cfg.input, "internal_storage": kind,
               "final_energy": trace.energy[-1], "final_supply": trace.supply[-1],
               "imag_residual": trace.imag_residual, "boundary_ratio": trace.boundary_ratio,
               "flags": trace.flags,
               "parseval_gap": float(np.max(np.abs(trace.energy - trace.energy_bins))
                                     / max(1e-300, np.max(trace.energy)))}
    ok = True
    if kind is not None:
        v = simulation.energy_audit(trace, lossless=kind == "lossless")
        limit = 1e-5 if kind == "lossless" else 1e-9
        summary["energy_audit"] = {"mode": kind, "violation": v, "limit": limit, "passed": v <= limit}
        ok = v <= limit
    else:
        summary["energy_audit"] = None
    if trace.imag_residual > 1e-9:
        ok = False
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    simulation.write_trace_csv(trace, out / "trace.csv")
    simulation.write_field_snapshots(trace, out / "fields")
    _plot(out / "plots" / "energy.svg", {"E(t)": (trace.times, trace.energy),
                                         "supply(t)": (trace.times, trace.supply)},
          title="Energy and supply", xlabel="t", ylabel="value")
    _write_json(out / "simulation.json", summary)
    return summary, 0 if ok else 1


def _load(cfg: RunConfig) -> ModelBundle:
    return resolve_model(cfg.model, cfg.grid)


def run(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    try:
        argv = list(_sys.argv[1:] if argv is None else argv)
        ns = _build_parser().parse_args(_join_grid(argv))
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=_sys.stderr)
        cfg = _config(ns)
        bundle = _load(cfg)
        if cfg.storage == "known" and bundle.known_Q is None:
            raise ConfigError(f"model {bundle.name!r} has no known storage")
        if cfg.command in ("simulate", "report") and bundle.sys.m != bundle.sys.p:
            raise ConfigError("simulation needs m = p")
    except (ConfigError, UnknownModel, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        _error(exc)
        return 2
    try:
        code = 0
        if cfg.command in ("analyze", "realize", "report"):
            report, code, ctx = _analyze(cfg, bundle)
            if cfg.command != "realize":
                _write_json(cfg.out / "report.json", report)
                _analysis_plots(cfg, ctx)
            if cfg.command in ("realize", "report"):
                if "q_cert" not in ctx:
                    raise InfeasibleStorage(report.get("storage_error", "no storage certificate"))
                real, rcode = _realize(cfg, bundle, ctx)
                real["storage_strategy"] = report["storage_strategy"]
                _write_json(cfg.out / "realization.json", real)
                code = max(code, rcode) if cfg.command == "report" else rcode
        if cfg.command in ("simulate", "report"):
            _, scode = _simulate(cfg, bundle)
            code = max(code, scode)
        return code
    except LtsiError as exc:
        _error(exc)
        return 1


def _error(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    omega = getattr(exc, "omega", None)
    if omega is not None:
        payload["omega"] = float(omega)
    print("ERROR " + json.dumps(payload, sort_keys=True), file=_sys.stderr)


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
