"""Command line: ``solve``, ``verify`` and ``report``.

Configuration files are INI-style (``key = value`` inside sections); a key
may be overridden with ``--set key=value`` or ``--set section.key=value``.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 acceptance-check failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import forms, hopu, linsolve, output, splitting, stats
from . import mesh as meshmod
from .fespace import SpaceSet, l2_project

log = logging.getLogger("hopuflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3
THREADS_ENV = "HOPUFLOW_NUM_THREADS"
CASES = ("tgv2d", "tgv3d", "kovasznay", "channel", "box")
FLUXES = ("upwind", "central", "hopu", "adaptive")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    case: str = "tgv2d"
    dim: int = 2
    cells: tuple = (8, 8)
    extent: tuple | None = None
    k: int = 3
    dt: float = 1e-3
    T_end: float = 0.01
    nu: float = 0.01
    flux: str = "upwind"
    hopu_order: int = 0
    thresholds: tuple = (0.1, 0.2, 0.3, 0.4)
    cadence: int = 10
    output_dir: str = "out"
    checkpoint_every: int = 0
    vtk_every: int = 0
    stats_start: float = 0.0
    stats_end: float = float("inf")
    stats_every: int = 10
    seed: int = 0
    steady: bool = False
    reynolds: float = 40.0
    forcing: float = 1.0
    perturbation: float = 0.0
    restart: str = ""
    momentum_tol: float = 1e-12
    pressure_tol: float = 1e-12

    def validate(self) -> "RunConfig":
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; available cases: {', '.join(CASES)}")
        if self.flux not in FLUXES:
            raise ConfigError(f"key 'flux': {self.flux!r} not in {FLUXES}")
        if self.dim not in (2, 3):
            raise ConfigError(f"key 'dim': must be 2 or 3, got {self.dim}")
        if len(self.cells) != self.dim or any(c < 1 for c in self.cells):
            raise ConfigError(f"key 'cells': need {self.dim} positive entries, got {self.cells}")
        if self.k < 1:
            raise ConfigError(f"key 'k': must be >= 1, got {self.k}")
        for key in ("dt", "T_end", "nu", "reynolds"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"key {key!r}: must be positive, got {getattr(self, key)}")
        if self.cadence < 1 or self.stats_every < 1:
            raise ConfigError("keys 'cadence' and 'stats_every' must be >= 1")
        if self.flux == "adaptive":
            t = np.asarray(self.thresholds, dtype=float)
            if np.any(np.diff(t) <= 0):
                raise ConfigError(f"key 'thresholds': must be strictly increasing, got {self.thresholds}")
            if len(t) != self.k + 1:
                raise ConfigError(f"key 'thresholds': need k+1 = {self.k + 1} values, got {len(t)}")
        if self.flux == "hopu" and not 0 <= self.hopu_order <= self.k:
            raise ConfigError(f"key 'hopu_order': must lie in [0, k], got {self.hopu_order}")
        if self.case in ("tgv3d",) and self.dim != 3:
            raise ConfigError("case tgv3d needs dim = 3")
        if self.case in ("tgv2d", "kovasznay") and self.dim != 2:
            raise ConfigError(f"case {self.case} needs dim = 2")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))

    def flux_mode(self) -> forms.FluxMode:
        if self.flux == "upwind":
            return forms.FluxMode.Upwind()
        if self.flux == "central":
            return forms.FluxMode.Central()
        if self.flux == "hopu":
            return forms.FluxMode.HopuFixed(self.hopu_order)
        return forms.FluxMode.HopuAdaptive(tuple(self.thresholds))


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, where: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"{where}: unknown key {key!r}")
    typ = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if typ.startswith("tuple"):
            if key == "extent":
                vals = [float(x) for x in raw.replace(";", ",").split(",") if x.strip()]
                if len(vals) % 2:
                    raise ValueError("extent needs lower,upper pairs")
                return tuple(zip(vals[::2], vals[1::2]))
            conv = int if key == "cells" else float
            return tuple(conv(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {key} = {raw!r} ({exc})") from None


def parse_config(text: str, overrides=(), source: str = "<config>") -> RunConfig:
    """RunConfig from INI text plus ``key=value`` overrides."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = text.splitlines()

    def line_of(key):
        for i, line in enumerate(lines, 1):
            if line.split("=")[0].strip() == key:
                return i
        return "?"

    values = {}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            values[key] = _convert(key, raw, f"{source}:{line_of(key)} [{sec}]")
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"--set expects key=value, got {ov!r}")
        key, raw = ov.split("=", 1)
        key = key.strip().split(".")[-1]
        values[key] = _convert(key, raw, f"--set {ov}")
    if "cells" in values and "dim" not in values:
        values["dim"] = len(values["cells"])
    cfg = RunConfig(**values)
    if "cells" not in values:
        cfg.cells = (8,) * cfg.dim
    return cfg.validate()


def load_config(path, overrides=()) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides, str(path))


# --------------------------------------------------------------------------
# cases


@dataclass
class CaseSetup:
    mesh: meshmod.Mesh
    nu: float
    u0: object  # callable (x, t) -> velocity
    inflow: object = None
    force: object = None
    exact: object = None
    exact_ke: object = None  # callable t -> KE
    probes: np.ndarray | None = None
    probe_shape: tuple | None = None
    wall_n: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def taylor_green_2d(nu: float):
    def u(x, t=0.0):
        f = np.exp(-2.0 * nu * t)
        return np.stack([np.sin(x[..., 0]) * np.cos(x[..., 1]) * f, -np.cos(x[..., 0]) * np.sin(x[..., 1]) * f], axis=-1)

    def p(x, t=0.0):
        return 0.25 * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1])) * np.exp(-4.0 * nu * t)

    return u, p


def kovasznay(reynolds: float = 40.0):
    lam = reynolds / 2.0 - np.sqrt(reynolds**2 / 4.0 + 4.0 * np.pi**2)

    def u(x, t=0.0):
        e = np.exp(lam * x[..., 0])
        return np.stack([1.0 - e * np.cos(2 * np.pi * x[..., 1]), lam / (2 * np.pi) * e * np.sin(2 * np.pi * x[..., 1])], axis=-1)

    def p(x, t=0.0):
        return 0.5 * (1.0 - np.exp(2.0 * lam * x[..., 0]))

    return u, p, lam


def _random_field(dim: int, seed: int, amplitude: float, modes: int = 3):
    """Smooth seeded random velocity built from a few Fourier modes."""
    rng = np.random.default_rng(seed)
    waves = rng.integers(1, modes + 1, size=(modes, dim))
    phases = rng.uniform(0, 2 * np.pi, size=(modes, dim))
    amps = rng.normal(size=(modes, dim))

    def g(x, t=0.0):
        out = np.zeros(x.shape[:-1] + (dim,))
        for w, ph, a in zip(waves, phases, amps):
            arg = 2 * np.pi * np.einsum("...i,i->...", x, w / 2.0) + ph[0]
            for i in range(dim):
                out[..., i] += amplitude * a[i] * np.sin(arg + ph[i])
        return out

    return g


def build_case(cfg: RunConfig) -> CaseSetup:
    d = cfg.dim
    if cfg.case in ("tgv2d", "tgv3d"):
        ext = cfg.extent or ((0.0, 2 * np.pi),) * d
        m = meshmod.build_box_mesh(d, cfg.cells, ext, periodic_axes=tuple(range(d)))
        if d == 2:
            u, _ = taylor_green_2d(cfg.nu)
            ke0 = 0.25 * (ext[0][1] - ext[0][0]) * (ext[1][1] - ext[1][0])
            return CaseSetup(m, cfg.nu, u, exact=u, exact_ke=lambda t: ke0 * np.exp(-4.0 * cfg.nu * t))

        def u3(x, t=0.0):
            s, c = np.sin, np.cos
            return np.stack([s(x[..., 0]) * c(x[..., 1]) * c(x[..., 2]), -c(x[..., 0]) * s(x[..., 1]) * c(x[..., 2]), 0 * x[..., 0]], axis=-1)

        return CaseSetup(m, cfg.nu, u3)
    if cfg.case == "kovasznay":
        ext = cfg.extent or ((-0.5, 1.5), (0.0, 2.0))
        u, p, lam = kovasznay(cfg.reynolds)
        m = meshmod.build_box_mesh(2, cfg.cells, ext, boundary_tags=meshmod.INLET)
        return CaseSetup(m, 1.0 / cfg.reynolds, lambda x, t=0.0: 0 * u(x), inflow=u, exact=u, info={"lambda": lam})
    if cfg.case == "channel":
        ext = cfg.extent or ((0.0, 2 * np.pi),) + ((0.0, 2.0),) + (((0.0, np.pi),) if d == 3 else ())
        tags = {"y-": meshmod.WALL, "y+": meshmod.WALL}
        periodic = (0, 2) if d == 3 else (0,)
        m = meshmod.build_box_mesh(d, cfg.cells, ext, boundary_tags=tags, periodic_axes=periodic)
        H = 0.5 * (ext[1][1] - ext[1][0])
        y0, g, nu = ext[1][0], cfg.forcing, cfg.nu
        noise = _random_field(d, cfg.seed, cfg.perturbation)

        def u0(x, t=0.0):
            y = x[..., 1] - y0
            out = noise(x) * (y * (2 * H - y))[..., None] / H**2
            out[..., 0] += g / (2 * nu) * y * (2 * H - y)
            return out

        def force(x, t=0.0):
            out = np.zeros(x.shape[:-1] + (d,))
            out[..., 0] = g
            return out

        # probe lines: wall-normal stations in the lower half, homogeneous along x
        ny, nx = 4 * cfg.cells[1] + 1, 2 * cfg.cells[0]
        n = np.linspace(0.0, H, ny)
        xs = ext[0][0] + (np.arange(nx) + 0.5) * (ext[0][1] - ext[0][0]) / nx
        P = np.zeros((ny, nx, d))
        P[:, :, 0] = xs[None, :]
        P[:, :, 1] = y0 + n[:, None]
        if d == 3:
            P[:, :, 2] = 0.5 * (ext[2][0] + ext[2][1])
        return CaseSetup(m, nu, u0, force=force, probes=P.reshape(-1, d), probe_shape=(ny, nx), wall_n=n, info={"H": H, "u_tau_laminar": float(np.sqrt(g * H))})
    # box: closed, all walls, seeded random initial field
    ext = cfg.extent or ((0.0, 1.0),) * d
    m = meshmod.build_box_mesh(d, cfg.cells, ext, boundary_tags=meshmod.WALL)
    noise = _random_field(d, cfg.seed, max(cfg.perturbation, 1.0))
    return CaseSetup(m, cfg.nu, noise)


# --------------------------------------------------------------------------
# run orchestration


def _limit_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def l2_error(spaces: SpaceSet, u: np.ndarray, exact, t: float) -> float:
    uq = spaces.quadrature_values("V", u)
    xq = spaces.quadrature_points()
    err = uq - exact(xq, t)
    w = spaces.ref.vol_weights()
    return float(np.sqrt(np.einsum("eqi,eqi,q->", err, err, w)))


def _run_steady(cfg, case, spaces, out: Path) -> dict:
    res = splitting.solve_steady(spaces, case.nu, case.inflow, cfg.flux_mode(), case.force, tol=1e-9)
    with output.CsvTable(out / "steady.csv", ["iteration", "max_change"]) as tab:
        for i, ch in enumerate(res.history, 1):
            tab.row(i, float(ch))
    summary = {"converged": bool(res.converged), "iterations": res.iterations}
    if case.exact is not None:
        summary["l2_error"] = l2_error(spaces, res.u, case.exact, 0.0)
    summary["max_div"] = spaces.max_divergence(res.u)
    output.save_checkpoint(out / "checkpoint.npz", spaces, res.u, 0.0, res.iterations)
    if cfg.vtk_every:
        output.write_vtk(spaces, out / "solution.vtk", res.u, res.p)
    if not res.converged:
        raise splitting.SplittingError(f"Picard iteration did not converge in {res.iterations} iterations")
    return summary


def run_case(cfg: RunConfig) -> dict:
    """Run one configured case and write its artifacts into ``cfg.output_dir``."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=1, sort_keys=True, default=str) + "\n")
    case = build_case(cfg)
    spaces = SpaceSet(case.mesh, cfg.k)
    t0 = time.perf_counter()
    if cfg.steady:
        summary = _run_steady(cfg, case, spaces, out)
        summary["seconds"] = time.perf_counter() - t0
        (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        return summary

    params = splitting.TimeParams(cfg.dt, case.nu, cfg.T_end)
    mode = cfg.flux_mode()
    stepper = splitting.Splitting(spaces, params, mode, case.inflow, case.force, momentum_tol=cfg.momentum_tol, pressure_tol=cfg.pressure_tol)
    append = bool(cfg.restart)
    if cfg.restart:
        ck = output.load_checkpoint(cfg.restart, spaces)
        state = splitting.State(ck["u"], ck["t"], ck["step"], ck["u_prev"])
        of = ck["order_field"]
    else:
        u0 = l2_project(spaces, "V", case.u0, 0.0, divergence_free=True)
        uV, _ = stepper.dirichlet(0.0)
        dirV = spaces.dofs.dirichlet["V"]
        u0[dirV] = uV[dirV]
        state = splitting.State(u0, 0.0, 0)
        of = stepper.initial_order_field(u0, cfg.cadence)
    if mode.kind == "hopu":
        of = hopu.OrderField.uniform(spaces, mode.order, cfg.cadence)

    energy = output.CsvTable(out / "energy.csv", ["step", "t", "KE", "max_div", "dissipation_upwind", "dissipation_active"], append)
    slog = output.CsvTable(out / "solver_log.csv", ["step", "t", "momentum_iterations", "momentum_residual", "pressure_iterations", "pressure_residual"], append)
    acc = None
    if case.probes is not None:
        acc = stats.StatAccumulator((cfg.stats_start, cfg.stats_end), case.probe_shape)

    def record(st):
        ke = stats.kinetic_energy(spaces, st.u)
        d_up = forms.convection_dissipation(spaces, st.u, forms.FluxMode.Upwind(), None, case.inflow)
        d_act = forms.convection_dissipation(spaces, st.u, mode, of, case.inflow)
        energy.row(st.step, float(st.t), ke, spaces.max_divergence(st.u), d_up, d_act)

    n_steps = params.n_steps
    summary = {"case": cfg.case, "steps": n_steps, "status": "running"}
    try:
        if not append:
            record(state)
        ws = None
        while state.step < n_steps:
            state, ws, of = stepper.advance(state, of)
            mr, pr = ws.reports["momentum"], ws.reports["pressure"]
            slog.row(state.step, float(state.t), mr.iterations, float(mr.residual), pr.iterations, float(pr.residual))
            record(state)
            if acc is not None and state.step % cfg.stats_every == 0:
                acc.add(state.t, spaces.evaluate("V", state.u, case.probes))
            if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                output.save_checkpoint(out / f"checkpoint_{state.step:06d}.npz", spaces, state.u, state.t, state.step, of, state.u_prev)
            if cfg.vtk_every and state.step % cfg.vtk_every == 0:
                output.write_vtk(spaces, out / f"solution_{state.step:06d}.vtk", state.u, ws.p, of)
    finally:
        energy.close()
        slog.close()
        output.save_checkpoint(out / "checkpoint.npz", spaces, state.u, state.t, state.step, of, state.u_prev)
    if of is not None:
        of.to_csv(spaces, out / "order_field.csv")
    summary.update(status="completed", t=float(state.t), KE=stats.kinetic_energy(spaces, state.u), max_div=spaces.max_divergence(state.u))
    if case.exact is not None:
        summary["l2_error"] = l2_error(spaces, state.u, case.exact, state.t)
    if case.exact_ke is not None:
        summary["KE_exact"] = float(case.exact_ke(state.t))
    if acc is not None and acc.count:
        acc.close()
        wp = stats.profile_from_accumulator(acc, case.wall_n, case.nu)
        stats.write_profile_csv(wp, out / "profile.csv")
        summary["u_tau"] = wp.u_tau
    summary["seconds"] = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


# --------------------------------------------------------------------------
# verify / report


def _check(name, ok, detail, results):
    results.append((name, bool(ok), detail))


def verify_suite(suite: str) -> list:
    """Quick invariant checks; returns (name, passed, detail) tuples."""
    from .fespace import expected_dims

    rng = np.random.default_rng(0)
    res = []
    if suite == "spaces":
        for k in (1, 2, 3):
            m = meshmod.build_box_mesh(2, (2, 2), periodic_axes=(0, 1))
            S = SpaceSet(m, k)
            rep, exp = S.report()["local"], expected_dims(2, k)
            _check(f"local dims k={k}", all(rep[s] == exp[s] for s in exp if s in rep), str(rep), res)
            u = splitting.helmholtz_projection(S, rng.normal(size=S.dofs.ndofs["V"]))
            div = S.max_divergence(u)
            _check(f"projected divergence k={k}", div < 1e-9, f"{div:.2e}", res)
    elif suite == "forms":
        m = meshmod.build_box_mesh(2, (4, 4), periodic_axes=(0, 1))
        for k in (1, 2, 3):
            S = SpaceSet(m, k)
            u = splitting.helmholtz_projection(S, rng.normal(size=S.dofs.ndofs["V"]))
            c = float(u @ forms.apply_convection(S, u, None, forms.FluxMode.Central()))
            _check(f"central energy k={k}", abs(c) < 1e-11 * max(1.0, float(u @ u) ** 1.5), f"{c:.2e}", res)
            diss = [forms.convection_dissipation(S, u, fm) for fm in (forms.FluxMode.Central(), forms.FluxMode.HopuFixed(k), *[forms.FluxMode.HopuFixed(l) for l in range(k - 1, -1, -1)], forms.FluxMode.Upwind())]
            _check(f"dissipation ladder k={k}", all(b >= a - 1e-13 for a, b in zip(diss, diss[1:])), str(np.round(diss, 6)), res)
            gap = float(u @ forms.apply_convection(S, u, None, forms.FluxMode.Upwind())) - c
            _check(f"upwind identity k={k}", abs(gap - diss[-1]) < 1e-11 * max(1.0, diss[-1]), f"{gap - diss[-1]:.2e}", res)
    elif suite == "solvers":
        m1 = meshmod.build_box_mesh(2, (1, 1), boundary_tags={"x-": "wall", "x+": "outlet", "y-": "wall", "y+": "wall"})
        S = SpaceSet(m1, 2)
        cs = linsolve.condense(S, 1e-2, 1e-3)
        _, _, rep, _ = cs.solve(rng.normal(size=S.dofs.ndofs["V"]), np.zeros(cs.n), tol=1e-8, preconditioner=linsolve.BddcPreconditioner(cs))
        _check("single element BDDC", rep.iterations == 1, f"{rep.iterations} iterations", res)
        m = meshmod.build_box_mesh(2, (8, 8), periodic_axes=(0, 1))
        S = SpaceSet(m, 2)
        cs = linsolve.condense(S, 1e-2, 1e-3)
        _, _, rep, _ = cs.solve(rng.normal(size=S.dofs.ndofs["V"]), np.zeros(cs.n), tol=1e-8, preconditioner=linsolve.BddcPreconditioner(cs))
        _check("BDDC 8x8", rep.converged and rep.iterations <= 80, f"{rep.iterations} iterations", res)
    elif suite == "splitting":
        cfg = RunConfig(case="tgv2d", k=2, cells=(4, 4), dt=1e-3, T_end=5e-3, nu=0.01)
        case = build_case(cfg)
        S = SpaceSet(case.mesh, cfg.k)
        st = splitting.Splitting(S, splitting.TimeParams(cfg.dt, cfg.nu, cfg.T_end))
        state = splitting.State(l2_project(S, "V", case.u0, 0.0, divergence_free=True))
        ke0 = stats.kinetic_energy(S, state.u)
        worst = 0.0
        for _ in range(5):
            state, _, _ = st.advance(state)
            worst = max(worst, S.max_divergence(state.u))
        _check("divergence per step", worst < 1e-9, f"{worst:.2e}", res)
        _check("energy decays", stats.kinetic_energy(S, state.u) <= ke0, "", res)
    else:
        raise ConfigError(f"unknown suite {suite!r}")
    return res


def report(directory) -> str:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"no such output directory: {d}")
    lines = [f"report for {d}"]
    if (d / "energy.csv").exists():
        hdr, E = output.read_csv(d / "energy.csv")
        col = {h: i for i, h in enumerate(hdr)}
        if len(E):
            lines.append(f"energy.csv: {len(E)} rows, t in [{E[0, col['t']]:.6g}, {E[-1, col['t']]:.6g}]")
            lines.append(f"  KE {E[0, col['KE']]:.10g} -> {E[-1, col['KE']]:.10g}; max |div u| {np.nanmax(E[:, col['max_div']]):.3e}")
    if (d / "solver_log.csv").exists():
        hdr, L = output.read_csv(d / "solver_log.csv")
        col = {h: i for i, h in enumerate(hdr)}
        if len(L):
            mi, pi = L[:, col["momentum_iterations"]], L[:, col["pressure_iterations"]]
            lines.append(f"solver_log.csv: {len(L)} steps; momentum its mean {mi.mean():.1f} max {int(mi.max())}; pressure its mean {pi.mean():.1f} max {int(pi.max())}")
    if (d / "steady.csv").exists():
        _, P = output.read_csv(d / "steady.csv")
        lines.append(f"steady.csv: {len(P)} Picard iterations, final change {P[-1, 1]:.3e}" if len(P) else "steady.csv: empty")
    if (d / "summary.json").exists():
        s = json.loads((d / "summary.json").read_text())
        lines.append("summary: " + ", ".join(f"{k}={v}" for k, v in sorted(s.items())))
    if len(lines) == 1:
        lines.append("no artifacts found")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hopuflow", description="Hybrid mixed-stress incompressible flow solver")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run a configured case")
    s.add_argument("--config", required=True)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("--suite", required=True, choices=("spaces", "forms", "solvers", "splitting"))
    r = sub.add_parser("report", help="summarize the CSV artifacts of a run")
    r.add_argument("--dir", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    limiter = _limit_threads()
    try:
        if args.command == "solve":
            try:
                cfg = load_config(args.config, args.set)
            except ConfigError as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            try:
                summary = run_case(cfg)
            except (splitting.SplittingError, linsolve.SolverError) as exc:
                print(f"solver failure: {exc}", file=sys.stderr)
                return EXIT_SOLVER
            except (ConfigError, output.OutputError) as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            print(json.dumps(summary, sort_keys=True))
            return EXIT_OK
        if args.command == "verify":
            results = verify_suite(args.suite)
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK
        try:
            print(report(args.dir))
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
