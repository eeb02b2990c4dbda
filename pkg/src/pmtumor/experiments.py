"""Experiment drivers, CSV emission, and manifests for the stock runs.

Every run emits `diagnostics.csv` (one row per cadence step), periodic
`snapshot_<step>.csv` files, and a `manifest` listing the resolved
configuration, headline results, and a checksum per emitted file.  The
accuracy runs also emit `error.csv` with the per-time L1 error and a final
space-time error line.  All floats print with 17 significant digits so the
files round-trip exactly and repeated runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analytic import barenblatt, integrate_front_vitro, integrate_front_vivo, vitro_exact, vivo_exact
from .config import SimConfig, config_echo
from .core import (
    Grid1D,
    Grid2D,
    PressureLaw,
    SimState,
    SolverError,
    growth_eval,
    pressure_from_density,
)
from .diagnostics import DiagnosticsRecord, record
from .fastpath import run_nutrient_experiment
from .implicit1d import ImplicitStepParams, advance
from .nutrient import InVitro, InVivo, solve_vitro, solve_vivo
from .scheme2d import ImplicitStepper2D, gradient_lq_norm, hole_pressure_min
from .twospecies import TwoSpeciesState, advance_twospecies

__all__ = ["CheckFailure", "run_experiment", "ap_sweep", "check_invariants", "read_csv"]

DIAG_COLUMNS = (
    "t", "mass", "l1_pressure", "linf_density", "linf_pressure", "bv",
    "dt_l1", "grad_l2_sq", "ab_min", "comp_residual",
)
GRAD_COLUMNS = ("grad_l2", "grad_l4", "grad_l6", "grad_l8", "grad_l10", "grad_linf")
LQ_EXPONENTS = (2.0, 4.0, 6.0, 8.0, 10.0, np.inf)
FOCUS_PRESSURE_FRACTION = 1e-6  # hole closure: min p over the center disc passes this * p_h


class CheckFailure(RuntimeError):
    """An asserted run property failed (CLI exit status 3)."""


def _fmt(value: Optional[float]) -> str:
    if value is None:
        value = float("nan")
    return f"{float(value):.17g}"


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[float]],
               trailer: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        if trailer is not None:
            fh.write(trailer + "\n")


def read_csv(path: str) -> Tuple[List[str], np.ndarray, Dict[str, float]]:
    """Read back an emitted CSV: header, float matrix, and `# key value` trailers."""
    trailers: Dict[str, float] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2:
                    trailers[parts[0]] = float(parts[1])
                continue
            rows.append([float(v) for v in line.split(",")])
    return header, np.array(rows), trailers


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class OutputSink:
    """Collects emitted files and writes the manifest last."""

    out_dir: str
    cfg: SimConfig
    results: Dict[str, float] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def write_manifest(self, status: str = "ok") -> str:
        path = os.path.join(self.out_dir, "manifest")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("format = pmtumor-manifest-v1\n")
            fh.write(f"version = {__version__}\n")
            fh.write(f"status = {status}\n\n[config]\n")
            for line in config_echo(self.cfg):
                fh.write(line + "\n")
            fh.write("\n[results]\n")
            for key in sorted(self.results):
                fh.write(f"{key} = {_fmt(self.results[key])}\n")
            fh.write("\n[files]\n")
            for name in sorted(set(self.files)):
                full = os.path.join(self.out_dir, name)
                if os.path.exists(full):
                    fh.write(f"{_sha256(full)}  {name}\n")
        return path


def _diag_row(rec: DiagnosticsRecord, with_gradients: bool) -> List[float]:
    row = [rec.t, rec.mass, rec.l1_pressure, rec.linf_density, rec.linf_pressure,
           rec.bv, rec.dt_l1, rec.grad_l2_sq, rec.ab_min, rec.comp_residual]
    if with_gradients:
        row.extend(rec.lq_grad_norms[q] for q in LQ_EXPONENTS)
    return row


def _snapshot_1d(sink: OutputSink, step: int, grid: Grid1D, law: PressureLaw,
                 state: SimState) -> None:
    cols = ["x", "n", "p"]
    arrays = [grid.nodes, state.n, pressure_from_density(state.n, law)]
    if state.c is not None:
        cols.append("c")
        arrays.append(state.c)
    if state.n_d is not None:
        cols.extend(["n_p", "n_d"])
        arrays.extend([state.n - state.n_d, state.n_d])
    rows = np.column_stack(arrays)
    _write_csv(sink.path(f"snapshot_{step}.csv"), cols, rows)


def _snapshot_2d(sink: OutputSink, step: int, grid: Grid2D, law: PressureLaw,
                 n: np.ndarray) -> None:
    p = pressure_from_density(n, law)
    X, Y = np.meshgrid(grid.xs, grid.ys)
    rows = np.column_stack([X.ravel(), Y.ravel(), n.ravel(), p.ravel()])
    _write_csv(sink.path(f"snapshot_{step}.csv"), ["x", "y", "n", "p"], rows)


def _params(cfg: SimConfig) -> ImplicitStepParams:
    return ImplicitStepParams(
        dt=cfg.dt,
        newton_tol=cfg.newton_tol,
        newton_max_iter=cfg.newton_max_iter,
        monotone_tol=cfg.monotone_tol,
    )


def _initial_density(cfg: SimConfig, grid: Grid1D, law: PressureLaw) -> np.ndarray:
    if cfg.initial == "barenblatt":
        return barenblatt(grid.nodes, 0.0, cfg.gamma, cfg.c_coeff, cfg.t0)
    if cfg.initial == "pressure_patch":
        if cfg.environment == "vivo":
            _, p0 = vivo_exact(grid.nodes, cfg.r0, cfg.c_b, cfg.g0)
        else:
            _, p0 = vitro_exact(grid.nodes, cfg.r0, cfg.c_b)
        return law.density_at(p0)
    if cfg.initial == "indicator_patch":
        return np.where(np.abs(grid.nodes) < cfg.r0 - 1e-12, 1.0, 0.0)
    raise CheckFailure(f"initial data {cfg.initial!r} is two-dimensional")


def _shell_density(cfg: SimConfig, grid: Grid2D) -> np.ndarray:
    ii = np.arange(grid.nx) - grid.mx
    jj = np.arange(grid.ny) - grid.my
    I, J = np.meshgrid(ii, jj)
    r = grid.dx * np.sqrt((I**2 + J**2).astype(float))
    return np.where((r > cfg.r_inner) & (r < cfg.r_outer), cfg.density, 0.0)


def _steps(cfg: SimConfig) -> int:
    steps = int(round(cfg.t_end / cfg.dt))
    if abs(steps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise CheckFailure(
            f"t_end = {cfg.t_end:g} is not a whole number of steps of dt = {cfg.dt:g}"
        )
    return steps


def _cadence_steps(nsteps: int, every: int) -> np.ndarray:
    marks = list(range(every, nsteps + 1, every))
    if not marks or marks[-1] != nsteps:
        marks.append(nsteps)
    return np.array(marks, dtype=np.int64)


# --- drivers ------------------------------------------------------------------


def _run_barenblatt(cfg: SimConfig, sink: OutputSink) -> None:
    grid = Grid1D.symmetric(cfg.x_max, cfg.dx)
    law = PressureLaw(gamma=cfg.gamma, kappa=cfg.kappa)
    growth = cfg.growth()
    params = _params(cfg)
    nsteps = _steps(cfg)

    def exact(x, t):
        return barenblatt(x, t, cfg.gamma, cfg.c_coeff, cfg.t0)

    state = SimState(0.0, exact(grid.nodes, 0.0))
    diag_rows = [_diag_row(record(state, None, law, growth, grid), False)]
    err_rows = [[0.0, 0.0]]
    err_total = [0.0]
    _snapshot_1d(sink, 0, grid, law, state)

    def hook(k, s, prev):
        err_sp = grid.dx * float(np.sum(np.abs(s.n - exact(grid.nodes, s.t))))
        err_total[0] += cfg.dt * err_sp
        if k % cfg.cadence == 0 or k == nsteps:
            diag_rows.append(_diag_row(record(s, prev, law, growth, grid), False))
            err_rows.append([s.t, err_sp])
        if k % cfg.snapshot_every == 0 or k == nsteps:
            _snapshot_1d(sink, k, grid, law, s)

    advance(state, cfg.t_end, params, law, growth, grid, hook=hook)
    _write_csv(sink.path("diagnostics.csv"), DIAG_COLUMNS, diag_rows)
    _write_csv(sink.path("error.csv"), ["t", "l1_error"], err_rows,
               trailer=f"# err1_spacetime {_fmt(err_total[0])}")
    sink.results["err1_spacetime"] = err_total[0]


def _run_nutrient(cfg: SimConfig, sink: OutputSink) -> None:
    grid = Grid1D.symmetric(cfg.x_max, cfg.dx)
    law = PressureLaw(gamma=cfg.gamma, kappa=cfg.kappa)
    growth = cfg.growth()
    vivo = cfg.kind == "vivo"
    nsteps = _steps(cfg)

    if vivo:
        front = integrate_front_vivo(cfg.r0, cfg.c_b, cfg.g0, cfg.t_end)
    else:
        front = integrate_front_vitro(cfg.r0, cfg.c_b, cfg.t_end)
    radii = front.at(np.arange(nsteps + 1) * cfg.dt)

    n0 = _initial_density(cfg, grid, law)
    model = InVivo(c_b=cfg.c_b) if vivo else InVitro(c_b=cfg.c_b)
    c0 = (solve_vivo if vivo else solve_vitro)(n0, model, grid)
    state0 = SimState(0.0, n0, c=c0)

    marks = _cadence_steps(nsteps, cfg.cadence)
    snaps = _cadence_steps(nsteps, cfg.snapshot_every)
    out = run_nutrient_experiment(
        n0, grid, cfg.dt, nsteps, cfg.gamma, cfg.kappa, vivo, cfg.c_b,
        newton_tol=cfg.newton_tol, newton_max_iter=cfg.newton_max_iter,
        radii=radii, err_steps=marks, diag_steps=marks, snap_steps=snaps,
    )

    diag_rows = [_diag_row(record(state0, None, law, growth, grid), False)]
    for j, k in enumerate(marks):
        now = SimState(k * cfg.dt, out.diag_now[j], c=out.diag_c[j])
        prev = SimState((k - 1) * cfg.dt, out.diag_prev[j])
        diag_rows.append(_diag_row(record(now, prev, law, growth, grid), False))
    err0 = grid.dx * float(np.sum(np.abs(n0 - (np.abs(grid.nodes) <= cfg.r0))))
    err_rows = [[0.0, err0]] + [[k * cfg.dt, v] for k, v in zip(marks, out.err_vals)]

    _snapshot_1d(sink, 0, grid, law, state0)
    for j, k in enumerate(snaps):
        _snapshot_1d(sink, int(k), grid, law,
                     SimState(k * cfg.dt, out.snap_n[j], c=out.snap_c[j]))
    _write_csv(sink.path("diagnostics.csv"), DIAG_COLUMNS, diag_rows)
    _write_csv(sink.path("error.csv"), ["t", "l1_error"], err_rows,
               trailer=f"# err1_spacetime {_fmt(out.err_spacetime)}")
    sink.results["err1_spacetime"] = out.err_spacetime
    sink.results["density_min"] = out.n_min
    sink.results["density_max"] = out.n_max
    sink.results["front_radius_end"] = float(radii[-1])


def _run_twospecies(cfg: SimConfig, sink: OutputSink) -> None:
    grid = Grid1D.symmetric(cfg.x_max, cfg.dx)
    law = PressureLaw(gamma=cfg.gamma, kappa=cfg.kappa)
    growth = cfg.growth()
    params = _params(cfg)
    nsteps = _steps(cfg)
    model = InVivo(c_b=cfg.c_b) if cfg.environment == "vivo" else InVitro(c_b=cfg.c_b)

    n_p0 = _initial_density(cfg, grid, law)
    state = TwoSpeciesState(0.0, n_p0, np.zeros(grid.n_nodes))

    def to_sim(s: TwoSpeciesState) -> SimState:
        # diagnostics see the nutrient of the state itself, not the lagged
        # field the step was taken against
        total = s.n_p + s.n_d
        c = (solve_vivo if cfg.environment == "vivo" else solve_vitro)(total, model, grid)
        return SimState(s.t, total, c=c, n_d=s.n_d)

    diag_rows = [_diag_row(record(to_sim(state), None, law, growth, grid), False)]
    _snapshot_1d(sink, 0, grid, law, to_sim(state))

    def hook(k, s, prev):
        if k % cfg.cadence == 0 or k == nsteps:
            diag_rows.append(
                _diag_row(record(to_sim(s), to_sim(prev), law, growth, grid), False)
            )
        if k % cfg.snapshot_every == 0 or k == nsteps:
            _snapshot_1d(sink, k, grid, law, to_sim(s))

    state = advance_twospecies(state, cfg.t_end, params, law, model, growth, grid, hook=hook)
    _write_csv(sink.path("diagnostics.csv"), DIAG_COLUMNS, diag_rows)
    total = state.n_p + state.n_d
    sink.results["dead_mass_end"] = grid.dx * float(np.sum(state.n_d))
    sink.results["total_mass_end"] = grid.dx * float(np.sum(total))


def _run_focusing(cfg: SimConfig, sink: OutputSink) -> None:
    grid = Grid2D.square(cfg.x_max, cfg.dx)
    law = PressureLaw(gamma=cfg.gamma, kappa=cfg.kappa)
    growth = cfg.growth()
    params = _params(cfg)
    nsteps = _steps(cfg)
    stepper = ImplicitStepper2D(params, law, growth, grid, solver=cfg.solver2d)

    n = _shell_density(cfg, grid)
    state = SimState(0.0, n)
    diag_rows = [_diag_row(record(state, None, law, growth, grid, LQ_EXPONENTS), True)]
    _snapshot_2d(sink, 0, grid, law, n)

    detect_radius = 2.0 * grid.dx
    threshold = FOCUS_PRESSURE_FRACTION * cfg.p_h
    focus_time = None
    n_min, n_max = float(np.min(n)), float(np.max(n))
    prev = state
    for k in range(1, nsteps + 1):
        n = stepper.step(prev.n)
        state = SimState(k * cfg.dt, n)
        n_min = min(n_min, float(np.min(n)))
        n_max = max(n_max, float(np.max(n)))
        if focus_time is None:
            p = pressure_from_density(n, law)
            if hole_pressure_min(p, grid, detect_radius) > threshold:
                focus_time = state.t
        if k % cfg.cadence == 0 or k == nsteps:
            diag_rows.append(_diag_row(record(state, prev, law, growth, grid, LQ_EXPONENTS), True))
        if k % cfg.snapshot_every == 0 or k == nsteps:
            _snapshot_2d(sink, k, grid, law, n)
        prev = state

    _write_csv(sink.path("diagnostics.csv"), DIAG_COLUMNS + GRAD_COLUMNS, diag_rows)
    sink.results["focusing_time"] = focus_time if focus_time is not None else float("nan")
    sink.results["density_min"] = n_min
    sink.results["density_max"] = n_max


def _sweep_single(cfg: SimConfig, gamma: float):
    grid = Grid1D.symmetric(cfg.x_max, cfg.dx)
    law = PressureLaw(gamma=gamma, kappa=cfg.kappa)
    growth = cfg.growth()
    params = _params(cfg)
    n0 = _initial_density(cfg, grid, law)
    state = SimState(0.0, n0)
    comp = []
    extrema = [np.inf, -np.inf]

    def hook(_k, s, _prev):
        rec = record(s, None, law, growth, grid)
        comp.append(rec.comp_residual)
        extrema[0] = min(extrema[0], float(np.min(s.n)))
        extrema[1] = max(extrema[1], float(np.max(s.n)))

    advance(state, cfg.t_end, params, law, growth, grid, hook=hook)
    integral = cfg.dt * float(np.sum(comp))
    sup = float(np.max(comp)) if comp else 0.0
    return integral, sup, extrema


def ap_sweep(cfg: SimConfig, gammas: Optional[Sequence[float]] = None) -> OutputSink:
    """Run the stiff-limit sweep; asserts strict residual decrease along gamma."""
    gammas = tuple(gammas if gammas is not None else cfg.gammas)
    if len(gammas) < 2:
        raise CheckFailure("the gamma sweep needs at least two gamma values")
    sink = OutputSink(cfg.out_dir, cfg)
    rows = []
    for gamma in gammas:
        integral, sup, _ = _sweep_single(cfg, gamma)
        rows.append([gamma, integral, sup])
    _write_csv(sink.path("ap_sweep.csv"),
               ["gamma", "comp_residual_integral", "comp_residual_sup"], rows)
    values = [r[1] for r in rows]
    slope = float(np.polyfit(np.log(gammas), np.log(values), 1)[0])
    sink.results["loglog_slope"] = slope
    for (g1, v1), (g2, v2) in zip(zip(gammas, values), list(zip(gammas, values))[1:]):
        if not v2 < v1:
            sink.write_manifest(status="failed")
            raise CheckFailure(
                f"stiff-limit residual did not decrease from gamma={g1:g} ({v1:.6g}) "
                f"to gamma={g2:g} ({v2:.6g})"
            )
    sink.write_manifest()
    return sink


_DRIVERS = {
    "barenblatt": _run_barenblatt,
    "vitro": _run_nutrient,
    "vivo": _run_nutrient,
    "twospecies": _run_twospecies,
    "focusing": _run_focusing,
}


def run_experiment(cfg: SimConfig) -> OutputSink:
    """Run one experiment, emit its files, and finish with the manifest.

    Solver failures still flush the manifest (status = failed) before the
    error propagates to the caller.
    """
    if cfg.kind == "ap_sweep":
        return ap_sweep(cfg)
    sink = OutputSink(cfg.out_dir, cfg)
    try:
        _DRIVERS[cfg.kind](cfg, sink)
    except SolverError:
        sink.write_manifest(status="failed")
        raise
    sink.write_manifest()
    return sink


def check_invariants(cfg: SimConfig, max_steps: int = 60) -> List[str]:
    """Short run of the configured experiment asserting the stability bounds.

    Checks sup bounds, nonnegativity, and the geometric L1/BV/time-derivative
    growth factors, each with 1e-8 absolute slack.  Returns one line per
    check; raises CheckFailure on the first violation.
    """
    horizon = min(cfg.t_end, max_steps * cfg.dt)
    lines: List[str] = []

    if cfg.kind == "focusing":
        grid = Grid2D.square(cfg.x_max, cfg.dx)
        law = PressureLaw(gamma=cfg.gamma, kappa=cfg.kappa)
        growth = cfg.growth()
        stepper = ImplicitStepper2D(_params(cfg), law, growth, grid, solver=cfg.solver2d)
        n = _shell_density(cfg, grid)
        cap = (cfg.p_h / cfg.kappa) ** (1.0 / cfg.gamma)
        for k in range(int(round(horizon / cfg.dt))):
            n = stepper.step(n)
            if n.min() < -1e-14 or n.max() > cap + 1e-10:
                raise CheckFailure(f"sup bound violated at step {k + 1}")
        lines.append(f"sup bounds: 0 <= n <= {cap:g} held for {k + 1} steps")
        return lines

    grid = Grid1D.symmetric(cfg.x_max, cfg.dx)
    law = PressureLaw(gamma=cfg.gamma, kappa=cfg.kappa)
    growth = cfg.growth()
    nutrient = None
    if not getattr(growth, "pressure_fed", True):
        nutrient = InVivo(c_b=cfg.c_b) if cfg.environment == "vivo" else InVitro(c_b=cfg.c_b)
    from .core import density_cap, growth_sup

    n0 = _initial_density(cfg, grid, law)
    state = SimState(0.0, n0)
    g0 = max(growth_sup(growth, c_b=cfg.c_b), 0.0)
    factor_per_step = 1.0 / (1.0 - cfg.dt * g0)
    cap = density_cap(law, growth)
    mass0 = grid.dx * float(np.sum(np.abs(n0)))
    bv0 = grid.dx * float(np.sum(np.abs(np.diff(n0))))
    dt_l1_first = [None]

    def hook(k, s, prev):
        bound = factor_per_step**k
        if s.n.min() < -1e-14:
            raise CheckFailure(f"negativity at step {k}: min = {s.n.min():g}")
        if cap is not None and s.n.max() > cap + 1e-10:
            raise CheckFailure(f"sup bound exceeded at step {k}: max = {s.n.max():g}")
        mass = grid.dx * float(np.sum(np.abs(s.n)))
        if mass > bound * mass0 + 1e-8:
            raise CheckFailure(f"L1 bound exceeded at step {k}")
        bv = grid.dx * float(np.sum(np.abs(np.diff(s.n))))
        if bv > bound * bv0 + 1e-8:
            raise CheckFailure(f"BV bound exceeded at step {k}")
        dt_l1 = grid.dx * float(np.sum(np.abs(s.n - prev.n))) / cfg.dt
        if dt_l1_first[0] is None:
            dt_l1_first[0] = dt_l1
        elif dt_l1 > bound * dt_l1_first[0] + 1e-8:
            raise CheckFailure(f"time-derivative bound exceeded at step {k}")

    final = advance(state, horizon, _params(cfg), law, growth, grid,
                    nutrient=nutrient, hook=hook)
    steps = int(round((final.t - 0.0) / cfg.dt))
    lines.append(f"nonnegativity: min >= -1e-14 held for {steps} steps")
    if cap is not None:
        lines.append(f"sup bound: n <= {cap:g} + 1e-10 held for {steps} steps")
    lines.append("L1 growth: mass within (1 - dt G(0))^-k of initial + 1e-8")
    lines.append("BV growth: variation within the same geometric factor + 1e-8")
    lines.append("time derivative: dx*sum|dN/dt| within the same factor of its first value")
    return lines
