"""Command-line front end: presets, config files, runs and experiments.

Subcommands:

* ``run``: simulate from a preset and/or a key-value config file, with flag
  overrides; writes snapshot CSVs, PPM heatmaps and a diagnostics table.
* ``oracle``: the independent verification suites (prox and projection
  comparisons, the reference JKO step, transport sanity checks).
* ``experiment``: the theorem-level experiments (L1 contraction, the m -> inf
  sweep, the heat-flow moment rate).

Exit codes: 0 on success, 1 on configuration errors, 2 on solver failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .alg2 import Alg2Config
from .energy import HARD, EnergySpec, PorousMedium, SolverError
from .grids import Grid2D, build_grid
from .oracle import (
    TinyMeasure,
    brute_projK,
    brute_prox,
    exact_transport_lp,
    heat_moment_check,
    primal_dual_reference_step,
)
from .output import append_diagnostics, write_snapshot
from .simulate import (
    SimulationConfig,
    l1_contraction_experiment,
    m_limit_experiment,
    run_simulation,
)


class ConfigError(ValueError):
    """A configuration file or flag combination is invalid."""


PRESET_NAMES = (
    "fig1_porous",
    "fig2_porous_weighted",
    "fig3_hard",
    "fig4_hard_weighted",
    "fig5_hard_obstacle",
    "fig6_hard_weighted_obstacle",
)

OBSTACLE_HEIGHT = 1e4
OBSTACLE_RECT = (-0.1, 0.1, -0.25, 0.25)


def _rect_indicator(grid: Grid2D, x0, x1, y0, y1, value=1.0) -> np.ndarray:
    """Cell average of value * 1_[x0,x1]x[y0,y1]; masses are grid-exact."""
    xl = grid.xmin + np.arange(grid.nx) * grid.dx
    yl = grid.ymin + np.arange(grid.ny) * grid.dy
    fx = np.clip((np.minimum(x1, xl + grid.dx) - np.maximum(x0, xl)) / grid.dx, 0.0, 1.0)
    fy = np.clip((np.minimum(y1, yl + grid.dy) - np.maximum(y0, yl)) / grid.dy, 0.0, 1.0)
    return float(value) * fy[:, None] * fx[None, :]


def _quadratic(grid: Grid2D, amp, cx, cy) -> np.ndarray:
    X, Y = grid.meshgrid()
    return amp * ((X - cx) ** 2 + (Y - cy) ** 2)


def _obstacle(grid: Grid2D) -> np.ndarray:
    x0, x1, y0, y1 = OBSTACLE_RECT
    return _rect_indicator(grid, x0, x1, y0, y1, OBSTACLE_HEIGHT)


def _preset_values(name: str) -> dict[str, str]:
    """Config-key descriptors for the figure presets (50x50, h = 0.01)."""
    if name not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}"
        )
    x0, x1, y0, y1 = OBSTACLE_RECT
    obstacle = f" {OBSTACLE_HEIGHT:g} {x0} {x1} {y0} {y1}"
    values = {
        "grid.nx": "50",
        "grid.ny": "50",
        "domain": "-0.5 0.5 -0.5 0.5",
        "time.h": "0.01",
        "time.steps": "30",
        "init.rho1": "rect -0.45 -0.15 -0.45 -0.15",
        "init.rho2": "rect 0.15 0.45 0.15 0.45",
        "potentials.v1": "quadratic 4 0.3 0.3",
        "potentials.v2": "quadratic 4 -0.3 -0.3",
        "energy.alpha1": "1",
        "energy.alpha2": "1",
        # r = 4 balances the primal/dual residuals at the mass scale of the runs
        "alg2.r": "4",
        "alg2.max_iters": "1000",
        "output.stride": "5",
    }
    if name in ("fig1_porous", "fig2_porous_weighted"):
        values.update({"energy.mode": "porous", "energy.m": "50", "energy.eps": "0"})
    else:
        values.update({"energy.mode": "hard", "energy.eps": "0.01"})
    if name in ("fig2_porous_weighted", "fig4_hard_weighted", "fig6_hard_weighted_obstacle"):
        values["energy.alpha2"] = "2"
    if name in ("fig5_hard_obstacle", "fig6_hard_weighted_obstacle"):
        values["time.steps"] = "50"
        values["potentials.v1"] = "quadratic_obstacle 4 0.3 0.3" + obstacle
        values["potentials.v2"] = "quadratic_obstacle 4 -0.3 -0.3" + obstacle
    return values


def preset(name: str) -> SimulationConfig:
    """The crossing-species setups behind the six reference figures."""
    return _build_config(_preset_values(name), {})


# -- key-value config files ------------------------------------------------------

_KNOWN_KEYS = (
    "grid.nx", "grid.ny", "domain",
    "time.h", "time.steps",
    "energy.eps", "energy.mode", "energy.m", "energy.alpha1", "energy.alpha2",
    "potentials.v1", "potentials.v2",
    "init.rho1", "init.rho2",
    "alg2.r", "alg2.nt", "alg2.tol", "alg2.max_iters",
    "output.dir", "output.stride", "output.vmax",
)


def _parse_kv_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val
    return values


def _float_of(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: non-numeric value {text!r}") from exc


def _field_of(grid: Grid2D, key: str, text: str) -> np.ndarray:
    parts = text.split()
    kind = parts[0].lower()
    if kind == "zero":
        return grid.zeros()
    if kind == "quadratic":
        if len(parts) != 4:
            raise ConfigError(f"key {key!r}: quadratic needs 'quadratic AMP CX CY'")
        amp, cx, cy = (_float_of(key, p) for p in parts[1:])
        return _quadratic(grid, amp, cx, cy)
    if kind == "quadratic_obstacle":
        if len(parts) != 9:
            raise ConfigError(
                f"key {key!r}: expected 'quadratic_obstacle AMP CX CY H X0 X1 Y0 Y1'"
            )
        amp, cx, cy, height, x0, x1, y0, y1 = (_float_of(key, p) for p in parts[1:])
        return _quadratic(grid, amp, cx, cy) + _rect_indicator(grid, x0, x1, y0, y1, height)
    if kind == "rect":
        if len(parts) not in (5, 6):
            raise ConfigError(f"key {key!r}: rect needs 'rect X0 X1 Y0 Y1 [VALUE]'")
        x0, x1, y0, y1 = (_float_of(key, p) for p in parts[1:5])
        value = _float_of(key, parts[5]) if len(parts) == 6 else 1.0
        return _rect_indicator(grid, x0, x1, y0, y1, value)
    if kind == "uniform":
        if len(parts) != 2:
            raise ConfigError(f"key {key!r}: uniform needs 'uniform VALUE'")
        return np.full(grid.shape, _float_of(key, parts[1]))
    if kind == "csv":
        if len(parts) != 2:
            raise ConfigError(f"key {key!r}: csv needs 'csv PATH'")
        data = np.loadtxt(parts[1], delimiter=",")
        if data.shape != grid.shape:
            raise ConfigError(
                f"key {key!r}: csv shape {data.shape} does not match grid {grid.shape}"
            )
        return data
    raise ConfigError(f"key {key!r}: unknown field kind {kind!r}")


_FLAG_OF_KEY = {
    "grid.nx": "nx", "grid.ny": "ny", "domain": "domain",
    "time.h": "h", "time.steps": "steps",
    "energy.eps": "eps", "energy.mode": "mode", "energy.m": "m",
    "energy.alpha1": "alpha1", "energy.alpha2": "alpha2",
    "potentials.v1": "v1", "potentials.v2": "v2",
    "init.rho1": "rho1", "init.rho2": "rho2",
    "alg2.r": "r", "alg2.nt": "nt", "alg2.tol": "tol", "alg2.max_iters": "max_iters",
    "output.dir": "out", "output.stride": "stride", "output.vmax": "vmax",
}


def _build_config(values: dict[str, str], overrides: dict) -> SimulationConfig:
    def pick(key, default):
        flag = _FLAG_OF_KEY[key]
        if overrides.get(flag) is not None:
            return overrides[flag]
        if key in values:
            return values[key]
        return default

    def pick_float(key, default):
        return _float_of(key, str(pick(key, default)))

    def pick_int(key, default):
        text = str(pick(key, default))
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: non-integer value {text!r}") from exc

    nx = pick_int("grid.nx", 50)
    ny = pick_int("grid.ny", 50)
    parts = str(pick("domain", "-0.5 0.5 -0.5 0.5")).split()
    if len(parts) != 4:
        raise ConfigError("key 'domain': expected 'XMIN XMAX YMIN YMAX'")
    grid = build_grid(nx, ny, tuple(_float_of("domain", p) for p in parts))
    mode = str(pick("energy.mode", "hard")).lower()
    if mode == "hard":
        congestion = HARD
    elif mode == "porous":
        congestion = PorousMedium(pick_float("energy.m", 50.0))
    else:
        raise ConfigError(f"key 'energy.mode': expected porous|hard, got {mode!r}")
    energy = EnergySpec(
        _field_of(grid, "potentials.v1", str(pick("potentials.v1", "zero"))),
        _field_of(grid, "potentials.v2", str(pick("potentials.v2", "zero"))),
        eps=pick_float("energy.eps", 0.0),
        congestion=congestion,
        alpha1=pick_float("energy.alpha1", 1.0),
        alpha2=pick_float("energy.alpha2", 1.0),
    )
    tol = pick_float("alg2.tol", 1e-6)
    cfg = SimulationConfig(
        grid=grid,
        h=pick_float("time.h", 0.01),
        steps=pick_int("time.steps", 30),
        energy=energy,
        alg2=Alg2Config(
            r=pick_float("alg2.r", 1.0),
            nt=pick_int("alg2.nt", 10),
            tol_primal=tol,
            tol_dual=tol,
            max_iters=pick_int("alg2.max_iters", 2000),
        ),
        rho1_init=_field_of(grid, "init.rho1", str(pick("init.rho1", "rect -0.45 -0.15 -0.45 -0.15"))),
        rho2_init=_field_of(grid, "init.rho2", str(pick("init.rho2", "rect 0.15 0.45 0.15 0.45"))),
        out_dir=pick("output.dir", None),
        stride=pick_int("output.stride", 1),
        vmax=pick_float("output.vmax", 1.0),
    )
    _validate_feasibility(cfg)
    return cfg


def parse_config(path=None, preset_name=None, **overrides) -> SimulationConfig:
    """Build a run config from a preset and/or file, with flag overrides.

    Precedence: flags > file values > preset values > defaults.  Validation
    names the offending key; infeasible hard-mode masses are rejected here.
    """
    values = dict(_preset_values(preset_name)) if preset_name else {}
    if path:
        values.update(_parse_kv_file(path))
    return _build_config(values, overrides)


def _validate_feasibility(cfg: SimulationConfig) -> None:
    spec = cfg.energy
    if spec.congestion.is_hard:
        grid = cfg.grid
        need = spec.alpha1 * grid.integrate(np.asarray(cfg.rho1_init)) + spec.alpha2 * grid.integrate(
            np.asarray(cfg.rho2_init)
        )
        if need > grid.area * (1.0 + 1e-9):
            raise ConfigError(
                f"infeasible hard-mode masses: alpha-weighted total {need:.6g} exceeds "
                f"|domain| = {grid.area:.6g}"
            )


# -- subcommands -----------------------------------------------------------------


def _cmd_run(args) -> int:
    cfg = parse_config(
        args.config,
        preset_name=args.preset,
        nx=args.nx, ny=args.ny, domain=args.domain,
        h=args.h, steps=args.steps,
        eps=args.eps, mode=args.mode, m=args.m,
        alpha1=args.alpha1, alpha2=args.alpha2,
        v1=args.v1, v2=args.v2, rho1=args.rho1, rho2=args.rho2,
        r=args.r, nt=args.nt, tol=args.tol, max_iters=args.max_iters,
        out=args.out, stride=args.stride, vmax=args.vmax,
    )
    result = run_simulation(cfg)
    if cfg.out_dir:
        for snap in result.snapshots:
            write_snapshot(snap.rho, snap.pressure, snap.time, cfg.out_dir, snap.step, cfg.vmax)
        append_diagnostics(os.path.join(cfg.out_dir, "diagnostics.csv"), result.diagnostics)
    last = result.diagnostics[-1]
    print(
        f"run finished: {cfg.steps} steps, final masses ({last.mass1:.6f}, {last.mass2:.6f}), "
        f"energy {last.energy:.6f}, sup(rho1+rho2) {last.sup_sum:.4f}"
    )
    if cfg.out_dir:
        print(f"outputs in {cfg.out_dir}")
    return 0


def _cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.which == "prox":
        from .energy import prox_density

        worst = 0.0
        worst_res = 0.0
        modes = [PorousMedium(1.0), PorousMedium(2.0), PorousMedium(50.0), HARD]
        for k in range(args.n):
            s1, s2 = rng.uniform(-0.5, 2.0, 2)
            lam = rng.uniform(1e-3, 1.0)
            v1, v2 = rng.uniform(-1.0, 1.0, 2)
            eps = (0.0, 0.01, 0.1)[k % 3]
            cong = modes[k % 4]
            alpha = ((1.0, 1.0), (1.0, 2.0))[k % 2]
            res = prox_density(s1, s2, lam, v1, v2, eps, cong, alpha)
            b1, b2 = brute_prox(s1, s2, lam, v1, v2, eps, cong, alpha)
            worst = max(worst, abs(res.rho1 - b1), abs(res.rho2 - b2))
            worst_res = max(worst_res, res.residual)
        ok = worst <= 1e-4 and worst_res <= 1e-11
        print(f"prox oracle: n={args.n} worst |rho - brute| = {worst:.3e} "
              f"worst KKT residual = {worst_res:.3e} -> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 2
    if args.which == "projk":
        from .alg2 import project_K

        worst = 0.0
        worst_gap = -np.inf
        for _ in range(args.n):
            a, bx, by = rng.normal(0.0, 1.5, 3)
            pa, (pbx, pby) = project_K(a, (bx, by))
            qa, (qbx, qby) = brute_projK(a, (bx, by))
            worst = max(worst, abs(pa - qa), abs(pbx - qbx), abs(pby - qby))
            worst_gap = max(worst_gap, pa + 0.5 * (pbx**2 + pby**2))
        ok = worst <= 1e-5 and worst_gap <= 1e-12
        print(f"projK oracle: n={args.n} worst diff = {worst:.3e} "
              f"worst constraint gap = {worst_gap:.3e} -> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 2
    if args.which == "jko":
        from .alg2 import jko_step
        from .energy import DensityPair

        grid = build_grid(args.nx, args.nx, (-0.5, 0.5, -0.5, 0.5))
        X, Y = grid.meshgrid()
        rho1 = np.where((np.abs(X + 0.3) <= 0.15) & (np.abs(Y + 0.3) <= 0.15), 1.0, 0.0)
        rho2 = np.where((np.abs(X - 0.3) <= 0.15) & (np.abs(Y - 0.3) <= 0.15), 1.0, 0.0)
        rho = DensityPair.from_fields(grid, rho1, rho2)
        spec = EnergySpec(
            _quadratic(grid, 4.0, 0.3, 0.3), _quadratic(grid, 4.0, -0.3, -0.3),
            eps=0.01, congestion=HARD,
        )
        cfg = Alg2Config(r=4.0, nt=args.nt, max_iters=6000, tol_primal=1e-9, tol_dual=1e-9)
        _, _, stats, _ = jko_step(rho, 0.01, spec, cfg)
        ref = primal_dual_reference_step(rho, 0.01, spec, grid, args.nt, max_iters=args.max_iters)
        rel = abs(ref.objective - stats.objective) / abs(stats.objective)
        ok = rel <= 1e-3
        print(f"jko oracle: alg2 objective {stats.objective:.8f}, reference {ref.objective:.8f}, "
              f"relative gap {rel:.3e} -> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 2
    if args.which == "transport":
        line_a = TinyMeasure([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
        line_b = TinyMeasure([[0.25, 0.0], [0.75, 0.0]], [0.5, 0.5])
        val = exact_transport_lp(line_a, line_b)
        ok = abs(val - 0.0625) < 1e-10 and exact_transport_lp(line_a, line_a) < 1e-12
        print(f"transport oracle: two-point line value {val:.6f} (expected 0.0625) "
              f"-> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 2
    raise ConfigError(f"unknown oracle suite {args.which!r}")


def _experiment_base(nx: int, steps: int, hard: bool = True) -> SimulationConfig:
    grid = build_grid(nx, nx, (-0.5, 0.5, -0.5, 0.5))
    common = _quadratic(grid, 4.0, 0.0, 0.0)
    energy = EnergySpec(common, common.copy(), eps=0.01,
                        congestion=HARD if hard else PorousMedium(50.0))
    return SimulationConfig(
        grid=grid,
        h=0.01,
        steps=steps,
        energy=energy,
        alg2=Alg2Config(r=4.0, max_iters=800),
        rho1_init=_rect_indicator(grid, -0.35, -0.05, -0.35, -0.05, 0.9),
        rho2_init=_rect_indicator(grid, 0.05, 0.35, 0.05, 0.35, 0.9),
    )


def _cmd_experiment(args) -> int:
    if args.which == "l1":
        cfg = _experiment_base(args.nx, args.steps)
        shift = 2.0 / args.nx
        rho1_b = _rect_indicator(cfg.grid, -0.35 + shift, -0.05 + shift,
                                 -0.35 + shift, -0.05 + shift, 0.9)
        rho2_b = _rect_indicator(cfg.grid, 0.05 + shift, 0.35 + shift,
                                 0.05 + shift, 0.35 + shift, 0.9)
        res = l1_contraction_experiment(cfg, rho1_b, rho2_b)
        drift = max(float(np.max(np.diff(res.d1))), float(np.max(np.diff(res.d2))))
        ok = drift <= 1e-3
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "l1_distances.csv")
            with open(path, "w") as fh:
                fh.write("time,d1,d2\n")
                for t, a, b in zip(res.times, res.d1, res.d2):
                    fh.write(f"{t:.11e},{a:.11e},{b:.11e}\n")
            print(f"wrote {path}")
        print(f"l1 contraction: worst per-step increase {drift:.3e} "
              f"-> {'PASS' if ok else 'FAIL'} (allowance 1e-3)")
        return 0 if ok else 2
    if args.which == "mlimit":
        cfg = _experiment_base(args.nx, args.steps)
        m_list = [float(tok) for tok in args.m.split(",")]
        records = m_limit_experiment(cfg, m_list)
        lines = ["m,density_distance,pressure_distance,max_excess"]
        for rec in records:
            lines.append(f"{rec.m},{rec.density_distance:.6e},"
                         f"{rec.pressure_distance:.6e},{rec.max_excess:.6e}")
        print("\n".join(lines))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "mlimit.csv")
            with open(path, "w") as fh:
                fh.write("\n".join(lines) + "\n")
            print(f"wrote {path}")
        dists = [rec.density_distance for rec in records]
        ok = all(a > b for a, b in zip(dists, dists[1:]))
        print(f"m-limit: distances {'strictly decreasing' if ok else 'NOT decreasing'} "
              f"-> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 2
    if args.which == "heat":
        grid = build_grid(args.nx, args.nx, (-0.5, 0.5, -0.5, 0.5))
        res = heat_moment_check(args.eps, args.steps, args.h, grid)
        rel = abs(res.rate - res.expected) / res.expected if res.expected else float("nan")
        ok = rel <= 0.05 and not res.flagged
        print(f"heat rate: fitted {res.rate:.6e}, expected {res.expected:.6e}, "
              f"relative error {rel:.3%}, boundary flag {res.flagged} "
              f"-> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 2
    raise ConfigError(f"unknown experiment {args.which!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdjko",
        description="Two-species congestion crowd-motion solver (JKO time stepping)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a simulation and write snapshots")
    run_p.add_argument("--preset", choices=PRESET_NAMES, help="figure preset to start from")
    run_p.add_argument("--config", help="key-value config file")
    run_p.add_argument("--nx", type=int, help="cells in x")
    run_p.add_argument("--ny", type=int, help="cells in y")
    run_p.add_argument("--domain", help="'XMIN XMAX YMIN YMAX'")
    run_p.add_argument("--h", type=float, help="outer time step")
    run_p.add_argument("--steps", type=int, help="number of JKO steps")
    run_p.add_argument("--eps", type=float, help="entropy weight")
    run_p.add_argument("--mode", choices=("porous", "hard"), help="congestion mode")
    run_p.add_argument("--m", type=float, help="porous-medium exponent")
    run_p.add_argument("--alpha1", type=float, help="weight of species 1")
    run_p.add_argument("--alpha2", type=float, help="weight of species 2")
    run_p.add_argument("--v1", help="potential 1 descriptor, e.g. 'quadratic 4 0.3 0.3'")
    run_p.add_argument("--v2", help="potential 2 descriptor")
    run_p.add_argument("--rho1", help="initial density 1 descriptor, e.g. 'rect -0.45 -0.15 -0.45 -0.15'")
    run_p.add_argument("--rho2", help="initial density 2 descriptor")
    run_p.add_argument("--r", type=float, help="augmentation parameter")
    run_p.add_argument("--nt", type=int, help="inner time sub-intervals")
    run_p.add_argument("--tol", type=float, help="primal/dual stopping tolerance")
    run_p.add_argument("--max-iters", dest="max_iters", type=int, help="inner iteration cap")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--stride", type=int, help="snapshot stride")
    run_p.add_argument("--vmax", type=float, help="heatmap white level")
    run_p.set_defaults(func=_cmd_run)

    oracle_p = sub.add_parser("oracle", help="run the independent verification suites")
    oracle_p.add_argument("which", choices=("prox", "projk", "jko", "transport"))
    oracle_p.add_argument("--n", type=int, default=1000, help="number of random instances")
    oracle_p.add_argument("--seed", type=int, default=0)
    oracle_p.add_argument("--nx", type=int, default=8, help="grid size for the jko suite")
    oracle_p.add_argument("--nt", type=int, default=4, help="time sub-intervals for the jko suite")
    oracle_p.add_argument("--max-iters", dest="max_iters", type=int, default=20000,
                          help="reference-solver iteration cap")
    oracle_p.set_defaults(func=_cmd_oracle)

    exp_p = sub.add_parser("experiment", help="theorem-level experiments")
    exp_p.add_argument("which", choices=("l1", "mlimit", "heat"))
    exp_p.add_argument("--nx", type=int, default=32)
    exp_p.add_argument("--steps", type=int, default=20)
    exp_p.add_argument("--h", type=float, default=0.005, help="time step (heat experiment)")
    exp_p.add_argument("--eps", type=float, default=0.01, help="diffusivity (heat experiment)")
    exp_p.add_argument("--m", default="10,50,200", help="comma list of exponents (mlimit)")
    exp_p.add_argument("--out", help="output directory for experiment tables")
    exp_p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage problems are configuration errors (exit code 1)
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
