"""Outer simulation loop, per-step diagnostics, and theorem-level experiments.

A run applies the saddle-point JKO step repeatedly, warm-starting each step
from the previous one's converged variables, and records per-step diagnostics:
masses, energy, the dynamic transport cost, constraint violation and
complementarity, the running sup of the total density, and the gradient norms
of sqrt(rho_i) and of the congestion power of the sum (the quantities the
a-priori estimates control).

The experiments compare trajectories across runs: the L1 distance between two
solutions started from different data under a common drift, and the
porous-medium runs against the hard-constraint run as the congestion exponent
grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .alg2 import Alg2Config, Alg2State, JkoStepStats, jko_step
from .energy import (
    Congestion,
    DensityPair,
    EnergySpec,
    PorousMedium,
    eval_energy,
    f_m_prime,
)
from .grids import Grid2D


@dataclass
class SimulationConfig:
    """Everything needed to reproduce one run."""

    grid: Grid2D
    h: float
    steps: int
    energy: EnergySpec
    alg2: Alg2Config = field(default_factory=Alg2Config)
    rho1_init: np.ndarray = None
    rho2_init: np.ndarray = None
    out_dir: Optional[str] = None
    stride: int = 1
    vmax: float = 1.0

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError("time step h must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.stride < 1:
            raise ValueError("snapshot stride must be >= 1")

    def initial_pair(self) -> DensityPair:
        return DensityPair.from_fields(
            self.grid, np.array(self.rho1_init, dtype=float), np.array(self.rho2_init, dtype=float)
        )


@dataclass
class DiagnosticsRecord:
    step: int
    time: float
    mass1: float
    mass2: float
    energy: float
    dynamic_cost: float
    max_violation: float
    complementarity: float
    sup_sum: float
    grad_sqrt1: float
    grad_sqrt2: float
    grad_msum: float
    converged: bool

    COLUMNS = (
        "step,time,mass1,mass2,energy,dynamic_cost,max_violation,"
        "complementarity,sup_sum,grad_sqrt1,grad_sqrt2,grad_msum,converged"
    )

    def as_row(self) -> str:
        vals = [
            str(self.step),
            *(f"{v:.11e}" for v in (
                self.time, self.mass1, self.mass2, self.energy, self.dynamic_cost,
                self.max_violation, self.complementarity, self.sup_sum,
                self.grad_sqrt1, self.grad_sqrt2, self.grad_msum,
            )),
            "1" if self.converged else "0",
        ]
        return ",".join(vals)


@dataclass
class Snapshot:
    step: int
    time: float
    rho: DensityPair
    pressure: np.ndarray


@dataclass
class SimulationResult:
    snapshots: list[Snapshot]
    diagnostics: list[DiagnosticsRecord]
    final_rho: DensityPair
    final_state: Alg2State
    trajectory: list[DensityPair]
    pressures: list[np.ndarray]


def _grad_sq_norm(grid: Grid2D, values: np.ndarray) -> float:
    gx, gy = grid.gradient(values)
    return float((np.sum(gx * gx) + np.sum(gy * gy)) * grid.cell_area)


def compute_diagnostics(
    rho: DensityPair,
    pressure: np.ndarray,
    prev: DensityPair,
    stats: JkoStepStats,
    spec: EnergySpec,
    step: int = 0,
    time: float = 0.0,
) -> DiagnosticsRecord:
    """Evaluate every monitored quantity from the step output alone."""
    grid = rho.grid
    z = rho.weighted_sum(spec)
    energy_val, _ = eval_energy(rho, spec)
    if spec.congestion.is_hard:
        grad_msum = float("nan")
    else:
        m = spec.congestion.m
        power = np.power(np.maximum(rho.rho1 + rho.rho2, 0.0), m / 2.0)
        grad_msum = _grad_sq_norm(grid, power) / m
    return DiagnosticsRecord(
        step=step,
        time=time,
        mass1=grid.integrate(rho.rho1),
        mass2=grid.integrate(rho.rho2),
        energy=energy_val,
        dynamic_cost=stats.dynamic_cost,
        max_violation=float(np.max(np.maximum(z - 1.0, 0.0))),
        complementarity=grid.integrate(pressure * (1.0 - z)),
        sup_sum=float(np.max(rho.rho1 + rho.rho2)),
        grad_sqrt1=_grad_sq_norm(grid, np.sqrt(np.maximum(rho.rho1, 0.0))),
        grad_sqrt2=_grad_sq_norm(grid, np.sqrt(np.maximum(rho.rho2, 0.0))),
        grad_msum=grad_msum,
        converged=stats.converged,
    )


def run_simulation(
    cfg: SimulationConfig,
    initial_state: Optional[Alg2State] = None,
    initial_rho: Optional[DensityPair] = None,
) -> SimulationResult:
    """Apply the JKO step ``cfg.steps`` times and collect the trajectory.

    Non-converged steps are recorded with their flag and the run continues.
    Passing the ``final_rho`` and ``final_state`` of a previous run makes
    chained runs bit-identical to one longer run.
    """
    rho = initial_rho if initial_rho is not None else cfg.initial_pair()
    state = initial_state
    zeros = cfg.grid.zeros()
    snapshots = [Snapshot(0, 0.0, rho.copy(), zeros.copy())]
    trajectory = [rho.copy()]
    pressures = [zeros.copy()]
    diagnostics: list[DiagnosticsRecord] = []
    for k in range(1, cfg.steps + 1):
        prev = rho
        rho, pressure, stats, state = jko_step(rho, cfg.h, cfg.energy, cfg.alg2, state)
        diagnostics.append(
            compute_diagnostics(rho, pressure, prev, stats, cfg.energy, k, k * cfg.h)
        )
        trajectory.append(rho.copy())
        pressures.append(pressure.copy())
        if k % cfg.stride == 0 or k == cfg.steps:
            snapshots.append(Snapshot(k, k * cfg.h, rho.copy(), pressure.copy()))
    return SimulationResult(snapshots, diagnostics, rho, state, trajectory, pressures)


def _require_common_drift(spec: EnergySpec, grid: Grid2D) -> None:
    g1 = grid.cell_gradient(spec.v1)
    g2 = grid.cell_gradient(spec.v2)
    scale = 1.0 + max(float(np.max(np.abs(g1[0]))), float(np.max(np.abs(g1[1]))))
    diff = max(float(np.max(np.abs(g1[0] - g2[0]))), float(np.max(np.abs(g1[1] - g2[1]))))
    if diff > 1e-9 * scale:
        raise ValueError(
            "experiment requires a common drift: the two potentials must have "
            f"equal gradients (max mismatch {diff:.3e})"
        )


@dataclass
class L1ContractionResult:
    times: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def l1_contraction_experiment(
    cfg: SimulationConfig, rho1_b: np.ndarray, rho2_b: np.ndarray
) -> L1ContractionResult:
    """Run two initial conditions under identical config; L1 gaps per step."""
    grid = cfg.grid
    _require_common_drift(cfg.energy, grid)
    for mine, other, name in (
        (cfg.rho1_init, rho1_b, "species 1"),
        (cfg.rho2_init, rho2_b, "species 2"),
    ):
        ma, mb = grid.integrate(np.asarray(mine)), grid.integrate(np.asarray(other))
        if abs(ma - mb) > 1e-9 * (1.0 + abs(ma)):
            raise ValueError(f"{name} masses differ between the two runs: {ma} vs {mb}")
    run_a = run_simulation(cfg)
    cfg_b = replace(cfg, rho1_init=rho1_b, rho2_init=rho2_b)
    run_b = run_simulation(cfg_b)
    steps = cfg.steps
    d1 = np.empty(steps + 1)
    d2 = np.empty(steps + 1)
    for k in range(steps + 1):
        a, b = run_a.trajectory[k], run_b.trajectory[k]
        d1[k] = grid.integrate(np.abs(a.rho1 - b.rho1))
        d2[k] = grid.integrate(np.abs(a.rho2 - b.rho2))
    times = np.arange(steps + 1) * cfg.h
    return L1ContractionResult(times, d1, d2)


@dataclass
class MLimitRecord:
    m: float
    density_distance: float
    pressure_distance: float
    max_excess: float


def m_limit_experiment(cfg_hard: SimulationConfig, m_list) -> list[MLimitRecord]:
    """Porous-medium runs against the hard-congestion run, per exponent.

    Returns, for each m, the sup over steps of the L2 distance of the density
    pairs to the hard run, the same for the pressures, and the largest
    pointwise excess of the weighted sum over capacity.
    """
    if not cfg_hard.energy.congestion.is_hard:
        raise ValueError("the reference configuration must use hard congestion")
    grid = cfg_hard.grid
    _require_common_drift(cfg_hard.energy, grid)
    ref = run_simulation(cfg_hard)
    records = []
    for m in m_list:
        if np.isinf(m):
            run = ref
        else:
            soft_spec = replace(cfg_hard.energy, congestion=PorousMedium(float(m)))
            run = run_simulation(replace(cfg_hard, energy=soft_spec))
        d_max = 0.0
        p_max = 0.0
        excess = 0.0
        for k in range(1, cfg_hard.steps + 1):
            a, b = run.trajectory[k], ref.trajectory[k]
            d2 = grid.integrate((a.rho1 - b.rho1) ** 2) + grid.integrate((a.rho2 - b.rho2) ** 2)
            d_max = max(d_max, float(np.sqrt(d2)))
            p2 = grid.integrate((run.pressures[k] - ref.pressures[k]) ** 2)
            p_max = max(p_max, float(np.sqrt(p2)))
            z = cfg_hard.energy.alpha1 * a.rho1 + cfg_hard.energy.alpha2 * a.rho2
            excess = max(excess, float(np.max(z - 1.0)))
        records.append(MLimitRecord(float(m), d_max, p_max, max(excess, 0.0)))
    return records
