"""One JKO step as an augmented-Lagrangian saddle-point iteration.

The step minimizes ``sum_i W2^2(rho_i, rho_i^k)/2 + h E(rho_1, rho_2)`` in the
dynamic formulation on the unit-rescaled interval: potentials ``phi_i`` live on
nt+1 time slices, the split derivative variables ``q_i = (a_i, b_i)`` and their
multipliers ``(mu_i, m_i)`` at the nt midpoints, and the terminal pair
``c_i`` / ``mutilde_i`` on the final slice.  Each sweep performs

    1. phi-step: a symmetric positive definite space-time solve per species,
       done by conjugate gradients with an exact spectral preconditioner
       (the operator is diagonalized per spatial DCT-II mode, leaving small
       independent time systems that are factorized once per run);
    2. projection of ``D phi + (mu, m)/r`` onto the paraboloid
       K = {a + |b|^2/2 <= 0} at every collocation point;
    3. terminal update: a pointwise prox of the coupled energy through the
       Moreau identity, which also yields the congestion pressure;
    4. dual ascent.

At the fixed point ``mutilde_i`` is the new density and the cached prox
multiplier field is the discrete pressure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.fft import dctn, idctn

from .energy import DensityPair, EnergySpec, SolverError, eval_energy, prox_density_arrays
from .grids import SpaceTimeGrid, SpaceTimeVector, spacetime_D, spacetime_D_adjoint


@dataclass
class Alg2Config:
    """Penalty, iteration and tolerance settings for one JKO step."""

    r: float = 1.0
    max_iters: int = 2000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    nt: int = 10
    cg_tol: float = 1e-8
    cg_max: int = 500

    def __post_init__(self) -> None:
        if min(self.r, self.max_iters, self.tol_primal, self.tol_dual,
               self.nt, self.cg_tol, self.cg_max) <= 0:
            raise ValueError("all solver settings must be positive")


@dataclass
class JkoStepStats:
    """Per-step solve report."""

    iterations: int
    primal_residual: float
    dual_residual: float
    dynamic_cost: float
    objective: float
    converged: bool
    mass_rescale: tuple[float, float]
    phi_cg_iterations: int = 0


class PhiSolver:
    """Spectral factorization of the phi-step operator.

    The operator ``r (D_adj D + terminal mass)`` is block-diagonal over
    spatial DCT-II modes because the mirror-ghost centered gradient is exactly
    diagonalized by that basis; per mode only a small (nt+1)^2 time matrix
    remains, inverted once at construction.
    """

    def __init__(self, stg: SpaceTimeGrid, r: float):
        self.stg = stg
        self.r = r
        grid = stg.base
        nt, dt = stg.nt, stg.dt
        n = nt + 1
        diff = np.zeros((nt, n))
        avg = np.zeros((nt, n))
        rows = np.arange(nt)
        diff[rows, rows] = -1.0 / dt
        diff[rows, rows + 1] = 1.0 / dt
        avg[rows, rows] = 0.5
        avg[rows, rows + 1] = 0.5
        k_time = diff.T @ diff * dt
        m_avg = avg.T @ avg * dt
        terminal = np.zeros((n, n))
        terminal[nt, nt] = 1.0
        lam_x = np.sin(np.pi * np.arange(grid.nx) / grid.nx) ** 2 / grid.dx**2
        lam_y = np.sin(np.pi * np.arange(grid.ny) / grid.ny) ** 2 / grid.dy**2
        lam = lam_y[:, None] + lam_x[None, :]
        blocks = r * (k_time + terminal)[None, None, :, :] + (r * lam)[:, :, None, None] * m_avg
        self._inv = np.linalg.inv(blocks)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Matrix-free operator: r (D_adj D phi + phi(1) on the last slice)."""
        out = spacetime_D_adjoint(self.stg, spacetime_D(self.stg, phi))
        out[..., -1, :, :] += phi[..., -1, :, :]
        return self.r * out

    def solve_exact(self, b: np.ndarray) -> np.ndarray:
        bhat = dctn(b, type=2, norm="ortho", axes=(-2, -1))
        xhat = np.einsum("yxlm,...myx->...lyx", self._inv, bhat)
        return idctn(xhat, type=2, norm="ortho", axes=(-2, -1))


def _pcg(solver: PhiSolver, b: np.ndarray, tol: float, maxiter: int):
    """Preconditioned CG on the phi-step system.

    The spectral preconditioner is the exact inverse up to rounding, so the
    first preconditioner application normally lands within tolerance and CG
    only polishes when it does not; the residual contract is still verified
    on every solve.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    x = solver.solve_exact(b)
    res = b - solver.apply(x)
    iters = 0
    if np.linalg.norm(res) > tol * bnorm:
        z = solver.solve_exact(res)
        p = z
        rz = float(np.vdot(res, z))
        for it in range(maxiter):
            ap = solver.apply(p)
            alpha = rz / float(np.vdot(p, ap))
            x = x + alpha * p
            res = res - alpha * ap
            iters = it + 1
            if np.linalg.norm(res) <= tol * bnorm:
                break
            z = solver.solve_exact(res)
            rz_new = float(np.vdot(res, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        final = float(np.linalg.norm(b - solver.apply(x)))
        if final > tol * bnorm:
            raise SolverError("phi-step CG did not reach its tolerance", final / bnorm)
    return x, iters


@dataclass
class Alg2State:
    """All saddle-point variables of one JKO step, species-stacked.

    Shapes: ``phi`` is (2, nt+1, ny, nx); ``qt, qx, qy`` and the duals
    ``mu, mx, my`` are (2, nt, ny, nx); ``c`` and ``mutilde`` are (2, ny, nx).
    """

    stg: SpaceTimeGrid
    r: float
    cg_tol: float
    cg_max: float
    phi: np.ndarray
    qt: np.ndarray
    qx: np.ndarray
    qy: np.ndarray
    c: np.ndarray
    mu: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mutilde: np.ndarray
    prox_rho: np.ndarray
    prox_p: np.ndarray
    prox_warm: object = None
    solver: Optional[PhiSolver] = None
    cg_iterations: int = 0

    @classmethod
    def cold_start(cls, rho_prev: DensityPair, stg: SpaceTimeGrid, cfg: Alg2Config) -> "Alg2State":
        ny, nx = stg.base.shape
        nt = stg.nt
        rho0 = np.stack([rho_prev.rho1, rho_prev.rho2])
        return cls(
            stg=stg,
            r=cfg.r,
            cg_tol=cfg.cg_tol,
            cg_max=cfg.cg_max,
            phi=np.zeros((2, nt + 1, ny, nx)),
            qt=np.zeros((2, nt, ny, nx)),
            qx=np.zeros((2, nt, ny, nx)),
            qy=np.zeros((2, nt, ny, nx)),
            c=np.zeros((2, ny, nx)),
            mu=np.repeat(rho0[:, None, :, :], nt, axis=1),
            mx=np.zeros((2, nt, ny, nx)),
            my=np.zeros((2, nt, ny, nx)),
            mutilde=rho0.copy(),
            prox_rho=rho0.copy(),
            prox_p=np.zeros((ny, nx)),
            solver=PhiSolver(stg, cfg.r),
        )


def step_phi(state: Alg2State, rho_prev: DensityPair) -> np.ndarray:
    """Minimize the augmented Lagrangian over phi (species batched)."""
    if state.solver is None:
        state.solver = PhiSolver(state.stg, state.r)
    stg = state.stg
    r = state.r
    rho0 = np.stack([rho_prev.rho1, rho_prev.rho2])
    sigma = SpaceTimeVector(
        r * state.qt - state.mu, r * state.qx - state.mx, r * state.qy - state.my
    )
    b = spacetime_D_adjoint(stg, sigma)
    b[:, 0] -= rho0
    b[:, -1] += state.mutilde - r * state.c
    state.phi, state.cg_iterations = _pcg(state.solver, b, state.cg_tol, int(state.cg_max))
    return state.phi


def project_K(abar, bbar):
    """Euclidean projection onto K = {(a, b): a + |b|^2/2 <= 0}.

    ``abar`` is the time component, ``bbar`` a pair of space components;
    arrays of any matching shape are handled pointwise.
    """
    bx, by = bbar
    abar = np.asarray(abar, dtype=np.float64)
    bx = np.asarray(bx, dtype=np.float64)
    by = np.asarray(by, dtype=np.float64)
    a_out = np.array(np.broadcast_to(abar, np.broadcast_shapes(abar.shape, bx.shape, by.shape)))
    bx_out = np.array(np.broadcast_to(bx, a_out.shape))
    by_out = np.array(np.broadcast_to(by, a_out.shape))
    bsq = bx_out * bx_out + by_out * by_out
    infeasible = a_out + 0.5 * bsq > 0.0
    if np.any(infeasible):
        # root of (abar - t) + |b|^2 / (2 (1+t)^2) = 0; convex and decreasing
        # in t, so Newton from 0 increases monotonically to the root
        av = a_out[infeasible]
        bv = bsq[infeasible]
        t = np.zeros_like(av)
        for _ in range(100):
            opt = 1.0 + t
            g = av - t + bv / (2.0 * opt * opt)
            if np.max(np.abs(g)) <= 1e-13:
                break
            dg = -1.0 - bv / (opt * opt * opt)
            t = t - g / dg
        a_out[infeasible] = av - t
        bx_out[infeasible] /= 1.0 + t
        by_out[infeasible] /= 1.0 + t
    return a_out, (bx_out, by_out)


def _project_q(state: Alg2State, d: SpaceTimeVector) -> None:
    r = state.r
    a, (bx, by) = project_K(d.t + state.mu / r, (d.x + state.mx / r, d.y + state.my / r))
    state.qt, state.qx, state.qy = a, bx, by


def update_terminal(state: Alg2State, h: float, spec: EnergySpec) -> np.ndarray:
    """Minimize over the terminal variables c via the Moreau identity.

    With y = (mutilde/r - phi(1))/h the minimizer is
    c = h y - prox(rh y)/r where the prox of the pointwise energy runs at
    scale lam = r h on s = r h y = mutilde - r phi(1); the prox densities and
    multipliers are cached: they are the new-density and pressure candidates.
    """
    r = state.r
    s = state.mutilde - r * state.phi[:, -1]
    rho1, rho2, p, warm, _, _ = prox_density_arrays(
        s[0],
        s[1],
        r * h,
        spec.v1,
        spec.v2,
        spec.eps,
        spec.congestion,
        spec.alphas,
        warm=state.prox_warm,
    )
    state.prox_warm = warm
    state.prox_rho = np.stack([rho1, rho2])
    state.prox_p = np.asarray(p)
    state.c = (s - state.prox_rho) / r
    return state.c


def update_duals(state: Alg2State, d: Optional[SpaceTimeVector] = None) -> None:
    """Ascent step on all multipliers at penalty rate r."""
    if d is None:
        d = spacetime_D(state.stg, state.phi)
    r = state.r
    state.mu += r * (d.t - state.qt)
    state.mx += r * (d.x - state.qx)
    state.my += r * (d.y - state.qy)
    state.mutilde = state.mutilde - r * (state.phi[:, -1] + state.c)


def residuals(
    state: Alg2State,
    prev_q=None,
    masses: tuple[float, float] = (1.0, 1.0),
    d: Optional[SpaceTimeVector] = None,
):
    """Mass-normalized primal and dual residuals.

    primal: || D phi - q || + || phi(1) + c ||; dual: r times the change of
    (a, b, c) since the previous sweep (0.0 when no snapshot is given).
    """
    stg = state.stg
    w_col = stg.dt * stg.base.cell_area
    w_cell = stg.base.cell_area
    scale = masses[0] + masses[1]
    if d is None:
        d = spacetime_D(stg, state.phi)
    gap = (
        np.sum((d.t - state.qt) ** 2) + np.sum((d.x - state.qx) ** 2) + np.sum((d.y - state.qy) ** 2)
    )
    primal = np.sqrt(w_col * gap) + np.sqrt(w_cell * np.sum((state.phi[:, -1] + state.c) ** 2))
    dual = 0.0
    if prev_q is not None:
        qt0, qx0, qy0, c0 = prev_q
        move = (
            np.sum((state.qt - qt0) ** 2)
            + np.sum((state.qx - qx0) ** 2)
            + np.sum((state.qy - qy0) ** 2)
        )
        dual = state.r * (
            np.sqrt(w_col * move) + np.sqrt(w_cell * np.sum((state.c - c0) ** 2))
        )
    return float(primal / scale), float(dual / scale)


def dynamic_cost(state: Alg2State) -> float:
    """Kinetic part sum_i int int |m_i|^2/(2 mu_i), the W2^2/2 of the step."""
    w_col = state.stg.dt * state.stg.base.cell_area
    msq = state.mx**2 + state.my**2
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(state.mu > 1e-14, msq / (2.0 * state.mu), 0.0)
    return float(w_col * np.sum(dens))


def _validate_hard_masses(rho_prev: DensityPair, spec: EnergySpec) -> None:
    capacity = rho_prev.grid.area
    need = spec.alpha1 * rho_prev.mass1 + spec.alpha2 * rho_prev.mass2
    if need > capacity * (1.0 + 1e-9):
        raise ValueError(
            f"hard congestion cannot hold the masses: alpha.m = {need:.6g} "
            f"> |domain| = {capacity:.6g}"
        )


def jko_step(
    rho_prev: DensityPair,
    h: float,
    spec: EnergySpec,
    cfg: Alg2Config,
    state: Optional[Alg2State] = None,
) -> tuple[DensityPair, np.ndarray, JkoStepStats, Alg2State]:
    """Advance the density pair by one JKO step of size h.

    A ``state`` from a previous step warm-starts the iteration (it is updated
    in place and returned); otherwise a cold state is created.  On hitting the
    iteration cap the best iterate is returned with ``converged=False``.
    """
    if h <= 0:
        raise ValueError("time step h must be positive")
    if spec.congestion.is_hard:
        _validate_hard_masses(rho_prev, spec)
    grid = rho_prev.grid
    if state is None:
        stg = SpaceTimeGrid(grid, cfg.nt)
        state = Alg2State.cold_start(rho_prev, stg, cfg)
    masses = (rho_prev.mass1, rho_prev.mass2)

    primal = dual = float("inf")
    iters = 0
    cg_total = 0
    for it in range(cfg.max_iters):
        iters = it + 1
        prev_q = (state.qt, state.qx, state.qy, state.c)
        step_phi(state, rho_prev)
        cg_total += state.cg_iterations
        d = spacetime_D(state.stg, state.phi)
        _project_q(state, d)
        update_terminal(state, h, spec)
        update_duals(state, d)
        primal, dual = residuals(state, prev_q, masses, d)
        if primal < cfg.tol_primal and dual < cfg.tol_dual:
            break
    converged = primal < cfg.tol_primal and dual < cfg.tol_dual

    # the last dual update makes mutilde equal the cached prox output, so it
    # is nonnegative and hard-feasible up to the prox tolerance by build
    raw = state.mutilde
    clipped = np.where(raw < 0.0, 0.0, raw)
    rescale = []
    out = []
    for i, mass in enumerate(masses):
        total = grid.integrate(clipped[i])
        factor = mass / total if total > 0 else 1.0
        rescale.append(abs(factor - 1.0))
        out.append(clipped[i] * factor)
    new_rho = DensityPair(grid, out[0], out[1], masses[0], masses[1])
    pressure = state.prox_p.copy()

    dyn = dynamic_cost(state)
    energy_val, _ = eval_energy(new_rho, spec)
    stats = JkoStepStats(
        iterations=iters,
        primal_residual=primal,
        dual_residual=dual,
        dynamic_cost=dyn,
        objective=dyn + h * energy_val,
        converged=converged,
        mass_rescale=(rescale[0], rescale[1]),
        phi_cg_iterations=cg_total,
    )
    return new_rho, pressure, stats, state
