"""Independent reference solvers used to validate the main numerics.

Nothing here calls the solver it checks: the pointwise prox is validated by
refined grid search over the density square, the paraboloid projection by
dense sampling of its one-parameter optimality curve, a whole JKO step by a
generic primal-dual (PDHG) iteration whose only nonlinear ingredients are
those brute searches, and the dynamic transport cost by an exact
transportation linear program on tiny measures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import xlogy

from .alg2 import Alg2Config
from .energy import Congestion, DensityPair, EnergySpec, PorousMedium, eval_energy
from .grids import Grid2D, SpaceTimeGrid, spacetime_D
from .simulate import SimulationConfig, run_simulation


def _fm_value(z: np.ndarray, m: float) -> np.ndarray:
    if m == 1.0:
        return xlogy(z, z)
    with np.errstate(over="ignore"):
        return np.power(z, m) / (m - 1.0)


def _point_objective(r1, r2, s1, s2, lam, v1, v2, eps, congestion: Congestion, a1, a2):
    val = v1 * r1 + v2 * r2 + ((r1 - s1) ** 2 + (r2 - s2) ** 2) / (2.0 * lam)
    if eps > 0:
        val = val + eps * (xlogy(r1, r1) + xlogy(r2, r2))
    z = a1 * r1 + a2 * r2
    if congestion.is_hard:
        val = np.where(z <= 1.0 + 1e-12, val, np.inf)
    else:
        val = val + _fm_value(z, congestion.m)
    return val


def brute_prox_batch(
    s1,
    s2,
    lam: float,
    v1,
    v2,
    eps: float,
    congestion: Congestion,
    alpha=(1.0, 1.0),
    grid_n: int = 400,
    refinements: int = 2,
    refine_n: int = 21,
):
    """Grid-search prox over batches of cells (shared outer search box)."""
    a1, a2 = float(alpha[0]), float(alpha[1])
    s1 = np.atleast_1d(np.asarray(s1, dtype=float))
    s2 = np.atleast_1d(np.asarray(s2, dtype=float))
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), s1.shape)
    v2 = np.broadcast_to(np.asarray(v2, dtype=float), s2.shape)
    rmax = max(2.0, 2.0 * float(max(np.max(s1), np.max(s2), 0.0)))
    rmax1, rmax2 = rmax, rmax
    if congestion.is_hard:
        rmax1 = min(rmax1, 1.0 / a1)
        rmax2 = min(rmax2, 1.0 / a2)
    g1 = np.linspace(0.0, rmax1, grid_n)
    g2 = np.linspace(0.0, rmax2, grid_n)
    cells = s1.shape[0]

    def evaluate(r1, r2):
        return _point_objective(
            r1, r2, s1[:, None, None], s2[:, None, None], lam,
            v1[:, None, None], v2[:, None, None], eps, congestion, a1, a2,
        )

    with np.errstate(over="ignore", invalid="ignore"):
        val = evaluate(g1[None, :, None], g2[None, None, :])
    flat = np.argmin(val.reshape(cells, -1), axis=1)
    i1, i2 = np.unravel_index(flat, (grid_n, grid_n))
    b1, b2 = g1[i1], g2[i2]
    step1 = g1[1] - g1[0]
    step2 = g2[1] - g2[0]
    offsets = np.linspace(-1.0, 1.0, refine_n)
    for _ in range(refinements):
        w1 = np.clip(b1[:, None] + step1 * offsets[None, :], 0.0, rmax1)
        w2 = np.clip(b2[:, None] + step2 * offsets[None, :], 0.0, rmax2)
        with np.errstate(over="ignore", invalid="ignore"):
            val = evaluate(w1[:, :, None], w2[:, None, :])
        flat = np.argmin(val.reshape(cells, -1), axis=1)
        i1, i2 = np.unravel_index(flat, (refine_n, refine_n))
        b1 = w1[np.arange(cells), i1]
        b2 = w2[np.arange(cells), i2]
        step1 *= 2.0 / (refine_n - 1)
        step2 *= 2.0 / (refine_n - 1)
    return b1, b2


def brute_prox(
    s1: float,
    s2: float,
    lam: float,
    v1: float = 0.0,
    v2: float = 0.0,
    eps: float = 0.0,
    congestion: Congestion = PorousMedium(2.0),
    alpha=(1.0, 1.0),
) -> tuple[float, float]:
    """Exhaustive-search minimizer of the pointwise prox objective."""
    r1, r2 = brute_prox_batch(
        np.array([s1]), np.array([s2]), lam, np.array([v1]), np.array([v2]),
        eps, congestion, alpha,
    )
    return float(r1[0]), float(r2[0])


def brute_projK_batch(abar, bx, by, samples: int = 2048, refinements: int = 2):
    """Sampled projection onto {a + |b|^2/2 <= 0} for batches of points.

    The constraint gap along the optimality curve (a - t, b/(1+t)) is strictly
    decreasing in t and the distance to the input is increasing, so the
    projection is the first feasible sample; refinement passes shrink the
    sampling interval around it.
    """
    abar = np.atleast_1d(np.asarray(abar, dtype=float))
    bx = np.atleast_1d(np.asarray(bx, dtype=float))
    by = np.atleast_1d(np.asarray(by, dtype=float))
    bsq = bx * bx + by * by
    feasible = abar + 0.5 * bsq <= 0.0
    # beyond t = a + |b|^2/2 the curve is certainly feasible, so the search
    # interval always brackets the constrained stretch
    tmax = np.maximum(10.0 * (1.0 + np.abs(abar) + np.sqrt(bsq)), abar + 0.5 * bsq + 1.0)
    lo = np.zeros_like(abar)
    hi = tmax.copy()
    t_best = np.zeros_like(abar)
    for _ in range(refinements + 1):
        ts = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, samples)[None, :]
        opt = 1.0 + ts
        gap = abar[:, None] - ts + bsq[:, None] / (2.0 * opt * opt)
        idx = np.argmax(gap <= 1e-12, axis=1)
        t_best = np.take_along_axis(ts, idx[:, None], axis=1)[:, 0]
        span = (hi - lo) / (samples - 1)
        lo = np.maximum(t_best - span, 0.0)
        hi = np.minimum(t_best + span, tmax)
    t_best = np.where(feasible, 0.0, t_best)
    return abar - t_best, (bx / (1.0 + t_best), by / (1.0 + t_best))


def brute_projK(abar: float, bbar, samples: int = 10**6) -> tuple[float, tuple[float, float]]:
    """Dense-search projection of one point onto the paraboloid set.

    Scans ``samples`` evenly spaced candidates over [0, t_max] in chunks
    (early-exiting once the monotone constraint gap turns feasible, which
    selects the same sample as the full scan) and then refines locally.
    """
    a = float(abar)
    x, y = float(bbar[0]), float(bbar[1])
    bsq = x * x + y * y
    if a + 0.5 * bsq <= 0.0:
        return a, (x, y)
    tmax = max(10.0 * (1.0 + abs(a) + np.sqrt(bsq)), a + 0.5 * bsq + 1.0)
    grid = np.linspace(0.0, tmax, samples)
    chunk = max(samples // 64, 1)
    t_best = tmax
    for start in range(0, samples, chunk):
        ts = grid[start:start + chunk]
        gap = a - ts + bsq / (2.0 * (1.0 + ts) ** 2)
        hit = np.nonzero(gap <= 1e-12)[0]
        if hit.size:
            t_best = float(ts[hit[0]])
            break
    span = tmax / (samples - 1)
    lo, hi = max(t_best - span, 0.0), t_best
    for _ in range(2):
        ts = np.linspace(lo, hi, 4097)
        gap = a - ts + bsq / (2.0 * (1.0 + ts) ** 2)
        hit = np.nonzero(gap <= 1e-12)[0]
        t_best = float(ts[hit[0]]) if hit.size else hi
        span = (hi - lo) / 4096
        lo, hi = max(t_best - span, 0.0), t_best
    return a - t_best, (x / (1.0 + t_best), y / (1.0 + t_best))


# -- reference JKO step via PDHG -----------------------------------------------


@dataclass
class ReferenceStepResult:
    rho1: np.ndarray
    rho2: np.ndarray
    objective: float
    residual: float
    flagged: bool
    iterations: int


def _operator_matrix(stg: SpaceTimeGrid) -> sp.csr_matrix:
    """Sparse matrix of (D, terminal trace) built column by column."""
    nt = stg.nt
    ny, nx = stg.base.shape
    ncols = (nt + 1) * ny * nx
    nrows = 3 * nt * ny * nx + ny * nx
    cols = []
    basis = np.zeros((nt + 1, ny, nx))
    for j in range(ncols):
        basis.flat[j] = 1.0
        d = spacetime_D(stg, basis)
        col = np.concatenate([d.t.ravel(), d.x.ravel(), d.y.ravel(), basis[-1].ravel()])
        cols.append(sp.csc_matrix(col.reshape(-1, 1)))
        basis.flat[j] = 0.0
    mat = sp.hstack(cols, format="csr")
    assert mat.shape == (nrows, ncols)
    return mat


def primal_dual_reference_step(
    rho_prev: DensityPair,
    h: float,
    spec: EnergySpec,
    grid: Grid2D,
    nt: int,
    max_iters: int = 10**5,
    tol: float = 1e-5,
    prox_grid: int = 48,
    prox_refinements: int = 3,
    proj_samples: int = 256,
) -> ReferenceStepResult:
    """One JKO step by PDHG on the same discrete functional.

    The kinetic dual uses the sampled paraboloid projection, the terminal dual
    the grid-search prox (through the Moreau identity), so no Newton kernel of
    the main solver is involved.  Intended for small grids only.
    """
    if grid.nx > 16 or grid.ny > 16 or nt > 8:
        raise ValueError("reference solver is restricted to grids <= 16x16, nt <= 8")
    stg = SpaceTimeGrid(grid, nt)
    area = grid.cell_area
    ncell = grid.nx * grid.ny
    nk = nt * ncell
    K = _operator_matrix(stg)
    KT = K.T.tocsr()

    # power iteration for the operator norm (deterministic start)
    v = np.ones(K.shape[1])
    for _ in range(100):
        v = KT @ (K @ v)
        v /= np.linalg.norm(v)
    op_norm = float(np.sqrt(np.linalg.norm(KT @ (K @ v))))
    tau = sigma = 0.95 / op_norm

    rho0 = np.stack([rho_prev.rho1.ravel(), rho_prev.rho2.ravel()])
    g_lin = np.zeros((2, K.shape[1]))
    g_lin[:, :ncell] = rho0 * area

    x = np.zeros((2, K.shape[1]))
    xbar = x.copy()
    y = np.zeros((2, K.shape[0]))
    scale = area * (rho_prev.mass1 + rho_prev.mass2)

    iters = 0
    residual = float("inf")
    for it in range(max_iters):
        iters = it + 1
        y_old = y.copy()
        x_old = x.copy()
        arg = y + sigma * np.stack([K @ xbar[0], K @ xbar[1]])
        # kinetic block: Moreau through the paraboloid projection
        for i in (0, 1):
            at = arg[i, :nk] / sigma
            ax = arg[i, nk:2 * nk] / sigma
            ay = arg[i, 2 * nk:3 * nk] / sigma
            pa, (px, py) = brute_projK_batch(at, ax, ay, samples=proj_samples)
            y[i, :nk] = arg[i, :nk] - sigma * pa
            y[i, nk:2 * nk] = arg[i, nk:2 * nk] - sigma * px
            y[i, 2 * nk:3 * nk] = arg[i, 2 * nk:3 * nk] - sigma * py
        # terminal block: joint prox of the coupled energy by grid search
        w1 = arg[0, 3 * nk:]
        w2 = arg[1, 3 * nk:]
        r1, r2 = brute_prox_batch(
            -w1 / area, -w2 / area, sigma * h / area,
            spec.v1.ravel(), spec.v2.ravel(), spec.eps, spec.congestion, spec.alphas,
            grid_n=prox_grid, refinements=prox_refinements,
        )
        y[0, 3 * nk:] = -area * r1
        y[1, 3 * nk:] = -area * r2

        x = x - tau * (g_lin + np.stack([KT @ y[0], KT @ y[1]]))
        xbar = 2.0 * x - x_old
        if it % 50 == 49:
            residual = (
                np.linalg.norm(x - x_old) / tau + np.linalg.norm(y - y_old) / sigma
            ) / (scale / area)
            if residual <= tol:
                break

    mu = y[:, :nk] / (stg.dt * area)
    mom_sq = (y[:, nk:2 * nk] ** 2 + y[:, 2 * nk:3 * nk] ** 2) / (stg.dt * area) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        kin = np.where(mu > 1e-14, mom_sq / (2.0 * mu), 0.0)
    dyn = float(np.sum(kin) * stg.dt * area)
    rho_new1 = np.maximum(-y[0, 3 * nk:] / area, 0.0).reshape(grid.shape)
    rho_new2 = np.maximum(-y[1, 3 * nk:] / area, 0.0).reshape(grid.shape)
    pair = DensityPair(grid, rho_new1, rho_new2, rho_prev.mass1, rho_prev.mass2)
    energy_val, _ = eval_energy(pair, spec)
    objective = dyn + h * energy_val
    return ReferenceStepResult(
        rho_new1, rho_new2, objective, float(residual), residual > tol, iters
    )


# -- exact optimal transport on tiny measures -----------------------------------


@dataclass
class TinyMeasure:
    """Few-point discrete measure used for exact transport checks."""

    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights must have equal length")
        if self.points.shape[0] > 25:
            raise ValueError("tiny measures carry at most 25 support points")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))


def exact_transport_lp(mu: TinyMeasure, nu: TinyMeasure) -> float:
    """Quadratic-cost transport value by solving the dense LP exactly."""
    if abs(mu.mass - nu.mass) > 1e-9 * (1.0 + mu.mass):
        raise ValueError(f"mass mismatch: {mu.mass} vs {nu.mass}")
    n, m = len(mu.weights), len(nu.weights)
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    cost = np.sum(diff * diff, axis=2).ravel()
    rows = []
    rhs = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1.0
        rows.append(row.ravel())
        rhs.append(mu.weights[i])
    for j in range(m):
        row = np.zeros((n, m))
        row[:, j] = 1.0
        rows.append(row.ravel())
        rhs.append(nu.weights[j])
    res = linprog(
        cost,
        A_eq=np.array(rows),
        b_eq=np.array(rhs),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


# -- heat-flow second-moment check ----------------------------------------------


@dataclass
class HeatMomentResult:
    rate: float
    expected: float
    times: np.ndarray
    moments: np.ndarray
    flagged: bool


def heat_moment_check(
    eps: float,
    steps: int,
    h: float,
    grid: Grid2D,
    alg2: Optional[object] = None,
) -> HeatMomentResult:
    """Fit the growth rate of the centered second moment of a free blob.

    With no drift and inactive congestion the flow is plain diffusion at
    strength eps, whose exact moment growth rate is 4 eps mass in 2D; the run
    is flagged if the blob touches the boundary during the fit window.
    """
    X, Y = grid.meshgrid()
    sig = 0.11 * min(grid.xmax - grid.xmin, grid.ymax - grid.ymin)
    cx = 0.5 * (grid.xmin + grid.xmax)
    cy = 0.5 * (grid.ymin + grid.ymax)
    blob = 0.3 * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * sig**2))
    background = np.full(grid.shape, 1e-3 / grid.area)
    spec = EnergySpec(
        np.zeros(grid.shape), np.zeros(grid.shape),
        eps=eps, congestion=PorousMedium(50.0),
    )
    cfg = SimulationConfig(
        grid=grid,
        h=h,
        steps=steps,
        energy=spec,
        alg2=alg2 if alg2 is not None else Alg2Config(r=4.0, max_iters=600),
        rho1_init=blob,
        rho2_init=background,
    )
    result = run_simulation(cfg)
    mass = grid.integrate(blob)
    times = np.arange(steps + 1) * h
    moments = np.empty(steps + 1)
    flagged = False
    peak = float(np.max(blob))
    for k, pair in enumerate(result.trajectory):
        r = pair.rho1
        mean_x = grid.integrate(r * X) / mass
        mean_y = grid.integrate(r * Y) / mass
        moments[k] = grid.integrate(r * ((X - mean_x) ** 2 + (Y - mean_y) ** 2))
        edge = max(
            float(np.max(r[0, :])), float(np.max(r[-1, :])),
            float(np.max(r[:, 0])), float(np.max(r[:, -1])),
        )
        if edge > 1e-3 * peak:
            flagged = True
    rate = float(np.polyfit(times, moments, 1)[0])
    return HeatMomentResult(rate, 4.0 * eps * mass, times, moments, flagged)
