"""Coupled two-species energy and its pointwise proximal operator.

The energy of a density pair is

    E(rho1, rho2) = sum_i int (V_i rho_i + eps rho_i log rho_i)
                    + int F(alpha1 rho1 + alpha2 rho2)

where the congestion term F is either the porous-medium penalty
``F_m(z) = z^m/(m-1)`` (``z log z`` for m = 1) or the hard constraint
``z <= 1``.  The proximal operator of the pointwise integrand, a two-variable
strictly convex minimization with nonnegativity (and, in hard mode, the
capacity constraint), is the scalar kernel of every terminal update of the
saddle-point solver; it is solved by damped Newton schemes chosen per mode and
returns the congestion multiplier, which is the discrete pressure.

All prox kernels are vectorized over arbitrary cell batches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

from .grids import Grid2D

_EXP_CAP = 200.0  # cap on exponents inside z**(m-1) to keep iterates finite
_U_MAX = 60.0  # log-density upper clamp; densities never approach exp(60)


class SolverError(RuntimeError):
    """A nonlinear or linear solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


# -- congestion modes ----------------------------------------------------------


@dataclass(frozen=True)
class Congestion:
    """Common congestion mode: porous-medium penalty or hard cap."""

    kind: str  # "porous" | "hard"
    m: float = float("inf")

    def __post_init__(self) -> None:
        if self.kind not in ("porous", "hard"):
            raise ValueError(f"unknown congestion kind {self.kind!r}")
        if self.kind == "porous" and not self.m >= 1.0:
            raise ValueError("porous-medium exponent must satisfy m >= 1")

    @property
    def is_hard(self) -> bool:
        return self.kind == "hard"


def PorousMedium(m: float) -> Congestion:
    return Congestion("porous", float(m))


HARD = Congestion("hard")


# -- the porous-medium density f_m and derivatives ------------------------------


def _pow_guarded(z: np.ndarray, p: float) -> np.ndarray:
    """z**p for z >= 0 with the exponent p*log(z) clipped to +-_EXP_CAP."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        expo = p * np.log(z)
    expo = np.where(z > 0.0, expo, -np.inf)
    return np.exp(np.clip(expo, -_EXP_CAP, _EXP_CAP))


def f_m(z, m: float):
    """Congestion density: z log z for m = 1, z**m/(m-1) for m > 1."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("f_m requires z >= 0")
    if m == 1.0:
        out = xlogy(z, z)
    else:
        out = _pow_guarded(z, m) / (m - 1.0)
    return out if out.ndim else float(out)


def f_m_prime(z, m: float):
    """Derivative of ``f_m``: 1 + log z for m = 1, m z^(m-1)/(m-1) else."""
    z = np.asarray(z, dtype=np.float64)
    if m == 1.0:
        with np.errstate(divide="ignore"):
            out = 1.0 + np.log(z)
    else:
        out = m / (m - 1.0) * _pow_guarded(z, m - 1.0)
    return out if out.ndim else float(out)


def _f_m_second(z: np.ndarray, m: float) -> np.ndarray:
    if m == 1.0:
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(z, dtype=np.float64)
    return m * _pow_guarded(z, m - 2.0)


# -- energy specification and density pairs -------------------------------------


@dataclass
class EnergySpec:
    """Potentials, entropy weight, congestion mode and species weights."""

    v1: np.ndarray
    v2: np.ndarray
    eps: float
    congestion: Congestion
    alpha1: float = 1.0
    alpha2: float = 1.0

    def __post_init__(self) -> None:
        self.v1 = np.asarray(self.v1, dtype=np.float64)
        self.v2 = np.asarray(self.v2, dtype=np.float64)
        if self.eps < 0:
            raise ValueError("entropy weight eps must be >= 0")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("species weights must be positive")
        if not (np.all(np.isfinite(self.v1)) and np.all(np.isfinite(self.v2))):
            raise ValueError("potentials must be finite (encode obstacles as large values)")

    @property
    def alphas(self) -> tuple[float, float]:
        return (self.alpha1, self.alpha2)


@dataclass
class DensityPair:
    """Nonnegative densities of the two species with their fixed masses."""

    grid: Grid2D
    rho1: np.ndarray
    rho2: np.ndarray
    mass1: float
    mass2: float

    def __post_init__(self) -> None:
        self.rho1 = np.asarray(self.rho1, dtype=np.float64)
        self.rho2 = np.asarray(self.rho2, dtype=np.float64)
        if self.mass1 <= 0 or self.mass2 <= 0:
            raise ValueError("species masses must be positive")

    @classmethod
    def from_fields(cls, grid: Grid2D, rho1: np.ndarray, rho2: np.ndarray) -> "DensityPair":
        return cls(grid, rho1, rho2, grid.integrate(rho1), grid.integrate(rho2))

    def copy(self) -> "DensityPair":
        return DensityPair(self.grid, self.rho1.copy(), self.rho2.copy(), self.mass1, self.mass2)

    def weighted_sum(self, spec: EnergySpec) -> np.ndarray:
        return spec.alpha1 * self.rho1 + spec.alpha2 * self.rho2


@dataclass
class ProxResult:
    """Output of the pointwise prox: densities, multiplier, solve stats."""

    rho1: float
    rho2: float
    pressure: float
    iterations: int
    residual: float


HARD_FEASIBILITY_TOL = 1e-6


def eval_energy(rho: DensityPair, spec: EnergySpec) -> tuple[float, bool]:
    """Total energy and, in hard mode, a pointwise-feasibility flag.

    The returned value never includes the (infinite) hard indicator; an
    infeasible hard-mode pair is reported through the flag instead.
    """
    grid = rho.grid
    ent = xlogy(rho.rho1, rho.rho1) + xlogy(rho.rho2, rho.rho2)
    density = spec.v1 * rho.rho1 + spec.v2 * rho.rho2 + spec.eps * ent
    z = rho.weighted_sum(spec)
    feasible = True
    if spec.congestion.is_hard:
        feasible = bool(np.max(z) <= 1.0 + HARD_FEASIBILITY_TOL)
    else:
        density = density + f_m(np.maximum(z, 0.0), spec.congestion.m)
    return grid.integrate(density), feasible


# -- vectorized safeguarded Newton on a bracketed increasing function ------------


def _bracketed_newton(
    fun: Callable[[np.ndarray], np.ndarray],
    dfun: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    x0: np.ndarray,
    tol: float,
    max_iter: int = 100,
) -> tuple[np.ndarray, int]:
    """Root of an increasing function with f(lo) <= 0 <= f(hi), per cell."""
    lo = lo.copy()
    hi = hi.copy()
    x = np.clip(x0, lo, hi)
    used = 0
    for it in range(max_iter):
        f = fun(x)
        active = np.abs(f) > tol
        if not np.any(active):
            used = it
            break
        used = it + 1
        lo = np.where(f < 0, np.maximum(lo, x), lo)
        hi = np.where(f > 0, np.minimum(hi, x), hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = f / dfun(x)
        cand = x - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        x = np.where(active, cand, x)
    return x, used


# -- prox kernels per mode -------------------------------------------------------


def _objective(r1, r2, s1, s2, lam, v1, v2, eps, cong: Congestion, a1, a2):
    """Pointwise prox objective; +inf outside the hard constraint."""
    val = v1 * r1 + v2 * r2 + (np.square(r1 - s1) + np.square(r2 - s2)) / (2.0 * lam)
    if eps > 0:
        val = val + eps * (xlogy(r1, r1) + xlogy(r2, r2))
    z = a1 * r1 + a2 * r2
    if cong.is_hard:
        val = np.where(z <= 1.0 + 1e-12, val, np.inf)
    else:
        val = val + f_m(np.maximum(z, 0.0), cong.m)
    return val


def _entropy_prox_1d(const, s, lam, eps, u0, tol=1e-14, max_iter=80):
    """Root of const + eps(1+u) + (e^u - s)/lam in u (convex, increasing)."""
    u = u0.copy()
    if np.size(u) == 0:
        return u
    scale = tol * (1.0 + float(np.max(np.abs(const))))
    with np.errstate(over="ignore", under="ignore"):
        for _ in range(max_iter):
            rho = np.exp(np.minimum(u, _U_MAX))
            g = const + eps * (1.0 + u) + (rho - s) / lam
            if float(np.max(np.abs(g))) <= scale:
                break
            dg = eps + rho / lam
            u = np.minimum(u - np.clip(g / dg, -_U_MAX, _U_MAX), _U_MAX)
    return u


def _prox_soft_entropic(s1, s2, lam, v1, v2, eps, m, a1, a2, warm, max_iter):
    """eps > 0 with porous congestion: eliminate through the multiplier.

    With w = F_m'(a1 rho1 + a2 rho2) the stationarity system decouples into
    two 1D entropic solves rho_i(w) plus the scalar equation
    h(w) = F_m'(z(w)) - w = 0, which is strictly decreasing in w; safeguarded
    Newton with bracket expansion is then globally convergent no matter how
    stiff the congestion exponent is.
    """
    shape = np.broadcast_shapes(np.shape(s1), np.shape(s2), np.shape(v1), np.shape(v2))
    s1, s2, v1, v2 = (
        np.ascontiguousarray(np.broadcast_to(np.asarray(a, float), shape)) for a in (s1, s2, v1, v2)
    )
    if warm is None:
        u1 = np.log(np.maximum(s1, 1e-8))
        u2 = np.log(np.maximum(s2, 1e-8))
        w = np.zeros(shape) if m > 1.0 else np.full(shape, 1.0)
    else:
        (u1, u2), w = (warm[0][0].copy(), warm[0][1].copy()), warm[1].copy()

    tiny = 1e-300

    def inner(w, u1, u2):
        u1 = _entropy_prox_1d(v1 + a1 * w, s1, lam, eps, u1)
        u2 = _entropy_prox_1d(v2 + a2 * w, s2, lam, eps, u2)
        return u1, u2

    def h_and_slope(w, u1, u2):
        u1, u2 = inner(w, u1, u2)
        with np.errstate(over="ignore", under="ignore"):
            r1, r2 = np.exp(u1), np.exp(u2)
        z = a1 * r1 + a2 * r2
        fp = f_m_prime(np.maximum(z, tiny if m == 1.0 else 0.0), m)
        fpp = _f_m_second(np.maximum(z, tiny), m)
        drics = a1 * a1 * r1 * lam / (eps * lam + r1) + a2 * a2 * r2 * lam / (eps * lam + r2)
        return fp - w, -fpp * drics - 1.0, u1, u2

    # bracket [lo, hi] with h(lo) >= 0 >= h(hi)
    h, dh, u1, u2 = h_and_slope(w, u1, u2)
    lo = np.where(h >= 0, w, -np.inf if m == 1.0 else 0.0) * np.ones(shape)
    hi = np.where(h <= 0, w, np.inf) * np.ones(shape)
    if m > 1.0:
        lo = np.maximum(lo, 0.0)
        hz, _, u1, u2 = h_and_slope(np.zeros(shape), u1, u2)
        lo = np.where(np.isfinite(lo), lo, 0.0)
        hi = np.where(hz <= 0, 0.0, hi)  # root at w = 0 handled by the bracket
    grow = np.maximum(np.abs(w), 1.0)
    for _ in range(200):
        need_hi = ~np.isfinite(hi)
        need_lo = ~np.isfinite(lo)
        if not (np.any(need_hi) or np.any(need_lo)):
            break
        probe = np.where(need_hi, np.maximum(w, 0.0) + grow, np.where(need_lo, w - grow, w))
        h, _, u1, u2 = h_and_slope(probe, u1, u2)
        hi = np.where(need_hi & (h <= 0), probe, hi)
        lo = np.where(need_hi & (h > 0), np.maximum(lo, probe), lo)
        lo = np.where(need_lo & (h >= 0), probe, lo)
        hi = np.where(need_lo & (h < 0), np.minimum(hi, probe), hi)
        grow = grow * 2.0
    w = np.clip(w, lo, hi)

    iters = 0
    for it in range(max_iter):
        h, dh, u1, u2 = h_and_slope(w, u1, u2)
        if np.max(np.abs(h) / (1.0 + np.abs(w))) <= 1e-14:
            break
        iters = it + 1
        lo = np.where(h > 0, w, lo)
        hi = np.where(h < 0, w, hi)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            cand = w - h / dh
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), w)
        w = np.where(np.abs(h) > 1e-14 * (1.0 + np.abs(w)), np.where(bad, mid, cand), w)

    u1, u2 = inner(w, u1, u2)
    with np.errstate(over="ignore", under="ignore"):
        r1, r2 = np.exp(u1), np.exp(u2)
    z = a1 * r1 + a2 * r2
    fp = f_m_prime(np.maximum(z, tiny if m == 1.0 else 0.0), m)
    g1 = v1 + eps * (1.0 + u1) + a1 * fp + (r1 - s1) / lam
    g2 = v2 + eps * (1.0 + u2) + a2 * fp + (r2 - s2) / lam
    res = np.maximum(np.abs(g1), np.abs(g2))
    pressure = np.maximum(fp, 0.0) if m == 1.0 else fp
    return r1, r2, pressure, ((u1, u2), w), iters, res


def _prox_soft_active_set(s1, s2, lam, v1, v2, m, a1, a2):
    """eps = 0, porous congestion: enumerate the four sign patterns."""
    shape = np.broadcast_shapes(
        np.shape(s1), np.shape(s2), np.shape(v1), np.shape(v2)
    )
    s1, s2, v1, v2 = (np.broadcast_to(np.asarray(a, float), shape).copy() for a in (s1, s2, v1, v2))
    kappa = lam * (a1 * a1 + a2 * a2)
    c_free = a1 * (s1 - lam * v1) + a2 * (s2 - lam * v2)
    tiny = 1e-300

    iters = 0

    # free pattern: scalar equation z + kappa F'(z) = c_free
    def psi(z):
        return z + kappa * f_m_prime(np.maximum(z, tiny), m) - c_free

    def dpsi(z):
        return 1.0 + kappa * _f_m_second(np.maximum(z, tiny), m)

    hi = np.maximum(c_free, 1.0) + kappa * 10.0 + 1.0
    if m == 1.0:
        lo = np.full(shape, tiny)
        z0 = np.maximum(c_free, 1e-8)
    else:
        lo = np.zeros(shape)
        z0 = np.maximum(c_free, 0.0)
    z_free, it = _bracketed_newton(psi, dpsi, lo, hi, z0, tol=1e-14)
    iters = max(iters, it)
    fp_free = f_m_prime(np.maximum(z_free, tiny if m == 1.0 else 0.0), m)
    r1_free = s1 - lam * v1 - lam * a1 * fp_free
    r2_free = s2 - lam * v2 - lam * a2 * fp_free
    valid_free = (r1_free >= -1e-11) & (r2_free >= -1e-11)
    if m > 1.0:
        valid_free &= c_free > 0

    # one species at zero: scalar equation in the other density
    def solve_single(s, v, a):
        def chi(r):
            return v + a * f_m_prime(np.maximum(a * r, tiny), m) + (r - s) / lam

        def dchi(r):
            return a * a * _f_m_second(np.maximum(a * r, tiny), m) + 1.0 / lam

        hi_r = np.maximum(s - lam * v, 0.0) + 1.0
        lo_r = np.full(shape, tiny) if m == 1.0 else np.zeros(shape)
        r0 = np.maximum(s - lam * v, 1e-8)
        r, it = _bracketed_newton(chi, dchi, lo_r, hi_r, r0, tol=1e-14)
        if m > 1.0:
            # boundary root when the derivative at zero is already nonnegative
            r = np.where(v - s / lam >= 0.0, 0.0, r)
        return r, it

    r2_only, it = solve_single(s2, v2, a2)
    iters = max(iters, it)
    r1_only, it = solve_single(s1, v1, a1)
    iters = max(iters, it)

    zeros = np.zeros(shape)
    candidates = [
        (np.maximum(r1_free, 0.0), np.maximum(r2_free, 0.0), valid_free),
        (zeros, r2_only, np.ones(shape, bool)),
        (r1_only, zeros, np.ones(shape, bool)),
        (zeros, zeros, np.ones(shape, bool) if m > 1.0 else np.zeros(shape, bool)),
    ]
    best = np.full(shape, np.inf)
    r1 = np.zeros(shape)
    r2 = np.zeros(shape)
    cong = PorousMedium(m)
    for c1, c2, ok in candidates:
        val = _objective(c1, c2, s1, s2, lam, v1, v2, 0.0, cong, a1, a2)
        val = np.where(ok, val, np.inf)
        take = val < best
        best = np.where(take, val, best)
        r1 = np.where(take, c1, r1)
        r2 = np.where(take, c2, r2)

    z = a1 * r1 + a2 * r2
    fp = f_m_prime(np.maximum(z, tiny if m == 1.0 else 0.0), m)
    res = _kkt_residual_soft(r1, r2, s1, s2, lam, v1, v2, 0.0, fp, a1, a2)
    pressure = np.maximum(fp, 0.0) if m == 1.0 else fp
    return r1, r2, pressure, iters, res


def _kkt_residual_soft(r1, r2, s1, s2, lam, v1, v2, eps, fp, a1, a2):
    with np.errstate(divide="ignore", invalid="ignore"):
        logr1 = np.where(r1 > 0, np.log(np.maximum(r1, 1e-300)), 0.0)
        logr2 = np.where(r2 > 0, np.log(np.maximum(r2, 1e-300)), 0.0)
    g1 = v1 + eps * (1.0 + logr1) * (r1 > 0) + a1 * fp + (r1 - s1) / lam
    g2 = v2 + eps * (1.0 + logr2) * (r2 > 0) + a2 * fp + (r2 - s2) / lam
    res1 = np.where(r1 > 0, np.abs(g1), np.maximum(0.0, -g1))
    res2 = np.where(r2 > 0, np.abs(g2), np.maximum(0.0, -g2))
    return np.maximum(res1, res2)


def _prox_hard_entropic(s1, s2, lam, v1, v2, eps, a1, a2, warm, max_iter):
    """Hard constraint with entropy: unconstrained solve, then pressure search."""
    shape = np.broadcast_shapes(np.shape(s1), np.shape(s2), np.shape(v1), np.shape(v2))
    s1, s2, v1, v2 = (np.broadcast_to(np.asarray(a, float), shape).copy() for a in (s1, s2, v1, v2))
    u0 = warm[0] if warm is not None else None
    p0 = warm[1] if warm is not None else None
    if u0 is None:
        u1 = np.log(np.maximum(np.broadcast_to(s1, shape), 1e-8))
        u2 = np.log(np.maximum(np.broadcast_to(s2, shape), 1e-8))
    else:
        u1, u2 = np.broadcast_to(u0[0], shape).copy(), np.broadcast_to(u0[1], shape).copy()
    u1 = _entropy_prox_1d(v1, s1, lam, eps, u1)
    u2 = _entropy_prox_1d(v2, s2, lam, eps, u2)
    r1, r2 = np.exp(u1), np.exp(u2)
    z = a1 * r1 + a2 * r2
    p = np.zeros(shape)
    viol = z > 1.0
    iters = 2
    if np.any(viol):
        sv1, sv2 = s1[viol], s2[viol]
        vv1, vv2 = v1[viol], v2[viol]
        w1, w2 = u1[viol].copy(), u2[viol].copy()
        pv = np.maximum(np.broadcast_to(p0, shape)[viol] if p0 is not None else 0.0, 0.0)
        pv = np.maximum(pv, 1e-12) * np.ones_like(sv1)

        def saturation(pp, w1, w2):
            w1 = _entropy_prox_1d(vv1 + a1 * pp, sv1, lam, eps, w1)
            w2 = _entropy_prox_1d(vv2 + a2 * pp, sv2, lam, eps, w2)
            return w1, w2

        lo = np.zeros_like(sv1)
        hi = np.maximum(pv, 1.0)
        # expand the bracket until the weighted sum drops below capacity
        for _ in range(80):
            w1, w2 = saturation(hi, w1, w2)
            gap = a1 * np.exp(w1) + a2 * np.exp(w2) - 1.0
            if np.all(gap <= 0):
                break
            hi = np.where(gap > 0, hi * 2.0, hi)
        pv = 0.5 * (lo + hi)
        for it in range(200):
            w1, w2 = saturation(pv, w1, w2)
            rr1, rr2 = np.exp(w1), np.exp(w2)
            gap = a1 * rr1 + a2 * rr2 - 1.0
            if np.max(np.abs(gap)) <= 1e-13:
                iters += it
                break
            lo = np.where(gap > 0, pv, lo)
            hi = np.where(gap < 0, pv, hi)
            dgap = -(a1 * a1 * rr1 * lam / (eps * lam + rr1)
                     + a2 * a2 * rr2 * lam / (eps * lam + rr2))
            cand = pv - gap / dgap
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            pv = np.where(bad, 0.5 * (lo + hi), cand)
        w1, w2 = saturation(pv, w1, w2)
        u1[viol], u2[viol] = w1, w2
        r1, r2 = np.exp(u1), np.exp(u2)
        p[viol] = pv
    g1 = v1 + eps * (1.0 + u1) + a1 * p + (r1 - s1) / lam
    g2 = v2 + eps * (1.0 + u2) + a2 * p + (r2 - s2) / lam
    res = np.maximum(np.abs(g1), np.abs(g2))
    res = np.maximum(res, np.maximum(0.0, a1 * r1 + a2 * r2 - 1.0))
    res = np.maximum(res, np.abs(p * (1.0 - a1 * r1 - a2 * r2)))
    return r1, r2, p, ((u1, u2), p), iters, res


def _prox_hard_projection(s1, s2, lam, v1, v2, a1, a2):
    """Hard constraint without entropy: capped projection of s - lam V."""
    shape = np.broadcast_shapes(np.shape(s1), np.shape(s2), np.shape(v1), np.shape(v2))
    t1 = np.broadcast_to(np.asarray(s1, float) - lam * np.asarray(v1, float), shape)
    t2 = np.broadcast_to(np.asarray(s2, float) - lam * np.asarray(v2, float), shape)
    r1 = np.maximum(t1, 0.0)
    r2 = np.maximum(t2, 0.0)
    p = np.zeros(shape)
    viol = a1 * r1 + a2 * r2 > 1.0
    iters = 1
    if np.any(viol):
        tv1, tv2 = t1[viol], t2[viol]

        def gap(pp):
            return (a1 * np.maximum(tv1 - lam * a1 * pp, 0.0)
                    + a2 * np.maximum(tv2 - lam * a2 * pp, 0.0) - 1.0)

        def dgap(pp):
            d = np.zeros_like(pp)
            d -= lam * a1 * a1 * (tv1 - lam * a1 * pp > 0)
            d -= lam * a2 * a2 * (tv2 - lam * a2 * pp > 0)
            return np.where(d < 0, d, -lam * min(a1, a2) ** 2)

        hi = (np.maximum(tv1, 0.0) / (lam * a1) + np.maximum(tv2, 0.0) / (lam * a2)) + 1.0
        pv, it = _bracketed_newton(lambda q: -gap(q), lambda q: -dgap(q),
                                   np.zeros_like(tv1), hi, np.ones_like(tv1), tol=1e-14)
        iters += it
        r1[viol] = np.maximum(tv1 - lam * a1 * pv, 0.0)
        r2[viol] = np.maximum(tv2 - lam * a2 * pv, 0.0)
        p[viol] = pv
    res = _kkt_residual_soft(r1, r2, np.broadcast_to(s1, shape), np.broadcast_to(s2, shape),
                             lam, v1, v2, 0.0, p, a1, a2)
    res = np.maximum(res, np.maximum(0.0, a1 * r1 + a2 * r2 - 1.0))
    res = np.maximum(res, np.abs(p * (1.0 - a1 * r1 - a2 * r2)))
    return r1, r2, p, iters, res


def prox_density_arrays(
    s1,
    s2,
    lam: float,
    v1,
    v2,
    eps: float,
    congestion: Congestion,
    alpha: tuple[float, float] = (1.0, 1.0),
    warm: Optional[tuple] = None,
    max_iter: int = 200,
):
    """Vectorized prox of the pointwise energy at penalty scale ``lam``.

    Minimizes ``e(r1, r2) + ((r1-s1)^2 + (r2-s2)^2)/(2 lam)`` over r >= 0
    (and the hard cap when active) cell by cell.  Returns
    ``(rho1, rho2, pressure, warm, iterations, residual)`` where ``warm`` can
    be fed back to accelerate repeated solves on slowly-changing data.
    """
    if not lam > 0:
        raise ValueError("prox parameter lam must be positive")
    a1, a2 = float(alpha[0]), float(alpha[1])
    if congestion.is_hard:
        if eps > 0:
            r1, r2, p, new_warm, iters, res = _prox_hard_entropic(
                s1, s2, lam, v1, v2, eps, a1, a2, warm, max_iter
            )
        else:
            r1, r2, p, iters, res = _prox_hard_projection(s1, s2, lam, v1, v2, a1, a2)
            new_warm = None
    else:
        m = congestion.m
        if eps > 0:
            r1, r2, p, new_warm, iters, res = _prox_soft_entropic(
                s1, s2, lam, v1, v2, eps, m, a1, a2, warm, max_iter
            )
        else:
            r1, r2, p, iters, res = _prox_soft_active_set(s1, s2, lam, v1, v2, m, a1, a2)
            new_warm = None
    max_res = float(np.max(res)) if np.size(res) else 0.0
    if iters >= max_iter and max_res > 1e-9:
        raise SolverError("pointwise prox did not converge", max_res)
    return r1, r2, p, new_warm, iters, max_res


def prox_density(
    s1: float,
    s2: float,
    lam: float,
    v1: float = 0.0,
    v2: float = 0.0,
    eps: float = 0.0,
    congestion: Congestion = PorousMedium(2.0),
    alpha: tuple[float, float] = (1.0, 1.0),
    max_iter: int = 200,
) -> ProxResult:
    """Pointwise prox at one cell; see ``prox_density_arrays``."""
    r1, r2, p, _, iters, res = prox_density_arrays(
        np.array([float(s1)]),
        np.array([float(s2)]),
        lam,
        np.array([float(v1)]),
        np.array([float(v2)]),
        eps,
        congestion,
        alpha,
        max_iter=max_iter,
    )
    return ProxResult(float(r1[0]), float(r2[0]), float(p[0]), iters, res)


def pressure_field(
    rho: DensityPair,
    spec: EnergySpec,
    multipliers: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Pressure as a cell field: F_m'(weighted sum) or the stored multipliers."""
    if spec.congestion.is_hard:
        if multipliers is None:
            raise RuntimeError(
                "hard congestion needs the stored per-cell multipliers from the prox"
            )
        return np.maximum(multipliers, 0.0)
    z = np.maximum(rho.weighted_sum(spec), 0.0)
    p = f_m_prime(z, spec.congestion.m)
    if spec.congestion.m == 1.0:
        p = np.maximum(p, 0.0)
    return np.asarray(p)
