import numpy as np
import pytest

from crowdjko.alg2 import Alg2Config, jko_step
from crowdjko.energy import DensityPair, EnergySpec, HARD, PorousMedium, prox_density
from crowdjko.grids import build_grid
from crowdjko.oracle import (
    TinyMeasure,
    brute_projK,
    brute_prox,
    exact_transport_lp,
    heat_moment_check,
    primal_dual_reference_step,
)


# -- brute_prox -------------------------------------------------------------------


def test_brute_prox_reproduces_m2_closed_form():
    r1, r2 = brute_prox(0.5, 0.5, 0.25, congestion=PorousMedium(2.0))
    assert abs(r1 - 0.25) <= 1e-4
    assert abs(r2 - 0.25) <= 1e-4


def test_brute_prox_reproduces_hard_projection():
    r1, r2 = brute_prox(0.8, 0.8, 0.5, congestion=HARD)
    assert abs(r1 - 0.5) <= 1e-4
    assert abs(r2 - 0.5) <= 1e-4


def test_brute_prox_agrees_with_newton_solver():
    rng = np.random.default_rng(5)
    modes = [
        (0.0, PorousMedium(1.0), (1.0, 1.0)),
        (0.01, PorousMedium(2.0), (1.0, 2.0)),
        (0.1, PorousMedium(50.0), (1.0, 1.0)),
        (0.0, HARD, (1.0, 2.0)),
        (0.05, HARD, (1.0, 1.0)),
    ]
    for k in range(60):
        s1, s2 = rng.uniform(-0.5, 2.0, 2)
        lam = rng.uniform(1e-3, 1.0)
        v1, v2 = rng.uniform(-1.0, 1.0, 2)
        eps, cong, alpha = modes[k % len(modes)]
        res = prox_density(s1, s2, lam, v1, v2, eps, cong, alpha)
        b1, b2 = brute_prox(s1, s2, lam, v1, v2, eps, cong, alpha)
        assert abs(res.rho1 - b1) <= 1e-4
        assert abs(res.rho2 - b2) <= 1e-4


# -- brute_projK ------------------------------------------------------------------


def test_brute_projK_feasible_unchanged():
    a, (bx, by) = brute_projK(-0.7, (0.3, -0.2))
    assert (a, bx, by) == (-0.7, 0.3, -0.2)


def test_brute_projK_axis_case():
    a, (bx, by) = brute_projK(1.0, (0.0, 0.0), samples=200000)
    assert abs(a) <= 1e-5
    assert bx == 0.0 and by == 0.0


def test_brute_projK_matches_newton_projection():
    from crowdjko.alg2 import project_K

    pa, (pbx, _) = project_K(0.0, (1.0, 0.0))
    qa, (qbx, _) = brute_projK(0.0, (1.0, 0.0), samples=400000)
    assert abs(pa - qa) <= 1e-5
    assert abs(pbx - qbx) <= 1e-5


# -- exact transport LP -----------------------------------------------------------


def test_transport_identical_measures():
    mu = TinyMeasure([[0.1, 0.1], [0.4, 0.9]], [0.3, 0.7])
    assert exact_transport_lp(mu, mu) <= 1e-12


def test_transport_two_diracs():
    mu = TinyMeasure([[0.0, 0.0]], [1.0])
    nu = TinyMeasure([[0.3, 0.4]], [1.0])
    assert exact_transport_lp(mu, nu) == pytest.approx(0.25, abs=1e-10)


def test_transport_two_point_line_instance():
    mu = TinyMeasure([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
    nu = TinyMeasure([[0.25, 0.0], [0.75, 0.0]], [0.5, 0.5])
    assert exact_transport_lp(mu, nu) == pytest.approx(0.0625, abs=1e-10)


def test_transport_mass_mismatch_rejected():
    mu = TinyMeasure([[0.0, 0.0]], [1.0])
    nu = TinyMeasure([[1.0, 0.0]], [0.5])
    with pytest.raises(ValueError):
        exact_transport_lp(mu, nu)


def test_transport_symmetry_and_triangle():
    rng = np.random.default_rng(13)
    for _ in range(5):
        pts = [rng.uniform(0, 1, (4, 2)) for _ in range(3)]
        ws = []
        for _ in range(3):
            w = rng.uniform(0.1, 1.0, 4)
            ws.append(w / w.sum())
        mu, nu, ka = (TinyMeasure(p, w) for p, w in zip(pts, ws))
        ab = exact_transport_lp(mu, nu)
        ba = exact_transport_lp(nu, mu)
        assert ab == pytest.approx(ba, abs=1e-10)
        w_ab, w_bc, w_ac = np.sqrt(ab), np.sqrt(exact_transport_lp(nu, ka)), np.sqrt(
            exact_transport_lp(mu, ka)
        )
        assert w_ac <= w_ab + w_bc + 1e-10


def test_tiny_measure_validation():
    with pytest.raises(ValueError):
        TinyMeasure(np.zeros((26, 2)), np.ones(26))
    with pytest.raises(ValueError):
        TinyMeasure([[0, 0]], [-0.5])


def test_dynamic_cost_approaches_lp_under_nt_refinement():
    # tiny 5x5 problem: the step's kinetic cost approaches W2^2/2 of the move
    g = build_grid(5, 5, (-0.5, 0.5, -0.5, 0.5))
    X, Y = g.meshgrid()
    spec = EnergySpec(2.0 * ((X - 0.2) ** 2 + (Y - 0.2) ** 2), g.zeros(),
                      eps=0.0, congestion=PorousMedium(2.0))
    blob = np.zeros(g.shape)
    blob[1, 1] = 1.0
    rho = DensityPair.from_fields(g, blob, np.full(g.shape, 1e-3))
    gaps = []
    for nt in (2, 8):
        new, _, stats, _ = jko_step(
            rho, 0.05, spec, Alg2Config(r=4.0, nt=nt, max_iters=3000,
                                        tol_primal=1e-9, tol_dual=1e-9)
        )
        pts = np.column_stack([X.ravel(), Y.ravel()])
        mu = TinyMeasure(pts, rho.rho1.ravel() * g.cell_area)
        w = new.rho1.ravel() * g.cell_area
        nu = TinyMeasure(pts, w * (mu.mass / w.sum()))
        w2_sq = exact_transport_lp(mu, nu)
        # species 2 is a uniform background whose kinetic cost is negligible
        gaps.append(abs(2.0 * stats.dynamic_cost - w2_sq))
    assert gaps[1] <= gaps[0] + 1e-6


# -- primal-dual reference step ----------------------------------------------------


def test_reference_step_uniform_steady_state():
    g = build_grid(6, 6, (-0.5, 0.5, -0.5, 0.5))
    spec = EnergySpec(g.zeros(), g.zeros(), eps=0.05, congestion=PorousMedium(2.0))
    rho = DensityPair.from_fields(g, np.full(g.shape, 0.3), np.full(g.shape, 0.3))
    ref = primal_dual_reference_step(rho, 0.01, spec, g, 2, max_iters=3000)
    assert np.max(np.abs(ref.rho1 - 0.3)) <= 1e-3
    assert np.max(np.abs(ref.rho2 - 0.3)) <= 1e-3


def test_reference_step_species_relabeling_symmetry():
    g = build_grid(6, 6, (-0.5, 0.5, -0.5, 0.5))
    X, Y = g.meshgrid()
    v1 = 2.0 * ((X - 0.2) ** 2 + Y**2)
    v2 = 2.0 * ((X + 0.2) ** 2 + Y**2)
    r1 = np.where(X < 0, 0.6, 0.0)
    r2 = np.where(X > 0, 0.6, 0.0)
    spec = EnergySpec(v1, v2, eps=0.01, congestion=HARD)
    swapped = EnergySpec(v2, v1, eps=0.01, congestion=HARD)
    a = primal_dual_reference_step(DensityPair.from_fields(g, r1, r2), 0.01, spec, g, 2,
                                   max_iters=2000)
    b = primal_dual_reference_step(DensityPair.from_fields(g, r2, r1), 0.01, swapped, g, 2,
                                   max_iters=2000)
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_reference_step_rejects_large_grids():
    g = build_grid(20, 20, (0, 1, 0, 1))
    spec = EnergySpec(g.zeros(), g.zeros(), eps=0.0, congestion=HARD)
    rho = DensityPair.from_fields(g, np.full(g.shape, 0.1), np.full(g.shape, 0.1))
    with pytest.raises(ValueError):
        primal_dual_reference_step(rho, 0.01, spec, g, 4)


# -- heat moment check -------------------------------------------------------------


def test_heat_moment_zero_diffusivity_is_stationary():
    g = build_grid(16, 16, (-0.5, 0.5, -0.5, 0.5))
    res = heat_moment_check(0.0, 6, 0.005, g, alg2=Alg2Config(r=4.0, max_iters=200, nt=6))
    assert abs(res.rate) <= 1e-4
    assert not res.flagged
