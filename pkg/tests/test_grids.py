import math

import numpy as np
import pytest

from crowdjko.grids import (
    Grid2D,
    ScalarField,
    SpaceTimeGrid,
    SpaceTimeVector,
    build_grid,
    divergence,
    gradient,
    integrate,
    spacetime_D,
    spacetime_D_adjoint,
)


def test_build_grid_paper_resolution():
    g = build_grid(50, 50, (-0.5, 0.5, -0.5, 0.5))
    assert g.dx == pytest.approx(0.02)
    assert g.dy == pytest.approx(0.02)


def test_build_grid_single_cell():
    g = build_grid(1, 1, (0.0, 1.0, 0.0, 1.0))
    assert g.xcenters().tolist() == [0.5]
    assert g.ycenters().tolist() == [0.5]
    assert g.cell_area == pytest.approx(1.0)


def test_build_grid_two_by_two_centers():
    g = build_grid(2, 2, (0.0, 1.0, 0.0, 1.0))
    assert np.allclose(g.xcenters(), [0.25, 0.75])
    assert np.allclose(g.ycenters(), [0.25, 0.75])


@pytest.mark.parametrize("nx,ny,bounds", [
    (0, 4, (0, 1, 0, 1)),
    (4, -1, (0, 1, 0, 1)),
    (4, 4, (1, 1, 0, 1)),
    (4, 4, (0, 1, 2, 1)),
])
def test_build_grid_rejects_bad_arguments(nx, ny, bounds):
    with pytest.raises(ValueError):
        build_grid(nx, ny, bounds)


def test_integrate_constant_exact():
    for n in (1, 7, 50):
        g = build_grid(n, n, (0.0, 1.0, 0.0, 1.0))
        f = ScalarField(g, np.ones(g.shape))
        assert integrate(f) == pytest.approx(1.0, rel=1e-13)


def test_integrate_indicator_on_paper_grid():
    g = build_grid(50, 50, (-0.5, 0.5, -0.5, 0.5))
    X, Y = g.meshgrid()
    ind = np.where((X >= -0.45) & (X <= -0.15) & (Y >= -0.45) & (Y <= -0.15), 1.0, 0.0)
    val = g.integrate(ind)
    assert abs(val - 0.09) <= g.cell_area + 1e-12


def test_integrate_matches_independent_resummation():
    rng = np.random.default_rng(3)
    g = build_grid(17, 23, (-1.0, 2.0, 0.5, 1.25))
    vals = rng.standard_normal(g.shape)
    mine = g.integrate(vals)
    # column-wise compensated re-summation in a different order
    oracle = math.fsum(math.fsum(vals[:, i]) for i in range(g.nx)) * g.cell_area
    assert mine == pytest.approx(oracle, rel=1e-13, abs=1e-15)


def test_gradient_of_constant_is_zero():
    g = build_grid(9, 6, (0.0, 1.0, 0.0, 2.0))
    gx, gy = g.gradient(np.full(g.shape, 3.7))
    assert np.all(gx == 0.0)
    assert np.all(gy == 0.0)


def test_gradient_exact_for_affine_interior():
    g = build_grid(10, 10, (0.0, 1.0, 0.0, 1.0))
    X, _ = g.meshgrid()
    gx, gy = g.gradient(X)
    assert np.allclose(gx[:, 1:-1], 1.0)
    assert np.all(gx[:, 0] == 0.0) and np.all(gx[:, -1] == 0.0)
    assert np.allclose(gy, 0.0)


def test_gradient_divergence_adjoint():
    rng = np.random.default_rng(11)
    g = build_grid(12, 9, (-0.5, 0.5, -0.5, 0.5))
    f = rng.standard_normal(g.shape)
    # test vector field with vanishing normal trace
    vx = rng.standard_normal((g.ny, g.nx + 1))
    vy = rng.standard_normal((g.ny + 1, g.nx))
    vx[:, 0] = vx[:, -1] = 0.0
    vy[0, :] = vy[-1, :] = 0.0
    gx, gy = g.gradient(f)
    lhs = (np.sum(gx * vx) + np.sum(gy * vy)) * g.cell_area
    rhs = -np.sum(f * g.divergence(vx, vy)) * g.cell_area
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_cell_gradient_adjoint_pair():
    rng = np.random.default_rng(4)
    g = build_grid(8, 13, (-0.5, 0.5, -0.5, 0.5))
    f = rng.standard_normal(g.shape)
    wx = rng.standard_normal(g.shape)
    wy = rng.standard_normal(g.shape)
    gx, gy = g.cell_gradient(f)
    lhs = np.sum(gx * wx) + np.sum(gy * wy)
    rhs = np.sum(f * g.cell_gradient_adjoint(wx, wy))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_operators_are_linear():
    rng = np.random.default_rng(5)
    g = build_grid(7, 7, (0.0, 1.0, 0.0, 1.0))
    f1 = rng.standard_normal(g.shape)
    f2 = rng.standard_normal(g.shape)
    for op in (g.gradient, g.cell_gradient):
        a = op(f1 + f2)
        b1 = op(f1)
        b2 = op(f2)
        for x, y, z in zip(a, b1, b2):
            assert np.allclose(x, y + z, atol=1e-14)


def test_scalarfield_validation():
    g = build_grid(4, 4, (0, 1, 0, 1))
    with pytest.raises(ValueError):
        ScalarField(g, np.ones((3, 4)))
    with pytest.raises(ValueError):
        ScalarField(g, np.full(g.shape, np.inf))


def test_spacetime_grid_validation():
    g = build_grid(4, 4, (0, 1, 0, 1))
    with pytest.raises(ValueError):
        SpaceTimeGrid(g, 0)
    stg = SpaceTimeGrid(g, 5)
    assert stg.dt == pytest.approx(0.2)


def test_spacetime_D_constant_is_zero():
    g = build_grid(5, 5, (0, 1, 0, 1))
    stg = SpaceTimeGrid(g, 4)
    phi = np.full(stg.slice_shape, 2.5)
    d = spacetime_D(stg, phi)
    assert np.all(d.t == 0.0) and np.all(d.x == 0.0) and np.all(d.y == 0.0)


def test_spacetime_D_linear_in_time():
    g = build_grid(6, 6, (0, 1, 0, 1))
    stg = SpaceTimeGrid(g, 5)
    times = np.arange(stg.nt + 1) * stg.dt
    phi = np.broadcast_to(times[:, None, None], stg.slice_shape).copy()
    d = spacetime_D(stg, phi)
    assert np.allclose(d.t, 1.0)
    assert np.allclose(d.x, 0.0) and np.allclose(d.y, 0.0)


def _manufactured_error(nx: int, nt: int) -> float:
    g = build_grid(nx, nx, (0.0, 1.0, 0.0, 1.0))
    stg = SpaceTimeGrid(g, nt)
    X, Y = g.meshgrid()
    times = np.arange(stg.nt + 1) * stg.dt
    phi = np.cos(np.pi * X)[None] * np.cos(np.pi * Y)[None] * (times**2)[:, None, None]
    d = spacetime_D(stg, phi)
    tm = times[:-1] + stg.dt / 2.0
    exact_t = np.cos(np.pi * X)[None] * np.cos(np.pi * Y)[None] * (2.0 * tm)[:, None, None]
    # the forward difference of t^2 lands exactly on the midpoint derivative;
    # the spatial part carries the time-average of t^2 over the interval
    avg_t2 = 0.5 * (times[:-1] ** 2 + times[1:] ** 2)
    exact_x = (-np.pi * np.sin(np.pi * X) * np.cos(np.pi * Y))[None] * avg_t2[:, None, None]
    exact_y = (-np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y))[None] * avg_t2[:, None, None]
    return max(
        float(np.max(np.abs(d.t - exact_t))),
        float(np.max(np.abs(d.x - exact_x))),
        float(np.max(np.abs(d.y - exact_y))),
    )


def test_spacetime_D_manufactured_refinement():
    errs = [_manufactured_error(nx, 4) for nx in (8, 16, 32)]
    assert errs[1] < 0.35 * errs[0]
    assert errs[2] < 0.35 * errs[1]


def test_spacetime_D_adjoint_identity():
    rng = np.random.default_rng(9)
    g = build_grid(6, 8, (-1.0, 1.0, 0.0, 1.0))
    stg = SpaceTimeGrid(g, 3)
    phi = rng.standard_normal(stg.slice_shape)
    sigma = SpaceTimeVector(*(rng.standard_normal(stg.colloc_shape) for _ in range(3)))
    lhs = stg.dt * (
        np.sum(spacetime_D(stg, phi).t * sigma.t)
        + np.sum(spacetime_D(stg, phi).x * sigma.x)
        + np.sum(spacetime_D(stg, phi).y * sigma.y)
    )
    rhs = np.sum(phi * spacetime_D_adjoint(stg, sigma))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
