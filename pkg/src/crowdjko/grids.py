"""Uniform cell-centered grids and discrete differential operators.

Fields live at cell centers of a rectangular grid and are stored as
``(ny, nx)`` arrays, ``values[j, i]`` holding the value at
``(xmin + (i+1/2)dx, ymin + (j+1/2)dy)``; row-major flattening iterates x
fastest.  No-flux (Neumann) boundaries are realized with mirror ghost cells,
which makes the staggered gradient and (minus) the divergence exact adjoints
and keeps every operator linear.

Two gradient flavours are provided:

* ``gradient`` / ``divergence``: staggered, face-based; normal components on
  the outer boundary vanish identically.
* ``Grid2D.cell_gradient``: the centered scheme collocated back at cell
  centers (the average of the two adjacent face differences).  This is the
  spatial part of the space-time derivative used by the saddle-point solver,
  where all collocation variables sit at cell centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _pad_edge(values: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * values.ndim
    width[axis] = (1, 1)
    return np.pad(values, width, mode="edge")


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centered grid on ``[xmin, xmax] x [ymin, ymax]``."""

    nx: int
    ny: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"cell counts must be positive, got {self.nx}x{self.ny}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("degenerate domain bounds")

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def xcenters(self) -> np.ndarray:
        return self.xmin + (np.arange(self.nx) + 0.5) * self.dx

    def ycenters(self) -> np.ndarray:
        return self.ymin + (np.arange(self.ny) + 0.5) * self.dy

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinate arrays ``(X, Y)`` of shape ``(ny, nx)``."""
        return np.meshgrid(self.xcenters(), self.ycenters(), indexing="xy")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint quadrature of a cell field, sum f * dx * dy."""
        return float(np.sum(values, dtype=np.float64) * self.cell_area)

    # -- staggered operators -------------------------------------------------

    def gradient(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Face-based gradient; normal boundary components are zero.

        Returns ``(gx, gy)`` with ``gx`` on x-faces, shape ``(ny, nx+1)``,
        ``gy`` on y-faces, shape ``(ny+1, nx)``.
        """
        ny, nx = values.shape
        gx = np.zeros((ny, nx + 1))
        gy = np.zeros((ny + 1, nx))
        gx[:, 1:-1] = (values[:, 1:] - values[:, :-1]) / self.dx
        gy[1:-1, :] = (values[1:, :] - values[:-1, :]) / self.dy
        return gx, gy

    def divergence(self, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
        """Face-to-cell divergence, the negative adjoint of ``gradient``."""
        return (gx[:, 1:] - gx[:, :-1]) / self.dx + (gy[1:, :] - gy[:-1, :]) / self.dy

    # -- cell-collocated operators -------------------------------------------

    def cell_gradient(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Centered gradient collocated at cell centers (mirror ghosts)."""
        gcx = np.empty_like(values)
        gcy = np.empty_like(values)
        gcx[..., :, 1:-1] = values[..., :, 2:] - values[..., :, :-2]
        gcx[..., :, 0] = values[..., :, 1] - values[..., :, 0]
        gcx[..., :, -1] = values[..., :, -1] - values[..., :, -2]
        gcx /= 2.0 * self.dx
        gcy[..., 1:-1, :] = values[..., 2:, :] - values[..., :-2, :]
        gcy[..., 0, :] = values[..., 1, :] - values[..., 0, :]
        gcy[..., -1, :] = values[..., -1, :] - values[..., -2, :]
        gcy /= 2.0 * self.dy
        return gcx, gcy

    def cell_gradient_adjoint(self, gcx: np.ndarray, gcy: np.ndarray) -> np.ndarray:
        """Adjoint of ``cell_gradient`` under the plain cell inner product."""
        # transpose of (S+ - S-)/(2 dx) with edge-clamped shifts
        cx = 1.0 / (2.0 * self.dx)
        cy = 1.0 / (2.0 * self.dy)
        out = np.empty(np.broadcast_shapes(gcx.shape, gcy.shape))
        out[..., :, 1:-1] = gcx[..., :, :-2] - gcx[..., :, 2:]
        out[..., :, 0] = -gcx[..., :, 0] - gcx[..., :, 1]
        out[..., :, -1] = gcx[..., :, -2] + gcx[..., :, -1]
        out *= cx
        out[..., 1:-1, :] += cy * (gcy[..., :-2, :] - gcy[..., 2:, :])
        out[..., 0, :] -= cy * (gcy[..., 0, :] + gcy[..., 1, :])
        out[..., -1, :] += cy * (gcy[..., -2, :] + gcy[..., -1, :])
        return out


def build_grid(nx: int, ny: int, bounds: tuple[float, float, float, float]) -> Grid2D:
    """Construct a grid from cell counts and ``(xmin, xmax, ymin, ymax)``."""
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    return Grid2D(nx=int(nx), ny=int(ny), xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax)


@dataclass
class ScalarField:
    """Cell field on a grid; ``values`` has shape ``(ny, nx)``."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")


def integrate(f: ScalarField) -> float:
    return f.grid.integrate(f.values)


def gradient(f: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    return f.grid.gradient(f.values)


def divergence(f: ScalarField | Grid2D, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    grid = f if isinstance(f, Grid2D) else f.grid
    return grid.divergence(gx, gy)


# -- space-time grid for one rescaled JKO step --------------------------------


@dataclass(frozen=True)
class SpaceTimeGrid:
    """``nt`` sub-intervals of the unit-rescaled step interval [0, 1].

    Potentials ("slices") live at the nt+1 time nodes; collocation variables
    (the time/space derivative components and their multipliers) live at the
    nt interval midpoints, cell-centered in space.
    """

    base: Grid2D
    nt: int

    def __post_init__(self) -> None:
        if self.nt < 1:
            raise ValueError("nt must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.nt

    @property
    def slice_shape(self) -> tuple[int, int, int]:
        return (self.nt + 1,) + self.base.shape

    @property
    def colloc_shape(self) -> tuple[int, int, int]:
        return (self.nt,) + self.base.shape


@dataclass
class SpaceTimeVector:
    """Collocation triple (time component, two space components)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def copy(self) -> "SpaceTimeVector":
        return SpaceTimeVector(self.t.copy(), self.x.copy(), self.y.copy())


def spacetime_D(stg: SpaceTimeGrid, phi: np.ndarray) -> SpaceTimeVector:
    """Space-time derivative of a slice field, collocated at midpoints.

    Time component: forward difference / dt.  Space components: centered
    cell gradient of the two adjacent slices averaged to the midpoint.
    ``phi`` may carry leading batch axes; the last three must match
    ``stg.slice_shape``.
    """
    dt = stg.dt
    comp_t = (phi[..., 1:, :, :] - phi[..., :-1, :, :]) / dt
    mid = 0.5 * (phi[..., 1:, :, :] + phi[..., :-1, :, :])
    comp_x, comp_y = stg.base.cell_gradient(mid)
    return SpaceTimeVector(comp_t, comp_x, comp_y)


def spacetime_D_adjoint(stg: SpaceTimeGrid, sigma: SpaceTimeVector) -> np.ndarray:
    """Adjoint of ``spacetime_D`` for the weighted pairings.

    Collocation fields pair with weight dt*dx*dy, slice fields with dx*dy,
    so that ``dt * sum(D phi * sigma) == sum(phi * D_adj sigma)``.
    """
    dt = stg.dt
    shape = sigma.t.shape[:-3] + stg.slice_shape
    out = np.zeros(shape)
    out[..., :-1, :, :] -= sigma.t
    out[..., 1:, :, :] += sigma.t
    div = stg.base.cell_gradient_adjoint(sigma.x, sigma.y)
    out[..., :-1, :, :] += (dt / 2.0) * div
    out[..., 1:, :, :] += (dt / 2.0) * div
    return out
