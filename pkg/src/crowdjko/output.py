"""Snapshot and diagnostics emission: CSV tables and binary PPM heatmaps.

Snapshots are written as ``snap_<k>.csv`` (header ``x,y,rho1,rho2,sum,pressure``,
one row per cell in row-major order, 12 significant digits) plus three
grayscale P6 images per step (species 1, species 2, and their sum), one pixel
per cell, black at 0 and white at the configured ``vmax``.  Image rows run
from ymax down to ymin so the pictures are conventionally oriented.
"""

from __future__ import annotations

import os
from typing import Iterable

import numpy as np

from .energy import DensityPair
from .grids import Grid2D
from .simulate import DiagnosticsRecord


def ppm_bytes(values: np.ndarray, vmax: float = 1.0) -> bytes:
    """Grayscale P6 encoding of a cell field; one pixel per cell."""
    ny, nx = values.shape
    level = np.clip(values / vmax, 0.0, 1.0)
    gray = np.rint(level * 255.0).astype(np.uint8)
    gray = gray[::-1, :]  # top image row = largest y
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    header = f"P6\n{nx} {ny}\n255\n".encode("ascii")
    return header + rgb.tobytes()


def write_snapshot(
    rho: DensityPair,
    pressure: np.ndarray,
    t: float,
    out_dir: str,
    index: int,
    vmax: float = 1.0,
) -> list[str]:
    """Write one snapshot (CSV + three PPM heatmaps); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    grid = rho.grid
    xs = grid.xcenters()
    ys = grid.ycenters()
    total = rho.rho1 + rho.rho2
    csv_path = os.path.join(out_dir, f"snap_{index:04d}.csv")
    try:
        with open(csv_path, "w") as fh:
            fh.write("x,y,rho1,rho2,sum,pressure\n")
            for j in range(grid.ny):
                for i in range(grid.nx):
                    fh.write(
                        f"{xs[i]:.11e},{ys[j]:.11e},{rho.rho1[j, i]:.11e},"
                        f"{rho.rho2[j, i]:.11e},{total[j, i]:.11e},{pressure[j, i]:.11e}\n"
                    )
        paths = [csv_path]
        for tag, values in (("rho1", rho.rho1), ("rho2", rho.rho2), ("sum", total)):
            ppm_path = os.path.join(out_dir, f"snap_{index:04d}_{tag}.ppm")
            with open(ppm_path, "wb") as fh:
                fh.write(ppm_bytes(values, vmax))
            paths.append(ppm_path)
    except OSError as exc:
        raise OSError(f"snapshot write failed at {out_dir}: {exc}") from exc
    return paths


def read_snapshot_csv(path: str, grid: Grid2D):
    """Reload the per-cell columns of a snapshot written by ``write_snapshot``."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.shape[0] != grid.nx * grid.ny:
        raise ValueError(f"{path}: row count {data.shape[0]} does not match grid")
    cols = {}
    for k, name in enumerate(("x", "y", "rho1", "rho2", "sum", "pressure")):
        cols[name] = data[:, k].reshape(grid.shape)
    return cols


def append_diagnostics(path: str, records: Iterable[DiagnosticsRecord]) -> str:
    """Append records to ``diagnostics.csv``, writing the header when new."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "a") as fh:
        if fresh:
            fh.write(DiagnosticsRecord.COLUMNS + "\n")
        for rec in records:
            fh.write(rec.as_row() + "\n")
    return path
