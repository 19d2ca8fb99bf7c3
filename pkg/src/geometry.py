"""
Grid geometry for COLUMN PCG.
Builds the graded vertical grid and the horizontal panel geometry (cell
areas and edge coupling coefficients) that parameterise the operator.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError


log = logging.getLogger(__name__)

PANEL_AREA = 4.0 * np.pi / 6.0


@dataclass(frozen=True)
class VerticalGrid:
    """Radial grid points r_0 = 1 < r_1 < ... < r_nz = 1 + H_atmos."""

    n_z: int
    h_atmos: float
    r: np.ndarray

    @property
    def spacing(self) -> np.ndarray:
        """Cell thicknesses r[k+1] - r[k]."""
        return np.diff(self.r)


@dataclass(frozen=True)
class PanelGeometry:
    """
    Areas and coupling coefficients of an m x m horizontal panel.

    ``alpha_east[i, j]`` couples cell (i, j) with (i+1, j) and
    ``alpha_north[i, j]`` couples (i, j) with (i, j+1); each edge is stored
    once and read by both adjacent cells.
    """

    m: int
    cell_area: np.ndarray    # (m, m)
    alpha_east: np.ndarray   # (m-1, m)
    alpha_north: np.ndarray  # (m, m-1)
    alpha_diag: np.ndarray   # (m, m)
    kind: str = "planar"

    @property
    def total_area(self) -> float:
        return float(np.sum(self.cell_area))

    def neighbour_alphas(self) -> tuple:
        """
        Per-cell coefficients towards (i-1, j), (i+1, j), (i, j-1), (i, j+1).

        Missing neighbours get 0. Each value is a copy of the single stored
        edge coefficient, so both cells see the same bits.
        """
        m = self.m
        west = np.zeros((m, m))
        east = np.zeros((m, m))
        south = np.zeros((m, m))
        north = np.zeros((m, m))
        east[:-1, :] = self.alpha_east
        west[1:, :] = self.alpha_east
        north[:, :-1] = self.alpha_north
        south[:, 1:] = self.alpha_north
        return west, east, south, north


def _sum_edges(m: int, alpha_east: np.ndarray, alpha_north: np.ndarray) -> np.ndarray:
    """alpha_T as the sum over the existing edges of each cell."""
    alpha_diag = np.zeros((m, m))
    alpha_diag[:-1, :] += alpha_east
    alpha_diag[1:, :] += alpha_east
    alpha_diag[:, :-1] += alpha_north
    alpha_diag[:, 1:] += alpha_north
    return alpha_diag


def build_graded_vertical_grid(n_z: int, h_atmos: float) -> VerticalGrid:
    """
    Vertical grid r_k = 1 + (k/n_z)^2 * H_atmos, finer near the ground.

    Args:
        n_z: Number of vertical cells
        h_atmos: Atmosphere depth in units of the earth radius

    Returns:
        VerticalGrid with n_z + 1 strictly increasing radii
    """
    if int(n_z) != n_z or n_z < 1:
        raise InvalidArgumentError(f"n_z must be a positive integer (got {n_z})")
    if not h_atmos > 0:
        raise InvalidArgumentError(f"h_atmos must be positive (got {h_atmos})")

    n_z = int(n_z)
    k = np.arange(n_z + 1, dtype=np.float64)
    r = 1.0 + (k / n_z) ** 2 * h_atmos
    r[0] = 1.0
    r[-1] = 1.0 + h_atmos
    r.setflags(write=False)
    return VerticalGrid(n_z=n_z, h_atmos=float(h_atmos), r=r)


def _gnomonic(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Central projection of (X, Y, 1) onto the unit sphere, shape (..., 3)."""
    norm = np.sqrt(1.0 + X * X + Y * Y)
    return np.stack([X / norm, Y / norm, 1.0 / norm], axis=-1)


def _arc(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Great-circle distance between unit vectors."""
    cross = np.linalg.norm(np.cross(p, q), axis=-1)
    dot = np.sum(p * q, axis=-1)
    return np.arctan2(cross, dot)


def _triangle_excess(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Spherical excess of the geodesic triangle abc (Van Oosterom-Strackee)."""
    triple = np.abs(np.sum(a * np.cross(b, c), axis=-1))
    denom = 1.0 + np.sum(a * b, axis=-1) + np.sum(b * c, axis=-1) + np.sum(c * a, axis=-1)
    return 2.0 * np.arctan2(triple, denom)


def build_cubed_sphere_panel(m: int) -> PanelGeometry:
    """
    One gnomonic cubed-sphere panel with m x m cells.

    The uniform grid on [-1, 1]^2 is mapped to the unit sphere by central
    projection. Cell areas are spherical excesses of the geodesic
    quadrilaterals; edge coefficients are the arc length of the shared edge
    over the arc distance between the projected cell midpoints.
    """
    if int(m) != m or m < 1:
        raise InvalidArgumentError(f"m must be a positive integer (got {m})")
    m = int(m)

    nodes = np.linspace(-1.0, 1.0, m + 1)
    mids = 0.5 * (nodes[1:] + nodes[:-1])

    NX, NY = np.meshgrid(nodes, nodes, indexing="ij")
    P = _gnomonic(NX, NY)                      # (m+1, m+1, 3)
    CX, CY = np.meshgrid(mids, mids, indexing="ij")
    C = _gnomonic(CX, CY)                      # (m, m, 3)

    p00 = P[:-1, :-1]
    p10 = P[1:, :-1]
    p11 = P[1:, 1:]
    p01 = P[:-1, 1:]
    cell_area = _triangle_excess(p00, p10, p11) + _triangle_excess(p00, p11, p01)

    # edge between (i, j) and (i+1, j) runs from node (i+1, j) to (i+1, j+1)
    east_len = _arc(P[1:-1, :-1], P[1:-1, 1:])
    east_dist = _arc(C[:-1, :], C[1:, :])
    alpha_east = east_len / east_dist

    # edge between (i, j) and (i, j+1) runs from node (i, j+1) to (i+1, j+1)
    north_len = _arc(P[:-1, 1:-1], P[1:, 1:-1])
    north_dist = _arc(C[:, :-1], C[:, 1:])
    alpha_north = north_len / north_dist

    alpha_diag = _sum_edges(m, alpha_east, alpha_north)

    log.debug("cubed sphere panel m=%d: area sum %.15f", m, cell_area.sum())
    return PanelGeometry(
        m=m,
        cell_area=cell_area,
        alpha_east=alpha_east,
        alpha_north=alpha_north,
        alpha_diag=alpha_diag,
        kind="cubed-sphere",
    )


def build_planar_panel(m: int, extent: float) -> PanelGeometry:
    """Flat square panel of side ``extent`` split into m x m equal cells."""
    if int(m) != m or m < 1:
        raise InvalidArgumentError(f"m must be a positive integer (got {m})")
    if not extent > 0:
        raise InvalidArgumentError(f"extent must be positive (got {extent})")
    m = int(m)

    h = extent / m
    cell_area = np.full((m, m), h * h)
    alpha_east = np.full((m - 1, m), h / h)
    alpha_north = np.full((m, m - 1), h / h)
    alpha_diag = _sum_edges(m, alpha_east, alpha_north)

    return PanelGeometry(
        m=m,
        cell_area=cell_area,
        alpha_east=alpha_east,
        alpha_north=alpha_north,
        alpha_diag=alpha_diag,
        kind="planar",
    )


def anisotropy(geometry: PanelGeometry, vgrid: VerticalGrid, lambda2: float) -> np.ndarray:
    """
    gamma^2 = (lambda * dx / dz)^2 for every cell, shape (m, m, n_z).

    dx is the square root of the cell area and dz the local layer
    thickness. Diagnostic only.
    """
    dx2 = geometry.cell_area[:, :, np.newaxis]
    dz = vgrid.spacing[np.newaxis, np.newaxis, :]
    return lambda2 * dx2 / (dz * dz)


def dump_geometry_csv(geometry: PanelGeometry, output_path: str) -> str:
    """
    Write one row per cell: i, j, cell_area, alpha_diag and the four
    neighbour coefficients (0 where the neighbour does not exist).
    """
    west, east, south, north = geometry.neighbour_alphas()
    path = Path(output_path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["i", "j", "cell_area", "alpha_diag",
                         "alpha_west", "alpha_east", "alpha_south", "alpha_north"])
        for i in range(geometry.m):
            for j in range(geometry.m):
                writer.writerow([
                    i, j,
                    repr(float(geometry.cell_area[i, j])),
                    repr(float(geometry.alpha_diag[i, j])),
                    repr(float(west[i, j])),
                    repr(float(east[i, j])),
                    repr(float(south[i, j])),
                    repr(float(north[i, j])),
                ])
    return str(path)
