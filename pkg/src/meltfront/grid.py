"""Uniform cell-centered grids and scalar fields on them.

Conventions used throughout the package:

* A grid covers the axis-aligned box ``[origin, origin + extent]`` in 1, 2,
  or 3 dimensions.  Each axis is split into ``counts[j]`` cells of width
  ``spacing[j] = extent[j] / counts[j]``; samples live at cell centers
  ``origin[j] + (i + 1/2) * spacing[j]``.
* Field values are stored flat in row-major (C) order, so the last axis
  varies fastest.  ``Grid.flat_index`` / ``Grid.multi_index`` expose the
  index arithmetic explicitly.
* Stencil operations are defined on interior cells only.  The outermost
  layer of cells carries boundary data; operations that cannot produce a
  value there return a field whose ``valid`` mask excludes those cells.

Serialization: ``write_field_csv``/``read_field_csv`` implement the plain
text format ``# grid dim=<d> counts=<...> spacing=<...> time=<t>`` followed
by one value per line (row-major, 17 significant digits).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Grid",
    "TemperatureField",
    "ParabolicCylinder",
    "discrete_laplacian",
    "parabolic_distance",
    "positivity_set",
    "neighborhood_radius",
    "write_field_csv",
    "read_field_csv",
    "format_float",
]

#: Decimal formatting used for every number the package serializes.
#: 17 significant digits round-trip IEEE doubles exactly.
FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    """Render one float with 17 significant digits."""
    return FLOAT_FMT % float(x)


def _as_tuple(x: Sequence[float] | float, dim: int, name: str) -> tuple[float, ...]:
    if np.isscalar(x):
        return tuple(float(x) for _ in range(dim))
    t = tuple(float(v) for v in x)  # type: ignore[union-attr]
    if len(t) != dim:
        raise ValueError(f"{name} must have {dim} entries, got {len(t)}")
    return t


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on an axis-aligned box.

    Parameters
    ----------
    origin : tuple of float
        Lower corner of the box, one entry per axis.
    extent : tuple of float
        Box edge lengths, strictly positive.
    counts : tuple of int
        Number of cells per axis; at least 4 so an interior exists.

    Notes
    -----
    ``spacing[j] = extent[j] / counts[j]`` and cell centers sit at
    ``origin[j] + (i + 0.5) * spacing[j]``.
    """

    origin: tuple[float, ...]
    extent: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        if not 1 <= len(self.counts) <= 3:
            raise ValueError(f"grid dimension must be 1, 2, or 3, got {len(self.counts)}")
        if len(self.origin) != len(self.counts) or len(self.extent) != len(self.counts):
            raise ValueError("origin, extent, and counts must have matching lengths")
        if any(e <= 0 for e in self.extent):
            raise ValueError(f"extent must be positive, got {self.extent}")
        if any(c < 4 for c in self.counts):
            raise ValueError(f"need at least 4 cells per axis, got {self.counts}")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extent, self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def total_cells(self) -> int:
        return int(np.prod(self.counts))

    def axis_centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        h = self.spacing[axis]
        return self.origin[axis] + (np.arange(self.counts[axis]) + 0.5) * h

    def cell_centers(self) -> np.ndarray:
        """All cell centers, shape ``(total_cells, dim)``, row-major order."""
        axes = [self.axis_centers(j) for j in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def flat_index(self, multi: Sequence[int]) -> int:
        """Row-major flat index of a cell given per-axis indices."""
        idx = 0
        for j, (i, c) in enumerate(zip(multi, self.counts)):
            if not 0 <= i < c:
                raise ValueError(f"index {i} out of range for axis {j} with {c} cells")
            idx = idx * c + i
        return idx

    def multi_index(self, flat: int) -> tuple[int, ...]:
        """Inverse of :meth:`flat_index`."""
        if not 0 <= flat < self.total_cells:
            raise ValueError(f"flat index {flat} out of range")
        out = []
        for c in reversed(self.counts):
            out.append(flat % c)
            flat //= c
        return tuple(reversed(out))

    def interior_mask(self) -> np.ndarray:
        """Boolean flat mask of cells with a full stencil neighborhood."""
        m = np.zeros(self.counts, dtype=bool)
        m[tuple(slice(1, -1) for _ in range(self.dim))] = True
        return m.ravel()

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask()

    def boundary_distance(self) -> np.ndarray:
        """Distance from each cell center to the boundary of the box (flat)."""
        pts = self.cell_centers()
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.extent)
        return np.minimum(pts - lo, hi - pts).min(axis=1)

    def grids_match(self, other: "Grid") -> bool:
        return (
            self.counts == other.counts
            and np.allclose(self.origin, other.origin)
            and np.allclose(self.extent, other.extent)
        )


@dataclass(frozen=True)
class TemperatureField:
    """Scalar samples on a :class:`Grid` at one instant.

    ``values`` is flat, row-major, and finite on every valid cell.  ``valid``
    is ``None`` when all cells hold usable values; stencil outputs set it to
    their interior mask.  Arrays are frozen after construction.
    """

    grid: Grid
    time: float
    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float).ravel())
        if vals.size != self.grid.total_cells:
            raise ValueError(
                f"field has {vals.size} values for a grid of {self.grid.total_cells} cells"
            )
        valid = self.valid
        if valid is not None:
            valid = np.asarray(valid, dtype=bool).ravel()
            if valid.size != vals.size:
                raise ValueError("valid mask size does not match values")
            valid.setflags(write=False)
        check = vals if valid is None else vals[valid]
        if check.size and not np.all(np.isfinite(check)):
            raise ValueError("field contains non-finite values on valid cells")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "time", float(self.time))

    def reshaped(self) -> np.ndarray:
        """Read-only view shaped like the grid."""
        return self.values.reshape(self.grid.shape)

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.grid.total_cells, dtype=bool)
        return self.valid

    def with_values(self, values: np.ndarray, time: float | None = None) -> "TemperatureField":
        return TemperatureField(
            self.grid, self.time if time is None else time, values, self.valid
        )


@dataclass(frozen=True)
class ParabolicCylinder:
    """Backward space-time cylinder ``B(center, radius) x (t_top - radius^2, t_top]``."""

    center: tuple[float, ...]
    t_top: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "t_top", float(self.t_top))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError(f"cylinder radius must be positive, got {self.radius}")

    @property
    def t_bottom(self) -> float:
        return self.t_top - self.radius**2


# ---------------------------------------------------------------------------
# stencil and set operations
# ---------------------------------------------------------------------------

def discrete_laplacian(f: TemperatureField) -> TemperatureField:
    """Second-order Laplacian stencil, valid on interior cells.

    Interior cells receive ``sum_j (f[i+e_j] - 2 f[i] + f[i-e_j]) / h_j^2``;
    boundary cells are flagged invalid and hold 0.

    Raises
    ------
    ValueError
        If the input contains non-finite values.
    """
    if not np.all(np.isfinite(f.values)):
        raise ValueError("discrete_laplacian requires finite input values")
    g = f.grid
    u = f.reshaped()
    out = np.zeros_like(u)
    interior = tuple(slice(1, -1) for _ in range(g.dim))
    acc = np.zeros_like(u[interior])
    for j in range(g.dim):
        h2 = g.spacing[j] ** 2
        up = [slice(1, -1)] * g.dim
        dn = [slice(1, -1)] * g.dim
        up[j] = slice(2, None)
        dn[j] = slice(None, -2)
        acc += (u[tuple(up)] - 2.0 * u[interior] + u[tuple(dn)]) / h2
    out[interior] = acc
    return TemperatureField(g, f.time, out.ravel(), g.interior_mask())


def parabolic_distance(x: Sequence[float], t: float, x0: Sequence[float], t0: float) -> float:
    """Parabolic distance ``(|x - x0|^2 + |t - t0|)^(1/2)``."""
    dx = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    return float(np.sqrt(np.dot(dx, dx) + abs(float(t) - float(t0))))


def positivity_set(f: TemperatureField, region: np.ndarray | None = None) -> np.ndarray:
    """Boolean flat mask of cells where ``f > 0`` strictly.

    ``region`` optionally restricts the search; invalid cells never qualify.
    """
    mask = (f.values > 0.0) & f.valid_mask()
    if region is not None:
        region = np.asarray(region, dtype=bool).ravel()
        if region.size != f.values.size:
            raise ValueError("region mask size does not match field")
        mask &= region
    return mask


def neighborhood_radius(grid: Grid, cells_a: np.ndarray, cells_b: np.ndarray) -> float:
    """Smallest radius ``delta`` with ``A`` inside the delta-neighborhood of ``B``.

    Computed over cell centers: ``max_{a in A} min_{b in B} |a - b|``.
    Returns 0 for empty ``A``; raises for empty ``B`` when ``A`` is not empty.
    """
    a = np.asarray(cells_a, dtype=bool).ravel()
    b = np.asarray(cells_b, dtype=bool).ravel()
    if a.size != grid.total_cells or b.size != grid.total_cells:
        raise ValueError("cell masks must match the grid size")
    if not a.any():
        return 0.0
    if not b.any():
        raise ValueError("reference set B is empty but A is not")
    pts = grid.cell_centers()
    dists, _ = cKDTree(pts[b]).query(pts[a])
    return float(np.max(dists))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _header_line(field: TemperatureField) -> str:
    g = field.grid
    counts = ",".join(str(c) for c in g.counts)
    spacing = ",".join(format_float(s) for s in g.spacing)
    return f"# grid dim={g.dim} counts={counts} spacing={spacing} time={format_float(field.time)}"


def field_to_csv_text(field: TemperatureField) -> str:
    """Serialize a field to the grid CSV format (header + one value per line)."""
    lines = [_header_line(field)]
    lines.extend(format_float(v) for v in field.values)
    return "\n".join(lines) + "\n"


def write_field_csv(field: TemperatureField, path: str | Path) -> None:
    Path(path).write_text(field_to_csv_text(field))


def read_field_csv(path: str | Path) -> TemperatureField:
    """Parse the grid CSV format.

    The header does not carry the box origin, so the grid is reconstructed
    with origin 0 on every axis.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# grid "):
        raise ValueError(f"{path}: missing grid header line")
    tokens = dict(
        item.split("=", 1) for item in lines[0][len("# grid "):].split() if "=" in item
    )
    try:
        dim = int(tokens["dim"])
        counts = tuple(int(c) for c in tokens["counts"].split(","))
        spacing = tuple(float(s) for s in tokens["spacing"].split(","))
        time = float(tokens["time"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed grid header: {lines[0]!r}") from exc
    if len(counts) != dim or len(spacing) != dim:
        raise ValueError(f"{path}: header dim does not match counts/spacing")
    extent = tuple(c * s for c, s in zip(counts, spacing))
    grid = Grid(origin=(0.0,) * dim, extent=extent, counts=counts)
    values = np.array([float(v) for v in lines[1:] if v.strip()], dtype=float)
    return TemperatureField(grid, time, values)
