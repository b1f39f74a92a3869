"""Diagnostic apparatus: barrier transforms, residuals, and audits.

Everything here measures; nothing corrects.  The barrier transform

    v(x, t) = u(x, t) - c (|x - xm|^2 + (tm - t)),   c = 1/(8 n),

is evaluated pointwise with no discretization of its own.  Applied to a
discretely caloric ``u`` the residual ``Delta v - v_t`` is an exact
constant: the quadratic contributes ``-2 n c`` through the Laplacian and
the time term contributes another ``-c`` through ``v_t = u_t + c``, so

    Delta v - v_t = -(2 n + 1) / (8 n).

``barrier_residual_constant`` returns that value; the sign is negative in
every dimension, which the run reports flag.

``heat_residual_field`` forms the raw forward-time, central-space residual
``Delta v - v_t`` per interior cell so that sign claims about barriers are
measured rather than assumed.  ``max_principle_audit`` checks attainment
of the space-time maximum on the parabolic boundary (initial slice plus
lateral boundary cells).  ``initial_continuity_metric`` tracks
``m(t) = integral |u_t - h|`` against a reference heating rate, and
``delta_of_t`` measures how far the positivity set travels from a
reference region.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import (
    TemperatureField,
    discrete_laplacian,
    neighborhood_radius,
    positivity_set,
)
from .heat import HeatTrajectory, trapezoid_weights

__all__ = [
    "BarrierParams",
    "barrier_residual_constant",
    "barrier_field",
    "heat_residual_field",
    "max_principle_audit",
    "initial_continuity_metric",
    "delta_of_t",
]


@dataclass(frozen=True)
class BarrierParams:
    """Barrier vertex ``(xm, tm)`` and dimension; the coefficient is fixed
    to ``1/(8 n)``."""

    center: tuple[float, ...]
    time: float
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if len(self.center) != self.dimension:
            raise ValueError(
                f"center has {len(self.center)} components for dimension "
                f"{self.dimension}"
            )
        if self.time <= 0:
            raise ValueError(f"vertex time must be positive, got {self.time}")

    @property
    def coefficient(self) -> float:
        return 1.0 / (8.0 * self.dimension)


def barrier_residual_constant(dim: int) -> float:
    """Exact residual ``Delta v - v_t`` of the barrier over a caloric field.

    The quadratic term loses ``2 n c`` under the Laplacian and the time
    ramp adds ``c`` to ``v_t``, leaving ``-(2 n + 1)/(8 n)``.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")
    return -(2.0 * dim + 1.0) / (8.0 * dim)


def barrier_field(traj: HeatTrajectory, params: BarrierParams) -> HeatTrajectory:
    """Subtract the parabolic barrier from every snapshot (pointwise exact)."""
    grid = traj.snapshots[0].grid
    if grid.dim != params.dimension:
        raise ValueError(
            f"barrier dimension {params.dimension} does not match grid "
            f"dimension {grid.dim}"
        )
    times = traj.times
    if not (times[0] <= params.time <= times[-1] + 1e-12):
        raise ValueError(
            f"vertex time {params.time:g} lies outside the trajectory range "
            f"[{times[0]:g}, {times[-1]:g}]"
        )
    centers = grid.cell_centers()
    sq = np.sum((centers - np.asarray(params.center)) ** 2, axis=1)
    c = params.coefficient
    out = []
    for snap in traj.snapshots:
        vals = snap.values - c * (sq + (params.time - snap.time))
        out.append(TemperatureField(grid, snap.time, vals, valid=snap.valid))
    return HeatTrajectory(out, traj.dt)


def heat_residual_field(traj: HeatTrajectory) -> list[TemperatureField]:
    """Raw residual ``Delta v - v_t`` per interior cell and time level.

    Forward difference in time, central in space; one field per level pair,
    so a trajectory with M snapshots yields M - 1 residual fields.
    """
    if len(traj.snapshots) < 2:
        raise ValueError("residuals need at least 2 time levels")
    out = []
    dt = traj.dt
    for prev, nxt in zip(traj.snapshots[:-1], traj.snapshots[1:]):
        lap = discrete_laplacian(prev)
        ut = (nxt.values - prev.values) / dt
        vals = np.where(lap.valid_mask(), lap.values - ut, 0.0)
        out.append(TemperatureField(prev.grid, prev.time, vals,
                                    valid=lap.valid_mask()))
    return out


def max_principle_audit(traj: HeatTrajectory, region: np.ndarray | None = None) -> dict:
    """Check that the space-time maximum sits on the parabolic boundary.

    The parabolic boundary is the initial slice plus the grid-boundary
    cells of every slice, intersected with ``region`` when given.  Returns
    the maximum, its location ``(level, cell)``, the attainment flag
    (tolerance ``1e-12 * scale``), and the violation magnitude.
    """
    grid = traj.snapshots[0].grid
    if region is None:
        region = np.ones(grid.total_cells, dtype=bool)
    else:
        region = np.asarray(region, dtype=bool).reshape(-1)
        if region.size != grid.total_cells:
            raise ValueError("region mask does not conform to the grid")
        if not region.any():
            raise ValueError("region mask is empty")
    lateral = grid.boundary_mask() & region

    values = traj.values_matrix()
    masked = np.where(region[None, :], values, -np.inf)
    flat_arg = int(np.argmax(masked))
    level, cell = divmod(flat_arg, grid.total_cells)
    overall_max = float(masked[level, cell])

    parabolic = np.full_like(masked, -np.inf)
    parabolic[0] = masked[0]
    parabolic[:, lateral] = masked[:, lateral]
    parabolic_max = float(np.max(parabolic))

    scale = max(1.0, float(np.max(np.abs(values[:, region]))))
    violation = max(0.0, overall_max - parabolic_max)
    return {
        "max_value": overall_max,
        "max_level": level,
        "max_cell": cell,
        "parabolic_max": parabolic_max,
        "violation": violation,
        "attained_on_boundary": violation <= 1e-12 * scale,
    }


def initial_continuity_metric(
    traj: HeatTrajectory,
    heating: TemperatureField | np.ndarray | Callable[[np.ndarray], np.ndarray],
    region: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """L1 distance of the discrete ``u_t`` from a reference heating rate.

    ``m(t_k) = sum_region w |u_t^k - h|`` with trapezoid weights in space
    and forward differences in time; defined for levels ``0 .. M-2``.
    ``heating`` may be a field, a flat array, or a callable of the cell
    centers.
    """
    if len(traj.snapshots) < 3:
        raise ValueError("continuity metric needs at least 3 time levels")
    grid = traj.snapshots[0].grid
    if isinstance(heating, TemperatureField):
        h_vals = heating.values
    elif callable(heating):
        h_vals = np.asarray(heating(grid.cell_centers()), dtype=float).reshape(-1)
    else:
        h_vals = np.asarray(heating, dtype=float).reshape(-1)
    if h_vals.size != grid.total_cells:
        raise ValueError("heating rate does not conform to the grid")
    if region is None:
        region = grid.interior_mask()
    else:
        region = np.asarray(region, dtype=bool).reshape(-1)
        if region.size != grid.total_cells:
            raise ValueError("region mask does not conform to the grid")
    if not region.any():
        raise ValueError("region mask is empty")

    weights = trapezoid_weights(grid) * region
    values = traj.values_matrix()
    ut = (values[1:] - values[:-1]) / traj.dt
    metric = np.abs(ut - h_vals[None, :]) @ weights
    return traj.times[:-1].copy(), metric


def delta_of_t(traj: HeatTrajectory, reference: np.ndarray,
               times: np.ndarray | None = None) -> np.ndarray:
    """How far the positivity set has traveled from a reference region.

    For each requested time (every level by default) this composes the
    strict positivity set at that level with the one-sided neighborhood
    radius against ``reference``: the positivity set is contained in a
    ``delta(t)``-neighborhood of the reference and in no smaller one at
    grid resolution.

    Raises
    ------
    ValueError
        If the reference mask is empty.
    """
    grid = traj.snapshots[0].grid
    reference = np.asarray(reference, dtype=bool).reshape(-1)
    if reference.size != grid.total_cells:
        raise ValueError("reference mask does not conform to the grid")
    if not reference.any():
        raise ValueError("reference mask is empty")
    if times is None:
        levels = list(traj.snapshots)
    else:
        levels = [traj.snapshots[traj.level_near(t)] for t in np.atleast_1d(times)]
    out = np.empty(len(levels))
    for i, snap in enumerate(levels):
        pos = positivity_set(snap)
        out[i] = neighborhood_radius(grid, pos, reference)
    return out
