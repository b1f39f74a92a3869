"""Explicit finite-difference machinery for parabolic operators.

The operator is ``L u = sum_jk a_jk D_jk u + sum_j b_j D_j u + c u`` with a
symmetric positive-definite ``a``.  Second derivatives use the standard
central stencil, mixed derivatives the 4-point cross
``(f[+,+] + f[-,-] - f[+,-] - f[-,+]) / (4 h_j h_k)``, first derivatives
central differences.  Coefficients are sampled at cell centers at the
current time level.

Time stepping is forward Euler on interior cells with Dirichlet data written
into the boundary cell layer at the new time.  The stability limit
``dt <= 1 / (2 sum_j max(a_jj) / h_j^2)`` is enforced, never assumed; it
reduces to ``h^2 / (2 n max a)`` on isotropic grids.

The module also carries the integral-identity tooling used by the
verification layer: whole-space heat-kernel quadrature, the discrete
conservation residual of a trajectory, caloric replacement on parabolic
cylinders, and radial averages of replacements.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, TemperatureField, ParabolicCylinder, format_float

__all__ = [
    "OperatorCoefficients",
    "HeatTrajectory",
    "apply_operator",
    "stability_limit",
    "step_explicit",
    "solve_dirichlet",
    "heat_kernel_solution",
    "heat_kernel_field",
    "conservation_residual",
    "caloric_replacement",
    "cylinder_masks",
    "radial_average",
    "trapezoid_weights",
    "interior_trapezoid_weights",
    "write_trajectory",
]

BoundaryData = float | Callable[[np.ndarray, float], np.ndarray]


def _eval_boundary(boundary: BoundaryData, points: np.ndarray, t: float) -> np.ndarray:
    if callable(boundary):
        vals = np.asarray(boundary(points, t), dtype=float)
        return np.broadcast_to(vals, (points.shape[0],)).astype(float)
    return np.full(points.shape[0], float(boundary))


class OperatorCoefficients:
    """Coefficient functions of the parabolic operator.

    Parameters
    ----------
    diffusion : callable or array-like or None
        ``a(points, t) -> (N, d, d)`` matrices at cell centers.  A constant
        ``(d, d)`` matrix or scalar is broadcast; ``None`` means the identity
        (pure Laplacian).
    drift : callable or array-like or None
        ``b(points, t) -> (N, d)``; ``None`` means zero.
    reaction : callable or array-like or None
        ``c(points, t) -> (N,)``; ``None`` means zero.
    constant_in_time : bool
        Marks coefficients whose positive-definiteness only needs checking
        once per grid.
    """

    def __init__(self, diffusion=None, drift=None, reaction=None, constant_in_time=True):
        self.diffusion = diffusion
        self.drift = drift
        self.reaction = reaction
        self.constant_in_time = bool(constant_in_time)
        self._spd_cache: set[tuple] = set()

    @classmethod
    def laplacian(cls) -> "OperatorCoefficients":
        """Pure Laplacian: identity diffusion, no drift, no reaction."""
        return cls()

    @classmethod
    def constant(cls, a=None, b=None, c=None) -> "OperatorCoefficients":
        return cls(diffusion=a, drift=b, reaction=c, constant_in_time=True)

    @property
    def is_laplacian(self) -> bool:
        return self.diffusion is None and self.drift is None and self.reaction is None

    def diffusion_matrix(self, grid: Grid, t: float) -> np.ndarray:
        """Diffusion matrices at all cell centers, shape ``(N, d, d)``."""
        d = grid.dim
        if self.diffusion is None:
            return np.broadcast_to(np.eye(d), (grid.total_cells, d, d))
        if callable(self.diffusion):
            a = np.asarray(self.diffusion(grid.cell_centers(), t), dtype=float)
        else:
            a = np.asarray(self.diffusion, dtype=float)
            if a.ndim == 0:
                a = a * np.eye(d)
        return np.broadcast_to(a, (grid.total_cells, d, d))

    def drift_vector(self, grid: Grid, t: float) -> np.ndarray | None:
        if self.drift is None:
            return None
        if callable(self.drift):
            b = np.asarray(self.drift(grid.cell_centers(), t), dtype=float)
        else:
            b = np.asarray(self.drift, dtype=float)
        return np.broadcast_to(b, (grid.total_cells, grid.dim))

    def reaction_scalar(self, grid: Grid, t: float) -> np.ndarray | None:
        if self.reaction is None:
            return None
        if callable(self.reaction):
            c = np.asarray(self.reaction(grid.cell_centers(), t), dtype=float)
        else:
            c = np.asarray(self.reaction, dtype=float)
        return np.broadcast_to(c, (grid.total_cells,))

    def check_definite(self, grid: Grid, t: float) -> None:
        """Reject diffusion matrices that are asymmetric or not positive definite."""
        if self.diffusion is None:
            return
        key = (id(grid), grid.counts, None if self.constant_in_time else t)
        if key in self._spd_cache:
            return
        a = self.diffusion_matrix(grid, t)
        if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=1e-12, atol=1e-12):
            raise ValueError("diffusion matrix must be symmetric")
        eigs = np.linalg.eigvalsh(a)
        emin = float(eigs.min())
        if emin <= 0.0:
            raise ValueError(
                f"diffusion matrix is not positive definite (min eigenvalue {emin:g})"
            )
        self._spd_cache.add(key)


def apply_operator(coeffs: OperatorCoefficients, f: TemperatureField) -> TemperatureField:
    """Apply ``L`` to a field; result valid on interior cells only.

    Raises
    ------
    ValueError
        For non-finite input or an indefinite diffusion matrix.
    """
    if not np.all(np.isfinite(f.values)):
        raise ValueError("apply_operator requires finite input values")
    g = f.grid
    d = g.dim
    t = f.time
    coeffs.check_definite(g, t)
    u = f.reshaped()
    interior = tuple(slice(1, -1) for _ in range(d))
    acc = np.zeros(u[interior].shape)

    if coeffs.is_laplacian:
        for j in range(d):
            up, dn = [slice(1, -1)] * d, [slice(1, -1)] * d
            up[j], dn[j] = slice(2, None), slice(None, -2)
            acc += (u[tuple(up)] - 2.0 * u[interior] + u[tuple(dn)]) / g.spacing[j] ** 2
    else:
        a = coeffs.diffusion_matrix(g, t).reshape(g.shape + (d, d))
        for j in range(d):
            up, dn = [slice(1, -1)] * d, [slice(1, -1)] * d
            up[j], dn[j] = slice(2, None), slice(None, -2)
            d2 = (u[tuple(up)] - 2.0 * u[interior] + u[tuple(dn)]) / g.spacing[j] ** 2
            acc += a[interior + (j, j)] * d2
        for j in range(d):
            for k in range(j + 1, d):
                pp = [slice(1, -1)] * d
                mm = [slice(1, -1)] * d
                pm = [slice(1, -1)] * d
                mp = [slice(1, -1)] * d
                pp[j], pp[k] = slice(2, None), slice(2, None)
                mm[j], mm[k] = slice(None, -2), slice(None, -2)
                pm[j], pm[k] = slice(2, None), slice(None, -2)
                mp[j], mp[k] = slice(None, -2), slice(2, None)
                cross = (u[tuple(pp)] + u[tuple(mm)] - u[tuple(pm)] - u[tuple(mp)]) / (
                    4.0 * g.spacing[j] * g.spacing[k]
                )
                acc += 2.0 * a[interior + (j, k)] * cross
        b = coeffs.drift_vector(g, t)
        if b is not None:
            b = b.reshape(g.shape + (d,))
            for j in range(d):
                up, dn = [slice(1, -1)] * d, [slice(1, -1)] * d
                up[j], dn[j] = slice(2, None), slice(None, -2)
                d1 = (u[tuple(up)] - u[tuple(dn)]) / (2.0 * g.spacing[j])
                acc += b[interior + (j,)] * d1
        c = coeffs.reaction_scalar(g, t)
        if c is not None:
            acc += c.reshape(g.shape)[interior] * u[interior]

    out = np.zeros_like(u)
    out[interior] = acc
    return TemperatureField(g, t, out.ravel(), g.interior_mask())


def stability_limit(coeffs: OperatorCoefficients, grid: Grid, t: float = 0.0) -> float:
    """Largest stable forward-Euler step, ``1 / (2 sum_j max(a_jj) / h_j^2)``."""
    if coeffs.is_laplacian:
        diag_max = [1.0] * grid.dim
    else:
        a = coeffs.diffusion_matrix(grid, t)
        diag_max = [float(a[:, j, j].max()) for j in range(grid.dim)]
    denom = 2.0 * sum(m / h**2 for m, h in zip(diag_max, grid.spacing))
    return 1.0 / denom


def step_explicit(
    coeffs: OperatorCoefficients,
    u: TemperatureField,
    dt: float,
    boundary: BoundaryData,
) -> TemperatureField:
    """One forward-Euler step; boundary cells take Dirichlet data at ``t + dt``.

    Raises
    ------
    ValueError
        If ``dt`` exceeds the computed stability limit.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    limit = stability_limit(coeffs, u.grid, u.time)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(
            f"dt={dt:g} violates the stability limit {limit:g} for this grid/operator"
        )
    lu = apply_operator(coeffs, u)
    g = u.grid
    new = u.values + dt * np.where(lu.valid_mask(), lu.values, 0.0)
    bmask = g.boundary_mask()
    pts = g.cell_centers()[bmask]
    new[bmask] = _eval_boundary(boundary, pts, u.time + dt)
    return TemperatureField(g, u.time + dt, new)


class HeatTrajectory:
    """Uniformly spaced snapshots of one evolution on a shared grid."""

    def __init__(self, snapshots: Sequence[TemperatureField], dt: float):
        snaps = tuple(snapshots)
        if not snaps:
            raise ValueError("trajectory needs at least one snapshot")
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        g = snaps[0].grid
        t0 = snaps[0].time
        for k, s in enumerate(snaps):
            if not s.grid.grids_match(g):
                raise ValueError("all snapshots must share one grid")
            expected = t0 + k * dt
            if abs(s.time - expected) > 1e-9 * max(1.0, abs(expected)):
                raise ValueError(
                    f"snapshot {k} at t={s.time} breaks the uniform step (expected {expected})"
                )
        self.snapshots = snaps
        self.dt = float(dt)

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    def values_matrix(self) -> np.ndarray:
        """Stacked values, shape ``(levels, cells)``."""
        return np.stack([s.values for s in self.snapshots])

    def level_near(self, t: float) -> int:
        """Index of the snapshot at time ``t`` (must match within 1e-9)."""
        times = self.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no snapshot at t={t}; nearest is {times[k]}")
        return k


def solve_dirichlet(
    coeffs: OperatorCoefficients,
    initial: TemperatureField,
    boundary: BoundaryData,
    duration: float,
    dt: float,
) -> HeatTrajectory:
    """March ``ceil(duration / dt)`` explicit steps from the initial field."""
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    n_steps = max(1, int(math.ceil(duration / dt - 1e-12)))
    snaps = [initial]
    u = initial
    for _ in range(n_steps):
        u = step_explicit(coeffs, u, dt, boundary)
        snaps.append(u)
    return HeatTrajectory(snaps, dt)


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Tensor-product trapezoid weights over cell centers (flat array)."""
    w = np.ones(1)
    for j in range(grid.dim):
        wj = np.full(grid.counts[j], grid.spacing[j])
        wj[0] *= 0.5
        wj[-1] *= 0.5
        w = np.outer(w, wj).ravel()
    return w


def interior_trapezoid_weights(grid: Grid) -> np.ndarray:
    """Trapezoid weights of the interior sub-box; zero on boundary cells."""
    full = np.zeros(grid.counts)
    w = np.ones(1)
    for j in range(grid.dim):
        wj = np.full(grid.counts[j] - 2, grid.spacing[j])
        wj[0] *= 0.5
        wj[-1] *= 0.5
        w = np.outer(w, wj).ravel()
    interior = tuple(slice(1, -1) for _ in range(grid.dim))
    full[interior] = w.reshape(tuple(c - 2 for c in grid.counts))
    return full.ravel()


def heat_kernel_solution(phi: TemperatureField, x: Sequence[float], t: float) -> float:
    """Whole-space heat solution ``(4 pi t)^(-n/2) int phi(y) exp(-|x-y|^2/4t) dy``.

    The integral is tensor-product trapezoid quadrature over ``phi``'s grid,
    so the domain must be wide enough that the Gaussian tail outside it is
    negligible for the intended use.

    Raises
    ------
    ValueError
        For ``t <= 0``.
    """
    if t <= 0:
        raise ValueError(f"heat kernel requires t > 0, got {t}")
    g = phi.grid
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != g.dim:
        raise ValueError(f"evaluation point has {x.size} coordinates for a {g.dim}-d grid")
    pts = g.cell_centers()
    r2 = ((pts - x) ** 2).sum(axis=1)
    kern = np.exp(-r2 / (4.0 * t)) * (4.0 * np.pi * t) ** (-g.dim / 2.0)
    return float(np.sum(trapezoid_weights(g) * phi.values * kern))


def heat_kernel_field(
    phi: TemperatureField, t: float, eval_grid: Grid | None = None
) -> TemperatureField:
    """Heat-kernel solution evaluated at every cell center of ``eval_grid``."""
    if t <= 0:
        raise ValueError(f"heat kernel requires t > 0, got {t}")
    g = phi.grid
    target = eval_grid if eval_grid is not None else g
    src = g.cell_centers()
    wphi = trapezoid_weights(g) * phi.values
    norm = (4.0 * np.pi * t) ** (-g.dim / 2.0)
    pts = target.cell_centers()
    out = np.empty(target.total_cells)
    chunk = max(1, 2**22 // max(1, src.shape[0]))
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk]
        r2 = ((block[:, None, :] - src[None, :, :]) ** 2).sum(axis=2)
        out[start : start + block.shape[0]] = np.exp(-r2 / (4.0 * t)) @ wphi
    return TemperatureField(target, phi.time + t, norm * out)


def conservation_residual(traj: HeatTrajectory) -> float:
    """Discrete defect of ``int int (u_t - lap u) dx dt`` over the trajectory.

    The ``u_t`` integral telescopes exactly (forward differences summed over
    the levels); the Laplacian integral uses trapezoid rules in both space
    (interior cells) and time.  For a trajectory produced by the explicit
    scheme the residual is the pure time-quadrature defect, O(dt).

    Raises
    ------
    ValueError
        For trajectories with fewer than two snapshots.
    """
    if len(traj) < 2:
        raise ValueError("conservation residual needs at least two snapshots")
    g = traj.grid
    vals = traj.values_matrix().reshape((len(traj),) + g.counts)
    w_space = interior_trapezoid_weights(g).reshape(g.counts)

    interior = tuple(slice(1, -1) for _ in range(g.dim))
    # per-level integral of the discrete Laplacian over the interior box
    lap_int = np.zeros(len(traj))
    for j in range(g.dim):
        up, dn = [slice(1, -1)] * g.dim, [slice(1, -1)] * g.dim
        up[j], dn[j] = slice(2, None), slice(None, -2)
        term = (
            vals[(slice(None),) + tuple(up)]
            - 2.0 * vals[(slice(None),) + interior]
            + vals[(slice(None),) + tuple(dn)]
        ) / g.spacing[j] ** 2
        lap_int += (term * w_space[interior]).reshape(len(traj), -1).sum(axis=1)

    du = ((vals[-1] - vals[0]) * w_space)[interior].sum()
    w_time = np.full(len(traj), traj.dt)
    w_time[0] *= 0.5
    w_time[-1] *= 0.5
    return float(du - np.sum(w_time * lap_int))


# ---------------------------------------------------------------------------
# caloric replacement
# ---------------------------------------------------------------------------

def cylinder_masks(grid: Grid, cyl: ParabolicCylinder) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat boolean masks ``(ball, lateral, interior)`` for a cylinder's ball.

    The ball collects cells with center strictly inside ``B(center, radius)``;
    lateral cells are ball cells with a face neighbor outside the ball (or
    off the grid); interior cells are the rest.
    """
    if len(cyl.center) != grid.dim:
        raise ValueError("cylinder center dimension does not match grid")
    pts = grid.cell_centers()
    c = np.asarray(cyl.center)
    ball = ((pts - c) ** 2).sum(axis=1) < cyl.radius**2
    ball_nd = ball.reshape(grid.counts)
    lateral_nd = np.zeros_like(ball_nd)
    for j in range(grid.dim):
        for shift in (1, -1):
            neighbor_outside = np.ones_like(ball_nd)
            src = [slice(None)] * grid.dim
            dst = [slice(None)] * grid.dim
            if shift == 1:
                src[j], dst[j] = slice(1, None), slice(None, -1)
            else:
                src[j], dst[j] = slice(None, -1), slice(1, None)
            neighbor_outside[tuple(dst)] = ~ball_nd[tuple(src)]
            lateral_nd |= ball_nd & neighbor_outside
    lateral = lateral_nd.ravel()
    return ball, lateral, ball & ~lateral


def _require_resolved(grid: Grid, cyl: ParabolicCylinder) -> None:
    for j in range(grid.dim):
        centers = grid.axis_centers(j)
        across = int(np.count_nonzero(np.abs(centers - cyl.center[j]) < cyl.radius))
        if across < 4:
            raise ValueError(
                f"cylinder radius {cyl.radius:g} spans only {across} cells along axis {j}; "
                "need at least 4"
            )


def caloric_replacement(w: HeatTrajectory, cyl: ParabolicCylinder) -> HeatTrajectory:
    """Solve the heat equation inside a cylinder with ``w`` as parabolic data.

    The returned trajectory copies ``w`` outside the ball and on the lateral
    cells, starts from ``w`` on the cylinder's bottom time slice, and steps
    interior ball cells explicitly.  Its levels are the sub-range of ``w``'s
    levels covering the cylinder's time slab.

    Raises
    ------
    ValueError
        If the ball is not resolved by at least 4 cells across, the step
        violates the pure-Laplacian stability limit, or the slab does not
        fit the trajectory's time range.
    """
    g = w.grid
    _require_resolved(g, cyl)
    limit = 1.0 / (2.0 * sum(1.0 / h**2 for h in g.spacing))
    if w.dt > limit * (1.0 + 1e-12):
        raise ValueError(
            f"trajectory step dt={w.dt:g} violates the stability limit {limit:g}"
        )
    times = w.times
    i_top = w.level_near(cyl.t_top)
    if cyl.t_bottom < times[0] - 1e-9 * max(1.0, abs(times[0])):
        raise ValueError("cylinder time slab starts before the trajectory")
    i_bot = int(np.searchsorted(times, cyl.t_bottom - 1e-12))
    if i_top - i_bot < 1:
        raise ValueError("cylinder time slab spans fewer than two levels")

    ball, lateral, interior = cylinder_masks(g, cyl)
    if not interior.any():
        raise ValueError("cylinder ball has no interior cells at this resolution")

    ball_nd = ball.reshape(g.counts)
    int_nd = interior.reshape(g.counts)
    z = w.snapshots[i_bot].values.copy()
    out = [TemperatureField(g, times[i_bot], z.copy())]
    for k in range(i_bot, i_top):
        z_nd = z.reshape(g.counts)
        lap = np.zeros_like(z_nd)
        for j in range(g.dim):
            up, dn = [slice(1, -1)] * g.dim, [slice(1, -1)] * g.dim
            up[j], dn[j] = slice(2, None), slice(None, -2)
            inter = tuple(slice(1, -1) for _ in range(g.dim))
            lap[inter] += (
                z_nd[tuple(up)] - 2.0 * z_nd[inter] + z_nd[tuple(dn)]
            ) / g.spacing[j] ** 2
        z_next = w.snapshots[k + 1].values.copy()
        stepped = z + w.dt * lap.ravel()
        z_next[interior] = stepped[interior]
        z = z_next
        out.append(TemperatureField(g, times[k + 1], z.copy()))
    return HeatTrajectory(out, w.dt)


def radial_average(
    w: HeatTrajectory,
    x0: Sequence[float],
    t0: float,
    radius: float,
    n_radii: int = 5,
) -> float:
    """Average of caloric replacements over cylinder radii in ``[R, 2R]``.

    Computes ``(1/R) * int_R^{2R} z_rho(x0, t0) d rho`` with an ``n_radii``
    point trapezoid rule, where ``z_rho`` is the caloric replacement on the
    cylinder of radius ``rho`` topped at ``(x0, t0)``.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if n_radii < 2:
        raise ValueError("need at least 2 radii for the trapezoid rule")
    g = w.grid
    x0 = tuple(float(v) for v in x0)
    lo = np.asarray(g.origin)
    hi = lo + np.asarray(g.extent)
    big = 2.0 * radius
    if np.any(np.asarray(x0) - big < lo - 1e-12) or np.any(np.asarray(x0) + big > hi + 1e-12):
        raise ValueError("largest cylinder does not fit inside the grid")
    if t0 - big**2 < w.times[0] - 1e-9:
        raise ValueError("largest cylinder time slab starts before the trajectory")

    center_cell = int(np.argmin(((g.cell_centers() - np.asarray(x0)) ** 2).sum(axis=1)))
    rhos = np.linspace(radius, 2.0 * radius, n_radii)
    wts = np.full(n_radii, rhos[1] - rhos[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    total = 0.0
    for rho, wt in zip(rhos, wts):
        z = caloric_replacement(w, ParabolicCylinder(x0, t0, float(rho)))
        total += wt * z.snapshots[-1].values[center_cell]
    return float(total / radius)


# ---------------------------------------------------------------------------
# trajectory export
# ---------------------------------------------------------------------------

def write_trajectory(
    traj: HeatTrajectory,
    outdir: str | Path,
    prefix: str = "u",
    stability_limit_used: float | None = None,
    diagnostics: dict | None = None,
) -> Path:
    """Write one CSV per snapshot plus a manifest JSON; returns the manifest path."""
    from .grid import write_field_csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for k, snap in enumerate(traj.snapshots):
        name = f"{prefix}_{k:06d}.csv"
        write_field_csv(snap, outdir / name)
        names.append(name)
    manifest = {
        "dt": traj.dt,
        "times": [float(t) for t in traj.times],
        "snapshots": names,
        "stability_limit": stability_limit_used,
        "diagnostics": diagnostics or {},
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path
