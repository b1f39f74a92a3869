"""Store a heat run on disk and re-examine it with the verify command.

A sine profile decays under homogeneous Dirichlet walls; the stored
trajectory then goes through the full check set: interior caloric residual,
maximum principle, small-time continuity, positivity spread, and the
barrier residual constant.
"""

import json
import shutil
import tempfile
from pathlib import Path

import numpy as np

from meltfront import (
    Grid,
    OperatorCoefficients,
    TemperatureField,
    solve_dirichlet,
    stability_limit,
    write_trajectory,
)
from meltfront.cli import run_verify


def main():
    grid = Grid(origin=(0.0,), extent=(1.0,), counts=(41,))
    x = grid.cell_centers()[:, 0]
    u0 = np.sin(np.pi * x)
    u0[0] = u0[-1] = 0.0

    coeffs = OperatorCoefficients.laplacian()
    dt = 0.4 * stability_limit(coeffs, grid)
    traj = solve_dirichlet(coeffs, TemperatureField(grid, 0.0, u0), 0.0,
                           duration=200 * dt, dt=dt)
    print(f"{len(traj.snapshots)} levels, dt = {dt:.3e}")
    print(f"peak decayed from {traj.snapshots[0].values.max():.6f} "
          f"to {traj.snapshots[-1].values.max():.6f}")

    rundir = Path(tempfile.mkdtemp()) / "sine_run"
    write_trajectory(traj, rundir, stability_limit_used=dt / 0.4)

    out = rundir / "verify.json"
    report = run_verify(rundir, checks="all", out=out)
    print()
    print(f"verify status: {report.status}")
    for name, entry in report.diagnostics.items():
        tol = entry["tolerance"]
        tol_text = "-" if tol is None else f"{tol:.3e}"
        print(f"  {name:18s} measured {entry['measured']:.3e} "
              f"tolerance {tol_text} pass {entry['pass']}")
    print("full report, as JSON:", json.dumps(json.loads(out.read_text()),
                                              sort_keys=True)[:80], "...")
    shutil.rmtree(rundir.parent)


if __name__ == "__main__":
    main()
