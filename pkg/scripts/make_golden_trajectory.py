"""Regenerate the frozen v1 trajectory fixture used by the format test.

Run from the repository root:

    python3 scripts/make_golden_trajectory.py

Only rerun this when the trajectory schema version is deliberately
bumped; the test exists to catch accidental format drift.
"""

from pathlib import Path

from platelab.constitutive import NeoHookeanMaterial
from platelab.fem_solver import SolverConfig
from platelab.mesh_forge import build_solid_plate_mesh
from platelab.world_env import (
    Session,
    export_trajectory,
    gen_action_sequence,
    rollout,
)


def main():
    mesh = build_solid_plate_mesh(resolution=2, tiling=(1, 1, 1))
    cfg = SolverConfig(newton_rtol=1e-10, newton_atol=1e-12,
                       newton_max_iter=40, newton_criterion="residual",
                       linear_solver="direct")
    session = Session(mesh, NeoHookeanMaterial(mu=1.0, lam=10.0),
                      "quasistatic", cfg=cfg, seed=0)
    traj = rollout(session, gen_action_sequence("random", 3, seed=2024))
    dest = Path(__file__).resolve().parent.parent / "tests" / "data" / \
        "golden_traj_v1.leit"
    dest.parent.mkdir(parents=True, exist_ok=True)
    export_trajectory(traj, dest)
    print(f"wrote {dest} ({dest.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
