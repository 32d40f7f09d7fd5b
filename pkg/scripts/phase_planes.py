"""Phase-plane and basin data for the two-action game.

Writes, for each rule, the rate field and a fan of trajectories at a regret
below and above the LA threshold, plus 41x41 basin maps, as CSV under --out.
"""

import argparse
import os

import numpy as np

from hla_lab import experiments as ex
from hla_lab.dynamics import Trajectory, integrate_phase
from hla_lab.game import CoordinationGameSpec
from hla_lab.learners import RULES, UpdateRule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--g", type=float, nargs="+", default=[0.4, 1.0])
    ap.add_argument("--resolution", type=int, default=21)
    ap.add_argument("--out", default="results/phase")
    args = ap.parse_args()

    starts = [(0.5 + 0.1 * np.cos(a), 0.5 + 0.1 * np.sin(a)) for a in np.linspace(0, 2 * np.pi, 12, endpoint=False)]
    for g in args.g:
        game = CoordinationGameSpec.from_regret("two", g).tensor()
        for kind in RULES:
            rule = UpdateRule(kind, args.eta)
            tag = f"{kind}_g{g:g}"
            ex.write_field_csv(os.path.join(args.out, f"field_{tag}.csv"),
                               ex.phase_field(rule, game, args.resolution, box=(-0.5, 1.5, -0.5, 1.5)))
            fan = integrate_phase(rule, game, starts, horizon=5.0)
            for k in range(len(starts)):
                traj = Trajectory(fan.t, fan.theta[:, k], fan.diverged)
                ex.write_trajectory_csv(os.path.join(args.out, f"traj_{tag}_{k:02d}.csv"), traj)
            basin = ex.basin_map(rule, game, args.lr, resolution=41)
            ex.write_basin_csv(os.path.join(args.out, f"basin_{tag}.csv"), basin)
            print(f"{kind:<6} g={g:<5g} miscoordination fraction {basin.miscoord_fraction:.3f}")


if __name__ == "__main__":
    main()
