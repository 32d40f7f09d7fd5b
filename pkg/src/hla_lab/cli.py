"""Command-line front end: ``hla-lab <subcommand> [flags]``.

Exit codes: 0 success, 1 a theorem check failed, 2 usage error. Data goes to
stdout or ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import experiments as ex
from .config import ConfigError, read_kv
from .game import CoordinationGameSpec, InvalidGameError, JointPolicy, PolicyError
from .learners import RULES, RuleError, UpdateRule

SUBCOMMANDS = ("check-theorems", "phase", "basin", "train", "sweep", "fig2")

# flag name -> (type, default). Defaults apply after the config file.
FLAGS = {
    "rule": (str, "hla"),
    "g": (str, None),
    "eta": (float, 1.0),
    "lr": (float, 0.05),
    "alpha": (float, None),
    "k": (float, None),
    "game": (str, None),
    "runs": (int, None),
    "seed": (int, ex.DEFAULT_SEED),
    "hierarchy": (str, None),
    "out": (str, None),
    "format": (str, "csv"),
    "jobs": (int, None),
    "resolution": (int, None),
    "max_iter": (int, 200_000),
    "tol": (float, 1e-8),
    "start": (str, None),
    "step": (float, 0.01),
    "horizon": (float, 50.0),
    "constrained": (bool, False),
    "init": (str, None),
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--rule", choices=RULES)
    common.add_argument("--g", help="miscoordination regret (comma list for sweep)")
    common.add_argument("--eta", type=float, help="prediction length")
    common.add_argument("--lr", type=float, help="learning rate")
    common.add_argument("--alpha", type=float, help="coordination reward (two-action game)")
    common.add_argument("--k", type=float, help="miscoordination penalty")
    common.add_argument("--game", choices=("two", "three"))
    common.add_argument("--runs", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--hierarchy", help="'random', 'fixed' or agents lowest level first, e.g. 2,1")
    common.add_argument("--out", help="output file (directory for sweep/fig2)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--jobs", type=int, help="worker processes for sweeps")
    common.add_argument("--resolution", type=int, help="grid points per axis")
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--start", help="initial theta1,theta2 (reduced) for train/phase")
    common.add_argument("--step", type=float, help="RK4 step for phase trajectories")
    common.add_argument("--horizon", type=float, help="integration horizon")
    common.add_argument("--constrained", action="store_const", const=True,
                        help="clip trajectories to the unit box")
    common.add_argument("--init", choices=ex.INIT_DISTRIBUTIONS)

    parser = argparse.ArgumentParser(prog="hla-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check-theorems": "eigenvalue classes and thresholds for all rules",
        "phase": "rate field (or one trajectory with --start) as CSV",
        "basin": "outcome of training from every grid point",
        "train": "one seeded training run",
        "sweep": "seeded multi-rule, multi-g campaign",
        "fig2": "the three-action regret sweep with preset defaults",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < flags.

    ``opts["explicit"]`` names the options set by the file or a flag.
    """
    opts = {name: default for name, (_, default) in FLAGS.items()}
    explicit = set()
    if args.config:
        try:
            kv = read_kv(args.config)
        except (OSError, ConfigError) as e:
            raise UsageError(f"cannot read config: {e}") from e
        for key, raw in kv.items():
            if key not in FLAGS:
                raise UsageError(f"unknown config key {key!r}")
            typ = FLAGS[key][0]
            try:
                opts[key] = raw.lower() in ("1", "true", "yes") if typ is bool else typ(raw)
            except ValueError as e:
                raise UsageError(f"config key {key!r}: {e}") from e
            explicit.add(key)
    for name in FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            opts[name] = val
            explicit.add(name)
    opts["explicit"] = frozenset(explicit)
    if opts["rule"] not in RULES:
        raise UsageError(f"unknown rule {opts['rule']!r}")
    if opts["format"] not in ("csv", "json"):
        raise UsageError(f"unknown format {opts['format']!r}")
    return opts


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"{what}: {e}") from e


def game_from_opts(opts: dict, default_variant: str) -> CoordinationGameSpec:
    variant = opts["game"] or default_variant
    if opts["k"] is not None:
        if variant == "two":
            return CoordinationGameSpec("two", k=opts["k"], alpha=opts["alpha"] or 1.0)
        return CoordinationGameSpec("three", k=opts["k"])
    gs = _parse_floats(opts["g"], "--g") if opts["g"] else [1.0 if variant == "two" else 10.0]
    if len(gs) != 1:
        raise UsageError("--g takes a single value for this subcommand")
    if not gs[0] > 0:
        raise UsageError(f"--g must be > 0, got {gs[0]}")
    return CoordinationGameSpec.from_regret(variant, gs[0], opts["alpha"])


def hierarchy_from_opts(opts: dict, n: int, rng: np.random.Generator | None = None):
    text = opts["hierarchy"]
    if text is None or text == "fixed":
        return None
    if text == "random":
        if rng is None:
            raise UsageError("--hierarchy random is only meaningful with a seeded run")
        return tuple(int(a) for a in rng.permutation(n))
    try:
        perm = tuple(int(a) - 1 for a in text.split(","))
    except ValueError as e:
        raise UsageError(f"--hierarchy: {e}") from e
    if sorted(perm) != list(range(n)):
        raise UsageError(f"--hierarchy must be a permutation of 1..{n}, got {text}")
    return perm


def _rule(opts, hierarchy=None) -> UpdateRule:
    return UpdateRule(opts["rule"], opts["eta"], hierarchy)


def _emit_text(text: str, opts: dict):
    if opts["out"]:
        path = Path(opts["out"])
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(writer, *args) -> str:
    buf = io.StringIO()
    writer(buf, *args)
    return buf.getvalue()


# -- subcommands ------------------------------------------------------------------

def cmd_check_theorems(opts: dict) -> int:
    rows = ex.default_theorem_rows()
    if opts["format"] == "json":
        text = json.dumps([{"rule": r.rule, "eta": r.eta, "g": r.g, "eigenvalues": list(r.eigenvalues),
                            "class": r.kind, "predicted": r.predicted, "eigen_match": r.eigen_match,
                            "consistent": r.consistent} for r in rows], indent=2) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"{'rule':<6}{'eta':>7}{'g':>12}{'lambda1':>14}{'lambda2':>14}  {'class':<14}{'expected':<14}ok\n")
        for r in rows:
            buf.write(f"{r.rule:<6}{r.eta:>7g}{r.g:>12.6g}{r.eigenvalues[0]:>14.6g}{r.eigenvalues[1]:>14.6g}"
                      f"  {r.kind:<14}{r.predicted:<14}{'PASS' if r.consistent else 'FAIL'}\n")
        text = buf.getvalue()
    _emit_text(text, opts)
    bad = [r for r in rows if not r.consistent]
    print(f"{len(rows) - len(bad)}/{len(rows)} theorem checks consistent", file=sys.stderr)
    return 1 if bad else 0


def _parse_start(opts):
    pt = _parse_floats(opts["start"], "--start")
    if len(pt) != 2:
        raise UsageError("--start needs two values theta1,theta2")
    return pt


def cmd_phase(opts: dict) -> int:
    spec = game_from_opts(opts, "two")
    if spec.variant != "two":
        raise UsageError("phase planes need the two-action game")
    rule = _rule(opts, hierarchy_from_opts(opts, 2))
    game = spec.tensor()
    if opts["start"]:
        traj = dyn.integrate_phase(rule, game, _parse_start(opts), opts["step"], opts["horizon"],
                                   opts["constrained"])
        if traj.diverged:
            print(f"trajectory diverged beyond |theta| > {dyn.DIVERGENCE_BOUND:g} at t={traj.t[-1]:g}",
                  file=sys.stderr)
        _emit_text(_csv_text(ex.write_trajectory_csv, traj), opts)
        return 0
    fld = ex.phase_field(rule, game, opts["resolution"] or 21)
    _emit_text(_csv_text(ex.write_field_csv, fld), opts)
    return 0


def cmd_basin(opts: dict) -> int:
    spec = game_from_opts(opts, "two")
    if spec.variant != "two":
        raise UsageError("basin maps need the two-action game")
    rule = _rule(opts, hierarchy_from_opts(opts, 2))
    basin = ex.basin_map(rule, spec.tensor(), opts["lr"], opts["resolution"] or 41,
                         opts["max_iter"], opts["tol"])
    _emit_text(_csv_text(ex.write_basin_csv, basin), opts)
    fr = {o: basin.fraction(o) for o in dyn.OUTCOMES}
    print(" ".join(f"{o}={v:.4f}" for o, v in fr.items()), file=sys.stderr)
    return 0


def cmd_train(opts: dict) -> int:
    spec = game_from_opts(opts, "two")
    game = spec.tensor()
    rng = np.random.default_rng(opts["seed"])
    if spec.variant == "two":
        if opts["start"]:
            theta0 = JointPolicy.reduced(*_parse_start(opts))
        else:
            theta0 = JointPolicy.reduced(*rng.uniform(0.0, 1.0, size=2))
    else:
        if opts["start"]:
            raise UsageError("--start is only supported for the two-action game")
        theta0 = JointPolicy.simplex(*(rng.dirichlet(np.ones(m)) for m in game.shape))
    hierarchy = hierarchy_from_opts(opts, 2, rng) if opts["rule"] == "hla" else None
    run = dyn.train(_rule(opts, hierarchy), game, theta0, opts["lr"], opts["max_iter"], opts["tol"])
    summary = {
        "rule": opts["rule"], "game": spec.variant, "g": spec.g, "eta": opts["eta"], "lr": opts["lr"],
        "seed": opts["seed"],
        "hierarchy": None if hierarchy is None else [a + 1 for a in hierarchy],
        "theta0": [np.asarray(b).tolist() for b in theta0.blocks],
        "theta": [np.asarray(b).tolist() for b in run.final.blocks],
        "iterations": run.iterations, "converged": run.converged,
        "outcome": run.outcome, "final_value": run.value,
    }
    if opts["format"] == "json":
        _emit_text(json.dumps(summary, indent=2) + "\n", opts)
    else:
        keys = ["rule", "game", "g", "eta", "lr", "seed", "iterations", "converged", "outcome", "final_value"]
        _emit_text(",".join(keys) + "\n" + ",".join(str(summary[k]) for k in keys) + "\n", opts)
    return 0


def _sweep_config(opts: dict, preset: bool) -> ex.SweepConfig:
    kw: dict = {"seed": opts["seed"], "max_iter": opts["max_iter"], "tol": opts["tol"]}
    if opts["runs"] is not None:
        kw["runs"] = opts["runs"]
    if opts["g"]:
        kw["g_values"] = tuple(_parse_floats(opts["g"], "--g"))
    if opts["init"]:
        kw["init"] = opts["init"]
    if opts["alpha"] is not None:
        kw["alpha"] = opts["alpha"]
    if opts["hierarchy"] is not None:
        if opts["hierarchy"] not in ex.HIERARCHY_POLICIES:
            raise UsageError("sweeps take --hierarchy random or fixed")
        kw["hierarchy"] = opts["hierarchy"]
    if preset:
        # fig2 keeps its own eta/lr unless they came from flags or config
        for name in ("eta", "lr"):
            if name in opts["explicit"]:
                kw[name] = opts[name]
        if opts["game"] not in (None, "three"):
            raise UsageError("fig2 is the three-action campaign")
    else:
        kw["eta"] = opts["eta"]
        kw["lr"] = opts["lr"]
        kw["variant"] = opts["game"] or "three"
        if "rule" in opts["explicit"]:
            kw["rules"] = (opts["rule"],)
    return ex.SweepConfig(**kw)


def cmd_sweep(opts: dict, preset: bool = False) -> int:
    config = _sweep_config(opts, preset)
    jobs = opts["jobs"] if opts["jobs"] is not None else (os.cpu_count() or 1)
    result = ex.run_sweep(config, jobs=jobs)
    out = Path(opts["out"] or "results")
    ex.write_records_csv(out / "records.csv", result.records, config)
    ex.write_aggregates_json(out / "aggregates.json", result.aggregates)
    for (rule, g), s in result.aggregates.items():
        print(f"{rule:<6} g={g:<6g} mean={s.mean_value:8.4f} global={s.frac_global:.3f} "
              f"local={s.frac_local:.3f} miscoord={s.frac_miscoord:.3f} other={s.frac_other:.3f}",
              file=sys.stderr)
    print(f"wrote {out / 'records.csv'} and {out / 'aggregates.json'}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        command = args.command
        if command == "check-theorems":
            return cmd_check_theorems(opts)
        if command == "phase":
            return cmd_phase(opts)
        if command == "basin":
            return cmd_basin(opts)
        if command == "train":
            return cmd_train(opts)
        return cmd_sweep(opts, preset=command == "fig2")
    except (UsageError, InvalidGameError, PolicyError, RuleError, ValueError) as e:
        print(f"hla-lab {args.command}: error: {e}", file=sys.stderr)
        return 2
    except dyn.TrainingError as e:
        print(f"hla-lab {args.command}: training failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
