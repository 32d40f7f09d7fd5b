"""Seeded experiment campaigns and their file formats."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dynamics as dyn
from .game import REDUCED, SIMPLEX, CoordinationGameSpec, JointPolicy, PayoffTensor
from .learners import RULES, UpdateRule

INIT_DISTRIBUTIONS = ("uniform-box", "uniform-simplex")
HIERARCHY_POLICIES = ("fixed", "random")

# Defaults for the three-action regret sweep (the fig2 preset). These are this
# package's choices for eta, lr, the init distribution and the g grid.
FIG2_G_VALUES = (10.0, 15.0, 20.0, 30.0, 50.0)
FIG2_ETA = 0.1
FIG2_LR = 0.05
DEFAULT_SEED = 0


@dataclass(frozen=True)
class SweepConfig:
    rules: tuple[str, ...] = RULES
    g_values: tuple[float, ...] = FIG2_G_VALUES
    eta: float = FIG2_ETA
    lr: float = FIG2_LR
    runs: int = 500
    seed: int = DEFAULT_SEED
    init: str = "uniform-simplex"
    hierarchy: str = "random"
    variant: str = "three"
    alpha: float | None = None
    max_iter: int = 200_000
    tol: float = 1e-8
    outcome_tol: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "g_values", tuple(float(g) for g in self.g_values))
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        for r in self.rules:
            if r not in RULES:
                raise ValueError(f"unknown rule {r!r}")
        if self.init not in INIT_DISTRIBUTIONS:
            raise ValueError(f"unknown init distribution {self.init!r}")
        if self.hierarchy not in HIERARCHY_POLICIES:
            raise ValueError(f"unknown hierarchy policy {self.hierarchy!r}")
        if self.variant == "three" and self.init == "uniform-box":
            raise ValueError("uniform-box initialisation needs the two-action game")
        UpdateRule("naive", self.eta)  # validates eta
        if not self.lr > 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        for g in self.g_values:
            self.game_spec(g)

    def game_spec(self, g: float) -> CoordinationGameSpec:
        return CoordinationGameSpec.from_regret(self.variant, g, self.alpha)

    @property
    def mode(self) -> str:
        return REDUCED if self.variant == "two" else SIMPLEX


@dataclass(frozen=True)
class SweepRecord:
    rule: str
    g: float
    eta: float
    run: int
    seed: int
    theta0: tuple[float, ...]
    outcome: str
    final_value: float
    iters: int
    hierarchy: tuple[int, ...] | None = None


@dataclass(frozen=True)
class AggregateStats:
    rule: str
    g: float
    n: int
    mean_value: float
    std_value: float
    frac_global: float
    frac_local: float
    frac_miscoord: float
    frac_other: float


@dataclass
class SweepResult:
    records: list[SweepRecord]
    aggregates: dict[tuple[str, float], AggregateStats]


def run_seed(master: int, rule: str, g: float, run: int) -> int:
    """Per-run seed; independent of which other rules or g values are swept."""
    key = f"{master}|{rule}|{float(g)!r}|{run}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def _draw_initial(rng: np.random.Generator, config: SweepConfig, counts: Sequence[int]):
    if config.mode == REDUCED:
        return [rng.uniform(0.0, 1.0) for _ in counts]
    return [rng.dirichlet(np.ones(m)) for m in counts]


def _run_cell(config: SweepConfig, rule: str, g: float) -> list[SweepRecord]:
    game = config.game_spec(g).tensor()
    n = game.n_agents
    draws = []
    for run in range(config.runs):
        seed = run_seed(config.seed, rule, g, run)
        rng = np.random.default_rng(seed)
        theta0 = _draw_initial(rng, config, game.shape)
        hierarchy = None
        if rule == "hla":
            hierarchy = tuple(int(a) for a in rng.permutation(n)) if config.hierarchy == "random" \
                else tuple(range(n))
        draws.append((run, seed, theta0, hierarchy))

    groups: dict = defaultdict(list)
    for d in draws:
        groups[d[3]].append(d)

    records = []
    for hierarchy, members in groups.items():
        blocks = tuple(np.array([m[2][i] for m in members]) for i in range(n))
        policy = JointPolicy(blocks, config.mode)
        batch = dyn.train_batch(UpdateRule(rule, config.eta, hierarchy), game, policy,
                                config.lr, config.max_iter, config.tol)
        labels, values = dyn.classify_outcomes(game, batch.final, config.outcome_tol)
        for idx, (run, seed, theta0, _) in enumerate(members):
            outcome = str(labels[idx]) if batch.converged[idx] else dyn.OTHER
            flat = tuple(float(x) for x in np.concatenate([np.atleast_1d(t) for t in theta0]))
            records.append(SweepRecord(rule, float(g), config.eta, run, seed, flat, outcome,
                                       float(values[idx]), int(batch.iterations[idx]), hierarchy))
    records.sort(key=lambda r: r.run)
    return records


class Aggregator:
    """Order-independent fold of records into per-(rule, g) statistics."""

    def __init__(self):
        self._values: dict = defaultdict(list)
        self._counts: dict = defaultdict(lambda: dict.fromkeys(dyn.OUTCOMES, 0))

    def add(self, record: SweepRecord):
        key = (record.rule, record.g)
        self._values[key].append(record.final_value)
        self._counts[key][record.outcome] += 1

    def merge(self, other: "Aggregator") -> "Aggregator":
        for key, vals in other._values.items():
            self._values[key].extend(vals)
            for o, c in other._counts[key].items():
                self._counts[key][o] += c
        return self

    def result(self) -> dict[tuple[str, float], AggregateStats]:
        out = {}
        for key in sorted(self._values):
            vals = self._values[key]
            n = len(vals)
            mean = math.fsum(vals) / n
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / n)
            c = self._counts[key]
            out[key] = AggregateStats(key[0], key[1], n, mean, std,
                                      c[dyn.GLOBAL] / n, c[dyn.LOCAL] / n,
                                      c[dyn.MISCOORD] / n, c[dyn.OTHER] / n)
        return out


def aggregate(records: Iterable[SweepRecord]) -> dict[tuple[str, float], AggregateStats]:
    agg = Aggregator()
    for r in records:
        agg.add(r)
    return agg.result()


def run_sweep(config: SweepConfig, jobs: int = 1) -> SweepResult:
    """Train ``config.runs`` seeded runs for every (rule, g) cell.

    Cells are independent and may run on a process pool; records come back in
    canonical (rule, g, run) order either way.
    """
    cells = [(rule, g) for rule in config.rules for g in config.g_values]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_cell = list(pool.map(_run_cell, [config] * len(cells),
                                     [c[0] for c in cells], [c[1] for c in cells]))
    else:
        per_cell = [_run_cell(config, rule, g) for rule, g in cells]

    agg = Aggregator()
    records = []
    for cell_records in per_cell:
        for r in cell_records:
            agg.add(r)
        records.extend(cell_records)
    order = {r: i for i, r in enumerate(config.rules)}
    records.sort(key=lambda r: (order[r.rule], r.g, r.run))
    return SweepResult(records, agg.result())


# -- theorem checks --------------------------------------------------------------

@dataclass(frozen=True)
class TheoremRow:
    rule: str
    eta: float
    g: float
    eigenvalues: tuple[float, ...]
    kind: str
    predicted: str
    eigen_match: bool

    @property
    def consistent(self) -> bool:
        return self.kind == self.predicted and self.eigen_match


def predicted_class(rule: str, g: float, eta: float) -> str:
    if rule in ("naive", "hla"):
        return "saddle"
    threshold = 1.0 / ((2.0 if rule == "la" else 4.0) * eta)
    if math.isclose(g, threshold, rel_tol=1e-12):
        return "unstable-line"
    return "source" if g > threshold else "saddle"


def predicted_eigenvalues(rule: str, g: float, eta: float) -> tuple[float, float]:
    if rule == "naive":
        return 2 * g, -2 * g
    if rule == "la":
        return 4 * eta * g**2 + 2 * g, 4 * eta * g**2 - 2 * g
    if rule == "lola":
        return 8 * eta * g**2 + 2 * g, 8 * eta * g**2 - 2 * g
    root = 2 * g * math.sqrt(9 * eta**2 * g**2 + 1)
    return 6 * eta * g**2 + root, 6 * eta * g**2 - root


def theorem_grid(etas: Iterable[float], gs: Iterable[float],
                 rules: Sequence[str] = RULES, eig_tol: float = 1e-9) -> list[TheoremRow]:
    rows = []
    gs = list(gs)
    for rule in rules:
        for eta in etas:
            for g in gs:
                rep = dyn.classify(dyn.closed_form_dynamics(rule, g, eta))
                ev = tuple(float(np.real(e)) for e in rep.eigenvalues)
                want = predicted_eigenvalues(rule, g, eta)
                scale = max(1.0, max(abs(w) for w in want))
                match = not np.iscomplexobj(rep.eigenvalues) and all(
                    abs(a - b) <= eig_tol * scale for a, b in zip(ev, want))
                rows.append(TheoremRow(rule, float(eta), float(g), ev, rep.kind,
                                       predicted_class(rule, g, eta), match))
    return rows


def threshold_gs(rule: str, eta: float, offsets: Sequence[float] = (1e-3, 0.1, 0.5)) -> list[float]:
    """g values straddling the LA/LOLA threshold at the given offsets."""
    t = 1.0 / ((2.0 if rule == "la" else 4.0) * eta)
    gs = [t]
    for d in offsets:
        if t - d > 0:
            gs.append(t - d)
        gs.append(t + d)
    return sorted(gs)


def default_theorem_rows() -> list[TheoremRow]:
    etas = (0.25, 0.5, 1.0, 2.0)
    rows = []
    for rule in ("la", "lola"):
        for eta in etas:
            rows += theorem_grid([eta], threshold_gs(rule, eta), [rule])
    spread = np.round(np.geomspace(0.1, 10.0, 7), 6)
    rows += theorem_grid(etas, spread, ["naive", "hla"])
    return rows


# -- phase planes and basins --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseField:
    theta1: np.ndarray
    theta2: np.ndarray
    dtheta1: np.ndarray
    dtheta2: np.ndarray


def phase_field(rule: UpdateRule, game: PayoffTensor, resolution: int = 21,
                box: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)) -> PhaseField:
    """Rate field on a regular grid, ``theta1`` varying slowest."""
    x = np.linspace(box[0], box[1], resolution)
    y = np.linspace(box[2], box[3], resolution)
    t1, t2 = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([t1.ravel(), t2.ravel()], axis=1)
    rates = dyn.learner_rates(rule, game, pts)
    return PhaseField(pts[:, 0], pts[:, 1], rates[:, 0], rates[:, 1])


EXCLUDED = "excluded"


@dataclass(frozen=True, eq=False)
class BasinMap:
    grid: np.ndarray
    outcomes: np.ndarray
    values: np.ndarray
    iterations: np.ndarray
    fixed_point: np.ndarray

    def fraction(self, outcome: str) -> float:
        included = self.outcomes != EXCLUDED
        return float(np.mean(self.outcomes[included] == outcome))

    @property
    def miscoord_fraction(self) -> float:
        return self.fraction(dyn.MISCOORD)


def basin_map(rule: UpdateRule, game: PayoffTensor, lr: float, resolution: int = 41,
              max_iter: int = 200_000, tol: float = 1e-8, outcome_tol: float = 1e-3) -> BasinMap:
    """Train from every point of a ``resolution x resolution`` grid on the unit box.

    The interior fixed point of the rule's rate field is skipped (marked
    ``excluded``) when it falls on the grid.
    """
    fp = dyn.fixed_point(dyn.linearize(rule, game)).location
    grid = np.linspace(0.0, 1.0, resolution)
    t1, t2 = np.meshgrid(grid, grid, indexing="ij")
    at_fp = (np.abs(t1 - fp[0]) < 1e-12) & (np.abs(t2 - fp[1]) < 1e-12)
    keep = ~at_fp.ravel()
    start = JointPolicy.reduced(t1.ravel()[keep], t2.ravel()[keep])
    batch = dyn.train_batch(rule, game, start, lr, max_iter, tol)
    labels, values = dyn.classify_outcomes(game, batch.final, outcome_tol)
    labels = np.where(batch.converged, labels, dyn.OTHER)

    outcomes = np.full(t1.size, EXCLUDED, dtype=object)
    vals = np.full(t1.size, np.nan)
    iters = np.zeros(t1.size, dtype=int)
    outcomes[keep] = labels
    vals[keep] = values
    iters[keep] = batch.iterations
    shape = t1.shape
    return BasinMap(grid, outcomes.reshape(shape).astype(str), vals.reshape(shape),
                    iters.reshape(shape), fp)


# -- file emission -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(dest, header: Sequence[str], rows: Iterable[Sequence]):
    """Write to a path, or to an already open text stream."""
    if hasattr(dest, "write"):
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(header)
        w.writerows([_fmt(x) for x in row] for row in rows)
        return
    path = Path(dest)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        _write_csv(fh, header, rows)


def theta0_columns(config: SweepConfig) -> list[str]:
    counts = config.game_spec(config.g_values[0]).tensor().shape
    if config.mode == REDUCED:
        return [f"theta0_{i + 1}" for i in range(len(counts))]
    return [f"theta0_{i + 1}_{j + 1}" for i, m in enumerate(counts) for j in range(m)]


def write_records_csv(path, records: Sequence[SweepRecord], config: SweepConfig):
    header = ["rule", "g", "eta", "run", "seed", *theta0_columns(config), "outcome", "final_value", "iters"]
    _write_csv(path, header, ([r.rule, r.g, r.eta, r.run, r.seed, *r.theta0, r.outcome, r.final_value, r.iters]
                              for r in records))


def aggregates_to_json(aggregates: dict[tuple[str, float], AggregateStats]) -> dict:
    out: dict = {}
    for (rule, g), s in aggregates.items():
        out.setdefault(rule, {})[repr(float(g))] = {
            "n": s.n,
            "mean_value": s.mean_value,
            "std_value": s.std_value,
            "frac_global": s.frac_global,
            "frac_local": s.frac_local,
            "frac_miscoord": s.frac_miscoord,
            "frac_other": s.frac_other,
        }
    return out


def write_aggregates_json(path, aggregates):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(aggregates_to_json(aggregates), indent=2, sort_keys=True) + "\n")


def write_field_csv(path, fld: PhaseField):
    _write_csv(path, ["theta1", "theta2", "dtheta1", "dtheta2"],
               zip(*(map(float, a) for a in (fld.theta1, fld.theta2, fld.dtheta1, fld.dtheta2))))


def write_trajectory_csv(path, traj: dyn.Trajectory):
    _write_csv(path, ["t", "theta1", "theta2"],
               ((float(t), float(y[0]), float(y[1])) for t, y in zip(traj.t, traj.theta)))


def write_basin_csv(path, basin: BasinMap):
    rows = []
    for i, a in enumerate(basin.grid):
        for j, b in enumerate(basin.grid):
            rows.append((float(a), float(b), basin.outcomes[i, j], float(basin.values[i, j]),
                         int(basin.iterations[i, j])))
    _write_csv(path, ["theta1", "theta2", "outcome", "final_value", "iters"], rows)
