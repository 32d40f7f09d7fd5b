"""Continuous-time analysis and the discrete training loop.

The planar analysis (closed forms, fixed points, eigenvalue classes, phase
integration) applies to 2-agent 2-action games in reduced coordinates, where
every rule's rate field is affine: ``d theta / dt = A theta - b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .game import REDUCED, JointPolicy, PayoffTensor, value_at
from .learners import UpdateRule, delta_coords

GLOBAL = "global-equilibrium"
LOCAL = "local-equilibrium"
MISCOORD = "miscoordination"
OTHER = "other"
OUTCOMES = (GLOBAL, LOCAL, MISCOORD, OTHER)

DIVERGENCE_BOUND = 1e6


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    """``d theta / dt = A theta - b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        if A.shape != (2, 2) or b.shape != (2,):
            raise ValueError(f"expected 2x2 A and length-2 b, got {A.shape} and {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite dynamics coefficients")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def rate(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta @ self.A.T - self.b


def closed_form_dynamics(kind: str, g: float, eta: float = 1.0) -> LinearDynamics:
    """Analytic ``(A, b)`` for the two-action coordination game.

    HLA assumes agent 2 leads. Its follower offset is the one that vanishes at
    (0.5, 0.5): ``g + 2 eta g^2 + 8 eta^2 g^3``.
    """
    if not g > 0:
        raise ValueError(f"g must be > 0, got {g}")
    if kind != "naive" and not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    if kind == "naive":
        return LinearDynamics([[0.0, 2 * g], [2 * g, 0.0]], [g, g])
    if kind == "la":
        d = 4 * eta * g**2
        return LinearDynamics([[d, 2 * g], [2 * g, d]], [2 * eta * g**2 + g] * 2)
    if kind == "lola":
        d = 8 * eta * g**2
        return LinearDynamics([[d, 2 * g], [2 * g, d]], [4 * eta * g**2 + g] * 2)
    if kind == "hla":
        A = [[4 * eta * g**2, 2 * g + 16 * eta**2 * g**3],
             [2 * g, 8 * eta * g**2]]
        b = [8 * eta**2 * g**3 + 2 * eta * g**2 + g, 4 * eta * g**2 + g]
        return LinearDynamics(A, b)
    raise ValueError(f"unsupported rule {kind!r}")


def _require_planar(game: PayoffTensor):
    if game.shape != (2, 2):
        raise ValueError(f"planar analysis needs a 2x2 game, got shape {game.shape}")


def learner_rates(rule: UpdateRule, game: PayoffTensor, theta) -> np.ndarray:
    """Per-unit-time rates ``delta / eta`` at ``theta`` (shape ``(..., 2)``)."""
    _require_planar(game)
    theta = np.asarray(theta, dtype=float)
    t1, t2 = theta[..., 0], theta[..., 1]
    coords = [[t1 if t1.ndim else float(t1)], [t2 if t2.ndim else float(t2)]]
    d = delta_coords(rule, game, coords, REDUCED)
    out = np.stack(np.broadcast_arrays(np.asarray(d[0][0], float), np.asarray(d[1][0], float)), axis=-1)
    return out / rule.eta


def linearize(rule: UpdateRule, game: PayoffTensor) -> LinearDynamics:
    """Read ``(A, b)`` off the learner itself; exact because rates are affine."""
    at0 = learner_rates(rule, game, [0.0, 0.0])
    cols = [learner_rates(rule, game, e) - at0 for e in ([1.0, 0.0], [0.0, 1.0])]
    return LinearDynamics(np.stack(cols, axis=1), -at0)


def regret_of(game: PayoffTensor) -> float:
    """``g`` of a symmetric two-action coordination game ``[[a, k], [k, a]]``."""
    _require_planar(game)
    R = game.entries
    if not (R[0, 0] == R[1, 1] and R[0, 1] == R[1, 0]):
        raise ValueError("not a symmetric two-action coordination game")
    return float(R[0, 0] - R[0, 1])


def verify_dynamics(rule: UpdateRule, game: PayoffTensor, samples: int = 100, seed: int = 0) -> float:
    """Max ``|learner rate - (A theta - b)|`` over random ``theta`` in the box."""
    if rule.kind == "hla" and rule.hierarchy not in (None, (0, 1)):
        raise ValueError("closed-form HLA dynamics assume agent 2 leads")
    dyn = closed_form_dynamics(rule.kind, regret_of(game), rule.eta)
    theta = np.random.default_rng(seed).uniform(0.0, 1.0, size=(samples, 2))
    return float(np.max(np.abs(learner_rates(rule, game, theta) - dyn.rate(theta))))


class FixedPoint(NamedTuple):
    location: np.ndarray
    unique: bool


@dataclass(frozen=True, eq=False)
class FixedPointReport:
    location: np.ndarray
    unique: bool
    eigenvalues: np.ndarray
    kind: str


def _zero_tol(A: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(A))))


def fixed_point(dyn: LinearDynamics) -> FixedPoint:
    """Solve ``A theta = b``; a singular ``A`` yields a point on the fixed line."""
    A, b = dyn.A, dyn.b
    tol = _zero_tol(A)
    if abs(np.linalg.det(A)) > tol * tol:
        return FixedPoint(np.linalg.solve(A, b), True)
    loc, *_ = np.linalg.lstsq(A, b, rcond=None)
    return FixedPoint(loc, False)


def eigenvalues(A: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted by descending real part (real dtype when all real)."""
    ev = np.linalg.eigvals(np.asarray(A, dtype=float))
    ev = ev[np.argsort(-ev.real, kind="stable")]
    if np.all(np.abs(ev.imag) <= _zero_tol(A)):
        return ev.real.copy()
    return ev


def classify_eigenvalues(ev: np.ndarray, tol: float) -> str:
    if np.iscomplexobj(ev):
        re = ev[0].real
        if re > tol:
            return "spiral-source"
        if re < -tol:
            return "spiral-sink"
        return "center"
    hi, lo = float(ev[0]), float(ev[1])
    hi_zero, lo_zero = abs(hi) <= tol, abs(lo) <= tol
    if hi_zero and lo_zero:
        return "degenerate"
    if lo_zero:
        return "unstable-line" if hi > 0 else "stable-line"
    if hi_zero:
        return "stable-line" if lo < 0 else "unstable-line"
    if hi > 0 and lo < 0:
        return "saddle"
    return "source" if lo > 0 else "sink"


def classify(dyn: LinearDynamics) -> FixedPointReport:
    ev = eigenvalues(dyn.A)
    fp = fixed_point(dyn)
    return FixedPointReport(fp.location, fp.unique, ev, classify_eigenvalues(ev, _zero_tol(dyn.A)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    theta: np.ndarray
    diverged: bool


def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_phase(rule: UpdateRule, game: PayoffTensor, theta0, step: float = 0.01,
                    horizon: float = 50.0, constrained: bool = False) -> Trajectory:
    """Fixed-step RK4 on the learner's rate field.

    With ``constrained`` the state is clipped to the unit box after each step;
    otherwise it may leave the box, as in the textbook phase planes.
    ``theta0`` may hold several starts with shape ``(..., 2)``; they are
    integrated in lockstep and the whole batch stops if any of them diverges.
    """
    _require_planar(game)
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    n_steps = int(round(horizon / step))
    y = np.array(theta0, dtype=float)
    ts, ys = [0.0], [y.copy()]

    def f(theta):
        return learner_rates(rule, game, theta)

    diverged = False
    for s in range(1, n_steps + 1):
        y = rk4_step(f, y, step)
        if constrained:
            y = np.clip(y, 0.0, 1.0)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_BOUND:
            diverged = True
            break
        ts.append(s * step)
        ys.append(y.copy())
    return Trajectory(np.array(ts), np.array(ys), diverged)


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``y`` onto the probability simplex."""
    y = np.asarray(y, dtype=float)
    u = -np.sort(-y, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, y.shape[-1] + 1)
    cond = u - css / ind > 0
    rho = y.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(y - tau, 0.0)


@dataclass(frozen=True, eq=False)
class BatchRun:
    initial: JointPolicy
    final: JointPolicy
    iterations: np.ndarray
    converged: np.ndarray


@dataclass(frozen=True, eq=False)
class TrainRun:
    initial: JointPolicy
    final: JointPolicy
    iterations: int
    converged: bool
    outcome: str
    value: float


def _block_coords(block, mode):
    if mode == REDUCED:
        return [block]
    return [block[:, j] for j in range(block.shape[1])]


def _apply_update(block, delta, lr, eta, mode):
    if mode == REDUCED:
        return np.clip(block + lr * delta / eta, 0.0, 1.0)
    d = delta / eta
    d = d - d.mean(axis=1, keepdims=True)
    return project_simplex(block + lr * d)


def train_batch(rule: UpdateRule, game: PayoffTensor, theta0: JointPolicy, lr: float,
                max_iter: int = 200_000, tol: float = 1e-8) -> BatchRun:
    """Train a batch of independent runs that share rule and game.

    Each iteration computes the rule's deltas, applies ``lr * delta / eta``,
    and projects back (clipping in reduced mode; tangent projection plus
    Euclidean simplex projection otherwise). A run stops once its largest
    parameter change drops below ``tol``.
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    mode = theta0.mode
    if theta0.action_counts() != game.shape:
        raise ValueError(f"policy shape {theta0.action_counts()} does not match game {game.shape}")
    squeeze = theta0.batch_shape == ()
    blocks = [np.array(b, dtype=float).reshape((-1,) + (() if mode == REDUCED else b.shape[-1:]))
              for b in theta0.blocks]
    batch = blocks[0].shape[0]
    iterations = np.zeros(batch, dtype=int)
    converged = np.zeros(batch, dtype=bool)
    active = np.arange(batch)

    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        sub = [b[active] for b in blocks]
        coords = [_block_coords(b, mode) for b in sub]
        deltas = delta_coords(rule, game, coords, mode)
        change = np.zeros(active.size)
        for i, (b, d) in enumerate(zip(sub, deltas)):
            d = np.stack([np.broadcast_to(np.asarray(x, float), (active.size,)) for x in d], axis=-1)
            if mode == REDUCED:
                d = d[:, 0]
            new = _apply_update(b, d, lr, rule.eta, mode)
            if not np.all(np.isfinite(new)):
                bad = active[~np.all(np.isfinite(new.reshape(active.size, -1)), axis=1)]
                raise TrainingError(
                    f"non-finite parameters for agent {i} at iteration {it} in runs {bad.tolist()}"
                    f" (rule={rule.kind}, eta={rule.eta}, lr={lr})")
            diff = np.abs(new - b).reshape(active.size, -1).max(axis=1)
            change = np.maximum(change, diff)
            blocks[i][active] = new
        iterations[active] = it
        done = change < tol
        converged[active[done]] = True
        active = active[~done]

    if squeeze:
        final = JointPolicy(tuple(b[0] for b in blocks), mode)
    else:
        final = JointPolicy(tuple(b.reshape(theta0.blocks[i].shape) for i, b in enumerate(blocks)), mode)
    return BatchRun(theta0, final, iterations, converged)


def classify_outcomes(game: PayoffTensor, policy: JointPolicy, tol: float = 1e-3):
    """Vectorised outcome labels and exact common values for a (batched) policy.

    A profile counts when every agent puts more than ``1 - tol`` on one
    action. It is a global equilibrium if it earns the top payoff, a local
    equilibrium if all agents pick the same action index otherwise, and a
    miscoordination point if the agents pick mismatched actions.
    """
    probs = [np.atleast_2d(p) for p in policy.probabilities()]
    vals = np.atleast_1d(np.asarray(_value(game, policy), dtype=float))
    pure = np.all([p.max(axis=1) > 1.0 - tol for p in probs], axis=0)
    profile = np.stack([p.argmax(axis=1) for p in probs], axis=1)
    entry = game.entries[tuple(profile.T)]
    same = np.all(profile == profile[:, :1], axis=1)
    top = game.entries.max()
    labels = np.where(~pure, OTHER,
                      np.where(entry == top, GLOBAL, np.where(same, LOCAL, MISCOORD)))
    return labels, vals


def _value(game: PayoffTensor, policy: JointPolicy):
    return value_at(game, policy.coords(), policy.mode)


def classify_outcome(game: PayoffTensor, policy: JointPolicy, tol: float = 1e-3) -> tuple[str, float]:
    labels, vals = classify_outcomes(game, policy, tol)
    return str(labels[0]), float(vals[0])


def train(rule: UpdateRule, game: PayoffTensor, theta0: JointPolicy, lr: float,
          max_iter: int = 200_000, tol: float = 1e-8, outcome_tol: float = 1e-3) -> TrainRun:
    run = train_batch(rule, game, theta0, lr, max_iter, tol)
    outcome, val = classify_outcome(game, run.final, outcome_tol)
    converged = bool(run.converged[0])
    if not converged:
        outcome = OTHER
    return TrainRun(theta0, run.final, int(run.iterations[0]), converged, outcome, val)
