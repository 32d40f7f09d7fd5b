"""Update rules: naive, look-ahead (LA), LOLA and hierarchical anticipation (HLA).

Every rule returns the raw anticipation deltas ``delta_i`` (length ``eta``
steps). A training loop turns them into parameter updates
``theta_i += lr * delta_i / eta``.

All rules are written against :func:`hla_lab.game.value_at`, so the same
function is evaluated plainly and differentiated with nested duals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import gradient_block, stop_gradient
from .game import JointPolicy, PayoffTensor, value_at

RULES = ("naive", "la", "lola", "hla")


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class UpdateRule:
    """A learning rule and its prediction length.

    ``hierarchy`` lists agents from the lowest level to the highest, so
    ``(0, 1)`` makes agent 0 the naive follower and agent 1 the leader.
    ``None`` means the identity order.
    """

    kind: str
    eta: float = 1.0
    hierarchy: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in RULES:
            raise RuleError(f"unknown rule {self.kind!r}; expected one of {RULES}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise RuleError(f"prediction length eta must be > 0, got {self.eta}")
        if self.hierarchy is not None:
            h = tuple(int(a) for a in self.hierarchy)
            if sorted(h) != list(range(len(h))):
                raise RuleError(f"hierarchy {self.hierarchy} is not a permutation of 0..{len(h) - 1}")
            object.__setattr__(self, "hierarchy", h)


@dataclass(frozen=True)
class StepResult:
    """Per-agent deltas, each shaped like the agent's parameter block."""

    deltas: tuple

    def rates(self, eta: float) -> tuple:
        return tuple(d / eta for d in self.deltas)


def _replace(coords, i, block):
    out = list(coords)
    out[i] = list(block)
    return out


def _shift(block, step):
    return [a + s for a, s in zip(block, step)]


def _grad(game, coords, mode, i):
    return gradient_block(lambda ci: value_at(game, _replace(coords, i, ci), mode), coords[i])


def _scaled(eta, xs):
    return [eta * x for x in xs]


def _to_result(policy: JointPolicy, deltas: Sequence[list]) -> StepResult:
    out = []
    for block, d in zip(policy.blocks, deltas):
        d = [np.broadcast_to(np.asarray(x, dtype=float), policy.batch_shape) for x in d]
        if policy.mode == "reduced":
            arr = np.array(d[0], dtype=float)
        else:
            arr = np.stack(d, axis=-1)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite delta: {arr!r}")
        out.append(arr)
    return StepResult(tuple(out))


def _check_two(game, policy, rule_name):
    if game.n_agents != 2 or policy.n_agents != 2:
        raise RuleError(f"{rule_name} is defined for exactly 2 agents")


# -- rules on raw coordinates -------------------------------------------------

def naive_coords(game, coords, mode, eta):
    return [_scaled(eta, _grad(game, coords, mode, i)) for i in range(len(coords))]


def pairwise_coords(game, coords, mode, eta, shaping: bool):
    """LOLA (``shaping=True``) or LA deltas for both agents of a 2-player game."""
    deltas = []
    for i in (0, 1):
        j = 1 - i

        def objective(ci, i=i, j=j):
            cc = _replace(coords, i, ci)
            step = _scaled(eta, _grad(game, cc, mode, j))
            if not shaping:
                step = [stop_gradient(s) for s in step]
            return value_at(game, _replace(cc, j, _shift(cc[j], step)), mode)

        deltas.append(_scaled(eta, gradient_block(objective, coords[i])))
    return deltas


def hla_two_agent_coords(game, coords, mode, eta, leader):
    follower = 1 - leader

    # leader: differentiates through the naive follower's anticipated step
    def leader_objective(cl):
        cc = _replace(coords, leader, cl)
        follower_step = _scaled(eta, _grad(game, cc, mode, follower))
        return value_at(game, _replace(cc, follower, _shift(cc[follower], follower_step)), mode)

    leader_delta = _scaled(eta, gradient_block(leader_objective, coords[leader]))
    planned = _shift(coords[leader], leader_delta)

    # follower: takes the leader's plan as given, no shaping
    def follower_objective(cf):
        cc = _replace(coords, follower, cf)
        frozen = [stop_gradient(p) for p in planned]
        return value_at(game, _replace(cc, leader, frozen), mode)

    follower_delta = _scaled(eta, gradient_block(follower_objective, coords[follower]))
    out = [None, None]
    out[leader] = leader_delta
    out[follower] = follower_delta
    return out


def anticipation_step(game, ctx, mode, eta, j):
    """Delta of the level-``j`` agent inside one outer sweep.

    ``ctx`` holds the parameters seen in this sweep: plain ``theta`` for levels
    up to the sweep's top, planned ``theta_bar`` above it. Agents below ``j``
    are moved by their own anticipation steps, which are recomputed as
    functions of ``theta_j`` so that ``j`` shapes them.
    """
    def objective(cj):
        c = _replace(ctx, j, cj)
        moved = [_shift(c[m], anticipation_step(game, c, mode, eta, m)) for m in range(j)]
        return value_at(game, moved + c[j:], mode)

    return _scaled(eta, gradient_block(objective, ctx[j]))


def hla_coords(game, coords, mode, eta):
    """HLA sweep for agents already ordered by level (index 0 is lowest)."""
    n = len(coords)
    planned: list = [None] * n
    final: list = [None] * n
    for i in range(n - 1, -1, -1):
        ctx = list(coords[: i + 1]) + [[stop_gradient(p) for p in planned[k]] for k in range(i + 1, n)]
        final[i] = anticipation_step(game, ctx, mode, eta, i)
        planned[i] = _shift(coords[i], final[i])
    return final


# -- public API ----------------------------------------------------------------

def naive_delta(game: PayoffTensor, policy: JointPolicy, eta: float = 1.0) -> StepResult:
    """``eta * grad_i V`` for every agent, all from the same base policy."""
    return _to_result(policy, naive_coords(game, policy.coords(), policy.mode, eta))


def la_delta(game: PayoffTensor, policy: JointPolicy, eta: float) -> StepResult:
    _check_two(game, policy, "LA")
    return _to_result(policy, pairwise_coords(game, policy.coords(), policy.mode, eta, shaping=False))


def lola_delta(game: PayoffTensor, policy: JointPolicy, eta: float) -> StepResult:
    _check_two(game, policy, "LOLA")
    return _to_result(policy, pairwise_coords(game, policy.coords(), policy.mode, eta, shaping=True))


def hla_two_agent_delta(game: PayoffTensor, policy: JointPolicy, eta: float, leader: int = 1) -> StepResult:
    """Two-agent HLA with an explicit leader (0-based agent index)."""
    _check_two(game, policy, "two-agent HLA")
    if leader not in (0, 1):
        raise RuleError(f"leader must be 0 or 1, got {leader!r}")
    return _to_result(policy, hla_two_agent_coords(game, policy.coords(), policy.mode, eta, leader))


def hla_delta(game: PayoffTensor, policy: JointPolicy, eta: float,
              hierarchy: Sequence[int] | None = None) -> StepResult:
    """General-n HLA. ``hierarchy[l]`` is the agent at level ``l`` (0 = lowest)."""
    n = game.n_agents
    if policy.n_agents != n:
        raise RuleError(f"policy has {policy.n_agents} agents, game has {n}")
    order = tuple(range(n)) if hierarchy is None else tuple(int(a) for a in hierarchy)
    if sorted(order) != list(range(n)):
        raise RuleError(f"hierarchy {hierarchy} is not a permutation of 0..{n - 1}")
    rule = UpdateRule("hla", eta, order)
    return _to_result(policy, delta_coords(rule, game, policy.coords(), policy.mode))


def compute_delta(rule: UpdateRule, game: PayoffTensor, policy: JointPolicy) -> StepResult:
    if rule.kind == "naive":
        return naive_delta(game, policy, rule.eta)
    if rule.kind == "la":
        return la_delta(game, policy, rule.eta)
    if rule.kind == "lola":
        return lola_delta(game, policy, rule.eta)
    return hla_delta(game, policy, rule.eta, rule.hierarchy)


def delta_coords(rule: UpdateRule, game: PayoffTensor, coords, mode: str) -> list[list]:
    """Deltas on raw coordinates, skipping policy validation.

    Used by integrators whose unconstrained trajectories leave the box.
    """
    if rule.kind == "naive":
        return naive_coords(game, coords, mode, rule.eta)
    if rule.kind in ("la", "lola"):
        if game.n_agents != 2:
            raise RuleError(f"{rule.kind} is defined for exactly 2 agents")
        return pairwise_coords(game, coords, mode, rule.eta, shaping=rule.kind == "lola")
    n = game.n_agents
    order = tuple(range(n)) if rule.hierarchy is None else rule.hierarchy
    if len(order) != n:
        raise RuleError(f"hierarchy {order} does not cover {n} agents")
    by_level = hla_coords(game.transpose(order), [coords[a] for a in order], mode, rule.eta)
    deltas: list = [None] * n
    for level, agent in enumerate(order):
        deltas[agent] = by_level[level]
    return deltas
