"""Fully-cooperative normal-form games and their common value function."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import read_kv

REDUCED = "reduced"
SIMPLEX = "simplex"

SIMPLEX_TOL = 1e-12


class InvalidGameError(ValueError):
    pass


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PayoffTensor:
    """Common reward ``R[a1, ..., an]`` shared by every agent."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim < 2:
            raise InvalidGameError(f"need at least 2 agents, got tensor of rank {arr.ndim}")
        if min(arr.shape) < 2:
            raise InvalidGameError(f"every agent needs >= 2 actions, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidGameError("payoff entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.entries.shape

    @property
    def n_agents(self) -> int:
        return self.entries.ndim

    def transpose(self, order: Sequence[int]) -> "PayoffTensor":
        """Relabel agents so that new agent ``l`` is old agent ``order[l]``."""
        return PayoffTensor(np.transpose(self.entries, tuple(order)))

    def __eq__(self, other):
        return isinstance(other, PayoffTensor) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.shape, self.entries.tobytes()))


@dataclass(frozen=True)
class CoordinationGameSpec:
    """One of the two coordination games.

    ``variant='two'`` is ``[[alpha, k], [k, alpha]]`` with regret ``alpha - k``;
    ``variant='three'`` is ``[[10, 0, k], [0, 2, 0], [k, 0, 10]]`` with regret
    ``10 - k``.
    """

    variant: str
    k: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.variant == "two":
            if not self.alpha > 0:
                raise InvalidGameError(f"coordination reward alpha must be > 0, got {self.alpha}")
            if self.k > 0:
                raise InvalidGameError(f"miscoordination penalty k must be <= 0, got {self.k}")
        elif self.variant == "three":
            if self.k > 10:
                raise InvalidGameError(f"three-action game needs k <= 10, got {self.k}")
        else:
            raise InvalidGameError(f"unknown variant {self.variant!r} (expected 'two' or 'three')")

    @property
    def g(self) -> float:
        top = self.alpha if self.variant == "two" else 10.0
        return top - self.k

    @property
    def coordination_reward(self) -> float:
        return self.alpha if self.variant == "two" else 10.0

    def tensor(self) -> PayoffTensor:
        if self.variant == "two":
            return build_two_action_game(self.alpha, self.k)
        return build_three_action_game(self.k)

    @classmethod
    def from_regret(cls, variant: str, g: float, alpha: float | None = None) -> "CoordinationGameSpec":
        """Game with miscoordination regret ``g``.

        For the two-action game, ``alpha`` defaults to ``g`` (so ``k = 0``),
        which keeps every ``g > 0`` valid.
        """
        if variant == "three":
            return cls("three", k=10.0 - g)
        if alpha is None:
            alpha = g
        return cls("two", k=alpha - g, alpha=alpha)


def build_two_action_game(alpha: float, k: float) -> PayoffTensor:
    if not alpha > 0:
        raise InvalidGameError(f"coordination reward alpha must be > 0, got {alpha}")
    if k > 0:
        raise InvalidGameError(f"miscoordination penalty k must be <= 0, got {k}")
    return PayoffTensor(np.array([[alpha, k], [k, alpha]], dtype=float))


def build_three_action_game(k: float) -> PayoffTensor:
    if k > 10:
        raise InvalidGameError(f"three-action game needs k <= 10, got {k}")
    return PayoffTensor(np.array([[10.0, 0.0, k], [0.0, 2.0, 0.0], [k, 0.0, 10.0]]))


def load_game_spec(path: str | Path) -> CoordinationGameSpec:
    """Read ``variant``, ``alpha`` and ``k`` (or ``g``) from a key-value file."""
    kv = read_kv(path)
    variant = kv.get("variant", kv.get("game", "two"))
    alpha = float(kv["alpha"]) if "alpha" in kv else None
    if "k" in kv:
        k = float(kv["k"])
        if variant == "two":
            return CoordinationGameSpec("two", k=k, alpha=1.0 if alpha is None else alpha)
        return CoordinationGameSpec("three", k=k)
    if "g" in kv:
        return CoordinationGameSpec.from_regret(variant, float(kv["g"]), alpha)
    raise InvalidGameError(f"{path}: need 'k' or 'g'")


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Per-agent probability parameters.

    In ``reduced`` mode each block is ``P(action 1)`` for a 2-action agent
    (shape ``()`` or ``(batch,)``). In ``simplex`` mode each block is a
    probability vector over the agent's actions (shape ``(m,)`` or
    ``(batch, m)``).
    """

    blocks: tuple
    mode: str = SIMPLEX

    def __post_init__(self):
        if self.mode not in (REDUCED, SIMPLEX):
            raise PolicyError(f"unknown policy mode {self.mode!r}")
        blocks = tuple(np.array(b, dtype=float) for b in self.blocks)
        if len(blocks) < 2:
            raise PolicyError("need at least 2 agents")
        for i, b in enumerate(blocks):
            if not np.all(np.isfinite(b)):
                raise PolicyError(f"agent {i}: non-finite parameters")
            if self.mode == REDUCED:
                if np.any(b < 0) or np.any(b > 1):
                    raise PolicyError(f"agent {i}: reduced parameter outside [0, 1]")
            else:
                if b.ndim == 0 or b.shape[-1] < 2:
                    raise PolicyError(f"agent {i}: simplex block needs >= 2 entries")
                if np.any(b < 0):
                    raise PolicyError(f"agent {i}: negative probability")
                if np.any(np.abs(b.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
                    raise PolicyError(f"agent {i}: probabilities do not sum to 1")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_agents(self) -> int:
        return len(self.blocks)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        b = self.blocks[0]
        return b.shape if self.mode == REDUCED else b.shape[:-1]

    def action_counts(self) -> tuple[int, ...]:
        if self.mode == REDUCED:
            return (2,) * self.n_agents
        return tuple(b.shape[-1] for b in self.blocks)

    def coords(self) -> list[list]:
        """Free coordinates per agent, one scalar (float or batch array) each."""
        if self.mode == REDUCED:
            return [[_scalar(b)] for b in self.blocks]
        return [[_scalar(b[..., j]) for j in range(b.shape[-1])] for b in self.blocks]

    def probabilities(self) -> list[np.ndarray]:
        if self.mode == REDUCED:
            return [np.stack([b, 1.0 - b], axis=-1) for b in self.blocks]
        return list(self.blocks)

    def subset(self, index) -> "JointPolicy":
        return JointPolicy(tuple(b[index] for b in self.blocks), self.mode)

    @classmethod
    def reduced(cls, *thetas) -> "JointPolicy":
        return cls(tuple(thetas), REDUCED)

    @classmethod
    def simplex(cls, *blocks) -> "JointPolicy":
        return cls(tuple(blocks), SIMPLEX)


def _scalar(a: np.ndarray):
    return float(a) if a.ndim == 0 else a


def probs_from_coords(coords: Sequence[Sequence], mode: str) -> list[list]:
    if mode == REDUCED:
        return [[c[0], 1.0 - c[0]] for c in coords]
    return [list(c) for c in coords]


def expected_payoff(entries: np.ndarray, probs: Sequence[Sequence]):
    """Multilinear expectation ``sum_a R[a] prod_i p_i(a_i)``.

    Uses only ``+`` and ``*`` on the probabilities, so it runs unchanged on
    floats, numpy arrays and :class:`~hla_lab.autodiff.Dual` numbers.
    """
    if len(probs) != entries.ndim:
        raise PolicyError(f"policy has {len(probs)} agents, game has {entries.ndim}")
    for i, p in enumerate(probs):
        if len(p) != entries.shape[i]:
            raise PolicyError(f"agent {i}: {len(p)} actions, game expects {entries.shape[i]}")
    return _contract(entries.tolist(), probs, 0)


def _contract(sub, probs, depth):
    last = depth == len(probs) - 1
    total = None
    for a, p in enumerate(probs[depth]):
        if last:
            r = sub[a]
            if r == 0.0:
                continue
            term = r * p
        else:
            inner = _contract(sub[a], probs, depth + 1)
            if inner is None:
                continue
            term = p * inner
        total = term if total is None else total + term
    if total is None and depth == 0:
        return 0.0
    return total


def value(tensor: PayoffTensor, policy: JointPolicy):
    """Common value of ``policy`` (a float, or an array for batched policies)."""
    if policy.action_counts() != tensor.shape:
        raise PolicyError(f"policy shape {policy.action_counts()} does not match game {tensor.shape}")
    return expected_payoff(tensor.entries, probs_from_coords(policy.coords(), policy.mode))


def value_at(tensor: PayoffTensor, coords: Sequence[Sequence], mode: str):
    """Common value from raw coordinates (any scalar algebra)."""
    return expected_payoff(tensor.entries, probs_from_coords(coords, mode))
