import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hla_lab.game import (
    CoordinationGameSpec,
    InvalidGameError,
    JointPolicy,
    PayoffTensor,
    PolicyError,
    build_three_action_game,
    build_two_action_game,
    load_game_spec,
    value,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
regret = st.floats(0.01, 50.0, allow_nan=False)


def simplex_point(m):
    return st.lists(st.floats(0.0, 1.0), min_size=m, max_size=m).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: np.array(v) / sum(v))


# -- builders -------------------------------------------------------------------

def test_two_action_builder_examples():
    assert np.array_equal(build_two_action_game(1, 0).entries, [[1, 0], [0, 1]])
    assert np.array_equal(build_two_action_game(1, -1).entries, [[1, -1], [-1, 1]])
    assert CoordinationGameSpec("two", k=-1, alpha=1).g == 2
    assert CoordinationGameSpec("two", k=-2, alpha=3).g == 5


def test_three_action_builder_examples():
    assert np.array_equal(build_three_action_game(0).entries, [[10, 0, 0], [0, 2, 0], [0, 0, 10]])
    assert CoordinationGameSpec("three", k=-10).g == 20
    assert CoordinationGameSpec("three", k=-40).g == 50
    assert np.array_equal(build_three_action_game(-7).entries, [[10, 0, -7], [0, 2, 0], [-7, 0, 10]])


@pytest.mark.parametrize("alpha,k", [(0, 0), (-1, -1), (1, 0.5)])
def test_two_action_rejects_invalid(alpha, k):
    with pytest.raises(InvalidGameError):
        build_two_action_game(alpha, k)
    with pytest.raises(InvalidGameError):
        CoordinationGameSpec("two", k=k, alpha=alpha)


def test_three_action_rejects_k_above_ten():
    with pytest.raises(InvalidGameError):
        build_three_action_game(10.5)


@pytest.mark.parametrize("entries", [[1.0, 2.0], [[1.0], [2.0]], [[1.0, np.inf], [0.0, 1.0]]])
def test_payoff_tensor_invariants(entries):
    with pytest.raises(InvalidGameError):
        PayoffTensor(np.array(entries))


def test_from_regret():
    assert CoordinationGameSpec.from_regret("three", 50).k == -40
    two = CoordinationGameSpec.from_regret("two", 0.2)
    assert (two.alpha, two.k, two.g) == (0.2, 0.0, 0.2)
    assert CoordinationGameSpec.from_regret("two", 2, alpha=1).k == -1


def test_load_game_spec(tmp_path):
    p = tmp_path / "game.cfg"
    p.write_text("# two-action\nvariant = two\nalpha = 3\nk = -2\n")
    spec = load_game_spec(p)
    assert spec == CoordinationGameSpec("two", k=-2, alpha=3)
    p.write_text("variant = three\nk = -40\n")
    assert load_game_spec(p).g == 50


# -- policies -------------------------------------------------------------------

def test_policy_validation():
    with pytest.raises(PolicyError):
        JointPolicy.reduced(1.2, 0.5)
    with pytest.raises(PolicyError):
        JointPolicy.simplex([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(PolicyError):
        JointPolicy.simplex([1.1, -0.1], [0.5, 0.5])
    with pytest.raises(PolicyError):
        value(build_three_action_game(0), JointPolicy.reduced(0.5, 0.5))
    JointPolicy.simplex([1 / 3, 1 / 3, 1 / 3], [0.0, 0.0, 1.0])


# -- value examples ---------------------------------------------------------------

def test_value_examples():
    game = build_two_action_game(1, -1)
    assert value(game, JointPolicy.reduced(0.5, 0.5)) == 0
    for alpha, k in [(1, -1), (3, -2), (0.5, 0)]:
        g2 = build_two_action_game(alpha, k)
        assert value(g2, JointPolicy.reduced(1, 1)) == alpha
        assert value(g2, JointPolicy.reduced(1, 0)) == k
    g3 = build_three_action_game(-5)
    assert value(g3, JointPolicy.simplex([1, 0, 0], [0, 0, 1])) == -5
    assert value(g3, JointPolicy.simplex([0, 1, 0], [0, 1, 0])) == 2


def test_value_batched_matches_scalar(rng):
    game = build_two_action_game(2, -3)
    t = rng.uniform(size=(2, 7))
    batch = value(game, JointPolicy.reduced(t[0], t[1]))
    single = [value(game, JointPolicy.reduced(a, b)) for a, b in t.T]
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-14)


# -- properties ---------------------------------------------------------------------

@settings(max_examples=200)
@given(st.floats(0.01, 20), st.floats(-20, 0), unit, unit)
def test_reduced_value_is_the_quadratic(alpha, k, t1, t2):
    g = alpha - k
    v = value(build_two_action_game(alpha, k), JointPolicy.reduced(t1, t2))
    assert v == pytest.approx(2 * g * t1 * t2 - g * (t1 + t2) + alpha, abs=1e-12 * max(1, g))


def test_reduced_value_quadratic_1000_points(rng):
    alpha, k = 1.5, -2.5
    g = alpha - k
    t1, t2 = rng.uniform(size=(2, 1000))
    v = value(build_two_action_game(alpha, k), JointPolicy.reduced(t1, t2))
    np.testing.assert_allclose(v, 2 * g * t1 * t2 - g * (t1 + t2) + alpha, rtol=0, atol=1e-12)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3), unit)
def test_value_is_multilinear(seed, n, m, lam):
    r = np.random.default_rng(seed)
    game = PayoffTensor(r.normal(size=(m,) * n))
    blocks = [r.dirichlet(np.ones(m)) for _ in range(n)]
    i = int(r.integers(n))
    u, v = r.dirichlet(np.ones(m)), r.dirichlet(np.ones(m))
    mix = lam * u + (1 - lam) * v
    mix = mix / mix.sum()

    def at(block):
        bs = list(blocks)
        bs[i] = block
        return value(game, JointPolicy.simplex(*bs))

    assert at(mix) == pytest.approx(lam * at(u) + (1 - lam) * at(v), abs=1e-12)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(2, 3))
def test_value_at_pure_profile_is_the_entry(seed, n, m):
    r = np.random.default_rng(seed)
    game = PayoffTensor(r.normal(size=(m,) * n))
    idx = tuple(int(a) for a in r.integers(m, size=n))
    blocks = [np.eye(m)[a] for a in idx]
    assert value(game, JointPolicy.simplex(*blocks)) == game.entries[idx]


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), simplex_point(3), simplex_point(3))
def test_value_bounded_by_entries(seed, p, q):
    game = PayoffTensor(np.random.default_rng(seed).normal(size=(3, 3)) * 10)
    v = value(game, JointPolicy.simplex(p / p.sum(), q / q.sum()))
    assert game.entries.min() - 1e-12 <= v <= game.entries.max() + 1e-12


@given(regret, unit, unit)
def test_two_action_symmetry(g, t1, t2):
    game = CoordinationGameSpec.from_regret("two", g).tensor()
    assert value(game, JointPolicy.reduced(t1, t2)) == pytest.approx(
        value(game, JointPolicy.reduced(t2, t1)), abs=1e-12 * g)
