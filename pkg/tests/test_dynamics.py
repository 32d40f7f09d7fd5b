import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hla_lab import dynamics as dyn
from hla_lab.game import CoordinationGameSpec, JointPolicy, build_three_action_game, value
from hla_lab.learners import UpdateRule

pos_g = st.floats(0.01, 50.0, allow_nan=False)
pos_eta = st.floats(0.01, 5.0, allow_nan=False)


def two(g):
    return CoordinationGameSpec.from_regret("two", g).tensor()


# -- closed forms ---------------------------------------------------------------------

def test_closed_form_examples():
    la = dyn.closed_form_dynamics("la", 1.0, 1.0)
    np.testing.assert_array_equal(la.A, [[4, 2], [2, 4]])
    np.testing.assert_array_equal(la.b, [3, 3])
    naive = dyn.closed_form_dynamics("naive", 2.0)
    np.testing.assert_array_equal(naive.A, [[0, 4], [4, 0]])
    np.testing.assert_array_equal(naive.b, [2, 2])
    np.testing.assert_allclose(dyn.eigenvalues(dyn.closed_form_dynamics("lola", 1.0, 1.0).A), [10, 6])


def test_closed_form_rejects_bad_input():
    with pytest.raises(ValueError):
        dyn.closed_form_dynamics("sos", 1.0, 1.0)
    with pytest.raises(ValueError):
        dyn.closed_form_dynamics("la", 0.0, 1.0)


@pytest.mark.parametrize("kind,g,eta", [("la", 1, 1), ("lola", 3, 0.5), ("hla", 1, 1), ("naive", 4, 1)])
def test_verify_dynamics_examples(kind, g, eta):
    assert dyn.verify_dynamics(UpdateRule(kind, eta), two(g)) < 1e-9


@pytest.mark.parametrize("kind", ["naive", "la", "lola", "hla"])
def test_linearize_recovers_closed_form(kind):
    got = dyn.linearize(UpdateRule(kind, 0.7), two(1.3))
    want = dyn.closed_form_dynamics(kind, 1.3, 0.7)
    np.testing.assert_allclose(got.A, want.A, atol=1e-12)
    np.testing.assert_allclose(got.b, want.b, atol=1e-12)


# -- fixed points and classes ----------------------------------------------------------

@settings(max_examples=100)
@given(pos_g, pos_eta, st.sampled_from(["naive", "la", "lola", "hla"]))
def test_fixed_point_is_centre(g, eta, kind):
    d = dyn.closed_form_dynamics(kind, g, eta)
    fp = dyn.fixed_point(d)
    if fp.unique:
        np.testing.assert_allclose(fp.location, [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(d.rate([0.5, 0.5]), [0, 0], atol=1e-9 * max(1, np.abs(d.A).max()))


def test_singular_la_is_a_line_not_a_crash():
    rep = dyn.classify(dyn.closed_form_dynamics("la", 0.5, 1.0))
    assert not rep.unique
    assert rep.kind == "unstable-line"
    np.testing.assert_allclose(dyn.closed_form_dynamics("la", 0.5, 1.0).rate(rep.location), 0, atol=1e-12)


@pytest.mark.parametrize("kind,g,eigs,cls", [
    ("la", 0.4, (1.44, -0.16), "saddle"),
    ("la", 0.6, (2.64, 0.24), "source"),
    ("lola", 0.3, (8 * 0.09 + 0.6, 8 * 0.09 - 0.6), "source"),
])
def test_classify_examples(kind, g, eigs, cls):
    rep = dyn.classify(dyn.closed_form_dynamics(kind, g, 1.0))
    np.testing.assert_allclose(rep.eigenvalues, eigs, atol=1e-12)
    assert rep.kind == cls


@pytest.mark.parametrize("ev,cls", [
    ([2.0, -1.0], "saddle"), ([2.0, 1.0], "source"), ([-1.0, -2.0], "sink"),
    ([1.0, 0.0], "unstable-line"), ([0.0, -1.0], "stable-line"), ([0.0, 0.0], "degenerate"),
    ([1 + 1j, 1 - 1j], "spiral-source"), ([-1 + 1j, -1 - 1j], "spiral-sink"), ([1j, -1j], "center"),
])
def test_classify_eigenvalues_table(ev, cls):
    assert dyn.classify_eigenvalues(np.array(ev), 1e-12) == cls


def test_hla_grid_is_saddle():
    for g in np.linspace(0.1, 10, 10):
        for eta in np.linspace(0.1, 2, 10):
            assert dyn.classify(dyn.closed_form_dynamics("hla", g, eta)).kind == "saddle"


@pytest.mark.parametrize("eta", [0.25, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("kind,factor", [("la", 2), ("lola", 4)])
def test_threshold_flip(kind, factor, eta):
    t = 1 / (factor * eta)
    below = dyn.classify(dyn.closed_form_dynamics(kind, t - 1e-6, eta)).kind
    above = dyn.classify(dyn.closed_form_dynamics(kind, t + 1e-6, eta)).kind
    assert (below, above) == ("saddle", "source")


@settings(max_examples=100)
@given(pos_g, pos_eta)
def test_sign_of_smaller_eigenvalue(g, eta):
    ev = dyn.eigenvalues(dyn.closed_form_dynamics("la", g, eta).A)
    lam2 = 4 * eta * g**2 - 2 * g
    if abs(lam2) > 1e-9 * max(1, 4 * eta * g**2):
        assert np.sign(ev[1]) == np.sign(lam2)


@settings(max_examples=100)
@given(pos_g)
def test_naive_eigenvalues_exact(g):
    ev = dyn.eigenvalues(dyn.closed_form_dynamics("naive", g).A)
    np.testing.assert_allclose(ev, [2 * g, -2 * g], rtol=0, atol=1e-12 * max(1, g))


@settings(max_examples=100)
@given(st.floats(0.1, 10), st.floats(0.1, 2))
def test_hla_trace_det_and_eigenvalues(g, eta):
    A = dyn.closed_form_dynamics("hla", g, eta).A
    scale = max(1.0, np.abs(A).max() ** 2)
    assert abs(np.linalg.det(A) + 4 * g**2) <= 1e-9 * scale
    assert abs(np.trace(A) - 12 * eta * g**2) <= 1e-9 * max(1, 12 * eta * g**2)
    root = 2 * g * math.sqrt(9 * eta**2 * g**2 + 1)
    np.testing.assert_allclose(dyn.eigenvalues(A), [6 * eta * g**2 + root, 6 * eta * g**2 - root],
                               rtol=1e-9, atol=1e-9)


# -- phase integration -----------------------------------------------------------------

def test_fixed_point_trajectory_stays():
    traj = dyn.integrate_phase(UpdateRule("la", 1.0), two(0.4), [0.5, 0.5], horizon=10.0)
    assert np.max(np.abs(np.diff(traj.theta, axis=0))) < 1e-9


def test_la_saddle_trajectory_goes_to_corner():
    traj = dyn.integrate_phase(UpdateRule("la", 1.0), two(0.4), [0.6, 0.6], horizon=20.0, constrained=True)
    np.testing.assert_allclose(traj.theta[-1], [1, 1], atol=1e-9)


def test_la_source_trajectory_goes_off_diagonal():
    traj = dyn.integrate_phase(UpdateRule("la", 1.0), two(1.0), [0.4, 0.6], horizon=20.0, constrained=True)
    np.testing.assert_allclose(traj.theta[-1], [0, 1], atol=1e-9)


def test_unconstrained_trajectory_flags_divergence():
    traj = dyn.integrate_phase(UpdateRule("la", 1.0), two(1.0), [0.4, 0.6])
    assert traj.diverged
    assert traj.theta.shape[0] < 5001
    assert np.max(np.abs(traj.theta[-1])) <= dyn.DIVERGENCE_BOUND


@pytest.mark.parametrize("kind", ["naive", "la", "lola", "hla"])
def test_half_step_consistency(kind, rng):
    rule = UpdateRule(kind, 1.0)
    starts = rng.uniform(size=(8, 2))
    a = dyn.integrate_phase(rule, two(1.0), starts, step=0.01, constrained=True)
    b = dyn.integrate_phase(rule, two(1.0), starts, step=0.005, constrained=True)
    assert np.max(np.abs(a.theta[-1] - b.theta[-1])) < 1e-6
    # off the box the flow grows exponentially, so compare relative endpoints
    a = dyn.integrate_phase(rule, two(0.5), starts, step=0.01, horizon=1.0)
    b = dyn.integrate_phase(rule, two(0.5), starts, step=0.005, horizon=1.0)
    assert np.max(np.abs(a.theta[-1] - b.theta[-1]) / (1 + np.abs(b.theta[-1]))) < 1e-6


def test_batched_trajectory_matches_single(rng):
    rule = UpdateRule("lola", 1.0)
    starts = rng.uniform(size=(3, 2))
    batch = dyn.integrate_phase(rule, two(0.8), starts, horizon=2.0, constrained=True)
    for i, s in enumerate(starts):
        one = dyn.integrate_phase(rule, two(0.8), s, horizon=2.0, constrained=True)
        np.testing.assert_allclose(batch.theta[:, i], one.theta, rtol=0, atol=1e-15)


# -- simplex projection -----------------------------------------------------------------

@settings(max_examples=200)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_project_simplex_is_feasible_and_nearest(y):
    y = np.array(y)
    p = dyn.project_simplex(y)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12
    # no vertex of the simplex is closer than the projection
    for v in np.eye(len(y)):
        assert np.linalg.norm(y - p) <= np.linalg.norm(y - v) + 1e-12
    np.testing.assert_allclose(dyn.project_simplex(p), p, atol=1e-12)


# -- training ---------------------------------------------------------------------------

def test_train_naive_example():
    run = dyn.train(UpdateRule("naive"), two(1.0), JointPolicy.reduced(0.9, 0.8), 0.1)
    assert run.converged
    np.testing.assert_array_equal([run.final.blocks[0], run.final.blocks[1]], [1, 1])
    assert (run.outcome, run.value) == (dyn.GLOBAL, 1.0)


def test_train_lola_miscoordinates():
    game = CoordinationGameSpec("two", k=-0.5, alpha=0.5).tensor()
    run = dyn.train(UpdateRule("lola", 1.0), game, JointPolicy.reduced(0.3, 0.7), 0.05)
    assert run.outcome == dyn.MISCOORD
    assert run.value == -0.5


def test_train_hla_reaches_equilibrium(rng):
    game = CoordinationGameSpec("two", k=-0.25, alpha=0.75).tensor()
    for t in rng.uniform(size=(20, 2)):
        run = dyn.train(UpdateRule("hla", 1.0, (0, 1)), game, JointPolicy.reduced(*t), 0.05)
        assert run.outcome == dyn.GLOBAL
        assert run.value == 0.75
        assert float(run.final.blocks[0]) in (0.0, 1.0)


def test_train_rejects_bad_lr():
    with pytest.raises(ValueError):
        dyn.train(UpdateRule("naive"), two(1.0), JointPolicy.reduced(0.2, 0.3), 0.0)


def test_non_convergence_is_other():
    run = dyn.train(UpdateRule("naive"), two(1.0), JointPolicy.reduced(0.6, 0.7), 1e-4, max_iter=3)
    assert not run.converged
    assert run.outcome == dyn.OTHER
    assert run.iterations == 3


def test_naive_value_is_monotone(rng):
    g = 2.0
    game = two(g)
    lr = 0.9 / (2 * 2 * g)  # below 1 / (2 max|A|)
    rule = UpdateRule("naive")
    for t in rng.uniform(size=(50, 2)):
        p = JointPolicy.reduced(*t)
        prev = value(game, p)
        for _ in range(200):
            p = dyn.train_batch(rule, game, p, lr, max_iter=1).final
            cur = value(game, p)
            assert cur >= prev - 1e-12
            prev = cur


def test_simplex_training_stays_feasible(rng):
    game = build_three_action_game(-20.0)
    blocks = [rng.dirichlet(np.ones(3), size=30) for _ in range(2)]
    for kind in ("naive", "la", "lola", "hla"):
        run = dyn.train_batch(UpdateRule(kind, 0.1), game, JointPolicy.simplex(*blocks), 0.05)
        JointPolicy(run.final.blocks, "simplex")  # validates
        assert np.all(run.converged)


@pytest.mark.parametrize("kind", ["naive", "hla"])
def test_no_miscoordination_from_random_starts(kind, rng):
    t = rng.uniform(size=(2, 1000))
    rule = UpdateRule(kind, 1.0, (0, 1) if kind == "hla" else None)
    for g in (0.5, 2.0):
        game = two(g)
        run = dyn.train_batch(rule, game, JointPolicy.reduced(*t), 0.05)
        labels, _ = dyn.classify_outcomes(game, run.final)
        assert not np.any(labels == dyn.MISCOORD)


# -- outcome classes ---------------------------------------------------------------------

@pytest.mark.parametrize("b1,b2,label,val", [
    ((1, 0, 0), (1, 0, 0), dyn.GLOBAL, 10),
    ((0, 0, 1), (0, 0, 1), dyn.GLOBAL, 10),
    ((0, 1, 0), (0, 1, 0), dyn.LOCAL, 2),
    ((1, 0, 0), (0, 0, 1), dyn.MISCOORD, -7),
    ((1, 0, 0), (0, 1, 0), dyn.MISCOORD, 0),
    ((0.5, 0.5, 0), (1, 0, 0), dyn.OTHER, 5),
])
def test_classify_outcome_examples(b1, b2, label, val):
    out = dyn.classify_outcome(build_three_action_game(-7), JointPolicy.simplex(b1, b2))
    assert out[0] == label
    assert out[1] == pytest.approx(val)


def test_outcome_tolerance():
    game = build_three_action_game(0)
    near = JointPolicy.simplex((1 - 5e-4, 5e-4, 0), (1, 0, 0))
    assert dyn.classify_outcome(game, near)[0] == dyn.GLOBAL
    assert dyn.classify_outcome(game, near, tol=1e-4)[0] == dyn.OTHER
