import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import closure_oracle, one_step_oracle, reachable_bfs_oracle

from coat_tuner.bench.synthetic import load
from coat_tuner.errors import InputError
from coat_tuner.grid import ParamGrid
from coat_tuner.sets import (
    ConfidenceState,
    SetState,
    as_mask,
    expand_fixed_point,
    initial_bounds,
    optimistic_step,
    pessimistic_closure,
    pessimistic_step,
    sage_pessimistic,
    to_indices,
    true_reachable_set,
    update_bounds,
    update_sets,
)

TAU = -0.3


def _line(n, spacing_total=1.0):
    return ParamGrid((n,), (0.0,), (spacing_total,))


def _state(g, l, u=None, seed=(0,), L=1.0, eps=0.0, tau=TAU):
    l = np.asarray(l, dtype=float)
    u = l.copy() if u is None else np.asarray(u, dtype=float)
    return ConfidenceState(l, u), SetState.initial(list(seed), g.total, L, eps, tau)


# ---------------------------------------------------------------- bounds

def test_update_bounds_from_sentinel():
    cs = ConfidenceState(np.full(3, -np.inf), np.full(3, np.inf))
    mu, sigma = np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.0])
    out = update_bounds(cs, mu, sigma, 4.0)
    np.testing.assert_array_equal(out.l, mu - 2.0 * sigma)
    np.testing.assert_array_equal(out.u, mu + 2.0 * sigma)
    assert out.n == 1


def test_update_bounds_keeps_tighter_lower():
    cs = ConfidenceState(np.array([0.5]), np.array([2.0]))
    out = update_bounds(cs, np.array([0.3 + 1.0]), np.array([1.0]), 1.0)
    assert out.l[0] == 0.5
    assert out.u[0] == 2.0


def test_update_bounds_idempotent():
    rng = np.random.default_rng(0)
    cs = ConfidenceState(rng.normal(size=20) - 2, rng.normal(size=20) + 2)
    mu, sigma = rng.normal(size=20), rng.random(20)
    once = update_bounds(cs, mu, sigma, 5.0)
    twice = update_bounds(once, mu, sigma, 5.0)
    np.testing.assert_array_equal(once.l, twice.l)
    np.testing.assert_array_equal(once.u, twice.u)


def test_update_bounds_errors():
    cs = ConfidenceState(np.zeros(3), np.ones(3))
    with pytest.raises(InputError):
        update_bounds(cs, np.zeros(4), np.zeros(4), 1.0)
    with pytest.raises(InputError):
        update_bounds(cs, np.zeros(3), np.zeros(3), -1.0)


def test_seed_clamp_raises_lower_only():
    cs = initial_bounds(np.zeros(4), np.ones(4), 4.0, seed=[1], tau=-0.5)
    np.testing.assert_array_equal(cs.l, [-2.0, -0.5, -2.0, -2.0])
    np.testing.assert_array_equal(cs.u, [2.0, 2.0, 2.0, 2.0])


# ---------------------------------------------------------- one-step ops

def test_pessimistic_step_example():
    # tau = 0 keeps the boundary arithmetic exact in binary floating point
    g = _line(3)  # spacing 0.5
    cs, ss = _state(g, [1.0, -1.0, -1.0], L=1.0, tau=0.0)
    out = pessimistic_step({0}, cs, ss, g)
    # point 1: 1 - 0.5 >= 0; point 2: 1 - 1.0 >= 0 (inclusive boundary)
    assert to_indices(out) == {0, 1, 2}
    np.testing.assert_array_equal(out, one_step_oracle(g.coords, cs.l, 0.0, 1.0, as_mask({0}, 3)))


def test_pessimistic_step_just_inside_boundary():
    g = _line(3)
    cs, ss = _state(g, [0.999, -1.0, -1.0], L=1.0, tau=0.0)
    assert to_indices(pessimistic_step({0}, cs, ss, g)) == {0, 1}


def test_pessimistic_step_huge_lipschitz():
    g = _line(6)
    l = np.array([TAU + 1, TAU - 1, TAU + 2, TAU, TAU - 0.1, TAU + 5])
    cs, ss = _state(g, l, L=1e300)
    out = pessimistic_step({0, 1, 2, 3, 4}, cs, ss, g)
    assert to_indices(out) == {0, 2, 3}


def test_pessimistic_step_at_threshold_everywhere():
    g = ParamGrid.uniform(2, 5)
    cs, ss = _state(g, np.full(g.total, TAU))
    assert pessimistic_step(np.ones(g.total, bool), cs, ss, g).all()


def test_optimistic_step_matches_pessimistic_when_eps_zero():
    rng = np.random.default_rng(1)
    g = ParamGrid.uniform(2, 8)
    l = TAU + rng.normal(size=g.total)
    cs, ss = _state(g, l, l, L=3.0, eps=0.0)
    s = rng.random(g.total) < 0.2
    np.testing.assert_array_equal(optimistic_step(s, cs, ss, g), pessimistic_step(s, cs, ss, g))


def test_optimistic_step_large_eps_is_empty():
    g = _line(5)
    u = TAU + np.array([0.1, 0.5, 0.2, 0.0, 0.3])
    cs, ss = _state(g, u - 1, u, L=1.0, eps=0.6)
    assert not optimistic_step(np.ones(5, bool), cs, ss, g).any()


def test_optimistic_step_example():
    g = _line(3)
    u = np.array([1.0, -1.0, -1.0])
    cs, ss = _state(g, u - 2, u, L=1.0, eps=0.4, tau=0.0)
    assert to_indices(optimistic_step({0}, cs, ss, g)) == {0, 1}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(2, 6), st.floats(0.1, 30), st.integers(0, 2**32 - 1))
def test_one_step_matches_pairwise_loop(dims, count, L, seed):
    rng = np.random.default_rng(seed)
    g = ParamGrid.uniform(dims, count)
    l = TAU + rng.normal(scale=2.0, size=g.total)
    cs, ss = _state(g, l, L=L)
    s = rng.random(g.total) < 0.3
    np.testing.assert_array_equal(pessimistic_step(s, cs, ss, g), one_step_oracle(g.coords, l, TAU, L, s))


# ----------------------------------------------------------- fixed point

def test_fixed_point_identity():
    s0 = np.array([True, False, True])
    out, changes = expand_fixed_point(lambda s: s, s0, return_iterations=True)
    np.testing.assert_array_equal(out, s0)
    assert changes == 0


def test_fixed_point_chain_takes_one_step_per_point():
    g = _line(11)  # spacing 0.1
    cs, ss = _state(g, np.full(11, TAU + 0.15), L=1.0)
    out, changes = expand_fixed_point(lambda s: pessimistic_step(s, cs, ss, g), as_mask({0}, 11),
                                      return_iterations=True)
    assert out.all()
    assert changes == 10


def test_fixed_point_gives_up_without_convergence():
    flip = lambda s: ~s  # noqa: E731
    with pytest.raises(RuntimeError):
        expand_fixed_point(flip, np.zeros(4, bool))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 3), st.integers(2, 7), st.floats(0.2, 40), st.integers(0, 2**32 - 1))
def test_fixed_point_matches_transitive_closure(dims, count, L, seed):
    rng = np.random.default_rng(seed)
    g = ParamGrid.uniform(dims, count)
    l = TAU + rng.normal(scale=1.0, size=g.total)
    cs, ss = _state(g, l, L=L)
    s0 = rng.random(g.total) < 0.15
    expected = closure_oracle(g.coords, l, TAU, L, s0)
    got = expand_fixed_point(lambda s: pessimistic_step(s, cs, ss, g), s0)
    np.testing.assert_array_equal(got, expected)
    np.testing.assert_array_equal(pessimistic_closure(s0, cs, ss, g), expected)


# ------------------------------------------------------------ update_sets

def test_initial_sets():
    ss = SetState.initial([3, 4], 10, 1.0, 0.1, TAU)
    assert to_indices(ss.pess) == {3, 4}
    assert ss.opti.all()
    with pytest.raises(InputError):
        SetState.initial([], 10, 1.0, 0.1, TAU)


def test_collapsed_bounds_give_true_reachable_set():
    obj = load("constrained")
    g = ParamGrid.uniform(2, 40)
    q = obj.on_grid(g)
    seed = [g.coords_to_index([0.25, 0.25])]
    ss = SetState.initial(seed, g.total, obj.lipschitz, 0.0, obj.tau)
    cs = ConfidenceState(q.copy(), q.copy())
    new = update_sets(ss, cs, g)
    truth = true_reachable_set(q, seed, obj.lipschitz, 0.0, obj.tau, g)
    np.testing.assert_array_equal(new.pess, truth)
    np.testing.assert_array_equal(new.opti, truth)
    again = update_sets(new, cs, g)
    np.testing.assert_array_equal(again.pess, new.pess)


def test_update_sets_never_drops_seed_or_previous():
    g = _line(10)
    cs, ss = _state(g, np.full(10, TAU - 5.0), L=1.0, seed=(2,))
    ss = SetState(ss.seed, as_mask({2, 5}, 10), ss.opti, 1.0, 0.0, TAU)
    new = update_sets(ss, cs, g)
    assert to_indices(new.pess) == {2, 5}
    assert not (new.pess & ~new.opti).any()


def test_soundness_under_correct_bounds():
    obj = load("constrained")
    g = ParamGrid.uniform(2, 50)
    q = obj.on_grid(g)
    rng = np.random.default_rng(5)
    seed = [g.coords_to_index([0.25, 0.25])]
    eps = 0.2
    for _ in range(10):
        l = q - rng.random(g.total) * 0.5
        u = q + rng.random(g.total) * 0.5
        l[seed] = np.maximum(l[seed], obj.tau)
        ss = SetState.initial(seed, g.total, obj.lipschitz, eps, obj.tau)
        new = update_sets(ss, ConfidenceState(l, u), g)
        assert np.all(q[new.pess] >= obj.tau)
        reach = true_reachable_set(q, seed, obj.lipschitz, eps, obj.tau, g)
        assert not (reach & ~new.opti).any()


# --------------------------------------------------------- reachability

def test_reachable_infeasible_everywhere():
    g = _line(7)
    assert not true_reachable_set(np.full(7, TAU - 1), [0, 3], 1.0, 0.1, TAU, g).any()


def test_reachable_everything_with_zero_lipschitz():
    g = ParamGrid.uniform(2, 6)
    eps = 0.25
    assert true_reachable_set(np.full(g.total, TAU + eps), [7], 0.0, eps, TAU, g).all()


def test_reachable_on_protocol_grid_matches_bfs():
    obj = load("constrained")
    g = ParamGrid.uniform(2, 100, 0, 1000)
    q = obj.on_grid(g)
    seed = [g.coords_to_index([0.25, 0.25])]
    for eps in (0.0, 0.3):
        got = true_reachable_set(q, seed, obj.lipschitz, eps, obj.tau, g)
        expected = reachable_bfs_oracle(g.coords, q - eps, obj.tau, obj.lipschitz, as_mask(seed, g.total))
        np.testing.assert_array_equal(got, expected)
        # the reachable region stays on the seed's hill: the global maximum is cut off
        assert not got[int(np.argmax(q))]


# ----------------------------------------------------------------- sage

def test_sage_is_pessimistic_step_of_domain():
    rng = np.random.default_rng(2)
    g = ParamGrid.uniform(2, 9)
    cs, ss = _state(g, TAU + rng.normal(size=g.total), L=4.0)
    np.testing.assert_array_equal(sage_pessimistic(cs, ss, g),
                                  pessimistic_step(np.ones(g.total, bool), cs, ss, g))


def test_sage_empty_when_no_anchor():
    g = _line(5)
    cs, ss = _state(g, np.full(5, TAU - 0.01))
    assert not sage_pessimistic(cs, ss, g).any()


def test_as_mask_validation():
    with pytest.raises(InputError):
        as_mask([5], 5)
    with pytest.raises(InputError):
        as_mask(np.ones(4, bool), 5)
    assert to_indices(as_mask(frozenset({1, 3}), 5)) == {1, 3}
