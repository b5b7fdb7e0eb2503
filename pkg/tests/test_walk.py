"""Step laws, bookkeeping invariants and the brute-force oracle."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merw_lab.params import WalkParams
from merw_lab.walk import (StateError, WalkState, advance, conditional_moments,
                           derw_step_distribution, merw_step_distribution,
                           simulate, simulate_reference)


def random_state(params, steps, seed):
    """A reachable state: evolve the walk `steps` times with its own law."""
    rng = np.random.default_rng(seed)
    state = WalkState.initial(params)
    dist_fn = derw_step_distribution if params.has_q else merw_step_distribution
    for _ in range(steps):
        state = advance(state, dist_fn(state, params), rng.random())
    return state


# ---------------------------------------------------------------------------
# one-step laws
# ---------------------------------------------------------------------------

def test_first_step_law_d1():
    params = WalkParams(d=1, p=0.7)
    dist = merw_step_distribution(WalkState.initial(params), params)
    assert dist.probs == pytest.approx((0.7, 0.3))


def test_first_step_law_d2():
    params = WalkParams(d=2, p=Fraction(5, 8))
    dist = merw_step_distribution(WalkState.initial(params), params)
    assert dist.probs == (Fraction(5, 8), Fraction(1, 8), Fraction(1, 8), Fraction(1, 8))


def test_uniform_at_p_one_over_2d():
    for d in (1, 2, 3):
        params = WalkParams(d=d, p=Fraction(1, 2 * d))
        state = random_state(params, 37, seed=d)
        dist = merw_step_distribution(state, params)
        assert all(pk == Fraction(1, 2 * d) for pk in dist.probs)


def test_axis_probs_sum_to_one_exactly():
    params = WalkParams(d=3, p=Fraction(3, 7))
    state = random_state(params, 50, seed=1)
    dist = merw_step_distribution(state, params)
    assert sum(dist.axis_probs) == 1
    assert sum(dist.probs) == 1


def test_derw_first_step_is_erw_q():
    # d=1: the axis-decoupled walk is a one-dimensional walk with parameter q
    params = WalkParams(d=1, p=0.3, q=0.8)
    dist = derw_step_distribution(WalkState.initial(params), params)
    assert dist.probs == pytest.approx((0.8, 0.2))


def test_derw_symmetric_at_q_half():
    params = WalkParams(d=2, p=Fraction(2, 5), q=Fraction(1, 2))
    state = random_state(params, 23, seed=3)
    dist = derw_step_distribution(state, params)
    for i in range(2):
        assert dist.probs[2 * i] == dist.probs[2 * i + 1] == dist.axis_probs[i] / 2


def test_derw_fully_biased_axis():
    # all mass on axis 1, q = 1: never steps against its own coordinate
    params = WalkParams(d=2, p=0.5, q=1.0)
    n = 6
    state = WalkState(n, np.array([n, 0]), np.array([n, 0, 0, 0]))
    dist = derw_step_distribution(state, params)
    assert dist.probs[0] == pytest.approx(dist.axis_probs[0])
    assert dist.probs[1] == 0
    assert dist.probs[2] == dist.probs[3] == pytest.approx(dist.axis_probs[1] / 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4),
       st.fractions(min_value=0, max_value=1, max_denominator=32),
       st.integers(0, 40), st.integers(0, 2 ** 32))
def test_step_distribution_is_probability(d, p, steps, seed):
    params = WalkParams(d=d, p=p)
    state = random_state(params, steps, seed)
    dist = merw_step_distribution(state, params)
    assert all(0 <= pk <= 1 for pk in dist.probs)
    assert sum(dist.probs) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4),
       st.fractions(min_value=0, max_value=1, max_denominator=32),
       st.fractions(min_value=0, max_value=1, max_denominator=32),
       st.integers(0, 40), st.integers(0, 2 ** 32))
def test_derw_distribution_is_probability(d, p, q, steps, seed):
    params = WalkParams(d=d, p=p, q=q)
    state = random_state(params, steps, seed)
    dist = derw_step_distribution(state, params)
    assert all(0 <= pk <= 1 for pk in dist.probs)
    assert sum(dist.probs) == 1


# ---------------------------------------------------------------------------
# advance / bookkeeping
# ---------------------------------------------------------------------------

def test_advance_inverse_cdf_convention():
    # uniform over 2d=4 directions, u = 0.5 -> third direction (+e_2)
    params = WalkParams(d=2, p=Fraction(1, 4))
    state = random_state(params, 10, seed=5)
    dist = merw_step_distribution(state, params)
    assert all(pk == Fraction(1, 4) for pk in dist.probs)
    nxt = advance(state, dist, 0.5)
    moved = nxt.dir_counts - state.dir_counts
    assert list(moved) == [0, 0, 1, 0]


def test_advance_at_zero_picks_first_positive_mass():
    params = WalkParams(d=1, p=1.0)
    state = WalkState(2, np.array([0]), np.array([1, 1]))
    dist = merw_step_distribution(state, params)  # (1/2, 1/2) at p=1 here
    nxt = advance(state, dist, 0.0)
    assert nxt.dir_counts[0] == 2


def test_advance_point_mass():
    params = WalkParams(d=2, p=1.0, initial_step=-2)
    state = WalkState.initial(params)
    dist = merw_step_distribution(state, params)  # point mass on -e_2
    for u in (0.0, 0.3, 0.999999):
        nxt = advance(state, dist, u)
        assert nxt.position[1] == -2 and nxt.axis_counts[1] == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4),
       st.floats(0.0, 1.0),
       st.integers(0, 60), st.integers(0, 2 ** 32),
       st.floats(0.0, 1.0, exclude_max=True))
def test_bookkeeping_after_advance(d, p, steps, seed, u):
    params = WalkParams(d=d, p=p)
    state = random_state(params, steps, seed)
    nxt = advance(state, merw_step_distribution(state, params), u)
    nxt.validate()
    assert nxt.n == state.n + 1
    assert int(nxt.axis_counts.sum()) == nxt.n
    assert np.abs(nxt.position - state.position).sum() == 1
    assert np.abs(nxt.position).max() <= nxt.n


def test_validate_rejects_inconsistent_state():
    bad = WalkState(3, np.array([2]), np.array([2, 0]))
    with pytest.raises(StateError):
        bad.validate()
    params = WalkParams(d=1, p=0.5)
    with pytest.raises(StateError):
        merw_step_distribution(bad, params)


# ---------------------------------------------------------------------------
# conditional moments
# ---------------------------------------------------------------------------

def test_moments_vanishing_drift():
    params = WalkParams(d=3, p=Fraction(1, 6))
    state = random_state(params, 30, seed=9)
    drift, second = conditional_moments(state, params)
    assert drift == 0
    assert second == Fraction(state.norm_sq, 3)


def test_moments_initial_state_d1():
    for p in (0.1, 0.5, 0.9):
        params = WalkParams(d=1, p=p)
        drift, second = conditional_moments(WalkState.initial(params), params)
        assert drift == pytest.approx(2 * p - 1)
        assert second == pytest.approx(1.0)


def test_moments_balanced_axes_d2():
    # equal axis occupation kills the correction term
    params = WalkParams(d=2, p=Fraction(5, 8))
    state = WalkState(8, np.array([2, -2]), np.array([3, 1, 1, 3]))
    state.validate()
    _, second = conditional_moments(state, params)
    assert second == Fraction(state.norm_sq, 2)


def test_moments_match_step_distribution():
    # drift and second moment are expectations under the one-step law
    params = WalkParams(d=2, p=Fraction(7, 10))
    state = random_state(params, 41, seed=11)
    dist = merw_step_distribution(state, params)
    x = state.position
    incr = [(k // 2, 1 - 2 * (k % 2)) for k in range(4)]
    drift_direct = sum(pk * sgn * int(x[i]) for pk, (i, sgn) in zip(dist.probs, incr))
    second_direct = sum(pk * (sgn * int(x[i])) ** 2 for pk, (i, sgn) in zip(dist.probs, incr))
    drift, second = conditional_moments(state, params)
    assert drift == drift_direct
    assert second == second_direct


# ---------------------------------------------------------------------------
# exact distribution of S_n for d=1: path enumeration vs dynamic programming
# ---------------------------------------------------------------------------

def exact_law_enumeration(p, n):
    """Distribution of S_n by enumerating all 2^(n-1) sign paths exactly."""
    law = {}
    for signs in itertools.product((1, -1), repeat=n - 1):
        prob = Fraction(1)
        pos, n_plus = 1, 1
        for k, sgn in enumerate(signs, start=1):
            p_up = p * Fraction(n_plus, k) + (1 - p) * Fraction(k - n_plus, k)
            prob *= p_up if sgn == 1 else 1 - p_up
            pos += sgn
            n_plus += sgn == 1
        if prob:
            law[pos] = law.get(pos, Fraction(0)) + prob
    return law


def exact_law_dp(p, n):
    """Same distribution by dynamic programming over (N_n(+), N_n(-))."""
    params = WalkParams(d=1, p=p)
    init = WalkState.initial(params)
    layer = {(1, 0): Fraction(1)}
    for m in range(1, n):
        nxt = {}
        for (np_, nm), prob in layer.items():
            state = WalkState(m, np.array([np_ - nm]), np.array([np_, nm]))
            dist = merw_step_distribution(state, params)
            for key, pk in (((np_ + 1, nm), dist.probs[0]), ((np_, nm + 1), dist.probs[1])):
                if pk:
                    nxt[key] = nxt.get(key, Fraction(0)) + prob * pk
        layer = nxt
    law = {}
    for (np_, nm), prob in layer.items():
        law[np_ - nm] = law.get(np_ - nm, Fraction(0)) + prob
    return law


@pytest.mark.parametrize("p", [Fraction(0), Fraction(1, 4), Fraction(1, 2),
                               Fraction(3, 4), Fraction(9, 10), Fraction(1)])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_exact_law_two_routes_agree(p, n):
    law_a = exact_law_enumeration(p, n)
    law_b = exact_law_dp(p, n)
    assert law_a == law_b
    assert sum(law_a.values()) == 1


# ---------------------------------------------------------------------------
# simulate: determinism and agreement with the pure-Python reference
# ---------------------------------------------------------------------------

def test_simulate_p1_is_ballistic():
    traj = simulate(WalkParams(d=3, p=1.0), n_max=100, seed=4)
    assert np.array_equal(traj.positions[:, 0], traj.steps)
    assert not traj.positions[:, 1:].any()


def test_simulate_single_step():
    traj = simulate(WalkParams(d=2, p=0.3), n_max=1, seed=0)
    assert traj.steps.tolist() == [1]
    assert traj.positions.tolist() == [[1, 0]]


def test_simulate_deterministic():
    params = WalkParams(d=2, p=0.55)
    a = simulate(params, n_max=2000, seed=123, stream_id=9)
    b = simulate(params, n_max=2000, seed=123, stream_id=9)
    assert np.array_equal(a.positions, b.positions)
    c = simulate(params, n_max=2000, seed=123, stream_id=10)
    assert not np.array_equal(a.positions, c.positions)


def test_simulate_stride_consistent_with_full():
    params = WalkParams(d=2, p=0.7)
    full = simulate(params, n_max=500, seed=77)
    strided = simulate(params, n_max=500, seed=77, record_stride=37)
    idx = np.searchsorted(full.steps, strided.steps)
    assert np.array_equal(full.positions[idx], strided.positions)


@pytest.mark.parametrize("params", [
    WalkParams(d=1, p=0.5),
    WalkParams(d=2, p=0.8),
    WalkParams(d=3, p=0.15),
    WalkParams(d=2, p=0.6, q=0.2),
    WalkParams(d=1, p=0.4, q=0.9),
])
def test_kernel_matches_reference(params):
    n = 400
    traj = simulate(params, n_max=n, seed=2024, stream_id=3)
    states = simulate_reference(params, n_max=n, seed=2024, stream_id=3)
    ref = np.array([s.position for s in states])
    assert np.array_equal(traj.positions, ref)
    assert np.array_equal(traj.final_state.dir_counts, states[-1].dir_counts)
