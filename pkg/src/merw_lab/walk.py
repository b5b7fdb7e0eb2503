"""Exact one-step laws and reference stepping for the memory walks.

Directions are indexed 0..2d-1 in the fixed order +e_1, -e_1, +e_2, -e_2,
..., so direction k acts on axis k//2 with sign +1 for even k.  Inverse-CDF
sampling uses half-open cells [c_{k-1}, c_k); a draw exactly on a boundary
therefore belongs to the cell that starts there, and u=0 always selects the
first direction with positive mass.

The functions here are the exact reference implementation: with a Fraction
parameter all probabilities are exact rationals.  Bulk simulation goes
through the compiled kernels in :mod:`merw_lab.ensemble`, which reproduce
the same float arithmetic step for step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .params import WalkParams, derived_constants
from .rng import stream

DIRECTION_TOL = 1e-12


class StateError(ValueError):
    """Walk state violates its bookkeeping identities."""


def direction_axis(k: int) -> int:
    return k >> 1


def direction_sign(k: int) -> int:
    return 1 - 2 * (k & 1)


def direction_index(axis: int, sign: int) -> int:
    return 2 * axis + (0 if sign > 0 else 1)


@dataclass
class WalkState:
    """Sufficient statistic of a walk at time n.

    ``dir_counts[k]`` counts steps in direction k; the position and the
    per-axis counts are determined by it, but the position is carried
    explicitly so it stays cheap to read.
    """

    n: int
    position: np.ndarray    # (d,) int64
    dir_counts: np.ndarray  # (2d,) int64

    @property
    def d(self) -> int:
        return len(self.position)

    @property
    def axis_counts(self) -> np.ndarray:
        return self.dir_counts[0::2] + self.dir_counts[1::2]

    @property
    def norm_sq(self) -> int:
        return int(np.dot(self.position, self.position))

    def validate(self) -> None:
        if self.n < 1:
            raise StateError(f"time must be >= 1, got n={self.n}")
        if len(self.dir_counts) != 2 * self.d:
            raise StateError("dir_counts length must be 2d")
        if (self.dir_counts < 0).any():
            raise StateError("direction counts must be nonnegative")
        if int(self.dir_counts.sum()) != self.n:
            raise StateError("direction counts must sum to n")
        plus, minus = self.dir_counts[0::2], self.dir_counts[1::2]
        if not np.array_equal(plus - minus, self.position):
            raise StateError("counts and position disagree")

    def copy(self) -> "WalkState":
        return WalkState(self.n, self.position.copy(), self.dir_counts.copy())

    @classmethod
    def initial(cls, params: WalkParams) -> "WalkState":
        """State at n=1 after the deterministic first step."""
        position = np.zeros(params.d, dtype=np.int64)
        counts = np.zeros(2 * params.d, dtype=np.int64)
        axis = abs(params.initial_step) - 1
        sign = 1 if params.initial_step > 0 else -1
        position[axis] = sign
        counts[direction_index(axis, sign)] = 1
        return cls(1, position, counts)


@dataclass
class StepDistribution:
    """One-step conditional law over the 2d directions.

    ``probs`` are floats or exact Fractions depending on the parameter
    type; ``axis_probs`` is the induced law of the moved axis.
    """

    probs: tuple
    axis_probs: tuple

    def __post_init__(self):
        total = sum(self.probs)
        if any(p < -DIRECTION_TOL or p > 1 + DIRECTION_TOL for p in self.probs):
            raise StateError(f"step probabilities outside [0,1]: {self.probs}")
        if abs(total - 1) > DIRECTION_TOL:
            raise StateError(f"step probabilities sum to {total}, not 1")

    def as_array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])


def merw_step_distribution(state: WalkState, params: WalkParams) -> StepDistribution:
    """Conditional law of the next step of the memory walk.

    prob(direction k) = a * N_n(k)/n + (1-p)/(2d-1) with a = (2dp-1)/(2d-1);
    the moved-axis law is c_n(i) = a * b_n(i)/n + (2-2p)/(2d-1).
    """
    if params.has_q:
        raise ValueError("expected plain walk parameters without q")
    state.validate()
    d, p, n = params.d, params.p, state.n
    if isinstance(p, Fraction):
        coef = Fraction(2 * d * p.numerator - p.denominator,
                        (2 * d - 1) * p.denominator)
        const = (1 - p) / (2 * d - 1)
    else:
        coef = (2 * d * p - 1) / (2 * d - 1)
        const = (1 - p) / (2 * d - 1)
    probs = tuple(coef * int(c) / n + const for c in state.dir_counts)
    axis_probs = tuple(coef * int(b) / n + 2 * const for b in state.axis_counts)
    return StepDistribution(probs, axis_probs)


def derw_step_distribution(state: WalkState, params: WalkParams) -> StepDistribution:
    """Conditional law of the next step of the axis-decoupled walk.

    The axis is chosen with the same law c_n(i) as the memory walk (built
    from this walk's own axis counts); within the chosen axis the sign
    follows a one-dimensional memory rule with parameter q:

    prob(+-e_i) = c_n(i) * (1/2 +- (2q-1) x_i / (2 b_n(i))) for b_n(i) > 0,
    and c_n(i)/2 each when the axis is untouched.
    """
    if not params.has_q:
        raise ValueError("axis-decoupled walk needs the secondary parameter q")
    state.validate()
    d, p, q, n = params.d, params.p, params.q, state.n
    if isinstance(p, Fraction) or isinstance(q, Fraction):
        p, q = Fraction(p), Fraction(q)
        half = Fraction(1, 2)
    else:
        half = 0.5
    coef = (2 * d * p - 1) / (2 * d - 1)
    axis_probs = tuple(coef * int(b) / n + (2 - 2 * p) / (2 * d - 1)
                       for b in state.axis_counts)
    probs = []
    for i in range(d):
        b = int(state.axis_counts[i])
        x = int(state.position[i])
        tilt = (2 * q - 1) * x / (2 * b) if b > 0 else 0
        up = axis_probs[i] * (half + tilt)
        down = axis_probs[i] * (half - tilt)
        # |x_i| <= b_n(i) keeps both factors in [0,1]; anything else is a bug
        assert -DIRECTION_TOL <= up and -DIRECTION_TOL <= down
        probs += [up, down]
    return StepDistribution(tuple(probs), axis_probs)


def advance(state: WalkState, dist: StepDistribution, u) -> WalkState:
    """One inverse-CDF step: locate u in the cumulative partition of [0,1)."""
    chosen = None
    acc = 0
    for k, pk in enumerate(dist.probs):
        acc = acc + pk
        if u < acc:
            chosen = k
            break
        if pk > 0:
            chosen = k  # fallback if rounding leaves u above the total mass
    if chosen is None:
        raise StateError("step distribution has no positive mass")
    nxt = state.copy()
    nxt.n += 1
    nxt.dir_counts[chosen] += 1
    nxt.position[direction_axis(chosen)] += direction_sign(chosen)
    return nxt


def conditional_moments(state: WalkState, params: WalkParams) -> tuple[float, float]:
    """Drift and second moment of the next radial increment S_n . sigma_{n+1}.

    drift = a ||S_n||^2 / n,
    second moment = ||S_n||^2/d + sum_i a (b_n(i)/n - 1/d) S_n(i)^2.
    """
    state.validate()
    a = derived_constants(params).memory_exponent
    d, n = params.d, state.n
    norm_sq = state.norm_sq
    if isinstance(a, Fraction):
        one_over_d, share = Fraction(1, d), lambda b: Fraction(int(b), n)
    else:
        one_over_d, share = 1 / d, lambda b: int(b) / n
    drift = a * norm_sq / n
    second = norm_sq * one_over_d + sum(
        a * (share(b) - one_over_d) * int(x) ** 2
        for b, x in zip(state.axis_counts, state.position)
    )
    return drift, second


@dataclass
class Trajectory:
    """A realized path: recorded positions plus the final state.

    Reproducible: identical (params, seed, stream_id, n_max, record_stride)
    yield identical recorded data.
    """

    params: WalkParams
    seed: int
    stream_id: int
    n_max: int
    record_stride: int
    steps: np.ndarray      # recorded times, always containing 1 and n_max
    positions: np.ndarray  # (len(steps), d) int64
    final_state: WalkState = field(repr=False)


def record_steps(n_max: int, stride: int) -> np.ndarray:
    """Times recorded by simulate: 1, 1+stride, ... plus the endpoint."""
    steps = np.arange(1, n_max + 1, stride, dtype=np.int64)
    if steps[-1] != n_max:
        steps = np.append(steps, n_max)
    return steps


def simulate(params: WalkParams, n_max: int, seed: int = 0, stream_id: int = 0,
             record_stride: int = 1) -> Trajectory:
    """Generate one trajectory from the uniform stream (seed, stream_id).

    Dispatches to the compiled kernel; the pure-Python path below it is the
    semantic reference (they agree step for step, see the tests).
    """
    from .ensemble import simulate_kernel_single
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    steps = record_steps(n_max, record_stride)
    positions, final_state = simulate_kernel_single(params, n_max, seed, stream_id, steps)
    return Trajectory(params, seed, stream_id, n_max, record_stride,
                      steps, positions, final_state)


def simulate_reference(params: WalkParams, n_max: int, seed: int = 0,
                       stream_id: int = 0) -> list[WalkState]:
    """Pure-Python simulate used to pin down the kernel semantics in tests."""
    dist_fn = derw_step_distribution if params.has_q else merw_step_distribution
    gen = stream(seed, stream_id)
    state = WalkState.initial(params)
    states = [state.copy()]
    for _ in range(n_max - 1):
        u = gen.random()
        state = advance(state, dist_fn(state, params), u)
        states.append(state.copy())
    return states
