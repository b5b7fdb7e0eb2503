"""Batched replica simulation of the memory walks.

One compiled kernel advances a batch of independent replicas step by step,
consuming one uniform per replica per step from pre-generated Philox blocks
(replica r of an ensemble reads the stream keyed (master_seed, offset + r),
exactly as a single trajectory would).  Trackers accumulate the per-step
statistics the harness needs, so a path of 1e6 steps never has to be stored.

Batches are a fixed 512 replicas regardless of worker count, and results
are concatenated in batch order, which keeps every output bit-identical
under any parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .params import WalkParams
from .rng import stream, uniform_block
from .walk import WalkState, record_steps

BATCH_REPLICAS = 512
TIME_CHUNK = 1 << 14


@numba.njit(cache=True)
def _merw_block(dir_counts, position, norm_sq, n_start, U, coef, const,
                cp_steps, cp_ptr, cp_position, cp_norm_sq, cp_axis_counts,
                cp_zero_count, cp_coord_zero, cp_last_violation,
                cp_violation_count, cp_ratio_max,
                zero_count, coord_zero,
                exit_thr_sq, exit_step, exit_ptr,
                viol_thr_sq, last_violation, violation_count,
                ratio_norm, ratio_max,
                drift_window, drift_rmin_sq, drift_edges_sq,
                drift_sum, drift_sumsq, drift_cnt):
    # dir_counts (R, 2d), position (R, d), norm_sq (R,), U (T, R)
    T, R = U.shape
    twod = dir_counts.shape[1]
    track_zero = zero_count.size > 0
    track_czero = coord_zero.size > 0
    track_exit = exit_thr_sq.size > 0
    n_viol = viol_thr_sq.shape[0]
    track_ratio = ratio_norm.size > 0
    track_drift = drift_edges_sq.size > 0
    n = n_start
    ptr = cp_ptr
    for t in range(T):
        fn = 1.0 * n
        for r in range(R):
            u = U[t, r]
            acc = 0.0
            k = -1
            fallback = -1
            for j in range(twod):
                pj = coef * dir_counts[r, j] / fn + const
                if pj > 0.0:
                    fallback = j
                acc += pj
                if u < acc:
                    k = j
                    break
            if k < 0:
                k = fallback
            i = k >> 1
            sgn = 1 - 2 * (k & 1)

            if track_drift and drift_window[0] <= n < drift_window[1] \
                    and norm_sq[r] > drift_rmin_sq:
                b1 = dir_counts[r, 0] + dir_counts[r, 1]
                log_norm = 0.5 * np.log(1.0 * norm_sq[r])
                if log_norm * 2.0 * abs(b1 / fn - 0.5) < 0.1:
                    f_old = np.sqrt(log_norm)
                    new_sq = norm_sq[r] + 2 * sgn * position[r, i] + 1
                    if new_sq > 0:
                        f_new = np.sqrt(0.5 * np.log(1.0 * new_sq))
                        val = f_new - f_old - coef / (2.0 * fn * f_old)
                        nf = np.sqrt(1.0 * norm_sq[r])
                        for bb in range(drift_edges_sq.size - 1):
                            if drift_edges_sq[bb] <= norm_sq[r] < drift_edges_sq[bb + 1]:
                                drift_sum[r, bb] += val
                                drift_sumsq[r, bb] += val * val
                                drift_cnt[r, bb] += 1
                                break

            dir_counts[r, k] += 1
            norm_sq[r] += 2 * sgn * position[r, i] + 1
            position[r, i] += sgn

            if track_zero and norm_sq[r] == 0:
                zero_count[r] += 1
            if track_czero and position[r, i] == 0:
                coord_zero[r, i] += 1
            if track_exit:
                while exit_ptr[r] < exit_thr_sq.size and \
                        norm_sq[r] >= exit_thr_sq[exit_ptr[r]]:
                    exit_step[r, exit_ptr[r]] = n + 1
                    exit_ptr[r] += 1
            for v in range(n_viol):
                if norm_sq[r] <= viol_thr_sq[v, n + 1]:
                    last_violation[r, v] = n + 1
                    violation_count[r, v] += 1
            if track_ratio:
                nrm = ratio_norm[n + 1]
                if nrm > 0.0:
                    ratio = norm_sq[r] / nrm
                    if ratio > ratio_max[r]:
                        ratio_max[r] = ratio
        n += 1
        if ptr < cp_steps.size and cp_steps[ptr] == n:
            for r in range(R):
                cp_norm_sq[ptr, r] = norm_sq[r]
                for i in range(position.shape[1]):
                    cp_position[ptr, r, i] = position[r, i]
                    cp_axis_counts[ptr, r, i] = dir_counts[r, 2 * i] + dir_counts[r, 2 * i + 1]
                if track_zero:
                    cp_zero_count[ptr, r] = zero_count[r]
                if track_czero:
                    for i in range(position.shape[1]):
                        cp_coord_zero[ptr, r, i] = coord_zero[r, i]
                for v in range(n_viol):
                    cp_last_violation[ptr, r, v] = last_violation[r, v]
                    cp_violation_count[ptr, r, v] = violation_count[r, v]
                if track_ratio:
                    cp_ratio_max[ptr, r] = ratio_max[r]
            ptr += 1
    return n, ptr


@numba.njit(cache=True)
def _derw_block(dir_counts, position, n_start, U, coef, const2, q_coef,
                cp_steps, cp_ptr, cp_position, cp_axis_counts):
    # Axis-decoupled walk: axis by c_n(i), sign by the in-axis memory rule.
    T, R = U.shape
    d = position.shape[1]
    n = n_start
    ptr = cp_ptr
    for t in range(T):
        fn = 1.0 * n
        for r in range(R):
            u = U[t, r]
            acc = 0.0
            k = -1
            fallback = -1
            for i in range(d):
                b = dir_counts[r, 2 * i] + dir_counts[r, 2 * i + 1]
                c = coef * b / fn + const2
                x = position[r, i]
                if b > 0:
                    tilt = q_coef * x / (2.0 * b)
                else:
                    tilt = 0.0
                up = c * (0.5 + tilt)
                down = c * (0.5 - tilt)
                if up > 0.0:
                    fallback = 2 * i
                acc += up
                if u < acc:
                    k = 2 * i
                    break
                if down > 0.0:
                    fallback = 2 * i + 1
                acc += down
                if u < acc:
                    k = 2 * i + 1
                    break
            if k < 0:
                k = fallback
            i = k >> 1
            dir_counts[r, k] += 1
            position[r, i] += 1 - 2 * (k & 1)
        n += 1
        if ptr < cp_steps.size and cp_steps[ptr] == n:
            for r in range(R):
                for i in range(d):
                    cp_position[ptr, r, i] = position[r, i]
                    cp_axis_counts[ptr, r, i] = dir_counts[r, 2 * i] + dir_counts[r, 2 * i + 1]
            ptr += 1
    return n, ptr


@dataclass
class TrackerRequest:
    """Which per-step statistics the kernel should accumulate."""

    zeros: bool = False
    coord_zeros: bool = False
    exit_radii: tuple[int, ...] = ()
    violation_curves: tuple[np.ndarray, ...] = ()  # threshold^2 indexed by n
    ratio_curve: np.ndarray | None = None          # normalizer indexed by n
    drift_window: tuple[int, int] | None = None    # [lo, hi) in n
    drift_r_min: float = 0.0
    drift_edges: tuple[float, ...] = ()            # radius bin edges


@dataclass
class EnsembleSpec:
    """Replica ensemble: distinct stream ids under one master seed."""

    params: WalkParams
    replicas: int
    n_max: int
    master_seed: int
    checkpoints: tuple[int, ...]
    stream_offset: int = 0

    def __post_init__(self):
        cps = tuple(sorted(set(int(c) for c in self.checkpoints)))
        if cps and (cps[0] < 1 or cps[-1] > self.n_max):
            raise ValueError("checkpoints must lie in [1, n_max]")
        object.__setattr__(self, "checkpoints", cps)


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    checkpoints: np.ndarray        # (C,)
    position: np.ndarray           # (C, R, d)
    norm_sq: np.ndarray            # (C, R)
    axis_counts: np.ndarray        # (C, R, d)
    zero_count: np.ndarray | None = None
    coord_zero: np.ndarray | None = None
    exit_steps: np.ndarray | None = None       # (R, M); 0 = never exited
    last_violation: np.ndarray | None = None   # (C, R, K)
    violation_count: np.ndarray | None = None  # (C, R, K)
    ratio_max: np.ndarray | None = None        # (C, R)
    drift_sum: np.ndarray | None = None        # (R, B)
    drift_sumsq: np.ndarray | None = None
    drift_cnt: np.ndarray | None = None


def _batch_ranges(replicas: int, batch: int = BATCH_REPLICAS):
    return [(lo, min(lo + batch, replicas)) for lo in range(0, replicas, batch)]


def _empty_cp(C, R, d):
    return (np.zeros((C, R, d), np.int64), np.zeros((C, R), np.int64),
            np.zeros((C, R, d), np.int64))


def _run_batch(spec: EnsembleSpec, req: TrackerRequest, lo: int, hi: int):
    params = spec.params
    d, R = params.d, hi - lo
    n_max = spec.n_max
    cps = np.asarray(spec.checkpoints, dtype=np.int64)
    C = len(cps)
    coef = (2 * d * params.p_float - 1) / (2 * d - 1)
    const = (1 - params.p_float) / (2 * d - 1)

    init = WalkState.initial(params)
    dir_counts = np.tile(init.dir_counts, (R, 1))
    position = np.tile(init.position, (R, 1))
    norm_sq = np.full(R, init.norm_sq, dtype=np.int64)

    cp_position, cp_norm_sq, cp_axis = _empty_cp(C, R, d)
    zero_count = np.zeros(R if req.zeros else 0, np.int64)
    coord_zero = np.zeros((R, d) if req.coord_zeros else (0, d), np.int64)
    cp_zero = np.zeros((C, R) if req.zeros else (C, 0), np.int64)
    cp_czero = np.zeros((C, R, d) if req.coord_zeros else (C, 0, d), np.int64)

    radii = np.asarray(sorted(req.exit_radii), dtype=np.int64)
    exit_thr_sq = radii.astype(np.float64) ** 2
    exit_step = np.zeros((R, len(radii)), np.int64)
    exit_ptr = np.zeros(R, np.int64)
    # the deterministic first step may already cross the smallest radii
    for r in range(R):
        while exit_ptr[r] < len(radii) and init.norm_sq >= exit_thr_sq[exit_ptr[r]]:
            exit_step[r, exit_ptr[r]] = 1
            exit_ptr[r] += 1

    K = len(req.violation_curves)
    if K:
        viol_thr_sq = np.stack([np.asarray(c, dtype=np.float64) for c in req.violation_curves])
        if viol_thr_sq.shape[1] != n_max + 1:
            raise ValueError("violation curves must have length n_max + 1")
    else:
        viol_thr_sq = np.zeros((0, n_max + 1))
    last_violation = np.zeros((R, K), np.int64)
    violation_count = np.zeros((R, K), np.int64)
    for v in range(K):  # scan the initial state at n = 1
        if K and init.norm_sq <= viol_thr_sq[v, 1]:
            last_violation[:, v] = 1
            violation_count[:, v] = 1
    cp_lastv = np.zeros((C, R, K), np.int64)
    cp_violc = np.zeros((C, R, K), np.int64)

    if req.ratio_curve is not None:
        ratio_norm = np.asarray(req.ratio_curve, dtype=np.float64)
        ratio_max = np.zeros(R)
        if ratio_norm[1] > 0:
            ratio_max[:] = init.norm_sq / ratio_norm[1]
    else:
        ratio_norm = np.zeros(0)
        ratio_max = np.zeros(0)
    cp_ratio = np.zeros((C, R) if ratio_norm.size else (C, 0))

    if req.drift_window is not None:
        drift_window = np.asarray(req.drift_window, dtype=np.int64)
        drift_edges_sq = np.asarray(req.drift_edges, dtype=np.float64) ** 2
        nbins = max(len(req.drift_edges) - 1, 0)
    else:
        drift_window = np.zeros(2, np.int64)
        drift_edges_sq = np.zeros(0)
        nbins = 0
    drift_sum = np.zeros((R, nbins))
    drift_sumsq = np.zeros((R, nbins))
    drift_cnt = np.zeros((R, nbins), np.int64)

    gens = [stream(spec.master_seed, spec.stream_offset + r) for r in range(lo, hi)]
    n, cp_ptr = 1, 0
    if C and cps[0] == 1:  # checkpoint at the initial time
        cp_position[0, :, :] = position
        cp_norm_sq[0, :] = norm_sq
        cp_axis[0, :, :] = dir_counts[:, 0::2] + dir_counts[:, 1::2]
        if K:
            cp_lastv[0] = last_violation
            cp_violc[0] = violation_count
        if ratio_norm.size:
            cp_ratio[0] = ratio_max
        cp_ptr = 1
    while n < n_max:
        T = min(TIME_CHUNK, n_max - n)
        U = uniform_block(gens, T)
        n, cp_ptr = _merw_block(
            dir_counts, position, norm_sq, n, U, coef, const,
            cps, cp_ptr, cp_position, cp_norm_sq, cp_axis,
            cp_zero, cp_czero, cp_lastv, cp_violc, cp_ratio,
            zero_count, coord_zero,
            exit_thr_sq, exit_step, exit_ptr,
            viol_thr_sq, last_violation, violation_count,
            ratio_norm, ratio_max,
            drift_window, req.drift_r_min ** 2, drift_edges_sq,
            drift_sum, drift_sumsq, drift_cnt)
    return dict(position=cp_position, norm_sq=cp_norm_sq, axis_counts=cp_axis,
                zero_count=cp_zero, coord_zero=cp_czero,
                exit_steps=exit_step, last_violation=cp_lastv,
                violation_count=cp_violc, ratio_max=cp_ratio,
                drift_sum=drift_sum, drift_sumsq=drift_sumsq, drift_cnt=drift_cnt)


def run_ensemble(spec: EnsembleSpec, req: TrackerRequest | None = None,
                 workers: int = 1) -> EnsembleResult:
    """Run all replicas; deterministic for any worker count."""
    from .parallel import map_deterministic
    req = req or TrackerRequest()
    if spec.params.has_q:
        raise ValueError("ensemble trackers are defined for the plain memory walk")
    ranges = _batch_ranges(spec.replicas)
    parts = map_deterministic(_run_batch, [(spec, req, lo, hi) for lo, hi in ranges],
                              workers=workers)
    merged = {key: np.concatenate([p[key] for p in parts], axis=1)
              for key in ("position", "norm_sq", "axis_counts", "zero_count",
                          "coord_zero", "last_violation", "violation_count",
                          "ratio_max")}
    merged_r = {key: np.concatenate([p[key] for p in parts], axis=0)
                for key in ("exit_steps", "drift_sum", "drift_sumsq", "drift_cnt")}
    return EnsembleResult(
        spec=spec,
        checkpoints=np.asarray(spec.checkpoints, dtype=np.int64),
        position=merged["position"],
        norm_sq=merged["norm_sq"],
        axis_counts=merged["axis_counts"],
        zero_count=merged["zero_count"] if req.zeros else None,
        coord_zero=merged["coord_zero"] if req.coord_zeros else None,
        exit_steps=merged_r["exit_steps"] if req.exit_radii else None,
        last_violation=merged["last_violation"] if req.violation_curves else None,
        violation_count=merged["violation_count"] if req.violation_curves else None,
        ratio_max=merged["ratio_max"] if req.ratio_curve is not None else None,
        drift_sum=merged_r["drift_sum"] if req.drift_window else None,
        drift_sumsq=merged_r["drift_sumsq"] if req.drift_window else None,
        drift_cnt=merged_r["drift_cnt"] if req.drift_window else None,
    )


def simulate_kernel_single(params: WalkParams, n_max: int, seed: int,
                           stream_id: int, steps: np.ndarray):
    """Kernel-backed single trajectory; returns (positions, final WalkState)."""
    d = params.d
    cps = np.asarray(steps, dtype=np.int64)
    C = len(cps)
    init = WalkState.initial(params)
    dir_counts = init.dir_counts[None, :].copy()
    position = init.position[None, :].copy()
    norm_sq = np.full(1, init.norm_sq, dtype=np.int64)
    cp_position, cp_norm_sq, cp_axis = _empty_cp(C, 1, d)
    gens = [stream(seed, stream_id)]
    n, cp_ptr = 1, 0
    if C and cps[0] == 1:
        cp_position[0, 0] = position[0]
        cp_norm_sq[0, 0] = norm_sq[0]
        cp_axis[0, 0] = dir_counts[0, 0::2] + dir_counts[0, 1::2]
        cp_ptr = 1
    if params.has_q:
        coef = (2 * d * params.p_float - 1) / (2 * d - 1)
        const2 = (2 - 2 * params.p_float) / (2 * d - 1)
        q_coef = 2 * params.q_float - 1
        while n < n_max:
            T = min(TIME_CHUNK, n_max - n)
            U = uniform_block(gens, T)
            n, cp_ptr = _derw_block(dir_counts, position, n, U, coef, const2,
                                    q_coef, cps, cp_ptr, cp_position, cp_axis)
    else:
        coef = (2 * d * params.p_float - 1) / (2 * d - 1)
        const = (1 - params.p_float) / (2 * d - 1)
        empty_i = np.zeros(0, np.int64)
        empty_f = np.zeros(0)
        while n < n_max:
            T = min(TIME_CHUNK, n_max - n)
            U = uniform_block(gens, T)
            n, cp_ptr = _merw_block(
                dir_counts, position, norm_sq, n, U, coef, const,
                cps, cp_ptr, cp_position, cp_norm_sq, cp_axis,
                np.zeros((C, 0), np.int64), np.zeros((C, 0, d), np.int64),
                np.zeros((C, 1, 0), np.int64), np.zeros((C, 1, 0), np.int64),
                np.zeros((C, 0)),
                empty_i, np.zeros((0, d), np.int64),
                empty_f, np.zeros((1, 0), np.int64), np.zeros(1, np.int64),
                np.zeros((0, n_max + 1)), np.zeros((1, 0), np.int64),
                np.zeros((1, 0), np.int64),
                empty_f, empty_f,
                np.zeros(2, np.int64), 0.0, empty_f,
                np.zeros((1, 0)), np.zeros((1, 0)), np.zeros((1, 0), np.int64))
    final = WalkState(n_max, position[0].copy(), dir_counts[0].copy())
    return cp_position[:, 0, :], final
