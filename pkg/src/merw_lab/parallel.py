"""Deterministic work sharding.

Jobs are fixed-size batches defined independently of the worker count, and
results are always combined in job order, so the same config produces
byte-identical output whether it runs on 1 worker or 32.
"""

from __future__ import annotations

import multiprocessing as mp
import os


def default_workers() -> int:
    env = os.environ.get("MERW_LAB_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def _call(job):
    fn, args = job
    return fn(*args)


def map_deterministic(fn, arg_tuples, workers: int = 1) -> list:
    """Apply fn to each argument tuple, preserving submission order."""
    jobs = [(fn, args) for args in arg_tuples]
    if workers <= 1 or len(jobs) <= 1:
        return [_call(job) for job in jobs]
    with mp.get_context("fork").Pool(min(workers, len(jobs))) as pool:
        return pool.map(_call, jobs)
