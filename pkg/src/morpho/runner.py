"""Deterministic parallel execution and seeded stream derivation.

Tasks are pure functions of their arguments; results are returned in task
order, so the worker count can never change an output. Random streams use
the Philox counter-based generator with per-task keys derived from
(master seed, task indices) -- scheduling order cannot perturb them either.
"""

from __future__ import annotations

import multiprocessing
import os

import numpy as np

RNG_NAME = "numpy Philox (counter-based), streams keyed by SeedSequence(master_seed, *indices)"

_WORKERS_ENV = "MORPHO_WORKERS"


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit request, else $MORPHO_WORKERS, else CPU count."""
    if requested is not None:
        if requested < 1:
            raise ValueError("worker count must be >= 1")
        return requested
    env = os.environ.get(_WORKERS_ENV)
    if env:
        try:
            val = int(env)
        except ValueError as exc:
            raise ValueError(f"${_WORKERS_ENV} must be an integer, got {env!r}") from exc
        if val < 1:
            raise ValueError(f"${_WORKERS_ENV} must be >= 1, got {val}")
        return val
    return os.cpu_count() or 1


def derive_seed(master_seed: int, *indices: int) -> int:
    """Stable 63-bit stream key for a task; independent of scheduling."""
    state = np.random.SeedSequence((master_seed, *indices)).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def make_rng(seed: int) -> np.random.Generator:
    """The project-wide generator: Philox keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def parallel_map(fn, tasks, *, workers: int = 1, chunksize: int = 1) -> list:
    """Map ``fn`` over ``tasks`` preserving order.

    ``fn`` must be a module-level function and each task picklable. With
    ``workers == 1`` the map runs in-process (no pool, identical results).
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(fn, tasks, chunksize=chunksize)
