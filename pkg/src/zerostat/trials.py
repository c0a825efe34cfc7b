"""Trial-parallel Monte Carlo plumbing.

Every trial draws from its own ``trial_rng(master_seed, t)`` stream, so the
result of trial t is the same whatever the chunking or worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from .ensembles import EnsembleSpec, SectionSample, sample_coefficients, trial_rng
from .zeros import CERT_TOL, ZeroSolverError, solve_cp1_batch, solve_system_2d

DEFAULT_CHUNK = 250


class SolverBudgetError(RuntimeError):
    """Too many Monte Carlo trials failed to certify their zeros."""

    def __init__(self, failures: int, trials: int, partial=None):
        super().__init__(f"{failures} of {trials} trials failed (budget 1%)")
        self.failures = failures
        self.trials = trials
        self.partial = partial


def chunks(trials: int, size: int = DEFAULT_CHUNK) -> list[range]:
    return [range(s, min(s + size, trials)) for s in range(0, trials, size)]


def parallel_map(fn, items, workers: int = 1) -> list:
    """Ordered map; results are merged in item order regardless of ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _chart_rows(spec: EnsembleSpec, coeffs: np.ndarray) -> np.ndarray:
    rows = np.zeros((coeffs.shape[0], spec.N + 1), dtype=complex)
    rows[:, spec.exponents[:, 0]] = coeffs * np.exp(-spec.log_norms)[None, :]
    return rows


def zero_sets(spec: EnsembleSpec, trials: range, master_seed: int, tol: float = CERT_TOL) -> list:
    """Zero sets for the given trial indices; failed trials come back as exceptions.

    m = 1 draws one section per trial; m = 2 draws two, in order, from the same stream.
    """
    if spec.m == 1:
        coeffs = np.array([sample_coefficients(spec.dim, trial_rng(master_seed, t)) for t in trials])
        coeffs = coeffs.reshape(len(trials), spec.dim)
        return solve_cp1_batch(_chart_rows(spec, coeffs), tol=tol)
    if spec.m == 2:
        out = []
        for t in trials:
            rng = trial_rng(master_seed, t)
            f = SectionSample(spec, sample_coefficients(spec.dim, rng))
            g = SectionSample(spec, sample_coefficients(spec.dim, rng))
            try:
                out.append(solve_system_2d(f, g, tol=tol))
            except (ZeroSolverError, ValueError) as exc:
                out.append(exc)
        return out
    raise ValueError("zero sampling supports m <= 2")


def map_zero_sets(spec: EnsembleSpec, trials: int, master_seed: int, reducer, workers: int = 1, chunk: int = DEFAULT_CHUNK):
    """Apply ``reducer(trial_range, zero_sets)`` chunk by chunk; returns the ordered list of chunk results."""
    return parallel_map(partial(_chunk_job, spec, master_seed, reducer), chunks(trials, chunk), workers)


def _chunk_job(spec, master_seed, reducer, rng_range):
    return reducer(rng_range, zero_sets(spec, rng_range, master_seed))


def check_budget(failures: int, trials: int, partial=None, budget: float = 0.01):
    if failures > budget * trials:
        raise SolverBudgetError(failures, trials, partial)
