"""Monte Carlo reference: repeated deterministic runs over sampled parameters.

Realization ``k`` always draws from the stream seeded by ``(base_seed, k)``.
Realizations are grouped into fixed blocks; each block is accumulated with
Welford updates in index order and finished blocks are merged in block
order with Chan's pairwise formula. The result therefore does not depend on
the number of workers or on completion order.
"""
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .engine import SeriesStats
from .errors import InsufficientSamples, TSMError
from .stochastic import CorrelationSpec, realization_rng, sample_realization

BLOCK = 25
MAX_STORED = 20


@njit(cache=True, nogil=True)
def _welford_add(mean, m2, count, x):
    """Add one sample ``x`` to running ``mean``/``m2`` holding ``count`` samples."""
    inv = 1.0 / (count + 1)
    for i in range(mean.shape[0]):
        for j in range(mean.shape[1]):
            d = x[i, j] - mean[i, j]
            mean[i, j] += d * inv
            m2[i, j] += d * (x[i, j] - mean[i, j])


@njit(cache=True, nogil=True)
def _chan_merge(mean_a, m2_a, na, mean_b, m2_b, nb):
    """Merge accumulator ``b`` into ``a`` in place."""
    n = na + nb
    fb = nb / n
    w = na * nb / n
    for i in range(mean_a.shape[0]):
        for j in range(mean_a.shape[1]):
            d = mean_b[i, j] - mean_a[i, j]
            mean_a[i, j] += d * fb
            m2_a[i, j] += m2_b[i, j] + d * d * w


@dataclass
class Accumulator:
    """Running mean and sum of squared deviations for an array-valued stream."""

    mean: np.ndarray
    m2: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape), 0)

    def add(self, x):
        x = np.ascontiguousarray(x, dtype=float).reshape(self.mean.shape[0], -1)
        _welford_add(self.mean.reshape(x.shape), self.m2.reshape(x.shape), self.count, x)
        self.count += 1

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            self.mean[...] = other.mean
            self.m2[...] = other.m2
        else:
            shp = (self.mean.shape[0], -1)
            _chan_merge(self.mean.reshape(shp), self.m2.reshape(shp), self.count,
                        other.mean.reshape(shp), other.m2.reshape(shp), other.count)
        self.count += other.count
        return self

    @property
    def variance(self):
        """Unbiased variance; zeros when fewer than two samples were seen."""
        if self.count < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.count - 1)


@dataclass
class MCStats(SeriesStats):
    """Monte Carlo mean and unbiased variance per step and quantity."""

    n: int = 0
    seed: int = 0
    n_rejected: int = 0
    samples: list = field(default_factory=list)

    @property
    def variance_defined(self):
        return self.n >= 2


def mc_standard_error(stats):
    """Standard errors ``(se_mean, se_std)`` for every step and quantity.

    ``se_mean = sqrt(var / n)``; ``se_std = std / sqrt(2 (n - 1))`` is the
    normal-theory approximation.
    """
    if stats.n < 2:
        raise InsufficientSamples(f"standard errors need n >= 2, got {stats.n}")
    var = np.clip(stats.var, 0.0, None)
    return np.sqrt(var / stats.n), np.sqrt(var) / np.sqrt(2.0 * (stats.n - 1))


def _run_block(model, params, correlation, strains, times, dt, base_seed, lo, hi, n_q, keep):
    acc = Accumulator.empty((len(times), n_q))
    rejected = 0
    stored = []
    for k in range(lo, hi):
        real = sample_realization(params, correlation, realization_rng(base_seed, k))
        rejected += real.rejected
        try:
            traj = model.with_realization(real).simulate(strains, times, dt)
        except TSMError as exc:
            exc.realization = k
            exc.args = (f"realization {k}: {exc}",) + exc.args[1:]
            raise
        acc.add(traj)
        if k < keep:
            stored.append(traj.copy())
    return acc, rejected, stored


def run_mc(model, load, grid, params, correlation=None, n=1000, base_seed=0, workers=None,
           keep_samples=0, block=BLOCK):
    """Monte Carlo statistics of ``model.quantity_names`` over ``n`` realizations.

    Parameters
    ----------
    model : MaterialModel
        Mean model; ``with_realization`` builds each sampled variant.
    workers : int, optional
        Thread count; defaults to the available CPUs. Compiled kernels
        release the GIL, so threads run concurrently.
    keep_samples : int
        Number of leading trajectories (at most 20) to keep for plotting.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    correlation = CorrelationSpec() if correlation is None else correlation
    keep = min(int(keep_samples), MAX_STORED)
    workers = max(1, int(workers or os.cpu_count() or 1))
    times, strains = grid.times, load.path(grid)
    names = tuple(model.quantity_names)
    bounds = [(lo, min(n, lo + block)) for lo in range(0, n, block)]

    def job(b):
        return _run_block(model, params, correlation, strains, times, grid.dt, base_seed,
                          b[0], b[1], len(names), keep)

    total = Accumulator.empty((len(times), len(names)))
    rejected = 0
    samples = []
    if workers == 1:
        results = map(job, bounds)
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(job, bounds)
    try:
        for acc, rej, stored in results:
            total.merge(acc)
            rejected += rej
            samples.extend(stored)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return MCStats(times, names, total.mean, total.variance, n=n, seed=base_seed,
                   n_rejected=rejected, samples=samples)


def timed_run_mc(*args, **kwargs):
    """``run_mc`` plus its wall-clock duration in seconds."""
    t0 = time.perf_counter()
    stats = run_mc(*args, **kwargs)
    return stats, time.perf_counter() - t0
