"""Staggered explicit-Euler integration of extended material models.

An extended model carries the deterministic internal variables ``y0`` and,
per fluctuation source, a tangent ``I = dy/dphi``. Both are advanced with
explicit Euler using only step-``n`` values, so the tangent recursion is the
exact derivative of the discrete deterministic map. Statistics then follow
from contracting linearized quantities with a :class:`~tsmech.stochastic.MomentSet`.
"""
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState

STRESS_NAMES = ("sig_x", "sig_y", "sig_z", "sig_yz", "sig_xz", "sig_xy")
_SOURCE_SHAPE = {"elastic": (6, 6), "scalar": ()}
_POST_CHUNK = 8192


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")
        n = round(self.t_end / self.dt)
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class ExtendedState:
    """Deterministic internal variables plus one tangent per fluctuation source."""

    y0: np.ndarray
    tangents: list

    def copy(self):
        return ExtendedState(np.array(self.y0, dtype=float),
                             [np.array(t, dtype=float) for t in self.tangents])


@dataclass
class Trajectory:
    """Extended-model states at every grid time (index 0 is the initial state)."""

    times: np.ndarray
    strains: np.ndarray
    y0: np.ndarray
    tangents: list

    def state(self, n):
        return ExtendedState(self.y0[n], [t[n] for t in self.tangents])

    def __len__(self):
        return len(self.times)


@dataclass
class SeriesStats:
    """Per-step mean and variance of named scalar quantities."""

    times: np.ndarray
    names: tuple
    mean: np.ndarray
    var: np.ndarray

    @property
    def std(self):
        return np.sqrt(np.clip(self.var, 0.0, None))

    def index(self, name):
        return self.names.index(name)

    def column(self, name):
        i = self.index(name)
        return self.mean[:, i], self.std[:, i]


@dataclass
class StatSeries(SeriesStats):
    iv_names: tuple = ()
    stress_names: tuple = STRESS_NAMES

    def _cols(self, names):
        return [self.index(n) for n in names]

    @property
    def iv_mean(self):
        return self.mean[:, self._cols(self.iv_names)]

    @property
    def iv_var(self):
        return self.var[:, self._cols(self.iv_names)]

    @property
    def stress_mean(self):
        return self.mean[:, self._cols(self.stress_names)]

    @property
    def stress_var(self):
        return self.var[:, self._cols(self.stress_names)]


class MaterialModel(ABC):
    """Interface every extended material model implements.

    Subclasses supply the per-step right-hand sides and stress linearization.
    The vectorized hooks (``integrate_mean``, ``integrate_tangents``,
    ``iv_linearization``, ``stress_linearization``) have generic Python
    defaults; concrete models override them with compiled kernels.
    """

    name = "model"
    source_kinds = ("elastic",)
    iv_names = ()
    stress_names = STRESS_NAMES

    @property
    def quantity_names(self):
        """Quantities tracked by both the TSM post-processing and Monte Carlo."""
        return tuple(self.iv_names) + tuple(self.stress_names)

    def source_shape(self, k):
        return np.shape(self.initial_state().y0) + _SOURCE_SHAPE[self.source_kinds[k]]

    @abstractmethod
    def initial_state(self):
        ...

    @abstractmethod
    def det_rhs(self, y, eps, t):
        ...

    @abstractmethod
    def tangent_rhs(self, y, tangents, eps, t):
        """Time derivative of every tangent, evaluated at the step-``n`` state."""

    @abstractmethod
    def mean_stress(self, y, eps):
        ...

    @abstractmethod
    def stress_tangents(self, y, tangents, eps):
        """Per-source derivatives of the stress, each shaped ``(6, *source)``."""

    def with_realization(self, realization):
        """Deterministic model for one parameter realization (Monte Carlo)."""
        raise NotImplementedError

    def source_mean(self, source):
        """Mean value of fluctuation source ``source`` (stiffness or scalar)."""
        raise NotImplementedError

    def perturbed(self, source, delta):
        """Copy of the model with ``delta`` added to source ``source``."""
        raise NotImplementedError

    # -- vectorized hooks ------------------------------------------------

    def integrate_mean(self, y_init, strains, times, dt):
        return _euler_mean(self, y_init, strains, times, dt)

    def integrate_tangents(self, y0, tangents_init, strains, times, dt):
        return _euler_tangents(self, y0, tangents_init, strains, times, dt)

    def iv_linearization(self, y0, tangents, strains):
        """Means ``(m, q)`` and flat tangents ``(m, q, P)`` of internal variables."""
        m = y0.shape[0]
        mean = y0.reshape(m, -1)
        G = np.concatenate([t.reshape(m, mean.shape[1], -1) for t in tangents], axis=2)
        return mean, G

    def stress_linearization(self, y0, tangents, strains):
        """Means ``(m, 6)`` and flat tangents ``(m, 6, P)`` of the stress."""
        m = y0.shape[0]
        mean = np.empty((m, 6))
        G = []
        for n in range(m):
            mean[n] = self.mean_stress(y0[n], strains[n])
            ts = self.stress_tangents(y0[n], [t[n] for t in tangents], strains[n])
            G.append(np.concatenate([np.reshape(t, (6, -1)) for t in ts], axis=1))
        return mean, np.array(G)

    def simulate(self, strains, times, dt):
        """Deterministic run returning ``(n + 1, len(quantity_names))``."""
        y = self.integrate_mean(self.initial_state().y0, strains, times, dt)
        sig = np.array([self.mean_stress(y[n], strains[n]) for n in range(len(times))])
        return np.concatenate([y.reshape(len(times), -1), sig], axis=1)


def _check_finite(arr, n):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteState(n)


def _euler_mean(model, y_init, strains, times, dt):
    y = np.empty((len(times),) + np.shape(y_init))
    y[0] = y_init
    for n in range(len(times) - 1):
        y[n + 1] = y[n] + dt * np.asarray(model.det_rhs(y[n], strains[n], times[n]))
        _check_finite(y[n + 1], n + 1)
    return y


def _euler_tangents(model, y0, tangents_init, strains, times, dt):
    out = []
    for t0 in tangents_init:
        a = np.empty((len(times),) + np.shape(t0))
        a[0] = t0
        out.append(a)
    for n in range(len(times) - 1):
        rates = model.tangent_rhs(y0[n], [a[n] for a in out], strains[n], times[n])
        for a, r in zip(out, rates):
            a[n + 1] = a[n] + dt * np.asarray(r)
            _check_finite(a[n + 1], n + 1)
    return out


def integrate_extended(model, load, grid, initial=None, reference=False):
    """Integrate the deterministic state and its tangents over ``grid``.

    The deterministic trajectory is computed first and the tangents are then
    advanced against it (staggered scheme). With ``reference=True`` the
    generic per-step Python path is used instead of the model's kernels.
    """
    initial = model.initial_state() if initial is None else initial
    times = grid.times
    strains = load.path(grid)
    if reference:
        y0 = _euler_mean(model, initial.y0, strains, times, grid.dt)
        tangents = _euler_tangents(model, y0, initial.tangents, strains, times, grid.dt)
    else:
        y0 = model.integrate_mean(initial.y0, strains, times, grid.dt)
        tangents = model.integrate_tangents(y0, initial.tangents, strains, times, grid.dt)
    return Trajectory(times, strains, y0, list(tangents))


def _contract(G, F):
    """Quadratic forms ``g^T (F F^T) g`` for stacked flat tangents ``G``."""
    if F.shape[1] == 0:
        return np.zeros(G.shape[:-1])
    H = G @ F
    return np.einsum("...r,...r->...", H, H)


def _stats(linearize, traj, F):
    n = len(traj)
    means, vars_ = [], []
    for lo in range(0, n, _POST_CHUNK):
        hi = min(n, lo + _POST_CHUNK)
        mean, G = linearize(traj.y0[lo:hi], [t[lo:hi] for t in traj.tangents],
                            traj.strains[lo:hi])
        means.append(mean)
        vars_.append(_contract(G, F))
    return np.concatenate(means), np.concatenate(vars_)


def postprocess(traj, moments, model, timing=None):
    """Expectation and variance of internal variables and stress.

    Linear truncation: the mean is the deterministic trajectory and the
    variance is ``g . <phi phi^T> . g`` with ``g`` the flat tangent of each
    quantity. Cross-source moments (e.g. ``<sy D>``) enter automatically.
    """
    moments.check_layout(model.source_kinds)
    F = moments.factor()
    timing = {} if timing is None else timing

    t0 = time.perf_counter()
    iv_mean, iv_var = _stats(model.iv_linearization, traj, F)
    t1 = time.perf_counter()
    s_mean, s_var = _stats(model.stress_linearization, traj, F)
    t2 = time.perf_counter()
    timing["iv_stats"] = t1 - t0
    timing["stress_stats"] = t2 - t1

    return StatSeries(traj.times, tuple(model.quantity_names),
                      np.concatenate([iv_mean, s_mean], axis=1),
                      np.concatenate([iv_var, s_var], axis=1),
                      iv_names=tuple(model.iv_names), stress_names=tuple(model.stress_names))


def state_statistics(model, state, strain, moments):
    """Mean and variance of internal variables and stress at a single state.

    Returns ``(iv_mean, iv_var, stress_mean, stress_var)``.
    """
    moments.check_layout(model.source_kinds)
    F = moments.factor()
    y0 = np.asarray(state.y0, dtype=float)[None]
    tangents = [np.asarray(t, dtype=float)[None] for t in state.tangents]
    eps = np.asarray(strain, dtype=float)[None]
    mi, Gi = model.iv_linearization(y0, tangents, eps)
    ms, Gs = model.stress_linearization(y0, tangents, eps)
    return mi[0], _contract(Gi, F)[0], ms[0], _contract(Gs, F)[0]


@dataclass
class TSMTiming:
    """Wall-clock seconds per phase of one TSM run."""

    mean: float = 0.0
    tangent: float = 0.0
    iv_stats: float = 0.0
    stress_stats: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.mean + self.tangent + self.iv_stats + self.stress_stats


def run_tsm(model, load, grid, moments, initial=None):
    """Simulation and post-processing phases; returns ``(StatSeries, TSMTiming, Trajectory)``."""
    initial = model.initial_state() if initial is None else initial
    times, strains = grid.times, load.path(grid)
    timing = TSMTiming()

    t0 = time.perf_counter()
    y0 = model.integrate_mean(initial.y0, strains, times, grid.dt)
    t1 = time.perf_counter()
    tangents = model.integrate_tangents(y0, initial.tangents, strains, times, grid.dt)
    t2 = time.perf_counter()
    timing.mean, timing.tangent = t1 - t0, t2 - t1

    traj = Trajectory(times, strains, y0, list(tangents))
    buckets = {}
    stats = postprocess(traj, moments, model, timing=buckets)
    timing.iv_stats, timing.stress_stats = buckets["iv_stats"], buckets["stress_stats"]
    return stats, timing, traj
