"""Independent oracles for the extended models.

``fd_tangent_check`` compares tangent trajectories with central finite
differences of the deterministic model under perturbed parameters.
``frozen_state_sampling_check`` samples parameter fluctuations, evaluates
the linearized quantities of one stored state and compares the empirical
moments with the closed-form contraction. ``linear_surrogate_stats``
evaluates the linearized model on the exact draws of a Monte Carlo run, which
splits a TSM-vs-MC gap into sampling noise and linearization remainder.
"""
from dataclasses import dataclass, field

import numpy as np

from .engine import ExtendedState, MaterialModel, StatSeries, integrate_extended, postprocess
from .stochastic import (CorrelationSpec, MomentSet, analytic_gaussian_moments,
                         realization_rng, sample_realization, sample_values)
from .voigt import random_symmetric_direction

FD_TOL = 1e-3
FD_FLOOR = 1e-10
EXCLUSION_WINDOW = 2


@dataclass
class FDReport:
    """Outcome of one finite-difference tangent check.

    ``rel_err[n]`` is ``max |FD - I:A|`` at step ``n`` divided by the largest
    ``|I:A|`` over the trajectory. ``excluded_steps`` lists steps dropped
    because the two perturbed runs switched regime at different steps.
    """

    source: int
    h: float
    rel_err: np.ndarray
    abs_err: np.ndarray
    scale: float
    excluded_steps: np.ndarray
    tol: float = FD_TOL
    floor: float = FD_FLOOR

    @property
    def kept(self):
        mask = np.ones(len(self.rel_err), dtype=bool)
        mask[self.excluded_steps] = False
        return mask

    @property
    def max_rel_err(self):
        k = self.kept
        return float(self.rel_err[k].max()) if k.any() else 0.0

    @property
    def passed(self):
        # the absolute floor applies to the parameter-induced change h * (I:A)
        k = self.kept
        if not k.any():
            return True
        bound = max(self.tol * self.scale, self.floor / self.h)
        return bool(np.all(self.abs_err[k] <= bound))

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} fd source={self.source} h={self.h:.3e} "
                f"max_rel_err={self.max_rel_err:.3e} excluded={len(self.excluded_steps)}")


def _contract(tangent, direction):
    """``I : A`` per step, flattening the internal-variable axes."""
    m = tangent.shape[0]
    A = np.asarray(direction, dtype=float)
    if A.ndim == 0:
        return tangent.reshape(m, -1)
    k = A.ndim
    return np.tensordot(tangent, A, axes=(tuple(range(tangent.ndim - k, tangent.ndim)),
                                          tuple(range(k)))).reshape(m, -1)


def default_step(model, source):
    """``1e-6`` times the norm of the mean value of ``source``."""
    return 1e-6 * float(np.linalg.norm(model.source_mean(source)))


def default_direction(model, source, rng):
    if model.source_kinds[source] == "scalar":
        return np.float64(1.0)
    return random_symmetric_direction(rng)


def _switch_mask(model, y_plus, y_minus, strains):
    ind = getattr(model, "switching_indicator", None)
    n = len(strains)
    if ind is None:
        return np.zeros(0, dtype=int)
    diff = np.flatnonzero(ind(y_plus, strains) != ind(y_minus, strains))
    mask = np.zeros(n, dtype=bool)
    for i in diff:
        mask[max(0, i - EXCLUSION_WINDOW):i + EXCLUSION_WINDOW + 1] = True
    return np.flatnonzero(mask)


def fd_tangent_check(model, load, grid, source=0, direction=None, h=None, seed=0,
                     trajectory=None):
    """Central-difference check of the tangent for fluctuation ``source``.

    Parameters
    ----------
    direction : array or float, optional
        Perturbation direction; a random symmetric unit matrix for stiffness
        sources and ``1`` for scalar sources by default.
    h : float, optional
        Step size, default ``1e-6`` times the norm of the source's mean.
    trajectory : Trajectory, optional
        Reuse an existing extended-model run.
    """
    rng = np.random.default_rng(seed)
    if direction is None:
        direction = default_direction(model, source, rng)
    if h is None:
        h = default_step(model, source)
    if not h > 0:
        raise ValueError("h must be positive")
    traj = integrate_extended(model, load, grid) if trajectory is None else trajectory
    y_init = model.initial_state().y0
    runs = []
    for sign in (1.0, -1.0):
        mod = model.perturbed(source, sign * h * np.asarray(direction, dtype=float))
        runs.append(mod.integrate_mean(y_init, traj.strains, traj.times, grid.dt))
    m = len(traj.times)
    fd = (runs[0] - runs[1]).reshape(m, -1) / (2.0 * h)
    ta = _contract(traj.tangents[source], direction)
    abs_err = np.abs(fd - ta).max(axis=1)
    scale = float(np.abs(ta).max())
    rel = abs_err / scale if scale > 0 else abs_err
    excluded = _switch_mask(model, runs[0], runs[1], traj.strains)
    return FDReport(source, float(h), rel, abs_err, scale, excluded)


def fd_h_sweep(model, load, grid, source=0, hs=None, direction=None, seed=0):
    """Max relative error for each step size in ``hs`` (relative to the source norm)."""
    if hs is None:
        hs = np.logspace(-10, -2, 17)
    rng = np.random.default_rng(seed)
    if direction is None:
        direction = default_direction(model, source, rng)
    traj = integrate_extended(model, load, grid)
    base = np.linalg.norm(model.source_mean(source))
    return np.array([fd_tangent_check(model, load, grid, source, direction, h * base,
                                      trajectory=traj).max_rel_err for h in hs])


class LinearToyModel(MaterialModel):
    """``y' = m c`` with one scalar fluctuating parameter ``m``; exact for any step."""

    name = "linear_toy"
    source_kinds = ("scalar",)
    iv_names = ("y",)
    stress_names = ()

    def __init__(self, m, c=1.0):
        self.m = float(m)
        self.c = float(c)

    def initial_state(self):
        return ExtendedState(np.zeros(()), [np.zeros(())])

    def det_rhs(self, y, eps, t=0.0):
        return self.m * self.c

    def tangent_rhs(self, y, tangents, eps, t=0.0):
        return [np.float64(self.c)]

    def mean_stress(self, y, eps):
        return np.zeros(0)

    def stress_tangents(self, y, tangents, eps):
        return [np.zeros((0,))]

    def source_mean(self, source):
        return self.m

    def perturbed(self, source, delta):
        return LinearToyModel(self.m + float(delta), self.c)

    def with_realization(self, realization):
        return LinearToyModel(realization["m"], self.c)


@dataclass
class SamplingReport:
    """Empirical versus closed-form moments of linearized quantities at one step."""

    step: int
    names: tuple
    mean_closed: np.ndarray
    var_closed: np.ndarray
    mean_sampled: np.ndarray
    var_sampled: np.ndarray
    n: int
    coupling_closed: dict = field(default_factory=dict)
    coupling_sampled: dict = field(default_factory=dict)
    z_limit: float = 5.0

    @property
    def var_se(self):
        """Standard error of a normal sample variance, ``var sqrt(2 / (n - 1))``."""
        return self.var_closed * np.sqrt(2.0 / (self.n - 1))

    @property
    def rel_var_err(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(self.var_sampled - self.var_closed) / self.var_closed
        return np.where(self.var_closed > 0, r, np.where(self.var_sampled > 0, np.inf, 0.0))

    @property
    def passed(self):
        zero = self.var_closed <= 0
        ok_zero = np.all(self.var_sampled[zero] <= 1e-300) if zero.any() else True
        nz = ~zero
        ok = np.abs(self.var_sampled[nz] - self.var_closed[nz]) <= self.z_limit * self.var_se[nz]
        sd = np.sqrt(np.clip(self.var_closed, 0, None))
        mean_ok = np.abs(self.mean_sampled - self.mean_closed) <= (
            self.z_limit * sd / np.sqrt(self.n) + 1e-12 * np.abs(self.mean_closed))
        return bool(ok_zero and np.all(ok) and np.all(mean_ok))

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        r = self.rel_var_err
        finite = r[np.isfinite(r)]
        worst = float(finite.max()) if finite.size else 0.0
        return f"{status} sampling step={self.step} n={self.n} max_rel_var_err={worst:.3e}"


def _linearized(model, traj, step):
    sl = slice(step, step + 1)
    y0 = traj.y0[sl]
    tangents = [t[sl] for t in traj.tangents]
    strains = traj.strains[sl]
    mi, Gi = model.iv_linearization(y0, tangents, strains)
    names = tuple(model.iv_names)
    means, Gs = [mi[0]], [Gi[0]]
    if len(model.stress_names):
        ms, Gsig = model.stress_linearization(y0, tangents, strains)
        means.append(ms[0])
        Gs.append(Gsig[0])
        names += tuple(model.stress_names)
    return names, np.concatenate(means), np.concatenate(Gs, axis=0)


def _source_slices(kinds):
    out, pos = [], 0
    for k in kinds:
        size = 36 if k == "elastic" else 1
        out.append(slice(pos, pos + size))
        pos += size
    return out


def frozen_state_sampling_check(model, trajectory, step, params, correlation=None, n=10**6,
                                seed=0, moments=None, chunk=1 << 16):
    """Sample ``phi`` and compare moments of ``g0 + G phi`` with the closed form.

    The closed form uses ``moments`` (analytic Gaussian moments by default).
    Per source pair ``(k, l)`` the cross contribution ``2 G_k <phi_k phi_l> G_l``
    is reported next to twice the sampled covariance of the two parts.
    """
    correlation = CorrelationSpec() if correlation is None else correlation
    moments = analytic_gaussian_moments(params, correlation) if moments is None else moments
    moments.check_layout(model.source_kinds)
    names, g0, G = _linearized(model, trajectory, step)
    cov = moments.cov
    var_closed = np.einsum("qa,ab,qb->q", G, cov, G)
    slices = _source_slices(model.source_kinds)
    pairs = [(k, l) for k in range(len(slices)) for l in range(k + 1, len(slices))]
    coupling_closed = {
        (k, l): 2.0 * np.einsum("qa,ab,qb->q", G[:, slices[k]], cov[slices[k], slices[l]],
                                G[:, slices[l]])
        for k, l in pairs}

    rng_root = np.random.SeedSequence(seed)
    s1 = np.zeros(len(names))
    s2 = np.zeros(len(names))
    cross = {p: np.zeros(len(names)) for p in pairs}
    part_sums = [np.zeros(len(names)) for _ in slices]
    done = 0
    for ss in rng_root.spawn(-(-n // chunk)):
        m = min(chunk, n - done)
        values, _ = sample_values(params, correlation, m, np.random.default_rng(ss))
        phi = params.fluctuations(values)
        parts = [phi[:, sl] @ G[:, sl].T for sl in slices]
        lin = sum(parts)
        s1 += lin.sum(axis=0)
        s2 += (lin * lin).sum(axis=0)
        for i, p in enumerate(parts):
            part_sums[i] += p.sum(axis=0)
        for k, l in pairs:
            cross[(k, l)] += (parts[k] * parts[l]).sum(axis=0)
        done += m
    mean_lin = s1 / n
    var_sampled = (s2 - n * mean_lin ** 2) / (n - 1)
    coupling_sampled = {
        (k, l): 2.0 * (cross[(k, l)] - part_sums[k] * part_sums[l] / n) / (n - 1)
        for k, l in pairs}
    return SamplingReport(step, names, g0, var_closed, g0 + mean_lin, var_sampled, n,
                          coupling_closed, coupling_sampled)


def mc_draws(params, correlation, n, base_seed):
    """Fluctuation vectors of realizations ``0 .. n-1``, drawn as the Monte Carlo sampler does."""
    correlation = CorrelationSpec() if correlation is None else correlation
    values = np.empty((n, len(params.names)))
    for k in range(n):
        real = sample_realization(params, correlation, realization_rng(base_seed, k))
        values[k] = [real[p] for p in params.names]
    return params.fluctuations(values)


def linear_surrogate_stats(model, trajectory, params, correlation=None, n=1000, base_seed=0,
                           chunk=4096):
    """Sample mean and variance of ``g0 + G phi`` over the draws of ``run_mc(n, base_seed)``.

    The variance is the TSM contraction with the draws' empirical covariance
    (``n - 1`` normalization), the mean is ``g0 + G phi_bar``. Against the
    TSM result the difference is pure sampling noise; against the Monte
    Carlo result it is pure linearization remainder.
    """
    phi = mc_draws(params, correlation, n, base_seed)
    bar = phi.mean(axis=0)
    c = phi - bar
    moments = MomentSet(c.T @ c / (n - 1), params.source_kinds, n_samples=n)
    stats = postprocess(trajectory, moments, model)
    shifts = []
    for linearize in (model.iv_linearization, model.stress_linearization):
        parts = []
        for lo in range(0, len(trajectory), chunk):
            hi = min(len(trajectory), lo + chunk)
            _, G = linearize(trajectory.y0[lo:hi], [t[lo:hi] for t in trajectory.tangents],
                             trajectory.strains[lo:hi])
            parts.append(G @ bar)
        shifts.append(np.concatenate(parts))
    mean = stats.mean + np.concatenate(shifts, axis=1)
    return StatSeries(stats.times, stats.names, mean, stats.var, iv_names=stats.iv_names,
                      stress_names=stats.stress_names)
