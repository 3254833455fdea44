"""Viscous damage: ``d' = exp(-d) * Psi0(eps) / eta`` with ``sigma = exp(-d) E eps``.

The extended model tracks ``I = dd/dD`` (a 6x6 matrix, Pa^-1) whose rate is
``exp(-d) / (2 eta) * (eps (x) eps - I * (eps . E0 . eps))``.
"""
import math

import numpy as np
from numba import njit

from ..engine import ExtendedState, MaterialModel, state_statistics
from ..errors import NonFiniteState
from ..voigt import isotropic_stiffness


@njit(cache=True, nogil=True)
def _energy2(eps, E):
    # eps . E . eps
    q = 0.0
    for a in range(6):
        s = 0.0
        for b in range(6):
            s += E[a, b] * eps[b]
        q += eps[a] * s
    return q


@njit(cache=True, nogil=True)
def damage_rate(d, eps, E, eta):
    return math.exp(-d) * 0.5 * _energy2(eps, E) / eta


@njit(cache=True, nogil=True)
def damage_tangent_rate(d, I, eps, E, eta, scale, out):
    q = _energy2(eps, E)
    f = scale * math.exp(-d) / (2.0 * eta)
    for a in range(6):
        for b in range(6):
            out[a, b] = f * (eps[a] * eps[b] - I[a, b] * q)


@njit(cache=True, nogil=True)
def _integrate_mean(d_init, strains, dt, E, eta):
    n = strains.shape[0]
    d = np.empty(n)
    d[0] = d_init
    for k in range(n - 1):
        d[k + 1] = d[k] + dt * damage_rate(d[k], strains[k], E, eta)
        if not np.isfinite(d[k + 1]):
            return d, k + 1
    return d, -1


@njit(cache=True, nogil=True)
def _integrate_tangent(d, I_init, strains, dt, E, eta, scale):
    n = strains.shape[0]
    I = np.empty((n, 6, 6))
    I[0] = I_init
    rate = np.empty((6, 6))
    for k in range(n - 1):
        damage_tangent_rate(d[k], I[k], strains[k], E, eta, scale, rate)
        ok = True
        for a in range(6):
            for b in range(6):
                v = I[k, a, b] + dt * rate[a, b]
                I[k + 1, a, b] = v
                ok &= np.isfinite(v)
        if not ok:
            return I, k + 1
    return I, -1


@njit(cache=True, nogil=True)
def _simulate(strains, dt, E, eta):
    # columns: d, sigma (6)
    n = strains.shape[0]
    out = np.empty((n, 7))
    d = 0.0
    for k in range(n):
        f = math.exp(-d)
        out[k, 0] = d
        for a in range(6):
            s = 0.0
            for b in range(6):
                s += E[a, b] * strains[k, b]
            out[k, 1 + a] = f * s
        if k < n - 1:
            d = d + dt * damage_rate(d, strains[k], E, eta)
            if not np.isfinite(d):
                out[k + 1:, :] = np.nan
                return out, k + 1
    return out, -1


class DamageModel(MaterialModel):
    """Viscous damage with a fluctuating stiffness.

    Parameters
    ----------
    E0 : (6, 6) array
        Mean stiffness in Pa.
    eta : float
        Damage viscosity in Pa s.
    lame_names : (str, str)
        Realization keys for the Lame pair (Monte Carlo).
    """

    name = "damage"
    source_kinds = ("elastic",)
    iv_names = ("d",)

    def __init__(self, E0, eta, lame_names=("lambda", "mu")):
        self.E0 = np.ascontiguousarray(E0, dtype=float)
        self.eta = float(eta)
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        self.lame_names = tuple(lame_names)
        self.tangent_scale = 1.0

    @classmethod
    def from_lame(cls, lam, mu, eta, **kw):
        return cls(isotropic_stiffness(lam, mu), eta, **kw)

    def with_realization(self, realization):
        lam, mu = self.lame_names
        return type(self)(isotropic_stiffness(realization[lam], realization[mu]),
                          self.eta, self.lame_names)

    def with_stiffness(self, E):
        return type(self)(E, self.eta, self.lame_names)

    def source_mean(self, source):
        return self.E0

    def perturbed(self, source, delta):
        return self.with_stiffness(self.E0 + delta)

    def initial_state(self):
        return ExtendedState(np.zeros(()), [np.zeros((6, 6))])

    def det_rhs(self, y, eps, t=0.0):
        return damage_rate(float(y), np.asarray(eps, dtype=float), self.E0, self.eta)

    def tangent_rhs(self, y, tangents, eps, t=0.0):
        out = np.empty((6, 6))
        damage_tangent_rate(float(y), np.asarray(tangents[0], dtype=float),
                            np.asarray(eps, dtype=float), self.E0, self.eta,
                            self.tangent_scale, out)
        return [out]

    def mean_stress(self, y, eps):
        return math.exp(-float(y)) * self.E0 @ eps

    def stress_tangents(self, y, tangents, eps):
        """``T[a, b, c] = exp(-d) (delta_ab eps_c - I_bc (E0 eps)_a)``."""
        eps = np.asarray(eps, dtype=float)
        f = math.exp(-float(y))
        T = f * (np.eye(6)[:, :, None] * eps[None, None, :]
                 - (self.E0 @ eps)[:, None, None] * tangents[0][None, :, :])
        return [T]

    def integrate_mean(self, y_init, strains, times, dt):
        d, bad = _integrate_mean(float(y_init), np.ascontiguousarray(strains), dt,
                                 self.E0, self.eta)
        if bad >= 0:
            raise NonFiniteState(bad)
        return d

    def integrate_tangents(self, y0, tangents_init, strains, times, dt):
        I, bad = _integrate_tangent(np.ascontiguousarray(y0),
                                    np.ascontiguousarray(tangents_init[0], dtype=float),
                                    np.ascontiguousarray(strains), dt, self.E0, self.eta,
                                    self.tangent_scale)
        if bad >= 0:
            raise NonFiniteState(bad)
        return [I]

    def stress_linearization(self, y0, tangents, strains):
        f = np.exp(-y0)
        Eeps = strains @ self.E0.T
        mean = f[:, None] * Eeps
        I = tangents[0]
        T = (np.eye(6)[None, :, :, None] * strains[:, None, None, :]
             - Eeps[:, :, None, None] * I[:, None, :, :])
        T *= f[:, None, None, None]
        return mean, T.reshape(len(y0), 6, 36)

    def simulate(self, strains, times, dt):
        out, bad = _simulate(np.ascontiguousarray(strains), dt, self.E0, self.eta)
        if bad >= 0:
            raise NonFiniteState(bad)
        return out


def damage_det_rhs(d0, strain, model):
    """``exp(-d0) Psi0(eps) / eta`` in 1/s."""
    return model.det_rhs(d0, strain)


def damage_tangent_rhs(d0, I, strain, model):
    """Rate of ``I = dd/dD`` in 1/(Pa s)."""
    return model.tangent_rhs(d0, [I], strain)[0]


def damage_stress_stats(d0, I, strain, model, moments):
    """Stress mean ``exp(-d0) E0 eps`` and componentwise variance ``T_a : <DxD> : T_a``."""
    _, _, mean, var = state_statistics(model, ExtendedState(np.asarray(d0, dtype=float), [I]),
                                       strain, moments)
    return mean, var
