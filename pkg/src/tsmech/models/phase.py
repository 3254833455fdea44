"""Viscous phase transformation between ``n`` phases.

Each phase ``i`` has a stiffness ``E_i``, a transformation strain ``eta_i``
and a volume fraction ``lambda_i = logistic(chi_i)``. The mixture uses the
compliance average ``Ebar = (sum lambda_i E_i^-1)^-1`` and the strain
average ``etabar = sum lambda_i eta_i``; a wall term
``Lambda * sum 1 / (lambda_i^2 (1 - lambda_i)^2)`` keeps fractions inside
(0, 1). The rate of ``chi_i`` is the negative driving force relative to the
phase average, scaled by ``1 / (lambda_i' eta)``.

Tangents ``I_ij = dchi_i / dD_j`` are carried per stiffness source ``j``.
With ``G_kj = lambda_k' I_kj``, ``v_k = eta_k + C_k sigma`` and
``c_j = C_j sigma`` the driving-force derivative is::

    dF_i/dD_j[s,t] = sum_k (v_i . Ebar v_k) G_kj[s,t]
                     - lambda_j (C_j Ebar v_i)_s c_j,t
                     + delta_ij c_j,s c_j,t / 2 + w'(lambda_i) G_ij[s,t]
"""
import math

import numpy as np
from numba import njit

from ..engine import ExtendedState, MaterialModel, state_statistics
from ..errors import DegeneratePhase, NonFiniteState
from ..voigt import isotropic_stiffness
from ._linalg import dot, inv_small, matvec

DEGENERATE_TOL = 1e-12

_OK, _NONFINITE, _DEGENERATE = 0, 1, 2


def lambda_of_chi(chi):
    """Volume fraction ``(1 + exp(-chi))^-1``."""
    return 1.0 / (1.0 + np.exp(-np.asarray(chi, dtype=float)))


@njit(cache=True, nogil=True)
def _logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True, nogil=True)
def wall_force(lam, Lam):
    """``d/dlambda`` of ``Lam / (lambda^2 (1 - lambda)^2)``."""
    q = lam * (1.0 - lam)
    return 2.0 * Lam * (2.0 * lam - 1.0) / (q * q * q)


@njit(cache=True, nogil=True)
def _wall_slope(lam, Lam):
    q = lam * (1.0 - lam)
    r = 2.0 * lam - 1.0
    return 2.0 * Lam * (2.0 / (q * q * q) + 3.0 * r * r / (q * q * q * q))


@njit(cache=True, nogil=True)
def _mixture(chi, eps, C, etas, Lam, lam, lp, Eb, sig, c, v, F):
    """Fill mixture quantities at one state. Returns a status code."""
    n = chi.shape[0]
    M = np.zeros((6, 6))
    e = eps.copy()
    for k in range(n):
        lam[k] = _logistic(chi[k])
        lp[k] = lam[k] * (1.0 - lam[k])
        if lam[k] < DEGENERATE_TOL or lam[k] > 1.0 - DEGENERATE_TOL:
            return _DEGENERATE
        for a in range(6):
            e[a] -= lam[k] * etas[k, a]
            for b in range(6):
                M[a, b] += lam[k] * C[k, a, b]
    if not inv_small(M, Eb):
        return _NONFINITE
    matvec(Eb, e, sig)
    for k in range(n):
        matvec(C[k], sig, c[k])
        for a in range(6):
            v[k, a] = etas[k, a] + c[k, a]
        F[k] = -dot(etas[k], sig) - 0.5 * dot(sig, c[k]) + wall_force(lam[k], Lam)
    return _OK


@njit(cache=True, nogil=True)
def _chi_rate(chi, eps, C, etas, visc, Lam, out):
    n = chi.shape[0]
    lam = np.empty(n)
    lp = np.empty(n)
    Eb = np.empty((6, 6))
    sig = np.empty(6)
    c = np.empty((n, 6))
    v = np.empty((n, 6))
    F = np.empty(n)
    st = _mixture(chi, eps, C, etas, Lam, lam, lp, Eb, sig, c, v, F)
    if st != _OK:
        return st
    Fm = 0.0
    for k in range(n):
        Fm += F[k]
    Fm /= n
    for i in range(n):
        out[i] = (-F[i] + Fm) / (lp[i] * visc)
    return _OK


@njit(cache=True, nogil=True)
def _tangent_rate(chi, I, eps, C, etas, visc, Lam, scale, out):
    """Rates of all tangents; ``I`` and ``out`` are ``(n_src, n, 6, 6)``."""
    n = chi.shape[0]
    lam = np.empty(n)
    lp = np.empty(n)
    Eb = np.empty((6, 6))
    sig = np.empty(6)
    c = np.empty((n, 6))
    v = np.empty((n, 6))
    F = np.empty(n)
    st = _mixture(chi, eps, C, etas, Lam, lam, lp, Eb, sig, c, v, F)
    if st != _OK:
        return st
    Fm = 0.0
    for k in range(n):
        Fm += F[k]
    Fm /= n
    Ev = np.empty((n, 6))
    for k in range(n):
        matvec(Eb, v[k], Ev[k])
    K = np.empty((n, n))
    for i in range(n):
        for k in range(n):
            K[i, k] = dot(v[i], Ev[k])
    wp = np.empty(n)
    for i in range(n):
        wp[i] = _wall_slope(lam[i], Lam)
    G = np.empty((n, 6, 6))
    u = np.empty((n, 6))
    dF = np.empty((n, 6, 6))
    for j in range(I.shape[0]):
        for k in range(n):
            for s in range(6):
                for t in range(6):
                    G[k, s, t] = lp[k] * I[j, k, s, t]
        for i in range(n):
            matvec(C[j], Ev[i], u[i])
        for i in range(n):
            for s in range(6):
                for t in range(6):
                    acc = 0.0
                    for k in range(n):
                        acc += K[i, k] * G[k, s, t]
                    acc -= lam[j] * u[i, s] * c[j, t]
                    if i == j:
                        acc += 0.5 * c[j, s] * c[j, t]
                    acc += wp[i] * G[i, s, t]
                    dF[i, s, t] = acc
        for s in range(6):
            for t in range(6):
                dm = 0.0
                for k in range(n):
                    dm += dF[k, s, t]
                dm /= n
                for i in range(n):
                    R = -F[i] + Fm
                    dinv = -(1.0 - 2.0 * lam[i]) / (lp[i] * lp[i]) * G[i, s, t]
                    out[j, i, s, t] = scale * (dinv * R / visc
                                               + (-dF[i, s, t] + dm) / (lp[i] * visc))
    return _OK


@njit(cache=True, nogil=True)
def _integrate_mean(chi_init, strains, dt, C, etas, visc, Lam):
    N = strains.shape[0]
    n = chi_init.shape[0]
    chi = np.empty((N, n))
    chi[0] = chi_init
    rate = np.empty(n)
    for k in range(N - 1):
        st = _chi_rate(chi[k], strains[k], C, etas, visc, Lam, rate)
        if st != _OK:
            return chi, k, st
        for i in range(n):
            chi[k + 1, i] = chi[k, i] + dt * rate[i]
            if not np.isfinite(chi[k + 1, i]):
                return chi, k + 1, _NONFINITE
    return chi, -1, _OK


@njit(cache=True, nogil=True)
def _integrate_tangent(chi, I_init, strains, dt, C, etas, visc, Lam, scale):
    N = strains.shape[0]
    ns, n = I_init.shape[0], I_init.shape[1]
    I = np.empty((N, ns, n, 6, 6))
    I[0] = I_init
    rate = np.empty((ns, n, 6, 6))
    for k in range(N - 1):
        st = _tangent_rate(chi[k], I[k], strains[k], C, etas, visc, Lam, scale, rate)
        if st != _OK:
            return I, k, st
        ok = True
        for j in range(ns):
            for i in range(n):
                for s in range(6):
                    for t in range(6):
                        x = I[k, j, i, s, t] + dt * rate[j, i, s, t]
                        I[k + 1, j, i, s, t] = x
                        ok &= np.isfinite(x)
        if not ok:
            return I, k + 1, _NONFINITE
    return I, -1, _OK


@njit(cache=True, nogil=True)
def _linearize(chi, I, strains, C, etas, Lam, mean_iv, G_iv, mean_sig, G_sig):
    """Means and flat tangents of (chi, lambda) and stress at every step."""
    m, n = chi.shape
    ns = I.shape[1]
    lam = np.empty(n)
    lp = np.empty(n)
    Eb = np.empty((6, 6))
    sig = np.empty(6)
    c = np.empty((n, 6))
    v = np.empty((n, 6))
    F = np.empty(n)
    Ev = np.empty((n, 6))
    B = np.empty((6, 6))
    for q in range(m):
        st = _mixture(chi[q], strains[q], C, etas, Lam, lam, lp, Eb, sig, c, v, F)
        if st != _OK:
            return q, st
        for k in range(n):
            matvec(Eb, v[k], Ev[k])
        for i in range(n):
            mean_iv[q, i] = chi[q, i]
            mean_iv[q, n + i] = lam[i]
        for a in range(6):
            mean_sig[q, a] = sig[a]
        for j in range(ns):
            off = 36 * j
            for a in range(6):
                for b in range(6):
                    acc = 0.0
                    for r in range(6):
                        acc += Eb[a, r] * C[j, r, b]
                    B[a, b] = acc
            for s in range(6):
                for t in range(6):
                    p = off + 6 * s + t
                    for i in range(n):
                        G_iv[q, i, p] = I[q, j, i, s, t]
                        G_iv[q, n + i, p] = lp[i] * I[q, j, i, s, t]
                    for a in range(6):
                        acc = lam[j] * B[a, s] * c[j, t]
                        for k in range(n):
                            acc -= lp[k] * I[q, j, k, s, t] * Ev[k, a]
                        G_sig[q, a, p] = acc
    return -1, _OK


@njit(cache=True, nogil=True)
def _simulate(chi_init, strains, dt, C, etas, visc, Lam):
    # columns: chi_1..n, lambda_1..n, sigma (6)
    N = strains.shape[0]
    n = chi_init.shape[0]
    out = np.empty((N, 2 * n + 6))
    chi = chi_init.copy()
    lam = np.empty(n)
    lp = np.empty(n)
    Eb = np.empty((6, 6))
    sig = np.empty(6)
    c = np.empty((n, 6))
    v = np.empty((n, 6))
    F = np.empty(n)
    for k in range(N):
        st = _mixture(chi, strains[k], C, etas, Lam, lam, lp, Eb, sig, c, v, F)
        if st != _OK:
            return out, k, st
        for i in range(n):
            out[k, i] = chi[i]
            out[k, n + i] = lam[i]
        for a in range(6):
            out[k, 2 * n + a] = sig[a]
        if k < N - 1:
            Fm = 0.0
            for i in range(n):
                Fm += F[i]
            Fm /= n
            for i in range(n):
                chi[i] = chi[i] + dt * ((-F[i] + Fm) / (lp[i] * visc))
                if not np.isfinite(chi[i]):
                    return out, k + 1, _NONFINITE
    return out, -1, _OK


def _raise(step, status):
    if status == _DEGENERATE:
        raise DegeneratePhase(step)
    raise NonFiniteState(step)


def default_initial_chi(n=2, lambda_1=0.99):
    """``chi`` with phase 1 at ``lambda_1`` and the rest sharing the remainder.

    For two phases this gives ``chi_2 = -chi_1``.
    """
    fr = np.full(n, (1.0 - lambda_1) / (n - 1))
    fr[0] = lambda_1
    return np.log(fr / (1.0 - fr))


class PhaseModel(MaterialModel):
    """Multi-phase viscous transformation model.

    Parameters
    ----------
    stiffnesses : sequence of (6, 6) arrays
        Mean phase stiffnesses ``E_i`` in Pa; each one is a fluctuation source.
    transformation_strains : (n, 6) array
        ``eta_i`` per phase.
    viscosity : float
        Transformation viscosity in Pa s.
    wall : float
        Potential-wall magnitude ``Lambda`` in J/m^3.
    chi_init : (n,) array, optional
        Initial volume-fraction variables; defaults to 99 % phase 1.
    lame_names : sequence of (str, str)
        Realization keys for each phase's Lame pair.
    """

    name = "phase"

    def __init__(self, stiffnesses, transformation_strains, viscosity, wall,
                 chi_init=None, lame_names=None):
        self.E = np.ascontiguousarray(np.array(stiffnesses, dtype=float))
        n = self.E.shape[0]
        if n < 2 or self.E.shape[1:] != (6, 6):
            raise ValueError("need at least two (6, 6) phase stiffnesses")
        self.etas = np.ascontiguousarray(np.array(transformation_strains, dtype=float))
        if self.etas.shape != (n, 6):
            raise ValueError(f"transformation strains must be ({n}, 6)")
        self.C = np.ascontiguousarray(np.linalg.inv(self.E))
        self.viscosity = float(viscosity)
        if not self.viscosity > 0:
            raise ValueError("viscosity must be positive")
        self.wall = float(wall)
        if self.wall < 0:
            raise ValueError("wall magnitude must be non-negative")
        self.chi_init = (default_initial_chi(n) if chi_init is None
                         else np.array(chi_init, dtype=float))
        self.lame_names = (tuple((f"lambda_{i + 1}", f"mu_{i + 1}") for i in range(n))
                           if lame_names is None else tuple(map(tuple, lame_names)))
        self.tangent_scale = 1.0
        self.source_kinds = ("elastic",) * n
        self.iv_names = (tuple(f"chi_{i + 1}" for i in range(n))
                         + tuple(f"lambda_{i + 1}" for i in range(n)))

    @property
    def n_phases(self):
        return self.E.shape[0]

    def _like(self, E):
        return type(self)(E, self.etas, self.viscosity, self.wall, self.chi_init,
                          self.lame_names)

    def with_stiffness(self, E, source=0):
        Es = self.E.copy()
        Es[source] = E
        return self._like(Es)

    def source_mean(self, source):
        return self.E[source]

    def perturbed(self, source, delta):
        return self.with_stiffness(self.E[source] + delta, source)

    def with_realization(self, realization):
        return self._like([isotropic_stiffness(realization[l], realization[m])
                           for l, m in self.lame_names])

    def initial_state(self):
        n = self.n_phases
        return ExtendedState(self.chi_init.copy(), [np.zeros((n, 6, 6)) for _ in range(n)])

    # -- per-step API ----------------------------------------------------

    def driving_forces(self, chi, eps):
        """``dPsi/dlambda_i`` including the wall term, J/m^3."""
        n = self.n_phases
        lam, lp, Eb = np.empty(n), np.empty(n), np.empty((6, 6))
        sig, c, v, F = np.empty(6), np.empty((n, 6)), np.empty((n, 6)), np.empty(n)
        st = _mixture(np.asarray(chi, dtype=float), np.asarray(eps, dtype=float), self.C,
                      self.etas, self.wall, lam, lp, Eb, sig, c, v, F)
        if st != _OK:
            _raise(None, st)
        return F

    def mixture_stiffness(self, chi):
        lam = lambda_of_chi(chi)
        return np.linalg.inv(np.einsum("k,kab->ab", lam, self.C))

    def det_rhs(self, y, eps, t=0.0):
        out = np.empty(self.n_phases)
        st = _chi_rate(np.asarray(y, dtype=float), np.asarray(eps, dtype=float), self.C,
                       self.etas, self.viscosity, self.wall, out)
        if st != _OK:
            _raise(None, st)
        return out

    def tangent_rhs(self, y, tangents, eps, t=0.0):
        I = np.ascontiguousarray(np.array(tangents, dtype=float))
        out = np.empty_like(I)
        st = _tangent_rate(np.asarray(y, dtype=float), I, np.asarray(eps, dtype=float),
                           self.C, self.etas, self.viscosity, self.wall, self.tangent_scale, out)
        if st != _OK:
            _raise(None, st)
        return list(out)

    def mean_stress(self, y, eps):
        lam = lambda_of_chi(y)
        return self.mixture_stiffness(y) @ (np.asarray(eps) - lam @ self.etas)

    def stress_tangents(self, y, tangents, eps):
        mean, G = self._linearize(np.asarray(y)[None], [np.asarray(t)[None] for t in tangents],
                                  np.asarray(eps, dtype=float)[None])[2:]
        return [G[0, :, 36 * j:36 * (j + 1)].reshape(6, 6, 6) for j in range(self.n_phases)]

    # -- vectorized hooks ------------------------------------------------

    def integrate_mean(self, y_init, strains, times, dt):
        chi, bad, st = _integrate_mean(np.asarray(y_init, dtype=float),
                                       np.ascontiguousarray(strains), dt, self.C, self.etas,
                                       self.viscosity, self.wall)
        if bad >= 0:
            _raise(bad, st)
        return chi

    def integrate_tangents(self, y0, tangents_init, strains, times, dt):
        I0 = np.ascontiguousarray(np.array(tangents_init, dtype=float))
        I, bad, st = _integrate_tangent(np.ascontiguousarray(y0), I0,
                                        np.ascontiguousarray(strains), dt, self.C, self.etas,
                                        self.viscosity, self.wall, self.tangent_scale)
        if bad >= 0:
            _raise(bad, st)
        return [I[:, j] for j in range(I.shape[1])]

    def _linearize(self, y0, tangents, strains):
        m, n = y0.shape
        P = 36 * len(tangents)
        I = np.ascontiguousarray(np.stack(tangents, axis=1))
        mean_iv, G_iv = np.empty((m, 2 * n)), np.empty((m, 2 * n, P))
        mean_sig, G_sig = np.empty((m, 6)), np.empty((m, 6, P))
        bad, st = _linearize(np.ascontiguousarray(y0), I, np.ascontiguousarray(strains),
                             self.C, self.etas, self.wall, mean_iv, G_iv, mean_sig, G_sig)
        if bad >= 0:
            _raise(bad, st)
        return mean_iv, G_iv, mean_sig, G_sig

    def iv_linearization(self, y0, tangents, strains):
        return self._linearize(y0, tangents, strains)[:2]

    def stress_linearization(self, y0, tangents, strains):
        return self._linearize(y0, tangents, strains)[2:]

    def simulate(self, strains, times, dt):
        out, bad, st = _simulate(self.chi_init, np.ascontiguousarray(strains), dt, self.C,
                                 self.etas, self.viscosity, self.wall)
        if bad >= 0:
            _raise(bad, st)
        return out


def calibrate_wall(stiffnesses, transformation_strains, chi=None, eps=None):
    """Wall magnitude that makes ``chi`` (default 99 % phase 1) an equilibrium at ``eps``.

    The rates are linear in ``Lambda``, so this is a one-parameter least
    squares fit of the bracket ``-F_i + mean(F)`` to zero.
    """
    E = np.array(stiffnesses, dtype=float)
    n = E.shape[0]
    chi = default_initial_chi(n) if chi is None else np.asarray(chi, dtype=float)
    eps = np.zeros(6) if eps is None else np.asarray(eps, dtype=float)
    base = PhaseModel(E, transformation_strains, 1.0, 0.0, chi)
    F_el = base.driving_forces(chi, eps)
    lam = lambda_of_chi(chi)
    w = np.array([wall_force(l, 1.0) for l in lam])
    r_el = F_el - F_el.mean()
    r_w = w - w.mean()
    return float(-(r_el @ r_w) / (r_w @ r_w))


def wall_fraction(model, strains, lambdas=None):
    """Worst ratio of wall to elastic driving-force bracket for ``lambda_1`` in [0.05, 0.95].

    At each fraction the elastic scale is the largest bracket magnitude
    ``|F_i - mean(F)|`` met along ``strains``.
    """
    if lambdas is None:
        lambdas = np.linspace(0.05, 0.95, 19)
    bare = model._like(model.E)
    bare.wall = 0.0
    n = model.n_phases
    worst = 0.0
    for l1 in lambdas:
        fr = np.full(n, (1.0 - l1) / (n - 1))
        fr[0] = l1
        chi = np.log(fr / (1.0 - fr))
        w = np.array([wall_force(x, model.wall) for x in fr])
        rw = np.abs(w - w.mean()).max()
        re = 0.0
        for eps in strains:
            F = bare.driving_forces(chi, eps)
            re = max(re, np.abs(F - F.mean()).max())
        worst = max(worst, rw / re if re > 0 else np.inf)
    return worst


def paper_phase_params():
    """Mean stiffnesses and transformation strains of the austenite/martensite pair."""
    E = [isotropic_stiffness(70e9, 30e9), isotropic_stiffness(35e9, 15e9)]
    etas = [np.zeros(6), 0.055 * np.array([1.0, -0.45, -0.45, 0.0, 0.0, 0.0])]
    return E, np.array(etas)


def driving_forces(chi0, strain, model):
    """``dPsi/dlambda_i`` per phase, J/m^3."""
    return model.driving_forces(chi0, strain)


def chi_det_rhs(chi0, strain, model):
    """``chi_i'`` per phase, 1/s."""
    return model.det_rhs(chi0, strain)


def chi_tangent_rhs(chi0, I, strain, model):
    """Rates of ``I[j][i] = dchi_i/dD_j``; ``I`` is a sequence over sources."""
    return model.tangent_rhs(chi0, I, strain)


def phase_stats(chi0, I, strain, model, moments):
    """Mean and variance of ``chi``, ``lambda`` and stress at one state.

    Returns a dict with ``chi``, ``lambda`` and ``stress`` entries, each a
    ``(mean, var)`` pair.
    """
    n = model.n_phases
    im, iv, sm, sv = state_statistics(model, ExtendedState(np.asarray(chi0, dtype=float), list(I)),
                                      strain, moments)
    return {"chi": (im[:n], iv[:n]), "lambda": (im[n:], iv[n:]), "stress": (sm, sv)}
