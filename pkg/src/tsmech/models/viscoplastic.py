"""Elasto-viscoplasticity with overstress flow.

``sigma = E (eps - evp)``, ``s = dev(sigma)``, ``q = ||s||`` (tensor norm,
shear entries weighted twice) and ``evp' = (q - sigma_y)_+ s / (q eta)``.

Tangents: ``IE[a, s, t] = d evp_a / dD_st`` and ``IY[a] = d evp_a / d sigma_y``.
With ``f = q - sigma_y`` and ``W`` the norm metric, any parameter derivative
``ds`` of the deviator gives::

    d evp' = (H(f) (W s / q . ds - dsy) s / q + f_+ (ds - s (W s / q . ds) / q) / q) / eta

where ``ds/dD_st = S[:, s] (eps - evp)_t - S E IE[:, s, t]`` and
``ds/dsy = -S E IY``. ``H(0) = 0``.
"""
import numpy as np
from numba import njit

from ..engine import ExtendedState, MaterialModel, state_statistics
from ..errors import NonFiniteState
from ..voigt import DEVIATOR, STRESS_METRIC, isotropic_stiffness

NORM_GUARD = 1e-12

EVP_NAMES = ("evp_x", "evp_y", "evp_z", "evp_yz", "evp_xz", "evp_xy")


@njit(cache=True, nogil=True)
def _deviator_state(evp, eps, SE, W, r, s):
    """Fill ``r = eps - evp`` and ``s = S E r``; return ``q``."""
    for a in range(6):
        r[a] = eps[a] - evp[a]
    q2 = 0.0
    for a in range(6):
        acc = 0.0
        for b in range(6):
            acc += SE[a, b] * r[b]
        s[a] = acc
        q2 += W[a] * acc * acc
    return np.sqrt(q2)


@njit(cache=True, nogil=True)
def vp_rate(evp, eps, E, SE, W, sy, eta, guard, out):
    r = np.empty(6)
    s = np.empty(6)
    q = _deviator_state(evp, eps, SE, W, r, s)
    f = q - sy
    if q <= guard or f <= 0.0:
        for a in range(6):
            out[a] = 0.0
        return f
    g = f / (q * eta)
    for a in range(6):
        out[a] = g * s[a]
    return f


@njit(cache=True, nogil=True)
def vp_tangent_rate(evp, IE, IY, eps, E, SE, W, S, sy, eta, guard, scale, oE, oY):
    r = np.empty(6)
    s = np.empty(6)
    q = _deviator_state(evp, eps, SE, W, r, s)
    f = q - sy
    if q <= guard or f <= 0.0:
        for a in range(6):
            oY[a] = 0.0
            for b in range(6):
                for c in range(6):
                    oE[a, b, c] = 0.0
        return f
    n = np.empty(6)
    for a in range(6):
        n[a] = W[a] * s[a] / q
    ds = np.empty(6)
    k = scale / eta
    # elasticity tangent
    for st in range(6):
        for t in range(6):
            dq = 0.0
            for a in range(6):
                acc = S[a, st] * r[t]
                for b in range(6):
                    acc -= SE[a, b] * IE[b, st, t]
                ds[a] = acc
                dq += n[a] * acc
            for a in range(6):
                oE[a, st, t] = k * (dq * s[a] / q + f * (ds[a] - s[a] * dq / q) / q)
    # yield-limit tangent
    dq = 0.0
    for a in range(6):
        acc = 0.0
        for b in range(6):
            acc -= SE[a, b] * IY[b]
        ds[a] = acc
        dq += n[a] * acc
    for a in range(6):
        oY[a] = k * ((dq - 1.0) * s[a] / q + f * (ds[a] - s[a] * dq / q) / q)
    return f


@njit(cache=True, nogil=True)
def _integrate_mean(evp0, strains, dt, E, SE, W, sy, eta, guard):
    N = strains.shape[0]
    evp = np.empty((N, 6))
    evp[0] = evp0
    rate = np.empty(6)
    for k in range(N - 1):
        vp_rate(evp[k], strains[k], E, SE, W, sy, eta, guard, rate)
        for a in range(6):
            evp[k + 1, a] = evp[k, a] + dt * rate[a]
            if not np.isfinite(evp[k + 1, a]):
                return evp, k + 1
    return evp, -1


@njit(cache=True, nogil=True)
def _integrate_tangent(evp, IE0, IY0, strains, dt, E, SE, W, S, sy, eta, guard, scale):
    N = strains.shape[0]
    IE = np.empty((N, 6, 6, 6))
    IY = np.empty((N, 6))
    IE[0] = IE0
    IY[0] = IY0
    oE = np.empty((6, 6, 6))
    oY = np.empty(6)
    for k in range(N - 1):
        vp_tangent_rate(evp[k], IE[k], IY[k], strains[k], E, SE, W, S, sy, eta, guard,
                        scale, oE, oY)
        ok = True
        for a in range(6):
            x = IY[k, a] + dt * oY[a]
            IY[k + 1, a] = x
            ok &= np.isfinite(x)
            for b in range(6):
                for c in range(6):
                    x = IE[k, a, b, c] + dt * oE[a, b, c]
                    IE[k + 1, a, b, c] = x
                    ok &= np.isfinite(x)
        if not ok:
            return IE, IY, k + 1
    return IE, IY, -1


@njit(cache=True, nogil=True)
def _simulate(strains, dt, E, SE, W, sy, eta, guard):
    # columns: evp (6), sigma (6)
    N = strains.shape[0]
    out = np.empty((N, 12))
    evp = np.zeros(6)
    rate = np.empty(6)
    for k in range(N):
        for a in range(6):
            out[k, a] = evp[a]
            acc = 0.0
            for b in range(6):
                acc += E[a, b] * (strains[k, b] - evp[b])
            out[k, 6 + a] = acc
        if k < N - 1:
            vp_rate(evp, strains[k], E, SE, W, sy, eta, guard, rate)
            for a in range(6):
                evp[a] += dt * rate[a]
                if not np.isfinite(evp[a]):
                    return out, k + 1
    return out, -1


@njit(cache=True, nogil=True)
def _overstress(evp, strains, SE, W, sy):
    N = strains.shape[0]
    out = np.empty(N)
    r = np.empty(6)
    s = np.empty(6)
    for k in range(N):
        out[k] = _deviator_state(evp[k], strains[k], SE, W, r, s) - sy
    return out


class ViscoplasticModel(MaterialModel):
    """Overstress viscoplasticity with fluctuating stiffness and yield limit.

    Parameters
    ----------
    E0 : (6, 6) array
        Mean stiffness, Pa.
    sigma_y : float
        Mean yield limit, Pa.
    eta : float
        Viscosity, Pa s.
    """

    name = "viscoplastic"
    source_kinds = ("elastic", "scalar")
    iv_names = EVP_NAMES

    def __init__(self, E0, sigma_y, eta, lame_names=("lambda", "mu"), yield_name="sigma_y",
                 guard_scale=None):
        self.E0 = np.ascontiguousarray(E0, dtype=float)
        self.sigma_y = float(sigma_y)
        self.eta = float(eta)
        if not (self.sigma_y > 0 and self.eta > 0):
            raise ValueError("sigma_y and eta must be positive")
        self.SE = np.ascontiguousarray(DEVIATOR @ self.E0)
        self.lame_names = tuple(lame_names)
        self.yield_name = yield_name
        # guard tied to the mean yield limit so realizations share it
        self.guard_scale = self.sigma_y if guard_scale is None else float(guard_scale)
        self.guard = NORM_GUARD * self.guard_scale
        self.tangent_scale = 1.0

    @classmethod
    def from_lame(cls, lam, mu, sigma_y, eta, **kw):
        return cls(isotropic_stiffness(lam, mu), sigma_y, eta, **kw)

    def _like(self, E=None, sigma_y=None):
        return type(self)(self.E0 if E is None else E,
                          self.sigma_y if sigma_y is None else sigma_y, self.eta,
                          self.lame_names, self.yield_name, self.guard_scale)

    def with_stiffness(self, E):
        return self._like(E=E)

    def with_yield(self, sigma_y):
        return self._like(sigma_y=sigma_y)

    def source_mean(self, source):
        return self.E0 if source == 0 else self.sigma_y

    def perturbed(self, source, delta):
        if source == 0:
            return self.with_stiffness(self.E0 + delta)
        return self.with_yield(self.sigma_y + float(delta))

    def with_realization(self, realization):
        lam, mu = self.lame_names
        return self._like(isotropic_stiffness(realization[lam], realization[mu]),
                          realization[self.yield_name])

    def initial_state(self):
        return ExtendedState(np.zeros(6), [np.zeros((6, 6, 6)), np.zeros(6)])

    def _args(self):
        return self.E0, self.SE, STRESS_METRIC

    def det_rhs(self, y, eps, t=0.0):
        out = np.empty(6)
        vp_rate(np.asarray(y, dtype=float), np.asarray(eps, dtype=float), *self._args(),
                self.sigma_y, self.eta, self.guard, out)
        return out

    def tangent_rhs(self, y, tangents, eps, t=0.0):
        oE, oY = np.empty((6, 6, 6)), np.empty(6)
        vp_tangent_rate(np.asarray(y, dtype=float), np.asarray(tangents[0], dtype=float),
                        np.asarray(tangents[1], dtype=float), np.asarray(eps, dtype=float),
                        *self._args(), DEVIATOR, self.sigma_y, self.eta, self.guard,
                        self.tangent_scale, oE, oY)
        return [oE, oY]

    def mean_stress(self, y, eps):
        return self.E0 @ (np.asarray(eps) - y)

    def stress_tangents(self, y, tangents, eps):
        r = np.asarray(eps) - y
        TE = np.eye(6)[:, :, None] * r[None, None, :] - np.einsum("ab,bst->ast", self.E0,
                                                                  tangents[0])
        TY = -self.E0 @ tangents[1]
        return [TE, TY]

    def overstress(self, y0, strains):
        """``||dev sigma|| - sigma_y`` at every step of a trajectory."""
        return _overstress(np.ascontiguousarray(y0), np.ascontiguousarray(strains), self.SE,
                           STRESS_METRIC, self.sigma_y)

    # nonsmooth-event indicator used by the finite-difference oracle
    def switching_indicator(self, y0, strains):
        return self.overstress(y0, strains) > 0.0

    def integrate_mean(self, y_init, strains, times, dt):
        evp, bad = _integrate_mean(np.asarray(y_init, dtype=float),
                                   np.ascontiguousarray(strains), dt, *self._args(),
                                   self.sigma_y, self.eta, self.guard)
        if bad >= 0:
            raise NonFiniteState(bad)
        return evp

    def integrate_tangents(self, y0, tangents_init, strains, times, dt):
        IE, IY, bad = _integrate_tangent(
            np.ascontiguousarray(y0), np.asarray(tangents_init[0], dtype=float),
            np.asarray(tangents_init[1], dtype=float), np.ascontiguousarray(strains), dt,
            *self._args(), DEVIATOR, self.sigma_y, self.eta, self.guard, self.tangent_scale)
        if bad >= 0:
            raise NonFiniteState(bad)
        return [IE, IY]

    def iv_linearization(self, y0, tangents, strains):
        m = y0.shape[0]
        return y0, np.concatenate([tangents[0].reshape(m, 6, 36), tangents[1][:, :, None]],
                                  axis=2)

    def stress_linearization(self, y0, tangents, strains):
        m = y0.shape[0]
        r = strains - y0
        mean = r @ self.E0.T
        TE = np.einsum("ab,mbst->mast", -self.E0, tangents[0])
        idx = np.arange(6)
        TE[:, idx, idx, :] += r[:, None, :]
        TY = -tangents[1] @ self.E0.T
        return mean, np.concatenate([TE.reshape(m, 6, 36), TY[:, :, None]], axis=2)

    def simulate(self, strains, times, dt):
        out, bad = _simulate(np.ascontiguousarray(strains), dt, *self._args(), self.sigma_y,
                             self.eta, self.guard)
        if bad >= 0:
            raise NonFiniteState(bad)
        return out


def vp_det_rhs(evp0, strain, model):
    """Viscoplastic strain rate, 1/s."""
    return model.det_rhs(evp0, strain)


def vp_tangent_rhs_E(evp0, IE, IY, strain, model):
    """Rate of ``IE = d evp / dD`` with shape (6, 6, 6)."""
    return model.tangent_rhs(evp0, [IE, IY], strain)[0]


def vp_tangent_rhs_Y(evp0, IE, IY, strain, model):
    """Rate of ``IY = d evp / d sigma_y`` with shape (6,)."""
    return model.tangent_rhs(evp0, [IE, IY], strain)[1]


def vp_stress_stats(evp0, IE, IY, strain, model, moments):
    """Stress mean and variance including the ``<sy D>`` coupling carried by ``moments``."""
    state = ExtendedState(np.asarray(evp0, dtype=float), [IE, IY])
    _, _, mean, var = state_statistics(model, state, strain, moments)
    return mean, var
