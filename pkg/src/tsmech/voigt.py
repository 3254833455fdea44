"""Voigt-notation tensor algebra.

Stress vectors are ordered (xx, yy, zz, yz, xz, xy). Strain vectors use the
same ordering with engineering shear (gamma = 2 * eps_shear), so that
``0.5 * eps @ E @ eps`` is the stored energy for the standard isotropic 6x6
stiffness.
"""
import numpy as np

#: Lambda part of the isotropic fluctuation basis.
J_LAMBDA = np.zeros((6, 6))
J_LAMBDA[:3, :3] = 1.0

#: Mu part of the isotropic fluctuation basis.
J_MU = np.diag([2.0, 2.0, 2.0, 1.0, 1.0, 1.0])

#: Deviator operator, ``dev(sigma) = DEVIATOR @ sigma``.
DEVIATOR = np.eye(6)
DEVIATOR[:3, :3] -= 1.0 / 3.0

#: Metric turning the Voigt stress dot product into the tensor contraction.
STRESS_METRIC = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

IDENTITY = np.eye(6)


def isotropic_stiffness(lam, mu):
    """Isotropic stiffness ``lam * J_LAMBDA + mu * J_MU`` in Pa."""
    return lam * J_LAMBDA + mu * J_MU


def fluctuation_basis():
    """Return the pair ``(J_LAMBDA, J_MU)`` spanning isotropic stiffness changes."""
    return J_LAMBDA.copy(), J_MU.copy()


def deviator(sigma):
    """Deviatoric part of a stress vector (works on stacked ``(..., 6)`` input)."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma @ DEVIATOR.T


def stress_norm(s):
    """Frobenius norm of the tensor represented by Voigt stress ``s``.

    Shear entries count twice, so the result does not depend on the basis.
    """
    s = np.asarray(s, dtype=float)
    return np.sqrt(np.sum(STRESS_METRIC * s * s, axis=-1))


def quad_form(eps, E):
    """Energy density ``0.5 * eps . E . eps``."""
    eps = np.asarray(eps, dtype=float)
    return 0.5 * eps @ E @ eps


def random_symmetric_direction(rng, size=6):
    """Random symmetric matrix with unit Frobenius norm.

    Used as a perturbation direction for stiffness-tangent checks.
    """
    a = rng.standard_normal((size, size))
    a = 0.5 * (a + a.T)
    return a / np.linalg.norm(a)
