import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tsmech.engine import TimeGrid, integrate_extended, run_tsm
from tsmech.loadcases import shear_cycle
from tsmech.models import ViscoplasticModel
from tsmech.models.viscoplastic import (vp_det_rhs, vp_stress_stats, vp_tangent_rhs_E,
                                        vp_tangent_rhs_Y)
from tsmech.montecarlo import run_mc
from tsmech.stochastic import CorrelationSpec, MomentSet, analytic_gaussian_moments
from tsmech.verification import fd_tangent_check
from tsmech.voigt import J_LAMBDA, STRESS_METRIC, deviator, stress_norm

from conftest import vp_params

ETA = 20e9
SY = 50e6
strain6 = arrays(np.float64, 6, elements=st.floats(-0.03, 0.03))
Z_IE, Z_IY = np.zeros((6, 6, 6)), np.zeros(6)


@pytest.fixture(scope="module")
def model():
    return ViscoplasticModel.from_lame(12e9, 8e9, SY, ETA)


def shear_strain(tau, mu=8e9):
    # engineering shear gamma gives sigma_yz = mu * gamma
    return np.array([0, 0, 0, tau / mu, 0, 0])


def test_below_yield_no_flow(model):
    tau = 0.9 * SY / np.sqrt(2)
    assert not vp_det_rhs(np.zeros(6), shear_strain(tau), model).any()
    assert not vp_tangent_rhs_E(np.zeros(6), Z_IE, Z_IY, shear_strain(tau), model).any()
    assert not vp_tangent_rhs_Y(np.zeros(6), Z_IE, Z_IY, shear_strain(tau), model).any()


def test_pure_shear_rate(model):
    s = 1.5 * SY / np.sqrt(2)
    r = vp_det_rhs(np.zeros(6), shear_strain(s), model)
    mag = (np.sqrt(2) * s - SY) / ETA / np.sqrt(2)
    np.testing.assert_allclose(r, [0, 0, 0, mag, 0, 0], rtol=1e-12)


def test_rate_continuous_at_yield(model):
    s0 = SY / np.sqrt(2)
    rates = [np.abs(vp_det_rhs(np.zeros(6), shear_strain(s0 * (1 + h)), model)).max()
             for h in (1e-2, 1e-4, 1e-6)]
    assert rates[0] > rates[1] > rates[2] and rates[2] < 1e-6 * rates[0] * 1e3


def test_yield_tangent_without_history(model):
    eps = shear_strain(1.5 * SY / np.sqrt(2)) + np.array([1e-3, 0, -1e-3, 0, 0, 0])
    sig = model.mean_stress(np.zeros(6), eps)
    s = deviator(sig)
    expected = -s / stress_norm(s) / ETA
    np.testing.assert_allclose(vp_tangent_rhs_Y(np.zeros(6), Z_IE, Z_IY, eps, model), expected,
                               rtol=1e-12, atol=1e-12 * np.abs(expected).max())


def test_stiffness_tangent_rate_deviatoric(model, rng):
    eps = np.array([0.01, -0.004, 0.002, 0.006, 0.0, 0.003])
    rate = vp_tangent_rhs_E(np.zeros(6), Z_IE, Z_IY, eps, model)
    generic = np.tensordot(rate, rng.standard_normal((6, 6)), axes=([1, 2], [0, 1]))
    assert abs(generic[:3].sum()) <= 1e-12 * np.abs(generic).max()
    # a hydrostatic stiffness change leaves the deviatoric stress, and thus the flow, unchanged
    hydro = np.tensordot(rate, J_LAMBDA, axes=([1, 2], [0, 1]))
    assert np.abs(hydro).max() <= 1e-12 * np.abs(generic).max()


@given(strain6, arrays(np.float64, 6, elements=st.floats(-0.01, 0.01)))
def test_flow_deviatoric_and_dissipative(eps, evp):
    m = ViscoplasticModel.from_lame(12e9, 8e9, SY, ETA)
    evp = evp - np.r_[np.full(3, evp[:3].mean()), np.zeros(3)]
    r = vp_det_rhs(evp, eps, m)
    assert abs(r[:3].sum()) <= 1e-12 * np.abs(r).max() + 1e-300
    s = deviator(m.mean_stress(evp, eps))
    assert np.sum(STRESS_METRIC * s * r) >= 0


@pytest.mark.parametrize("mode", ["fully_dependent", "independent"])
@pytest.mark.parametrize("source", [0, 1])
def test_fd_tangents(mode, source):
    m = ViscoplasticModel.from_lame(12e9, 8e9, SY, ETA)
    rep = fd_tangent_check(m, shear_cycle(), TimeGrid(100.0, 0.05), source=source, seed=2)
    assert rep.passed and rep.max_rel_err <= 1e-3
    if source == 1:
        assert np.isclose(rep.h, 1e-6 * SY)


def test_trajectory_traceless(model):
    traj = integrate_extended(model, shear_cycle(), TimeGrid(100.0, 0.05))
    evp = traj.y0
    assert np.all(np.abs(evp[:, :3].sum(axis=1)) <= 1e-10 * np.linalg.norm(evp, axis=1) + 1e-300)
    assert np.abs(evp[:, 5]).max() > 0


def test_independent_coupling_zero(model):
    ms = analytic_gaussian_moments(vp_params(), CorrelationSpec())
    traj = integrate_extended(model, shear_cycle(), TimeGrid(100.0, 0.05))
    n = 600
    args = (traj.y0[n], traj.tangents[0][n], traj.tangents[1][n], traj.strains[n], model)
    _, v = vp_stress_stats(*args, ms)
    cov = ms.cov.copy()
    cov[:36, 36] = cov[36, :36] = 0
    _, v0 = vp_stress_stats(*args, MomentSet(cov, ms.source_kinds))
    np.testing.assert_array_equal(v, v0)


def test_dependent_coupling_matters(model):
    ms = analytic_gaussian_moments(vp_params(), CorrelationSpec("fully_dependent"))
    traj = integrate_extended(model, shear_cycle(), TimeGrid(100.0, 0.05))
    n = 600
    args = (traj.y0[n], traj.tangents[0][n], traj.tangents[1][n], traj.strains[n], model)
    _, v = vp_stress_stats(*args, ms)
    cov = ms.cov.copy()
    cov[:36, 36] = cov[36, :36] = 0
    _, v0 = vp_stress_stats(*args, MomentSet(cov, ms.source_kinds))
    assert abs(v[5] - v0[5]) > 1e-3 * v[5]


def test_elastic_regime_variance(model):
    eps = shear_strain(0.5 * SY / np.sqrt(2)) + np.array([1e-3, 0, 0, 0, 0, 0])
    ms = analytic_gaussian_moments(vp_params(), CorrelationSpec())
    m, v = vp_stress_stats(np.zeros(6), Z_IE, Z_IY, eps, model, ms)
    assert np.isclose(v[0], (1.2e9**2 + 4 * 0.8e9**2) * 1e-6, rtol=1e-12)
    assert np.isclose(v[3], (0.8e9 * eps[3]) ** 2, rtol=1e-12)


def test_elastic_quiescence_matches_mc():
    m = ViscoplasticModel.from_lame(12e9, 8e9, SY, ETA)
    # peak |dev sigma| stays well below sigma_y minus 5 std for every admissible draw
    load = shear_cycle(amplitude=1e-4)
    g = TimeGrid(100.0, 0.5)
    p = vp_params()
    stats, _, _ = run_tsm(m, load, g, analytic_gaussian_moments(p, CorrelationSpec()))
    mc = run_mc(m, load, g, p, n=200, base_seed=0, workers=1)
    i = stats.index("evp_xy")
    assert not stats.mean[:, :6].any() and not stats.var[:, :6].any()
    assert not mc.mean[:, :6].any()
    j = stats.index("sig_xy")
    eps = load.path(g)[:, 5]
    np.testing.assert_allclose(stats.var[:, j], (0.8e9 * eps) ** 2, rtol=1e-12, atol=1e-300)
    assert i == 5


def test_dependent_stress_std_near_zeros():
    m = ViscoplasticModel.from_lame(12e9, 8e9, SY, ETA)
    ms = analytic_gaussian_moments(vp_params(), CorrelationSpec("fully_dependent"))
    stats, _, traj = run_tsm(m, shear_cycle(), TimeGrid(100.0, 0.05), ms)
    s = stats.column("sig_xy")[1]
    yielded = np.flatnonzero(m.switching_indicator(traj.y0, traj.strains))[0]
    assert s[yielded:].min() < 0.05 * s.max()
