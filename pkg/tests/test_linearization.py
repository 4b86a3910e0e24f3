import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import varanneal.linearization as lin
from varanneal.errors import DefectiveError, NotStationaryError
from varanneal.exact import spectral_gap
from varanneal.linearization import (KappaReport, eta_deviation, frame_at, jacobian_K, kappa_bound,
                                     linearize_path, local_rates, pseudo_metric, relation_residual,
                                     spectrum)
from varanneal.product import (ProductModel, ProductState, eom_rhs, integrate, lmg_critical_point,
                               variational_ground_state)

ROT = np.array([[0.0, -2.0], [2.0, 0.0]])


def test_lmg_jacobian_at_s0():
    model = ProductModel("lmg", N=4)
    K = jacobian_K(model, 0.0, ProductState(math.pi / 2, 0.0, model)).K
    np.testing.assert_allclose(K, ROT, atol=1e-6)


def test_rotation_generator_spectrum_and_metric():
    sp = spectrum(ROT)
    np.testing.assert_allclose(sp.eigenvalues.real, [-2.0, 2.0], atol=1e-12)
    assert sp.biorthogonality_residual() < 1e-12
    np.testing.assert_allclose(pseudo_metric(sp), np.eye(2), atol=1e-12)


def test_defective_generator_rejected():
    with pytest.raises(DefectiveError, match="non-diagonalizable"):
        spectrum(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_not_stationary_rejected():
    model = ProductModel("twoqubit")
    with pytest.raises(NotStationaryError):
        jacobian_K(model, 0.5, ProductState(1.0, 0.3, model))


@given(st.floats(0.1, math.pi - 0.1), st.floats(-math.pi, math.pi), st.floats(0.0, 1.0),
       st.sampled_from([ProductModel("twoqubit", A=2.0), ProductModel("lmg", N=5)]))
@settings(max_examples=50)
def test_identity_frame_reproduces_eom(theta, phi, s, model):
    rates = local_rates(model, s, (theta, phi), np.eye(3))
    np.testing.assert_allclose(rates, eom_rhs(model, s, ProductState(theta, phi, model)),
                               atol=1e-9, rtol=1e-9)


@pytest.mark.parametrize("model", [ProductModel("twoqubit", A=0.0), ProductModel("twoqubit", A=5.0),
                                   ProductModel("bipartite", N=3, A=2.0), ProductModel("lmg", N=4)])
def test_spectrum_along_path(model):
    grid = np.linspace(0.0, 1.0, 41)
    if model.tag.value == "lmg":
        grid = grid[np.abs(grid - lmg_critical_point(4)) > 0.04]
    for p in linearize_path(model, grid):
        assert p.spec.reality_residual() < 1e-8
        assert p.spec.pairing_residual() < 1e-8
        assert p.spec.biorthogonality_residual() < 1e-8
        assert relation_residual(p.spec.iK, p.eta) < 1e-8
        assert np.linalg.eigvalsh(p.eta)[0] > 0
        assert abs(np.trace(p.lin.K)) < 1e-8


@pytest.mark.parametrize("model,s", [(ProductModel("twoqubit"), 0.0), (ProductModel("twoqubit"), 1.0),
                                     (ProductModel("lmg", N=4), 0.0), (ProductModel("lmg", N=4), 1.0)])
def test_endpoint_frequency_equals_exact_gap(model, s):
    p = linearize_path(model, [s])[0]
    gap = spectral_gap(model.protocol().hamiltonian_at(s))
    assert np.min(np.abs(p.spec.omegas)) == pytest.approx(gap, abs=1e-6)


def test_twoqubit_target_against_generic_jacobian():
    # dense Jacobian of the generic tangent-projection flow in the same rotated chart
    from varanneal.product import generic_rhs

    model = ProductModel("twoqubit")
    spec = model.protocol()
    n0 = variational_ground_state(model, 1.0).bloch().as_array()
    R = frame_at(n0)

    def rates(y):
        m = np.array([math.sin(y[0]) * math.cos(y[1]), -math.sin(y[0]) * math.sin(y[1]), math.cos(y[0])])
        n = R @ m
        th = math.acos(max(-1.0, min(1.0, n[2])))
        ph = math.atan2(-n[1], n[0])
        r = np.array(generic_rhs(spec, 1.0, ProductState(th, ph, model)))
        # chain rule through the chart change, by finite differences of the forward map
        h = 1e-7
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            m2 = np.array([math.sin(y[0] + e[0]) * math.cos(y[1] + e[1]),
                           -math.sin(y[0] + e[0]) * math.sin(y[1] + e[1]), math.cos(y[0] + e[0])])
            n2 = R @ m2
            J[:, j] = (np.array([math.acos(n2[2]), math.atan2(-n2[1], n2[0])]) - [th, ph]) / h
        return np.linalg.solve(J, r)

    y0 = np.array([math.pi / 2 + 0.3, 0.2])
    np.testing.assert_allclose(rates(y0), local_rates(model, 1.0, y0, R), rtol=1e-5, atol=1e-6)
    w = spectrum(jacobian_K(model, 1.0, n0)).omegas
    np.testing.assert_allclose(np.sort(np.abs(w)), [2.0, 2.0], atol=1e-6)


def test_kappa_twoqubit_bounds_measured_deviation():
    model = ProductModel("twoqubit")
    grid = np.linspace(0.0, 1.0, 101)
    points = linearize_path(model, grid)
    rep = kappa_bound(model, points=points)
    assert math.isfinite(rep.kappa) and rep.kappa > 0 and rep.status == "ok"
    for T in (8, 16, 32, 64, 128):
        traj = integrate(model, T, dt=0.01, samples=100)
        bloch = np.array([traj.observables[k] for k in ("Sx", "Sy", "Sz")]).T
        dev = eta_deviation(model, points, bloch, traj.grid)
        assert dev[-1] <= rep.kappa / T


def test_lmg_kappa_windows():
    model = ProductModel("lmg", N=4)
    sc = lmg_critical_point(4)
    rep = kappa_bound(model)
    assert math.isfinite(rep.kappa) and "s_star=0.4" in rep.notes
    gapless = kappa_bound(model, s_grid=np.linspace(0.0, 1.0, 11))
    assert gapless.status.startswith("gapless") and math.isinf(gapless.kappa)
    early = linearize_path(model, np.linspace(0.0, sc - 0.05, 8))
    assert max(np.linalg.norm(p.xdot) for p in early) == 0.0
    # the velocity of x0 grows without bound as the grid approaches s*
    near = [linearize_path(model, [sc + eps])[0] for eps in (1e-2, 1e-3, 1e-4)]
    v = [np.linalg.norm(p.xdot) for p in near]
    assert v[0] < v[1] < v[2] and v[2] > 3 * v[0]


def test_eta_positive_on_lmg_window():
    for p in linearize_path(ProductModel("lmg", N=4), np.linspace(0.45, 1.0, 56)):
        assert np.linalg.eigvalsh(p.eta)[0] > 0


def test_phase_factor_independent_of_eigensolver_gauge(monkeypatch):
    model = ProductModel("twoqubit", A=5.0)
    grid = np.linspace(0.0, 1.0, 51)
    ref = kappa_bound(model, s_grid=grid)
    rng = np.random.default_rng(3)
    original = lin.spectrum

    def regauged(arg):
        sp = original(arg)
        ph = np.exp(1j * rng.uniform(0, 2 * np.pi, len(sp.eigenvalues)))
        return lin.BiorthogonalSpectrum(sp.iK, sp.eigenvalues, sp.right * ph, sp.left * ph)

    monkeypatch.setattr(lin, "spectrum", regauged)
    rep = kappa_bound(model, s_grid=grid)
    assert rep.phase_factor == pytest.approx(ref.phase_factor, rel=1e-8)
    assert rep.kappa == pytest.approx(ref.kappa, rel=1e-8)


def test_kappa_report_text_round_trip():
    rep = kappa_bound(ProductModel("twoqubit", A=1.0), s_grid=np.linspace(0, 1, 21))
    rep.extra["ratio_T_100"] = 0.5
    back = KappaReport.from_text(rep.to_text())
    assert back.kappa == rep.kappa and back.model == rep.model and back.n_grid == 21
    assert float(back.extra["ratio_T_100"]) == 0.5
