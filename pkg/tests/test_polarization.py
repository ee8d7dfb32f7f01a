"""Riemann, quantized, and dynamical polarization methods."""

import numpy as np
import pytest

import piezotb as pz
from piezotb.errors import GapClosedError, ResolutionError
from piezotb.loops import loop_from_document
from piezotb.polarization import _expm_antihermitian


class TestKsvRiemann:
    def test_eta1_converges_to_unit(self, uniaxial_symbol, eta1):
        result = pz.ksv_riemann(uniaxial_symbol, eta1, n_k=48)
        np.testing.assert_allclose(result.delta_p, [1, 0], atol=1e-2)
        assert result.residual < 1e-2

    def test_eta2_converges_to_unit(self, uniaxial_symbol, eta2):
        result = pz.ksv_riemann(uniaxial_symbol, eta2, n_k=48)
        np.testing.assert_allclose(result.delta_p, [0, 1], atol=1e-2)

    def test_constant_loop_exact_zero(self, uniaxial_symbol):
        loop = loop_from_document({"type": "constant", "point": [0.2, 0.1, 0.4]})
        result = pz.ksv_riemann(uniaxial_symbol, loop, n_k=16)
        np.testing.assert_allclose(result.delta_p, [0, 0], atol=1e-15)

    def test_quadratic_convergence(self, uniaxial_symbol, eta1):
        residuals = [pz.ksv_riemann(uniaxial_symbol, eta1, n_k=n).residual
                     for n in (24, 48)]
        assert residuals[1] <= 0.35 * residuals[0]

    def test_central_k_derivative_agrees(self, uniaxial_symbol, eta1):
        # the central route carries its own O(dk^2) term; both land on (1,0)
        analytic = pz.ksv_riemann(uniaxial_symbol, eta1, n_k=32)
        central = pz.ksv_riemann(uniaxial_symbol, eta1, n_k=32,
                                 k_derivative="central")
        np.testing.assert_allclose(analytic.delta_p, central.delta_p, atol=5e-2)
        np.testing.assert_allclose(central.delta_p, [1, 0], atol=5e-2)

    def test_gap_closure_detected(self, uniaxial_symbol):
        through = loop_from_document({
            "type": "fourier", "constant": [1.0, 1.0, 0.0],
            "cos": [[0.2], [0.0], [0.0]]})
        with pytest.raises(GapClosedError):
            pz.ksv_riemann(uniaxial_symbol, through, n_k=24)


class TestKsvQuantized:
    def test_generators(self, uniaxial_symbol, eta1, eta2):
        r1 = pz.ksv_quantized(uniaxial_symbol, eta1)
        r2 = pz.ksv_quantized(uniaxial_symbol, eta2)
        np.testing.assert_array_equal(r1.delta_p, [1, 0])
        np.testing.assert_array_equal(r2.delta_p, [0, 1])
        assert r1.residual == 0.0
        assert r1.method == "per-slice-plaquette"

    def test_repeat_additivity(self, uniaxial_symbol, eta1):
        result = pz.ksv_quantized(uniaxial_symbol, pz.repeat(eta1, 2))
        np.testing.assert_array_equal(result.delta_p, [2, 0])

    def test_reverse_flips(self, uniaxial_symbol, eta2):
        result = pz.ksv_quantized(uniaxial_symbol, pz.reverse(eta2))
        np.testing.assert_array_equal(result.delta_p, [0, -1])

    def test_matches_chern_matrix_column(self, uniaxial_symbol, eta1, eta2):
        for loop in (eta1, eta2, pz.reverse(eta1)):
            quant = pz.ksv_quantized(uniaxial_symbol, loop)
            matrix = pz.chern_matrix(uniaxial_symbol, loop)
            np.testing.assert_array_equal(quant.snapped(), matrix.delta_p)

    def test_gapless_loop_rejected(self, uniaxial_symbol):
        bad = loop_from_document({"type": "constant", "point": [1.0, 0.0, 0.0]})
        with pytest.raises(GapClosedError):
            pz.ksv_quantized(uniaxial_symbol, bad)


class TestSnapInteger:
    def test_clean_values(self):
        np.testing.assert_array_equal(pz.snap_integer([0.99, -0.01]), [1, 0])

    def test_tie_rejected(self):
        with pytest.raises(ResolutionError):
            pz.snap_integer([0.5, 0.0])


class TestExpmAntihermitian:
    def test_matches_eig_route_2x2(self):
        rng = np.random.default_rng(2)
        h = rng.standard_normal((6, 2, 2)) + 1j * rng.standard_normal((6, 2, 2))
        h = h + np.swapaxes(h, -1, -2).conj()
        omega = -1j * h * 0.37
        fast = _expm_antihermitian(omega)
        w, v = np.linalg.eigh(1j * omega)
        slow = np.einsum("...ij,...j,...kj->...ik", v, np.exp(-1j * w), v.conj())
        np.testing.assert_allclose(fast, slow, atol=1e-12)
        uu = fast @ np.swapaxes(fast, -1, -2).conj()
        np.testing.assert_allclose(uu, np.broadcast_to(np.eye(2), uu.shape),
                                   atol=1e-12)


class TestDynamical:
    def test_magnus_integrator_order(self, uniaxial_symbol, eta1):
        """Propagator error against a fine-step reference scales ~ dt^4."""
        k = np.array([[0.7, -1.2]])

        def propagate(steps, period=5.0):
            from piezotb.polarization import _SQRT3
            dt = period / steps
            u = np.eye(2, dtype=complex)[None]
            for n in range(steps):
                t0 = n * dt
                ts = [t0 + (0.5 - _SQRT3 / 6) * dt, t0 + (0.5 + _SQRT3 / 6) * dt]
                a1, a2 = (-1j * uniaxial_symbol.matrix(
                    k, eta1(np.asarray(2 * np.pi * t / 5.0))) for t in ts)
                omega = 0.5 * dt * (a1 + a2) \
                    + (_SQRT3 / 12) * dt * dt * (a2 @ a1 - a1 @ a2)
                u = _expm_antihermitian(omega) @ u
            return u[0]

        reference = propagate(4096)
        err = [np.abs(propagate(n) - reference).max() for n in (16, 32)]
        order = np.log2(err[0] / err[1])
        assert order > 3.5

    def test_constant_loop_stationary(self, uniaxial_symbol):
        loop = loop_from_document({"type": "constant", "point": [0.0, 0.0, 0.5]})
        result = pz.dynamical_polarization(uniaxial_symbol, loop, period=5.0,
                                           n_k=8, steps=400)
        np.testing.assert_allclose(result.delta_p, [0, 0], atol=1e-10)

    def test_eta1_moderate_period(self, uniaxial_symbol, eta1):
        result = pz.dynamical_polarization(uniaxial_symbol, eta1, period=50.0,
                                           n_k=12)
        np.testing.assert_allclose(result.delta_p, [1, 0], atol=0.05)

    def test_invalid_period(self, uniaxial_symbol, eta1):
        with pytest.raises(ValueError):
            pz.dynamical_polarization(uniaxial_symbol, eta1, period=0.0)

    def test_gapless_rejected(self, uniaxial_symbol):
        bad = loop_from_document({"type": "constant", "point": [1.0, 1.0, 0.0]})
        with pytest.raises(GapClosedError):
            pz.dynamical_polarization(uniaxial_symbol, bad, period=10.0, n_k=8)


class TestPhysicalPolarization:
    def test_single_unit_along_gamma1(self):
        geo = pz.LatticeGeometry.honeycomb()
        vec = pz.physical_polarization([1, 0], geo)
        np.testing.assert_allclose(vec, geo.basis[0] / geo.cell_volume,
                                   atol=1e-14)
        np.testing.assert_allclose(geo.cell_volume, 3 * np.sqrt(3) / 2,
                                   atol=1e-14)

    def test_zero_vector(self):
        geo = pz.LatticeGeometry.honeycomb()
        np.testing.assert_array_equal(pz.physical_polarization([0, 0], geo),
                                      [0, 0])

    def test_sum_of_basis(self):
        geo = pz.LatticeGeometry.honeycomb(a=1.0)
        vec = pz.physical_polarization([1, 1], geo, charge=1.0)
        np.testing.assert_allclose(vec, np.array([3.0, 0.0]) / geo.cell_volume,
                                   atol=1e-14)

    def test_dimension_checked(self):
        with pytest.raises(ValueError):
            pz.physical_polarization([1, 0, 0], pz.LatticeGeometry.honeycomb())
