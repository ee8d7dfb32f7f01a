"""Band energies, projections, gap predicates, and gap maps."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import piezotb as pz
from piezotb.errors import GapClosedError

from conftest import random_two_band_model


class TestBandEnergies:
    def test_stagger_only_bands(self):
        # decoupled-cell configuration via the general-q0 constructor
        free = pz.uniaxial_model(q0=0.0)
        lo, hi = pz.band_energies(free, pz.k_grid(16, 2), np.array([0, 0, 1.0]))
        np.testing.assert_allclose(lo, -1, atol=1e-14)
        np.testing.assert_allclose(hi, +1, atol=1e-14)

    def test_isotropic_extremes(self, uniaxial_symbol):
        lo, hi = pz.band_energies(uniaxial_symbol, np.zeros(2),
                                  np.array([1.0, 1.0, 0.0]))
        np.testing.assert_allclose([lo, hi], [-3, 3], atol=1e-13)
        k_dirac = np.array([2 * np.pi / 3, -2 * np.pi / 3])
        lo, hi = pz.band_energies(uniaxial_symbol, k_dirac,
                                  np.array([1.0, 1.0, 0.0]))
        np.testing.assert_allclose([lo, hi], [0, 0], atol=1e-13)

    def test_matches_eigensolver(self):
        # oracle equivalence on 200 random samples
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(4):
            symbol = random_two_band_model(rng).bloch()
            ks = rng.uniform(-np.pi, np.pi, (50, 2))
            qs = rng.uniform(-1, 1, (50, 2))
            lo, hi = pz.band_energies(symbol, ks, qs)
            evals = np.linalg.eigvalsh(symbol.matrix(ks, qs))
            worst = max(worst, float(np.abs(np.stack([lo, hi], -1) - evals).max()))
        assert worst < 1e-10

    def test_spectrum_symmetric_when_h0_zero(self, uniaxial_symbol):
        ks = pz.k_grid(32, 2)
        lo, hi = pz.band_energies(uniaxial_symbol, ks, np.array([0.7, 1.1, 0.2]))
        np.testing.assert_allclose(lo, -hi, atol=1e-13)


class TestFermiProjection:
    def test_projector_identities(self, uniaxial_symbol):
        rng = np.random.default_rng(5)
        ks = rng.uniform(-np.pi, np.pi, (60, 2))
        q = np.array([1.6, 0.2, 0.3])
        proj = pz.fermi_projection(uniaxial_symbol, ks, q)
        np.testing.assert_allclose(proj @ proj, proj, atol=1e-10)
        np.testing.assert_allclose(proj, np.swapaxes(proj, -1, -2).conj(),
                                   atol=1e-12)
        np.testing.assert_allclose(np.trace(proj, axis1=-2, axis2=-1), 1,
                                   atol=1e-12)

    def test_north_configuration(self):
        free = pz.uniaxial_model(q0=0.0)
        proj = pz.fermi_projection(free, np.zeros(2), np.array([0, 0, 1.0]))
        np.testing.assert_allclose(proj, np.diag([0.0, 1.0]), atol=1e-14)

    def test_sigma1_configuration(self):
        free = pz.uniaxial_model(q0=0.0)
        proj = pz.fermi_projection(free, np.zeros(2), np.array([1.0, 0, 0]))
        np.testing.assert_allclose(proj, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-14)

    def test_stagger_dominated_point(self, uniaxial_symbol):
        # h = (0, 0, eps) at k1 = -pi for q = (1, 0, eps)
        eps = 0.1
        proj = pz.fermi_projection(uniaxial_symbol, np.array([-np.pi, 0.4]),
                                   np.array([1.0, 0.0, eps]))
        np.testing.assert_allclose(proj, np.diag([0.0, 1.0]), atol=1e-12)

    def test_gap_closed_error(self, uniaxial_symbol):
        with pytest.raises(GapClosedError):
            pz.fermi_projection(uniaxial_symbol,
                                np.array([2 * np.pi / 3, -2 * np.pi / 3]),
                                np.array([1.0, 1.0, 0.0]))


class TestSpectralDistance:
    def test_dimer_configuration(self, uniaxial_symbol):
        report = pz.spectral_distance(uniaxial_symbol, [0.0, 0.0, 0.0], n_k=32)
        np.testing.assert_allclose(report.min_distance, 1.0, atol=1e-12)
        assert report.gapped

    def test_analytic_quarter_gap(self, uniaxial_symbol):
        # oracle: dense aligned grid holds the analytic minimum at k = (pi, 0)
        report = pz.spectral_distance(uniaxial_symbol, [1.5, 0.25, 0.0],
                                      n_k=128, aligned=True, refine=False)
        np.testing.assert_allclose(report.min_distance, 0.25, atol=1e-12)
        refined = pz.spectral_distance(uniaxial_symbol, [1.5, 0.25, 0.0], n_k=128)
        np.testing.assert_allclose(refined.min_distance, 0.25, atol=1e-6)

    def test_dirac_on_aligned_grid(self, uniaxial_symbol):
        for n_k in (48, 96):
            report = pz.spectral_distance(uniaxial_symbol, [1.0, 1.0, 0.0],
                                          n_k=n_k, aligned=True, refine=False)
            assert report.min_distance < 1e-6
            assert not report.gapped

    def test_offset_grid_plus_refine_detects_dirac(self, uniaxial_symbol):
        report = pz.spectral_distance(uniaxial_symbol, [1.0, 1.0, 0.0], n_k=64)
        assert report.min_distance < 1e-6

    def test_small_grid_rejected(self, uniaxial_symbol):
        with pytest.raises(ValueError):
            pz.spectral_distance(uniaxial_symbol, [1, 1, 0], n_k=4)


class TestPredicates:
    @pytest.mark.parametrize("q,expected", [
        ((1.0, 1.0, 0.0), True),
        ((1.5, 0.25, 0.0), False),
        ((1.0, 1.0, 0.2), False),
        ((0.3, 0.7, 0.0), True),
        ((0.3, 0.6, 0.0), False),
        ((2.0, 0.9, 0.0), False),
    ])
    def test_gapless_predicate(self, q, expected):
        assert pz.gapless_predicate_uniaxial(q) is expected

    @pytest.mark.parametrize("q,g,expected", [
        ((0.5, 2.0, 0.0), 0.2, True),
        ((1.0, 1.0, 0.0), 0.2, False),
        ((1.0, 1.0, 0.2), 0.2, True),
        ((1.8, 0.2, 0.0), 0.4, True),
        ((1.8, 0.7, 0.0), 0.4, False),
    ])
    def test_margin_predicate(self, q, g, expected):
        assert pz.margin_predicate_uniaxial(q, g) is expected

    def test_margin_needs_positive_g(self):
        with pytest.raises(ValueError):
            pz.margin_predicate_uniaxial((1, 1, 0), 0.0)

    def test_margin_inside_gapped_set(self, uniaxial_symbol):
        # members of the margin region really have gap > g
        rng = np.random.default_rng(8)
        g = 0.3
        count = 0
        while count < 20:
            q = rng.uniform([0, 0, -1], [2, 2, 1])
            if not pz.margin_predicate_uniaxial(q, g):
                continue
            count += 1
            report = pz.spectral_distance(uniaxial_symbol, q, n_k=64)
            assert report.min_distance > g / 2


class TestBandRanges:
    def test_dimer_point_ranges(self, uniaxial_symbol):
        br = pz.band_ranges(uniaxial_symbol, [0.0, 0.0, 0.0], n_k=32)
        np.testing.assert_allclose(br.intervals, [(-1, -1), (1, 1)], atol=1e-12)

    def test_isotropic_ranges(self, uniaxial_symbol):
        br = pz.band_ranges(uniaxial_symbol, [1.0, 1.0, 0.0], n_k=96,
                            aligned=True)
        np.testing.assert_allclose(br.intervals, [(-3, 0), (0, 3)], atol=1e-12)
        # independent oracle: dense eigenvalue scan
        ks = pz.k_grid(97, 2)
        evals = np.linalg.eigvalsh(uniaxial_symbol.matrix(ks, np.array([1., 1., 0.])))
        assert evals.min() >= -3 - 1e-12 and evals.max() <= 3 + 1e-12

    def test_free_stagger_ranges(self):
        free = pz.uniaxial_model(q0=0.0)
        br = pz.band_ranges(free, [0.0, 0.0, 1.0], n_k=16)
        np.testing.assert_allclose(br.intervals, [(-1, -1), (1, 1)], atol=1e-14)


class TestGapMap:
    def test_small_map_agreement(self, uniaxial_symbol):
        gm = pz.gap_map(uniaxial_symbol, [(0, 2), (0, 2), (0, 0)], [21, 21, 1],
                        n_k=48, tolerance=1e-3)
        pred = np.array([pz.gapless_predicate_uniaxial(c) for c in gm.cells])
        assert (pred == ~gm.gapped).mean() >= 0.97

    def test_positive_stagger_slice_gapped(self, uniaxial_symbol):
        gm = pz.gap_map(uniaxial_symbol, [(0, 2), (0, 2), (0.3, 0.3)],
                        [15, 15, 1], n_k=32)
        assert gm.gapped.all()

    def test_three_gapped_components(self, uniaxial_symbol):
        # flood-fill count of gapped cells in the stagger-free slice
        res = 41
        gm = pz.gap_map(uniaxial_symbol, [(0, 2), (0, 2), (0, 0)],
                        [res, res, 1], n_k=48, tolerance=1e-3)
        grid = gm.gapped.reshape(res, res)
        seen = np.zeros_like(grid, dtype=bool)
        components = 0
        for start in zip(*np.nonzero(grid & ~seen)):
            if seen[start]:
                continue
            components += 1
            stack = [start]
            seen[start] = True
            while stack:
                a, b = stack.pop()
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    na, nb = a + da, b + db
                    if 0 <= na < res and 0 <= nb < res and grid[na, nb] \
                            and not seen[na, nb]:
                        seen[na, nb] = True
                        stack.append((na, nb))
        assert components == 3

    def test_region_validation(self, uniaxial_symbol):
        with pytest.raises(ValueError):
            pz.gap_map(uniaxial_symbol, [(0, 3), (0, 2), (0, 0)], [5, 5, 1])

    def test_csv_format(self, uniaxial_symbol):
        gm = pz.gap_map(uniaxial_symbol, [(0, 1), (0, 1), (0, 0)], [3, 3, 1],
                        n_k=32)
        buf = io.StringIO()
        gm.to_csv(buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "q1,q2,q3,min_distance,gapped"
        assert len(lines) == 10
        first = lines[1].split(",")
        assert first[:3] == ["0", "0", "0"]
        assert first[4] in ("true", "false")

    def test_thread_independence(self, uniaxial_symbol):
        region, res = [(0, 2), (0, 2), (0, 0)], [9, 9, 1]
        serial = pz.gap_map(uniaxial_symbol, region, res, n_k=32)
        threaded = pz.gap_map(uniaxial_symbol, region, res, n_k=32, threads=3)
        np.testing.assert_array_equal(serial.min_distance, threaded.min_distance)


class TestMinGapAlongLoop:
    def test_eta1_analytic_value(self, uniaxial_symbol):
        for eps in (0.3, 0.5):
            loop = pz.generator_eta(1, eps)
            report = pz.min_gap_along_loop(uniaxial_symbol, loop, n_k=48,
                                           n_t=128)
            np.testing.assert_allclose(report.min_distance, eps, atol=2e-3)
            assert report.gapped

    def test_constant_dimer_loop(self, uniaxial_symbol):
        loop = pz.loops.loop_from_document({"type": "constant",
                                            "point": [0.0, 0.0, 0.0]})
        report = pz.min_gap_along_loop(uniaxial_symbol, loop, n_k=32, n_t=8)
        np.testing.assert_allclose(report.min_distance, 1.0, atol=1e-10)

    def test_loop_through_gapless_point(self, uniaxial_symbol):
        loop = pz.loops.loop_from_document({
            "type": "fourier", "constant": [1.0, 1.0, 0.0],
            "cos": [[0.2], [0.0], [0.0]]})
        report = pz.min_gap_along_loop(uniaxial_symbol, loop, n_k=48, n_t=64)
        assert not report.gapped


def _analytic_gap(q1, q2, q3):
    # closed-form distance: the varpi values fill an annulus around 1
    rho1, rho2 = abs(q1), abs(q2)
    planar = max(0.0, abs(rho1 - rho2) - 1.0, 1.0 - (rho1 + rho2))
    return np.hypot(planar, q3)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(q1=st.floats(0, 2), q2=st.floats(0, 2), q3=st.floats(-1, 1))
def test_distance_matches_closed_form(q1, q2, q3):
    """The refined numerical scan reproduces the closed-form gap distance."""
    symbol = pz.uniaxial_model().bloch()
    report = pz.spectral_distance(symbol, [q1, q2, q3], n_k=48)
    exact = _analytic_gap(q1, q2, q3)
    assert abs(report.min_distance - exact) < 1e-5 * (1 + exact)
    # the exact predicate is the zero set of the closed form
    assert pz.gapless_predicate_uniaxial((q1, q2, q3)) == (exact == 0.0)


class TestHigherRankProjection:
    def test_rank_two_projection_for_m2(self):
        # constant two-band model with four internal components
        sig = pz.clifford_basis(2)
        terms = [pz.HoppingTerm((0, 0), s, pz.Coefficient("q", j + 1))
                 for j, s in enumerate(sig)]
        model = pz.HoppingModel(2, 2, 5, terms)
        rng = np.random.default_rng(6)
        for _ in range(10):
            q = rng.standard_normal(5)
            if np.linalg.norm(q) < 0.3:
                continue
            proj = pz.fermi_projection(model, np.zeros(2), q)
            np.testing.assert_allclose(proj @ proj, proj, atol=1e-10)
            np.testing.assert_allclose(np.trace(proj).real, 2, atol=1e-12)
