"""Dual-polynomial evaluation, grid peak extraction, grid/peaks file formats."""

import csv
import json

import numpy as np
import pytest

from blindsr import dualsdp as dd
from blindsr import localize as lc
from blindsr import model as md
from blindsr import spectral as sp


@pytest.fixture(scope="module")
def solved_instance():
    """Small noiseless single-shift instance solved to optimality."""
    sub = md.random_subspace(7, 1, "gaussian", seed=51)
    scene = md.random_scene(1, 1, seed=52, gain_model="unit_modulus", N=3)
    obs = md.synthesize(scene, sub)
    sol = dd.solve_dual(dd.assemble(obs.y, sub, include_redundant_q=False))
    assert sol.status.startswith("optimal")
    return sub, scene, sol


# ---------------------------------------------------------------------------
# coefficient tensor
# ---------------------------------------------------------------------------

class TestBuildPolynomial:
    def test_zero_dual_vector_gives_zero_polynomial(self):
        sub = md.random_subspace(5, 2, "gaussian", seed=1)
        poly = lc.build_polynomial(np.zeros(5), sub)
        assert poly.coeff.shape == (2, 5, 5)
        assert np.abs(poly.coeff).max() == 0.0
        assert np.abs(poly.eval_at(0.37, 0.91)).max() == 0.0

    def test_tensor_route_matches_adjoint_route(self):
        sub = md.random_subspace(9, 3, "gaussian", seed=2)
        rng = np.random.default_rng(3)
        q = rng.normal(size=9) + 1j * rng.normal(size=9)
        poly = lc.build_polynomial(q, sub)
        Aq = dd.adjoint_operator(q, sub)
        for _ in range(20):
            r = rng.uniform(size=2)
            direct = poly.eval_at(r[0], r[1])
            via_adjoint = Aq @ sp.atom((r[0], r[1]), 9).vec
            assert np.abs(direct - via_adjoint).max() < 1e-10

    def test_all_ones_subspace_collapses_the_inner_sum(self):
        # with d_l = 1 the sum over l is a geometric series = L * delta_k,
        # so only the k = 0 slice of the tensor survives
        L, N = 7, 3
        sub = md.Subspace(D=np.ones((L, 1), dtype=complex), kind="custom")
        q = np.ones(L)
        poly = lc.build_polynomial(q, sub)
        expected = np.zeros((1, L, L))
        expected[0, :, N] = 1.0
        assert np.abs(poly.coeff - expected).max() < 1e-12
        # a pure Dirichlet ridge in the f coordinate: f(tau, f) = L D_N(f)
        for f in (0.0, 0.13, 0.5):
            val = poly.eval_at(0.62, f)
            assert abs(val[0] - L * sp.dirichlet(f, N)) < 1e-10

    def test_center_basis_vector_gives_single_coefficient(self):
        L, N = 7, 3
        sub = md.Subspace(D=np.ones((L, 1), dtype=complex), kind="custom")
        q = np.zeros(L)
        q[N] = 1.0  # the p = 0 sample
        poly = lc.build_polynomial(q, sub)
        assert np.count_nonzero(np.abs(poly.coeff) > 1e-14) == 1
        assert poly.coeff[0, N, N] == pytest.approx(1.0)

    def test_rejects_wrong_length(self):
        sub = md.random_subspace(5, 1, "gaussian", seed=4)
        with pytest.raises(ValueError, match="length"):
            lc.build_polynomial(np.zeros(7), sub)


# ---------------------------------------------------------------------------
# grid evaluation
# ---------------------------------------------------------------------------

class TestEvalGrid:
    def test_zero_polynomial_evaluates_to_zero_grid(self):
        poly = lc.DualPolynomial(coeff=np.zeros((2, 5, 5)))
        grid = lc.eval_grid(poly, 16)
        assert grid.shape == (16, 16)
        assert grid.max() == 0.0

    def test_fft_route_matches_direct_route_at_grid_nodes(self):
        rng = np.random.default_rng(7)
        coeff = rng.normal(size=(2, 7, 7)) + 1j * rng.normal(size=(2, 7, 7))
        poly = lc.DualPolynomial(coeff=coeff)
        G = 41
        grid = lc.eval_grid(poly, G)
        for _ in range(20):
            a, b = rng.integers(0, G, size=2)
            direct = np.linalg.norm(poly.eval_at(a / G, b / G)) ** 2
            assert abs(grid[a, b] - direct) < 1e-9 * max(1.0, direct)

    def test_orientation_first_axis_is_tau(self):
        # f(tau, f) = 1 + e^{-i 2 pi tau}: varies along axis 0, flat along axis 1
        L, N = 5, 2
        coeff = np.zeros((1, L, L), dtype=complex)
        coeff[0, N, N] = 1.0      # (p, k) = (0, 0)
        coeff[0, N, N + 1] = 1.0  # (p, k) = (0, 1)
        grid = lc.eval_grid(lc.DualPolynomial(coeff=coeff), 32)
        a = np.arange(32) / 32
        expected = 2.0 + 2.0 * np.cos(2 * np.pi * a)
        assert np.abs(grid - expected[:, None]).max() < 1e-9

    def test_rejects_grid_below_l(self):
        poly = lc.DualPolynomial(coeff=np.zeros((1, 9, 9)))
        with pytest.raises(ValueError, match="alias"):
            lc.eval_grid(poly, 8)
        assert lc.eval_grid(poly, 9).shape == (9, 9)

    def test_evaluation_is_periodic(self):
        rng = np.random.default_rng(8)
        poly = lc.DualPolynomial(
            coeff=rng.normal(size=(1, 5, 5)) + 1j * rng.normal(size=(1, 5, 5)))
        v0 = poly.eval_at(0.2, 0.7)
        assert np.abs(poly.eval_at(1.2, 0.7) - v0).max() < 1e-9
        assert np.abs(poly.eval_at(0.2, -0.3) - v0).max() < 1e-9


# ---------------------------------------------------------------------------
# peak extraction
# ---------------------------------------------------------------------------

class TestExtractPeaks:
    def test_zero_grid_yields_empty_estimate(self):
        est = lc.extract_peaks(np.zeros((32, 32)), 0.9)
        assert est.R == 0
        assert est.shifts == []
        assert est.grid_step == pytest.approx(1 / 32)

    def test_two_blobs_sorted_by_peak_value(self):
        grid = np.zeros((64, 64))
        grid[10:13, 20:23] = 0.95
        grid[11, 21] = 0.97
        grid[40:42, 50:52] = 0.96
        grid[40, 50] = 0.99
        est = lc.extract_peaks(grid, 0.9)
        assert est.R == 2
        assert est.peak_values[0] == pytest.approx(0.99)
        assert est.peak_values[1] == pytest.approx(0.97)
        assert est.shifts[0].as_tuple() == (40 / 64, 50 / 64)
        assert est.shifts[1].as_tuple() == (11 / 64, 21 / 64)

    def test_component_straddling_both_seams_is_one_peak(self):
        # mass on all four corners is 8-connected across the torus wrap
        grid = np.zeros((32, 32))
        for a in (0, 31):
            for b in (0, 31):
                grid[a, b] = 0.95
        grid[31, 31] = 0.99
        est = lc.extract_peaks(grid, 0.9)
        assert est.R == 1
        assert est.shifts[0].as_tuple() == (31 / 32, 31 / 32)
        assert est.peak_values[0] == pytest.approx(0.99)

    def test_wrap_only_in_one_axis(self):
        grid = np.zeros((16, 16))
        grid[15, 5] = 0.92
        grid[0, 6] = 0.94  # diagonal neighbor across the row seam
        grid[8, 8] = 0.93  # separate blob
        est = lc.extract_peaks(grid, 0.9)
        assert est.R == 2
        assert est.peak_values[0] == pytest.approx(0.94)

    def test_threshold_validation(self):
        grid = np.zeros((8, 8))
        for bad in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError, match="threshold"):
                lc.extract_peaks(grid, bad)

    def test_peak_count_monotone_in_threshold_on_solved_grid(self, solved_instance):
        sub, scene, sol = solved_instance
        grid = lc.eval_grid(lc.build_polynomial(sol.q, sub), 256)
        counts = [lc.extract_peaks(grid, t).R for t in (0.5, 0.9, 0.99, 0.999)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_solved_instance_recovers_planted_shift(self, solved_instance):
        sub, scene, sol = solved_instance
        grid = lc.eval_grid(lc.build_polynomial(sol.q, sub), 500)
        est = lc.extract_peaks(grid, 1 - 1e-3)
        assert est.R == 1
        true = scene.shifts[0].as_tuple()
        assert md.wrap_distance(est.shifts[0].as_tuple(), true) <= 1 / 500 + 1e-12


# ---------------------------------------------------------------------------
# feasibility diagnostic
# ---------------------------------------------------------------------------

class TestFeasibilitySup:
    def test_zero_grid(self):
        assert lc.feasibility_sup(np.zeros((8, 8))) == 0.0

    def test_solved_dual_is_feasible(self, solved_instance):
        sub, scene, sol = solved_instance
        grid = lc.eval_grid(lc.build_polynomial(sol.q, sub), 512)
        assert lc.feasibility_sup(grid) <= 1 + 1e-4

    def test_scaling_the_dual_scales_the_sup(self, solved_instance):
        sub, scene, sol = solved_instance
        g1 = lc.eval_grid(lc.build_polynomial(sol.q, sub), 128)
        g2 = lc.eval_grid(lc.build_polynomial(2.0 * sol.q, sub), 128)
        assert lc.feasibility_sup(g2) == pytest.approx(
            2 * lc.feasibility_sup(g1), rel=1e-9)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

class TestFileFormats:
    def test_grid_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        grid = rng.normal(size=(33, 33)) ** 2
        path = tmp_path / "grid.bin"
        lc.save_grid(grid, path, meta={"L": 7, "K": 1, "seed": 5})
        back, header = lc.load_grid(path)
        assert np.array_equal(back, grid)
        assert header["G"] == 33
        assert header["L"] == 7 and header["K"] == 1 and header["seed"] == 5
        raw = json.loads((tmp_path / "grid.json").read_text())
        assert raw == header

    def test_payload_length_mismatch_is_detected(self, tmp_path):
        path = tmp_path / "grid.bin"
        lc.save_grid(np.zeros((4, 4)), path)
        with open(path, "ab") as fh:
            fh.write(b"\x00" * 8)
        with pytest.raises(ValueError, match="payload"):
            lc.load_grid(path)

    def test_peaks_csv_round_trips_floats(self, tmp_path):
        grid = np.zeros((64, 64))
        grid[10, 20] = 0.99
        grid[40, 50] = 0.95
        est = lc.extract_peaks(grid, 0.9)
        path = tmp_path / "peaks.csv"
        lc.write_peaks_csv(est, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["tau", "f", "peak_value"]
        assert len(rows) == 1 + est.R
        assert float(rows[1][0]) == est.shifts[0].tau
        assert float(rows[1][2]) == est.peak_values[0]
