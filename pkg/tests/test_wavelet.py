import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from woit.core import DepthBounds
from woit.wavelet import (EPS_Z, TouchCounter, WaveletBuffer, add_interface,
                          build_into, cell_values, cells_raw_batch, evaluate_absorbance,
                          evaluate_visibility, interp_absorbance_batch, normalize_depth,
                          normalize_depth_array, projection_oracle, psi_integral,
                          total_absorbance_batch)

PLANE_A = 0.2876820724517809  # -ln(0.75)


class TestNormalizeDepth:
    def test_degenerate_bounds_center(self):
        assert normalize_depth(1.0, DepthBounds(1.0, 1.0)) == pytest.approx(0.5, abs=1e-9)

    def test_near_edge_is_almost_zero(self):
        z = normalize_depth(0.0, DepthBounds(0.0, 100.0))
        assert 0.0 <= z < 1e-3

    def test_midpoint(self):
        assert normalize_depth(1.0, DepthBounds(0.0, 2.0)) == pytest.approx(0.5, abs=1e-12)

    def test_far_stays_inside_unit_interval(self):
        assert normalize_depth(2.0, DepthBounds(0.0, 2.0)) < 1.0

    def test_empty_bounds_error(self):
        with pytest.raises(ValueError, match="no transparent coverage"):
            normalize_depth(1.0, DepthBounds.empty())

    def test_array_form_matches_scalar(self, rng):
        near = rng.uniform(0.0, 5.0, 64)
        far = near + rng.uniform(0.0, 5.0, 64)
        x = near + (far - near) * rng.uniform(0.0, 1.0, 64)
        za = normalize_depth_array(x, near, far)
        for i in range(64):
            assert za[i] == pytest.approx(
                normalize_depth(float(x[i]), DepthBounds(float(near[i]), float(far[i]))),
                abs=1e-15)


class TestPsiIntegral:
    def test_peak_of_mother_bump(self):
        assert psi_integral(0, 0, 0.5) == pytest.approx(0.5)

    def test_level_one_descending_branch(self):
        assert psi_integral(1, 0, 0.25) == pytest.approx(2.0 ** -0.5 * 0.5)
        assert abs(psi_integral(1, 0, 0.25) - 0.353553) < 1e-6

    def test_locality(self):
        assert psi_integral(2, 1, 0.1) == 0.0
        assert psi_integral(2, 1, 0.6) == 0.0
        assert psi_integral(2, 1, 0.25) == 0.0  # support boundary

    def test_invalid_index_rejected(self):
        with pytest.raises(ValueError):
            psi_integral(2, 4, 0.5)
        with pytest.raises(ValueError):
            psi_integral(-1, 0, 0.5)
        with pytest.raises(ValueError):
            psi_integral(1, 0, 1.5)

    @given(n=st.integers(0, 6), x=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_nonnegative_and_bounded(self, n, x):
        for k in range(1 << n):
            v = psi_integral(n, k, x)
            assert 0.0 <= v <= 2.0 ** (-0.5 * n) * 0.5 + 1e-12


class TestAddInterface:
    def test_hand_rank0(self):
        buf = WaveletBuffer.zeros(0)
        add_interface(buf, 0.5, PLANE_A)
        assert np.allclose(buf.coeffs[0], 0.143841, atol=1e-6)
        assert np.allclose(buf.coeffs[1], -0.143841, atol=1e-6)

    def test_zero_absorbance_counts_but_changes_nothing(self):
        buf = WaveletBuffer.zeros(3)
        c = TouchCounter()
        touched = add_interface(buf, 0.3, 0.0, c)
        assert touched == 5 and c.per_insert == 5
        assert np.all(buf.coeffs == 0.0)

    def test_rank3_touches_five_of_sixteen_slots(self):
        buf = WaveletBuffer.zeros(3)
        add_interface(buf, 0.37, 1.0)
        assert buf.slots == 16
        assert np.count_nonzero(np.any(buf.coeffs != 0.0, axis=1)) == 5

    def test_rejects_bad_inputs(self):
        buf = WaveletBuffer.zeros(1)
        with pytest.raises(ValueError):
            add_interface(buf, 1.0, 0.1)
        with pytest.raises(ValueError):
            add_interface(buf, 0.5, -0.1)

    @given(seed=st.integers(0, 2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_order_independence(self, seed):
        rng = np.random.default_rng(seed)
        pts = [(float(rng.uniform(0, 1)), float(rng.uniform(0, 2))) for _ in range(10)]
        a = WaveletBuffer.zeros(4)
        b = WaveletBuffer.zeros(4)
        for z, v in pts:
            add_interface(a, z, v)
        for z, v in reversed(pts):
            add_interface(b, z, v)
        assert np.allclose(a.coeffs, b.coeffs, atol=1e-6)

    def test_sign_theorem_fuzz(self, rng):
        for _ in range(100):
            buf = WaveletBuffer.zeros(int(rng.integers(0, 6)))
            for _ in range(int(rng.integers(1, 40))):
                add_interface(buf, float(rng.uniform(0, 1)), rng.uniform(0, 3.0, 3))
            assert buf.sign_violations() == 0


class TestProjectionOracle:
    def test_empty_is_zero(self):
        assert np.all(projection_oracle([], 3).coeffs == 0.0)

    def test_single_interface_matches_closed_form(self):
        buf = WaveletBuffer.zeros(0)
        add_interface(buf, 0.5, PLANE_A)
        orc = projection_oracle([(0.5, PLANE_A)], 0)
        assert np.abs(orc.coeffs - buf.coeffs).max() < 1e-4

    def test_random_streams_match(self, rng):
        for _ in range(10):
            pts = [(float(rng.uniform(0, 1)), float(rng.uniform(0, 1))) for _ in range(10)]
            buf = WaveletBuffer.zeros(4)
            for z, a in pts:
                add_interface(buf, z, a)
            orc = projection_oracle(pts, 4)
            assert np.abs(orc.coeffs - buf.coeffs).max() < 1e-4


class TestEvaluate:
    def test_zero_buffer(self):
        buf = WaveletBuffer.zeros(2)
        assert tuple(evaluate_absorbance(buf, 0.4)) == (0.0, 0.0, 0.0)
        assert tuple(evaluate_visibility(buf, 0.4)) == (1.0, 1.0, 1.0)

    @pytest.mark.parametrize("rank", range(6))
    def test_single_dyadic_plane_staircase(self, rank):
        buf = WaveletBuffer.zeros(rank)
        add_interface(buf, 0.5, PLANE_A)
        cells = cell_values(buf)
        m = buf.slots
        assert np.allclose(cells[: m // 2], 0.0, atol=1e-12)
        assert np.allclose(cells[m // 2:], PLANE_A, atol=1e-12)
        # visibility at cell centers left and right of the step
        left = evaluate_visibility(buf, (m // 4 * 2 + 1) / (2 * m))
        assert np.allclose(left.as_array(), 1.0, atol=1e-12)
        right = evaluate_visibility(buf, 1.0 - 1.0 / (2 * m))
        assert np.allclose(right.as_array(), 0.75, atol=1e-4)

    def test_cell_centers_match_oracle(self, rng):
        for _ in range(5):
            pts = [(float(rng.uniform(0, 1)), float(rng.uniform(0, 0.5))) for _ in range(12)]
            buf = WaveletBuffer.zeros(3)
            for z, a in pts:
                add_interface(buf, z, a)
            orc = projection_oracle(pts, 3)
            m = buf.slots
            for c in range(m):
                center = (c + 0.5) / m
                got = evaluate_absorbance(buf, center).as_array()
                want = evaluate_absorbance(orc, center).as_array()
                assert np.abs(got - want).max() < 1e-4

    def test_monotone_for_fog_buffer(self):
        # dense uniform micro-steps emulate fog
        buf = WaveletBuffer.zeros(3)
        for i in range(64):
            add_interface(buf, (i + 0.5) / 64, 0.02)
        vs = [evaluate_visibility(buf, z).r for z in np.linspace(0.0, 1.0 - EPS_Z, 512)]
        assert all(b <= a + 1e-9 for a, b in zip(vs, vs[1:]))

    def test_dyadic_step_exact_at_all_centers(self):
        # steps on cell boundaries are represented exactly by the staircase
        rank = 4
        m = 1 << (rank + 1)
        for cell_edge in (4, 13, 27):
            buf = WaveletBuffer.zeros(rank)
            add_interface(buf, cell_edge / m, 0.9)
            cells = cell_values(buf)
            assert np.allclose(cells[:cell_edge], 0.0, atol=1e-12)
            assert np.allclose(cells[cell_edge:], 0.9, atol=1e-12)

    def test_eval_touch_count(self):
        buf = WaveletBuffer.zeros(3)
        add_interface(buf, 0.3, 1.0)
        c = TouchCounter()
        evaluate_absorbance(buf, 0.4, c)  # interior: two cell reconstructions
        assert c.evals == 2 and c.per_eval == 5
        c2 = TouchCounter()
        evaluate_absorbance(buf, 0.0, c2)  # clamped end: one reconstruction
        assert c2.evals == 1 and c2.per_eval == 5


class TestBatchKernels:
    def test_build_matches_scalar(self, rng):
        rank = 4
        coeffs = np.zeros((3, 1 << (rank + 1), 3))
        pix = rng.integers(0, 3, 40)
        z = rng.uniform(0, 1, 40)
        a = rng.uniform(0, 1, (40, 3))
        c = TouchCounter()
        build_into(coeffs, pix, z, a, rank, c)
        assert c.per_insert == rank + 2
        refs = [WaveletBuffer.zeros(rank) for _ in range(3)]
        for p, zz, aa in zip(pix, z, a):
            add_interface(refs[p], float(zz), aa)
        for p in range(3):
            assert np.allclose(coeffs[p], refs[p].coeffs, atol=1e-12)

    def test_interp_matches_scalar(self, rng):
        rank = 3
        coeffs = np.zeros((2, 16, 3))
        build_into(coeffs, np.zeros(20, dtype=np.int64), rng.uniform(0, 1, 20),
                   rng.uniform(0, 1, (20, 3)), rank)
        ref = WaveletBuffer(rank, coeffs[0].copy())
        zq = rng.uniform(0, 1, 50)
        got = interp_absorbance_batch(coeffs, np.zeros(50, dtype=np.int64), zq, rank)
        for i, z in enumerate(zq):
            assert np.allclose(got[i], evaluate_absorbance(ref, float(z)).as_array(),
                               atol=1e-12)

    def test_total_absorbance_telescopes(self, rng):
        rank = 5
        coeffs = np.zeros((1, 1 << (rank + 1), 3))
        m = 1 << (rank + 1)
        total = np.zeros(3)
        # interfaces on or left of the last interior boundary telescope exactly
        for _ in range(30):
            z = float(rng.uniform(0, (m - 1) / m))
            a = rng.uniform(0, 1, 3)
            build_into(coeffs, np.zeros(1, dtype=np.int64), np.array([z]),
                       a[None, :], rank)
            total += a
        got = total_absorbance_batch(coeffs, rank)[0]
        assert np.allclose(got, total, atol=1e-9)

    def test_cells_raw_matches_cell_values(self, rng):
        rank = 2
        coeffs = np.zeros((1, 8, 3))
        build_into(coeffs, np.zeros(9, dtype=np.int64), rng.uniform(0, 1, 9),
                   rng.uniform(0, 1, (9, 3)), rank)
        ref = cell_values(WaveletBuffer(rank, coeffs[0].copy()))
        cells = np.arange(8, dtype=np.int64)
        got = cells_raw_batch(coeffs, np.zeros(8, dtype=np.int64), cells, rank)
        assert np.allclose(got, ref, atol=1e-12)
