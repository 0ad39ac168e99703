"""Partial sums, dual-route consistency, blocking diagnostics, sigma_{m,l}."""

import math

import numpy as np
import pytest

from fbslab import (
    ConfigurationError,
    DimensionMismatchError,
    UnsupportedLinkError,
    axis_kernel,
    axis_weight_table,
    blocking_decomposition,
    delta_filter,
    filter_from_pairs,
    innovation_model,
    linear_field,
    partial_sum_process,
    product_kernel,
    sample_field,
    sigma_ml,
    tensor_grid_sums,
    weight_table,
    weighted_sum,
)
from fbslab.lattice import Box, Field
from fbslab.sums import inflated_box, write_replica_csv


def random_product_kernel(rng, d, max_radius=3):
    axes = []
    for _ in range(d):
        radius = int(rng.integers(1, max_radius + 1))
        lo = int(rng.integers(-radius, 1))
        size = int(rng.integers(1, radius + 2))
        axes.append(axis_kernel("finite_support", taps=rng.standard_normal(size), lo=lo))
    return product_kernel(axes)


def brute_linear_field(kernel, x, n):
    """Site-by-site evaluation of xi_j = sum_i a_{j-i} X_i from the definition."""
    kbox = kernel.coefficient_box()
    lo = tuple(ax.lo for ax in kernel.axes)
    out = np.zeros(n)
    for j_idx in np.ndindex(*n):
        j = tuple(v + 1 for v in j_idx)
        total = 0.0
        for i_idx in np.ndindex(*x.box.shape):
            i = tuple(v + l for v, l in zip(i_idx, x.box.lo))
            k = tuple(jq - iq - lq for jq, iq, lq in zip(j, i, lo))
            if all(0 <= kq < s for kq, s in zip(k, kbox.shape)):
                total += kbox[k] * x.values[i_idx]
        out[j_idx] = total
    return out


class TestLinearField:
    def test_identity_kernel(self):
        pk = product_kernel([axis_kernel("identity")] * 2)
        m = innovation_model(delta_filter(2))
        x = sample_field(m, inflated_box(pk, (6, 6)), seed=2)
        xi = linear_field(pk, x)
        assert np.array_equal(xi.values, x.values)

    def test_scaled_delta(self):
        pk = product_kernel(
            [axis_kernel("finite_support", taps=[2.0]), axis_kernel("identity")]
        )
        m = innovation_model(delta_filter(2))
        x = sample_field(m, inflated_box(pk, (5, 5)), seed=3)
        xi = linear_field(pk, x)
        assert np.allclose(xi.values, 2.0 * x.values)

    def test_brute_force_small_2d(self):
        rng = np.random.default_rng(17)
        pk = random_product_kernel(rng, 2, max_radius=1)
        m = innovation_model(delta_filter(2))
        n = (4, 4)
        x = sample_field(m, inflated_box(pk, n), seed=4)
        xi = linear_field(pk, x)
        assert np.allclose(xi.values, brute_linear_field(pk, x, n), atol=1e-12)

    def test_region_mismatch(self):
        pk = product_kernel([axis_kernel("finite_support", taps=[1.0, 0.5])] * 2)
        m = innovation_model(delta_filter(2))
        x = sample_field(m, Box((1, 1), (4, 4)), seed=5)
        with pytest.raises(DimensionMismatchError):
            linear_field(pk, x)

    def test_fft_matches_direct(self):
        rng = np.random.default_rng(23)
        axes = [
            axis_kernel("fractional_gamma", 0.3, radius=60),
            axis_kernel("finite_support", taps=rng.standard_normal(7), lo=-3),
        ]
        pk = product_kernel(axes)
        m = innovation_model(delta_filter(2))
        x = sample_field(m, inflated_box(pk, (30, 20)), seed=6)
        a = linear_field(pk, x, method="direct").values
        b = linear_field(pk, x, method="fft").values
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(a)))


class TestPartialSumProcess:
    def test_full_box_and_zero_floor(self):
        pk = product_kernel([axis_kernel("identity")] * 2)
        m = innovation_model(delta_filter(2))
        x = sample_field(m, inflated_box(pk, (5, 5)), seed=7)
        xi = linear_field(pk, x)
        psp = partial_sum_process(xi, [(1.0, 1.0), (0.1, 0.9), (0.0, 1.0)])
        assert psp.values[(1.0, 1.0)] == pytest.approx(xi.values.sum(), rel=1e-12)
        assert psp.values[(0.1, 0.9)] == 0.0  # floor(5 * 0.1) = 0
        assert psp.values[(0.0, 1.0)] == 0.0

    def test_random_point_direct_sum(self):
        rng = np.random.default_rng(29)
        xi = Field(Box((1, 1), (5, 5)), rng.standard_normal((5, 5)))
        psp = partial_sum_process(xi, [(0.6, 0.4)])
        assert psp.values[(0.6, 0.4)] == pytest.approx(xi.values[:3, :2].sum(), rel=1e-12)

    def test_rejects_bad_points(self):
        xi = Field(Box((1,), (4,)), np.ones(4))
        with pytest.raises(ConfigurationError):
            partial_sum_process(xi, [(1.5,)])

    def test_monotone_in_each_coordinate(self):
        rng = np.random.default_rng(41)
        xi = Field(Box((1, 1), (8, 8)), np.abs(rng.standard_normal((8, 8))))
        grid = [(a / 8, b / 8) for a in range(1, 9) for b in range(1, 9)]
        psp = partial_sum_process(xi, grid)
        for a in range(1, 8):
            for b in range(1, 9):
                assert psp.values[(a / 8, b / 8)] <= psp.values[((a + 1) / 8, b / 8)]

    def test_prefix_route_equals_weight_route(self):
        # S_n(t) from prefix sums == sum_j b_{nt,j} X_j from the weight tables
        rng = np.random.default_rng(37)
        for _ in range(12):
            d = int(rng.integers(1, 3))
            pk = random_product_kernel(rng, d)
            m = innovation_model(delta_filter(d))
            n = tuple(int(v) for v in rng.integers(4, 17, size=d))
            x = sample_field(m, inflated_box(pk, n), seed=int(rng.integers(1 << 30)))
            xi = linear_field(pk, x)
            pts = [tuple(float(t) for t in rng.uniform(0.2, 1.0, size=d)) for _ in range(3)]
            psp = partial_sum_process(xi, pts)
            for t in pts:
                floors = tuple(int(math.floor(nq * tq)) for nq, tq in zip(n, t))
                tabs = [[axis_weight_table(ax, mq)] for ax, mq in zip(pk.axes, floors)]
                direct = float(tensor_grid_sums(x, tabs).reshape(()))
                scale = max(abs(direct), 1e-9)
                assert abs(psp.values[t] - direct) / scale < 1e-8

    def test_weighted_sum_is_full_box_sum(self):
        rng = np.random.default_rng(43)
        pk = random_product_kernel(rng, 2)
        m = innovation_model(delta_filter(2))
        n = (9, 7)
        x = sample_field(m, inflated_box(pk, n), seed=8)
        xi = linear_field(pk, x)
        table = weight_table(pk, n)
        assert weighted_sum(x, table) == pytest.approx(xi.values.sum(), rel=1e-10)


class TestBlockingDecomposition:
    def setup_method(self):
        self.pk = product_kernel([axis_kernel("identity")] * 2)
        self.model = innovation_model(
            filter_from_pairs([[0, 0], [1, 0]], [1.0, 0.5])
        )

    def test_full_window_kills_ma_error(self):
        diag = blocking_decomposition(self.pk, self.model, (32, 32), m=2, l=8, replicas=50, seed=1)
        assert diag.error_ma == 0.0

    def test_identity_kernel_aligned_blocks_kill_avg_error(self):
        diag = blocking_decomposition(self.pk, self.model, (32, 32), m=0, l=4, replicas=50, seed=2)
        assert diag.error_avg == pytest.approx(0.0, abs=1e-12)

    def test_blocking_error_respects_bound(self):
        diag = blocking_decomposition(self.pk, self.model, (64, 64), m=2, l=8, replicas=300, seed=3)
        assert diag.error_blk <= diag.blocking_bound + 3.0 * diag.error_blk_stderr

    def test_invalid_blocking(self):
        with pytest.raises(ConfigurationError):
            blocking_decomposition(self.pk, self.model, (16, 16), m=3, l=4, replicas=10, seed=1)

    def test_lipschitz_rejected(self):
        m = innovation_model(filter_from_pairs([[0, 0]], [1.0]), "abs")
        with pytest.raises(UnsupportedLinkError):
            blocking_decomposition(self.pk, m, (16, 16), m=0, l=4, replicas=10, seed=1)

    def test_ma_error_decreases_in_m(self):
        model = innovation_model(
            filter_from_pairs([[0], [1], [2], [-2]], [1.0, 0.5, 0.25, 0.25])
        )
        pk = product_kernel([axis_kernel("fractional_gamma", 0.25, radius=256)])
        errs = [
            blocking_decomposition(pk, model, (128,), m=mm, l=16, replicas=400, seed=5).error_ma
            for mm in (0, 2, 4)
        ]
        assert errs[0] > errs[1] > errs[2] == 0.0

    def test_avg_error_decreases_in_n(self):
        pk = product_kernel([axis_kernel("fractional_gamma", 0.25, radius=512)])
        errs = [
            blocking_decomposition(pk, self._model_1d(), (n,), m=2, l=8, replicas=400, seed=6).error_avg
            for n in (64, 512)
        ]
        assert errs[1] < errs[0]

    def test_blk_error_decreases_in_l(self):
        pk = product_kernel([axis_kernel("fractional_gamma", 0.25, radius=512)])
        errs = [
            blocking_decomposition(pk, self._model_1d(), (256,), m=0, l=l, replicas=400, seed=7).error_blk
            for l in (4, 32)
        ]
        assert errs[1] < errs[0]

    @staticmethod
    def _model_1d():
        return innovation_model(filter_from_pairs([[0], [1]], [1.0, 0.5]))


class TestSigmaML:
    def test_iid_closed_form(self):
        m1 = innovation_model(delta_filter(1))
        assert sigma_ml(m1, 1, 8) == pytest.approx(0.75, abs=1e-15)
        m2 = innovation_model(delta_filter(2))
        assert sigma_ml(m2, 2, 64) == pytest.approx((1 - 3 / 64) ** 2, abs=1e-15)

    def test_limit_is_long_run_variance(self):
        model = innovation_model(filter_from_pairs([[0], [1]], [1.0, 0.5]))
        sigma2 = 2.25
        assert abs(sigma_ml(model, 2, 4096) - sigma2) < 1e-2 * sigma2
        vals = [sigma_ml(model, 2, l) for l in (16, 64, 256, 1024)]
        devs = [abs(v - sigma2) for v in vals]
        assert all(a > b for a, b in zip(devs, devs[1:]))

    def test_separable_filter_factorizes(self):
        # psi(i,j) = u(i) v(j) makes sigma_{m,l}^2 the product of the 1-d values
        u = [1.0, 0.5]
        v = [1.0, -0.25, 0.1]
        offs_u = [[0], [1]]
        offs_v = [[0], [1], [2]]
        m_u = innovation_model(filter_from_pairs(offs_u, u))
        m_v = innovation_model(filter_from_pairs(offs_v, v))
        offs2 = [[a[0], b[0]] for a in offs_u for b in offs_v]
        taps2 = [cu * cv for cu in u for cv in v]
        m_uv = innovation_model(filter_from_pairs(offs2, taps2))
        got = sigma_ml(m_uv, 4, 32)
        expect = sigma_ml(m_u, 4, 32) * sigma_ml(m_v, 4, 32)
        assert got == pytest.approx(expect, rel=1e-12)

    def test_preconditions(self):
        m = innovation_model(delta_filter(1))
        with pytest.raises(ConfigurationError):
            sigma_ml(m, 4, 5)
        with pytest.raises(UnsupportedLinkError):
            sigma_ml(innovation_model(delta_filter(1), "abs"), 0, 4)


class TestReplicaCsv:
    def test_roundtrip(self, tmp_path):
        rows = np.array([[1.0, -2.5], [0.25, 3.0]])
        path = tmp_path / "replicas.csv"
        write_replica_csv(path, [(0.5, 0.5), (1.0, 1.0)], rows)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith('"t=0.5,0.5"')
        parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.array_equal(parsed, rows)
