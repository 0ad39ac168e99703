"""Innovation fields: sampling, coupling, dependence measure, truncation."""

import math

import numpy as np
import pytest

from fbslab import (
    ConfigurationError,
    UnsupportedLinkError,
    coupled_pair,
    delta_filter,
    dependence_measure,
    filter_from_pairs,
    innovation_model,
    long_run_variance,
    m_truncate,
    noise_law,
    sample_field,
    unit_box,
)
from fbslab.innovations import read_field, truncation_l2_error, write_field
from fbslab.lattice import Box
from fbslab.rng import spawn


def model_2d(coeffs=((1.0, (0, 0)),), link="linear", noise="gaussian"):
    offsets = [list(o) for _, o in coeffs]
    vals = [c for c, _ in coeffs]
    return innovation_model(filter_from_pairs(offsets, vals), link, noise)


class TestNoiseLaws:
    @pytest.mark.parametrize("name", ["gaussian", "rademacher", "exponential"])
    def test_mean_zero_unit_variance(self, name):
        law = noise_law(name)
        x = law.sample(spawn(1, 0), 200_000)
        assert abs(x.mean()) < 4.0 / math.sqrt(len(x))
        assert abs(x.var() - 1.0) < 0.02

    def test_gaussian_diff_norm_p2(self):
        assert noise_law("gaussian").diff_p_norm(2.0) == pytest.approx(math.sqrt(2.0), rel=1e-14)

    @pytest.mark.parametrize("name", ["gaussian", "rademacher", "exponential"])
    @pytest.mark.parametrize("p", [2.0, 4.0])
    def test_diff_norms_vs_monte_carlo(self, name, p):
        law = noise_law(name)
        rng = spawn(2, 0)
        d = law.sample(rng, 400_000) - law.sample(rng, 400_000)
        pw = np.abs(d) ** p
        est = pw.mean() ** (1.0 / p)
        se = pw.std(ddof=1) / math.sqrt(len(d)) / (p * pw.mean() ** (1.0 - 1.0 / p))
        assert abs(est - law.diff_p_norm(p)) < 5.0 * se + 1e-3

    def test_unknown_law(self):
        with pytest.raises(ConfigurationError):
            noise_law("cauchy")


class TestSampleField:
    def test_identity_filter_returns_noise(self):
        m = model_2d()
        cp = coupled_pair(m, Box((0, 0), (4, 4)), seed=3)
        assert np.array_equal(cp.base.values, cp.tape.values)

    def test_two_tap_filter_moments(self):
        # psi = d0 + d_{e1}: Var X = 2, lag-e1 covariance = 1
        m = model_2d(((1.0, (0, 0)), (1.0, (1, 0))))
        x = sample_field(m, unit_box((400, 400)), seed=5).values
        n = x.size
        assert abs(x.var() - 2.0) < 5.0 * 2.0 * math.sqrt(2.0 / n) * 3
        lag = (x[1:, :] * x[:-1, :]).mean()
        assert abs(lag - 1.0) < 0.05

    def test_abs_link_centering(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))), link="abs")
        x = sample_field(m, unit_box((1000, 1000)), seed=9).values
        mc_sigma = x.std() / 1000.0
        assert abs(x.mean()) < 3.0 * mc_sigma

    def test_rademacher_centering_enumeration(self):
        # E |e1 + 0.5 e2| over signs = (1.5 + 0.5) / 2 = 1
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))), link="abs", noise="rademacher")
        assert m.centering == pytest.approx(1.0, abs=1e-14)

    def test_fft_and_direct_paths_agree(self):
        rng = np.random.default_rng(31)
        for d in (1, 2):
            offsets = [tuple(int(v) for v in rng.integers(-2, 3, size=d)) for _ in range(5)]
            coeffs = rng.standard_normal(5)
            m = innovation_model(filter_from_pairs([list(o) for o in offsets], coeffs))
            box = unit_box((40,) * d)
            a = sample_field(m, box, seed=8, method="direct").values
            b = sample_field(m, box, seed=8, method="fft").values
            assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(a)))

    def test_determinism(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 1))))
        a = sample_field(m, unit_box((20, 20)), seed=123).values
        b = sample_field(m, unit_box((20, 20)), seed=123).values
        c = sample_field(m, unit_box((20, 20)), seed=124).values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestCoupling:
    def test_identity_filter_differs_only_at_origin(self):
        m = model_2d()
        cp = coupled_pair(m, Box((-3, -3), (3, 3)), seed=4)
        diff = cp.base.values - cp.starred.values
        nz = {tuple(int(v) - 3 for v in s) for s in np.argwhere(diff != 0.0)}
        assert nz <= {(0, 0)}

    def test_locality_exact(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0)), (-0.25, (0, 1))), link="tanh")
        for seed in range(20):
            cp = coupled_pair(m, Box((-3, -3), (3, 3)), seed=seed)
            diff = cp.base.values - cp.starred.values
            for s in np.argwhere(diff != 0.0):
                site = tuple(int(v) - 3 for v in s)
                assert site in {(0, 0), (1, 0), (0, 1)}

    def test_linear_coupling_closed_form(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))))
        cp = coupled_pair(m, Box((-2, -2), (2, 2)), seed=77)
        d0 = cp.tape.at((0, 0)) - cp.tape_star.at((0, 0))
        diff = cp.base.values - cp.starred.values
        expect = np.zeros_like(diff)
        expect[cp.base.box.index((0, 0))] = d0
        expect[cp.base.box.index((1, 0))] = 0.5 * d0
        assert np.allclose(diff, expect, atol=1e-15)

    def test_lipschitz_pointwise_bound(self):
        m = model_2d(((1.0, (0, 0)), (0.7, (1, 0))), link="abs")
        for seed in range(2000):
            cp = coupled_pair(m, Box((-1, -1), (2, 1)), seed=seed)
            d0 = abs(cp.tape.at((0, 0)) - cp.tape_star.at((0, 0)))
            diff = np.abs(cp.base.values - cp.starred.values)
            assert diff[cp.base.box.index((0, 0))] <= 1.0 * d0 + 1e-12
            assert diff[cp.base.box.index((1, 0))] <= 0.7 * d0 + 1e-12

    def test_region_must_cover_origin(self):
        m = model_2d()
        with pytest.raises(ConfigurationError):
            coupled_pair(m, unit_box((4, 4)), seed=1)


class TestDependenceMeasure:
    def test_identity_gaussian_p2(self):
        m = model_2d()
        dep = dependence_measure(m, 2.0)
        assert dep.is_exact
        assert dep.delta_p == pytest.approx(math.sqrt(2.0), rel=1e-14)

    def test_linear_closed_form(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))))
        dep = dependence_measure(m, 2.0)
        assert dep.delta_p == pytest.approx(1.5 * math.sqrt(2.0), rel=1e-14)
        assert dep.sigma_sq == pytest.approx(2.25, rel=1e-14)

    def test_zero_filter(self):
        m = innovation_model(filter_from_pairs([], [], dim=2))
        assert dependence_measure(m, 2.0).delta_p == 0.0

    def test_abs_link_single_site_oracle(self):
        # X - X* = |e0| - |e0*|; E(|a|-|b|)^2 = 2 - 2 (E|a|)^2 = 2(1 - 2/pi)
        m = model_2d(link="abs")
        dep = dependence_measure(m, 2.0, trials=200_000, seed=6)
        target = math.sqrt(2.0 * (1.0 - 2.0 / math.pi))
        assert not dep.is_exact
        assert abs(dep.delta_p - target) < 4.0 * dep.stderr + 1e-3

    def test_norm_monotone_in_p(self):
        models = [
            model_2d(((1.0, (0, 0)), (0.5, (1, 0)))),
            model_2d(((1.0, (0, 0)), (-0.3, (0, 1))), link="abs"),
            model_2d(((0.8, (0, 0)), (0.4, (1, 1))), link="tanh", noise="exponential"),
        ]
        for m in models:
            d2 = dependence_measure(m, 2.0, trials=50_000, seed=1)
            d4 = dependence_measure(m, 4.0, trials=50_000, seed=1)
            slack = 3.0 * (d2.stderr + d4.stderr)
            assert d2.delta_p <= d4.delta_p + slack

    def test_small_trials_warning(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))), link="abs")
        dep = dependence_measure(m, 4.0, trials=200, seed=2, rel_err_target=0.001)
        assert dep.warning is not None

    def test_p_below_two_rejected(self):
        with pytest.raises(ConfigurationError):
            dependence_measure(model_2d(), 1.5)


class TestLongRunVariance:
    def test_identity(self):
        assert long_run_variance(model_2d()).value == 1.0

    def test_two_taps_brute_force(self):
        m = model_2d(((1.0, (0, 0)), (1.0, (1, 0))))
        lrv = long_run_variance(m)
        # brute-force lag sum: sum_k sum_j psi_j psi_{j+k} over the overlap range
        taps = {(0, 0): 1.0, (1, 0): 1.0}
        brute = 0.0
        for k1 in range(-2, 3):
            for k2 in range(-2, 3):
                brute += sum(
                    taps.get((j1, j2), 0.0) * taps.get((j1 + k1, j2 + k2), 0.0)
                    for j1 in range(-1, 3)
                    for j2 in range(-1, 3)
                )
        assert lrv.value == pytest.approx(4.0, rel=1e-14)
        assert lrv.value == pytest.approx(brute, rel=1e-12)

    def test_zero_sum_filter_degenerate(self):
        m = model_2d(((1.0, (0, 0)), (-1.0, (1, 0))))
        assert long_run_variance(m).value == pytest.approx(0.0, abs=1e-15)

    def test_abs_link_iid_oracle(self):
        # sigma^2 = Var|Z| = 1 - 2/pi for the single-site abs link
        m = model_2d(link="abs")
        lrv = long_run_variance(m, trials=150_000, seed=3)
        assert not lrv.is_exact
        assert abs(lrv.value - (1.0 - 2.0 / math.pi)) < 4.0 * lrv.stderr


class TestMTruncation:
    def test_window_covering_support_is_identity(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))))
        assert m_truncate(m, 2 * m.r_psi) is m

    def test_window_zero_keeps_origin_tap(self):
        m = model_2d(((1.0, (0, 0)), (1.0, (1, 0))))
        mt = m_truncate(m, 0)
        offs, coeffs = mt.filter.offsets_and_coeffs()
        assert offs == [(0, 0)] and coeffs == [1.0]

    def test_l2_error_closed_form(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0)), (0.25, (2, 2))))
        for mm in (0, 2, 4, 6):
            mt = m_truncate(m, mm)
            inside = mt.filter.sum_sq
            expect = math.sqrt(m.filter.sum_sq - inside)
            assert truncation_l2_error(m, mm) == pytest.approx(expect, abs=1e-10)
        assert truncation_l2_error(m, 2) == pytest.approx(0.25, abs=1e-12)
        assert truncation_l2_error(m, 4) == 0.0

    def test_decay_to_zero(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0)), (0.25, (2, 2)), (0.1, (-3, 1))))
        errs = [truncation_l2_error(m, mm) for mm in (0, 2, 4, 6, 8)]
        assert all(a >= b for a, b in zip(errs, errs[1:]))
        assert errs[-1] == 0.0

    def test_lipschitz_unsupported(self):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))), link="abs")
        with pytest.raises(UnsupportedLinkError):
            m_truncate(m, 2)


class TestFieldExport:
    def test_roundtrip(self, tmp_path):
        m = model_2d(((1.0, (0, 0)), (0.5, (1, 0))))
        f = sample_field(m, unit_box((6, 4)), seed=12)
        path = tmp_path / "field.bin"
        write_field(path, f, seed=12, model=m)
        g, meta = read_field(path)
        assert np.array_equal(f.values, g.values)
        assert g.box == f.box
        assert meta["seed"] == 12
        assert meta["model_hash"] == m.model_hash()
        assert meta["dtype"] == "float64-le" and meta["order"] == "C"

    def test_bytes_are_little_endian_row_major(self, tmp_path):
        from fbslab.lattice import Field

        f = Field(Box((1, 1), (1, 2)), np.array([[1.5, -2.0]]))
        path = tmp_path / "f.bin"
        write_field(path, f)
        raw = path.read_bytes()
        assert raw == np.array([1.5, -2.0]).astype("<f8").tobytes()
