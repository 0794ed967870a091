import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import exact_covs
from subarray_doa.geometry import TWO_PI
from subarray_doa.simulation import (
    SampleCovSet,
    Scenario,
    ScenarioRanges,
    correlated_covariance,
    draw_scenario,
    draw_scenario_batch,
    featurize,
    load_snapshots,
    sample_covariances,
    save_snapshots,
    simulate_batch_covariances,
    synthesize_snapshots,
    unfeaturize,
)


class TestDrawScenario:
    def test_zero_sources(self, rng):
        sc = draw_scenario(0, ScenarioRanges(), rng)
        assert sc.doas.shape == (0,) and sc.source_cov.shape == (0, 0)
        assert -10.0 - 1e-9 <= sc.snr_db <= 30.0 + 1e-9

    def test_power_levels(self, rng):
        for _ in range(200):
            sc = draw_scenario(3, ScenarioRanges(), rng)
            p = np.real(np.diag(sc.source_cov))
            assert p.max() == 1.0
            assert np.all(p >= 10 ** (-0.9) - 1e-15)
            np.testing.assert_array_equal(sc.source_cov, np.diag(np.diag(sc.source_cov)))

    def test_sorted_in_field_of_view(self, rng):
        for _ in range(100):
            th = draw_scenario(4, ScenarioRanges(), rng).doas
            assert np.all(np.diff(th) >= 0) and th.min() >= 0 and th.max() < TWO_PI

    def test_doas_uniform_ks(self):
        rng = np.random.default_rng(7)
        th = np.array([draw_scenario(1, ScenarioRanges(), rng).doas[0] for _ in range(100_000)])
        assert stats.kstest(th, stats.uniform(0, TWO_PI).cdf).pvalue > 0.01

    def test_reproducible(self):
        a = draw_scenario(3, ScenarioRanges(), np.random.default_rng(5), "uniform")
        b = draw_scenario(3, ScenarioRanges(), np.random.default_rng(5), "uniform")
        np.testing.assert_array_equal(a.doas, b.doas)
        np.testing.assert_array_equal(a.source_cov, b.source_cov)
        assert a.noise_var == b.noise_var and a.rho == b.rho

    def test_fixed_correlation(self, rng):
        sc = draw_scenario(3, ScenarioRanges(min_source_power_db=0.0), rng, "fixed", rho=1.0)
        np.testing.assert_allclose(sc.source_cov, np.ones((3, 3)))

    def test_uniform_correlation_is_psd(self, rng):
        for _ in range(50):
            sc = draw_scenario(3, ScenarioRanges(), rng, "uniform")
            assert 0.0 <= sc.rho <= 1.0
            assert np.linalg.eigvalsh(sc.source_cov).min() > -1e-12

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            ScenarioRanges(snr_db=(10.0, 0.0))

    def test_fixed_snr(self, rng):
        sc = draw_scenario(2, ScenarioRanges.fixed_snr(20.0), rng)
        assert sc.noise_var == pytest.approx(0.01)

    def test_min_separation(self, rng):
        for _ in range(50):
            th = draw_scenario(3, ScenarioRanges(), rng, min_separation=0.5).doas
            gaps = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
            assert gaps.min() >= 0.5

    def test_unknown_mode(self, rng):
        with pytest.raises(ValueError):
            draw_scenario(2, ScenarioRanges(), rng, "partial")


class TestScenarioBatch:
    def test_matches_scalar_distribution(self):
        b = draw_scenario_batch(3, 20_000, ScenarioRanges(), np.random.default_rng(3))
        p = np.real(np.diagonal(b.source_cov, axis1=1, axis2=2))
        np.testing.assert_array_equal(p.max(axis=1), 1.0)
        assert np.all(np.diff(b.doas, axis=1) >= 0)
        snr = -10 * np.log10(b.noise_var)
        assert snr.min() >= -10 and snr.max() <= 30
        assert abs(snr.mean() - 10.0) < 0.5

    def test_batch_covariances_shape(self, scheme, geom, rng):
        b = draw_scenario_batch(2, 5, ScenarioRanges(), rng, "uniform")
        R = simulate_batch_covariances(b, scheme, geom, 10, rng)
        assert R.shape == (5, 4, 3, 3)
        np.testing.assert_allclose(R, np.conj(np.swapaxes(R, -1, -2)))

    def test_zero_order_batch(self, scheme, geom, rng):
        b = draw_scenario_batch(0, 4, ScenarioRanges.fixed_snr(0.0), rng)
        R = simulate_batch_covariances(b, scheme, geom, 20_000, rng)
        np.testing.assert_allclose(np.real(np.diagonal(R, axis1=-2, axis2=-1)), 1.0, atol=0.05)


class TestCorrelatedCovariance:
    def test_identity(self):
        np.testing.assert_array_equal(correlated_covariance(0.0, np.ones(3)), np.eye(3))

    def test_full_correlation_rank_one(self):
        R = correlated_covariance(1.0, np.ones(3))
        np.testing.assert_array_equal(R, np.ones((3, 3)))
        assert np.linalg.matrix_rank(R) == 1

    def test_half(self):
        np.testing.assert_allclose(correlated_covariance(0.5, np.ones(3))[1], [0.5, 1.0, 0.5])

    def test_power_scaling(self):
        R = correlated_covariance(0.5, [1.0, 4.0])
        np.testing.assert_allclose(R, [[1.0, 1.0], [1.0, 4.0]])

    @pytest.mark.parametrize("rho", [-0.1, 1.5])
    def test_out_of_range(self, rho):
        with pytest.raises(ValueError):
            correlated_covariance(rho, np.ones(3))

    @given(st.floats(0.0, 1.0), st.integers(1, 6))
    def test_psd(self, rho, L):
        R = correlated_covariance(rho, np.linspace(0.2, 1.0, L))
        assert np.linalg.eigvalsh(R).min() > -1e-12


class TestSynthesize:
    def test_silent(self, scheme, geom, rng):
        sc = Scenario(np.zeros(0), np.zeros((0, 0)), 0.0)
        np.testing.assert_array_equal(synthesize_snapshots(sc, scheme, geom, 7, rng), 0)

    def test_noise_variance(self, scheme, geom, rng):
        sc = Scenario(np.zeros(0), np.zeros((0, 0)), 4.0)
        Y = synthesize_snapshots(sc, scheme, geom, 100_000, rng)
        var = np.mean(np.abs(Y) ** 2, axis=1)
        np.testing.assert_allclose(var, 4.0, rtol=0.03)

    def test_second_moment(self, scheme, geom, rng):
        sc = Scenario(np.array([0.5, 2.0, 4.0]), correlated_covariance(0.6, [1.0, 0.5, 0.8]), 0.3)
        R = sample_covariances(synthesize_snapshots(sc, scheme, geom, 100_000, rng)).matrices
        R0 = exact_covs(sc, scheme, geom).matrices
        assert np.max(np.abs(R - R0)) < 0.05 * np.max(np.abs(R0))

    def test_shape(self, scheme, geom, rng):
        sc = draw_scenario(3, ScenarioRanges(), rng)
        assert synthesize_snapshots(sc, scheme, geom, 11, rng).shape == (4, 11, 3)

    def test_rejects_zero_snapshots(self, scheme, geom, rng):
        sc = draw_scenario(1, ScenarioRanges(), rng)
        with pytest.raises(ValueError):
            synthesize_snapshots(sc, scheme, geom, 0, rng)

    def test_rank_deficient_source(self, scheme, geom, rng):
        sc = Scenario(np.array([1.0, 2.0]), np.ones((2, 2), dtype=complex), 0.0)
        R = sample_covariances(synthesize_snapshots(sc, scheme, geom, 50, rng)).matrices
        for k in range(4):
            assert np.linalg.matrix_rank(R[k], tol=1e-9) == 1

    def test_covariance_converges(self, scheme, geom):
        sc = Scenario(np.array([0.5, 2.0, 4.0]), np.eye(3, dtype=complex), 0.1)
        R0 = exact_covs(sc, scheme, geom).matrices
        errs = []
        for N in (10, 1000, 100_000):
            R = sample_covariances(synthesize_snapshots(sc, scheme, geom, N, np.random.default_rng(0))).matrices
            errs.append(np.linalg.norm(R - R0))
        assert errs[0] > errs[1] > errs[2]


class TestSampleCovariances:
    def test_single_snapshot(self, rng):
        Y = rng.standard_normal((2, 1, 3)) + 1j * rng.standard_normal((2, 1, 3))
        covs = sample_covariances(Y)
        np.testing.assert_allclose(covs.matrices[0], np.outer(Y[0, 0], np.conj(Y[0, 0])))
        assert np.linalg.matrix_rank(covs.matrices[1]) == 1

    def test_duplication_invariance(self, rng):
        Y = rng.standard_normal((4, 5, 3)) + 1j * rng.standard_normal((4, 5, 3))
        a = sample_covariances(Y)
        b = sample_covariances(np.concatenate([Y, Y], axis=1))
        np.testing.assert_allclose(a.matrices, b.matrices, atol=1e-15)
        assert b.num_snapshots == 10

    def test_zeros(self):
        np.testing.assert_array_equal(sample_covariances(np.zeros((4, 3, 3), complex)).matrices, 0)

    def test_hermitian(self, rng):
        Y = rng.standard_normal((4, 7, 3)) + 1j * rng.standard_normal((4, 7, 3))
        R = sample_covariances(Y).matrices
        np.testing.assert_array_equal(R, np.conj(np.swapaxes(R, 1, 2)))


class TestFeaturize:
    def test_length(self, scheme, geom, rng):
        sc = draw_scenario(3, ScenarioRanges(), rng)
        assert featurize(sample_covariances(synthesize_snapshots(sc, scheme, geom, 10, rng))).shape == (36,)

    def test_identity(self):
        x = featurize(SampleCovSet(np.tile(np.eye(3, dtype=complex), (4, 1, 1)), 1))
        np.testing.assert_array_equal(x.reshape(4, 9), np.tile([1, 1, 1, 0, 0, 0, 0, 0, 0], (4, 1)))

    def test_golden_layout(self):
        R = np.array([[2, 1 + 4j, 3 - 1j], [1 - 4j, 5, -2 + 0.5j], [3 + 1j, -2 - 0.5j, 7]])
        x = featurize(SampleCovSet(R[None], 1))
        np.testing.assert_array_equal(x, [2, 5, 7, 1, 3, -2, 4, -1, 0.5])

    def test_round_trip(self, rng):
        from conftest import random_hpd

        R = random_hpd(rng, 4, 3)
        x = featurize(SampleCovSet(R, 10))
        np.testing.assert_array_equal(unfeaturize(x, 4, 3), R)

    def test_batch(self, rng):
        from conftest import random_hpd

        R = np.stack([random_hpd(rng, 4, 3) for _ in range(5)])
        X = featurize(R)
        assert X.shape == (5, 36)
        np.testing.assert_array_equal(X[2], featurize(R[2]))


class TestSnapshotFile:
    def test_round_trip(self, tmp_path, rng):
        Y = rng.standard_normal((4, 6, 3)) + 1j * rng.standard_normal((4, 6, 3))
        path = tmp_path / "y.snap"
        save_snapshots(path, Y)
        np.testing.assert_array_equal(load_snapshots(path), Y)
        assert path.stat().st_size == 24 + 16 * Y.size

    def test_header_order(self, tmp_path):
        path = tmp_path / "y.snap"
        save_snapshots(path, np.zeros((4, 6, 3), complex))
        assert np.frombuffer(path.read_bytes()[:24], "<i8").tolist() == [4, 3, 6]

    def test_truncated(self, tmp_path):
        path = tmp_path / "y.snap"
        save_snapshots(path, np.zeros((2, 2, 2), complex))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            load_snapshots(path)

    @settings(max_examples=20)
    @given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 4))
    def test_shapes(self, K, N, W):
        import tempfile
        from pathlib import Path

        Y = np.arange(K * N * W, dtype=float).reshape(K, N, W) * (1 - 0.5j)
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "y.snap"
            save_snapshots(p, Y)
            np.testing.assert_array_equal(load_snapshots(p), Y)
