"""Acceptance suite: one test group per criterion, summarised at the end of the run.

Every check records its measured value before asserting, so the terminal
summary shows a PASS/FAIL line per criterion even when an assertion fails.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import (
    ADAM_EXPECTED,
    adam_scalar_trajectory,
    exact_covs,
    gradient_relative_errors,
    lattice_minimum,
    network_gradient_error,
    random_feasible_point,
    record,
    ssr_constraint_trajectory,
)
from subarray_doa.estimators import Dictionary, GridSpec, gls_inner_fit, ssr_alternating, ssr_weights
from subarray_doa.experiment import RunConfig, benchmark, run_experiment, run_order_experiment
from subarray_doa.geometry import ArrayGeometry, SubarrayScheme, steering_vector
from subarray_doa.metrics import pooled_rmspe, top_quantile_rmspe
from subarray_doa.model_order import mdl_select
from subarray_doa.neural import (
    TrainConfig,
    forward,
    heldout_mce,
    load_checkpoint,
    mcenet_batch,
    mlp_init,
    save_checkpoint,
    train_covnet,
    train_mcenet,
)
from subarray_doa.simulation import Scenario, ScenarioRanges, draw_scenario, sample_covariances, synthesize_snapshots
from subarray_doa.sml import block_coordinate_ascent, genie_ml

pytestmark = pytest.mark.acceptance

SCHEME = SubarrayScheme.default()
GEOM = ArrayGeometry.uca()


def noisy(rng, L=3, snr=10.0, N=10):
    sc = draw_scenario(L, ScenarioRanges.fixed_snr(snr), rng)
    return sc, sample_covariances(synthesize_snapshots(sc, SCHEME, GEOM, N, rng))


class TestGradientCorrectness:
    def test_hundred_points(self):
        t0 = time.perf_counter()
        worst = 0.0
        for i in range(100):
            rng = np.random.default_rng([1, i])
            _, covs = noisy(rng)
            worst = max(worst, *gradient_relative_errors(random_feasible_point(rng), covs, SCHEME, GEOM))
        dt = time.perf_counter() - t0
        ok = record(1, "worst rel err", worst < 1e-5, f"{worst:.2e} (< 1e-5)")
        ok &= record(1, "runtime", dt < 60, f"{dt:.1f} s (< 60 s)")
        assert ok


class TestAscentMonotonicity:
    def test_two_hundred_runs(self):
        decreasing = bad_exit = capped = 0
        for i in range(200):
            rng = np.random.default_rng([2, i])
            _, covs = noisy(rng)
            res = block_coordinate_ascent(random_feasible_point(rng), covs, SCHEME, GEOM)
            decreasing += bool(np.any(np.diff(res.trace) < 0))
            last_gain = res.trace[-1] - res.trace[-2]
            bad_exit += not ((res.converged and last_gain < 1e-6) or (not res.converged and res.iterations == 5000))
            capped += not res.converged
        ok = record(2, "decreasing traces", decreasing == 0, f"{decreasing}/200")
        ok &= record(2, "bad exits", bad_exit == 0, f"{bad_exit}/200 ({capped} hit the cap)")
        assert ok


class TestExactFixedPoints:
    def test_genie(self):
        worst = 0.0
        for i in range(100):
            rng = np.random.default_rng([3, 0, i])
            sc = draw_scenario(3, ScenarioRanges.fixed_snr(20.0), rng)
            est = genie_ml(sc, exact_covs(sc, SCHEME, GEOM), SCHEME, GEOM)
            worst = max(worst, np.max(np.abs(est.doas - np.sort(sc.doas))))
        assert record(3, "genie max |dtheta|", worst < 1e-8, f"{worst:.1e} (< 1e-8)")

    def test_gls_inner_fit(self):
        worst = 0.0
        for i in range(100):
            rng = np.random.default_rng([3, 1, i])
            sc = draw_scenario(3, ScenarioRanges.fixed_snr(20.0), rng)
            worst = max(worst, gls_inner_fit(sc.doas, exact_covs(sc, SCHEME, GEOM), SCHEME, GEOM).residual)
        assert record(3, "GLS max residual", worst < 1e-18, f"{worst:.1e} (< 1e-18)")

    def test_mdl(self):
        hits = 0
        for i in range(100):
            rng = np.random.default_rng([3, i])
            L = i % 4
            sc = draw_scenario(L, ScenarioRanges.fixed_snr(20.0), rng)
            hits += mdl_select(exact_covs(sc, SCHEME, GEOM, N=1000), 3, SCHEME, GEOM).order == L
        assert record(3, "MDL correct orders", hits >= 90, f"{hits}/100 (>= 90)")


class TestSSRConstraint:
    def test_every_iteration(self):
        d = Dictionary.build(GridSpec(32, 9), SCHEME, GEOM)
        worst = 0.0
        for i in range(20):
            _, covs = noisy(np.random.default_rng([4, i]), snr=20.0)
            values, _ = ssr_constraint_trajectory(covs, d, 1000)
            assert len(values) == 1000
            worst = max(worst, np.max(np.abs(values - 1.0)))
        assert record(4, "max |constraint - 1|", worst < 1e-9, f"{worst:.1e} (< 1e-9)")

    def test_lattice_oracle(self):
        rng = np.random.default_rng(3)
        scheme = SubarrayScheme(9, ((1, 2),))
        angles = np.array([0.6, 2.5])
        d = Dictionary(angles, steering_vector(GEOM, angles)[[[0], [1]], :].reshape(1, 2, 2))
        worst_gap, worst_cells = -np.inf, 0.0
        for _ in range(3):
            sc = Scenario(angles, np.diag(rng.uniform(0.3, 1.0, 2)).astype(complex), rng.uniform(0.2, 0.6))
            covs = sample_covariances(synthesize_snapshots(sc, scheme, GEOM, 40, rng))
            r = ssr_alternating(covs, d, 20_000)
            f_lat, (p1, p2, _) = lattice_minimum(covs, d)
            (w1, w2), _ = ssr_weights(covs, d)
            worst_gap = max(worst_gap, r.objective[-1] - f_lat)
            cells = max(abs(w1 * (r.powers[0] - p1)), abs(w2 * (r.powers[1] - p2))) * 400
            worst_cells = max(worst_cells, cells)
        ok = worst_gap <= 1e-9 and worst_cells <= 2
        assert record(4, "lattice oracle", ok, f"objective - lattice {worst_gap:.1e}, {worst_cells:.2f} cells (<= 2)")


@pytest.fixture(scope="module")
def hybrid_run():
    cfg = RunConfig(
        num_sources=3,
        num_snapshots=[10, 1000],
        snr_db=[20.0],
        methods=["ssr", "hybrid-ssr", "genie"],
        trials=500,
        ssr_oversampling=16,
        seed=5,
        deterministic=True,
    )
    t0 = time.perf_counter()
    res = run_experiment(cfg, write=False)
    return res, time.perf_counter() - t0


class TestHybridImprovement:
    def test_median_at_ten_snapshots(self, hybrid_run):
        res, _ = hybrid_run
        h, s = np.median(res.rmspe("hybrid-ssr", 0)), np.median(res.rmspe("ssr", 0))
        assert record(5, "N=10 median hybrid/SSR", h <= s, f"{h:.4f} vs {s:.4f}")

    def test_top90_against_genie(self, hybrid_run):
        res, _ = hybrid_run
        h, g = top_quantile_rmspe(res.rmspe("hybrid-ssr", 1)), top_quantile_rmspe(res.rmspe("genie", 1))
        assert record(5, "N=1000 top-90% hybrid/genie", h <= 1.2 * g, f"{h / g:.3f} (<= 1.2)")

    def test_runtime(self, hybrid_run):
        _, dt = hybrid_run
        assert record(5, "runtime", dt < 1800, f"{dt / 60:.1f} min (< 30 min)")


class TestConsistency:
    @pytest.mark.parametrize("method", ["genie", "hybrid-ssr"])
    def test_pooled_decreases(self, hybrid_run, method):
        res, _ = hybrid_run
        small = pooled_rmspe(res.rmspe(method, 0)[:200])
        large = pooled_rmspe(res.rmspe(method, 1)[:200])
        assert record(6, method, large < small, f"N=1000 {large:.4f} < N=10 {small:.4f}")


class TestCorrelatedFailureMode:
    def test_ssr_breaks_at_full_correlation(self):
        cfg = RunConfig(
            num_sources=3,
            snr_db=[20.0],
            num_snapshots=[10],
            correlation="fixed",
            rho=[1.0],
            methods=["ssr", "genie"],
            trials=200,
            seed=7,
            deterministic=True,
        )
        res = run_experiment(cfg, write=False)
        s, g = top_quantile_rmspe(res.rmspe("ssr")), top_quantile_rmspe(res.rmspe("genie"))
        assert record(7, "top-90% SSR/genie", s >= 3 * g, f"{s / g:.1f} (>= 3)")


class TestNetworkEngine:
    @pytest.mark.parametrize("head", ["identity", "softmax"])
    def test_backprop(self, head):
        err = network_gradient_error(head)
        assert record(8, f"backprop {head}", err < 1e-4, f"{err:.1e} (< 1e-4)")

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        m = mlp_init((36, 16, 4), rng, head="softmax")
        save_checkpoint(tmp_path / "m.ckpt", m)
        m2, _ = load_checkpoint(tmp_path / "m.ckpt")
        X = rng.standard_normal((4, 36))
        same = all(a.tobytes() == b.tobytes() for a, b in zip(m.parameters(), m2.parameters()))
        same &= np.array_equal(forward(m, X, cache=False), forward(m2, X, cache=False))
        assert record(8, "checkpoint bit-exact", same, str(same))

    def test_adam_trajectory(self):
        got = adam_scalar_trajectory()
        ok = np.allclose(got, ADAM_EXPECTED, rtol=1e-14, atol=0)
        assert record(8, "Adam 3 steps", ok, " ".join(f"{x:.10f}" for x in got))


# Desk-scale networks shared by the training, order-selection and timing criteria.
MCENET_CFG = TrainConfig(hidden_units=256, total_samples=200_000)
COVNET_CFG = TrainConfig(hidden_units=128, batch_size=64, learning_rate=1e-2, total_samples=64 * 10_000, loss="cross_entropy")
CHANCE = 1.0 / (COVNET_CFG.max_order + 1)


@pytest.fixture(scope="session")
def mcenet():
    t0 = time.perf_counter()
    res = train_mcenet(MCENET_CFG, SCHEME, GEOM)
    return res.model, time.perf_counter() - t0


@pytest.fixture(scope="session")
def covnet():
    t0 = time.perf_counter()
    res = train_covnet(COVNET_CFG, SCHEME, GEOM)
    return res.model, time.perf_counter() - t0


def covnet_accuracy(model, N, seed, trials=400):
    """Stratified accuracy at 20 dB with the training power spread."""
    cfg = RunConfig(
        methods=["covnet"], trials=trials, num_snapshots=[N], snr_db=[20.0], min_source_power_db=-9.0, seed=seed
    )
    res = run_order_experiment(cfg, models={"covnet": model}, write=False)
    return float(res.aggregates[0]["accuracy"])


class TestSmokeTraining:
    def test_mcenet_halves_heldout_mce(self, mcenet):
        model, _ = mcenet
        X, y = mcenet_batch(MCENET_CFG, SCHEME, GEOM, np.random.default_rng(99), batch_size=2000)
        init = train_mcenet(replace(MCENET_CFG, total_samples=0), SCHEME, GEOM).model
        before, after = heldout_mce(init, X, y), heldout_mce(model, X, y)
        assert record(9, "MCENet held-out MCE", after <= 0.5 * before, f"{before:.3f} -> {after:.3f}")

    def test_covnet_beats_chance(self, covnet):
        model, _ = covnet
        acc = covnet_accuracy(model, 10, seed=90)
        assert record(9, "CovNet accuracy 20 dB N=10", acc > 2 * CHANCE, f"{acc:.3f} (> {2 * CHANCE:.2f})")

    def test_combined_runtime(self, mcenet, covnet):
        dt = mcenet[1] + covnet[1]
        assert record(9, "training time", dt < 1200, f"{dt / 60:.1f} min (< 20 min)")


class TestCovNetVersusMDL:
    def test_mixed_snr(self, covnet):
        cfg = RunConfig(
            methods=["mdl", "covnet"],
            trials=400,
            num_snapshots=[10],
            snr_range=[-10.0, 30.0],
            min_source_power_db=-9.0,
            seed=100,
            deterministic=True,
        )
        res = run_order_experiment(cfg, models={"covnet": covnet[0]}, write=False)
        acc = {a["method"]: float(a["accuracy"]) for a in res.aggregates}
        ok = acc["covnet"] >= acc["mdl"] - 0.05
        assert record(10, "accuracy CovNet vs MDL", ok, f"{acc['covnet']:.3f} vs {acc['mdl']:.3f} (>= MDL - 0.05)")


class TestSnapshotGeneralisation:
    def test_ten_to_hundred(self, covnet):
        model, _ = covnet
        a10, a100 = covnet_accuracy(model, 10, seed=110), covnet_accuracy(model, 100, seed=110)
        assert record(11, "accuracy N=10 -> N=100", a100 >= a10 - 0.10, f"{a10:.3f} -> {a100:.3f} (drop <= 0.10)")


class TestComplexityOrdering:
    def test_mean_inference_times(self, mcenet):
        cfg = RunConfig(trials=100, seed=120)
        t = benchmark(cfg, models={"mcenet": mcenet[0]}, methods=("mcenet", "ssr", "gls"))
        m, s, g = (t[k]["mean_ms"] for k in ("mcenet", "ssr", "gls"))
        assert record(12, "mean ms mcenet < ssr < gls", m < s < g, f"{m:.2f} < {s:.1f} < {g:.1f}")
