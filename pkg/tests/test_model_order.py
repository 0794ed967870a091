import math

import numpy as np
import pytest

from conftest import exact_covs, random_hpd
from subarray_doa.model_order import covnet_select, mdl_penalty, mdl_select, select_from_scores
from subarray_doa.neural import MlpModel, mlp_init
from subarray_doa.simulation import SampleCovSet, Scenario, ScenarioRanges, draw_scenario


class TestPenalty:
    def test_values(self):
        # direct evaluation of (2l+1)/2 ln(KN) at K=4, N=10
        assert mdl_penalty(0, 4, 10) == pytest.approx(1.8444397270569681, abs=1e-12)
        assert mdl_penalty(1, 4, 10) == pytest.approx(5.533319181170905, abs=1e-12)

    def test_increments(self):
        for l in range(5):
            assert mdl_penalty(l + 1, 4, 100) - mdl_penalty(l, 4, 100) == pytest.approx(math.log(400))


class TestSelectFromScores:
    def test_tie_goes_low(self):
        assert select_from_scores([1.0, 3.0, 3.0]) == 1

    def test_all_failed(self):
        assert select_from_scores([-np.inf] * 4) == 0

    def test_constant_shift(self, rng):
        s = rng.standard_normal(4)
        assert select_from_scores(s + 123.0) == select_from_scores(s)


class TestMDL:
    def test_pure_noise(self, scheme, geom):
        covs = SampleCovSet(np.tile(0.5 * np.eye(3, dtype=complex), (4, 1, 1)), 10)
        res = mdl_select(covs, 3, scheme, geom, ssr_oversampling=8, ssr_iterations=500)
        assert res.order == 0
        assert res.diagnostics["noise_only_variance"] == pytest.approx(0.5)

    def test_scores_structure(self, scheme, geom, rng):
        covs = SampleCovSet(random_hpd(rng, 4, 3), 10)
        res = mdl_select(covs, 2, scheme, geom, ssr_oversampling=8, ssr_iterations=500)
        np.testing.assert_allclose(res.scores, res.log_likelihoods - res.penalties)
        assert res.order == int(np.argmax(res.scores))
        assert len(res.estimates) == 3 and res.estimates[0] is None

    def test_zero_penalty_is_likelihood_argmax(self, scheme, geom, rng):
        covs = SampleCovSet(random_hpd(rng, 4, 3), 10)
        res = mdl_select(covs, 2, scheme, geom, penalty_scale=0.0, ssr_oversampling=8, ssr_iterations=500)
        assert res.order == int(np.argmax(res.log_likelihoods))

    @pytest.mark.parametrize("kind", ["gls", "hybrid-gls"])
    def test_other_plugins(self, scheme, geom, kind):
        # On-grid sources: a grid plug-in cannot match off-grid data at high SNR.
        sc = Scenario(np.array([4, 20]) * 2 * np.pi / 36, np.eye(2, dtype=complex), 1e-3)
        res = mdl_select(exact_covs(sc, scheme, geom, N=1000), 2, scheme, geom, estimator=kind, gls_oversampling=4)
        assert res.order == 2

    def test_unknown_kind(self, scheme, geom, rng):
        with pytest.raises(ValueError):
            mdl_select(SampleCovSet(random_hpd(rng, 4, 3), 10), 2, scheme, geom, estimator="mvdr")

    def test_easy_two_source_exact(self, scheme, geom):
        hits = 0
        for t in range(20):
            rng = np.random.default_rng([5, t])
            sc = draw_scenario(2, ScenarioRanges.fixed_snr(30.0), rng, min_separation=1.0)
            hits += mdl_select(exact_covs(sc, scheme, geom, N=1000), 3, scheme, geom, ssr_oversampling=16).order == 2
        assert hits >= 18


class TestCovNetSelect:
    def test_posterior(self, rng):
        logits = np.log([0.05, 0.05, 0.05, 0.85])
        m = MlpModel((36, 4), "softmax", [np.zeros((36, 4))], [logits])
        res = covnet_select(m, SampleCovSet(random_hpd(rng, 4, 3), 10), 3)
        assert res.order == 3 and res.scores.sum() == pytest.approx(1.0)

    def test_class_mismatch(self, rng):
        m = mlp_init((36, 4, 3), rng, head="softmax")
        with pytest.raises(ValueError):
            covnet_select(m, SampleCovSet(random_hpd(rng, 4, 3), 10), 3)
