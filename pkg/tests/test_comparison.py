"""Ring-comparison tests: statistics, verdicts, hardening, participant attack."""

import numpy as np
import pytest

from cvcqd.channel import ChannelParams
from cvcqd.comparison import (
    ComparisonParams,
    ComparisonRun,
    closed_form_statistic,
    run_smp2,
    run_smp_n,
    smp_hardening_key,
)
from cvcqd.errors import InvalidArgumentError
from cvcqd.harness import smp_intercept_samples
from cvcqd.metrics import empirical_mi

IDEAL = ComparisonParams(decoys_per_hop=5, debug_expose_statistic=True)

PHYSICAL = ComparisonParams(
    r=2.0,
    channel=ChannelParams(eta=0.9, amp_mode="phase-insensitive"),
    decoys_per_hop=10,
    debug_expose_statistic=True,
)


class TestTwoParty:
    def test_equal_wealth(self):
        result = run_smp2(7.0, 7.0, IDEAL, seed=1)
        assert result.verdict.verdict == "equal"
        assert abs(result._statistic) <= 1e-9

    def test_bob_wealthier(self):
        result = run_smp2(3.0, 5.0, IDEAL, seed=2)
        assert result.verdict.verdict == "greater"
        assert result._statistic == pytest.approx(2.0, abs=1e-9)

    def test_alice_wealthier(self):
        result = run_smp2(5.0, 3.0, IDEAL, seed=3)
        assert result.verdict.verdict == "less"
        assert result._statistic == pytest.approx(-2.0, abs=1e-9)

    def test_ideal_statistic_identity_random_pairs(self):
        rng = np.random.default_rng(4)
        for t in range(100):
            a, b = rng.normal(0, 3, 2)
            result = run_smp2(a, b, IDEAL, seed=[4, t], transcript_enabled=False)
            assert abs(result._statistic - (b - a)) <= 1e-9

    def test_physical_mode_sign_accuracy(self):
        # sign correctness is about sign(statistic); gaps near the equality
        # tolerance may still verdict "equal" while the ordering is right
        rng = np.random.default_rng(5)
        correct = 0
        trials = 200
        for t in range(trials):
            base = rng.uniform(0, 10)
            gap = rng.uniform(1, 10) * (1 if rng.integers(2) else -1)
            result = run_smp2(base, base + gap, PHYSICAL, seed=[5, t], transcript_enabled=False)
            correct += result._statistic is not None and np.sign(result._statistic) == np.sign(gap)
        assert correct / trials >= 0.99

    def test_physical_mode_equal_calibration(self):
        trials = 200
        equal = 0
        for t in range(trials):
            result = run_smp2(4.2, 4.2, PHYSICAL, seed=[6, t], transcript_enabled=False)
            equal += result.verdict.verdict == "equal"
        assert equal / trials >= 0.99

    def test_statistic_hidden_unless_debug(self):
        params = ComparisonParams(decoys_per_hop=2)
        result = run_smp2(1.0, 2.0, params, seed=7)
        assert result.verdict.statistic is None
        assert result.verdict.verdict == "greater"


class TestMultiParty:
    def test_all_equal(self):
        result = run_smp_n([4.0] * 5, IDEAL, seed=8)
        assert result.verdict.verdict == "all-equal"
        assert abs(result._statistic) <= 1e-9

    def test_not_equal(self):
        result = run_smp_n([1.0, 2.0, 3.0], IDEAL, seed=9)
        assert result.verdict.verdict == "not-equal"
        assert result._statistic == pytest.approx(-3.0, abs=1e-9)

    def test_documented_false_equality(self):
        # 2 + 1 + 3 = 3 * 2: the statistic cancels without equal inputs
        result = run_smp_n([2.0, 1.0, 3.0, 2.0], IDEAL, seed=10)
        assert result.verdict.verdict == "all-equal"
        assert abs(result._statistic) <= 1e-9

    def test_statistic_matches_closed_form(self):
        rng = np.random.default_rng(11)
        for n in range(3, 9):
            wealth = list(rng.normal(0, 3, n))
            result = run_smp_n(wealth, IDEAL, seed=[11, n], transcript_enabled=False)
            assert abs(result._statistic - closed_form_statistic(wealth)) <= 1e-9

    def test_two_party_minimum(self):
        with pytest.raises(InvalidArgumentError):
            run_smp_n([1.0, 2.0], IDEAL, seed=12)
        with pytest.raises(InvalidArgumentError):
            ComparisonRun([1.0], IDEAL, seed=12)


class TestAbortReporting:
    def test_decoy_failure_reports_hop(self):
        params = ComparisonParams(
            r=1.0,
            channel=ChannelParams(eta=0.7, amp_mode="phase-insensitive"),
            decoys_per_hop=20,
            threshold_c=1e-6,  # force failure at the first checkpoint
        )
        result = run_smp2(1.0, 2.0, params, seed=13)
        assert result.verdict.aborted
        assert result.verdict.hop == 0
        assert result.verdict.verdict is None
        assert result.transcript.status == "aborted"
        assert result.transcript.abort_frame is not None


class TestHardening:
    def test_zero_mask_matches_unhardened(self):
        masks = smp_hardening_key(0.0, seed=1)
        assert masks["alice"][0] == 0.0 and masks["bob"][0] == 0.0
        plain = run_smp2(3.0, 5.0, IDEAL, seed=14)
        hardened = run_smp2(
            3.0, 5.0,
            ComparisonParams(decoys_per_hop=5, debug_expose_statistic=True,
                             hardening_variance=0.0),
            seed=14,
        )
        assert hardened._statistic == plain._statistic

    def test_mask_cancels_in_statistic(self):
        params = ComparisonParams(decoys_per_hop=5, debug_expose_statistic=True,
                                  hardening_variance=100.0)
        result = run_smp2(3.0, 5.0, params, seed=15)
        assert result._statistic == pytest.approx(2.0, abs=1e-9)

    def test_masks_are_opposite(self):
        masks = smp_hardening_key(25.0, seed=2, length=3)
        assert np.allclose(masks["alice"], -masks["bob"])

    def test_negative_variance_rejected(self):
        with pytest.raises(InvalidArgumentError):
            smp_hardening_key(-1.0, seed=0)


class TestMaliciousSupervisor:
    def test_unmasked_intercept_reveals_first_encoder(self):
        params = ComparisonParams(decoys_per_hop=0, hardening_variance=0.0)
        secrets, estimates = smp_intercept_samples(params, trials=2000, seed=16)
        mi = empirical_mi(secrets, estimates, min_samples=2000)
        assert mi > 1.0  # essentially full disclosure without the mask

    def test_masked_intercept_is_blinded(self):
        params = ComparisonParams(decoys_per_hop=0, hardening_variance=25.0)
        secrets, estimates = smp_intercept_samples(params, trials=2000, seed=17,
                                                   wealth_variance=0.25)
        mi = empirical_mi(secrets, estimates, min_samples=2000)
        assert mi <= 0.05
