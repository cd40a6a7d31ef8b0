"""Engine-level tests: conventions, operation identities, invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvcqd import phasespace as ps
from cvcqd.errors import InvalidArgumentError, InvalidStateError

RNG = np.random.default_rng


class TestVacuum:
    def test_single_mode(self):
        state = ps.make_vacuum(1)
        assert np.allclose(state.mean, 0.0)
        assert np.allclose(state.cov, np.diag([0.25, 0.25]))

    def test_two_modes(self):
        state = ps.make_vacuum(2)
        assert state.cov.shape == (4, 4)
        assert np.allclose(state.cov, 0.25 * np.eye(4))

    def test_zero_modes_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ps.make_vacuum(0)

    def test_sampled_variance_matches_convention(self):
        shots = ps.sample_shot(ps.make_vacuum(1), seed=1, shape=(100_000,))
        assert abs(np.var(shots.x(0)) - 0.25) < 0.005


class TestSampling:
    def test_same_seed_bitwise_identical(self):
        state = ps.make_vacuum(3)
        a = ps.sample_shot(state, seed=99, shape=(64,))
        b = ps.sample_shot(state, seed=99, shape=(64,))
        assert np.array_equal(a.quads, b.quads)

    def test_degenerate_covariance_returns_mean(self):
        state = ps.GaussianState(
            mean=np.array([1.0, -2.0]),
            cov=1e-30 * np.eye(2),
            consumed=np.zeros(1, dtype=bool),
        )
        shot = ps.sample_shot(state, seed=0)
        assert np.allclose(shot.quads, state.mean, atol=1e-12)

    def test_non_psd_covariance_rejected(self):
        state = ps.GaussianState(
            mean=np.zeros(2), cov=np.diag([1.0, -1.0]), consumed=np.zeros(1, dtype=bool)
        )
        with pytest.raises(InvalidStateError):
            ps.sample_shot(state, seed=0)

    def test_empirical_covariance_within_5_se(self):
        n = 100_000
        shots = ps.sample_shot(ps.make_vacuum(2), seed=7, shape=(n,))
        cov = np.cov(shots.quads.T, bias=True)
        se = np.sqrt((np.outer(np.ones(4), np.ones(4)) * 0.25 * 0.25
                      + (0.25 * np.eye(4)) ** 2) / n)
        assert np.all(np.abs(cov - 0.25 * np.eye(4)) <= 5 * se)


class TestDisplace:
    def test_zero_is_identity(self):
        state = ps.make_vacuum(1)
        out = ps.displace(state, 0, (0.0, 0.0))
        assert np.array_equal(out.mean, state.mean)
        assert np.array_equal(out.cov, state.cov)

    def test_vacuum_displacement(self):
        out = ps.displace(ps.make_vacuum(1), 0, (1.5, 0.4))
        assert np.allclose(out.mean, [1.5, 0.4])
        assert np.allclose(out.cov, 0.25 * np.eye(2))

    def test_additivity(self):
        twice = ps.displace(ps.displace(ps.make_vacuum(1), 0, (0.3, -0.7)), 0, (1.1, 0.2))
        once = ps.displace(ps.make_vacuum(1), 0, (1.4, -0.5))
        assert np.allclose(twice.mean, once.mean)

    def test_mode_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            ps.displace(ps.make_vacuum(1), 1, (1.0, 0.0))


class TestTwoModeSqueeze:
    def test_r_zero_identity(self):
        state = ps.make_vacuum(2)
        out = ps.two_mode_squeeze(state, 0, 1, 0.0)
        assert np.allclose(out.cov, state.cov)

    def test_epr_variance_shot(self):
        # Var(x_i - x_j) = exp(-2r)/2 after squeezing vacuum
        shots = ps.sample_shot(ps.make_vacuum(2), seed=3, shape=(100_000,))
        shots = ps.two_mode_squeeze(shots, 0, 1, 1.0)
        var = np.var(shots.x(0) - shots.x(1))
        expected = np.exp(-2.0) / 2.0
        assert abs(var - expected) / expected < 0.05

    def test_reference_variance_form(self):
        # Var((x_i - x_j)/sqrt(2)) = exp(-2r)/4
        shots = ps.sample_shot(ps.make_vacuum(2), seed=4, shape=(100_000,))
        shots = ps.two_mode_squeeze(shots, 0, 1, 1.0)
        var = np.var((shots.x(0) - shots.x(1)) / np.sqrt(2.0))
        expected = np.exp(-2.0) / 4.0
        assert abs(var - expected) / expected < 0.05

    def test_ensemble_epr_variances(self):
        state = ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 1.0)
        var_x, var_p = ps.epr_variances(state, 0, 1)
        assert var_x == pytest.approx(np.exp(-2.0) / 2.0, rel=1e-12)
        assert var_p == pytest.approx(np.exp(-2.0) / 2.0, rel=1e-12)

    def test_negative_r_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, -0.1)

    def test_same_mode_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ps.two_mode_squeeze(ps.make_vacuum(2), 0, 0, 1.0)

    @given(st.floats(0.0, 3.0))
    @settings(max_examples=25, deadline=None)
    def test_matrix_is_symplectic(self, r):
        op = ps.SymplecticOp(matrix=ps.two_mode_squeeze_matrix(r), shift=np.zeros(4))
        assert op.symplectic_defect() <= 1e-12

    def test_swapped_modes_give_the_same_map(self):
        # The map is symmetric in its two modes, so swapping the arguments
        # repeats the squeeze rather than undoing it.
        a = ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 0.8)
        b = ps.two_mode_squeeze(ps.make_vacuum(2), 1, 0, 0.8)
        assert np.allclose(a.cov, b.cov, atol=1e-14)

    def test_conjugate_squeeze_restores_epr_variance(self):
        # The inverse is the same squeeze conjugated by a pi rotation of one
        # mode; applying it returns the EPR variances to their inputs.
        state = ps.make_vacuum(2)
        var0 = ps.epr_variances(state, 0, 1)[0]
        state = ps.two_mode_squeeze(state, 0, 1, 1.3)
        flip = np.diag([1.0, 1.0, -1.0, -1.0])
        state = ps.apply_symplectic(state, ps.SymplecticOp(matrix=flip, shift=np.zeros(4)))
        state = ps.two_mode_squeeze(state, 0, 1, 1.3)
        state = ps.apply_symplectic(state, ps.SymplecticOp(matrix=flip, shift=np.zeros(4)))
        assert abs(ps.epr_variances(state, 0, 1)[0] - var0) < 1e-9

    def test_purity_preserved(self):
        state = ps.displace(ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 0.9), 0, (2.0, -1.0))
        nus = ps.symplectic_eigenvalues(state.cov)
        assert np.allclose(nus, 0.25, atol=1e-9)


class TestBeamSplit:
    def test_beta_one_identity(self):
        shots = ps.sample_shot(ps.make_vacuum(2), seed=5, shape=(10,))
        out = ps.beam_split(shots, 0, 1, 1.0)
        assert np.allclose(out.quads, shots.quads)

    def test_printed_transform_values(self):
        state = ps.ShotState(
            quads=np.array([1.0, 0.0, 0.0, 0.0]), consumed=np.zeros(2, dtype=bool)
        )
        out = ps.beam_split(state, 0, 1, 0.5, variant="printed")
        assert out.x(0) == pytest.approx(0.70711, abs=1e-5)
        assert out.x(1) == pytest.approx(0.70711, abs=1e-5)

    def test_physical_transform_sign_flip(self):
        state = ps.ShotState(
            quads=np.array([1.0, 0.0, 0.0, 0.0]), consumed=np.zeros(2, dtype=bool)
        )
        out = ps.beam_split(state, 0, 1, 0.5, variant="physical")
        assert out.x(0) == pytest.approx(np.sqrt(0.5))
        assert out.x(1) == pytest.approx(-np.sqrt(0.5))

    def test_printed_variant_symplectic_defect_reported(self):
        # symmetric sign pattern: singular at beta=1/2, symplectic only at the ends
        assert ps.beam_split_symplectic_defect(0.5, "printed") > 0.9
        assert ps.beam_split_symplectic_defect(1.0, "printed") <= 1e-12
        assert ps.beam_split_symplectic_defect(0.0, "printed") <= 1e-12

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_physical_variant_always_symplectic(self, beta):
        assert ps.beam_split_symplectic_defect(beta, "physical") <= 1e-12

    def test_beta_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            ps.beam_split(ps.make_vacuum(2), 0, 1, 1.5)


class TestLossChannel:
    def test_identity_at_full_transmission(self):
        state = ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 1.0)
        out = ps.loss_channel(state, 0, 1.0, 0.0)
        assert np.allclose(out.cov, state.cov)

    def test_vacuum_is_fixed_point(self):
        out = ps.loss_channel(ps.make_vacuum(1), 0, 0.5, 0.0)
        assert np.allclose(out.cov, 0.25 * np.eye(2), atol=1e-14)

    def test_mean_attenuation(self):
        state = ps.displace(ps.make_vacuum(1), 0, (2.0, 0.0))
        out = ps.loss_channel(state, 0, 0.25, 0.0)
        assert out.mean[0] == pytest.approx(1.0)

    def test_eta_zero_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ps.loss_channel(ps.make_vacuum(1), 0, 0.0)

    def test_dilation_matrix_symplectic(self):
        op = ps.SymplecticOp(matrix=ps.loss_dilation_matrix(0.37), shift=np.zeros(4))
        assert op.symplectic_defect() <= 1e-12

    def test_pure_loss_respects_uncertainty(self):
        state = ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 1.5)
        for eta in (0.9, 0.5, 0.1):
            out = ps.loss_channel(state, 0, eta, 0.0)
            assert np.min(ps.symplectic_eigenvalues(out.cov)) >= 0.25 - 1e-9


class TestAmplify:
    def test_gain_one_identity(self):
        state = ps.make_vacuum(1)
        for mode in ("paper-ideal", "phase-insensitive"):
            out = ps.amplify(state, 0, 1.0, mode)
            assert np.allclose(out.cov, state.cov)

    def test_loss_then_ideal_amp_restores_mean(self):
        eta, eps = 0.4, 0.3
        state = ps.displace(ps.make_vacuum(1), 0, (2.0, -1.0))
        out = ps.loss_channel(state, 0, eta, eps)
        out = ps.amplify(out, 0, 1.0 / np.sqrt(eta), "paper-ideal")
        assert np.allclose(out.mean, state.mean)
        inflation = (1.0 - eta) / eta * (0.25 + eps)
        assert out.cov[0, 0] == pytest.approx(0.25 + inflation)

    def test_phase_insensitive_noise(self):
        out = ps.amplify(ps.make_vacuum(1), 0, 2.0, "phase-insensitive")
        assert out.cov[0, 0] == pytest.approx(4 * 0.25 + 3 * 0.25)

    def test_gain_below_one_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ps.amplify(ps.make_vacuum(1), 0, 0.5)


class TestHomodyne:
    def test_shot_mean_of_displaced_vacuum(self):
        state = ps.displace(ps.make_vacuum(1), 0, (3.0, 0.0))
        shots = ps.sample_shot(state, seed=11, shape=(100_000,))
        value, _ = ps.homodyne(shots, 0, "x")
        assert abs(np.mean(value) - 3.0) < 0.005

    def test_ensemble_conditioning_reduces_variance(self):
        state = ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 1.0)
        unconditional = state.cov[2, 2]
        _, after = ps.homodyne(state, 0, "x", rng=RNG(0))
        assert after.cov[2, 2] < unconditional

    def test_consumed_mode_remeasure_errors(self):
        shots = ps.sample_shot(ps.make_vacuum(1), seed=12)
        _, after = ps.homodyne(shots, 0, "x")
        with pytest.raises(InvalidStateError):
            ps.homodyne(after, 0, "p")


class TestBellMeasure:
    def test_direct_evaluation(self):
        state = ps.ShotState(
            quads=np.array([1.0, 0.3, 0.2, 0.1]), consumed=np.zeros(2, dtype=bool)
        )
        outcome, _ = ps.bell_measure(state, 0, 1)
        assert outcome.x_mu == pytest.approx(0.56569, abs=1e-5)
        assert outcome.p_mu == pytest.approx(0.28284, abs=1e-5)

    def test_large_squeezing_concentrates(self):
        shots = ps.sample_shot(ps.make_vacuum(2), seed=13, shape=(1000,))
        shots = ps.two_mode_squeeze(shots, 0, 1, 8.0)
        outcome, _ = ps.bell_measure(shots, 0, 1)
        assert np.max(np.abs(outcome.x_mu)) < 1e-2

    def test_variance_matches_reference_form(self):
        shots = ps.sample_shot(ps.make_vacuum(2), seed=14, shape=(100_000,))
        shots = ps.two_mode_squeeze(shots, 0, 1, 1.0)
        outcome, _ = ps.bell_measure(shots, 0, 1)
        expected = np.exp(-2.0) / 4.0
        assert abs(np.var(outcome.x_mu) - expected) / expected < 0.05

    def test_same_mode_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ps.bell_measure(ps.make_vacuum(2), 1, 1, rng=RNG(0))

    def test_consumed_mode_rejected(self):
        shots = ps.sample_shot(ps.make_vacuum(2), seed=15)
        _, after = ps.homodyne(shots, 0, "x")
        with pytest.raises(InvalidStateError):
            ps.bell_measure(after, 0, 1)

    def test_ensemble_joint_consistency(self):
        # the ensemble draw of the Bell pair matches the shot statistics
        state = ps.two_mode_squeeze(ps.make_vacuum(2), 0, 1, 1.0)
        rng = RNG(16)
        draws = np.array([ps.bell_measure(state, 0, 1, rng=rng)[0].x_mu for _ in range(4000)])
        expected = np.exp(-2.0) / 4.0
        assert abs(np.var(draws) - expected) / expected < 0.15


class TestGaussianStateValidation:
    def test_asymmetric_covariance_rejected(self):
        state = ps.GaussianState(
            mean=np.zeros(2),
            cov=np.array([[0.25, 0.1], [0.0, 0.25]]),
            consumed=np.zeros(1, dtype=bool),
        )
        with pytest.raises(InvalidStateError):
            state.validate()

    def test_uncertainty_violation_rejected(self):
        state = ps.GaussianState(
            mean=np.zeros(2), cov=0.01 * np.eye(2), consumed=np.zeros(1, dtype=bool)
        )
        with pytest.raises(InvalidStateError):
            state.validate()

    def test_vacuum_validates(self):
        ps.make_vacuum(3).validate()
