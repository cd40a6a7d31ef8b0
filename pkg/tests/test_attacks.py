"""Attack catalog: taps, detection, replication oracle, information audit."""

import re
from pathlib import Path

import numpy as np
import pytest

import cvcqd.attacks as attacks_module
from cvcqd import phasespace as ps
from cvcqd.attacks import (
    ACTIVE_ATTACKS,
    BeamSplitterAttack,
    CloneNoiseAttack,
    DisturbanceAttack,
    InterceptResendAttack,
    beam_splitter_amplitude_coefficients,
    make_attack,
)
from cvcqd.dialogue import CqdRun, DialogueMessage, RunParams
from cvcqd.errors import InvalidArgumentError
from cvcqd.harness import beam_splitter_replication, eve_information
from cvcqd.metrics import detection_probability, empirical_mi

FIFTY = RunParams()  # 50 decoys per checkpoint, r = 1, ideal channel


def run_with(attack, seed, params=FIFTY, msg=None):
    msg = msg or DialogueMessage((0.4, -0.2), (0.3, 0.6))
    run = CqdRun(params, msg, seed, attack=attack, transcript_enabled=False)
    return run, run.execute()


class TestDisturbance:
    def test_zero_magnitude_is_identity(self):
        params = RunParams(n_decoy_cb=3, n_decoy_ab=3, n_decoy_abo=3)
        _, clean = run_with(None, seed=1, params=params)
        _, tapped = run_with(DisturbanceAttack(d=0.0), seed=1, params=params)
        assert tapped.status == "completed"
        assert tapped.decode.announced_x == clean.decode.announced_x

    def test_default_magnitude_detected(self):
        det = detection_probability(FIFTY, 100, seed=2,
                                    attack_factory=lambda: make_attack("disturbance"))
        assert det.p_detect >= 0.99

    def test_subthreshold_magnitude_usually_missed(self):
        small = 0.1 * np.sqrt(np.exp(-2.0) / 2.0)
        det = detection_probability(
            FIFTY, 100, seed=3,
            attack_factory=lambda: DisturbanceAttack(d=small),
        )
        assert det.p_detect <= 0.2

    def test_negative_magnitude_rejected(self):
        with pytest.raises(InvalidArgumentError):
            DisturbanceAttack(d=-1.0)


class TestInterceptResend:
    def test_substituted_pulse_decorrelates_checks(self):
        # deviation variance jumps from ~0 (shared-reference cancellation)
        # to the schedule-plus-unsqueezed scale, V_R + cosh(2r)/2
        params = RunParams(threshold_c=1e9, n_decoy_ab=0, n_decoy_abo=0)
        ratios = []
        for t in range(40):
            _, result = run_with(InterceptResendAttack(r_eve=1.0), [4, t], params)
            ratios.append(result.checkpoints[0].variance_ratio)
        v_pred = np.exp(-2.0) / 2.0
        expected_var = 25.0 + np.cosh(2.0) / 2.0
        assert abs(np.median(ratios) * v_pred - expected_var) / expected_var < 0.5

    def test_detected_at_default(self):
        det = detection_probability(FIFTY, 100, seed=5,
                                    attack_factory=lambda: make_attack("intercept-resend"))
        assert det.p_detect >= 0.99

    def test_eve_retains_modes(self):
        attack = InterceptResendAttack(r_eve=1.0)
        _, result = run_with(attack, seed=6, params=RunParams(n_decoy_cb=0, n_decoy_ab=0,
                                                              n_decoy_abo=0, threshold_c=1e9))
        assert "x_retained" in attack.log and "x_intercepted" in attack.log

    def test_information_gain_negligible(self):
        info = eve_information("intercept-resend", FIFTY, trials=3000, seed=7)
        assert info.mi_with_broadcasts_bits <= 0.05


class TestCloneNoise:
    def test_zero_delta_identity(self):
        params = RunParams(n_decoy_cb=2, n_decoy_ab=2, n_decoy_abo=2)
        _, clean = run_with(None, seed=8, params=params)
        attack = CloneNoiseAttack(delta=0.0)
        _, tapped = run_with(attack, seed=8, params=params)
        assert tapped.decode.announced_x == clean.decode.announced_x
        assert "x_copy_ca" in attack.log  # the (useless) copy still exists

    def test_detected_at_default_delta(self):
        det = detection_probability(FIFTY, 100, seed=9,
                                    attack_factory=lambda: make_attack("clone-noise"))
        assert det.p_detect >= 0.99

    def test_copies_track_inflight_values(self):
        params = RunParams(n_decoy_cb=0, n_decoy_ab=0, n_decoy_abo=0, threshold_c=1e9)
        attack = CloneNoiseAttack(delta=0.25)
        run, result = run_with(attack, seed=10, params=params)
        copy = float(attack.log["x_copy_ca"][0][0])
        # copy = in-flight value + N(0, delta): correlated, not exact
        assert np.isfinite(copy)

    def test_information_gain_negligible(self):
        info = eve_information("clone-noise", FIFTY, trials=3000, seed=11)
        assert info.mi_with_broadcasts_bits <= 0.05


class TestBeamSplitter:
    def test_full_transmission_decouples_eve(self):
        # beta = 1 everywhere: Eve's outputs are her own vacuum modes
        info = eve_information(
            "beam-splitter", FIFTY, trials=3000, seed=12,
            attack_params={"beta1": 1.0, "beta2": 1.0, "beta3": 1.0},
        )
        assert info.mi_tap_only_bits <= 0.02

    def test_balanced_replication_against_oracle(self):
        checks = beam_splitter_replication(10, seed=13)
        assert max(c.abs_diff for c in checks) <= 1e-9

    def test_detected_at_default(self):
        det = detection_probability(FIFTY, 100, seed=14,
                                    attack_factory=lambda: make_attack("beam-splitter"))
        assert det.p_detect >= 0.95

    def test_oracle_coefficient_structure(self):
        # with beta3 = 1 the memory arm drops out entirely
        coeff = beam_splitter_amplitude_coefficients(0.3, 0.7, 1.0)
        vars_ = attacks_module.ORACLE_VARS
        assert coeff[vars_.index("x_eve_0")] == 0.0
        assert coeff[vars_.index("r_bob_x")] == 0.0
        assert coeff[vars_.index("x_alice_msg")] == pytest.approx(np.sqrt(0.3))

    def test_invalid_transmission_rejected(self):
        with pytest.raises(InvalidArgumentError):
            BeamSplitterAttack(1.2, 0.5, 0.5)


class TestCatalog:
    def test_every_active_attack_aborts_runs(self):
        for kind in ACTIVE_ATTACKS:
            det = detection_probability(FIFTY, 100, seed=15,
                                        attack_factory=lambda: make_attack(kind))
            assert det.p_detect >= 0.95, kind

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidArgumentError):
            make_attack("side-channel")

    def test_unknown_parameters_rejected(self):
        with pytest.raises(InvalidArgumentError):
            make_attack("disturbance", {"magnitude": 2.0})

    def test_passive_listener_records_nothing(self):
        attack = make_attack("passive-listen")
        _, result = run_with(attack, seed=16,
                             params=RunParams(n_decoy_cb=2, n_decoy_ab=2, n_decoy_abo=2))
        assert result.status == "completed"
        assert attack.log == {}


class TestInformationAudit:
    def test_taps_never_touch_private_state(self):
        """Static audit: the strategy module must not reach into schedules,
        party messages, or run internals; its information set is the pulse,
        the bus, and its own log."""
        source = Path(attacks_module.__file__).read_text()
        forbidden = [
            r"\.r_bob\b", r"\.r_alice\b", r"\._message\b", r"\._pair_snapshot\b",
            r"\brun\._", r"\btrain\._", r"\.offsets\b", r"DisplacementSchedule",
        ]
        for pattern in forbidden:
            assert not re.search(pattern, source), f"forbidden access: {pattern}"

    def test_tap_signature_excludes_run_objects(self):
        # taps receive only (state, mode, rng); nothing else is reachable
        attack = make_attack("disturbance")
        tap = attack.tap_for("cb", np.random.default_rng(0), bus=None)
        state = ps.vacuum_shot(2, np.random.default_rng(1), (3,))
        out = tap(state, 0, np.random.default_rng(2))
        assert isinstance(out, ps.ShotState)
