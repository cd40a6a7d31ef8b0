"""Monte-Carlo experiment drivers behind the presets and the CLI.

Each driver runs a self-contained experiment (reference statistics, engine
cross-validation, attack replication, eavesdropper information, participant
attacks) and returns plain records the CLI serializes to CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import phasespace as ps
from .attacks import (
    BeamSplitterAttack,
    beam_splitter_amplitude_coefficients,
    make_attack,
)
from .channel import TimeFrame
from .comparison import ComparisonParams, ComparisonRun
from .dialogue import CqdRun, DialogueMessage, DisplacementSchedule, RunParams, prepare_frames
from .errors import InvalidArgumentError, MetricDomainError
from .metrics import DetectionEstimate, detection_probability, draw_message, empirical_mi


# ---------------------------------------------------------------------------
# reference statistics


def reference_variance(r: float, n_frames: int, seed) -> tuple[float, float]:
    """Sample variance of the broadcast Bell reference over many frames.

    Returns ``(var_x_mu0, expected)`` with ``expected = exp(-2r)/4``.
    """
    rng = np.random.default_rng(seed)
    frames = [TimeFrame(i, "message") for i in range(n_frames)]
    schedule = DisplacementSchedule.draw(n_frames, 0.0, rng)
    _, ref_x, _, _ = prepare_frames(frames, r, schedule, rng)
    return float(np.var(ref_x)), float(np.exp(-2.0 * r) / 4.0)


# ---------------------------------------------------------------------------
# shot-versus-ensemble cross-validation


@dataclass
class PipelineCheck:
    pipeline: int
    n_ops: int
    max_z: float
    passed: bool


def _random_pipeline(rng: np.random.Generator, n_modes: int, max_ops: int) -> list[tuple]:
    ops = []
    for _ in range(rng.integers(1, max_ops + 1)):
        kind = rng.choice(
            ["displace", "squeeze", "beam-split", "beam-split-printed", "loss", "amplify"]
        )
        if kind == "displace":
            ops.append(("displace", int(rng.integers(n_modes)),
                        (float(rng.normal(0, 2)), float(rng.normal(0, 2)))))
        elif kind == "squeeze":
            i, j = rng.choice(n_modes, 2, replace=False)
            ops.append(("squeeze", int(i), int(j), float(rng.uniform(0.0, 1.2))))
        elif kind in ("beam-split", "beam-split-printed"):
            i, j = rng.choice(n_modes, 2, replace=False)
            variant = "physical" if kind == "beam-split" else "printed"
            ops.append(("beam-split", int(i), int(j), float(rng.uniform(0, 1)), variant))
        elif kind == "loss":
            ops.append(("loss", int(rng.integers(n_modes)),
                        float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.0, 0.5))))
        else:
            mode = "paper-ideal" if rng.integers(2) else "phase-insensitive"
            ops.append(("amplify", int(rng.integers(n_modes)),
                        float(rng.uniform(1.0, 2.0)), mode))
    return ops


def _apply_pipeline(state, ops, rng=None):
    for op in ops:
        if op[0] == "displace":
            state = ps.displace(state, op[1], op[2])
        elif op[0] == "squeeze":
            state = ps.two_mode_squeeze(state, op[1], op[2], op[3])
        elif op[0] == "beam-split":
            state = ps.beam_split(state, op[1], op[2], op[3], variant=op[4])
        elif op[0] == "loss":
            state = ps.loss_channel(state, op[1], op[2], op[3], rng=rng)
        elif op[0] == "amplify":
            state = ps.amplify(state, op[1], op[2], op[3], rng=rng)
    return state


def engine_cross_oracle(
    n_pipelines: int = 20,
    n_samples: int = 100_000,
    seed: int = 0,
    n_modes: int = 3,
    max_ops: int = 10,
    z_limit: float = 5.0,
) -> list[PipelineCheck]:
    """Compare shot statistics against ensemble predictions.

    For each random pipeline the shot engine propagates ``n_samples``
    vacuum realizations while the ensemble engine propagates the exact
    mean and covariance; every mean and covariance entry must agree within
    ``z_limit`` standard errors.
    """
    rng = np.random.default_rng(seed)
    checks = []
    for k in range(n_pipelines):
        ops = _random_pipeline(rng, n_modes, max_ops)
        ensemble = _apply_pipeline(ps.make_vacuum(n_modes), ops)
        shots = ps.sample_shot(ps.make_vacuum(n_modes), seed=[seed, k], shape=(n_samples,))
        shots = _apply_pipeline(shots, ops, rng=np.random.default_rng([seed, k, 1]))

        mean_pred, cov_pred = ensemble.mean, ensemble.cov
        mean_obs = shots.quads.mean(axis=0)
        cov_obs = np.cov(shots.quads.T, bias=True)
        var = np.diag(cov_pred)
        se_mean = np.sqrt(var / n_samples)
        se_cov = np.sqrt((np.outer(var, var) + cov_pred**2) / n_samples)
        z_mean = np.abs(mean_obs - mean_pred) / np.maximum(se_mean, 1e-30)
        z_cov = np.abs(cov_obs - cov_pred) / np.maximum(se_cov, 1e-30)
        max_z = float(max(z_mean.max(), z_cov.max()))
        checks.append(PipelineCheck(k, len(ops), max_z, max_z <= z_limit))
    return checks


# ---------------------------------------------------------------------------
# beam-splitter attack replication


@dataclass
class ReplicationCheck:
    realization: int
    betas: tuple[float, float, float]
    simulated: float
    predicted: float
    abs_diff: float


def beam_splitter_replication(n_realizations: int = 100, seed: int = 0) -> list[ReplicationCheck]:
    """Replay the tap network and compare Eve's amplitude record with the
    independent matrix-composition oracle, realization by realization."""
    rng = np.random.default_rng(seed)
    params = RunParams(n_decoy_cb=0, n_decoy_ab=0, n_decoy_abo=0)
    checks = []
    for k in range(n_realizations):
        betas = tuple(float(b) for b in rng.uniform(0.0, 1.0, 3))
        msg = draw_message(rng, 0.25)
        attack = BeamSplitterAttack(*betas, record_probes=True)
        run = CqdRun(params, msg, [seed, k], attack=attack, transcript_enabled=False)
        result = run.execute()
        if result.status != "completed":
            raise MetricDomainError("replication run unexpectedly aborted")
        simulated = float(attack.log["x_out"][0][0])
        variables = np.array(
            [
                run._pair_snapshot[0, 0],  # squeezed pair, amplitude of mode 0
                run._pair_snapshot[0, 2],  # squeezed pair, amplitude of mode 1
                attack.log["probe_x_ancilla_cb"][0][0],
                attack.log["probe_x_ancilla_ab"][0][0],
                run.schedule.r_bob[0, 0],
                run.schedule.r_alice[0, 0],
                msg.alice[0],
            ]
        )
        predicted = float(beam_splitter_amplitude_coefficients(*betas) @ variables)
        checks.append(ReplicationCheck(k, betas, simulated, predicted, abs(simulated - predicted)))
    return checks


# ---------------------------------------------------------------------------
# eavesdropper information


@dataclass
class EveInformation:
    attack: str
    mi_tap_only_bits: float
    mi_with_broadcasts_bits: float
    trials: int


def _eve_features(attack, bus) -> tuple[np.ndarray, np.ndarray]:
    """(tap-only features, broadcast features) for the single message frame."""
    tap_feats = []
    for key in sorted(attack.log):
        if key.startswith("probe_"):
            continue
        tap_feats.append(float(np.asarray(attack.log[key][0]).ravel()[0]))
    bc_feats = []
    for msg in bus.of_kind("bell-reference"):
        bc_feats.extend([msg.payload["x_mu0"], msg.payload["p_mu0"]])
    for msg in bus.of_kind("final-announcement"):
        bc_feats.extend([msg.payload["X"], msg.payload["P"]])
    for msg in bus.of_kind("schedule-reveal"):
        bc_feats.extend(msg.payload["r_bob"])
        bc_feats.extend(msg.payload["r_alice"])
    return np.array(tap_feats), np.array(bc_feats)


def eve_information(
    attack_kind: str,
    run_params: RunParams,
    trials: int = 10_000,
    seed: int = 0,
    attack_params: dict | None = None,
    message_variance: float = 0.25,
) -> EveInformation:
    """Empirical mutual information between Eve's view and Alice's amplitude.

    Runs complete dialogues with no decoy frames (so the tap is never the
    cause of an abort) and the schedule hidden: the reveal fraction is
    forced to zero, leaving Eve her tap records plus every broadcast.
    Reported both without and with the broadcast features.
    """
    params = replace(
        run_params, n_decoy_cb=0, n_decoy_ab=0, n_decoy_abo=0, reveal_fraction=0.0
    )
    secrets = np.empty(trials)
    taps = None
    bcs = None
    for t in range(trials):
        rng = np.random.default_rng([seed, t, 11])
        msg = draw_message(rng, message_variance)
        attack = make_attack(attack_kind, attack_params)
        run = CqdRun(params, msg, [seed, t], attack=attack, transcript_enabled=False)
        result = run.execute()
        if result.status != "completed":
            raise MetricDomainError("information run unexpectedly aborted")
        tap_f, bc_f = _eve_features(attack, run.bus)
        if taps is None:
            taps = np.empty((trials, tap_f.size))
            bcs = np.empty((trials, bc_f.size))
        secrets[t] = msg.alice[0]
        taps[t] = tap_f
        bcs[t] = bc_f
    min_samples = min(trials, 10_000)
    if taps.shape[1] == 0:
        mi_tap = 0.0
    else:
        mi_tap = empirical_mi(secrets, taps, min_samples=min_samples)
    mi_all = empirical_mi(
        secrets,
        np.hstack([taps, bcs]) if taps.shape[1] else bcs,
        min_samples=min_samples,
    )
    return EveInformation(attack_kind, mi_tap, mi_all, trials)


def transcript_information(
    run_params: RunParams,
    trials: int = 10_000,
    seed: int = 0,
    message_variance: float = 0.25,
) -> float:
    """MI between Alice's amplitude and the public transcript alone
    (broadcast values, schedule hidden): the leakage floor any outsider
    attains without touching the channel."""
    info = eve_information(
        "passive-listen", run_params, trials=trials, seed=seed,
        message_variance=message_variance,
    )
    return info.mi_with_broadcasts_bits


# ---------------------------------------------------------------------------
# participant attacks


@dataclass
class MaliciousCharlieReport:
    mode: str
    detection: DetectionEstimate | None
    sum_reconstruction_max_error: float | None
    mi_with_alice_bits: float | None


def malicious_charlie_report(
    mode: str,
    run_params: RunParams,
    trials: int,
    seed: int = 0,
    message_variance: float = 0.25,
    bob_variance: float | None = None,
) -> MaliciousCharlieReport:
    """Quantify the supervisor's participant attacks.

    ``aux-mode-swap`` and ``separable-state`` report the detection rate of
    the party-side checks; ``post-hoc`` reports how exactly the supervisor
    reconstructs the encoding sum from the final announcement plus his own
    schedule, and how little that tells him about Alice's part alone.
    """
    if mode in ("aux-mode-swap", "separable-state"):
        det = detection_probability(
            run_params, trials, seed, attack_factory=None, charlie_mode=mode,
            message_variance=message_variance,
        )
        return MaliciousCharlieReport(mode, det, None, None)
    if mode != "post-hoc":
        raise InvalidArgumentError(f"unknown malicious supervisor mode {mode!r}")
    params = replace(run_params, n_decoy_cb=0, n_decoy_ab=0, n_decoy_abo=0)
    bob_var = message_variance if bob_variance is None else bob_variance
    secrets = np.empty(trials)
    sums = np.empty(trials)
    max_err = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t, 11])
        a = rng.normal(0.0, np.sqrt(message_variance), 2)
        b = rng.normal(0.0, np.sqrt(bob_var), 2)
        msg = DialogueMessage(alice=(a[0], a[1]), bob=(b[0], b[1]))
        run = CqdRun(params, msg, [seed, t], transcript_enabled=False)
        result = run.execute()
        frame = int(np.flatnonzero(run.train.role_mask("message"))[0])
        sum_est = (
            run.schedule.r_bob[frame, 0]
            - run.schedule.r_alice[frame, 0]
            - result.decode.announced_x
        )
        secrets[t] = msg.alice[0]
        sums[t] = sum_est
        max_err = max(max_err, abs(sum_est - (msg.alice[0] + msg.bob[0])))
    mi = empirical_mi(secrets, sums, min_samples=min(trials, 10_000))
    return MaliciousCharlieReport(mode, None, max_err, mi)


def smp_intercept_samples(
    params: ComparisonParams,
    trials: int,
    seed: int = 0,
    wealth_variance: float = 0.25,
    intercept_hop: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Samples of (Bob's wealth, malicious supervisor's mid-ring estimate).

    The supervisor grabs the traveling mode after the first encoder; with
    the two-party hardening mask the estimate is blinded by the mask."""
    secrets = np.empty(trials)
    estimates = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng([seed, t, 11])
        x_bob, x_alice = rng.normal(0.0, np.sqrt(wealth_variance), 2)
        run = ComparisonRun(
            [float(x_bob), float(x_alice)], params, [seed, t],
            charlie_intercept_hop=intercept_hop, transcript_enabled=False,
        )
        result = run.execute()
        if result._intercept_estimate is None:
            raise MetricDomainError("intercept estimate missing")
        secrets[t] = x_bob
        estimates[t] = result._intercept_estimate
    return secrets, estimates
