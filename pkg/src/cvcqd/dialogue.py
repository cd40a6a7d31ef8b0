"""Controlled-dialogue protocol: Charlie, Alice and Bob over a pulse train.

One run executes, in a fixed deterministic order:

1. Charlie prepares every frame: vacuum pair, his offset displacements,
   two-mode squeezing, a broadcast Bell reference per frame, then his
   secret schedule displacements (R values) on both modes.
2. Mode 0 of every frame travels to Bob; Charlie and Bob verify the
   `decoy-CB` frames against the broadcast references.
3. Mode 1 travels to Alice; Alice and Bob verify the `decoy-AB` frames
   with Charlie's revealed decoy schedule entries.
4. Alice encodes her message on the message frame (and fresh decoy
   displacements on the `decoy-ABo` frames), sends mode 1 to Bob, who
   verifies the `decoy-ABo` frames with both reveals.
5. Bob encodes, Bell-measures the message frame, and announces the
   combinations X and P; Charlie then releases a (possibly blurred)
   view of the message frame's schedule entries; each party subtracts
   what it knows to estimate the other's message.

The broadcast reference is computed from the same noise realization that
continues into the run (one realization per frame), which is what makes
the decode identities exact; a ``fresh_reference`` flag switches to an
independently sampled reference whose variance then adds to every check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import phasespace as ps
from .channel import (
    ROLE_DECOY_AB,
    ROLE_DECOY_ABO,
    ROLE_DECOY_CB,
    ROLE_MESSAGE,
    BroadcastBus,
    ChannelParams,
    ClassicalMsg,
    PulseTrain,
    RunTranscript,
    TimeFrame,
    schedule_frames,
    transfer,
)
from .errors import InvalidArgumentError, ProtocolOrderError

SQRT2 = np.sqrt(2.0)

#: Chi-square concentration parameter for the per-checkpoint variance test.
#: P(chi2_n/n > variance_ratio_limit(n)) <= exp(-VARIANCE_TEST_T) for an
#: honest channel whose true deviation variance saturates the prediction.
VARIANCE_TEST_T = 8.0


def variance_ratio_limit(n: int, t: float = VARIANCE_TEST_T) -> float:
    """Upper bound for mean(d^2)/V_pred accepted at a checkpoint of n decoys."""
    if n < 1:
        return np.inf
    return 1.0 + 2.0 * np.sqrt(2.0 * t / n) + 2.0 * t / n


@dataclass
class DisplacementSchedule:
    """Charlie's per-frame secrets.

    ``r_bob[f]`` displaces the mode sent to Bob, ``r_alice[f]`` the mode
    kept for (or sent to) Alice, each an ``(x, p)`` pair drawn i.i.d.
    Gaussian with variance ``variance`` per quadrature.  ``offsets[f]``
    holds the preparation displacements ``(x', y')``: ``x'`` shifts both
    quadratures of mode 0 and ``y'`` both quadratures of mode 1.
    Entries stay private to Charlie until the reveal events.
    """

    r_bob: np.ndarray
    r_alice: np.ndarray
    offsets: np.ndarray
    variance: float

    @classmethod
    def draw(
        cls,
        n_frames: int,
        variance: float,
        rng: np.random.Generator,
        offset_x: float = 0.0,
        offset_y: float = 0.0,
    ) -> "DisplacementSchedule":
        if variance < 0:
            raise InvalidArgumentError("schedule variance must be >= 0")
        std = np.sqrt(variance)
        r_bob = rng.normal(0.0, std, (n_frames, 2)) if variance > 0 else np.zeros((n_frames, 2))
        r_alice = rng.normal(0.0, std, (n_frames, 2)) if variance > 0 else np.zeros((n_frames, 2))
        offsets = np.tile(np.array([offset_x, offset_y]), (n_frames, 1))
        return cls(r_bob=r_bob, r_alice=r_alice, offsets=offsets, variance=variance)


@dataclass(frozen=True)
class DialogueMessage:
    """The two encodings of one dialogue round, in shot-noise units."""

    alice: tuple[float, float]
    bob: tuple[float, float]


@dataclass
class DecodeResult:
    """Outcome of the final measurement, reveal, and subtraction."""

    announced_x: float
    announced_p: float
    alice_estimate: tuple[float, float]  # Bob's estimate of Alice's (x, p)
    bob_estimate: tuple[float, float]  # Alice's estimate of Bob's (x, p)
    residuals: dict
    mse: float


@dataclass
class CheckpointVerdict:
    name: str
    passed: bool
    n_frames: int
    max_abs_z: float
    variance_ratio: float
    worst_frame: int | None


@dataclass
class RunParams:
    """Physics and policy knobs for one dialogue run."""

    r: float = 1.0
    channel_cb: ChannelParams = field(default_factory=ChannelParams)
    channel_ca: ChannelParams = field(default_factory=ChannelParams)
    channel_ab: ChannelParams = field(default_factory=ChannelParams)
    n_decoy_cb: int = 50
    n_decoy_ab: int = 50
    n_decoy_abo: int = 50
    threshold_c: float = 4.0
    schedule_variance: float = 25.0
    offset_x: float = 0.0
    offset_y: float = 0.0
    reveal_fraction: float = 1.0  # kappa: 1 = full reveal, 0 = none
    fresh_reference: bool = False
    reapply_offsets_on_fresh: bool = True
    quantize_bits: int | None = None
    quantize_span: float = 8.0

    def __post_init__(self):
        if self.r < 0:
            raise InvalidArgumentError("squeezing r must be >= 0")
        if not 0.0 <= self.reveal_fraction <= 1.0:
            raise InvalidArgumentError("reveal fraction must lie in [0, 1]")
        if self.threshold_c <= 0:
            raise InvalidArgumentError("threshold c must be > 0")


def reference_term(r: float, fresh_reference: bool) -> float:
    """Squeezed-pair contribution to a check's predicted variance.

    With the shared-realization reference the deviation cancels exactly and
    ``exp(-2r)/2`` is a deliberate safety margin; with an independent
    reference its own variance adds, tripling the term.
    """
    base = np.exp(-2.0 * r) / 2.0
    return 3.0 * base if fresh_reference else base


def predicted_check_variance(r: float, hops: list[ChannelParams], fresh_reference: bool = False) -> float:
    """V_pred for a decoy deviation accumulated over the given hops."""
    return reference_term(r, fresh_reference) + sum(h.added_noise_variance() for h in hops)


def decoy_deviation(
    m_recv: np.ndarray,
    m_partner: np.ndarray,
    coin_is_p: np.ndarray,
    ref_x: np.ndarray,
    ref_p: np.ndarray,
    rev_x: np.ndarray,
    rev_p: np.ndarray,
) -> np.ndarray:
    """Per-frame deviation between measured and predicted decoy values.

    For an x coin the correlated combination is a difference, for a p coin
    a sum; the prediction is sqrt(2) times the broadcast reference plus the
    revealed displacement terms.  Exactly zero for an honest ideal channel
    under the shared-realization reference.
    """
    ref = np.where(coin_is_p, ref_p, ref_x)
    rev = np.where(coin_is_p, rev_p, rev_x)
    sign = np.where(coin_is_p, 1.0, -1.0)
    return m_recv + sign * m_partner - SQRT2 * ref - rev


def verify_decoy(deviation: float, c: float, v_pred: float) -> tuple[bool, float]:
    """Single-frame decoy check: pass iff |d| <= c * sqrt(V_pred)."""
    if v_pred <= 0:
        raise InvalidArgumentError("v_pred must be > 0")
    z = abs(deviation) / np.sqrt(v_pred)
    return bool(z <= c), float(z)


def checkpoint_verdict(
    name: str,
    deviations: np.ndarray,
    frame_indices: np.ndarray,
    c: float,
    v_pred: float,
) -> CheckpointVerdict:
    """Aggregate a checkpoint: per-frame thresholds plus a variance test.

    The variance test compares mean(d^2) to V_pred with a chi-square
    concentration limit, which catches attacks that inflate the deviation
    spread without pushing single frames past the c-sigma rail.
    """
    n = deviations.shape[0]
    if n == 0:
        return CheckpointVerdict(name, True, 0, 0.0, 0.0, None)
    z = np.abs(deviations) / np.sqrt(v_pred)
    ratio = float(np.mean(deviations**2) / v_pred)
    worst = int(np.argmax(z))
    per_frame_ok = bool(np.max(z) <= c)
    variance_ok = ratio <= variance_ratio_limit(n)
    passed = per_frame_ok and variance_ok
    return CheckpointVerdict(
        name=name,
        passed=passed,
        n_frames=n,
        max_abs_z=float(np.max(z)),
        variance_ratio=ratio,
        worst_frame=int(frame_indices[worst]) if not passed else None,
    )


def quantize(values: np.ndarray, bits: int, span: float) -> np.ndarray:
    """Snap values to the centers of 2**bits intervals covering [-span, span)."""
    if bits < 1:
        raise InvalidArgumentError("quantize bits must be >= 1")
    levels = 2**bits
    step = 2.0 * span / levels
    idx = np.clip(np.floor((np.asarray(values) + span) / step), 0, levels - 1)
    return -span + (idx + 0.5) * step


def announce_combinations(bell_final: tuple[float, float], reference: tuple[float, float]) -> tuple[float, float]:
    """Bob's public combinations of the final and reference Bell outcomes.

    ``X = sqrt(2) (x_mu1 - x_mu0)`` equals ``r_bob_x - r_alice_x - x_bob -
    x_alice`` in ideal mode, and ``P = sqrt(2) (p_mu1 - p_mu0)`` equals
    ``p_bob_r + p_alice_r + p_bob + p_alice``.
    """
    return (
        SQRT2 * (bell_final[0] - reference[0]),
        SQRT2 * (bell_final[1] - reference[1]),
    )


def estimate_partner(
    r_bob: np.ndarray,
    r_alice: np.ndarray,
    own_message: tuple[float, float],
    announced: tuple[float, float],
) -> tuple[float, float]:
    """One party's estimate of the other's encoding after the reveal.

    Amplitude: ``r_bob_x - r_alice_x - own_x - X``; phase:
    ``P - r_bob_p - r_alice_p - own_p``.  Both parties use the same form,
    each subtracting its own message.
    """
    return (
        float(r_bob[0] - r_alice[0] - own_message[0] - announced[0]),
        float(announced[1] - r_bob[1] - r_alice[1] - own_message[1]),
    )


def prepare_frames(
    frames: list[TimeFrame],
    r: float,
    schedule: DisplacementSchedule,
    rng: np.random.Generator,
    fresh_reference: bool = False,
    reapply_offsets_on_fresh: bool = True,
):
    """Charlie's preparation of the whole train.

    Returns ``(train, ref_x, ref_p, pair_snapshot)`` where the references
    are the per-frame broadcast Bell values and ``pair_snapshot`` is the
    realized post-squeezing quadrature array (experimenter access used by
    replication oracles, never by parties other than Charlie).
    """
    n = len(frames)
    state = ps.vacuum_shot(2, rng, (n,))
    state = ps.displace(state, 0, (schedule.offsets[:, 0], schedule.offsets[:, 0]))
    state = ps.displace(state, 1, (schedule.offsets[:, 1], schedule.offsets[:, 1]))
    state = ps.two_mode_squeeze(state, 0, 1, r)

    if fresh_reference:
        ref_state = ps.vacuum_shot(2, rng, (n,))
        if reapply_offsets_on_fresh:
            ref_state = ps.displace(ref_state, 0, (schedule.offsets[:, 0], schedule.offsets[:, 0]))
            ref_state = ps.displace(ref_state, 1, (schedule.offsets[:, 1], schedule.offsets[:, 1]))
        ref_state = ps.two_mode_squeeze(ref_state, 0, 1, r)
        ref_source = ref_state
    else:
        ref_source = state

    ref_x = (ref_source.x(0) - ref_source.x(1)) / SQRT2
    ref_p = (ref_source.p(0) + ref_source.p(1)) / SQRT2
    pair_snapshot = state.quads.copy()

    state = ps.displace(state, 0, (schedule.r_bob[:, 0], schedule.r_bob[:, 1]))
    state = ps.displace(state, 1, (schedule.r_alice[:, 0], schedule.r_alice[:, 1]))

    train = PulseTrain(frames=frames, state=state, consumed=np.zeros((n, 2), dtype=bool))
    return train, ref_x, ref_p, pair_snapshot


def charlie_prepare(
    frame: TimeFrame,
    r: float,
    schedule: DisplacementSchedule,
    seed,
    fresh_reference: bool = False,
):
    """Single-frame preparation; returns the pulse and its broadcast reference."""
    rng = np.random.default_rng(seed)
    train, ref_x, ref_p, _ = prepare_frames([frame], r, schedule, rng, fresh_reference)
    return train, ps.BellOutcome(float(ref_x[0]), float(ref_p[0]))


@dataclass
class CqdResult:
    status: str
    abort_reason: str | None
    abort_frame: int | None
    checkpoints: list[CheckpointVerdict]
    decode: DecodeResult | None
    message: DialogueMessage | None
    transcript: RunTranscript


class CqdRun:
    """One dialogue round, executed as a deterministic event loop.

    Parties interact only through mode transfers and the broadcast bus;
    Charlie's schedule and the parties' messages live in private fields.
    All randomness comes from child generators of the run seed, so two
    runs with equal configuration and seed are bitwise identical.
    """

    def __init__(
        self,
        params: RunParams,
        message: DialogueMessage,
        seed,
        attack=None,
        charlie_mode: str = "honest",
        transcript_enabled: bool = True,
    ):
        self.params = params
        self.attack = attack
        self.charlie_mode = charlie_mode
        self.transcript = RunTranscript(enabled=transcript_enabled)
        self.bus = BroadcastBus(self.transcript)
        seeds = np.random.SeedSequence(seed).spawn(6)
        self._rng_state = np.random.default_rng(seeds[0])
        self._rng_channel = np.random.default_rng(seeds[1])
        self._rng_eve = np.random.default_rng(seeds[2])
        self._rng_schedule = np.random.default_rng(seeds[3])
        self._rng_coins = np.random.default_rng(seeds[4])
        self._rng_reveal = np.random.default_rng(seeds[5])
        self._message = self._maybe_quantize(message)
        self._phase = "init"
        self._alice_decoys: np.ndarray | None = None
        self._announced: tuple[float, float] | None = None
        self.train: PulseTrain | None = None

    # -- helpers ------------------------------------------------------

    def _maybe_quantize(self, message: DialogueMessage) -> DialogueMessage:
        if self.params.quantize_bits is None:
            return message
        bits, span = self.params.quantize_bits, self.params.quantize_span
        qa = tuple(float(v) for v in quantize(np.array(message.alice), bits, span))
        qb = tuple(float(v) for v in quantize(np.array(message.bob), bits, span))
        return DialogueMessage(alice=qa, bob=qb)

    def _tap(self, hop: str):
        if self.attack is None:
            return None
        return self.attack.tap_for(hop, self._rng_eve, self.bus)

    def _coin(self, n: int) -> np.ndarray:
        coins = self._rng_coins.integers(0, 2, n).astype(bool)
        return coins

    # -- protocol phases ----------------------------------------------

    def execute(self) -> CqdResult:
        p = self.params
        frames = schedule_frames(
            p.n_decoy_cb, p.n_decoy_ab, p.n_decoy_abo, 1, self._rng_schedule.integers(2**63)
        )
        self.frames = frames
        n = len(frames)
        self.schedule = DisplacementSchedule.draw(
            n, p.schedule_variance, self._rng_schedule, p.offset_x, p.offset_y
        )
        self.transcript.append(None, "run", "frame-roles", {"roles": [f.role for f in frames]})

        if self.charlie_mode == "separable-state":
            self._prepare_separable(frames)
        else:
            self.train, self.ref_x, self.ref_p, self._pair_snapshot = prepare_frames(
                frames,
                p.r,
                self.schedule,
                self._rng_state,
                p.fresh_reference,
                p.reapply_offsets_on_fresh,
            )
        for f in frames:
            self.bus.broadcast(
                ClassicalMsg(
                    "charlie",
                    "bell-reference",
                    f.index,
                    {"x_mu0": float(self.ref_x[f.index]), "p_mu0": float(self.ref_p[f.index])},
                )
            )

        if self.charlie_mode == "aux-mode-swap":
            # Substitute a fresh mode for Bob's half; the genuine half moves
            # to a private slot Charlie keeps for his later joint measurement.
            self.train.state = ps.attach_vacuum(self.train.state, 1, self._rng_state)
            self.train.sync_modes()
            self.train.state = ps.swap_modes(self.train.state, 0, 2)

        if self.attack is not None:
            self.attack.observe_bus(self.bus)

        self._phase = "prepared"
        self.train = transfer(
            self.train, 0, p.channel_cb, self._rng_channel,
            tap=self._tap("cb"), transcript=self.transcript, hop="charlie->bob",
        )
        self.bus.broadcast(ClassicalMsg("bob", "receipt", None, {"hop": "charlie->bob"}))

        verdicts = []
        v1 = self._checkpoint_cb()
        verdicts.append(v1)
        if not v1.passed:
            return self._abort("decoy-fail-CB", v1, verdicts)

        self.train = transfer(
            self.train, 1, p.channel_ca, self._rng_channel,
            tap=self._tap("ca"), transcript=self.transcript, hop="charlie->alice",
        )
        self.bus.broadcast(ClassicalMsg("alice", "receipt", None, {"hop": "charlie->alice"}))

        v2 = self._checkpoint_ab()
        verdicts.append(v2)
        if not v2.passed:
            return self._abort("decoy-fail-AB", v2, verdicts)

        self._phase = "verified"
        self._alice_encode()
        self.train = transfer(
            self.train, 1, p.channel_ab, self._rng_channel,
            tap=self._tap("ab"), transcript=self.transcript, hop="alice->bob",
        )
        self.bus.broadcast(ClassicalMsg("bob", "receipt", None, {"hop": "alice->bob"}))

        v3 = self._checkpoint_abo()
        verdicts.append(v3)
        if not v3.passed:
            return self._abort("decoy-fail-ABo", v3, verdicts)

        self._bob_encode()
        decode = self._finalize_and_decode()
        if self.attack is not None:
            self.attack.finalize(self.train, self._rng_eve, self.bus)
        self.transcript.mark_completed()
        return CqdResult(
            status="completed",
            abort_reason=None,
            abort_frame=None,
            checkpoints=verdicts,
            decode=decode,
            message=self._message,
            transcript=self.transcript,
        )

    def _prepare_separable(self, frames: list[TimeFrame]) -> None:
        """Adversarial preparation: two independent modes whose marginal
        variances match the honest pair, with the classical spread known to
        Charlie.  The broadcast reference uses only what Charlie can know,
        so the unknowable fresh vacuum noise survives in every check."""
        p = self.params
        n = len(frames)
        state = ps.vacuum_shot(2, self._rng_state, (n,))
        spread = np.sinh(p.r) ** 2 / 2.0
        known = self._rng_state.normal(0.0, np.sqrt(spread), (n, 4)) if spread > 0 else np.zeros((n, 4))
        state = ps.displace(state, 0, (known[:, 0] + self.schedule.offsets[:, 0],
                                       known[:, 1] + self.schedule.offsets[:, 0]))
        state = ps.displace(state, 1, (known[:, 2] + self.schedule.offsets[:, 1],
                                       known[:, 3] + self.schedule.offsets[:, 1]))
        self.ref_x = (known[:, 0] + self.schedule.offsets[:, 0]
                      - known[:, 2] - self.schedule.offsets[:, 1]) / SQRT2
        self.ref_p = (known[:, 1] + self.schedule.offsets[:, 0]
                      + known[:, 3] + self.schedule.offsets[:, 1]) / SQRT2
        self._pair_snapshot = state.quads.copy()
        state = ps.displace(state, 0, (self.schedule.r_bob[:, 0], self.schedule.r_bob[:, 1]))
        state = ps.displace(state, 1, (self.schedule.r_alice[:, 0], self.schedule.r_alice[:, 1]))
        self.train = PulseTrain(frames=frames, state=state, consumed=np.zeros((n, 2), dtype=bool))

    def _reveal_decoy_entries(self, mask: np.ndarray) -> None:
        idx = np.flatnonzero(mask)
        self.bus.broadcast(
            ClassicalMsg(
                "charlie",
                "decoy-reveal",
                None,
                {
                    "frames": idx.tolist(),
                    "r_bob": self.schedule.r_bob[idx].tolist(),
                    "r_alice": self.schedule.r_alice[idx].tolist(),
                },
            )
        )

    def _broadcast_measurements(self, actor: str, mask: np.ndarray, values: np.ndarray, coin_is_p: np.ndarray) -> None:
        idx = np.flatnonzero(mask)
        self.bus.broadcast(
            ClassicalMsg(
                actor,
                "decoy-measurement",
                None,
                {
                    "frames": idx.tolist(),
                    "quadrature": ["p" if c else "x" for c in coin_is_p],
                    "values": values.tolist(),
                },
            )
        )

    def _checkpoint_cb(self) -> CheckpointVerdict:
        p = self.params
        mask = self.train.role_mask(ROLE_DECOY_CB)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return CheckpointVerdict("CB", True, 0, 0.0, 0.0, None)
        coins = self._coin(idx.size)
        self.bus.broadcast(
            ClassicalMsg("bob", "decoy-coin", None,
                         {"frames": idx.tolist(), "quadrature": ["p" if c else "x" for c in coins]})
        )
        bob_vals = self._measure_masked(mask, 0, coins)
        self._broadcast_measurements("bob", mask, bob_vals, coins)
        if self.charlie_mode in ("aux-mode-swap", "separable-state"):
            # A malicious supervisor announces whatever evades the first
            # checkpoint; he speaks after Bob, so a consistent value is
            # always available to him.
            rev_x = self.schedule.r_bob[idx, 0] - self.schedule.r_alice[idx, 0]
            rev_p = self.schedule.r_bob[idx, 1] + self.schedule.r_alice[idx, 1]
            ref = np.where(coins, self.ref_p[idx], self.ref_x[idx])
            rev = np.where(coins, rev_p, rev_x)
            charlie_vals = np.where(coins, 1.0, -1.0) * (SQRT2 * ref + rev - bob_vals)
            self.train.consumed[mask, 1] = True
        else:
            charlie_vals = self._measure_masked(mask, 1, coins)
        self._broadcast_measurements("charlie", mask, charlie_vals, coins)
        self._reveal_decoy_entries(mask)
        d = decoy_deviation(
            bob_vals,
            charlie_vals,
            coins,
            self.ref_x[idx],
            self.ref_p[idx],
            self.schedule.r_bob[idx, 0] - self.schedule.r_alice[idx, 0],
            self.schedule.r_bob[idx, 1] + self.schedule.r_alice[idx, 1],
        )
        v_pred = predicted_check_variance(p.r, [p.channel_cb], p.fresh_reference)
        verdict = checkpoint_verdict("CB", d, idx, p.threshold_c, v_pred)
        self._broadcast_verdict(verdict)
        return verdict

    def _checkpoint_ab(self) -> CheckpointVerdict:
        p = self.params
        mask = self.train.role_mask(ROLE_DECOY_AB)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return CheckpointVerdict("AB", True, 0, 0.0, 0.0, None)
        coins = self._coin(idx.size)
        self.bus.broadcast(
            ClassicalMsg("alice", "decoy-coin", None,
                         {"frames": idx.tolist(), "quadrature": ["p" if c else "x" for c in coins]})
        )
        bob_vals = self._measure_masked(mask, 0, coins)
        alice_vals = self._measure_masked(mask, 1, coins)
        self._broadcast_measurements("bob", mask, bob_vals, coins)
        self._broadcast_measurements("alice", mask, alice_vals, coins)
        self._reveal_decoy_entries(mask)
        d = decoy_deviation(
            bob_vals,
            alice_vals,
            coins,
            self.ref_x[idx],
            self.ref_p[idx],
            self.schedule.r_bob[idx, 0] - self.schedule.r_alice[idx, 0],
            self.schedule.r_bob[idx, 1] + self.schedule.r_alice[idx, 1],
        )
        v_pred = predicted_check_variance(p.r, [p.channel_cb, p.channel_ca], p.fresh_reference)
        verdict = checkpoint_verdict("AB", d, idx, p.threshold_c, v_pred)
        self._broadcast_verdict(verdict)
        return verdict

    def _alice_encode(self) -> None:
        if self._phase != "verified":
            raise ProtocolOrderError("encoding before channel verification")
        mask_msg = self.train.role_mask(ROLE_MESSAGE)
        mask_abo = self.train.role_mask(ROLE_DECOY_ABO)
        n = self.train.n_frames
        x_shift = np.zeros(n)
        p_shift = np.zeros(n)
        x_shift[mask_msg] = self._message.alice[0]
        p_shift[mask_msg] = self._message.alice[1]
        decoys = self._rng_state.normal(
            0.0, np.sqrt(self.params.schedule_variance), (int(mask_abo.sum()), 2)
        )
        self._alice_decoys = decoys
        x_shift[mask_abo] = decoys[:, 0]
        p_shift[mask_abo] = decoys[:, 1]
        self.train.state = ps.displace(self.train.state, 1, (x_shift, p_shift))

    def _checkpoint_abo(self) -> CheckpointVerdict:
        p = self.params
        mask = self.train.role_mask(ROLE_DECOY_ABO)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return CheckpointVerdict("ABo", True, 0, 0.0, 0.0, None)
        coins = self._coin(idx.size)
        self.bus.broadcast(
            ClassicalMsg("bob", "decoy-coin", None,
                         {"frames": idx.tolist(), "quadrature": ["p" if c else "x" for c in coins]})
        )
        stored_vals = self._measure_masked(mask, 0, coins)
        recv_vals = self._measure_masked(mask, 1, coins)
        self._broadcast_measurements("bob", mask, stored_vals, coins)
        self._broadcast_measurements("bob", mask, recv_vals, coins)
        self._reveal_decoy_entries(mask)
        self.bus.broadcast(
            ClassicalMsg(
                "alice", "decoy-reveal", None,
                {"frames": idx.tolist(), "displacements": self._alice_decoys.tolist()},
            )
        )
        d = decoy_deviation(
            stored_vals,
            recv_vals,
            coins,
            self.ref_x[idx],
            self.ref_p[idx],
            self.schedule.r_bob[idx, 0] - self.schedule.r_alice[idx, 0] - self._alice_decoys[:, 0],
            self.schedule.r_bob[idx, 1] + self.schedule.r_alice[idx, 1] + self._alice_decoys[:, 1],
        )
        v_pred = predicted_check_variance(
            p.r, [p.channel_cb, p.channel_ca, p.channel_ab], p.fresh_reference
        )
        verdict = checkpoint_verdict("ABo", d, idx, p.threshold_c, v_pred)
        self._broadcast_verdict(verdict)
        return verdict

    def _bob_encode(self) -> None:
        mask_msg = self.train.role_mask(ROLE_MESSAGE)
        n = self.train.n_frames
        x_shift = np.zeros(n)
        p_shift = np.zeros(n)
        x_shift[mask_msg] = self._message.bob[0]
        p_shift[mask_msg] = self._message.bob[1]
        self.train.state = ps.displace(self.train.state, 1, (x_shift, p_shift))

    def reveal_schedule(self, frame_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Charlie's controlled release for the message frame.

        With reveal fraction kappa the published entries are the true ones
        plus Gaussian blur of variance (1 - kappa) * V_R per quadrature, a
        continuous dial from full decode (kappa=1) to none (kappa=0).
        """
        if self._announced is None:
            raise ProtocolOrderError("schedule reveal before the final announcement")
        kappa = self.params.reveal_fraction
        blur = np.sqrt((1.0 - kappa) * self.params.schedule_variance)
        noise = self._rng_reveal.normal(0.0, 1.0, 4)
        r_bob = self.schedule.r_bob[frame_idx] + blur * noise[:2]
        r_alice = self.schedule.r_alice[frame_idx] + blur * noise[2:]
        self.bus.broadcast(
            ClassicalMsg(
                "charlie", "schedule-reveal", frame_idx,
                {"r_bob": r_bob.tolist(), "r_alice": r_alice.tolist(), "kappa": kappa},
            )
        )
        return r_bob, r_alice

    def _finalize_and_decode(self) -> DecodeResult:
        mask_msg = self.train.role_mask(ROLE_MESSAGE)
        frame_idx = int(np.flatnonzero(mask_msg)[0])
        bell = self.train.bell_measure(mask_msg, 0, 1)
        announced_x, announced_p = announce_combinations(
            (float(bell.x_mu[0]), float(bell.p_mu[0])),
            (float(self.ref_x[frame_idx]), float(self.ref_p[frame_idx])),
        )
        self._announced = (announced_x, announced_p)
        self.bus.broadcast(
            ClassicalMsg("bob", "final-announcement", frame_idx,
                         {"X": announced_x, "P": announced_p})
        )
        r_bob, r_alice = self.reveal_schedule(frame_idx)

        x_a, p_a = self._message.alice
        x_b, p_b = self._message.bob
        est_alice = estimate_partner(r_bob, r_alice, self._message.bob, (announced_x, announced_p))
        est_bob = estimate_partner(r_bob, r_alice, self._message.alice, (announced_x, announced_p))
        residuals = {
            "x_alice": abs(est_alice[0] - x_a),
            "p_alice": abs(est_alice[1] - p_a),
            "x_bob": abs(est_bob[0] - x_b),
            "p_bob": abs(est_bob[1] - p_b),
        }
        mse = float(np.mean([v**2 for v in residuals.values()]))
        decode = DecodeResult(
            announced_x=announced_x,
            announced_p=announced_p,
            alice_estimate=est_alice,
            bob_estimate=est_bob,
            residuals=residuals,
            mse=mse,
        )
        self.transcript.append(
            frame_idx, "run", "decode",
            {"residual_max": max(residuals.values()), "mse": mse},
        )
        return decode

    # -- small utilities ----------------------------------------------

    def _measure_masked(self, mask: np.ndarray, mode: int, coin_is_p: np.ndarray) -> np.ndarray:
        """Measure the coin-chosen quadrature of one mode on masked frames."""
        if np.any(self.train.consumed[mask, mode]):
            raise ProtocolOrderError("decoy frame measured twice")
        idx_x = 2 * mode
        rows = np.flatnonzero(mask)
        vals = np.where(
            coin_is_p,
            self.train.state.quads[rows, idx_x + 1],
            self.train.state.quads[rows, idx_x],
        )
        self.train.consumed[rows, mode] = True
        return vals

    def _broadcast_verdict(self, verdict: CheckpointVerdict) -> None:
        self.bus.broadcast(
            ClassicalMsg(
                "run", "decoy-verdict", verdict.worst_frame,
                {
                    "checkpoint": verdict.name,
                    "passed": verdict.passed,
                    "n": verdict.n_frames,
                    "max_abs_z": verdict.max_abs_z,
                    "variance_ratio": verdict.variance_ratio,
                },
            )
        )

    def _abort(self, reason: str, verdict: CheckpointVerdict, verdicts: list) -> CqdResult:
        frame = verdict.worst_frame if verdict.worst_frame is not None else -1
        self.transcript.mark_aborted(reason, frame)
        return CqdResult(
            status="aborted",
            abort_reason=reason,
            abort_frame=frame,
            checkpoints=verdicts,
            decode=None,
            message=self._message,
            transcript=self.transcript,
        )


def run_dialogue(
    params: RunParams,
    message: DialogueMessage,
    seed,
    attack=None,
    charlie_mode: str = "honest",
    transcript_enabled: bool = True,
) -> CqdResult:
    """Convenience wrapper: build and execute one dialogue run."""
    return CqdRun(
        params, message, seed, attack=attack, charlie_mode=charlie_mode,
        transcript_enabled=transcript_enabled,
    ).execute()
