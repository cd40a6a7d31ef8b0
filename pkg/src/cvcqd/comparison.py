"""Private wealth comparison on a ring topology.

The supervisor keeps one half of the squeezed pair and circulates the other
half through the parties: each of the first n-1 parties displaces the
traveling mode by its wealth, the last party by minus (n-1) times its
wealth, and the supervisor closes the ring with a Bell measurement against
his retained half.  After subtracting his own schedule entries the closing
statistic equals ``sum_{i<n} x_i - (n-1) x_n`` exactly in ideal mode; for
two parties that is Bob's wealth minus Alice's, so the sign orders them.

Equality is declared when the statistic falls inside a tolerance derived
from the channel's predicted residual variance.  Cancellations with
unequal inputs (possible for n >= 3) are an inherent blind spot of the
statistic and are reported as equality; only the all-equal question is
actually decided.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import phasespace as ps
from .channel import (
    BroadcastBus,
    ChannelParams,
    ClassicalMsg,
    PulseTrain,
    RunTranscript,
    TimeFrame,
    transfer,
)
from .dialogue import (
    DisplacementSchedule,
    checkpoint_verdict,
    decoy_deviation,
    prepare_frames,
    reference_term,
)
from .errors import InvalidArgumentError

SQRT2 = np.sqrt(2.0)

ROLE_MESSAGE = "message"

VERDICT_LESS = "less"
VERDICT_EQUAL = "equal"
VERDICT_GREATER = "greater"
VERDICT_ALL_EQUAL = "all-equal"
VERDICT_NOT_EQUAL = "not-equal"


@dataclass
class ComparisonParams:
    r: float = 1.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    decoys_per_hop: int = 50
    threshold_c: float = 4.0
    schedule_variance: float = 25.0
    equality_tolerance: float | None = None  # None: 4 * sqrt(predicted residual)
    hardening_variance: float = 0.0  # two-party pre-shared mask, 0 = off
    fresh_reference: bool = False
    debug_expose_statistic: bool = False

    def residual_variance(self, n_hops: int) -> float:
        """Predicted variance of the closing statistic for an honest run."""
        ref = 2.0 * np.exp(-2.0 * self.r) if self.fresh_reference else 0.0
        return ref + n_hops * self.channel.added_noise_variance()

    def tolerance(self, n_hops: int) -> float:
        if self.equality_tolerance is not None:
            return self.equality_tolerance
        return max(4.0 * np.sqrt(self.residual_variance(n_hops)), 1e-9)


@dataclass
class ComparisonVerdict:
    """Announced record: ``statistic`` stays None unless the debug flag is set."""

    verdict: str | None
    statistic: float | None
    aborted: bool
    hop: int | None


@dataclass
class ComparisonResult:
    verdict: ComparisonVerdict
    n_parties: int
    transcript: RunTranscript
    # experimenter-only fields (never announced):
    _statistic: float | None = None
    _intercept_estimate: float | None = None


def smp_hardening_key(variance: float, seed, length: int = 1) -> dict[str, np.ndarray]:
    """Pre-shared mask for the two distrustful parties.

    Returns additive encoding offsets: the first encoder applies ``-k``,
    the second ``+k``, so the mask cancels in the closing statistic while
    blinding any single intercepted hop.
    """
    if variance < 0:
        raise InvalidArgumentError("hardening variance must be >= 0")
    rng = np.random.default_rng(seed)
    k = rng.normal(0.0, np.sqrt(variance), length) if variance > 0 else np.zeros(length)
    return {"bob": -k, "alice": k}


def _ring_frames(n_hops: int, decoys_per_hop: int, rng: np.random.Generator) -> list[TimeFrame]:
    roles = [f"decoy-hop-{h}" for h in range(n_hops) for _ in range(decoys_per_hop)]
    roles.append(ROLE_MESSAGE)
    roles = [roles[i] for i in rng.permutation(len(roles))]
    return [TimeFrame(index=i, role=role) for i, role in enumerate(roles)]


class ComparisonRun:
    """One ring comparison: supervisor -> P1 -> ... -> Pn -> supervisor."""

    def __init__(
        self,
        wealth: list[float],
        params: ComparisonParams,
        seed,
        charlie_intercept_hop: int | None = None,
        transcript_enabled: bool = True,
    ):
        if len(wealth) < 2:
            raise InvalidArgumentError("comparison needs at least two parties")
        self.wealth = [float(w) for w in wealth]
        self.params = params
        self.charlie_intercept_hop = charlie_intercept_hop
        self.transcript = RunTranscript(enabled=transcript_enabled)
        self.bus = BroadcastBus(self.transcript)
        seeds = np.random.SeedSequence(seed).spawn(4)
        self._rng_state = np.random.default_rng(seeds[0])
        self._rng_channel = np.random.default_rng(seeds[1])
        self._rng_coins = np.random.default_rng(seeds[2])
        self._rng_keys = np.random.default_rng(seeds[3])

    def execute(self) -> ComparisonResult:
        p = self.params
        n = len(self.wealth)
        n_hops = n + 1
        frames = _ring_frames(n_hops, p.decoys_per_hop, self._rng_coins)
        schedule = DisplacementSchedule.draw(len(frames), p.schedule_variance, self._rng_state)
        self.schedule = schedule
        train, ref_x, ref_p, _ = prepare_frames(
            frames, p.r, schedule, self._rng_state, p.fresh_reference
        )
        self.train, self.ref_x, self.ref_p = train, ref_x, ref_p
        for f in frames:
            self.bus.broadcast(
                ClassicalMsg(
                    "charlie", "bell-reference", f.index,
                    {"x_mu0": float(ref_x[f.index]), "p_mu0": float(ref_p[f.index])},
                )
            )

        masks = smp_hardening_key(p.hardening_variance, self._rng_keys.integers(2**63))
        encodings = self._party_encodings(masks)
        msg_mask = self.train.role_mask(ROLE_MESSAGE)
        msg_idx = int(np.flatnonzero(msg_mask)[0])
        intercept_estimate = None

        for hop in range(n_hops):
            receiver = f"party-{hop + 1}" if hop < n else "charlie"
            self.train = transfer(
                self.train, 0, p.channel, self._rng_channel,
                transcript=self.transcript, hop=f"hop-{hop}->{receiver}",
            )
            if self.charlie_intercept_hop == hop:
                intercept_estimate = self._charlie_intercept(msg_idx)
            verdict = self._checkpoint(hop, receiver)
            if not verdict.passed:
                self.transcript.mark_aborted(f"decoy-fail-hop-{hop}", verdict.worst_frame or -1)
                rec = ComparisonVerdict(verdict=None, statistic=None, aborted=True, hop=hop)
                return ComparisonResult(rec, n, self.transcript, None, intercept_estimate)
            if hop < n:
                shift = np.zeros(self.train.n_frames)
                shift[msg_mask] = encodings[hop]
                self.train.state = ps.displace(self.train.state, 0, (shift, shift))

        bell = self.train.bell_measure(msg_mask, 0, 1)
        x_mu1 = float(bell.x_mu[0])
        statistic = float(
            SQRT2 * (x_mu1 - float(ref_x[msg_idx]))
            - schedule.r_bob[msg_idx, 0]
            + schedule.r_alice[msg_idx, 0]
        )
        verdict = self._verdict(statistic, n, n_hops)
        self.bus.broadcast(
            ClassicalMsg(
                "charlie", "comparison-verdict", msg_idx,
                {"verdict": verdict.verdict, "statistic": verdict.statistic},
            )
        )
        self.transcript.mark_completed()
        return ComparisonResult(verdict, n, self.transcript, statistic, intercept_estimate)

    def _party_encodings(self, masks: dict[str, np.ndarray]) -> list[float]:
        """Displacements applied by parties 1..n on the message frame."""
        n = len(self.wealth)
        encodings = [self.wealth[i] for i in range(n - 1)]
        encodings.append(-(n - 1) * self.wealth[-1])
        if self.params.hardening_variance > 0 and n == 2:
            encodings[0] += float(masks["bob"][0])
            encodings[1] += float(masks["alice"][0])
        return encodings

    def _checkpoint(self, hop: int, receiver: str):
        p = self.params
        mask = self.train.role_mask(f"decoy-hop-{hop}")
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return checkpoint_verdict(f"hop-{hop}", np.zeros(0), idx, p.threshold_c, 1.0)
        coins = self._rng_coins.integers(0, 2, idx.size).astype(bool)
        recv_vals = self._measure_masked(mask, 0, coins)
        charlie_vals = self._measure_masked(mask, 1, coins)
        self.bus.broadcast(
            ClassicalMsg(
                receiver, "decoy-measurement", None,
                {"frames": idx.tolist(), "values": recv_vals.tolist()},
            )
        )
        self.bus.broadcast(
            ClassicalMsg(
                "charlie", "decoy-measurement", None,
                {"frames": idx.tolist(), "values": charlie_vals.tolist()},
            )
        )
        self.bus.broadcast(
            ClassicalMsg(
                "charlie", "decoy-reveal", None,
                {
                    "frames": idx.tolist(),
                    "r_bob": self.schedule.r_bob[idx].tolist(),
                    "r_alice": self.schedule.r_alice[idx].tolist(),
                },
            )
        )
        d = decoy_deviation(
            recv_vals,
            charlie_vals,
            coins,
            self.ref_x[idx],
            self.ref_p[idx],
            self.schedule.r_bob[idx, 0] - self.schedule.r_alice[idx, 0],
            self.schedule.r_bob[idx, 1] + self.schedule.r_alice[idx, 1],
        )
        v_pred = reference_term(p.r, p.fresh_reference) + (hop + 1) * p.channel.added_noise_variance()
        verdict = checkpoint_verdict(f"hop-{hop}", d, idx, p.threshold_c, max(v_pred, 1e-30))
        self.bus.broadcast(
            ClassicalMsg(
                "run", "decoy-verdict", verdict.worst_frame,
                {"checkpoint": verdict.name, "passed": verdict.passed, "n": verdict.n_frames},
            )
        )
        return verdict

    def _measure_masked(self, mask: np.ndarray, mode: int, coin_is_p: np.ndarray) -> np.ndarray:
        rows = np.flatnonzero(mask)
        idx_x = 2 * mode
        vals = np.where(
            coin_is_p,
            self.train.state.quads[rows, idx_x + 1],
            self.train.state.quads[rows, idx_x],
        )
        self.train.consumed[rows, mode] = True
        return vals

    def _charlie_intercept(self, msg_idx: int) -> float:
        """A malicious supervisor grabs the traveling mode mid-ring and forms
        his best estimate of the encodings applied so far; with the
        two-party hardening mask active the estimate stays blinded."""
        x_travel = float(self.train.state.quads[msg_idx, 0])
        x_kept = float(self.train.state.quads[msg_idx, 2])
        return (
            x_travel
            - x_kept
            - SQRT2 * float(self.ref_x[msg_idx])
            - float(self.schedule.r_bob[msg_idx, 0])
            + float(self.schedule.r_alice[msg_idx, 0])
        )

    def _verdict(self, statistic: float, n: int, n_hops: int) -> ComparisonVerdict:
        tol = self.params.tolerance(n_hops)
        if n == 2:
            if abs(statistic) <= tol:
                kind = VERDICT_EQUAL
            elif statistic > 0:
                kind = VERDICT_GREATER  # Bob (first party) holds more
            else:
                kind = VERDICT_LESS
        else:
            kind = VERDICT_ALL_EQUAL if abs(statistic) <= tol else VERDICT_NOT_EQUAL
        exposed = statistic if self.params.debug_expose_statistic else None
        return ComparisonVerdict(verdict=kind, statistic=exposed, aborted=False, hop=None)


def run_smp2(
    x_alice: float,
    x_bob: float,
    params: ComparisonParams,
    seed,
    transcript_enabled: bool = True,
    charlie_intercept_hop: int | None = None,
) -> ComparisonResult:
    """Two-party comparison; ``greater`` means Bob's wealth exceeds Alice's."""
    return ComparisonRun(
        [x_bob, x_alice], params, seed,
        charlie_intercept_hop=charlie_intercept_hop,
        transcript_enabled=transcript_enabled,
    ).execute()


def run_smp_n(
    wealth: list[float],
    params: ComparisonParams,
    seed,
    transcript_enabled: bool = True,
) -> ComparisonResult:
    """n-party private comparison: decides all-equal versus not-equal."""
    if len(wealth) < 3:
        raise InvalidArgumentError("multiparty comparison needs n >= 3 (use run_smp2 for two)")
    return ComparisonRun([float(w) for w in wealth], params, seed,
                         transcript_enabled=transcript_enabled).execute()


def closed_form_statistic(wealth: list[float]) -> float:
    """Independent closed form for the ring statistic."""
    n = len(wealth)
    return float(sum(wealth[:-1]) - (n - 1) * wealth[-1])
