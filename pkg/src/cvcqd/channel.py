"""Pulse-train and messaging substrate.

A run moves a train of two-mode pulses between parties over lossy channels
with optional adversary taps, while classical values travel over an
authenticated broadcast bus.  Everything observable is appended to a
transcript whose JSONL serialization is byte-stable under a fixed seed.

The train is represented as one batched :class:`~cvcqd.phasespace.ShotState`
whose leading axis indexes time frames, so a channel hop is a single
vectorized engine call.  Consumed-mode bookkeeping is per frame and per
mode: decoy frames die at their checkpoint while message frames survive to
the final measurement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import phasespace as ps
from .errors import InvalidArgumentError, InvalidStateError

ROLE_DECOY_CB = "decoy-CB"
ROLE_DECOY_AB = "decoy-AB"
ROLE_DECOY_ABO = "decoy-ABo"
ROLE_MESSAGE = "message"

CQD_ROLES = (ROLE_DECOY_CB, ROLE_DECOY_AB, ROLE_DECOY_ABO, ROLE_MESSAGE)


@dataclass(frozen=True)
class TimeFrame:
    """One slot of the pulse train: a frame index plus its assigned role."""

    index: int
    role: str


def schedule_frames(
    n_decoy_cb: int,
    n_decoy_ab: int,
    n_decoy_abo: int,
    n_message: int,
    seed,
) -> list[TimeFrame]:
    """Randomly interleave decoy and message roles, deterministically under seed.

    Decoy positions are unknown to an eavesdropper a priori; only the role
    multiset is public.
    """
    counts = (n_decoy_cb, n_decoy_ab, n_decoy_abo, n_message)
    if any(c < 0 for c in counts):
        raise InvalidArgumentError("frame counts must be >= 0")
    if n_message < 1:
        raise InvalidArgumentError("at least one message frame is required")
    roles = np.repeat(np.arange(4), counts)
    rng = np.random.default_rng(seed)
    roles = roles[rng.permutation(roles.shape[0])]
    return [TimeFrame(index=i, role=CQD_ROLES[r]) for i, r in enumerate(roles)]


@dataclass(frozen=True)
class ChannelParams:
    """One hop's transmission model: loss, excess noise, amplifier type."""

    eta: float = 1.0
    epsilon: float = 0.0
    amp_mode: str = "paper-ideal"

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise InvalidArgumentError("channel eta must lie in (0, 1]")
        if self.epsilon < 0.0:
            raise InvalidArgumentError("channel epsilon must be >= 0")
        if self.amp_mode not in ("paper-ideal", "phase-insensitive"):
            raise InvalidArgumentError(f"unknown amp mode {self.amp_mode!r}")

    @property
    def gain(self) -> float:
        return 1.0 / np.sqrt(self.eta)

    def added_noise_variance(self) -> float:
        """Per-quadrature noise a mode accumulates over one hop, after the
        receiver's gain-1/sqrt(eta) amplification restores its mean."""
        add = (1.0 - self.eta) / self.eta * (ps.VACUUM_VAR + self.epsilon)
        if self.amp_mode == "phase-insensitive":
            add += (1.0 / self.eta - 1.0) * ps.VACUUM_VAR
        return add


@dataclass(frozen=True)
class ClassicalMsg:
    """Authenticated broadcast: receivers always learn the true sender."""

    sender: str
    kind: str
    frame: int | None
    payload: dict


class RunTranscript:
    """Append-only event log for one run.

    Events carry ``{seq, frame, actor, kind, data}``; those field names are
    part of the serialization contract.  Replaying a run with the same
    seeds reproduces the JSONL bytes exactly.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.events: list[dict] = []
        self.status: str = "running"
        self.abort_reason: str | None = None
        self.abort_frame: int | None = None

    def append(self, frame: int | None, actor: str, kind: str, data: dict) -> None:
        if not self.enabled:
            return
        self.events.append(
            {
                "seq": len(self.events),
                "frame": frame,
                "actor": actor,
                "kind": kind,
                "data": _plain(data),
            }
        )

    def mark_completed(self) -> None:
        self.status = "completed"

    def mark_aborted(self, reason: str, frame: int) -> None:
        self.status = "aborted"
        self.abort_reason = reason
        self.abort_frame = int(frame)
        self.append(frame, "run", "abort", {"reason": reason})

    def broadcasts(self) -> list[dict]:
        """The public view: every bus event, in order (an eavesdropper sees
        exactly this plus whatever her taps recorded)."""
        return [e for e in self.events if e["kind"].startswith("broadcast")]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in self.events)


def _plain(obj):
    """Recursively convert numpy scalars/arrays for stable JSON output."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class BroadcastBus:
    """Strictly ordered public channel; every party (and Eve) reads it all."""

    def __init__(self, transcript: RunTranscript):
        self.transcript = transcript
        self.messages: list[ClassicalMsg] = []

    def broadcast(self, msg: ClassicalMsg) -> None:
        self.messages.append(msg)
        self.transcript.append(msg.frame, msg.sender, "broadcast-" + msg.kind, msg.payload)

    def of_kind(self, kind: str) -> list[ClassicalMsg]:
        return [m for m in self.messages if m.kind == kind]


@dataclass
class PulseTrain:
    """All frames of one run as a batched shot state.

    ``state.quads`` has shape ``(n_frames, 2 * n_modes)``.  Modes 0 and 1
    are the dialogue pair; adversary couplings may append further modes.
    ``consumed[f, m]`` marks destroyed modes per frame.
    """

    frames: list[TimeFrame]
    state: ps.ShotState
    consumed: np.ndarray  # (n_frames, n_modes) bool

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n_modes(self) -> int:
        return self.state.n_modes

    def role_mask(self, role: str) -> np.ndarray:
        return np.array([f.role == role for f in self.frames])

    def sync_modes(self) -> None:
        """Grow the consumed table when taps have attached new modes."""
        extra = self.state.n_modes - self.consumed.shape[1]
        if extra > 0:
            self.consumed = np.concatenate(
                [self.consumed, np.zeros((self.n_frames, extra), dtype=bool)], axis=1
            )

    def measure(self, mask: np.ndarray, mode: int, quadrature: str) -> np.ndarray:
        """Read one quadrature of ``mode`` for the masked frames and consume it."""
        if np.any(self.consumed[mask, mode]):
            raise InvalidStateError(f"mode {mode} already consumed in a selected frame")
        idx = 2 * mode + (0 if quadrature == "x" else 1)
        values = self.state.quads[mask, idx].copy()
        self.consumed[mask, mode] = True
        return values

    def bell_measure(self, mask: np.ndarray, mode_i: int, mode_j: int):
        """Joint Bell readout on the masked frames; consumes both modes."""
        if np.any(self.consumed[mask][:, [mode_i, mode_j]]):
            raise InvalidStateError("bell measurement on a consumed mode")
        inv = 1.0 / np.sqrt(2.0)
        x_mu = (self.state.quads[mask, 2 * mode_i] - self.state.quads[mask, 2 * mode_j]) * inv
        p_mu = (self.state.quads[mask, 2 * mode_i + 1] + self.state.quads[mask, 2 * mode_j + 1]) * inv
        self.consumed[mask, mode_i] = True
        self.consumed[mask, mode_j] = True
        return ps.BellOutcome(x_mu, p_mu)


def transfer(
    train: PulseTrain,
    mode: int,
    channel: ChannelParams,
    rng: np.random.Generator,
    tap: Callable[[ps.ShotState, int, np.random.Generator], ps.ShotState] | None = None,
    transcript: RunTranscript | None = None,
    hop: str = "",
) -> PulseTrain:
    """Send one mode of every live frame through a channel hop.

    Order is part of the contract: loss first, then the adversary tap,
    then the receiver's gain-1/sqrt(eta) amplification.  Frames whose mode
    was already consumed travel as dead slots; transferring when every
    frame's mode is consumed is an error.
    """
    if bool(np.all(train.consumed[:, mode])):
        raise InvalidStateError(f"mode {mode} is consumed in every frame")
    state = ps.loss_channel(train.state, mode, channel.eta, channel.epsilon, rng=rng)
    if tap is not None:
        state = tap(state, mode, rng)
    if channel.gain > 1.0:
        state = ps.amplify(state, mode, channel.gain, channel.amp_mode, rng=rng)
    if transcript is not None:
        transcript.append(None, "channel", "transfer", {"hop": hop, "mode": mode})
    out = PulseTrain(frames=train.frames, state=state, consumed=train.consumed)
    out.sync_modes()
    return out
