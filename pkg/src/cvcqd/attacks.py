"""Eavesdropper strategy catalog.

Every strategy is a set of channel taps plus a private log.  Taps see only
the in-flight pulse train, the public broadcast bus, and their own random
generator; they transform pulses exclusively through phase-space engine
operations and never read party-private fields.  Whatever Eve knows at the
end of a run is the content of ``log`` plus the bus, and the information
metrics are computed from exactly that view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import phasespace as ps
from .errors import InvalidArgumentError

SQRT2 = np.sqrt(2.0)

HOPS = ("cb", "ca", "ab")


class AttackStrategy:
    """Base: no taps, nothing recorded beyond the public bus."""

    kind = "passive-listen"
    hops: tuple[str, ...] = ()

    def __init__(self):
        self.log: dict[str, list] = {}

    def observe_bus(self, bus) -> None:
        """Called once after the preparation broadcasts; strategies cache
        whatever public values they need (e.g. the Bell references)."""
        self._refs_x = np.array([m.payload["x_mu0"] for m in bus.of_kind("bell-reference")])
        self._refs_p = np.array([m.payload["p_mu0"] for m in bus.of_kind("bell-reference")])

    def tap_for(self, hop: str, rng: np.random.Generator, bus):
        return None

    def finalize(self, train, rng: np.random.Generator, bus) -> None:
        """End-of-run measurements of any stored modes."""

    def _record(self, key: str, values) -> None:
        self.log.setdefault(key, []).append(np.asarray(values))


class PassiveListen(AttackStrategy):
    """Reads the public bus only; undetectable by construction and used as
    the baseline for the ignorance metrics."""


class DisturbanceAttack(AttackStrategy):
    """Denial attack: displace every in-flight pulse by a random vector of
    fixed magnitude ``d``.  Records nothing."""

    kind = "disturbance"

    def __init__(self, d: float, hops: tuple[str, ...] = ("cb",)):
        super().__init__()
        if d < 0:
            raise InvalidArgumentError("disturbance magnitude must be >= 0")
        self.d = d
        self.hops = hops

    def tap_for(self, hop, rng, bus):
        if hop not in self.hops:
            return None

        def tap(state, mode, tap_rng):
            theta = tap_rng.uniform(0.0, 2.0 * np.pi, state.batch_shape)
            return ps.displace(state, mode, (self.d * np.cos(theta), self.d * np.sin(theta)))

        return tap


class InterceptResendAttack(AttackStrategy):
    """Substitute the in-flight mode with one half of Eve's own squeezed
    pair, displaced so that her pair's Bell reference matches the broadcast
    one.  She stores her retained half and the intercepted original, and
    homodynes their amplitude quadratures at the end of the run."""

    kind = "intercept-resend"

    def __init__(self, r_eve: float = 1.0, hops: tuple[str, ...] = ("cb",)):
        super().__init__()
        self.r_eve = r_eve
        self.hops = hops
        self._retained_idx: int | None = None
        self._intercepted_idx: int | None = None

    def tap_for(self, hop, rng, bus):
        if hop not in self.hops:
            return None

        def tap(state, mode, tap_rng):
            n0 = state.n_modes
            state = ps.attach_vacuum(state, 2, tap_rng)
            send, keep = n0, n0 + 1
            state = ps.two_mode_squeeze(state, send, keep, self.r_eve)
            nu_x = (state.x(send) - state.x(keep)) / SQRT2
            nu_p = (state.p(send) + state.p(keep)) / SQRT2
            state = ps.displace(
                state, send, (SQRT2 * (self._refs_x - nu_x), SQRT2 * (self._refs_p - nu_p))
            )
            state = ps.swap_modes(state, mode, send)
            self._intercepted_idx = send  # now holds the original pulse
            self._retained_idx = keep
            return state

        return tap

    def finalize(self, train, rng, bus):
        if self._retained_idx is not None:
            self._record("x_retained", train.state.x(self._retained_idx))
            self._record("x_intercepted", train.state.x(self._intercepted_idx))


class CloneNoiseAttack(AttackStrategy):
    """Cloning modeled as symmetric excess noise: the in-flight pulse gains
    independent noise of variance ``delta`` per quadrature and Eve keeps a
    classical copy degraded by the same amount."""

    kind = "clone-noise"

    def __init__(self, delta: float = 0.25, hops: tuple[str, ...] = ("ca",)):
        super().__init__()
        if delta < 0:
            raise InvalidArgumentError("delta must be >= 0")
        self.delta = delta
        self.hops = hops

    def tap_for(self, hop, rng, bus):
        if hop not in self.hops:
            return None

        def tap(state, mode, tap_rng):
            std = np.sqrt(self.delta)
            x0, p0 = state.x(mode), state.p(mode)
            self._record(f"x_copy_{hop}", x0 + tap_rng.normal(0.0, std, x0.shape))
            self._record(f"p_copy_{hop}", p0 + tap_rng.normal(0.0, std, p0.shape))
            return ps.displace(
                state,
                mode,
                (tap_rng.normal(0.0, std, x0.shape), tap_rng.normal(0.0, std, p0.shape)),
            )

        return tap


class BeamSplitterAttack(AttackStrategy):
    """Three-stage beam-splitter network with a quantum memory.

    Stage 1 taps the supervisor-to-Bob hop with transmission ``beta1`` and
    stores the reflected mode; stage 2 taps the Alice-to-Bob hop with
    ``beta2``; stage 3 interferes the two stored modes on ``beta3`` and Eve
    measures the amplitude quadrature of one output and the phase
    quadrature of the other.  All three mixes use the attack's printed
    (symmetric, non-symplectic) transform verbatim so that the recorded
    amplitude reproduces the published composition.
    """

    kind = "beam-splitter"

    def __init__(
        self,
        beta1: float,
        beta2: float,
        beta3: float,
        hops: tuple[str, ...] = ("cb", "ab"),
        record_probes: bool = False,
    ):
        super().__init__()
        for b in (beta1, beta2, beta3):
            if not 0.0 <= b <= 1.0:
                raise InvalidArgumentError("beam splitter transmissions must lie in [0, 1]")
        self.beta1, self.beta2, self.beta3 = beta1, beta2, beta3
        self.hops = hops
        # ``probe_*`` log keys are test instrumentation (replication oracle
        # inputs), never part of Eve's information set.
        self.record_probes = record_probes
        self._memory_idx: int | None = None

    def tap_for(self, hop, rng, bus):
        if hop not in self.hops:
            return None
        if hop == "cb":

            def tap_cb(state, mode, tap_rng):
                n0 = state.n_modes
                state = ps.attach_vacuum(state, 1, tap_rng)
                if self.record_probes:
                    self._record("probe_x_ancilla_cb", state.x(n0))
                state = ps.beam_split(state, mode, n0, self.beta1, variant="printed")
                self._memory_idx = n0
                return state

            return tap_cb

        def tap_ab(state, mode, tap_rng):
            n0 = state.n_modes
            state = ps.attach_vacuum(state, 1, tap_rng)
            if self.record_probes:
                self._record("probe_x_ancilla_ab", state.x(n0))
            state = ps.beam_split(state, mode, n0, self.beta2, variant="printed")
            # stage 3: interfere the fresh tap output with the stored mode
            state = ps.beam_split(state, n0, self._memory_idx, self.beta3, variant="printed")
            self._record("x_out", state.x(n0))
            self._record("p_out", state.p(self._memory_idx))
            return state

        return tap_ab


def make_attack(kind: str, params: dict | None = None) -> AttackStrategy:
    """Build a strategy from its configuration entry."""
    params = dict(params or {})
    hops = tuple(params.pop("hops", ())) or None
    if kind == "passive-listen":
        return PassiveListen()
    if kind == "disturbance":
        default_d = 5.0 * np.sqrt(np.exp(-2.0) / 2.0)
        atk = DisturbanceAttack(d=params.pop("d", default_d), hops=hops or ("cb",))
    elif kind == "intercept-resend":
        atk = InterceptResendAttack(r_eve=params.pop("r_eve", 1.0), hops=hops or ("cb",))
    elif kind == "clone-noise":
        atk = CloneNoiseAttack(delta=params.pop("delta", 0.25), hops=hops or ("ca",))
    elif kind == "beam-splitter":
        atk = BeamSplitterAttack(
            params.pop("beta1", 0.5), params.pop("beta2", 0.5), params.pop("beta3", 0.5),
            hops=hops or ("cb", "ab"),
        )
    else:
        raise InvalidArgumentError(f"unknown attack kind {kind!r}")
    if params:
        raise InvalidArgumentError(f"unknown {kind} parameters: {sorted(params)}")
    return atk


#: Strategies that transform pulses (detectable in principle); the passive
#: listener only reads the bus and is excluded from abort-rate properties.
ACTIVE_ATTACKS = ("disturbance", "intercept-resend", "clone-noise", "beam-splitter")

ALL_ATTACKS = ACTIVE_ATTACKS + ("passive-listen",)


# ---------------------------------------------------------------------------
# independent composition oracle for the beam-splitter amplitude record

#: Variable order for the composition oracle's coefficient vectors.
ORACLE_VARS = ("x_pair_0", "x_pair_1", "x_eve_0", "x_eve_1", "r_bob_x", "r_alice_x", "x_alice_msg")


def beam_splitter_amplitude_coefficients(beta1: float, beta2: float, beta3: float) -> np.ndarray:
    """Coefficients of Eve's measured amplitude over the primitive variables.

    Composed by plain matrix algebra over :data:`ORACLE_VARS` (the realized
    squeezed-pair amplitudes, Eve's two ancilla amplitudes, the two
    amplitude schedule entries, and Alice's amplitude message), independent
    of the simulation engine.
    """
    dim = len(ORACLE_VARS)

    def unit(name):
        v = np.zeros(dim)
        v[ORACLE_VARS.index(name)] = 1.0
        return v

    to_bob = unit("x_pair_0") + unit("r_bob_x")
    from_alice = unit("x_pair_1") + unit("r_alice_x") + unit("x_alice_msg")
    t1, r1 = np.sqrt(beta1), np.sqrt(1.0 - beta1)
    t2, r2 = np.sqrt(beta2), np.sqrt(1.0 - beta2)
    t3, r3 = np.sqrt(beta3), np.sqrt(1.0 - beta3)
    memory = t1 * unit("x_eve_0") + r1 * to_bob
    stage2_keep = t2 * unit("x_eve_1") + r2 * from_alice
    return t3 * stage2_keep + r3 * memory
