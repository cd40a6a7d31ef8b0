"""Gaussian phase-space simulation engine.

Two interchangeable representations of multimode Gaussian optics:

* a *shot* engine (:class:`ShotState`) propagating one sampled noise
  realization per mode, and
* an *ensemble* engine (:class:`GaussianState`) propagating means and
  covariances analytically.

The two engines are mutual oracles: any pipeline of operations applied to
both must agree, the shot engine statistically and the ensemble engine
exactly.

Conventions
-----------
Quadratures are ordered ``(x1, p1, ..., xN, pN)`` and expressed in
shot-noise units: a fresh vacuum mode has ``Var(x) = Var(p) = 1/4``.
A displacement ``alpha = (x_d, p_d)`` adds componentwise to ``(x, p)``.

All operations are pure: they return new state objects and never mutate
their inputs.  Operations that need randomness (sampling, loss noise,
measurement of an ensemble state) take an explicit
``numpy.random.Generator`` so that a run is a deterministic function of
its seeds.

Shot states may carry leading batch axes (``quads.shape == (*batch, 2N)``);
every operation broadcasts over them, which is how Monte-Carlo ensembles
and whole pulse trains are propagated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError

#: Vacuum variance per quadrature (shot-noise unit).
VACUUM_VAR = 0.25

#: Tolerance for symplectic identities S @ Omega @ S.T == Omega.
SYMPLECTIC_TOL = 1e-12

#: Slack allowed below the vacuum symplectic eigenvalue 1/4.
HEISENBERG_SLACK = 1e-9


class Quad(NamedTuple):
    """One mode's quadrature pair (possibly batched arrays)."""

    x: np.ndarray | float
    p: np.ndarray | float


class BellOutcome(NamedTuple):
    """Joint readout ((x_i - x_j)/sqrt(2), (p_i + p_j)/sqrt(2))."""

    x_mu: np.ndarray | float
    p_mu: np.ndarray | float


def omega(n_modes: int) -> np.ndarray:
    """Symplectic form for ``(x1, p1, ..., xN, pN)`` ordering."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    out = np.zeros((2 * n_modes, 2 * n_modes))
    for m in range(n_modes):
        out[2 * m : 2 * m + 2, 2 * m : 2 * m + 2] = block
    return out


@dataclass(frozen=True)
class SymplecticOp:
    """A linear phase-space map ``v -> S v + d``.

    ``S`` must satisfy ``S Omega S^T = Omega`` within :data:`SYMPLECTIC_TOL`
    for the map to be a Gaussian unitary; :meth:`symplectic_defect` reports
    the deviation for maps applied verbatim from attack descriptions.
    """

    matrix: np.ndarray
    shift: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def symplectic_defect(self) -> float:
        om = omega(self.n_modes)
        return float(np.max(np.abs(self.matrix @ om @ self.matrix.T - om)))

    def is_symplectic(self, tol: float = SYMPLECTIC_TOL) -> bool:
        return self.symplectic_defect() <= tol


@dataclass(frozen=True)
class GaussianState:
    """Ensemble representation: mean vector and covariance matrix.

    Parameters
    ----------
    mean : ndarray, shape (2N,)
    cov : ndarray, shape (2N, 2N)
        Symmetric, with all symplectic eigenvalues >= 1/4 (up to slack)
        for a physical state.
    consumed : ndarray of bool, shape (N,)
        Modes destroyed by measurement.
    """

    mean: np.ndarray
    cov: np.ndarray
    consumed: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.mean.shape[-1] // 2

    def mode_x(self, mode: int):
        return self.mean[2 * mode]

    def mode_p(self, mode: int):
        return self.mean[2 * mode + 1]

    def validate(self) -> None:
        sym = float(np.max(np.abs(self.cov - self.cov.T)))
        if sym > 1e-12:
            raise InvalidStateError(f"covariance not symmetric (defect {sym:.3e})")
        nu_min = float(np.min(symplectic_eigenvalues(self.cov)))
        if nu_min < VACUUM_VAR - HEISENBERG_SLACK:
            raise InvalidStateError(
                f"uncertainty violated: min symplectic eigenvalue {nu_min:.6g} < 1/4"
            )


@dataclass(frozen=True)
class ShotState:
    """Shot representation: one realized quadrature vector (per batch entry).

    ``quads`` has shape ``(*batch, 2N)``; evolution is a deterministic
    function of the initial samples, the applied operations, and the
    random draws consumed from the explicit generator.
    """

    quads: np.ndarray
    consumed: np.ndarray
    seed_tag: str = ""

    @property
    def n_modes(self) -> int:
        return self.quads.shape[-1] // 2

    @property
    def batch_shape(self) -> tuple:
        return self.quads.shape[:-1]

    def x(self, mode: int):
        return self.quads[..., 2 * mode]

    def p(self, mode: int):
        return self.quads[..., 2 * mode + 1]

    def quad(self, mode: int) -> Quad:
        return Quad(self.x(mode), self.p(mode))


State = GaussianState | ShotState


# ---------------------------------------------------------------------------
# construction and sampling


def make_vacuum(n_modes: int) -> GaussianState:
    """N-mode vacuum: zero mean, covariance (1/4) * identity."""
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
        raise InvalidArgumentError("n_modes must be a positive integer")
    dim = 2 * n_modes
    return GaussianState(
        mean=np.zeros(dim),
        cov=VACUUM_VAR * np.eye(dim),
        consumed=np.zeros(n_modes, dtype=bool),
    )


def sample_shot(state: GaussianState, seed, shape: tuple = ()) -> ShotState:
    """Draw one (or a batch of) multivariate-normal realizations.

    Identical ``(state, seed)`` pairs give bitwise-identical draws.  The
    covariance is factored by eigendecomposition so degenerate (singular)
    Gaussians are handled; negative eigenvalues beyond roundoff raise
    :class:`InvalidStateError`.
    """
    rng = np.random.default_rng(seed)
    vals, vecs = np.linalg.eigh(np.asarray(state.cov, dtype=float))
    if np.min(vals) < -1e-9:
        raise InvalidStateError(f"covariance not PSD (min eigenvalue {np.min(vals):.3e})")
    vals = np.clip(vals, 0.0, None)
    z = rng.standard_normal(shape + (state.mean.shape[-1],))
    quads = state.mean + z @ (vecs * np.sqrt(vals)).T
    return ShotState(
        quads=quads,
        consumed=state.consumed.copy(),
        seed_tag=f"seed={seed}",
    )


def vacuum_shot(n_modes: int, rng: np.random.Generator, shape: tuple = ()) -> ShotState:
    """Fast path: sample fresh vacuum modes directly from a live generator."""
    if n_modes < 1:
        raise InvalidArgumentError("n_modes must be a positive integer")
    quads = rng.normal(0.0, np.sqrt(VACUUM_VAR), shape + (2 * n_modes,))
    return ShotState(quads=quads, consumed=np.zeros(n_modes, dtype=bool))


# ---------------------------------------------------------------------------
# helpers


def _check_mode(state: State, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise InvalidArgumentError(f"mode {mode} out of range for {state.n_modes} modes")


def _check_unconsumed(state: State, mode: int) -> None:
    if state.consumed[mode]:
        raise InvalidStateError(f"mode {mode} already consumed by a measurement")


def _embed(matrix2k: np.ndarray, modes: tuple[int, ...], n_modes: int) -> np.ndarray:
    """Embed a map acting on ``modes`` (quadrature-pair blocks) into 2N dims."""
    full = np.eye(2 * n_modes)
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes])
    full[np.ix_(idx, idx)] = matrix2k
    return full


def _apply_linear(
    state: State,
    matrix: np.ndarray,
    shift: np.ndarray | None = None,
    noise_cov: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> State:
    """Apply ``v -> M v + d`` plus optional additive Gaussian noise.

    Ensemble: mean -> M mean + d, cov -> M cov M^T + N.
    Shot: quads -> M quads + d + fresh draw from N (requires ``rng``).
    """
    if isinstance(state, GaussianState):
        mean = matrix @ state.mean
        cov = matrix @ state.cov @ matrix.T
        if shift is not None:
            mean = mean + shift
        if noise_cov is not None:
            cov = cov + noise_cov
        return GaussianState(mean=mean, cov=0.5 * (cov + cov.T), consumed=state.consumed.copy())
    quads = state.quads @ matrix.T
    if shift is not None:
        quads = quads + shift
    if noise_cov is not None:
        if rng is None:
            raise InvalidArgumentError("shot engine needs an rng for noisy channels")
        std = np.sqrt(np.clip(np.diag(noise_cov), 0.0, None))
        live = std > 0
        if np.any(live):
            noise = np.zeros(state.batch_shape + (quads.shape[-1],))
            noise[..., live] = rng.normal(0.0, std[live], state.batch_shape + (int(live.sum()),))
            quads = quads + noise
    return replace(state, quads=quads, consumed=state.consumed.copy())


# ---------------------------------------------------------------------------
# transformations


def displace(state: State, mode: int, alpha) -> State:
    """Shift mode ``mode`` by ``alpha = (x_d, p_d)``.

    Adds componentwise to the quadratures; covariance is unchanged.  For
    batched shot states ``x_d`` and ``p_d`` may be arrays broadcasting
    against the batch shape.
    """
    _check_mode(state, mode)
    x_d, p_d = alpha
    if isinstance(state, GaussianState):
        mean = state.mean.copy()
        mean[2 * mode] += x_d
        mean[2 * mode + 1] += p_d
        return replace(state, mean=mean, cov=state.cov.copy(), consumed=state.consumed.copy())
    quads = state.quads.copy()
    quads[..., 2 * mode] += x_d
    quads[..., 2 * mode + 1] += p_d
    return replace(state, quads=quads, consumed=state.consumed.copy())


def two_mode_squeeze_matrix(r: float) -> np.ndarray:
    """4x4 two-mode squeezing map on ``(x_i, p_i, x_j, p_j)``.

    ``x_i - x_j`` and ``p_i + p_j`` are contracted by ``exp(-r)`` while the
    conjugate combinations are stretched by ``exp(+r)``.
    """
    c, s = np.cosh(r), np.sinh(r)
    return np.array(
        [
            [c, 0.0, s, 0.0],
            [0.0, c, 0.0, -s],
            [s, 0.0, c, 0.0],
            [0.0, -s, 0.0, c],
        ]
    )


def two_mode_squeeze(state: State, mode_i: int, mode_j: int, r: float) -> State:
    """Two-mode squeezing between ``mode_i`` and ``mode_j`` with strength r >= 0."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise InvalidArgumentError("two_mode_squeeze needs two distinct modes")
    if r < 0:
        raise InvalidArgumentError("r must be >= 0")
    big = _embed(two_mode_squeeze_matrix(r), (mode_i, mode_j), state.n_modes)
    return _apply_linear(state, big)


def beam_split_matrix(beta: float, variant: str = "printed") -> np.ndarray:
    """4x4 beam-splitter map with transmission ``beta``.

    ``variant="printed"`` applies the same ``(sqrt(beta), sqrt(1-beta))``
    sign pattern on both outputs; it is symmetric and not symplectic except
    at ``beta`` 0 or 1, and is kept verbatim for attack replication.
    ``variant="physical"`` flips the sign of the reflected amplitude on the
    second output, giving an orthogonal (symplectic) map; honest channels
    and loss dilations use this form.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError("beta must lie in [0, 1]")
    t = np.sqrt(beta)
    rfl = np.sqrt(1.0 - beta)
    if variant == "printed":
        two = np.array([[t, rfl], [rfl, t]])
    elif variant == "physical":
        two = np.array([[t, rfl], [-rfl, t]])
    else:
        raise InvalidArgumentError(f"unknown beam splitter variant {variant!r}")
    out = np.zeros((4, 4))
    out[0::2, 0::2] = two
    out[1::2, 1::2] = two
    return out


def beam_split_symplectic_defect(beta: float, variant: str = "printed") -> float:
    """Max-norm deviation of the beam-splitter map from the symplectic identity."""
    op = SymplecticOp(matrix=beam_split_matrix(beta, variant), shift=np.zeros(4))
    return op.symplectic_defect()


def beam_split(state: State, mode_i: int, mode_j: int, beta: float, variant: str = "printed") -> State:
    """Mix two modes on a beam splitter with transmission ``beta``."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise InvalidArgumentError("beam_split needs two distinct modes")
    big = _embed(beam_split_matrix(beta, variant), (mode_i, mode_j), state.n_modes)
    return _apply_linear(state, big)


def swap_modes(state: State, mode_i: int, mode_j: int) -> State:
    """Exchange the full contents of two modes (a symplectic permutation)."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        return state
    perm = np.zeros((4, 4))
    perm[0, 2] = perm[1, 3] = perm[2, 0] = perm[3, 1] = 1.0
    big = _embed(perm, (mode_i, mode_j), state.n_modes)
    out = _apply_linear(state, big)
    consumed = out.consumed.copy()
    consumed[[mode_i, mode_j]] = consumed[[mode_j, mode_i]]
    return replace(out, consumed=consumed)


def loss_dilation_matrix(eta: float) -> np.ndarray:
    """Physical beam-splitter dilation of a transmittance-eta loss channel."""
    return beam_split_matrix(eta, variant="physical")


def loss_channel(
    state: State,
    mode: int,
    eta: float,
    epsilon: float = 0.0,
    rng: np.random.Generator | None = None,
) -> State:
    """Transmittance-``eta`` loss with excess noise ``epsilon``.

    ``x -> sqrt(eta) x + sqrt(1-eta) x_env`` with a fresh environment mode
    of variance ``1/4 + epsilon`` per quadrature (the environment is traced
    out, so the mode count does not grow).
    """
    _check_mode(state, mode)
    if not 0.0 < eta <= 1.0:
        raise InvalidArgumentError("eta must lie in (0, 1]")
    if epsilon < 0.0:
        raise InvalidArgumentError("epsilon must be >= 0")
    n = state.n_modes
    mat = np.eye(2 * n)
    mat[2 * mode, 2 * mode] = mat[2 * mode + 1, 2 * mode + 1] = np.sqrt(eta)
    env_var = (1.0 - eta) * (VACUUM_VAR + epsilon)
    noise = np.zeros((2 * n, 2 * n))
    noise[2 * mode, 2 * mode] = noise[2 * mode + 1, 2 * mode + 1] = env_var
    return _apply_linear(state, mat, noise_cov=noise if env_var > 0 else None, rng=rng)


def amplify(
    state: State,
    mode: int,
    g: float,
    noise_mode: str = "paper-ideal",
    rng: np.random.Generator | None = None,
) -> State:
    """Linear amplification of one mode by gain ``g >= 1``.

    ``noise_mode="paper-ideal"`` scales both quadratures noiselessly, which
    is the algebra the dialogue's decode identities assume.
    ``noise_mode="phase-insensitive"`` additionally adds independent noise
    of variance ``(g^2 - 1)/4`` per quadrature, the physically honest
    option.
    """
    _check_mode(state, mode)
    if g < 1.0:
        raise InvalidArgumentError("g must be >= 1")
    if noise_mode not in ("paper-ideal", "phase-insensitive"):
        raise InvalidArgumentError(f"unknown amplifier noise mode {noise_mode!r}")
    n = state.n_modes
    mat = np.eye(2 * n)
    mat[2 * mode, 2 * mode] = mat[2 * mode + 1, 2 * mode + 1] = g
    noise = None
    if noise_mode == "phase-insensitive" and g > 1.0:
        add = (g * g - 1.0) * VACUUM_VAR
        noise = np.zeros((2 * n, 2 * n))
        noise[2 * mode, 2 * mode] = noise[2 * mode + 1, 2 * mode + 1] = add
    return _apply_linear(state, mat, noise_cov=noise, rng=rng)


def apply_symplectic(state: State, op: SymplecticOp) -> State:
    """Apply a full-width symplectic map (matrix plus displacement)."""
    if op.matrix.shape[0] != 2 * state.n_modes:
        raise InvalidArgumentError("operator width does not match state")
    return _apply_linear(state, op.matrix, shift=op.shift)


def attach_vacuum(state: State, n_new: int, rng: np.random.Generator | None = None) -> State:
    """Append ``n_new`` fresh vacuum modes (environment or adversary ancillas)."""
    if n_new < 1:
        raise InvalidArgumentError("n_new must be >= 1")
    consumed = np.concatenate([state.consumed, np.zeros(n_new, dtype=bool)])
    if isinstance(state, GaussianState):
        dim_old = state.mean.shape[-1]
        dim = dim_old + 2 * n_new
        mean = np.zeros(dim)
        mean[:dim_old] = state.mean
        cov = VACUUM_VAR * np.eye(dim)
        cov[:dim_old, :dim_old] = state.cov
        return GaussianState(mean=mean, cov=cov, consumed=consumed)
    if rng is None:
        raise InvalidArgumentError("shot engine needs an rng to attach vacuum modes")
    fresh = rng.normal(0.0, np.sqrt(VACUUM_VAR), state.batch_shape + (2 * n_new,))
    quads = np.concatenate([state.quads, fresh], axis=-1)
    return replace(state, quads=quads, consumed=consumed)


# ---------------------------------------------------------------------------
# measurements


def homodyne(
    state: State,
    mode: int,
    quadrature: str = "x",
    rng: np.random.Generator | None = None,
):
    """Measure one quadrature of one mode; returns ``(outcome, new_state)``.

    Shot engine: returns the realized value and marks the mode consumed.
    Ensemble engine: draws the outcome from the marginal and conditions the
    remaining Gaussian state on it.
    """
    _check_mode(state, mode)
    _check_unconsumed(state, mode)
    if quadrature not in ("x", "p"):
        raise InvalidArgumentError("quadrature must be 'x' or 'p'")
    idx = 2 * mode + (0 if quadrature == "x" else 1)
    consumed = state.consumed.copy()
    consumed[mode] = True
    if isinstance(state, ShotState):
        value = state.quads[..., idx]
        out = value if value.ndim else float(value)
        return out, replace(state, consumed=consumed)
    if rng is None:
        raise InvalidArgumentError("ensemble homodyne needs an rng to draw the outcome")
    var = float(state.cov[idx, idx])
    if var < -1e-12:
        raise InvalidStateError("negative marginal variance")
    value = float(rng.normal(state.mean[idx], np.sqrt(max(var, 0.0))))
    coeff = np.zeros((1, state.mean.shape[-1]))
    coeff[0, idx] = 1.0
    mean, cov = _condition(state.mean, state.cov, coeff, np.array([value]))
    return value, GaussianState(mean=mean, cov=cov, consumed=consumed)


def bell_measure(state: State, mode_i: int, mode_j: int, rng: np.random.Generator | None = None):
    """Joint readout of ((x_i - x_j)/sqrt2, (p_i + p_j)/sqrt2); consumes both modes."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise InvalidArgumentError("bell_measure needs two distinct modes")
    _check_unconsumed(state, mode_i)
    _check_unconsumed(state, mode_j)
    consumed = state.consumed.copy()
    consumed[[mode_i, mode_j]] = True
    inv = 1.0 / np.sqrt(2.0)
    if isinstance(state, ShotState):
        x_mu = (state.x(mode_i) - state.x(mode_j)) * inv
        p_mu = (state.p(mode_i) + state.p(mode_j)) * inv
        if not x_mu.ndim:
            x_mu, p_mu = float(x_mu), float(p_mu)
        return BellOutcome(x_mu, p_mu), replace(state, consumed=consumed)
    if rng is None:
        raise InvalidArgumentError("ensemble bell_measure needs an rng")
    dim = state.mean.shape[-1]
    coeff = np.zeros((2, dim))
    coeff[0, 2 * mode_i] = inv
    coeff[0, 2 * mode_j] = -inv
    coeff[1, 2 * mode_i + 1] = inv
    coeff[1, 2 * mode_j + 1] = inv
    mu_c = coeff @ state.mean
    sig_c = coeff @ state.cov @ coeff.T
    vals, vecs = np.linalg.eigh(sig_c)
    draw = mu_c + (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ rng.standard_normal(2)
    mean, cov = _condition(state.mean, state.cov, coeff, draw)
    return BellOutcome(float(draw[0]), float(draw[1])), GaussianState(
        mean=mean, cov=cov, consumed=consumed
    )


def _condition(mean: np.ndarray, cov: np.ndarray, coeff: np.ndarray, outcome: np.ndarray):
    """Condition a Gaussian on observed linear combinations ``coeff @ v = outcome``."""
    cross = cov @ coeff.T
    inner = coeff @ cross
    gain = cross @ np.linalg.pinv(inner, rcond=1e-12)
    mean_new = mean + gain @ (outcome - coeff @ mean)
    cov_new = cov - gain @ cross.T
    return mean_new, 0.5 * (cov_new + cov_new.T)


# ---------------------------------------------------------------------------
# diagnostics


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a covariance matrix (sorted ascending).

    The values are the moduli of the eigenvalues of ``i Omega V``; a
    physical state has all of them >= 1/4 in shot-noise units.
    """
    n = cov.shape[0] // 2
    eig = np.linalg.eigvals(omega(n) @ cov)
    nus = np.sort(np.abs(eig.imag))
    return nus[n:]


def epr_variances(state: GaussianState, mode_i: int, mode_j: int) -> tuple[float, float]:
    """(Var(x_i - x_j), Var(p_i + p_j)) from an ensemble state."""
    dim = state.mean.shape[-1]
    cx = np.zeros(dim)
    cx[2 * mode_i] = 1.0
    cx[2 * mode_j] = -1.0
    cp = np.zeros(dim)
    cp[2 * mode_i + 1] = 1.0
    cp[2 * mode_j + 1] = 1.0
    return float(cx @ state.cov @ cx), float(cp @ state.cov @ cp)
