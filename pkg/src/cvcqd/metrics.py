"""Information-theoretic metrics: closed forms and Monte-Carlo estimators.

Closed forms follow the published expressions exactly; units are carried
in the function names' documentation (capacity in nats, mutual information
in bits) to avoid confusion.  The empirical mutual-information estimator
is a Gaussian regression estimator, appropriate because every random
variable in this simulator is jointly Gaussian by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelParams
from .dialogue import CqdRun, DialogueMessage, RunParams
from .errors import InvalidArgumentError, MetricDomainError

#: two-sided 95% normal quantile, used by the Wilson interval
Z95 = 1.959963984540054


@dataclass(frozen=True)
class CapacityParams:
    """Dense-coding capacity inputs.

    ``sigma`` is the standard deviation of the homodyne distribution; the
    mean photon number is ``sigma**2 + sinh(r)**2``.
    """

    r: float
    sigma: float

    @property
    def nbar(self) -> float:
        return self.sigma**2 + np.sinh(self.r) ** 2


def dense_coding_capacity(params: CapacityParams) -> float:
    """Dense-coding capacity ln(1 + nbar + nbar^2), in nats."""
    if params.r < 0 or params.sigma < 0:
        raise InvalidArgumentError("capacity inputs must be >= 0")
    nbar = params.nbar
    return float(np.log(1.0 + nbar + nbar * nbar))


@dataclass(frozen=True)
class MiParams:
    """Inputs of the closed-form mutual information between the two encoders.

    ``lam`` is 1 for homodyne and 2 for heterodyne detection.  ``gamma``
    is kept distinct from the excess noise ``epsilon`` (they are separate
    knobs here; no relation between them is assumed).  The encoding
    variances of Alice, Bob, and the supervisor's schedule add up to the
    modulation term.
    """

    eta: float = 1.0
    epsilon: float = 0.0
    lam: int = 1
    sigma: float = 0.0
    gamma: float = 0.0
    var_alice: float = 0.0
    var_bob: float = 0.0
    var_schedule: float = 0.0

    @property
    def var_total(self) -> float:
        return self.var_alice + self.var_bob + self.var_schedule


def mutual_information_ab(params: MiParams) -> float:
    """Closed-form amplitude-quadrature mutual information, in bits.

    ``log2(1 + eta * Sigma / (lam + eta * (sigma + gamma - 1)))`` with
    ``Sigma`` the summed encoding variances.
    """
    if params.lam not in (1, 2):
        raise InvalidArgumentError("lam must be 1 (homodyne) or 2 (heterodyne)")
    if not 0.0 < params.eta <= 1.0:
        raise InvalidArgumentError("eta must lie in (0, 1]")
    if min(params.var_alice, params.var_bob, params.var_schedule, params.sigma) < 0:
        raise InvalidArgumentError("variances must be >= 0")
    denom = params.lam + params.eta * (params.sigma + params.gamma - 1.0)
    if denom <= 0:
        raise MetricDomainError(
            f"non-positive denominator {denom:.6g} "
            f"(lam={params.lam}, eta={params.eta}, sigma={params.sigma}, gamma={params.gamma})"
        )
    return float(np.log2(1.0 + params.eta * params.var_total / denom))


def empirical_mi(
    secret: np.ndarray,
    observations: np.ndarray,
    min_samples: int = 10_000,
) -> float:
    """Gaussian-regression mutual information estimate, in bits.

    Regresses the secret on the observation columns and returns
    ``0.5 * log2(Var(secret) / Var(residual))`` clamped at zero.  A
    residual variance at floating-point floor (observation determines the
    secret) returns ``inf``.
    """
    secret = np.asarray(secret, dtype=float).ravel()
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    n = secret.shape[0]
    if obs.shape[0] != n:
        raise InvalidArgumentError("secret and observations must have equal length")
    if n < min_samples:
        raise InvalidArgumentError(f"need at least {min_samples} samples, got {n}")
    var_secret = float(np.var(secret))
    if var_secret <= 1e-300:
        raise MetricDomainError("secret variance is degenerate")
    design = np.column_stack([np.ones(n), obs])
    coef, *_ = np.linalg.lstsq(design, secret, rcond=None)
    resid = secret - design @ coef
    var_resid = float(np.mean(resid**2))
    if var_resid <= var_secret * 1e-24:
        return float("inf")
    return max(0.5 * float(np.log2(var_secret / var_resid)), 0.0)


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise InvalidArgumentError("trials must be > 0")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


@dataclass
class DetectionEstimate:
    p_detect: float
    ci_low: float
    ci_high: float
    trials: int
    aborted: int


def draw_message(rng: np.random.Generator, variance: float) -> DialogueMessage:
    vals = rng.normal(0.0, np.sqrt(variance), 4)
    return DialogueMessage(alice=(vals[0], vals[1]), bob=(vals[2], vals[3]))


def detection_probability(
    run_params: RunParams,
    trials: int,
    seed,
    attack_factory=None,
    charlie_mode: str = "honest",
    message_variance: float = 0.25,
) -> DetectionEstimate:
    """Monte-Carlo abort fraction with a Wilson 95% interval.

    ``attack_factory`` builds a fresh strategy per trial (logs are per
    run); with no factory and an honest supervisor this measures the false
    alarm rate.
    """
    if trials < 100:
        raise InvalidArgumentError("need at least 100 trials")
    aborted = 0
    for t in range(trials):
        rng = np.random.default_rng([seed, t, 11])
        msg = draw_message(rng, message_variance)
        attack = attack_factory() if attack_factory is not None else None
        run = CqdRun(
            run_params, msg, [seed, t], attack=attack,
            charlie_mode=charlie_mode, transcript_enabled=False,
        )
        result = run.execute()
        aborted += result.status == "aborted"
    lo, hi = wilson_interval(aborted, trials)
    return DetectionEstimate(aborted / trials, lo, hi, trials, aborted)


@dataclass
class SwitchPoint:
    kappa: float
    mse: float
    mi_bits: float


def switch_curve(
    run_params: RunParams,
    kappas: list[float],
    runs: int,
    seed,
    message_variance: float = 0.25,
) -> list[SwitchPoint]:
    """Decode quality versus the supervisor's reveal fraction.

    Every grid point replays the same per-trial seeds, so the reveal blur
    is the same noise realization scaled by sqrt(1 - kappa); the resulting
    MSE and regression MI are then exactly monotone in kappa, not just in
    expectation.
    """
    for k in kappas:
        if not 0.0 <= k <= 1.0:
            raise InvalidArgumentError("kappa values must lie in [0, 1]")
    points = []
    for kappa in kappas:
        params = replace(run_params, reveal_fraction=float(kappa))
        secrets = np.empty(runs)
        estimates = np.empty(runs)
        sq_err = np.empty((runs, 4))
        for t in range(runs):
            rng = np.random.default_rng([seed, t, 11])
            msg = draw_message(rng, message_variance)
            result = CqdRun(params, msg, [seed, t], transcript_enabled=False).execute()
            if result.status != "completed":
                raise MetricDomainError("switch curve expects honest completing runs")
            secrets[t] = msg.alice[0]
            estimates[t] = result.decode.alice_estimate[0]
            sq_err[t] = [
                result.decode.residuals["x_alice"] ** 2,
                result.decode.residuals["p_alice"] ** 2,
                result.decode.residuals["x_bob"] ** 2,
                result.decode.residuals["p_bob"] ** 2,
            ]
        mse = float(np.mean(sq_err))
        mi = empirical_mi(secrets, estimates, min_samples=min(runs, 1000))
        points.append(SwitchPoint(kappa=float(kappa), mse=mse, mi_bits=mi))
    return points
