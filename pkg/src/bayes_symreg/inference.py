"""Likelihood, SMC sampling over (theta, sigma), and evidence ratios.

Each equation's parameters and the unknown Gaussian noise scale are
inferred jointly by a Sequential Monte Carlo sampler on the annealed
target

    pi_phi(theta, log sigma)  propto  L(theta, sigma)^phi

with improper flat priors on theta and log sigma.  The ladder of tempering
exponents phi is chosen adaptively from the effective sample size, always
contains the fraction gamma and 1 exactly, and the normalizing-constant
ratio between those two rungs is the normalized marginal likelihood

    q(gamma) = integral(L * prior) / integral(L^gamma * prior),

the quantity whose pairwise ratios form fractional Bayes factors.  Because
q is a ratio of two estimates that share every ladder stage up to gamma,
improper-prior constants (and early-stage estimator bias) cancel.

Particles are seeded from a multivariate-normal mixture centered on the
multistart local optima, extended with a lognormal component for sigma,
and importance-corrected against the first tempered target so the evidence
telescope starts unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .datasets import Dataset
from .expressions import EquationGenome, evaluate_batch
from .fitting import MultistartResult

LOG_2PI = math.log(2.0 * math.pi)
_LOG_Q_CLAMP = 700.0
_SIGMA_FLOOR = 1e-8
_MIN_PHI_STEP = 1e-9


class InferenceError(RuntimeError):
    """Raised for degenerate ensembles and invalid sampler states."""


@dataclass(frozen=True)
class FBFConfig:
    """Sampler settings for the normalized-marginal-likelihood computation.

    ``gamma`` is the likelihood fraction of the fractional Bayes factor;
    ``None`` resolves to 1/sqrt(N) for the dataset at hand.
    """

    gamma: float | None = None
    particle_count: int = 600
    ess_threshold: float = 0.75
    mcmc_steps_per_temper: int = 5
    max_tempering_steps: int = 200
    multistarts: int = 8
    proposal_scale: float = 0.5
    sigma_spread: float = 0.5

    def __post_init__(self):
        if self.gamma is not None and not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.particle_count < 2:
            raise ValueError("particle_count must be >= 2")
        if not 0.0 < self.ess_threshold < 1.0:
            raise ValueError("ess_threshold must be in (0, 1)")
        if self.mcmc_steps_per_temper < 1:
            raise ValueError("mcmc_steps_per_temper must be >= 1")
        if self.max_tempering_steps < 2:
            raise ValueError("max_tempering_steps must be >= 2")
        if self.multistarts < 1:
            raise ValueError("multistarts must be >= 1")

    def resolve_gamma(self, n: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / math.sqrt(n)


@dataclass(frozen=True)
class Particle:
    theta: np.ndarray
    log_sigma: float
    log_weight: float


class ParticleEnsemble:
    """Weighted posterior sample over (theta, sigma) for one equation.

    Carries the tempering state and the two log normalizing-constant
    snapshots that define log q(gamma).
    """

    def __init__(
        self,
        thetas: np.ndarray,
        log_sigmas: np.ndarray,
        log_weights: np.ndarray,
        log_liks: np.ndarray,
        log_priors: np.ndarray,
        phi: float,
        log_z: float,
        log_z_at_gamma: float | None,
        phi_ladder: tuple[float, ...],
        degenerate: bool = False,
    ):
        self.thetas = np.asarray(thetas, dtype=np.float64)
        self.log_sigmas = np.asarray(log_sigmas, dtype=np.float64)
        self.log_weights = np.asarray(log_weights, dtype=np.float64)
        self.log_liks = np.asarray(log_liks, dtype=np.float64)
        self.log_priors = np.asarray(log_priors, dtype=np.float64)
        self.phi = float(phi)
        self.log_z_partial = float(log_z)
        self.log_z_at_gamma = None if log_z_at_gamma is None else float(log_z_at_gamma)
        self.phi_ladder = tuple(phi_ladder)
        self.degenerate = bool(degenerate)

    @property
    def particle_count(self) -> int:
        return len(self.log_weights)

    @property
    def param_count(self) -> int:
        return self.thetas.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def sigmas(self) -> np.ndarray:
        return np.exp(self.log_sigmas)

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(theta=self.thetas[i].copy(), log_sigma=float(self.log_sigmas[i]),
                     log_weight=float(self.log_weights[i]))
            for i in range(self.particle_count)
        ]

    @property
    def log_q(self) -> float:
        """log q(gamma) = log Z(1) - log Z(gamma)."""
        if self.degenerate or self.log_z_at_gamma is None:
            return -np.inf
        return self.log_z_partial - self.log_z_at_gamma

    def ess(self) -> float:
        return float(1.0 / np.sum(np.exp(2.0 * self.log_weights)))

    def map_index(self) -> int:
        """Index of the highest-posterior-density particle."""
        if self.degenerate:
            raise InferenceError("degenerate ensemble has no MAP particle")
        return int(np.argmax(self.log_liks + self.log_priors))


def log_likelihood(genome: EquationGenome, dataset: Dataset, theta, log_sigma: float) -> float:
    """Gaussian log likelihood of the residuals under noise scale sigma.

    Returns -inf when the genome's evaluation is non-finite anywhere.
    """
    z = np.concatenate([np.atleast_1d(np.asarray(theta, dtype=np.float64)).ravel(), [log_sigma]])
    return float(_genome_loglik(genome, dataset.x, dataset.y, z[None, :])[0])


def _genome_loglik(genome, x, y, z: np.ndarray) -> np.ndarray:
    """Batched log likelihood: z holds [theta (p), log_sigma] per row."""
    p = genome.param_count
    values = evaluate_batch(genome, x, z[:, :p])
    log_sigma = z[:, p]
    n = x.shape[0]
    with np.errstate(all="ignore"):
        sse = np.sum((values - y[None, :]) ** 2, axis=1)
        ll = -0.5 * n * LOG_2PI - n * log_sigma - 0.5 * sse * np.exp(-2.0 * log_sigma)
    return np.where(np.isfinite(ll), ll, -np.inf)


def _normalized_ess(log_w: np.ndarray) -> float:
    return float(1.0 / np.sum(np.exp(2.0 * log_w)))


def _normalize_log_weights(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    total = logsumexp(log_w)
    if not np.isfinite(total):
        return log_w, -np.inf
    return log_w - total, float(total)


def _check_ensemble_state(log_w: np.ndarray):
    # Always-on sanity net: normalized weights must sum to one and the
    # effective sample size must stay inside (0, P].
    total = np.exp(logsumexp(log_w))
    if abs(total - 1.0) > 1e-12:
        raise InferenceError(f"weight normalization broken: sum={total!r}")
    ess = _normalized_ess(log_w)
    if not 0.0 < ess <= len(log_w) * (1.0 + 1e-9):
        raise InferenceError(f"ESS out of bounds: {ess!r}")


def systematic_resample(weights: np.ndarray, rng) -> np.ndarray:
    """Systematic (low-variance) resampling; returns ancestor indices."""
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions)


def _next_phi(phi: float, cap: float, log_w: np.ndarray, log_lik: np.ndarray, target_frac: float = 0.8) -> float:
    """Bisect the next tempering exponent so ESS shrinks to ~target_frac."""
    ess_now = _normalized_ess(log_w)
    target = target_frac * ess_now

    def ess_at(delta: float) -> float:
        v = log_w + delta * log_lik
        total = logsumexp(v)
        if not np.isfinite(total):
            return 0.0
        return _normalized_ess(v - total)

    hi = cap - phi
    if ess_at(hi) >= target:
        return cap
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ess_at(mid) >= target:
            lo = mid
        else:
            hi = mid
    return phi + max(lo, _MIN_PHI_STEP)


def _weighted_cov(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    mu = w @ z
    centered = z - mu
    cov = (centered * w[:, None]).T @ centered
    return 0.5 * (cov + cov.T)


def _chol_with_jitter(cov: np.ndarray) -> np.ndarray:
    dim = cov.shape[0]
    jitter = max(1e-12, 1e-9 * float(np.max(np.abs(np.diag(cov)), initial=0.0)))
    for _ in range(12):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(dim))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise InferenceError("proposal covariance is not positive definite")


def random_walk_metropolis(z, log_lik, log_prior, phi, loglik_fn, logprior_fn, chol, steps, rng):
    """Random-walk Metropolis targeting L^phi * prior; returns moved state.

    The proposal is a fixed multivariate normal given by ``chol``; the
    acceptance probability is exp(phi * dloglik + dlogprior) clipped at 1.
    """
    z = z.copy()
    log_lik = log_lik.copy()
    log_prior = log_prior.copy()
    n, dim = z.shape
    accepted = 0
    for _ in range(steps):
        proposal = z + rng.standard_normal((n, dim)) @ chol.T
        ll_prop = loglik_fn(proposal)
        lp_prop = logprior_fn(proposal)
        with np.errstate(invalid="ignore"):
            dlog = phi * (ll_prop - log_lik) + (lp_prop - log_prior)
        dlog = np.where(np.isnan(dlog), -np.inf, dlog)
        accept = np.log(rng.random(n)) < dlog
        z[accept] = proposal[accept]
        log_lik[accept] = ll_prop[accept]
        log_prior[accept] = lp_prop[accept]
        accepted += int(accept.sum())
    return z, log_lik, log_prior, accepted / (steps * n)


@dataclass
class SmcRun:
    """Raw output of one tempered-SMC run on a generic target."""

    z: np.ndarray
    log_weights: np.ndarray
    log_liks: np.ndarray
    log_priors: np.ndarray
    phi_ladder: list[float] = field(default_factory=list)
    log_z: float = -np.inf
    log_z_at_gamma: float | None = None
    degenerate: bool = False
    resample_count: int = 0

    @property
    def log_q(self) -> float:
        if self.degenerate or self.log_z_at_gamma is None:
            return -np.inf
        return self.log_z - self.log_z_at_gamma


def run_tempered_smc(loglik_fn, draw_initial, config: FBFConfig, gamma: float, rng, logprior_fn=None) -> SmcRun:
    """Generic adaptive-tempering SMC with evidence accumulation.

    Parameters
    ----------
    loglik_fn : callable
        Maps particle states ``z (P, dim)`` to log likelihoods ``(P,)``;
        -inf encodes impossibility.
    draw_initial : callable
        ``draw_initial(rng, P) -> (z0, log_g)`` where ``log_g`` is the log
        density of the importance distribution at the drawn points.
    gamma : float
        Likelihood fraction; the ladder stops at gamma exactly and the log
        normalizing constant is snapshotted there.
    logprior_fn : callable, optional
        Log prior density; defaults to the improper flat prior (zeros).
        Proper priors can be injected here, e.g. for validation against
        conjugate closed forms.

    Notes
    -----
    The returned ``log_z`` estimates log integral(L^1 * prior); with the
    default improper prior only differences of such values at shared
    ladder prefixes are meaningful, which is exactly what ``log_q`` uses.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    pcount = config.particle_count
    if logprior_fn is None:
        logprior_fn = lambda z: np.zeros(len(z))

    z, log_g = draw_initial(rng, pcount)
    log_lik = loglik_fn(z)
    log_prior = logprior_fn(z)

    phi = min(gamma / 8.0, 0.01)
    raw = phi * log_lik + log_prior - log_g
    raw = np.where(np.isnan(raw), -np.inf, raw)
    run = SmcRun(z=z, log_weights=raw, log_liks=log_lik, log_priors=log_prior)
    log_w, total = _normalize_log_weights(raw)
    if not np.isfinite(total):
        run.degenerate = True
        return run
    run.log_z = total - math.log(pcount)
    run.phi_ladder.append(phi)
    _check_ensemble_state(log_w)

    steps = 0
    while phi < 1.0:
        steps += 1
        cap = gamma if phi < gamma else 1.0
        if steps >= config.max_tempering_steps:
            phi_next = cap
        else:
            phi_next = _next_phi(phi, cap, log_w, log_lik)
        phi_next = min(phi_next, cap)
        delta = phi_next - phi

        incr = log_w + delta * log_lik
        total = logsumexp(incr)
        if not np.isfinite(total):
            run.degenerate = True
            break
        run.log_z += float(total)
        log_w = incr - total
        _check_ensemble_state(log_w)
        if phi_next == gamma:
            run.log_z_at_gamma = run.log_z

        if _normalized_ess(log_w) / pcount < config.ess_threshold:
            idx = systematic_resample(np.exp(log_w), rng)
            z = z[idx]
            log_lik = log_lik[idx]
            log_prior = log_prior[idx]
            log_w = np.full(pcount, -math.log(pcount))
            run.resample_count += 1

        cov = _weighted_cov(z, np.exp(log_w)) * config.proposal_scale**2
        chol = _chol_with_jitter(cov)
        z, log_lik, log_prior, _ = random_walk_metropolis(
            z, log_lik, log_prior, phi_next, loglik_fn, logprior_fn, chol,
            config.mcmc_steps_per_temper, rng,
        )
        phi = phi_next
        run.phi_ladder.append(phi)

    if gamma == 1.0 and not run.degenerate:
        run.log_z_at_gamma = run.log_z
    run.z, run.log_weights, run.log_liks, run.log_priors = z, log_w, log_lik, log_prior
    return run


def _mvn_mixture_initializer(genome, multistart: MultistartResult, config: FBFConfig):
    """Build the importance sampler over (theta, log sigma).

    One mixture component per converged local optimum: MVN(theta*, Sigma*)
    for theta (jittered to positive definite) joined with an independent
    normal on log sigma centered at the fit's log RMSE.  Components are
    sampled in equal proportion, deliberately not merging co-located
    optima; the importance correction keeps the evidence telescope
    unbiased regardless.
    """
    fits = multistart.converged_fits()
    if not fits:
        raise ValueError("need at least one converged fit to initialize the sampler")
    p = genome.param_count
    dim = p + 1
    comps = []
    for fit in fits:
        mean = np.concatenate([fit.theta_star, [math.log(max(fit.rmse, _SIGMA_FLOOR))]])
        chol = np.zeros((dim, dim))
        if p:
            chol[:p, :p] = _chol_with_jitter(fit.covariance)
        chol[p, p] = config.sigma_spread
        logdet = float(np.sum(np.log(np.diag(chol))))
        comps.append((mean, chol, logdet))

    def log_density(z: np.ndarray) -> np.ndarray:
        parts = []
        for mean, chol, logdet in comps:
            u = solve_triangular(chol, (z - mean).T, lower=True).T
            parts.append(-0.5 * np.sum(u**2, axis=1) - logdet - 0.5 * dim * LOG_2PI)
        return logsumexp(np.stack(parts), axis=0) - math.log(len(comps))

    def draw(rng, pcount):
        counts = np.full(len(comps), pcount // len(comps))
        counts[: pcount % len(comps)] += 1
        blocks = []
        for (mean, chol, _), cnt in zip(comps, counts):
            blocks.append(mean + rng.standard_normal((cnt, dim)) @ chol.T)
        z = np.vstack(blocks)
        return z, log_density(z)

    return draw


def smc_sample(
    genome: EquationGenome,
    dataset: Dataset,
    multistart: MultistartResult,
    config: FBFConfig,
    rng,
) -> tuple[ParticleEnsemble, float]:
    """Sample the joint posterior of (theta, sigma) and estimate q(gamma).

    Requires at least one converged multistart fit (callers short-circuit
    hopeless genomes with q = 0 before getting here).  Returns the final
    ensemble and q(gamma) = exp(log Z(1) - log Z(gamma)), clamped against
    overflow; a totally degenerate run yields q = 0 and a flagged ensemble.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    gamma = config.resolve_gamma(dataset.n)
    p = genome.param_count
    x, y = dataset.x, dataset.y

    def loglik_fn(z):
        return _genome_loglik(genome, x, y, z)

    draw_initial = _mvn_mixture_initializer(genome, multistart, config)
    run = run_tempered_smc(loglik_fn, draw_initial, config, gamma, rng)
    ensemble = ParticleEnsemble(
        thetas=run.z[:, :p],
        log_sigmas=run.z[:, p],
        log_weights=run.log_weights,
        log_liks=run.log_liks,
        log_priors=run.log_priors,
        phi=run.phi_ladder[-1] if run.phi_ladder else 0.0,
        log_z=run.log_z,
        log_z_at_gamma=run.log_z_at_gamma,
        phi_ladder=tuple(run.phi_ladder),
        degenerate=run.degenerate,
    )
    if run.degenerate:
        return ensemble, 0.0
    q = math.exp(min(max(run.log_q, -_LOG_Q_CLAMP), _LOG_Q_CLAMP))
    return ensemble, q


def ensemble_from_samples(
    genome: EquationGenome,
    dataset: Dataset,
    thetas: np.ndarray,
    sigmas: np.ndarray,
    weights: np.ndarray,
) -> ParticleEnsemble:
    """Rebuild a posterior ensemble from exported (theta, sigma, weight) rows.

    Log likelihoods are recomputed against the given dataset so MAP lookup
    and band prediction work on reloaded posteriors.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    sigmas = np.asarray(sigmas, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0 or (weights < 0).any():
        raise InferenceError("weights must be non-negative and sum to a positive value")
    z = np.column_stack([thetas, np.log(sigmas)])
    log_liks = _genome_loglik(genome, dataset.x, dataset.y, z)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights / weights.sum())
    return ParticleEnsemble(
        thetas=thetas,
        log_sigmas=np.log(sigmas),
        log_weights=log_w,
        log_liks=log_liks,
        log_priors=np.zeros(len(weights)),
        phi=1.0,
        log_z=0.0,
        log_z_at_gamma=None,
        phi_ladder=(1.0,),
    )


def fractional_bayes_factor(q1: float, q2: float) -> float:
    """Ratio of two normalized marginal likelihoods.

    Returns +inf when only the denominator vanishes and NaN when both are
    zero (incomparable; callers treat that as a coin flip).
    """
    if q1 < 0 or q2 < 0:
        raise ValueError("q values must be non-negative")
    if q1 == 0.0 and q2 == 0.0:
        return math.nan
    if q2 == 0.0:
        return math.inf
    return q1 / q2


@dataclass
class PosteriorSummary:
    """MAP point, per-parameter weighted KDE grids, and pairwise samples."""

    map_theta: np.ndarray
    map_sigma: float
    marginals: dict[str, tuple[np.ndarray, np.ndarray]]
    pairwise_samples: np.ndarray


def _weighted_kde(values: np.ndarray, weights: np.ndarray, points: int) -> tuple[np.ndarray, np.ndarray]:
    mean = float(weights @ values)
    var = float(weights @ (values - mean) ** 2)
    std = math.sqrt(max(var, 0.0))
    neff = 1.0 / float(np.sum(weights**2))
    bw = 1.06 * std * neff ** (-0.2) if std > 0 else max(abs(mean) * 1e-6, 1e-12)
    lo = float(values.min()) - 3.0 * bw
    hi = float(values.max()) + 3.0 * bw
    grid = np.linspace(lo, hi, points)
    u = (grid[None, :] - values[:, None]) / bw
    density = (weights[:, None] * np.exp(-0.5 * u**2)).sum(axis=0) / (bw * math.sqrt(2.0 * math.pi))
    return grid, density


def posterior_summaries(ensemble: ParticleEnsemble, kde_points: int = 200, max_pairwise: int = 1000) -> PosteriorSummary:
    """MAP particle, marginal KDE grids, and equal-weight pairwise draws.

    The MAP is the highest-posterior-density particle (log likelihood plus
    log prior).  Pairwise samples are produced by a deterministic
    systematic resampling so exports are reproducible.
    """
    if ensemble.degenerate:
        raise InferenceError("cannot summarize a degenerate ensemble")
    w = ensemble.weights
    if not np.isfinite(w).all() or w.sum() <= 0:
        raise InferenceError("ensemble weights are not a valid distribution")
    map_idx = ensemble.map_index()
    marginals = {}
    for k in range(ensemble.param_count):
        marginals[f"theta_{k}"] = _weighted_kde(ensemble.thetas[:, k], w, kde_points)
    marginals["sigma"] = _weighted_kde(ensemble.sigmas, w, kde_points)

    m = min(max_pairwise, ensemble.particle_count)
    positions = (0.5 + np.arange(m)) / m
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0
    idx = np.searchsorted(cumulative, positions)
    pairwise = np.column_stack([ensemble.thetas[idx], ensemble.sigmas[idx]])
    return PosteriorSummary(
        map_theta=ensemble.thetas[map_idx].copy(),
        map_sigma=float(ensemble.sigmas[map_idx]),
        marginals=marginals,
        pairwise_samples=pairwise,
    )
