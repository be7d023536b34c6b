"""The core inference algorithms behind one Posterior interface.

Three routes to the posterior: train a conditional estimator of parameters
given data and sample it directly (NPE, amortized); train an estimator of
data given parameters and run MCMC on the product with the prior (NLE);
train a classifier whose logit estimates the likelihood-to-evidence ratio
and run MCMC on summed logits plus the prior (NRE). On top of these:
truncated sequential refinement (multi-round NPE on a restricted prior)
and posterior ensembles that average member densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution, prior_from_config
from .estimators import ClassifierNet, EstimatorConfig, build_estimator
from .ndiff import Tape, Tensor
from .samplers import SamplerConfig, slice_sample
from .simulators import Dataset, Simulator, simulate_rows
from .trainer import TrainConfig, TrainReport, fit


class InferenceError(RuntimeError):
    pass


class _PosteriorTask:
    """Trainer adapter: mean negative log-density of parameters given data."""

    loss_kind = "nll"

    def __init__(self, estimator):
        self.estimator = estimator
        self.store = estimator.store

    def loss(self, tape, theta, x):
        lp = self.estimator.log_prob_tape(
            tape, Tensor(theta), Tensor(x) if self.estimator.context_dim else None)
        return tape.negate(tape.mean(lp))


class _LikelihoodTask:
    """Trainer adapter: mean negative log-density of data given parameters."""

    loss_kind = "nll"

    def __init__(self, estimator):
        self.estimator = estimator
        self.store = estimator.store

    def loss(self, tape, theta, x):
        lp = self.estimator.log_prob_tape(tape, Tensor(x), Tensor(theta))
        return tape.negate(tape.mean(lp))


def _resolve_prior(dataset: Dataset, prior: Distribution | None) -> Distribution:
    if prior is not None:
        return prior
    if "prior" in dataset.meta:
        return prior_from_config(dataset.meta["prior"])
    raise InferenceError("no prior given and dataset metadata carries none")


class BoundPosterior:
    """A posterior pinned to one observation: sample()/log_prob() over theta."""

    def __init__(self, parent, x):
        self.parent = parent
        self.x = np.asarray(x, dtype=np.float64).reshape(-1)
        self.prior = parent.prior

    def sample(self, n, rng):
        return self.parent.sample(self.x, n, rng)

    def log_prob(self, theta):
        return self.parent.log_prob(self.x, theta)

    def log_prob_tape(self, tape, theta: Tensor) -> Tensor:
        return self.parent._log_prob_tape(tape, self.x, theta)


class DirectPosterior:
    """Amortized posterior: one trained estimator serves any observation.

    Sampling rejects the estimator's leakage outside the prior support;
    log_prob reports the estimator density inside the support and -inf
    outside (not renormalized for leakage, which cancels in rank-based
    diagnostics).
    """

    kind = "direct"

    def __init__(self, estimator, prior: Distribution):
        self.estimator = estimator
        self.prior = prior

    def at(self, x) -> BoundPosterior:
        return BoundPosterior(self, x)

    def sample(self, x, n, rng, max_rounds: int = 200):
        out = np.empty((n, self.prior.dim))
        filled = 0
        for _ in range(max_rounds):
            draw = self.estimator.sample(x, max(n - filled, 32), rng)
            keep = draw[self.prior.contains(draw)]
            take = min(keep.shape[0], n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
            if filled == n:
                return out
        raise InferenceError(
            "posterior sampling kept leaking outside the prior support; "
            f"accepted {filled}/{n}"
        )

    def log_prob(self, x, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        ctx = np.tile(np.asarray(x, dtype=np.float64).reshape(1, -1), (theta.shape[0], 1))
        lp = self.estimator.log_prob(theta, ctx)
        return np.where(self.prior.contains(theta), lp, -np.inf)

    def _log_prob_tape(self, tape, x, theta: Tensor) -> Tensor:
        ctx = Tensor(np.tile(np.asarray(x, dtype=np.float64).reshape(1, -1),
                             (theta.shape[0], 1)))
        return self.estimator.log_prob_tape(tape, theta, ctx)

    def save(self, path):
        self.estimator.store.save(path)


class LikelihoodModel:
    """Trained estimator of data given parameters, exposing summed log-likelihoods."""

    def __init__(self, estimator):
        self.estimator = estimator

    def log_lik(self, observations, thetas) -> np.ndarray:
        """Sum of log q(x_t | theta) over the observation rows, per theta row."""
        observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        t, c = observations.shape[0], thetas.shape[0]
        targets = np.tile(observations, (c, 1))
        contexts = np.repeat(thetas, t, axis=0)
        lp = self.estimator.log_prob(targets, contexts)
        return lp.reshape(c, t).sum(axis=1)


class RatioModel:
    """Trained classifier whose logit estimates log p(x|theta) - log p(x)."""

    def __init__(self, classifier: ClassifierNet):
        self.classifier = classifier

    def log_ratio(self, observations, thetas) -> np.ndarray:
        observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        t, c = observations.shape[0], thetas.shape[0]
        x_rows = np.tile(observations, (c, 1))
        t_rows = np.repeat(thetas, t, axis=0)
        logit = self.classifier.logit(t_rows, x_rows)
        return logit.reshape(c, t).sum(axis=1)


class McmcPosterior:
    """Posterior accessed through slice sampling of a learned log-target."""

    kind = "mcmc"

    def __init__(self, log_target, prior: Distribution, sampler_config: SamplerConfig,
                 observations):
        self.log_target = log_target
        self.prior = prior
        self.sampler_config = sampler_config
        self.observations = np.atleast_2d(observations)
        self.last_diagnostics = None

    def sample(self, n, rng):
        samples, diag = slice_sample(self.log_target, self.prior,
                                     self.sampler_config, rng, n)
        self.last_diagnostics = diag
        return samples

    def log_prob(self, theta):
        raise InferenceError(
            "mcmc-backed posteriors expose no density; "
            "use TARP for coverage diagnostics"
        )


class EnsemblePosterior:
    """Uniform mixture of direct posteriors: density is the member average."""

    kind = "ensemble"

    def __init__(self, members):
        if len(members) < 2:
            raise InferenceError("an ensemble needs at least 2 members")
        dims = {(m.prior.dim, m.estimator.context_dim) for m in members}
        if len(dims) != 1:
            raise InferenceError(f"ensemble members disagree on dimensions: {dims}")
        self.members = list(members)
        self.prior = members[0].prior

    def at(self, x) -> BoundPosterior:
        return BoundPosterior(self, x)

    def sample(self, x, n, rng):
        which = rng.integers(0, len(self.members), size=n)
        out = np.empty((n, self.prior.dim))
        for k, member in enumerate(self.members):
            idx = np.flatnonzero(which == k)
            if idx.size:
                out[idx] = member.sample(x, idx.size, rng)
        return out

    def log_prob(self, x, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        lps = np.stack([m.log_prob(x, theta) for m in self.members])
        with np.errstate(invalid="ignore"):
            mx = np.max(lps, axis=0)
            safe = np.where(np.isfinite(mx), mx, 0.0)
            out = safe + np.log(np.exp(lps - safe).sum(axis=0)) - math.log(len(self.members))
        return np.where(np.isfinite(mx), out, -np.inf)

    def _log_prob_tape(self, tape, x, theta: Tensor) -> Tensor:
        cols = [m._log_prob_tape(tape, x, theta) for m in self.members]
        stacked = tape.concat(cols, axis=1)
        lse = tape.logsumexp(stacked, axis=1)
        return tape.add(lse, -math.log(len(self.members)))


def npe_fit(dataset: Dataset, estimator_config: EstimatorConfig | None = None,
            train_config: TrainConfig | None = None,
            prior: Distribution | None = None) -> tuple[DirectPosterior, TrainReport]:
    """Train a conditional estimator of theta given x; inference at any new
    observation afterwards needs no further simulation."""
    if len(dataset) == 0:
        raise InferenceError("cannot fit on an empty dataset")
    prior = _resolve_prior(dataset, prior)
    estimator_config = estimator_config or EstimatorConfig(kind="mdn")
    train_config = train_config or TrainConfig()
    estimator = build_estimator(estimator_config, dataset.theta_dim, dataset.x_dim,
                                seed=train_config.seed)
    estimator.initialize_standardization(dataset.theta, dataset.x)
    report = fit(_PosteriorTask(estimator), dataset, train_config)
    return DirectPosterior(estimator, prior), report


def nle_fit(dataset: Dataset, estimator_config: EstimatorConfig | None = None,
            train_config: TrainConfig | None = None) -> tuple[LikelihoodModel, TrainReport]:
    """Train a conditional estimator of x given theta (the surrogate likelihood)."""
    estimator_config = estimator_config or EstimatorConfig(kind="mdn")
    train_config = train_config or TrainConfig()
    estimator = build_estimator(estimator_config, dataset.x_dim, dataset.theta_dim,
                                seed=train_config.seed)
    estimator.initialize_standardization(dataset.x, dataset.theta)
    report = fit(_LikelihoodTask(estimator), dataset, train_config)
    return LikelihoodModel(estimator), report


def nre_fit(dataset: Dataset, hidden: tuple = (50, 50),
            train_config: TrainConfig | None = None) -> tuple[RatioModel, TrainReport]:
    """Train the ratio classifier on matched vs cyclically shuffled pairs."""
    train_config = train_config or TrainConfig()
    if len(dataset) < 2 * train_config.batch_size:
        raise InferenceError(
            f"NRE needs at least 2*batch_size={2 * train_config.batch_size} rows, "
            f"got {len(dataset)}"
        )
    classifier = ClassifierNet(dataset.theta_dim, dataset.x_dim, hidden=hidden,
                               seed=train_config.seed)
    classifier.initialize_standardization(dataset.theta, dataset.x)
    report = fit(classifier, dataset, train_config)
    return RatioModel(classifier), report


def _support_masked(prior: Distribution, term) -> callable:
    """Posterior log-target: prior plus a learned term, short-circuited to
    -inf outside the prior support (the network is never queried there)."""

    def log_target(thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        lp = prior.log_prob(thetas)
        out = np.full(thetas.shape[0], -np.inf)
        ok = np.isfinite(lp)
        if ok.any():
            out[ok] = lp[ok] + term(thetas[ok])
        return out

    return log_target


def nle_posterior(model: LikelihoodModel, prior: Distribution, observations,
                  sampler_config: SamplerConfig | None = None) -> McmcPosterior:
    """MCMC posterior over the summed single-trial log-likelihoods, valid for
    any number of i.i.d. observations."""
    observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if observations.shape[0] < 1:
        raise InferenceError("need at least one observation")
    target = _support_masked(prior, lambda t: model.log_lik(observations, t))
    return McmcPosterior(target, prior, sampler_config or SamplerConfig(), observations)


def nre_posterior(model: RatioModel, prior: Distribution, observations,
                  sampler_config: SamplerConfig | None = None) -> McmcPosterior:
    """MCMC posterior over summed per-trial logits plus the prior."""
    observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if observations.shape[0] < 1:
        raise InferenceError("need at least one observation")
    target = _support_masked(prior, lambda t: model.log_ratio(observations, t))
    return McmcPosterior(target, prior, sampler_config or SamplerConfig(), observations)


class TruncationRegion:
    """Highest-density region of a reference posterior, thresholded at the
    epsilon-quantile of sampled member densities."""

    def __init__(self, bound_posterior: BoundPosterior, epsilon: float = 1e-4,
                 n_density_samples: int = 10_000, rng=None):
        rng = rng or np.random.default_rng(0)
        self.bound = bound_posterior
        self.epsilon = float(epsilon)
        samples = bound_posterior.sample(n_density_samples, rng)
        densities = bound_posterior.log_prob(samples)
        self.cutoff = float(np.quantile(densities, self.epsilon))

    def contains(self, thetas) -> np.ndarray:
        return self.bound.log_prob(thetas) >= self.cutoff


@dataclass
class TsnpeRoundInfo:
    acceptance_rate: float
    cutoff: float
    n_new: int


def sample_truncated_prior(prior: Distribution, region: TruncationRegion, n: int,
                           rng, min_acceptance: float = 1e-3,
                           batch: int = 4096) -> tuple[np.ndarray, float]:
    """Rejection-sample the prior restricted to the truncation region."""
    kept = []
    n_kept = 0
    n_drawn = 0
    while n_kept < n:
        draw = prior.sample(rng, batch)
        ok = region.contains(draw)
        kept.append(draw[ok])
        n_kept += int(ok.sum())
        n_drawn += batch
        if n_drawn >= 100 * batch and n_kept < min_acceptance * n_drawn:
            raise InferenceError(
                f"truncated-prior rejection acceptance {n_kept / n_drawn:.2e} "
                "below 1e-3; region and prior barely overlap"
            )
    return np.vstack(kept)[:n], n_kept / n_drawn


def tsnpe_round(posterior: DirectPosterior, x_o, prior: Distribution,
                simulator: Simulator, n_new: int,
                estimator_config: EstimatorConfig | None = None,
                train_config: TrainConfig | None = None,
                seed: int = 0, data: Dataset | None = None,
                epsilon: float = 1e-4):
    """One truncated-sequential refinement round.

    Draws new parameters from the prior restricted to the current
    posterior's highest-density region, simulates them, and retrains on all
    accumulated data with the unmodified loss.
    Returns (posterior, accumulated dataset, TsnpeRoundInfo).
    """
    if posterior.kind != "direct":
        raise InferenceError("truncated sequential refinement needs a direct posterior")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    region = TruncationRegion(posterior.at(x_o), epsilon=epsilon, rng=rng)
    thetas, acceptance = sample_truncated_prior(prior, region, n_new, rng)
    x = simulate_rows(simulator, thetas, seed=seed)
    new_data = Dataset(thetas, x, dict(data.meta) if data else {})
    merged = data.concat(new_data) if data is not None else new_data
    new_posterior, report = npe_fit(merged, estimator_config, train_config, prior=prior)
    info = TsnpeRoundInfo(acceptance_rate=acceptance, cutoff=region.cutoff, n_new=n_new)
    return new_posterior, merged, info, report


def ensemble(members) -> EnsemblePosterior:
    """Average the densities of independently trained direct posteriors."""
    return EnsemblePosterior(members)


def fit_ensemble(dataset: Dataset, n_members: int = 5,
                 estimator_config: EstimatorConfig | None = None,
                 train_config: TrainConfig | None = None,
                 prior: Distribution | None = None) -> tuple[EnsemblePosterior, list]:
    """Train ensemble members differing only in seed (init and shuffling)."""
    train_config = train_config or TrainConfig()
    members, reports = [], []
    for k in range(n_members):
        cfg_k = TrainConfig(**{**train_config.to_dict(), "seed": train_config.seed + k})
        post, report = npe_fit(dataset, estimator_config, cfg_k, prior=prior)
        members.append(post)
        reports.append(report)
    return EnsemblePosterior(members), reports
