"""Axis-aligned slice-sampling MCMC, SIR initialization, MAP search, quadrature.

The slice sampler needs only log-target evaluations (no gradients) and runs
all chains in lockstep: every step-out and shrinkage round evaluates the
batched target on the still-active chains only. Output order is chain-major
and fully deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import Distribution
from .ndiff import Tape, Tensor
from .tableio import write_table

_MAX_SHRINK = 200


class SamplerError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    chains: int = 100
    warmup: int = 1000            # sweeps per chain before retention
    thin: int = 2
    init: str = "sir"             # sir | prior
    sir_pool: int = 1000
    step_scale: float = 1.0       # step-out width in units of prior std per dim
    max_stepouts: int = 50

    def __post_init__(self):
        for name in ("chains", "warmup", "thin", "sir_pool", "max_stepouts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.init not in ("sir", "prior"):
            raise ValueError(f"init must be 'sir' or 'prior', got {self.init!r}")

    def to_dict(self):
        return {"chains": self.chains, "warmup": self.warmup, "thin": self.thin,
                "init": self.init, "sir_pool": self.sir_pool,
                "step_scale": self.step_scale, "max_stepouts": self.max_stepouts}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ChainDiagnostics:
    r_hat: np.ndarray                    # per dimension
    ess: np.ndarray                      # per dimension
    acceptance: np.ndarray               # per chain, shrinkage acceptance rate
    n_target_evals: int = 0

    def save(self, path):
        dim = self.r_hat.size
        rows = np.column_stack([np.arange(dim, dtype=np.float64), self.r_hat, self.ess])
        meta = {
            "n_target_evals": int(self.n_target_evals),
            "mean_acceptance": float(self.acceptance.mean()),
            "n_chains": int(self.acceptance.size),
        }
        write_table(path, rows, ["dimension", "r_hat", "ess"], meta)


def _sanitize(logf: np.ndarray) -> np.ndarray:
    return np.where(np.isnan(logf), -np.inf, logf)


def sir_init(log_target, prior: Distribution, pool_size: int, chains: int,
             rng: np.random.Generator) -> np.ndarray:
    """Sequential importance resampling: prior pool reweighted by the target.

    Weights are proportional to exp(log_target - log_prior); returned points
    are members of the pool.
    """
    if pool_size < chains:
        raise SamplerError(f"SIR pool size {pool_size} < chain count {chains}")
    pool = prior.sample(rng, pool_size)
    log_w = _sanitize(np.asarray(log_target(pool), dtype=np.float64)) - prior.log_prob(pool)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise SamplerError("SIR initialization failed: log-target is -inf at every candidate")
    w = np.zeros(pool_size)
    w[finite] = np.exp(log_w[finite] - log_w[finite].max())
    w /= w.sum()
    idx = rng.choice(pool_size, size=chains, replace=True, p=w)
    return pool[idx]


def _prior_init(log_target, prior, chains, rng, tries=20):
    x = prior.sample(rng, chains)
    logf = _sanitize(np.asarray(log_target(x)))
    for _ in range(tries):
        bad = ~np.isfinite(logf)
        if not bad.any():
            return x
        x[bad] = prior.sample(rng, int(bad.sum()))
        logf[bad] = _sanitize(np.asarray(log_target(x[bad])))
    raise SamplerError("could not find prior draws with finite log-target")


class _SliceState:
    """Lockstep slice sampler over a batch of chains."""

    def __init__(self, log_target, x0, widths, max_stepouts, rng):
        self.log_target = log_target
        self.x = np.array(x0, dtype=np.float64)
        self.widths = widths
        self.max_stepouts = max_stepouts
        self.rng = rng
        self.logf = _sanitize(np.asarray(log_target(self.x), dtype=np.float64))
        if not np.all(np.isfinite(self.logf)):
            raise SamplerError("log-target not finite at initialization points")
        self.n_evals = self.x.shape[0]
        self.accepted = 0
        self.proposed = 0
        self.chain_accepted = np.zeros(self.x.shape[0], dtype=np.int64)
        self.chain_proposed = np.zeros(self.x.shape[0], dtype=np.int64)

    def _eval_coord(self, idx, coord, values):
        probe = self.x[idx].copy()
        probe[:, coord] = values
        self.n_evals += idx.size
        return _sanitize(np.asarray(self.log_target(probe), dtype=np.float64))

    def sweep(self):
        """One update of every coordinate (fixed order) on every chain."""
        n, d = self.x.shape
        for j in range(d):
            w = self.widths[j]
            level = self.logf + np.log(self.rng.uniform(size=n))
            u = self.rng.uniform(size=n)
            left = self.x[:, j] - u * w
            right = left + w

            # step out the interval until both ends fall below the level
            grow = np.arange(n)
            for _ in range(self.max_stepouts):
                if grow.size == 0:
                    break
                lf = self._eval_coord(grow, j, left[grow])
                still = lf > level[grow]
                left[grow[still]] -= w
                grow = grow[still]
            grow = np.arange(n)
            for _ in range(self.max_stepouts):
                if grow.size == 0:
                    break
                lf = self._eval_coord(grow, j, right[grow])
                still = lf > level[grow]
                right[grow[still]] += w
                grow = grow[still]

            # shrink toward the current point until a proposal is accepted
            active = np.arange(n)
            for _ in range(_MAX_SHRINK):
                if active.size == 0:
                    break
                prop = left[active] + self.rng.uniform(size=active.size) * (
                    right[active] - left[active])
                lf = self._eval_coord(active, j, prop)
                self.proposed += active.size
                self.chain_proposed[active] += 1
                acc = lf > level[active]
                hit = active[acc]
                self.x[hit, j] = prop[acc]
                self.logf[hit] = lf[acc]
                self.accepted += hit.size
                self.chain_accepted[hit] += 1
                rej = active[~acc]
                pr = prop[~acc]
                lower = pr < self.x[rej, j]
                left[rej[lower]] = pr[lower]
                right[rej[~lower]] = pr[~lower]
                active = rej
            # pathological shrinkage: keep the current (always valid) point


def _split_r_hat(draws: np.ndarray) -> np.ndarray:
    """Split-R-hat per dimension from (chains, draws, dim) retained output."""
    c, q, d = draws.shape
    if q < 4:
        return np.full(d, np.nan)
    half = q // 2
    halves = np.concatenate([draws[:, :half], draws[:, half:2 * half]], axis=0)
    means = halves.mean(axis=1)
    variances = halves.var(axis=1, ddof=1)
    w = variances.mean(axis=0)
    b = half * means.var(axis=0, ddof=1)
    out = np.ones(d)
    ok = w > 0
    var_plus = (half - 1) / half * w[ok] + b[ok] / half
    out[ok] = np.sqrt(var_plus / w[ok])
    return np.maximum(out, 1.0)


def _ess(draws: np.ndarray) -> np.ndarray:
    """Effective sample size per dimension (initial positive sequence cutoff)."""
    c, q, d = draws.shape
    total = c * q
    out = np.empty(d)
    for k in range(d):
        series = draws[:, :, k]
        centered = series - series.mean(axis=1, keepdims=True)
        denom = (centered * centered).sum(axis=1).mean()
        if denom == 0 or q < 4:
            out[k] = total
            continue
        rho_sum = 0.0
        for lag in range(1, q):
            rho = (centered[:, :-lag] * centered[:, lag:]).sum(axis=1).mean() / denom
            if rho < 0.0:
                break
            rho_sum += rho
        out[k] = min(total, total / (1.0 + 2.0 * rho_sum))
    return np.maximum(out, 1.0)


def slice_sample(log_target, prior: Distribution, config: SamplerConfig,
                 rng: np.random.Generator, n_samples: int):
    """Pooled posterior draws from multi-chain slice sampling.

    Returns (samples, ChainDiagnostics); samples has exactly ``n_samples``
    rows, pooled chain-major after warmup and thinning.
    """
    if n_samples < 1:
        raise SamplerError("need n_samples >= 1")
    widths = config.step_scale * np.asarray(prior.std(), dtype=np.float64)
    if config.init == "sir":
        x0 = sir_init(log_target, prior, config.sir_pool, config.chains, rng)
    else:
        x0 = _prior_init(log_target, prior, config.chains, rng)
    state = _SliceState(log_target, x0, widths, config.max_stepouts, rng)

    for _ in range(config.warmup):
        state.sweep()

    per_chain = math.ceil(n_samples / config.chains)
    retained = np.empty((config.chains, per_chain, prior.dim))
    for k in range(per_chain):
        for _ in range(config.thin):
            state.sweep()
        retained[:, k] = state.x

    samples = retained.reshape(config.chains * per_chain, prior.dim)[:n_samples]
    with np.errstate(invalid="ignore"):
        acceptance = np.where(state.chain_proposed > 0,
                              state.chain_accepted / np.maximum(state.chain_proposed, 1), 1.0)
    diag = ChainDiagnostics(
        r_hat=_split_r_hat(retained),
        ess=_ess(retained),
        acceptance=acceptance,
        n_target_evals=state.n_evals,
    )
    return samples, diag


def batch_means_mcse(values: np.ndarray) -> np.ndarray:
    """Monte-Carlo standard error via batch means with ~sqrt(n) batches."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64).T).T
    n = values.shape[0]
    if n < 4:
        return values.std(axis=0, ddof=1) / math.sqrt(max(n, 2))
    b = int(math.sqrt(n))
    nb = n // b
    batches = values[:nb * b].reshape(nb, b, values.shape[1]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / math.sqrt(nb)


def map_estimate(posterior, rng: np.random.Generator, restarts: int = 10,
                 lr: float = 0.01, steps: int = 1000):
    """Posterior mode by batched Adam ascent from posterior-sample starts.

    ``posterior`` must be bound to an observation and expose differentiable
    ``log_prob_tape`` plus ``sample``/``prior``. The best point ever visited
    wins; the result is clamped to the prior support.
    """
    prior = posterior.prior
    starts = posterior.sample(restarts, rng)
    theta = np.clip(starts, prior.low, prior.high)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_logp = np.full(restarts, -np.inf)
    best_theta = theta.copy()
    trace = []

    for step in range(1, steps + 1):
        tape = Tape()
        theta_t = Tensor(theta)
        lp = posterior.log_prob_tape(tape, theta_t)
        lp_np = lp.data[:, 0]
        better = lp_np > best_logp
        best_logp[better] = lp_np[better]
        best_theta[better] = theta[better]
        trace.append(float(np.nanmax(lp_np)))
        grads = tape.backward(tape.negate(tape.sum(lp)))
        g = grads[theta_t]
        g[~np.isfinite(g)] = 0.0
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** step)
        v_hat = v / (1 - beta2 ** step)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        theta = np.clip(theta, prior.low, prior.high)

    if not np.any(np.isfinite(best_logp)):
        raise SamplerError(f"MAP search diverged in all restarts; trace tail {trace[-5:]}")
    winner = int(np.argmax(best_logp))
    return best_theta[winner]


def quadrature(fn, intervals, nodes: int = 512) -> float:
    """Trapezoid integration of a vectorized fn over a 1-D or 2-D box.

    ``fn`` maps points of shape (n, d) to values of shape (n,).
    """
    if isinstance(intervals[0], (int, float)):
        intervals = [tuple(intervals)]
    if len(intervals) not in (1, 2):
        raise ValueError("quadrature supports 1-D or 2-D rectangular domains")
    if nodes < 16:
        raise ValueError("need at least 16 quadrature nodes per axis")
    grids = [np.linspace(lo, hi, nodes) for lo, hi in intervals]
    if len(intervals) == 1:
        values = np.asarray(fn(grids[0][:, None]))
        return float(np.trapezoid(values, grids[0]))
    gx, gy = np.meshgrid(grids[0], grids[1], indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    values = np.asarray(fn(pts)).reshape(nodes, nodes)
    return float(np.trapezoid(np.trapezoid(values, grids[1], axis=1), grids[0]))
