"""Analytic distributions used as priors, flow bases, and mixture components.

All distributions are immutable after construction and safe for concurrent
reads; RNG streams are caller-owned. ``log_prob`` accepts a single point
``(d,)`` -> float or a batch ``(n, d)`` -> ``(n,)``, and returns exactly
``-inf`` (never NaN) outside the support. Boundary points count as inside.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

LOG_2PI = math.log(2.0 * math.pi)


class DistributionError(ValueError):
    pass


def _as_batch(point, dim):
    arr = np.asarray(point, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DistributionError(
            f"point dimension {arr.shape} does not match distribution dim {dim}"
        )
    return arr, single


def _normal_logpdf(z):
    return -0.5 * z * z - 0.5 * LOG_2PI


class Distribution:
    """Common interface: dim, sample, log_prob, support bounds, moments."""

    dim: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def log_prob(self, point):
        raise NotImplementedError

    @property
    def low(self) -> np.ndarray:
        return np.full(self.dim, -np.inf)

    @property
    def high(self) -> np.ndarray:
        return np.full(self.dim, np.inf)

    def contains(self, point) -> np.ndarray:
        arr, single = _as_batch(point, self.dim)
        ok = np.all((arr >= self.low) & (arr <= self.high), axis=1)
        return bool(ok[0]) if single else ok

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def std(self) -> np.ndarray:
        raise NotImplementedError


class BoxUniform(Distribution):
    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise DistributionError("lower and upper must be vectors of equal length")
        if not np.all(self.lower < self.upper):
            raise DistributionError(
                f"need lower < upper per dimension, got {self.lower} and {self.upper}"
            )
        self.dim = self.lower.size
        self._log_density = -float(np.sum(np.log(self.upper - self.lower)))

    def sample(self, rng, n):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def log_prob(self, point):
        arr, single = _as_batch(point, self.dim)
        inside = np.all((arr >= self.lower) & (arr <= self.upper), axis=1)
        out = np.where(inside, self._log_density, -np.inf)
        return float(out[0]) if single else out

    @property
    def low(self):
        return self.lower

    @property
    def high(self):
        return self.upper

    def mean(self):
        return 0.5 * (self.lower + self.upper)

    def std(self):
        return (self.upper - self.lower) / math.sqrt(12.0)


class DiagGaussian(Distribution):
    def __init__(self, mean, log_std):
        self._mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self._log_std = np.atleast_1d(np.asarray(log_std, dtype=np.float64))
        if self._mean.shape != self._log_std.shape or self._mean.ndim != 1:
            raise DistributionError("mean and log_std must be vectors of equal length")
        self.dim = self._mean.size

    def sample(self, rng, n):
        return self._mean + np.exp(self._log_std) * rng.standard_normal((n, self.dim))

    def log_prob(self, point):
        arr, single = _as_batch(point, self.dim)
        z = (arr - self._mean) * np.exp(-self._log_std)
        out = np.sum(_normal_logpdf(z) - self._log_std, axis=1)
        return float(out[0]) if single else out

    def mean(self):
        return self._mean.copy()

    def std(self):
        return np.exp(self._log_std)


class TruncatedNormal(Distribution):
    """Scalar normal restricted to [low, high], rejection-sampled."""

    def __init__(self, loc, scale, low, high):
        if not (low < high):
            raise DistributionError(f"need low < high, got {low} >= {high}")
        if scale <= 0:
            raise DistributionError(f"scale must be positive, got {scale}")
        self.loc = float(loc)
        self.scale = float(scale)
        self._low = float(low)
        self._high = float(high)
        self.dim = 1
        a = (self._low - self.loc) / self.scale
        b = (self._high - self.loc) / self.scale
        self._mass = float(special.ndtr(b) - special.ndtr(a))
        if self._mass <= 0:
            raise DistributionError("truncation interval carries no mass")
        self._log_mass = math.log(self._mass)
        phi_a = math.exp(_normal_logpdf(a))
        phi_b = math.exp(_normal_logpdf(b))
        delta = (phi_a - phi_b) / self._mass
        self._mean_val = self.loc + self.scale * delta
        var = 1.0 + (a * phi_a - b * phi_b) / self._mass - delta ** 2
        self._std_val = self.scale * math.sqrt(var)

    def sample(self, rng, n):
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = self.loc + self.scale * rng.standard_normal(max(n - filled, 16))
            keep = draw[(draw >= self._low) & (draw <= self._high)]
            take = min(keep.size, n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out[:, None]

    def log_prob(self, point):
        arr, single = _as_batch(point, self.dim)
        x = arr[:, 0]
        z = (x - self.loc) / self.scale
        inside = (x >= self._low) & (x <= self._high)
        out = np.where(
            inside,
            _normal_logpdf(z) - math.log(self.scale) - self._log_mass,
            -np.inf,
        )
        return float(out[0]) if single else out

    @property
    def low(self):
        return np.array([self._low])

    @property
    def high(self):
        return np.array([self._high])

    def mean(self):
        return np.array([self._mean_val])

    def std(self):
        return np.array([self._std_val])


class MixtureDiagGaussian(Distribution):
    """Mixture of diagonal Gaussians with log-softmax-normalized weights."""

    def __init__(self, log_weights, means, log_stds):
        log_weights = np.atleast_1d(np.asarray(log_weights, dtype=np.float64))
        self.means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        self.log_stds = np.atleast_2d(np.asarray(log_stds, dtype=np.float64))
        if self.means.shape != self.log_stds.shape:
            raise DistributionError("means and log_stds must have equal shape")
        if log_weights.size != self.means.shape[0]:
            raise DistributionError("one log-weight per component required")
        # normalize so exp(log_weights) sums to one
        self.log_weights = log_weights - special.logsumexp(log_weights)
        self.n_components = log_weights.size
        self.dim = self.means.shape[1]

    def sample(self, rng, n):
        comp = rng.choice(self.n_components, size=n, p=np.exp(self.log_weights))
        eps = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.exp(self.log_stds[comp]) * eps

    def log_prob(self, point):
        arr, single = _as_batch(point, self.dim)
        z = (arr[:, None, :] - self.means[None, :, :]) * np.exp(-self.log_stds[None, :, :])
        comp_logp = np.sum(_normal_logpdf(z) - self.log_stds[None, :, :], axis=2)
        out = special.logsumexp(comp_logp + self.log_weights[None, :], axis=1)
        return float(out[0]) if single else out

    def mean(self):
        w = np.exp(self.log_weights)
        return w @ self.means

    def std(self):
        w = np.exp(self.log_weights)
        second = w @ (np.exp(2.0 * self.log_stds) + self.means ** 2)
        return np.sqrt(second - self.mean() ** 2)


_PRIOR_KINDS = {
    "box_uniform": BoxUniform,
    "diag_gaussian": DiagGaussian,
    "truncated_normal": TruncatedNormal,
    "mixture_diag_gaussian": MixtureDiagGaussian,
}


def prior_from_config(config: dict) -> Distribution:
    """Build a distribution from its config record, e.g.
    ``{"kind": "box_uniform", "lower": [...], "upper": [...]}``."""
    spec = dict(config)
    kind = spec.pop("kind", None)
    if kind not in _PRIOR_KINDS:
        raise DistributionError(
            f"unknown prior kind {kind!r}; expected one of {sorted(_PRIOR_KINDS)}"
        )
    try:
        return _PRIOR_KINDS[kind](**spec)
    except TypeError as exc:
        raise DistributionError(f"bad fields for prior kind {kind!r}: {exc}") from exc


def prior_to_config(dist: Distribution) -> dict:
    if isinstance(dist, BoxUniform):
        return {"kind": "box_uniform", "lower": dist.lower.tolist(), "upper": dist.upper.tolist()}
    if isinstance(dist, DiagGaussian):
        return {"kind": "diag_gaussian", "mean": dist._mean.tolist(), "log_std": dist._log_std.tolist()}
    if isinstance(dist, TruncatedNormal):
        return {"kind": "truncated_normal", "loc": dist.loc, "scale": dist.scale,
                "low": dist._low, "high": dist._high}
    if isinstance(dist, MixtureDiagGaussian):
        return {"kind": "mixture_diag_gaussian", "log_weights": dist.log_weights.tolist(),
                "means": dist.means.tolist(), "log_stds": dist.log_stds.tolist()}
    raise DistributionError(f"no config encoding for {type(dist).__name__}")
