"""Lognormal SINR model and the scheduled-SINR density under maximum-quantile scheduling.

A scheduled user's SINR has density ``pi(z) = p(z) * factor(CDF(z))`` where
``p`` is the fitted lognormal and ``factor`` mixes the rank probabilities of
the MQS window with the geometric number of competing users. All integrals
are done on the CDF axis ``u = CDF(z)``, where ``factor`` is a polynomial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr, ndtri, xlog1py, xlogy

LN2 = math.log(2.0)


@dataclass(frozen=True)
class LognormalParams:
    mu: float      # nepers
    sigma: float   # nepers

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)) or self.sigma < 0:
            raise ValueError(f"invalid lognormal parameters mu={self.mu}, sigma={self.sigma}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)

    @property
    def variance(self) -> float:
        return math.expm1(self.sigma**2) * math.exp(2 * self.mu + self.sigma**2)

    @property
    def median(self) -> float:
        return math.exp(self.mu)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            lz = np.log(np.maximum(z, 0.0))
        if self.sigma == 0:
            return (lz >= self.mu).astype(float)
        return ndtr((lz - self.mu) / self.sigma)

    def ppf(self, u):
        return np.exp(self.mu + self.sigma * ndtri(np.asarray(u, dtype=float)))

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        lz = np.log(z[pos])
        out[pos] = np.exp(-0.5 * ((lz - self.mu) / self.sigma) ** 2) / (
            z[pos] * self.sigma * math.sqrt(2 * math.pi))
        return out


def fit_lognormal(m1: float, v: float) -> LognormalParams:
    """Lognormal with mean ``m1`` and variance ``v`` (moment matching)."""
    if not m1 > 0:
        raise ValueError(f"lognormal fit needs a positive mean, got {m1}")
    if v < 0:
        raise ValueError(f"lognormal fit needs a non-negative variance, got {v}")
    s2 = math.log1p(v / m1**2)
    return LognormalParams(math.log(m1) - 0.5 * s2, math.sqrt(s2))


@dataclass(frozen=True, eq=False)
class InterferenceMoments:
    mean: float                # M1, W
    variance: float            # M2, W^2
    y: np.ndarray | None = None  # per-interferer mean received power
    h: np.ndarray | None = None  # per-interferer mean squared received power


def moments_from_terms(rho, y, h) -> InterferenceMoments:
    """``M1 = sum rho_j Y_j`` and ``M2 = sum 2 rho_j H_j - rho_j^2 Y_j^2``.

    The factor 2 is the second moment of unit-mean Rayleigh power fading.
    """
    rho, y, h = (np.asarray(a, dtype=float) for a in (rho, y, h))
    m1 = float(np.sum(rho * y))
    m2 = float(np.sum(2.0 * rho * h - rho**2 * y**2))
    return InterferenceMoments(m1, max(m2, 0.0), y, h)


def denominator_params(interference: InterferenceMoments, noise: float) -> LognormalParams:
    """Lognormal fit of interference plus noise; the noise only shifts the mean."""
    return fit_lognormal(interference.mean + noise, interference.variance)


def sinr_params(signal_mean: float, interference: InterferenceMoments, noise: float) -> LognormalParams:
    """SINR lognormal as the ratio of a faded signal and the interference-plus-noise fit.

    Rayleigh-faded received power is exponential, whose lognormal match has
    ``sigma^2 = ln 2`` and ``mu = ln(mean) - ln 2 / 2``.
    """
    if not signal_mean > 0:
        raise ValueError("signal mean must be positive")
    den = denominator_params(interference, noise)
    return LognormalParams(math.log(signal_mean) - 0.5 * LN2 - den.mu,
                           math.sqrt(LN2 + den.sigma**2))


# -- MQS scheduled-SINR density ------------------------------------------------


def _check_window(window: int, load: float) -> None:
    if window < 2:
        raise ValueError(f"MQS window must be >= 2, got {window}")
    if not 0.0 <= load <= 1.0:
        raise ValueError(f"station load must lie in [0, 1], got {load}")


def rank_weights(window: int, load: float) -> np.ndarray:
    """``T(W, n) = W^2 (1 - rho) / (W - rho (W - n))^2`` for ranks n = 1..W."""
    _check_window(window, load)
    n = np.arange(1, window + 1)
    return window**2 * (1.0 - load) / (window - load * (window - n)) ** 2


def scheduled_mass(window: int, load: float) -> float:
    """Integral of the scheduled density, ``(1/W) sum_n T(W, n)``; below 1 when rho > 0."""
    return float(rank_weights(window, load).mean())


def sched_density_factor(u, window: int, load: float):
    """``sum_n C(W-1, n-1) u^(W-n) (1-u)^(n-1) T(W, n)`` evaluated with log-binomials."""
    weights = rank_weights(window, load)
    u = np.asarray(u, dtype=float)
    n = np.arange(1, window + 1)
    log_binom = gammaln(window) - gammaln(n) - gammaln(window - n + 1)
    uu = u[..., None]
    log_q = log_binom + xlogy(window - n, uu) + xlog1py(n - 1, -uu)
    return np.exp(log_q) @ weights


def bernstein(u, degree: int) -> np.ndarray:
    """Bernstein basis ``C(d, j) u^j (1-u)^(d-j)``, shape ``u.shape + (d+1,)``."""
    u = np.asarray(u, dtype=float)[..., None]
    j = np.arange(degree + 1)
    log_binom = gammaln(degree + 1) - gammaln(j + 1) - gammaln(degree - j + 1)
    return np.exp(log_binom + xlogy(j, u) + xlog1py(degree - j, -u))


def cumulative_coefficients(window: int, load: float, normalized: bool = False) -> np.ndarray:
    """Bernstein coefficients (degree W) of ``H(u) = integral_0^u factor``.

    ``normalized=True`` rescales so that ``H(1) = 1``; the ``(1 - rho)`` factor
    cancels, which keeps the result finite at ``rho = 1``.
    """
    if normalized:
        _check_window(window, load)
        n = np.arange(1, window + 1)
        weights = 1.0 / (window - load * (window - n)) ** 2
    else:
        weights = rank_weights(window, load)
    c = np.zeros(window + 1)
    c[1:] = np.cumsum(weights[::-1]) / window
    return c / c[-1] if normalized else c


def sched_cumulative(u, window: int, load: float):
    """``H(u)``; ``H(1)`` equals :func:`scheduled_mass`."""
    return bernstein(u, window) @ cumulative_coefficients(window, load)


@dataclass(frozen=True)
class SchedSinrDist:
    """SINR of a scheduled user: lognormal ``base`` reweighted by MQS.

    With ``normalized=False`` the density is the rank-mixture formula as is and
    integrates to :func:`scheduled_mass`; ``normalized=True`` rescales it to a
    probability density.
    """

    base: LognormalParams
    window: int
    load: float
    normalized: bool = False

    def __post_init__(self):
        _check_window(self.window, self.load)

    @property
    def mass(self) -> float:
        return scheduled_mass(self.window, self.load)

    def _scale(self) -> float:
        return 1.0 / self.mass if self.normalized else 1.0

    def factor(self, u):
        return sched_density_factor(u, self.window, self.load) * self._scale()

    def pdf(self, z):
        return self.base.pdf(z) * self.factor(self.base.cdf(z))

    def cdf(self, z):
        return sched_cumulative(self.base.cdf(z), self.window, self.load) * self._scale()


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _legendre_unit(nodes: int):
    if nodes not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(nodes)
        _GL_CACHE[nodes] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[nodes]


def expect_over_sched(dist: SchedSinrDist, f, nodes: int = 256, breakpoints=None) -> float:
    """``integral f(z) pi(z) dz`` by Gauss-Legendre quadrature on the CDF axis.

    ``breakpoints`` (SINR values where ``f`` jumps, e.g. MCS thresholds) split
    the CDF axis so that each panel integrates a smooth function.
    """
    u, w = _legendre_unit(nodes)
    edges = [0.0, 1.0]
    if breakpoints is not None:
        cuts = np.asarray(dist.base.cdf(np.asarray(breakpoints, dtype=float)))
        edges = np.unique(np.concatenate(([0.0], cuts[(cuts > 0) & (cuts < 1)], [1.0])))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        uu = a + (b - a) * u
        z = dist.base.ppf(uu)
        total += (b - a) * float(np.sum(w * np.asarray(f(z), dtype=float) * dist.factor(uu)))
    return total


# -- exact expectation of 1/C for a step capacity ----------------------------------


def inverse_rate_basis(mu, sigma: float, capacity, window: int):
    """Per-location Bernstein vectors for ``E_pi[1/C]`` with a step capacity.

    Returns ``(b, top)`` such that for any load the expectation is
    ``top * c[-1] + b @ c`` with ``c = cumulative_coefficients(W, load, ...)``.
    Exact: ``1/C`` is piecewise constant, so the integral telescopes over the
    CDF values at the MCS thresholds.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    inv = 1.0 / capacity.interval_rates
    log_thr = np.log(capacity.thresholds)
    u = ndtr((log_thr[None, :] - mu[:, None]) / sigma)
    jumps = inv[:-1] - inv[1:]
    b = np.einsum("l,mlj->mj", jumps, bernstein(u, window))
    return b, float(inv[-1])


def inverse_rate_expectation(b, top: float, window: int, load: float, normalized: bool):
    c = cumulative_coefficients(window, load, normalized)
    return top * c[-1] + b @ c
