"""Closed-form theory: mis-clustering error, exact and asymptotic testing
power under label errors, and the split-imbalance probability bound.

These formulas double as oracles for the simulation-facing modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, ndtr, ndtri

from .errors import ConfigError, NumericError

__all__ = [
    "TwoClusterSpec",
    "misclustering_error",
    "exact_power",
    "asymptotic_power",
    "power_loss_bounds",
    "split_imbalance_bound",
]


@dataclass(frozen=True)
class TwoClusterSpec:
    """Two Gaussian classes N(xi, Sigma) (m samples) and N(eta, Sigma) (n)."""

    xi: np.ndarray
    eta: np.ndarray
    sigma: np.ndarray
    m: int
    n: int
    alpha_level: float = 0.05

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=np.float64))
        eta = np.atleast_1d(np.asarray(self.eta, dtype=np.float64))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        if xi.shape != eta.shape or sigma.shape != (xi.size, xi.size):
            raise ConfigError("xi, eta and sigma have incompatible shapes")
        if self.m < 1 or self.n < 1:
            raise ConfigError("class sizes must be >= 1")
        if not 0.0 < self.alpha_level < 1.0:
            raise ConfigError("alpha_level must be in (0, 1)")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "sigma", sigma)

    @property
    def delta(self) -> np.ndarray:
        return self.eta - self.xi


def misclustering_error(spec: TwoClusterSpec) -> float:
    """Phi(-Delta/2) with Delta^2 = delta' Sigma^{-1} delta."""
    delta = spec.delta
    try:
        chol = np.linalg.cholesky(spec.sigma)
    except np.linalg.LinAlgError:
        raise NumericError("covariance is not positive definite") from None
    y = solve_triangular(chol, delta, lower=True)
    big_delta = math.sqrt(float(y @ y))
    return float(ndtr(-big_delta / 2.0))


def _power_terms(spec: TwoClusterSpec, j: int) -> tuple[float, float, float]:
    if not 0 <= j < spec.xi.size:
        raise ConfigError("feature index out of range")
    m, n = spec.m, spec.n
    r = (m + n) / (m * n)
    sigma_j = math.sqrt(float(spec.sigma[j, j]))
    b = float(spec.delta[j]) / (sigma_j * math.sqrt(r))
    c = float(ndtri(1.0 - spec.alpha_level / 2.0))
    return b, r, c


def exact_power(spec: TwoClusterSpec, j: int = 0, p_e: float | None = None) -> float:
    """Power of the two-sided z test for feature j when k ~ Binom(m, p_e)
    samples of each class are swapped by mis-clustering."""
    b, r, c = _power_terms(spec, j)
    if p_e is None:
        p_e = misclustering_error(spec)
    if not 0.0 <= p_e <= 0.5:
        raise ConfigError("p_e must be in [0, 0.5]")
    m = spec.m
    k = np.arange(m + 1, dtype=np.float64)
    beta_k = ndtr(b * (1.0 - k * r) - c) + ndtr(-b * (1.0 - k * r) - c)
    if p_e == 0.0:
        return float(beta_k[0])
    # binomial weights in log space so m up to 1e5 cannot underflow
    log_w = (
        gammaln(m + 1.0)
        - gammaln(k + 1.0)
        - gammaln(m - k + 1.0)
        + k * math.log(p_e)
        + (m - k) * math.log1p(-p_e)
    )
    return float(np.exp(log_w) @ beta_k)


def asymptotic_power(spec: TwoClusterSpec, j: int = 0, p_e: float | None = None) -> float:
    """Plug-in approximation with rho = (1 + m/n) p_e."""
    b, _, c = _power_terms(spec, j)
    if p_e is None:
        p_e = misclustering_error(spec)
    rho = (1.0 + spec.m / spec.n) * p_e
    return float(ndtr(b * (1.0 - rho) - c) + ndtr(-b * (1.0 - rho) - c))


def power_loss_bounds(spec: TwoClusterSpec, j: int = 0, p_e: float | None = None) -> tuple[float, float]:
    """Sandwich for beta(0) - beta: [phi(b-c) rho b, phi((1-rho)b - c) rho b]."""
    b, _, c = _power_terms(spec, j)
    if p_e is None:
        p_e = misclustering_error(spec)
    rho = (1.0 + spec.m / spec.n) * p_e

    def phi(x: float) -> float:
        return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

    return phi(b - c) * rho * b, phi((1.0 - rho) * b - c) * rho * b


def split_imbalance_bound(n: int, alpha: float, w: float, clamp: bool = True) -> float:
    """Upper bound on Pr(minority proportion of half 1 <= w) for an even
    random split of n samples with class-1 proportion alpha."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0, 1)")
    if not 0.0 <= w <= 0.5:
        raise ConfigError("w must be in [0, 1/2]")
    value = math.exp(-((alpha - w) ** 2) * n) + math.exp(-((1.0 - alpha - w) ** 2) * n)
    if clamp:
        return min(value, 1.0)
    return value
