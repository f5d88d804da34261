"""Synthetic data generators with ground truth: Gaussian mean-shift, Poisson
log-linear with Gaussian-copula dependence, and linear-trajectory Poisson."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .data import DataMatrix, GroundTruth, RngHandle
from .errors import ConfigError, NumericError

__all__ = [
    "GaussianSimCfg",
    "PoissonSimCfg",
    "TrajectorySimCfg",
    "SimOutput",
    "gen_gaussian",
    "gen_poisson",
    "gaussian_copula_uniforms",
    "poisson_quantile",
    "write_sim_output",
]

_LAMBDA_CAP = 1e12


def _validate_counts(n: int, p: int, p1: int):
    if n < 4:
        raise ConfigError("n must be >= 4")
    if p < 1:
        raise ConfigError("p must be >= 1")
    if not 0 <= p1 <= p:
        raise ConfigError("p1 must satisfy 0 <= p1 <= p")


@dataclass(frozen=True)
class GaussianSimCfg:
    """Mean-shift model: X_ij = delta * 1(j <= p1) * L_i + eps_ij + AR(1)
    noise, with L_i ~ Bernoulli(class_prob) in {0, 1} and eps_ij independent
    N(0, sigma_eps^2) mean perturbations."""

    n: int
    p: int
    p1: int
    delta: float
    rho: float = 0.0
    sigma_eps: float = 0.0
    class_prob: float = 0.5

    def __post_init__(self):
        _validate_counts(self.n, self.p, self.p1)
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must be in [0, 1)")
        if self.sigma_eps < 0:
            raise ConfigError("sigma_eps must be nonnegative")
        if not 0.0 < self.class_prob < 1.0:
            raise ConfigError("class_prob must be in (0, 1)")


@dataclass(frozen=True)
class PoissonSimCfg:
    """Count model: X_ij ~ Pois(exp(beta0 + L_i * delta * 1(j <= p1) + eps_ij))
    with eps_ij iid N(0, sigma_eps^2), coupled across features by an AR(1)
    Gaussian copula."""

    n: int
    p: int
    p1: int
    delta: float
    rho: float = 0.0
    sigma_eps: float = 0.0
    beta0: float = math.log(3.0)

    def __post_init__(self):
        _validate_counts(self.n, self.p, self.p1)
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("rho must be in [0, 1)")
        if self.sigma_eps < 0:
            raise ConfigError("sigma_eps must be nonnegative")


@dataclass(frozen=True)
class TrajectorySimCfg(PoissonSimCfg):
    """Poisson model along a centered standard-normal linear pseudotime."""


@dataclass(frozen=True)
class SimOutput:
    data: DataMatrix
    truth: GroundTruth
    latent: np.ndarray


def _truth(p: int, p1: int, delta: float) -> GroundTruth:
    # with delta == 0 no feature is associated with the latent variable
    relevant = frozenset(range(p1)) if delta != 0.0 else frozenset()
    return GroundTruth(relevant=relevant, p=p)


def _ar1_normals(n: int, p: int, rho: float, gen: np.random.Generator) -> np.ndarray:
    """AR(1) rows via the sequential representation z_j = rho z_{j-1} + s w_j."""
    W = gen.standard_normal((n, p))
    if rho == 0.0:
        return W
    Z = np.empty_like(W)
    Z[:, 0] = W[:, 0]
    s = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        Z[:, j] = rho * Z[:, j - 1] + s * W[:, j]
    return Z


def gaussian_copula_uniforms(n: int, p: int, rho: float, rng: RngHandle) -> np.ndarray:
    """n x p uniforms with AR(1) Gaussian-copula dependence across columns."""
    if not 0.0 <= rho < 1.0:
        raise ConfigError("rho must be in [0, 1)")
    gen = rng.generator()
    return ndtr(_ar1_normals(n, p, rho, gen))


def poisson_quantile(u: float, lam: float) -> int:
    """Smallest k with Poisson CDF(k; lam) >= u, by incremental pmf summation."""
    if not 0.0 < u < 1.0:
        raise ConfigError("u must be in (0, 1)")
    if lam <= 0.0:
        raise ConfigError("lam must be positive")
    out = _kernels.poisson_quantile_matrix(np.array([u]), np.array([lam]))
    return int(out[0])


def gen_gaussian(cfg: GaussianSimCfg, rng: RngHandle) -> SimOutput:
    gen = rng.generator()
    L = (gen.random(cfg.n) < cfg.class_prob).astype(np.float64)
    X = _ar1_normals(cfg.n, cfg.p, cfg.rho, gen)
    if cfg.sigma_eps > 0.0:
        X += cfg.sigma_eps * gen.standard_normal((cfg.n, cfg.p))
    if cfg.p1 and cfg.delta != 0.0:
        X[:, : cfg.p1] += cfg.delta * L[:, None]
    return SimOutput(DataMatrix(X), _truth(cfg.p, cfg.p1, cfg.delta), L)


def gen_poisson(
    cfg: PoissonSimCfg, rng: RngHandle, latent_kind: str = "bernoulli"
) -> SimOutput:
    if latent_kind not in ("bernoulli", "trajectory"):
        raise ConfigError(f"unknown latent kind {latent_kind!r}")
    gen = rng.generator()
    if latent_kind == "bernoulli":
        L = (gen.random(cfg.n) < 0.5).astype(np.float64)
    else:
        z = gen.standard_normal(cfg.n)
        L = z - z.mean()

    log_lam = np.full((cfg.n, cfg.p), cfg.beta0)
    if cfg.p1 and cfg.delta != 0.0:
        log_lam[:, : cfg.p1] += cfg.delta * L[:, None]
    if cfg.sigma_eps > 0.0:
        log_lam += cfg.sigma_eps * gen.standard_normal((cfg.n, cfg.p))
    lam = np.exp(log_lam)
    if float(lam.max()) > _LAMBDA_CAP:
        raise NumericError("signal too large: Poisson intensity overflow")

    u = ndtr(_ar1_normals(cfg.n, cfg.p, cfg.rho, gen))
    counts = _kernels.poisson_quantile_matrix(u, lam).astype(np.float64)
    return SimOutput(DataMatrix(counts), _truth(cfg.p, cfg.p1, cfg.delta), L)


def gen_trajectory(cfg: TrajectorySimCfg, rng: RngHandle) -> SimOutput:
    return gen_poisson(cfg, rng, latent_kind="trajectory")


def write_sim_output(
    sim: SimOutput, cfg, model: str, seed: int, matrix_path, sidecar_path, fmt: str = "csv"
):
    """Write the matrix as CSV/TSV plus a JSON sidecar with truth and latent."""
    sep = "," if fmt == "csv" else "\t"
    values = sim.data.values
    integral = np.all(values == np.floor(values))
    cell_fmt = "%d" if integral else "%.17g"
    with open(matrix_path, "w", encoding="utf-8") as fh:
        for i in range(values.shape[0]):
            fh.write(sep.join(cell_fmt % v for v in values[i]))
            fh.write("\n")
    sidecar = {
        "model": model,
        "config": asdict(cfg),
        "seed": seed,
        "n": sim.data.n,
        "p": sim.data.p,
        "relevant": sorted(j + 1 for j in sim.truth.relevant),
        "latent": sim.latent.tolist(),
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
