"""Mirror statistics with label-switch correction, FDP cutoff, DS selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .cluster import CovarianceSpec, first_pc_pseudotime, kmeans2, whiten
from .data import DataMatrix, RngHandle, random_split
from .errors import ConfigError, DataError, NumericError
from .stats import TestConfig, SignedStatVector, test_all_features

__all__ = [
    "DsConfig",
    "MirrorResult",
    "mirror_stats",
    "fdp_cutoff",
    "select_ds",
    "label_switch_bound",
]

COMBINERS = ("sum", "product", "min")

# the infimum over t is attained just below each |M_j| breakpoint
_EPS_BELOW = 1.0 - 1e-12


@dataclass(frozen=True)
class DsConfig:
    """Configuration of one data-splitting selection run."""

    clustering: str = "kmeans"  # kmeans | pc1
    test: str = "welch_t"
    q: float = 0.1
    combiner: str = "sum"
    restarts: int = 10
    whiten: bool = False
    covariance: CovarianceSpec | None = None
    known_sigma: Union[float, np.ndarray, None] = None
    glm_max_iter: int = 50
    glm_tol: float = 1e-8
    max_lloyd_iter: int = 100

    def __post_init__(self):
        if self.clustering not in ("kmeans", "pc1"):
            raise ConfigError(f"unknown clustering method {self.clustering!r}")
        if not 0.0 < self.q < 1.0:
            raise ConfigError("q must be in (0, 1)")
        if self.combiner not in COMBINERS:
            raise ConfigError(f"unknown combiner {self.combiner!r}")
        if self.whiten and self.covariance is None:
            raise ConfigError("whitening requires a covariance spec")
        if self.clustering == "pc1" and self.test != "pois_glm_wald":
            # pseudotime labels are continuous; only the GLM test consumes them
            raise ConfigError("pc1 clustering requires the pois_glm_wald test")
        if self.clustering == "kmeans" and self.test == "pois_glm_wald":
            raise ConfigError("pois_glm_wald requires pc1 (continuous) clustering")
        self.test_config()  # validate test/known_sigma pairing

    def test_config(self) -> TestConfig:
        return TestConfig(
            kind=self.test,
            known_sigma=self.known_sigma,
            glm_max_iter=self.glm_max_iter,
            glm_tol=self.glm_tol,
        )


@dataclass(frozen=True)
class MirrorResult:
    """Mirror statistics, cutoff and the DS selection for one split."""

    mirrors: np.ndarray
    global_sign: int
    tau_q: float  # may be math.inf when nothing qualifies
    selected: np.ndarray  # 0-based feature indices, ascending
    q: float
    combiner: str
    degenerate_sign: bool = False
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "method": "ds",
            "q": self.q,
            "combiner": self.combiner,
            "global_sign": self.global_sign,
            "degenerate_sign": self.degenerate_sign,
            "tau_q": "infinite" if math.isinf(self.tau_q) else self.tau_q,
            "n_selected": int(self.selected.size),
            "selected": (self.selected + 1).tolist(),
            "mirrors": self.mirrors.tolist(),
            "seed": self.seed,
        }


def _combine(u: np.ndarray, v: np.ndarray, combiner: str) -> np.ndarray:
    if combiner == "sum":
        return u + v
    if combiner == "product":
        return u * v
    if combiner == "min":
        return np.minimum(u, v)
    raise ConfigError(f"unknown combiner {combiner!r}")


def _stat_array(d) -> np.ndarray:
    return d.stats if isinstance(d, SignedStatVector) else np.asarray(d, dtype=np.float64)


def mirror_stats(d1, d2, combiner: str = "sum") -> tuple[np.ndarray, int, bool]:
    """Combine the two halves' statistics into mirror statistics.

    M_j = sign(d1.d2) * sign(d1_j * d2_j) * f(|d1_j|, |d2_j|), with sign(0)
    taken as +1. Returns (mirrors, global_sign, degenerate_sign) where
    degenerate_sign records an exactly-zero inner product (no flip applied).
    """
    if isinstance(d1, SignedStatVector) and isinstance(d2, SignedStatVector):
        if d1.test_kind != d2.test_kind:
            raise ConfigError("halves were tested with different statistics")
    a, b = _stat_array(d1), _stat_array(d2)
    if a.size != b.size:
        raise DataError(f"length mismatch: {a.size} vs {b.size}")
    inner = float(a @ b)
    global_sign = -1 if inner < 0 else 1
    pair_sign = np.where(a * b < 0, -1.0, 1.0)
    mirrors = global_sign * pair_sign * _combine(np.abs(a), np.abs(b), combiner)
    return mirrors, global_sign, inner == 0.0


def estimated_fdp(mirrors: np.ndarray, t: float) -> float:
    """Finite-sample estimate (#{M_j < -t} + 1) / (#{M_j > t} v 1).

    The +1 in the numerator is the usual finite-sample offset: it demands at
    least 1/q exceedances before anything is selected, which is what keeps
    the selection empty when every feature is null.
    """
    m = np.asarray(mirrors, dtype=np.float64)
    neg = int((m < -t).sum())
    pos = int((m > t).sum())
    return (neg + 1) / max(pos, 1)


def fdp_cutoff(mirrors: np.ndarray, q: float) -> float:
    """Minimal t > 0 with estimated_fdp(mirrors, t) <= q.

    Candidates are the |M_j| breakpoints evaluated just below each value;
    returns math.inf when no threshold qualifies (empty selection).
    """
    if not 0.0 < q < 1.0:
        raise ConfigError("q must be in (0, 1)")
    m = np.asarray(mirrors, dtype=np.float64)
    nonzero = m[m != 0.0]
    if nonzero.size == 0:
        return math.inf
    cands = np.unique(np.abs(nonzero)) * _EPS_BELOW
    neg = np.sort(-m[m < 0.0])  # magnitudes of negative mirrors, ascending
    pos = np.sort(m[m > 0.0])
    n_neg = neg.size - np.searchsorted(neg, cands, side="right")
    n_pos = pos.size - np.searchsorted(pos, cands, side="right")
    ratio = (n_neg + 1) / np.maximum(n_pos, 1)
    hits = np.flatnonzero(ratio <= q)
    if hits.size == 0:
        return math.inf
    return float(cands[hits[0]])


def label_switch_bound(delta_sq_sum: float, sigma: float, p: int) -> float:
    """Lower bound on the probability that the half-inner-product detects a
    label switch, clamped to [0, 1]."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    if delta_sq_sum < 0:
        raise ConfigError("delta_sq_sum must be nonnegative")
    if p < 1:
        raise ConfigError("p must be >= 1")
    exponent = min(
        delta_sq_sum / (4.0 * sigma**2),
        delta_sq_sum**2 / (8.0 * p * sigma**4),
    )
    return max(0.0, 1.0 - 2.0 * math.exp(-exponent))


def _cluster_half(X_half: np.ndarray, cfg: DsConfig, rng: RngHandle):
    if cfg.clustering == "kmeans":
        return kmeans2(X_half, rng, restarts=cfg.restarts, max_iter=cfg.max_lloyd_iter)
    return first_pc_pseudotime(X_half)


def select_ds(data: DataMatrix, cfg: DsConfig, rng: RngHandle) -> MirrorResult:
    """Run one full DS selection: split, cluster each half, test each half,
    combine into mirrors and cut at the estimated-FDP threshold.

    Whitening (when enabled) affects the data seen by the clustering step
    only; the tests always run on the original features. A user-supplied
    covariance whitens the full matrix up front; the empirical source is
    estimated within each half so the halves stay independent.
    """
    plan = random_split(data.n, rng.child(0))

    if cfg.whiten and cfg.covariance.source != "empirical_ridge":
        cluster_values = whiten(data, cfg.covariance).values
    else:
        cluster_values = data.values

    test_cfg = cfg.test_config()
    stats = []
    for k, half in enumerate((plan.half1, plan.half2)):
        Xc = cluster_values[half]
        if cfg.whiten and cfg.covariance.source == "empirical_ridge":
            Xc = whiten(Xc, cfg.covariance)
        try:
            labels = _cluster_half(Xc, cfg, rng.child(k + 1))
        except (DataError, NumericError) as exc:
            raise type(exc)(f"clustering failed: {exc}") from exc
        try:
            d = test_all_features(data.values[half], labels, test_cfg)
        except (DataError, NumericError) as exc:
            raise type(exc)(f"testing failed: {exc}") from exc
        stats.append(SignedStatVector(d.stats, d.test_kind, half_id=k + 1, flags=d.flags))

    mirrors, global_sign, degenerate = mirror_stats(stats[0], stats[1], cfg.combiner)
    tau = fdp_cutoff(mirrors, cfg.q)
    selected = np.flatnonzero(mirrors > tau) if math.isfinite(tau) else np.empty(0, dtype=np.intp)
    return MirrorResult(
        mirrors=mirrors,
        global_sign=global_sign,
        tau_q=tau,
        selected=selected,
        q=cfg.q,
        combiner=cfg.combiner,
        degenerate_sign=degenerate,
        seed=rng.seed,
    )
