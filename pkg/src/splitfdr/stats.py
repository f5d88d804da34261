"""Per-feature signed association statistics between features and latent labels.

Each test is signed: positive means cluster 1 dominates (discrete labels) or
the feature increases along pseudotime (continuous labels). Degenerate
features (no variation to test) yield statistic 0 and are flagged instead of
aborting a whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .cluster import LatentLabels
from .data import DataMatrix
from .errors import ConfigError, DataError, NumericError

__all__ = [
    "TestConfig",
    "SignedStatVector",
    "z_stat_known_var",
    "welch_t",
    "wilcoxon_signed",
    "pois_glm_wald",
    "test_all_features",
    "FLAG_OK",
    "FLAG_DEGENERATE",
    "FLAG_DIVERGED",
]

TEST_KINDS = ("z_known_var", "welch_t", "wilcoxon_signed", "pois_glm_wald")

FLAG_OK = 0
FLAG_DEGENERATE = 1
FLAG_DIVERGED = 2

# exp(eta) beyond this is treated as IRLS divergence
_GLM_ETA_CAP = 30.0


@dataclass(frozen=True)
class TestConfig:
    kind: str = "welch_t"
    known_sigma: np.ndarray | float | None = None
    glm_max_iter: int = 50
    glm_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in TEST_KINDS:
            raise ConfigError(f"unknown test kind {self.kind!r}")
        if self.kind == "z_known_var" and self.known_sigma is None:
            raise ConfigError("z_known_var requires known_sigma")
        if self.kind != "z_known_var" and self.known_sigma is not None:
            raise ConfigError("known_sigma is only valid for z_known_var")
        if self.glm_tol <= 0:
            raise ConfigError("glm_tol must be positive")


@dataclass(frozen=True)
class SignedStatVector:
    """Length-p vector of signed statistics for one half."""

    stats: np.ndarray
    test_kind: str
    half_id: int
    flags: np.ndarray = field(default=None)

    def __post_init__(self):
        stats = np.asarray(self.stats, dtype=np.float64)
        if not np.all(np.isfinite(stats)):
            raise NumericError("non-finite test statistic")
        flags = self.flags
        if flags is None:
            flags = np.zeros(stats.size, dtype=np.uint8)
        flags = np.asarray(flags, dtype=np.uint8)
        stats.setflags(write=False)
        flags.setflags(write=False)
        object.__setattr__(self, "stats", stats)
        object.__setattr__(self, "flags", flags)

    @property
    def p(self) -> int:
        return self.stats.size


def _group_masks(labels: LatentLabels) -> tuple[np.ndarray, np.ndarray]:
    if labels.kind != "discrete2":
        raise DataError("this test needs discrete2 labels")
    g1 = labels.values == 1
    return g1, ~g1


def z_stat_known_var(feature: np.ndarray, labels: LatentLabels, sigma_j: float) -> float:
    """Two-sample z statistic with known per-feature standard deviation."""
    if sigma_j <= 0:
        raise ConfigError("sigma_j must be positive")
    g1, g2 = _group_masks(labels)
    feature = np.asarray(feature, dtype=np.float64)
    n1, n2 = int(g1.sum()), int(g2.sum())
    diff = feature[g1].mean() - feature[g2].mean()
    return float(diff / (sigma_j * np.sqrt(1.0 / n1 + 1.0 / n2)))


def welch_t(feature: np.ndarray, labels: LatentLabels) -> float:
    """Welch two-sample t statistic (unequal variances)."""
    g1, g2 = _group_masks(labels)
    feature = np.asarray(feature, dtype=np.float64)
    n1, n2 = int(g1.sum()), int(g2.sum())
    if n1 < 2 or n2 < 2:
        raise DataError("welch_t needs at least 2 samples per cluster")
    x1, x2 = feature[g1], feature[g2]
    m1, m2 = x1.mean(), x2.mean()
    v1 = ((x1 - m1) ** 2).sum() / (n1 - 1)
    v2 = ((x2 - m2) ** 2).sum() / (n2 - 1)
    se2 = v1 / n1 + v2 / n2
    if se2 == 0.0:
        if m1 == m2:
            return 0.0
        raise NumericError("zero pooled variance with unequal means")
    return float((m1 - m2) / np.sqrt(se2))


def wilcoxon_signed(feature: np.ndarray, labels: LatentLabels) -> float:
    """Rank-sum statistic standardized to ~N(0,1), midranks and continuity
    correction, signed so positive means cluster 1 is stochastically larger."""
    g1, g2 = _group_masks(labels)
    feature = np.asarray(feature, dtype=np.float64)
    n1, n2 = int(g1.sum()), int(g2.sum())
    ranks = rankdata(feature, method="average")
    w1 = float(ranks[g1].sum())
    total = n1 + n2
    mu = n1 * (total + 1) / 2.0
    _, counts = np.unique(feature, return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum())
    var = n1 * n2 / 12.0 * ((total + 1) - tie_term / (total * (total - 1)))
    if var <= 0.0:
        return 0.0
    u = w1 - mu
    return float(np.sign(u) * max(abs(u) - 0.5, 0.0) / np.sqrt(var))


def _glm_irls_vec(
    Y: np.ndarray, L: np.ndarray, cfg: TestConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Fisher-scoring fit of log lam_i = b0 + b1 L_i per column.

    Returns (wald statistics, flags). Constant columns are flagged degenerate
    with statistic 0; columns whose iteration blows up are flagged diverged
    with statistic 0.
    """
    n, p = Y.shape
    stats = np.zeros(p)
    flags = np.zeros(p, dtype=np.uint8)

    const = np.all(Y == Y[0], axis=0)
    flags[const] = FLAG_DEGENERATE
    work = np.flatnonzero(~const)
    if work.size == 0:
        return stats, flags

    Yw = Y[:, work]
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(Yw > 0, Yw * np.log(np.where(Yw > 0, Yw, 1.0)), 0.0)
    ylogy_sum = ylogy.sum(axis=0)
    L2 = L * L

    b0 = np.log(Yw.mean(axis=0) + 0.5)
    b1 = np.zeros(work.size)
    dev = np.full(work.size, np.inf)
    open_cols = np.arange(work.size)
    diverged = np.zeros(work.size, dtype=bool)

    for _ in range(cfg.glm_max_iter):
        if open_cols.size == 0:
            break
        eta = b0[open_cols] + np.outer(L, b1[open_cols])
        bad = np.abs(eta).max(axis=0) > _GLM_ETA_CAP
        if bad.any():
            diverged[open_cols[bad]] = True
            keep = ~bad
            open_cols = open_cols[keep]
            eta = eta[:, keep]
            if open_cols.size == 0:
                break
        lam = np.exp(eta)
        Yo = Yw[:, open_cols]
        resid = Yo - lam
        score0 = resid.sum(axis=0)
        score1 = L @ resid
        sw = lam.sum(axis=0)
        swl = L @ lam
        swll = L2 @ lam
        det = sw * swll - swl * swl
        db0 = (swll * score0 - swl * score1) / det
        db1 = (sw * score1 - swl * score0) / det
        ok = np.isfinite(db0) & np.isfinite(db1)
        if not ok.all():
            diverged[open_cols[~ok]] = True
            open_cols = open_cols[ok]
            if open_cols.size == 0:
                break
            eta, lam, Yo = eta[:, ok], lam[:, ok], Yo[:, ok]
            db0, db1 = db0[ok], db1[ok]
        b0[open_cols] += db0
        b1[open_cols] += db1
        eta_new = b0[open_cols] + np.outer(L, b1[open_cols])
        with np.errstate(over="ignore", invalid="ignore"):
            lam_new = np.exp(eta_new)
            new_dev = 2.0 * (
                ylogy_sum[open_cols]
                - (Yo * eta_new).sum(axis=0)
                - (Yo - lam_new).sum(axis=0)
            )
        done = np.abs(new_dev - dev[open_cols]) < cfg.glm_tol
        dev[open_cols] = new_dev
        open_cols = open_cols[~done]

    diverged[open_cols] = diverged[open_cols] | ~np.isfinite(dev[open_cols])

    # wald statistic from the information matrix at the fitted coefficients
    good = ~diverged
    if good.any():
        eta = b0[good] + np.outer(L, b1[good])
        lam = np.exp(np.minimum(eta, _GLM_ETA_CAP))
        sw = lam.sum(axis=0)
        swl = L @ lam
        swll = L2 @ lam
        det = sw * swll - swl * swl
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.sqrt(sw / det)
        wald = np.where(np.isfinite(se) & (se > 0), b1[good] / se, 0.0)
        stats[work[good]] = wald
    flags[work[diverged]] = FLAG_DIVERGED
    return stats, flags


def pois_glm_wald(feature: np.ndarray, labels: LatentLabels, cfg: TestConfig | None = None) -> float:
    """Wald statistic for the slope of a log-linear Poisson fit on pseudotime."""
    if cfg is None:
        cfg = TestConfig(kind="pois_glm_wald")
    if labels.kind != "continuous":
        raise DataError("pois_glm_wald needs continuous labels")
    L = labels.values
    if float(L.var()) == 0.0:
        raise DataError("pseudotime has zero variance")
    y = np.asarray(feature, dtype=np.float64)
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError("pois_glm_wald needs nonnegative integer counts")
    stats, flags = _glm_irls_vec(y[:, None], L, cfg)
    if flags[0] == FLAG_DIVERGED:
        raise NumericError("IRLS divergence in Poisson GLM")
    return float(stats[0])


def _vec_welch(X: np.ndarray, g1: np.ndarray, g2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n1, n2 = int(g1.sum()), int(g2.sum())
    if n1 < 2 or n2 < 2:
        raise DataError("welch_t needs at least 2 samples per cluster")
    X1, X2 = X[g1], X[g2]
    m1, m2 = X1.mean(axis=0), X2.mean(axis=0)
    v1 = ((X1 - m1) ** 2).sum(axis=0) / (n1 - 1)
    v2 = ((X2 - m2) ** 2).sum(axis=0) / (n2 - 1)
    se2 = v1 / n1 + v2 / n2
    diff = m1 - m2
    flags = np.zeros(X.shape[1], dtype=np.uint8)
    degen = se2 == 0.0
    if np.any(degen & (diff != 0.0)):
        j = int(np.flatnonzero(degen & (diff != 0.0))[0])
        raise NumericError(f"zero pooled variance with unequal means at feature {j + 1}")
    flags[degen] = FLAG_DEGENERATE
    stats = np.zeros(X.shape[1])
    ok = ~degen
    stats[ok] = diff[ok] / np.sqrt(se2[ok])
    return stats, flags


def _vec_wilcoxon(X: np.ndarray, g1: np.ndarray, g2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n1, n2 = int(g1.sum()), int(g2.sum())
    total = n1 + n2
    ranks = rankdata(X, method="average", axis=0)
    w1 = ranks[g1].sum(axis=0)
    mu = n1 * (total + 1) / 2.0
    tie = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        _, counts = np.unique(X[:, j], return_counts=True)
        tie[j] = float((counts.astype(np.float64) ** 3 - counts).sum())
    var = n1 * n2 / 12.0 * ((total + 1) - tie / (total * (total - 1)))
    u = w1 - mu
    flags = np.zeros(X.shape[1], dtype=np.uint8)
    degen = var <= 0.0
    flags[degen] = FLAG_DEGENERATE
    stats = np.zeros(X.shape[1])
    ok = ~degen
    stats[ok] = np.sign(u[ok]) * np.maximum(np.abs(u[ok]) - 0.5, 0.0) / np.sqrt(var[ok])
    return stats, flags


def test_all_features(
    data: DataMatrix | np.ndarray, labels: LatentLabels, cfg: TestConfig
) -> SignedStatVector:
    """Apply the configured test columnwise; returns a length-p stat vector."""
    X = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    if X.shape[0] != labels.n:
        raise DataError("labels length does not match sample count")

    if cfg.kind == "pois_glm_wald":
        if labels.kind != "continuous":
            raise DataError("pois_glm_wald needs continuous labels")
        if float(labels.values.var()) == 0.0:
            raise DataError("pseudotime has zero variance")
        if np.any(X < 0) or np.any(X != np.floor(X)):
            raise DataError("pois_glm_wald needs nonnegative integer counts")
        stats, flags = _glm_irls_vec(X, labels.values, cfg)
        return SignedStatVector(stats=stats, test_kind=cfg.kind, half_id=0, flags=flags)

    g1, g2 = _group_masks(labels)
    if cfg.kind == "z_known_var":
        sigma = np.broadcast_to(np.asarray(cfg.known_sigma, dtype=np.float64), (X.shape[1],))
        if np.any(sigma <= 0):
            raise ConfigError("known_sigma must be positive")
        n1, n2 = int(g1.sum()), int(g2.sum())
        diff = X[g1].mean(axis=0) - X[g2].mean(axis=0)
        stats = diff / (sigma * np.sqrt(1.0 / n1 + 1.0 / n2))
        flags = np.zeros(X.shape[1], dtype=np.uint8)
    elif cfg.kind == "welch_t":
        stats, flags = _vec_welch(X, g1, g2)
    elif cfg.kind == "wilcoxon_signed":
        stats, flags = _vec_wilcoxon(X, g1, g2)
    else:  # pragma: no cover
        raise ConfigError(f"unknown test kind {cfg.kind!r}")
    return SignedStatVector(stats=stats, test_kind=cfg.kind, half_id=0, flags=flags)
