"""Multiple data splitting: replicate DS runs aggregated by inclusion rates."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import DataMatrix, RngHandle
from .errors import ConfigError, SplitFdrError
from .mirror import DsConfig, select_ds

__all__ = [
    "MdsResult",
    "inclusion_simple",
    "inclusion_weighted",
    "mds_cutoff",
    "select_mds",
]

ESTIMATORS = ("simple", "weighted")


@dataclass(frozen=True)
class MdsResult:
    per_split_selected: tuple[np.ndarray, ...]
    inclusion_simple: np.ndarray
    inclusion_weighted: np.ndarray
    estimator: str
    cutoff_rate: float
    selected: np.ndarray  # 0-based indices, ascending
    m: int
    q: float
    seed: int | None = None

    @property
    def rates(self) -> np.ndarray:
        return self.inclusion_weighted if self.estimator == "weighted" else self.inclusion_simple

    def to_dict(self) -> dict:
        return {
            "method": "mds",
            "m": self.m,
            "q": self.q,
            "estimator": self.estimator,
            "cutoff_rate": self.cutoff_rate,
            "n_selected": int(self.selected.size),
            "selected": (self.selected + 1).tolist(),
            "inclusion_rates": self.rates.tolist(),
            "per_split_selected": [(s + 1).tolist() for s in self.per_split_selected],
            "seed": self.seed,
        }


def _as_index_sets(selections, p: int) -> list[np.ndarray]:
    out = []
    for s in selections:
        idx = np.asarray(sorted(int(j) for j in np.asarray(list(s), dtype=np.intp).ravel()), dtype=np.intp)
        if idx.size and (idx[0] < 0 or idx[-1] >= p):
            raise ConfigError("selection index out of range")
        out.append(idx)
    return out


def inclusion_simple(selections, p: int) -> np.ndarray:
    """Mean over splits of 1(j selected) / (|selection| v 1)."""
    sets = _as_index_sets(selections, p)
    if not sets:
        raise ConfigError("need at least one split")
    rates = np.zeros(p)
    for idx in sets:
        if idx.size:
            rates[idx] += 1.0 / idx.size
    return rates / len(sets)


def inclusion_weighted(selections, p: int) -> np.ndarray:
    """Pooled inclusion rate: total picks of j over total picks of anything."""
    sets = _as_index_sets(selections, p)
    if not sets:
        raise ConfigError("need at least one split")
    counts = np.zeros(p)
    for idx in sets:
        counts[idx] += 1.0
    total = sum(idx.size for idx in sets)
    return counts / max(total, 1)


def mds_cutoff(rates: np.ndarray, q: float) -> tuple[float, np.ndarray]:
    """Inclusion-rate cutoff: drop the smallest rates whose sum stays <= q.

    Rates are sorted ascending (ties broken by feature index) and the largest
    prefix with sum <= q is discarded; the remaining positions are selected.
    When even the smallest rate exceeds q the cutoff is 0 and every feature
    with positive rate is selected.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError("q must be in (0, 1)")
    rates = np.asarray(rates, dtype=np.float64)
    if np.any(rates < 0):
        raise ConfigError("rates must be nonnegative")
    order = np.argsort(rates, kind="stable")
    prefix = np.cumsum(rates[order])
    below = np.flatnonzero(prefix <= q)
    ell = int(below[-1]) + 1 if below.size else 0
    cutoff = float(rates[order[ell - 1]]) if ell >= 1 else 0.0
    selected = np.sort(order[ell:])
    return cutoff, selected.astype(np.intp)


def _ds_replicate(data: DataMatrix, cfg: DsConfig, rng: RngHandle) -> np.ndarray:
    try:
        return select_ds(data, cfg, rng).selected
    except SplitFdrError:
        # a fully degenerate replicate contributes an empty selection
        return np.empty(0, dtype=np.intp)


def select_mds(
    data: DataMatrix,
    cfg: DsConfig,
    m: int = 10,
    estimator: str = "weighted",
    rng: RngHandle | None = None,
    threads: int = 1,
) -> MdsResult:
    """Aggregate m independent DS replicates through inclusion rates.

    Replicate k draws from the child stream rng.child(k) and results are
    reduced in replicate order, so the output does not depend on execution
    order or worker count.
    """
    if m < 1:
        raise ConfigError("m must be >= 1")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}")
    if rng is None:
        rng = RngHandle(0)

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_ds_replicate, data, cfg, rng.child(k)) for k in range(m)]
            selections = [f.result() for f in futures]
    else:
        selections = [_ds_replicate(data, cfg, rng.child(k)) for k in range(m)]

    simple = inclusion_simple(selections, data.p)
    weighted = inclusion_weighted(selections, data.p)
    rates = weighted if estimator == "weighted" else simple
    cutoff, selected = mds_cutoff(rates, cfg.q)
    return MdsResult(
        per_split_selected=tuple(selections),
        inclusion_simple=simple,
        inclusion_weighted=weighted,
        estimator=estimator,
        cutoff_rate=cutoff,
        selected=selected,
        m=m,
        q=cfg.q,
        seed=rng.seed,
    )
