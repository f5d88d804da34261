"""Replicate harness: FDP/power scoring, the double-dipping baseline, and
experiment grids aggregated into plot-ready CSV rows."""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .cluster import first_pc_pseudotime, kmeans2, whiten
from .data import DataMatrix, GroundTruth, RngHandle
from .errors import ConfigError, SplitFdrError
from .mds import select_mds
from .mirror import DsConfig, select_ds
from .simulate import (
    GaussianSimCfg,
    PoissonSimCfg,
    TrajectorySimCfg,
    gen_gaussian,
    gen_poisson,
)
from .stats import test_all_features

__all__ = [
    "MethodSpec",
    "ExperimentGrid",
    "MetricRow",
    "fdp",
    "power",
    "double_dip_baseline",
    "bh_select",
    "run_grid",
    "rows_to_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "model",
    "n",
    "p",
    "p1",
    "delta",
    "rho",
    "sigma_eps",
    "q",
    "method",
    "mean_fdp",
    "sd_fdp",
    "mean_power",
    "sd_power",
    "mean_selected",
    "runtime_s",
    "n_failed",
)


def fdp(selected, truth: GroundTruth) -> float:
    """|null ∩ selected| / (|selected| v 1)."""
    sel = {int(j) for j in np.asarray(list(selected), dtype=np.intp).ravel()}
    if sel and (min(sel) < 0 or max(sel) >= truth.p):
        raise ConfigError("selection index out of range")
    if not sel:
        return 0.0
    false = len(sel - truth.relevant)
    return false / len(sel)


def power(selected, truth: GroundTruth) -> float:
    """|relevant ∩ selected| / |relevant|."""
    if not truth.relevant:
        raise ConfigError("power is undefined with an empty relevant set")
    sel = {int(j) for j in np.asarray(list(selected), dtype=np.intp).ravel()}
    return len(sel & truth.relevant) / len(truth.relevant)


def bh_select(pvalues: np.ndarray, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up at level q; returns 0-based indices."""
    p = np.asarray(pvalues, dtype=np.float64)
    order = np.argsort(p, kind="stable")
    thresh = q * (np.arange(1, p.size + 1)) / p.size
    below = np.flatnonzero(p[order] <= thresh)
    if below.size == 0:
        return np.empty(0, dtype=np.intp)
    k = int(below[-1]) + 1
    return np.sort(order[:k]).astype(np.intp)


def double_dip_baseline(
    data: DataMatrix, cfg: DsConfig, rng: RngHandle, rule: str = "bh"
) -> np.ndarray:
    """Cluster the full data, test the same data, select by BH (or a raw
    per-test threshold) on two-sided p-values from the asymptotic null."""
    if rule not in ("bh", "raw"):
        raise ConfigError(f"unknown double-dip rule {rule!r}")
    cluster_values = whiten(data, cfg.covariance).values if cfg.whiten else data.values
    if cfg.clustering == "kmeans":
        labels = kmeans2(cluster_values, rng, restarts=cfg.restarts, max_iter=cfg.max_lloyd_iter)
    else:
        labels = first_pc_pseudotime(cluster_values)
    d = test_all_features(data.values, labels, cfg.test_config())
    pvals = 2.0 * ndtr(-np.abs(d.stats))
    if rule == "raw":
        return np.flatnonzero(pvals <= cfg.q).astype(np.intp)
    return bh_select(pvals, cfg.q)


@dataclass(frozen=True)
class MethodSpec:
    """One selection method inside a grid run."""

    name: str  # ds | mds | double_dip
    cfg: DsConfig
    m: int = 10
    estimator: str = "weighted"
    dd_rule: str = "bh"
    label: str | None = None

    def __post_init__(self):
        if self.name not in ("ds", "mds", "double_dip"):
            raise ConfigError(f"unknown method {self.name!r}")
        if self.label is None:
            object.__setattr__(self, "label", self.name)

    def select(self, data: DataMatrix, q: float, rng: RngHandle) -> np.ndarray:
        cfg = replace(self.cfg, q=q)
        if self.name == "ds":
            return select_ds(data, cfg, rng.child(0)).selected
        if self.name == "mds":
            return select_mds(data, cfg, m=self.m, estimator=self.estimator, rng=rng).selected
        return double_dip_baseline(data, cfg, rng, rule=self.dd_rule)


@dataclass(frozen=True)
class ExperimentGrid:
    """Sweep of generator cells x methods x replicates under one root seed."""

    model: str  # gaussian | poisson | trajectory
    n: int
    p: int
    p1: int
    deltas: tuple[float, ...]
    rhos: tuple[float, ...] = (0.0,)
    sigma_eps: tuple[float, ...] = (0.1,)
    qs: tuple[float, ...] = (0.1,)
    replicates: int = 100
    seed: int = 0
    class_prob: float = 0.5
    beta0: float = float(np.log(3.0))

    def __post_init__(self):
        if self.model not in ("gaussian", "poisson", "trajectory"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        for name in ("deltas", "rhos", "sigma_eps", "qs"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")

    def cells(self) -> list[tuple[float, float, float, float]]:
        return [
            (d, r, s, q)
            for d in self.deltas
            for r in self.rhos
            for s in self.sigma_eps
            for q in self.qs
        ]

    def generate(self, delta: float, rho: float, sig: float, rng: RngHandle):
        if self.model == "gaussian":
            cfg = GaussianSimCfg(
                n=self.n, p=self.p, p1=self.p1, delta=delta, rho=rho,
                sigma_eps=sig, class_prob=self.class_prob,
            )
            return gen_gaussian(cfg, rng)
        if self.model == "poisson":
            cfg = PoissonSimCfg(
                n=self.n, p=self.p, p1=self.p1, delta=delta, rho=rho,
                sigma_eps=sig, beta0=self.beta0,
            )
            return gen_poisson(cfg, rng, latent_kind="bernoulli")
        cfg = TrajectorySimCfg(
            n=self.n, p=self.p, p1=self.p1, delta=delta, rho=rho,
            sigma_eps=sig, beta0=self.beta0,
        )
        return gen_poisson(cfg, rng, latent_kind="trajectory")


@dataclass(frozen=True)
class MetricRow:
    model: str
    n: int
    p: int
    p1: int
    delta: float
    rho: float
    sigma_eps: float
    q: float
    method: str
    mean_fdp: float
    sd_fdp: float
    mean_power: float
    sd_power: float
    mean_selected: float
    runtime_s: float
    n_failed: int

    def csv_values(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if isinstance(v, float):
                out.append("nan" if np.isnan(v) else f"{v:.6g}")
            else:
                out.append(str(v))
        return out


def _method_stream_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "big")


def _run_cell_replicate(grid: ExperimentGrid, methods, cell_index: int, rep: int):
    delta, rho, sig, q = grid.cells()[cell_index]
    root = RngHandle(grid.seed)
    sim = grid.generate(delta, rho, sig, root.child(cell_index, rep, 0))
    out = []
    for spec in methods:
        rng = root.child(cell_index, rep, 1 + _method_stream_key(spec.label))
        t0 = time.perf_counter()
        try:
            selected = spec.select(sim.data, q, rng)
            elapsed = time.perf_counter() - t0
            f = fdp(selected, sim.truth)
            pw = power(selected, sim.truth) if sim.truth.relevant else float("nan")
            out.append((f, pw, float(selected.size), elapsed, False))
        except SplitFdrError:
            out.append((float("nan"), float("nan"), float("nan"), time.perf_counter() - t0, True))
    return cell_index, rep, out


def run_grid(
    grid: ExperimentGrid, methods: list[MethodSpec], threads: int = 1, progress=None
) -> list[MetricRow]:
    """Score every (cell, method) over replicates; deterministic under the
    grid seed regardless of worker count or method order."""
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError("method labels must be unique")

    cells = grid.cells()
    tasks = [(ci, r) for ci in range(len(cells)) for r in range(grid.replicates)]
    results: dict[tuple[int, int], list] = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(_run_cell_replicate, grid, methods, ci, r) for ci, r in tasks]
            for fut in futs:
                ci, r, out = fut.result()
                results[(ci, r)] = out
                if progress:
                    progress(len(results), len(tasks))
    else:
        for ci, r in tasks:
            ci, r, out = _run_cell_replicate(grid, methods, ci, r)
            results[(ci, r)] = out
            if progress:
                progress(len(results), len(tasks))

    rows = []
    for ci, (delta, rho, sig, q) in enumerate(cells):
        for mi, spec in enumerate(methods):
            per_rep = [results[(ci, r)][mi] for r in range(grid.replicates)]
            fdps = np.array([x[0] for x in per_rep if not x[4]])
            pows = np.array([x[1] for x in per_rep if not x[4]])
            sizes = np.array([x[2] for x in per_rep if not x[4]])
            runtime = float(sum(x[3] for x in per_rep))
            failed = sum(1 for x in per_rep if x[4])

            def _mean(a):
                return float(np.mean(a)) if a.size else float("nan")

            def _sd(a):
                return float(np.std(a, ddof=1)) if a.size > 1 else 0.0

            rows.append(
                MetricRow(
                    model=grid.model, n=grid.n, p=grid.p, p1=grid.p1,
                    delta=delta, rho=rho, sigma_eps=sig, q=q, method=spec.label,
                    mean_fdp=_mean(fdps), sd_fdp=_sd(fdps),
                    mean_power=_mean(pows), sd_power=_sd(pows),
                    mean_selected=_mean(sizes), runtime_s=runtime, n_failed=failed,
                )
            )
    return rows


def rows_to_csv(rows: list[MetricRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(row.csv_values()))
    return "\n".join(lines) + "\n"
