"""Command-line interface: simulate | select | theory | bench.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Flags override values from an optional YAML config file; unknown config keys
are rejected before any computation runs.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from . import _kernels, __version__
from .bench import ExperimentGrid, MethodSpec, double_dip_baseline, rows_to_csv, run_grid
from .cluster import CovarianceSpec
from .data import DataMatrix, RngHandle, load_matrix, read_table
from .errors import ConfigError, DataError, NumericError, SplitFdrError
from .mds import select_mds
from .mirror import DsConfig, select_ds
from .simulate import (
    GaussianSimCfg,
    PoissonSimCfg,
    TrajectorySimCfg,
    gen_gaussian,
    gen_poisson,
    write_sim_output,
)
from .theory import (
    TwoClusterSpec,
    asymptotic_power,
    exact_power,
    misclustering_error,
    power_loss_bounds,
    split_imbalance_bound,
)

_SELECT_KEYS = {
    "input", "format", "has_header", "row_labels", "transpose", "method",
    "clustering", "test", "q", "combiner", "m", "estimator", "restarts",
    "whiten", "covariance", "ridge", "known_sigma", "seed", "out", "threads",
    "dd_rule",
}
_SIMULATE_KEYS = {
    "model", "n", "p", "p1", "delta", "rho", "sigma_eps", "beta0",
    "class_prob", "seed", "out", "sidecar", "format",
}
_THEORY_KEYS = {
    "m", "n", "alpha", "delta", "sigma_j", "p", "feature", "xi", "eta",
    "cov", "pe", "imbalance_n", "imbalance_alpha", "imbalance_w",
}
_BENCH_KEYS = {"grid", "methods", "out", "manifest", "threads", "seed"}
_GRID_KEYS = {
    "model", "n", "p", "p1", "deltas", "rhos", "sigma_eps", "qs",
    "replicates", "seed", "class_prob", "beta0",
}
_METHOD_KEYS = {
    "name", "label", "m", "estimator", "dd_rule", "clustering", "test", "q",
    "combiner", "restarts", "whiten", "covariance", "ridge", "known_sigma",
}


def _check_keys(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(sorted(unknown))}")


def _load_config(path: str | None, allowed: set) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    _check_keys(raw, allowed, "config")
    return raw


def _merged(args: argparse.Namespace, allowed: set) -> dict:
    cfg = _load_config(getattr(args, "config", None), allowed)
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _open_out(path: str | None):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _covariance_from(value: str | None, ridge: float, p: int) -> CovarianceSpec | None:
    if value in (None, "", "identity"):
        return CovarianceSpec.identity() if value == "identity" else None
    if value == "empirical":
        return CovarianceSpec.empirical(ridge)
    mat = read_table(value, fmt="csv")[0]
    if mat.shape != (p, p):
        raise DataError(f"covariance must be {p}x{p}, got {mat.shape[0]}x{mat.shape[1]}")
    return CovarianceSpec.user(mat)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _merged(args, _SIMULATE_KEYS)
    model = cfg.get("model")
    if model not in ("gaussian", "poisson", "trajectory"):
        raise ConfigError("model must be gaussian, poisson or trajectory")
    for key in ("n", "p", "p1"):
        if key not in cfg:
            raise ConfigError(f"simulate requires --{key}")
    seed = int(cfg.get("seed", 0))
    rng = RngHandle(seed)
    common = dict(
        n=int(cfg["n"]), p=int(cfg["p"]), p1=int(cfg["p1"]),
        delta=float(cfg.get("delta", 0.0)), rho=float(cfg.get("rho", 0.0)),
        sigma_eps=float(cfg.get("sigma_eps", 0.0)),
    )
    if model == "gaussian":
        sim_cfg = GaussianSimCfg(class_prob=float(cfg.get("class_prob", 0.5)), **common)
        sim = gen_gaussian(sim_cfg, rng)
    elif model == "poisson":
        sim_cfg = PoissonSimCfg(beta0=float(cfg.get("beta0", math.log(3.0))), **common)
        sim = gen_poisson(sim_cfg, rng, latent_kind="bernoulli")
    else:
        sim_cfg = TrajectorySimCfg(beta0=float(cfg.get("beta0", math.log(3.0))), **common)
        sim = gen_poisson(sim_cfg, rng, latent_kind="trajectory")

    out = cfg.get("out")
    if not out:
        raise ConfigError("simulate requires --out")
    sidecar = cfg.get("sidecar") or (str(out) + ".json")
    write_sim_output(sim, sim_cfg, model, seed, out, sidecar, fmt=cfg.get("format", "csv"))
    print(f"wrote {out} ({sim.data.n}x{sim.data.p}) and {sidecar}")
    return 0


def _read_input(cfg: dict) -> DataMatrix:
    path = cfg.get("input")
    if not path:
        raise ConfigError("select requires --input")
    fmt = cfg.get("format", "csv")
    kwargs = dict(
        fmt=fmt,
        has_header=bool(cfg.get("has_header", False)),
        has_row_labels=bool(cfg.get("row_labels", False)),
        transpose=bool(cfg.get("transpose", False)),
    )
    if path == "-":
        return load_matrix(io.StringIO(sys.stdin.read()), **kwargs)
    return load_matrix(path, **kwargs)


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _merged(args, _SELECT_KEYS)
    data = _read_input(cfg)
    method = cfg.get("method", "mds")
    if method not in ("ds", "mds", "double_dip"):
        raise ConfigError("method must be ds, mds or double_dip")

    whiten_flag = bool(cfg.get("whiten", False))
    covariance = _covariance_from(cfg.get("covariance"), float(cfg.get("ridge", 0.0)), data.p)
    if whiten_flag and covariance is None:
        covariance = CovarianceSpec.empirical(float(cfg.get("ridge", 0.0)))
    known_sigma = cfg.get("known_sigma")
    ds_cfg = DsConfig(
        clustering=cfg.get("clustering", "kmeans"),
        test=cfg.get("test", "welch_t"),
        q=float(cfg.get("q", 0.1)),
        combiner=cfg.get("combiner", "sum"),
        restarts=int(cfg.get("restarts", 10)),
        whiten=whiten_flag,
        covariance=covariance,
        known_sigma=float(known_sigma) if known_sigma is not None else None,
    )
    seed = int(cfg.get("seed", 0))
    threads = int(cfg.get("threads") or (os.cpu_count() or 1))
    root = RngHandle(seed)

    if method == "ds":
        # replicate 0 of the MDS stream family, so mds --m 1 agrees
        result = select_ds(data, ds_cfg, root.child(0))
        report = result.to_dict()
    elif method == "mds":
        result = select_mds(
            data, ds_cfg, m=int(cfg.get("m", 10)),
            estimator=cfg.get("estimator", "weighted"), rng=root, threads=threads,
        )
        report = result.to_dict()
    else:
        selected = double_dip_baseline(data, ds_cfg, root.child(0), rule=cfg.get("dd_rule", "bh"))
        report = {
            "method": "double_dip",
            "q": ds_cfg.q,
            "rule": cfg.get("dd_rule", "bh"),
            "n_selected": int(selected.size),
            "selected": (selected + 1).tolist(),
        }

    report["seed"] = seed
    report["config"] = {
        "method": method,
        "clustering": ds_cfg.clustering,
        "test": ds_cfg.test,
        "q": ds_cfg.q,
        "combiner": ds_cfg.combiner,
        "restarts": ds_cfg.restarts,
        "whiten": ds_cfg.whiten,
        "covariance_source": ds_cfg.covariance.source if ds_cfg.covariance else None,
        "m": int(cfg.get("m", 10)),
        "estimator": cfg.get("estimator", "weighted"),
    }
    report["backend"] = _kernels.BACKEND
    fh, close = _open_out(cfg.get("out"))
    json.dump(report, fh, indent=2, sort_keys=True)
    fh.write("\n")
    if close:
        fh.close()
        print(f"{report['n_selected']} features selected")
    return 0


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.split(",")], dtype=np.float64)


def cmd_theory(args: argparse.Namespace) -> int:
    cfg = _merged(args, _THEORY_KEYS)
    lines = []
    if "m" in cfg or "delta" in cfg or "xi" in cfg:
        m = int(cfg.get("m", 500))
        n = int(cfg.get("n", 500))
        alpha = float(cfg.get("alpha", 0.05))
        j = int(cfg.get("feature", 1)) - 1
        if cfg.get("xi") is not None or cfg.get("eta") is not None:
            if cfg.get("xi") is None or cfg.get("eta") is None:
                raise ConfigError("--xi and --eta must be given together")
            xi = _parse_vector(cfg["xi"])
            eta = _parse_vector(cfg["eta"])
            if cfg.get("cov"):
                sigma = read_table(cfg["cov"], fmt="csv")[0]
            else:
                sigma = np.eye(xi.size)
        else:
            p = int(cfg.get("p", 1))
            delta = float(cfg.get("delta", 0.0))
            sigma_j = float(cfg.get("sigma_j", 1.0))
            xi = np.zeros(p)
            eta = np.zeros(p)
            eta[j] = delta
            sigma = np.eye(p) * sigma_j**2
        spec = TwoClusterSpec(xi=xi, eta=eta, sigma=sigma, m=m, n=n, alpha_level=alpha)
        pe = float(cfg["pe"]) if cfg.get("pe") is not None else None
        pe_used = pe if pe is not None else misclustering_error(spec)
        lo, hi = power_loss_bounds(spec, j, p_e=pe)
        lines += [
            ("p_e", pe_used),
            ("exact_power", exact_power(spec, j, p_e=pe)),
            ("asymptotic_power", asymptotic_power(spec, j, p_e=pe)),
            ("power_loss_lower", lo),
            ("power_loss_upper", hi),
        ]
    if cfg.get("imbalance_n") is not None:
        bound = split_imbalance_bound(
            int(cfg["imbalance_n"]),
            float(cfg.get("imbalance_alpha", 0.5)),
            float(cfg.get("imbalance_w", 0.3)),
        )
        raw = split_imbalance_bound(
            int(cfg["imbalance_n"]),
            float(cfg.get("imbalance_alpha", 0.5)),
            float(cfg.get("imbalance_w", 0.3)),
            clamp=False,
        )
        label = "split_imbalance_bound" + (" (vacuous)" if raw >= 1.0 else "")
        lines.append((label, bound))
    if not lines:
        raise ConfigError("theory needs power parameters (--delta/--xi) or --imbalance-n")
    width = max(len(k) for k, _ in lines)
    for key, value in lines:
        print(f"{key.ljust(width)}  {value:.12g}")
    return 0


def _method_from_mapping(entry: dict, p: int) -> MethodSpec:
    _check_keys(entry, _METHOD_KEYS, "method")
    name = entry.get("name")
    covariance = _covariance_from(entry.get("covariance"), float(entry.get("ridge", 0.0)), p)
    whiten_flag = bool(entry.get("whiten", False))
    if whiten_flag and covariance is None:
        covariance = CovarianceSpec.empirical(float(entry.get("ridge", 0.0)))
    known_sigma = entry.get("known_sigma")
    ds_cfg = DsConfig(
        clustering=entry.get("clustering", "kmeans"),
        test=entry.get("test", "welch_t"),
        q=float(entry.get("q", 0.1)),
        combiner=entry.get("combiner", "sum"),
        restarts=int(entry.get("restarts", 10)),
        whiten=whiten_flag,
        covariance=covariance,
        known_sigma=float(known_sigma) if known_sigma is not None else None,
    )
    return MethodSpec(
        name=name,
        cfg=ds_cfg,
        m=int(entry.get("m", 10)),
        estimator=entry.get("estimator", "weighted"),
        dd_rule=entry.get("dd_rule", "bh"),
        label=entry.get("label"),
    )


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _merged(args, _BENCH_KEYS)
    grid_map = cfg.get("grid")
    methods_list = cfg.get("methods")
    if not isinstance(grid_map, dict) or not isinstance(methods_list, list) or not methods_list:
        raise ConfigError("bench config must define a grid mapping and a methods list")
    _check_keys(grid_map, _GRID_KEYS, "grid")
    if cfg.get("seed") is not None:
        grid_map = dict(grid_map, seed=int(cfg["seed"]))
    for key in ("deltas", "rhos", "sigma_eps", "qs"):
        if key in grid_map:
            grid_map[key] = tuple(float(v) for v in grid_map[key])
    grid = ExperimentGrid(**{k: v for k, v in grid_map.items()})
    methods = [_method_from_mapping(entry, grid.p) for entry in methods_list]
    threads = int(cfg.get("threads") or (os.cpu_count() or 1))

    def progress(done, total):
        print(f"\r{done}/{total} replicates", end="", file=sys.stderr)
        if done == total:
            print(file=sys.stderr)

    rows = run_grid(grid, methods, threads=threads, progress=progress)
    csv_text = rows_to_csv(rows)
    fh, close = _open_out(cfg.get("out"))
    fh.write(csv_text)
    if close:
        fh.close()
    manifest_path = cfg.get("manifest")
    if manifest_path:
        manifest = {
            "grid": {**grid_map, "model": grid.model},
            "methods": methods_list,
            "threads": threads,
            "backend": _kernels.BACKEND,
            "version": __version__,
        }
        with open(manifest_path, "w", encoding="utf-8") as mh:
            json.dump(manifest, mh, indent=2, sort_keys=True)
            mh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitfdr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"splitfdr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a synthetic matrix + truth sidecar")
    ps.add_argument("--config")
    ps.add_argument("--model", choices=["gaussian", "poisson", "trajectory"])
    for flag in ("--n", "--p", "--p1", "--seed"):
        ps.add_argument(flag, type=int)
    for flag in ("--delta", "--rho", "--sigma-eps", "--beta0", "--class-prob"):
        ps.add_argument(flag, type=float, dest=flag[2:].replace("-", "_"))
    ps.add_argument("--out")
    ps.add_argument("--sidecar")
    ps.add_argument("--format", choices=["csv", "tsv"])
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("select", help="run ds / mds / double_dip on a matrix file")
    pc.add_argument("--config")
    pc.add_argument("--input")
    pc.add_argument("--format", choices=["csv", "tsv"])
    pc.add_argument("--has-header", action="store_const", const=True, dest="has_header")
    pc.add_argument("--row-labels", action="store_const", const=True, dest="row_labels")
    pc.add_argument("--transpose", action="store_const", const=True)
    pc.add_argument("--method", choices=["ds", "mds", "double_dip"])
    pc.add_argument("--clustering", choices=["kmeans", "pc1"])
    pc.add_argument("--test", choices=["z_known_var", "welch_t", "wilcoxon_signed", "pois_glm_wald"])
    pc.add_argument("--q", type=float)
    pc.add_argument("--combiner", choices=["sum", "product", "min"])
    pc.add_argument("--m", type=int)
    pc.add_argument("--estimator", choices=["simple", "weighted"])
    pc.add_argument("--restarts", type=int)
    pc.add_argument("--whiten", action="store_const", const=True)
    pc.add_argument("--covariance")
    pc.add_argument("--ridge", type=float)
    pc.add_argument("--known-sigma", type=float, dest="known_sigma")
    pc.add_argument("--dd-rule", choices=["bh", "raw"], dest="dd_rule")
    pc.add_argument("--seed", type=int)
    pc.add_argument("--out")
    pc.add_argument("--threads", type=int)
    pc.set_defaults(func=cmd_select)

    pt = sub.add_parser("theory", help="print closed-form power and bound values")
    pt.add_argument("--config")
    for flag in ("--m", "--n", "--p", "--feature", "--imbalance-n"):
        pt.add_argument(flag, type=int, dest=flag[2:].replace("-", "_"))
    for flag in ("--alpha", "--delta", "--sigma-j", "--pe", "--imbalance-alpha", "--imbalance-w"):
        pt.add_argument(flag, type=float, dest=flag[2:].replace("-", "_"))
    pt.add_argument("--xi")
    pt.add_argument("--eta")
    pt.add_argument("--cov")
    pt.set_defaults(func=cmd_theory)

    pb = sub.add_parser("bench", help="run an experiment grid to CSV")
    pb.add_argument("--config", required=True)
    pb.add_argument("--out")
    pb.add_argument("--manifest")
    pb.add_argument("--threads", type=int)
    pb.add_argument("--seed", type=int)
    pb.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, SplitFdrError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
