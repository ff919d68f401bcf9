"""Command-line driver: ``situprop run`` and ``situprop bench {report,grid,robustness}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataio
from .core import ConfigError, DataError, Method, NumericalError, SolverConfig, build_fitting_weights, build_indicator
from .graph import build_graph
from .harness import (P_GRID, THETA_GRID, U_GRID, SyntheticSpec, evaluate, generate, grid_search,
                      robustness_comparison, run_method)
from .solvers import solve
from .spacetime import MONTH_SECONDS, Resolution, aggregate

logger = logging.getLogger("situprop")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
THREADS_ENV = "SITUPROP_NUM_THREADS"


@dataclass(frozen=True)
class PipelineConfig:
    input: Optional[str] = None
    output: str = "out"
    method: str = "capped"
    p_exp: float = 1.0
    theta: float = 1.0
    k: int = 10
    sigma: Optional[tuple] = None
    max_iter: int = 50
    tol: float = 1e-6
    eps: float = 1e-8
    init: str = "best"
    graph: str = "can"
    u_labeled: float = 100.0
    u_unlabeled: float = 0.01
    label_column: str = "label"
    lat_column: str = "lat"
    lon_column: str = "lon"
    time_column: str = "timestamp"
    lat_res: float = 1.0
    lon_res: float = 1.0
    time_res: float = MONTH_SECONDS
    seed: int = 0

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(method=self.method, p_exp=self.p_exp, theta=self.theta, k=self.k,
                                sigma=self.sigma, max_iter=self.max_iter, tol=self.tol, eps=self.eps,
                                init=self.init)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        if not self.input:
            raise ConfigError("no input file given")
        if self.graph not in ("can", "gaussian"):
            raise ConfigError(f"graph must be 'can' or 'gaussian', got {self.graph!r}")
        try:
            Resolution(self.lat_res, self.lon_res, self.time_res)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.solver_config()


def load_config_file(path) -> dict:
    """Read a JSON or YAML mapping of PipelineConfig fields."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        try:
            import yaml
        except ImportError:
            raise ConfigError("reading YAML config files needs pyyaml") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    return data


def thread_limit():
    """Cap BLAS threads when SITUPROP_NUM_THREADS is set."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.warning("threadpoolctl not installed; ignoring %s", THREADS_ENV)
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.cause = exc


@contextlib.contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except (ConfigError, DataError, NumericalError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def run_pipeline(config: PipelineConfig) -> int:
    """Ingest, solve and aggregate; write artifacts to ``config.output``.

    Returns a process exit code. Deterministic artifacts (assignments,
    soft labels, label dictionary, summary, space-time tables) are kept
    apart from wall-clock timings, which go to ``timings.json``.
    """
    try:
        config.validate()
        cfg = config.solver_config()
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return EXIT_CONFIG

    timings = {}
    try:
        with thread_limit():
            with _stage("ingest", timings):
                data = dataio.ingest(config.input, config.label_column, config.lat_column,
                                     config.lon_column, config.time_column,
                                     config.u_labeled, config.u_unlabeled)
            x = data.features
            with _stage("graph", timings):
                g = build_graph(x, config.graph, cfg.k, cfg.sigma)
            with _stage("solve", timings):
                y = build_indicator(data.prior, x.n)
                u = build_fitting_weights(data.prior, x.n)
                result = solve(g, y, u, cfg)
            summary_st = None
            if x.meta is not None:
                with _stage("aggregate", timings):
                    res = Resolution(config.lat_res, config.lon_res, config.time_res)
                    summary_st = aggregate(result.assignments, x.meta, res)
            with _stage("write", timings):
                out = Path(config.output)
                out.mkdir(parents=True, exist_ok=True)
                dataio.write_assignments(out / "assignments.csv", data.ids, result, data.label_names)
                dataio.write_softlabels(out / "softlabels.csv", data.ids, result.f)
                dataio.write_json(out / "labels.json", dataio.label_dictionary(data.label_names))
                counts = np.bincount(result.assignments, minlength=data.prior.c + 2)[1:]
                dataio.write_json(out / "summary.json", {
                    "config": {k: v for k, v in asdict(config).items()
                               if k not in ("input", "output")},
                    "n": x.n, "p": x.p, "c": data.prior.c, "m": data.prior.m,
                    "method": result.method.value,
                    "iterations": result.iterations,
                    "converged": result.converged,
                    "all_capped": result.all_capped,
                    "objective": result.objective,
                    "objective_trace": list(result.objective_trace),
                    "degenerate_rows": list(g.degenerate_rows),
                    "label_counts": {str(k): int(v) for k, v in enumerate(counts, start=1)},
                })
                if summary_st is not None:
                    summary_st.to_csv(out / "spacetime.csv")
                    summary_st.write_json(out / "spacetime.json")
                dataio.write_json(out / "timings.json", {k: round(v, 6) for k, v in timings.items()})
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        cause = exc.cause
        if isinstance(cause, ConfigError):
            return EXIT_CONFIG
        if isinstance(cause, NumericalError):
            return EXIT_NUMERICAL
        return EXIT_DATA
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# ---- bench -----------------------------------------------------------------

def _spec_from_args(args) -> SyntheticSpec:
    try:
        return SyntheticSpec(n_known_classes=args.classes, points_per_class=args.points,
                             novel_points=args.novel, noise_points=args.noise, dim=args.dim,
                             separation=args.separation, labels_per_class=args.labels,
                             outlier_fraction=args.outlier_fraction, outlier_mode=args.outlier_mode,
                             seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _method_configs(args) -> dict:
    base = SolverConfig(k=args.k)
    return {"gss": base.replace(method=Method.GSS),
            "l1": base.replace(method=Method.L1),
            "capped": base.replace(method=Method.CAPPED, p_exp=args.p_exp, theta=args.theta)}


def _write_report(out: Path, name: str, rep) -> None:
    c1 = rep.confusion.shape[1]
    with open(out / f"report_{name}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true_class"] + [f"assigned_{j}" for j in range(1, c1 + 1)])
        for r, row in enumerate(rep.confusion):
            w.writerow([str(r + 1) if r < c1 else "noise"] + [int(v) for v in row])
    dataio.write_json(out / f"report_{name}.json", rep.to_dict())


def bench_report(args) -> int:
    spec = _spec_from_args(args)
    x, truth, prior = generate(spec)
    prior = prior.with_weights(args.u_labeled, args.u_unlabeled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = build_graph(x, args.graph, args.k)
    for name, cfg in _method_configs(args).items():
        rep = evaluate(run_method(x, prior, cfg, graph=g), truth,
                       params={"method": name, "u_labeled": prior.u_labeled,
                               "u_unlabeled": prior.u_unlabeled, "k": cfg.k,
                               **({"p_exp": cfg.p_exp, "theta": cfg.theta} if name == "capped" else {})})
        _write_report(out, name, rep)
        print(f"{name}: acc_known={rep.acc_known:.2f} acc_unknown={rep.acc_unknown:.2f}")
    return EXIT_OK


def bench_grid(args) -> int:
    spec = _spec_from_args(args)
    x, _, prior = generate(spec)
    prior = prior.with_weights(u_unlabeled=args.u_unlabeled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = grid_search(x, prior, methods=tuple(Method), n_folds=args.folds,
                          u_grid=U_GRID, theta_grid=THETA_GRID, p_grid=P_GRID,
                          base=SolverConfig(k=args.k), graph_kind=args.graph, seed=args.seed)
    best = {}
    for method, res in results.items():
        cols = ["method", "u_labeled", "u_unlabeled", "k", "p_exp", "theta", "mean_acc"]
        with open(out / f"grid_{method.value}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in res.table:
                w.writerow([row.get(c, "") for c in cols])
        best[method.value] = res.best
        print(f"{method.value}: {len(res.table)} grid rows, best mean_acc={res.best['mean_acc']:.2f}")
    dataio.write_json(out / "grid_best.json", best)
    return EXIT_OK


def bench_robustness(args) -> int:
    spec = _spec_from_args(args)
    seeds = range(args.seed, args.seed + args.seeds)
    res = robustness_comparison(spec, seeds, _method_configs(args),
                                prior_weights=(args.u_labeled, args.u_unlabeled), graph_kind=args.graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ("gss", "l1", "capped")
    with open(out / "robustness_per_seed.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed"] + [f"{n}_{kind}" for n in names for kind in ("known", "unknown")])
        for row in res["per_seed"]:
            w.writerow([row["seed"]] + [repr(v) for n in names for v in row[n]])
    means = res["means"]
    with open(out / "robustness_means.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["comparison", "mean_known_method", "mean_known_gss", "difference", "holds"])
        for n in ("l1", "capped"):
            diff = means[n][0] - means["gss"][0]
            w.writerow([f"{n}_vs_gss", repr(means[n][0]), repr(means["gss"][0]), repr(diff), int(diff >= 0)])
    dataio.write_json(out / "robustness.json", {"means": {k: list(v) for k, v in means.items()},
                                                "seeds": list(seeds)})
    for n in names:
        print(f"{n}: mean acc_known={means[n][0]:.2f} acc_unknown={means[n][1]:.2f}")
    return EXIT_OK


# ---- argument parsing ------------------------------------------------------

def _add_run_args(p):
    p.add_argument("input", nargs="?", help="input CSV (id, f_1..f_p, label, lat, lon, timestamp)")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--config", help="JSON or YAML file of settings; explicit flags take precedence")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--p-exp", dest="p_exp", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("-k", "--k", type=int)
    p.add_argument("--sigma", type=float, nargs="+")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--init", choices=["quadratic", "indicator", "best"],
                   help="starting point of the reweighting loop")
    p.add_argument("--graph", choices=["can", "gaussian"])
    p.add_argument("--u-labeled", dest="u_labeled", type=float)
    p.add_argument("--u-unlabeled", dest="u_unlabeled", type=float)
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--lat-column", dest="lat_column")
    p.add_argument("--lon-column", dest="lon_column")
    p.add_argument("--time-column", dest="time_column")
    p.add_argument("--lat-res", dest="lat_res", type=float)
    p.add_argument("--lon-res", dest="lon_res", type=float)
    p.add_argument("--time-res", dest="time_res", type=float)
    p.add_argument("--seed", type=int)


def _add_bench_args(p, outlier_fraction=0.0, seeds=None):
    p.add_argument("-o", "--out", default="bench_out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--novel", type=int, default=40)
    p.add_argument("--noise", type=int, default=0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--labels", type=int, default=5)
    p.add_argument("--outlier-fraction", dest="outlier_fraction", type=float, default=outlier_fraction)
    p.add_argument("--outlier-mode", dest="outlier_mode", default="foreign")
    p.add_argument("-k", "--k", type=int, default=10)
    p.add_argument("--graph", choices=["can", "gaussian"], default="can")
    p.add_argument("--p-exp", dest="p_exp", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--u-labeled", dest="u_labeled", type=float, default=100.0)
    p.add_argument("--u-unlabeled", dest="u_unlabeled", type=float, default=0.01)
    if seeds is not None:
        p.add_argument("--seeds", type=int, default=seeds)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="situprop", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="label a CSV file and aggregate over space and time"))
    bench = sub.add_parser("bench", help="synthetic benchmarks")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    _add_bench_args(bsub.add_parser("report", help="per-method reports on one synthetic set"))
    g = bsub.add_parser("grid", help="cross-validated parameter grids")
    _add_bench_args(g)
    g.add_argument("--folds", type=int, default=5)
    _add_bench_args(bsub.add_parser("robustness", help="paired means under injected outliers"),
                    outlier_fraction=0.1, seeds=20)
    return parser


def config_from_args(args) -> PipelineConfig:
    values = {}
    if args.config:
        try:
            values.update(load_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    # explicit flags win over the file
    values.update({f.name: getattr(args, f.name) for f in fields(PipelineConfig)
                   if getattr(args, f.name, None) is not None})
    if values.get("sigma") is not None:
        values["sigma"] = tuple(np.ravel(values["sigma"]).astype(float))
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return run_pipeline(config_from_args(args))
        handler = {"report": bench_report, "grid": bench_grid, "robustness": bench_robustness}
        with thread_limit():
            return handler[args.bench_command](args)
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"[data] {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"[numerical] {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
