"""Command-line entry point: ``pdl {simulate,infer,resim,tune,sweep}``.

Settings are resolved in three layers, later ones winning: built-in
defaults, the ``--config`` document (JSON or YAML), then command-line flags.
Every run writes its outputs plus one ``manifest.json`` into ``--out``.

Exit codes: 0 ok, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .datamodel import DataError, ExperimentConfig, InterventionSet, load_datasets, save_datasets
from .experiments import (CascadeBenchmark, QuadwellBenchmark, infer, make_grid, run_cascade,
                          run_quadwell, score, simulate_cascade, simulate_quadwell,
                          trajectory_fit)
from .metrics import EvaluationReport
from .resim import collocate, keep_clouds, resimulate
from .simulate import CascadeRates, SdeModel

log = logging.getLogger("pdl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
BUILTINS = {"quadwell": QuadwellBenchmark, "cascade": CascadeBenchmark}
SWEEP_PARAMS = {"nos", "dt", "m1", "m2", "activations", "sigma0", "theta"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config

def read_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        doc = yaml.safe_load(text) or {}
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise UsageError("config must be a key/value document")
    return doc


def benchmark_from(name: str, section: dict, flags: dict):
    if name not in BUILTINS:
        raise UsageError(f"unknown builtin {name!r} (choose from {', '.join(BUILTINS)})")
    cls = BUILTINS[name]
    known = {f.name for f in fields(cls)}
    values = {**section, **{k: v for k, v in flags.items() if v is not None and k in known}}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown {name} settings: {', '.join(sorted(unknown))}")
    if "rates" in values and isinstance(values["rates"], dict):
        values["rates"] = CascadeRates(**values["rates"])
    for key in ("mu0", "sigma"):
        if isinstance(values.get(key), list):
            values[key] = tuple(values[key])
    if isinstance(values.get("domain"), list):
        values["domain"] = [tuple(r) for r in values["domain"]]
    return cls(**values)


def experiment_from(doc: dict, args) -> ExperimentConfig:
    section = doc.get("experiment", doc if "m1" in doc else {})
    cfg = ExperimentConfig.from_dict(section)
    if "seed" in doc and "seed" not in section:
        cfg = replace(cfg, seed=int(doc["seed"]))
    if getattr(args, "m1", None) is not None:
        cfg = replace(cfg, m1=args.m1)
    if getattr(args, "m2", None) is not None:
        cfg = replace(cfg, m2=args.m2)
    if getattr(args, "degree", None) is not None:
        cfg.dictionary.degree = args.degree
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "theta", None) is not None:
        cfg.omp.theta_grid = args.theta
    if getattr(args, "forced", None) is not None:
        cfg = replace(cfg, forced=args.forced)
    return cfg


def float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")
    return vals


def int_list(text: str) -> list[int]:
    return [int(v) for v in float_list(text)]


# ---------------------------------------------------------------- manifest

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, subcommand: str, config: dict, seeds, inputs, outputs, t0: float):
    digests = {str(p): file_digest(p) for p in inputs}
    combined = hashlib.sha256(json.dumps(
        {"config": config, "inputs": sorted(digests.values())}, sort_keys=True).encode())
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "config": config,
        "seeds": list(seeds),
        "inputs": digests,
        "input_hash": combined.hexdigest(),
        "outputs": sorted(str(p) for p in outputs),
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))
    return path


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    doc = read_config(args.config)
    name = args.builtin or doc.get("builtin")
    if name is None:
        raise UsageError("simulate needs --builtin or a 'builtin' entry in the config")
    flags = {"nos": args.nos, "dt": args.dt, "t_end": args.t_end, "activations": args.activations}
    bench = benchmark_from(name, doc.get("benchmark", {}), flags)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    out = _out_dir(args.out)
    if name == "quadwell":
        iset, truth = simulate_quadwell(bench, seed)
    else:
        iset, truth = simulate_cascade(bench, seed)
    outputs = []
    for r, (ds, kind) in enumerate(iset):
        p = out / f"data_{r}.{args.format}"
        save_datasets(InterventionSet((ds,), (kind,)), p)
        outputs.append(p)
    outputs.append(_dump(out / "truth.json", truth.to_json()))
    write_manifest(out, "simulate", {"builtin": name, "benchmark": asdict(bench)}, [seed],
                   [], outputs, t0)
    log.info("wrote %d dataset files to %s", len(iset), out)
    return EXIT_OK


def _load_inputs(paths) -> InterventionSet:
    datasets, kinds = [], []
    for p in paths:
        iset = load_datasets(p)
        datasets.extend(iset.datasets)
        kinds.extend(iset.kinds)
    return InterventionSet(tuple(datasets), tuple(kinds))


def _model_outputs(out: Path, model, iset, truth_path, seed) -> tuple[list[Path], bool]:
    outputs = [_dump(out / "model.json", model.to_json())]
    if truth_path is not None:
        truth = SdeModel.from_json(json.loads(Path(truth_path).read_text()))
        report = score(model, truth, seed=seed)
    else:
        l2 = trajectory_fit(model, iset.datasets[0])
        report = EvaluationReport(trajectory_l2=[float(v) for v in l2], metadata={"seed": seed})
    report.save(out / "report.json")
    report.save(out / "report.csv")
    outputs += [out / "report.json", out / "report.csv"]
    return outputs, bool(model.failures)


def cmd_infer(args) -> int:
    t0 = time.perf_counter()
    doc = read_config(args.config)
    cfg = experiment_from(doc, args)
    iset = _load_inputs(args.data)
    out = _out_dir(args.out)
    model = infer(iset, cfg)
    outputs, failed = _model_outputs(out, model, iset, args.truth, cfg.seed)
    inputs = list(args.data) + ([args.truth] if args.truth else [])
    write_manifest(out, "infer", cfg.to_dict(), [cfg.seed], inputs, outputs, t0)
    if failed:
        log.error("inference failed for variables %s", sorted(model.failures))
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_tune(args) -> int:
    t0 = time.perf_counter()
    if args.theta_grid is not None and not args.theta_grid:
        raise UsageError("theta grid is empty")
    doc = read_config(args.config)
    cfg = experiment_from(doc, args)
    if args.theta_grid is not None:
        cfg.omp.theta_grid = args.theta_grid
    if not cfg.omp.theta_grid:
        raise UsageError("theta grid is empty")
    iset = _load_inputs(args.data)
    out = _out_dir(args.out)
    model = infer(iset, cfg)
    outputs, failed = _model_outputs(out, model, iset, args.truth, cfg.seed)
    curve_path = out / "bic_curves.csv"
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "theta", "bic", "support_size", "chosen"])
        for n in range(iset.n_vars):
            chosen = model.theta[n] if n < len(model.theta) else None
            curve = model.curves.get(n)
            if curve is None:
                if chosen is not None:
                    w.writerow([n, repr(chosen), "", len(model.supports[n]), 1])
                continue
            for th, b, k in zip(curve.theta, curve.bic, curve.support_size):
                w.writerow([n, repr(th), repr(b), k, int(th == chosen)])
    outputs.append(curve_path)
    inputs = list(args.data) + ([args.truth] if args.truth else [])
    write_manifest(out, "tune", cfg.to_dict(), [cfg.seed], inputs, outputs, t0)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_resim(args) -> int:
    t0 = time.perf_counter()
    if args.keep is None and args.dt_new is None:
        raise UsageError("resim needs --keep and/or --dt-new")
    iset = _load_inputs([args.data])
    out = _out_dir(args.out)
    outputs = []
    results = []
    for r, (ds, kind) in enumerate(iset):
        src = keep_clouds(ds, args.keep) if args.keep is not None else ds
        dt_new = args.dt_new if args.dt_new is not None else float(np.diff(ds.times).min())
        colloc = collocate(src, args.lam, args.basis_size)
        colloc.export_csv(out / f"collocation_{r}.csv",
                          np.linspace(src.times[0], src.times[-1], 201))
        outputs.append(out / f"collocation_{r}.csv")
        nos = args.nos or int(np.median(src.sizes))
        results.append((resimulate(colloc, dt_new, nos, args.seed, ds.intervention_id), kind))
    path = out / "resim.json"
    save_datasets(InterventionSet(tuple(d for d, _ in results), tuple(k for _, k in results)), path)
    outputs.append(path)
    config = {"keep": args.keep, "dt_new": args.dt_new, "lambda": args.lam,
              "basis_size": args.basis_size, "nos": args.nos}
    write_manifest(out, "resim", config, [args.seed], [args.data], outputs, t0)
    return EXIT_OK


def _sweep_point(task):
    name, bench_dict, params, seed = task
    bench = benchmark_from(name, bench_dict, {})
    if "theta" in params:
        bench = replace(bench, theta_grid=[params["theta"]])
    bench = replace(bench, **{k: v for k, v in params.items() if k != "theta"})
    if name == "quadwell":
        model, report = run_quadwell(bench, seed)
    else:
        model, report = run_cascade(bench, seed)
    row = {**params, "seed": seed, "relative_error": report.relative_error,
           "precision": report.precision, "recall": report.recall}
    for n, e in enumerate(report.sigma_abs_error):
        row[f"sigma_abs_error_{n}"] = e
    row["failures"] = len(model.failures)
    return row


def worker_count() -> int:
    env = os.environ.get("PDL_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    doc = read_config(args.config)
    name = args.builtin or doc.get("builtin")
    if name is None:
        raise UsageError("sweep needs --builtin")
    axes = [(args.param, args.grid)]
    if args.param2:
        axes.append((args.param2, args.grid2))
    for p, g in axes:
        if p not in SWEEP_PARAMS:
            raise UsageError(f"cannot sweep {p!r}")
        if p == "activations" and name != "quadwell":
            raise UsageError("activations sweeps need the quadwell builtin")
        if not g:
            raise UsageError(f"grid for {p} is empty")
    if args.repeats < 1:
        raise UsageError("repeats must be >= 1")
    section = doc.get("benchmark", {})
    bench = benchmark_from(name, section, {})
    bench_dict = asdict(bench)
    if "rates" in bench_dict:
        bench_dict["rates"] = dict(bench_dict["rates"])
    names = [p for p, _ in axes]
    int_params = {"nos", "m1", "m2", "activations"}
    points = [dict(zip(names, (int(v) if p in int_params else float(v)
                               for p, v in zip(names, combo))))
              for combo in itertools.product(*(g for _, g in axes))]
    seeds = [args.seed + r for r in range(args.repeats)]
    tasks = [(name, bench_dict, pt, s) for pt in points for s in seeds]
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]

    out = _out_dir(args.out)
    raw = out / "sweep.csv"
    cols = list(rows[0])
    with open(raw, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)
    summary = out / "summary.csv"
    metrics = [c for c in cols if c not in names and c != "seed"]
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["repeats"] + [f"{m}_{s}" for m in metrics for s in ("mean", "std")])
        for i, pt in enumerate(points):
            block = rows[i * len(seeds):(i + 1) * len(seeds)]
            stats = []
            for m in metrics:
                vals = np.array([r[m] for r in block], dtype=float)
                stats += [vals.mean(), vals.std(ddof=1) if len(vals) > 1 else float("nan")]
            w.writerow([pt[p] for p in names] + [len(block)] + stats)
    config = {"builtin": name, "benchmark": bench_dict, "axes": {p: g for p, g in axes},
              "repeats": args.repeats}
    write_manifest(out, "sweep", config, seeds, [], [raw, summary], t0)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True, multi=True):
        if data:
            p.add_argument("data", nargs="+" if multi else None, help="dataset file(s)")
        p.add_argument("--config", help="JSON or YAML settings document")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="generate a benchmark dataset")
    common(p, data=False)
    p.add_argument("--builtin", choices=sorted(BUILTINS))
    p.add_argument("--nos", type=int, help="samples per cloud")
    p.add_argument("--dt", type=float, help="measurement interval")
    p.add_argument("--t-end", type=float)
    p.add_argument("--activations", type=int)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("infer", cmd_infer, "infer a sparse SDE model"),
                                 ("tune", cmd_tune, "infer with BIC threshold tuning")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--truth", help="ground-truth model JSON for scoring")
        p.add_argument("--m1", type=int)
        p.add_argument("--m2", type=int)
        p.add_argument("--degree", type=int)
        p.add_argument("--theta", type=float_list, help="OMP stopping threshold(s)")
        p.add_argument("--forced", type=int_list, help="0-based indices of forced variables")
        if name == "tune":
            p.add_argument("--theta-grid", type=float_list)
        p.set_defaults(func=func)

    p = sub.add_parser("resim", help="collocate and re-simulate denser clouds")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep", type=float, help="fraction of clouds to keep")
    p.add_argument("--dt-new", type=float)
    p.add_argument("--nos", type=int, help="samples per resimulated cloud")
    p.add_argument("--lam", type=float, help="smoothing penalty (default: GCV)")
    p.add_argument("--basis-size", type=int)
    p.set_defaults(func=cmd_resim)

    p = sub.add_parser("sweep", help="metric versus hyper-parameter CSV")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--builtin", choices=sorted(BUILTINS))
    p.add_argument("--param", required=True)
    p.add_argument("--grid", type=float_list, required=True)
    p.add_argument("--param2")
    p.add_argument("--grid2", type=float_list)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "param2", None) and not getattr(args, "grid2", None):
        parser.error("--param2 needs --grid2")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pdl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"pdl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"pdl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"pdl: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
