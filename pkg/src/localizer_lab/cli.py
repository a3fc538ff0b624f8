"""Command-line frontend: JSON config + flag overrides -> experiment dispatch.

Exit codes: 0 success, 1 computation error, 2 config/schema violation,
3 runtime budget exceeded.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .lattice import OffsetError, Region, build_cubic_window
from .localizer import LocalizerConfig
from .dirac import WindowExhausted
from .experiments import (
    InterfaceSpec,
    SweepSpec,
    convergence_study,
    interface_probe,
    offset_invariance,
    run_point_resampled,
    sweep,
)
from .operators import MODEL_REGISTRY

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_SCHEMA = 2
EXIT_BUDGET = 3


class SchemaError(ValueError):
    def __init__(self, path, msg):
        self.path = path
        super().__init__(f"config key '{path}': {msg}")


_SCHEMA = {
    "experiment": (str, None),
    "model": (str, None),
    "m": ((int, float), 1.0),
    "n": (int, 4),
    "lambda": ((int, float), 0.0),
    "kappa": ((int, float), 0.25),
    "rho": ((int, float), 7.0),
    "r": ((int, float), 0.0),
    "window": (int, 15),
    "window_x": (int, None),
    "offset": (list, [0.5, 0.5]),
    "samples": (int, 1),
    "seed": (int, 0),
    "seeds": (list, None),
    "grid": (list, None),
    "sweep_parameter": (str, "lambda"),
    "kappa_grid": (list, None),
    "rho_grid": (list, None),
    "m2": ((int, float), 3.0),
    "probe_depth": ((int, float), 20.0),
    "out": (str, None),
    "workers": (int, 1),
    "budget_seconds": ((int, float), None),
    "allow_exhausted": (bool, False),
    "reference_model": (str, "trivial_reference"),
}

_EXPERIMENTS = ("index", "sweep", "interface", "offset", "converge", "selfcheck")


def _validate(cfg):
    for key in cfg:
        if key not in _SCHEMA:
            raise SchemaError(key, "unknown key")
    out = {}
    for key, (typ, default) in _SCHEMA.items():
        if key in cfg:
            val = cfg[key]
            if typ is int and isinstance(val, bool):
                raise SchemaError(key, "expected integer, got boolean")
            if not isinstance(val, typ):
                raise SchemaError(key, f"expected {typ}, got {type(val).__name__}")
            out[key] = val
        else:
            out[key] = default
    if out["experiment"] not in _EXPERIMENTS:
        raise SchemaError("experiment", f"must be one of {_EXPERIMENTS}")
    if out["experiment"] != "selfcheck" and out["model"] is not None:
        if out["model"] not in MODEL_REGISTRY:
            raise SchemaError("model", f"unknown model; available: {sorted(MODEL_REGISTRY)}")
    return out


def _parse_args(argv):
    p = argparse.ArgumentParser(
        prog="localizer-lab",
        description="Finite-volume topological invariants via spectral localizers.",
    )
    p.add_argument("experiment", nargs="?", help=f"one of {', '.join(_EXPERIMENTS)}")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--model", help="model id")
    p.add_argument("--m", type=float, help="mass parameter")
    p.add_argument("--lambda", dest="lam", type=float, help="disorder strength")
    p.add_argument("--kappa", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--r", type=float, help="Dirac rescale exponent in [0,1)")
    p.add_argument("--window", type=int, help="half-width of the cubic window")
    p.add_argument("--offset", type=float, nargs="+", help="Dirac offset z")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for artifacts")
    p.add_argument("--workers", type=int)
    return p.parse_args(argv)


def _merged_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg.update(json.load(fh))
    if args.experiment:
        cfg["experiment"] = args.experiment
    overrides = {
        "model": args.model, "m": args.m, "lambda": args.lam, "kappa": args.kappa,
        "rho": args.rho, "r": args.r, "window": args.window,
        "offset": list(args.offset) if args.offset else None,
        "samples": args.samples, "seed": args.seed, "out": args.out,
        "workers": args.workers,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    if "experiment" not in cfg:
        raise SchemaError("experiment", "missing (positional argument or config key)")
    return _validate(cfg)


def _model_params(cfg):
    if cfg["model"] == "trivial_reference":
        return {"n": cfg["n"]}
    return {"m": cfg["m"]}


def _loc_config(cfg):
    return LocalizerConfig(
        kappa=float(cfg["kappa"]),
        rho=float(cfg["rho"]),
        z=tuple(float(v) for v in cfg["offset"]),
        r=float(cfg["r"]),
        reference_model=cfg["reference_model"],
        allow_exhausted=bool(cfg["allow_exhausted"]),
    )


def _pattern(cfg, d):
    return build_cubic_window(d, cfg["window"])


def _write_artifacts(cfg, payload, rows_table=None):
    outdir = cfg.get("out")
    if not outdir:
        return []
    os.makedirs(outdir, exist_ok=True)
    paths = []
    jpath = os.path.join(outdir, f"{cfg['experiment']}_summary.json")
    with open(jpath, "w") as fh:
        json.dump({"config": cfg, "result": payload}, fh, indent=2, default=_json_default)
    paths.append(jpath)
    if rows_table is not None:
        cpath = os.path.join(outdir, f"{cfg['experiment']}_rows.csv")
        rows_table.to_csv(cpath)
        paths.append(cpath)
    return paths


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _dim_of(model):
    return 1 if model == "ssh_1d" else 2


def _cmd_index(cfg):
    d = _dim_of(cfg["model"])
    pattern = _pattern(cfg, d)
    lc = _loc_config(cfg)
    if d == 1:
        lc = LocalizerConfig(
            kappa=lc.kappa, rho=lc.rho, z=(float(cfg["offset"][0]),), r=lc.r,
            reference_model=lc.reference_model, allow_exhausted=lc.allow_exhausted,
        )
    row = run_point_resampled(
        pattern, cfg["model"], _model_params(cfg), lc,
        cfg["lambda"], cfg["seed"], 0, point="index",
    )
    if not row.defined:
        print(f"index undefined: {row.reason}")
        return EXIT_COMPUTE, {"row": asdict(row)}
    label = "Z2 index" if row.kind == "Z2" else "Z index"
    print(f"{label}: {row.value}")
    print(
        f"localizer gap: {row.localizer_gap:.6f}  flattening gap: {row.flattening_gap:.6f}"
        f"  margin_ok: {row.margin_ok}  resamples: {row.resamples}"
    )
    return EXIT_OK, {"row": asdict(row)}


def _cmd_sweep(cfg):
    if cfg["grid"] is None:
        raise SchemaError("grid", "sweep requires a grid of parameter values")
    grid = tuple(float(g) for g in cfg["grid"])
    swept = cfg["sweep_parameter"]
    if swept == "lambda":
        params_of_t = lambda t: {"m": cfg["m"]}
        lam_of_t = lambda t: float(t)
    elif swept == "m":
        params_of_t = lambda t: {"m": float(t)}
        lam_of_t = lambda t: float(cfg["lambda"])
    else:
        raise SchemaError("sweep_parameter", "must be 'lambda' or 'm'")
    spec = SweepSpec(
        model=cfg["model"], grid=grid, params_of_t=params_of_t, lam_of_t=lam_of_t,
        samples=cfg["samples"], base_seed=cfg["seed"], cfg=_loc_config(cfg),
        half_width=cfg["window"], d=_dim_of(cfg["model"]),
    )
    table = sweep(spec, workers=cfg["workers"])
    for pt in table.summary["points"]:
        dist = " ".join(f"P({v})={p:.2f}" for v, p in sorted(pt["distribution"].items()))
        print(f"t={pt['t']:g}: n={pt['n_defined']} {dist} resamples={pt['resamples']}")
    return EXIT_OK, {"summary": table.summary}, table


def _cmd_offset(cfg):
    pattern = _pattern(cfg, _dim_of(cfg["model"]))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg["seed"])))
    offsets = 0.2 + 0.6 * rng.random((cfg["samples"] if cfg["samples"] > 1 else 10, 2))
    seeds = tuple(cfg["seeds"]) if cfg["seeds"] else (None,)
    report = offset_invariance(
        pattern, cfg["model"], _model_params(cfg), _loc_config(cfg),
        offsets, lam=cfg["lambda"], seeds=seeds,
    )
    report.pop("rows")
    print(f"offset invariance: {'PASS' if report['passed'] else 'FAIL'}")
    for seed, vals in report["per_seed"].items():
        print(f"  seed={seed}: {vals}")
    return (EXIT_OK if report["passed"] else EXIT_COMPUTE), report


def _cmd_interface(cfg):
    wx = cfg["window_x"] if cfg["window_x"] is not None else 2 * cfg["window"]
    from .lattice import Pattern
    import itertools
    xs = np.arange(-wx, wx + 1, dtype=float)
    ys = np.arange(-cfg["window"], cfg["window"] + 1, dtype=float)
    sites = np.array(list(itertools.product(xs, ys)))
    pattern = Pattern(d=2, sites=sites, min_distance=1.0)
    depth = float(cfg["probe_depth"])
    spec = InterfaceSpec(
        model1=cfg["model"], params1={"m": cfg["m2"]},
        model2=cfg["model"], params2={"m": cfg["m"]},
        partition=Region.halfspace(axis=0, threshold=0.5),
        probes=((-depth + 0.5, 0.5), (depth + 0.5, 0.5)),
        cfg=_loc_config(cfg), lam=cfg["lambda"],
    )
    seeds = tuple(cfg["seeds"]) if cfg["seeds"] else ((cfg["seed"],) if cfg["lambda"] else (None,))
    report = interface_probe(pattern, spec, seeds=seeds)
    for entry in report["per_seed"]:
        probes = " ".join(
            f"{p['side']}@depth{p['depth']:.0f}: {p['index']} (bulk {p['bulk_index']})"
            for p in entry["probes"]
        )
        print(
            f"seed={entry['seed']}: {probes}  min|eig| interface={entry['min_abs_eig_interface']:.5f}"
            f" control={entry['min_abs_eig_control']:.5f} ratio={entry['ratio']:.3f}"
        )
    print(f"all probes match bulk: {report['all_probes_match']}")
    return (EXIT_OK if report["all_probes_match"] else EXIT_COMPUTE), report


def _cmd_converge(cfg):
    pattern = _pattern(cfg, _dim_of(cfg["model"]))
    kgrid = cfg["kappa_grid"] or [0.05, 0.1, 0.2, 0.3]
    rgrid = cfg["rho_grid"] or [5.0, 7.0, 9.0]
    report = convergence_study(
        pattern, cfg["model"], _model_params(cfg), kgrid, rgrid, _loc_config(cfg),
        lam=cfg["lambda"], seed=cfg["seed"] if cfg["lambda"] else None,
    )
    if report["no_plateau"]:
        print("no plateau found: configuration unreliable")
        return EXIT_COMPUTE, report
    pl = report["plateau"]
    print(
        f"plateau: index {pl['index']} over kappa {pl['kappa_range']} rho {pl['rho_range']}"
        f" ({pl['cells']} cells); recommended kappa={pl['recommended'][0]:g} rho={pl['recommended'][1]:g}"
    )
    return EXIT_OK, report


def _cmd_selfcheck(cfg):
    from . import selfcheck

    report = selfcheck.run_all()
    for name, ok, detail in report:
        print(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}")
    passed = all(ok for _, ok, _ in report)
    return (EXIT_OK if passed else EXIT_COMPUTE), {
        "checks": [{"name": n, "passed": o, "detail": d} for n, o, d in report]
    }


def main(argv=None):
    t0 = time.time()
    try:
        args = _parse_args(argv if argv is not None else sys.argv[1:])
        cfg = _merged_config(args)
    except SchemaError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_SCHEMA

    handlers = {
        "index": _cmd_index,
        "sweep": _cmd_sweep,
        "offset": _cmd_offset,
        "interface": _cmd_interface,
        "converge": _cmd_converge,
        "selfcheck": _cmd_selfcheck,
    }
    try:
        out = handlers[cfg["experiment"]](cfg)
    except SchemaError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (OffsetError, WindowExhausted, ValueError, NotImplementedError) as e:
        print(f"computation error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    status, payload = out[0], out[1]
    table = out[2] if len(out) > 2 else None
    _write_artifacts(cfg, payload, table)
    budget = cfg.get("budget_seconds")
    if budget is not None and time.time() - t0 > float(budget):
        print(f"runtime budget exceeded: {time.time() - t0:.1f}s > {budget}s", file=sys.stderr)
        return EXIT_BUDGET
    return status


if __name__ == "__main__":
    sys.exit(main())
