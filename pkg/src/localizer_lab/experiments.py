"""Experiment drivers: single realizations, parameter sweeps, offset
invariance, interface probes, and (kappa, rho) convergence scans.

Every run is a pure function of (config, seed).  Randomness flows from one
64-bit base seed through counter-based spawn keys — sample i at every sweep
point reuses the same realization (common random numbers), and a zero-mode
resample bumps a retry counter rather than consuming the next sample's seed —
so serial and parallel executions produce identical tables.
"""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.sparse.linalg as spla

from .dirac import DiracData, WindowExhausted, ball_projection
from .lattice import Region, build_cubic_window
from .localizer import (
    IndexUndefinedError,
    LocalizerConfig,
    admissible_params,
    assemble_even,
    assemble_odd,
    assemble_skew_aii,
    evaluate_index,
    restrict_to_ball,
)
from .operators import (
    DisorderSpec,
    ZeroModeError,
    apply_disorder,
    build_model,
    decay_diagnostic,
    spectral_flatten,
)

__all__ = [
    "ExperimentRow", "ResultTable", "SweepSpec", "InterfaceSpec",
    "derive_seed", "run_point", "sweep", "offset_invariance",
    "interface_probe", "convergence_study", "wilson_interval", "glue_models",
    "MAX_RESAMPLES",
]

MAX_RESAMPLES = 5

# class -> (assembler kind, needs reference)
CLASS_DISPATCH = {
    "A": "even",
    "AIII": "odd",
    "AII": "skew_aii",
}


def derive_seed(base_seed, sample, retry=0):
    """Counter-based per-(sample, retry) seed; identical across sweep points."""
    key = (int(sample),) if retry == 0 else (int(sample), int(retry))
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def wilson_interval(successes, n, zcrit=1.959963984540054):
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    z2 = zcrit * zcrit
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = zcrit * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class ExperimentRow:
    point: str
    t: float
    sample: int
    seed: int            # -1 for clean runs
    kind: str            # "Z" | "Z2" | "undefined"
    value: int           # 0 placeholder when undefined
    defined: bool
    reason: str
    localizer_gap: float
    flattening_gap: float
    gap_ok: bool
    guaranteed: bool
    margin_ok: bool
    resamples: int
    kappa: float
    rho: float
    offset: tuple


@dataclass
class ResultTable:
    rows: list
    summary: dict
    config: dict

    def to_csv(self, path):
        cols = list(ExperimentRow.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                d = asdict(row)
                w.writerow([d[c] for c in cols])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"summary": self.summary, "config": self.config}, fh, indent=2, default=_jsonable)

    def distribution(self, point):
        vals = [r.value for r in self.rows if r.point == point and r.defined]
        out = {}
        for v in vals:
            out[v] = out.get(v, 0) + 1
        return out, len(vals)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _flatten_region_for(pattern, dd, cfg):
    """Margin rule: flatten on the ball of twice the localizer ball's Euclidean
    radius.  When that does not fit, fall back (flagged) to the largest
    centered ball the window holds — every site the window-truncation edge can
    touch — which is the whole window up to corners."""
    sel = ball_projection(dd, cfg.rho)
    margin_radius = 2.0 * sel.euclid_radius
    in_radius = pattern.in_radius(dd.z)
    margin_ok = margin_radius <= in_radius
    if margin_ok:
        region = Region.ball(dd.z, margin_radius)
    elif sel.exhausted:
        region = Region.all()
    else:
        region = Region.ball(dd.z, in_radius)
    return region, bool(margin_ok), sel


def _reference_flattened(pattern, cfg, region, n, zero_tol):
    h_ref, sym_ref = build_model(cfg.reference_model, {"n": n}, pattern)
    return spectral_flatten(h_ref, region, zero_tol=zero_tol), sym_ref


def run_point(
    pattern,
    model,
    params,
    cfg,
    lam=0.0,
    seed=None,
    *,
    point="point",
    t=0.0,
    sample=0,
    zero_tol=1e-8,
    verify_guarantee=False,
    index_kind=None,
    resamples=0,
):
    """One realization: build -> disorder -> flatten -> localize -> evaluate.

    Offset and ball-geometry problems are raised before any dense linear
    algebra; flattening zero-modes raise ZeroModeError for the caller's
    resample policy; an uninvertible localizer yields a row with
    defined=False and the reason attached.
    """
    dd = DiracData(pattern, cfg.z, r=cfg.r)
    sel = ball_projection(dd, cfg.rho)
    if sel.exhausted and not cfg.allow_exhausted:
        raise WindowExhausted(
            f"rho={cfg.rho} ball (Euclidean radius {sel.euclid_radius:.2f}) exceeds the window"
        )
    region, margin_ok, _ = _flatten_region_for(pattern, dd, cfg)

    h, sym = build_model(model, params, pattern)
    seed_val = -1
    if lam and seed is not None:
        seed_val = int(seed)
        h = apply_disorder(h, DisorderSpec(strength=lam, seed=seed_val), sym)

    H = spectral_flatten(h, region, zero_tol=zero_tol)
    del h
    flat_gap = H.gap
    fiber = H.n

    kind = index_kind or CLASS_DISPATCH.get(sym.az_class)
    if kind is None:
        raise ValueError(f"no localizer recipe for class {sym.az_class}")

    guaranteed = False
    if verify_guarantee:
        adm = admissible_params(H, dd, H.gap)
        guaranteed = cfg.kappa < adm.kappa_max and cfg.rho > adm.rho_min(cfg.kappa)

    # Assembly only reads the rho ball; shed the (possibly much larger)
    # flattening window now that gap and guarantee data are recorded.
    H = restrict_to_ball(H, dd, cfg)

    prov = {"model": model, "seed": seed_val, "lambda": lam}
    try:
        if kind == "even":
            L = assemble_even(H, dd, cfg, provenance=prov)
            res = evaluate_index(L)
        elif kind == "odd":
            L = assemble_odd(H, dd, cfg, sym=sym, provenance=prov)
            res = evaluate_index(L)
        elif kind == "skew_aii":
            L = assemble_skew_aii(H, dd, cfg, sym, provenance=prov)
            sel_region = Region.explicit(L.site_indices)
            H = None  # the localizer is assembled; drop the dense window
            H_ref, sym_ref = _reference_flattened(pattern, cfg, sel_region, fiber, zero_tol)
            L_ref = assemble_skew_aii(H_ref, dd, cfg, sym_ref, provenance={"model": cfg.reference_model})
            res = evaluate_index(L, reference=L_ref)
        else:
            raise ValueError(f"unknown localizer kind {kind!r}")
    except IndexUndefinedError as e:
        return ExperimentRow(
            point=str(point), t=float(t), sample=int(sample), seed=seed_val,
            kind="undefined", value=0, defined=False, reason=str(e),
            localizer_gap=float("nan"), flattening_gap=flat_gap, gap_ok=False,
            guaranteed=guaranteed, margin_ok=margin_ok, resamples=resamples,
            kappa=cfg.kappa, rho=cfg.rho, offset=tuple(cfg.z),
        )
    return ExperimentRow(
        point=str(point), t=float(t), sample=int(sample), seed=seed_val,
        kind=res.kind, value=int(res.value), defined=True, reason="",
        localizer_gap=res.localizer_gap, flattening_gap=flat_gap,
        gap_ok=bool(res.localizer_gap >= flat_gap / 2.0),
        guaranteed=guaranteed, margin_ok=margin_ok, resamples=resamples,
        kappa=cfg.kappa, rho=cfg.rho, offset=tuple(cfg.z),
    )


def run_point_resampled(pattern, model, params, cfg, lam, base_seed, sample, **kw):
    """run_point plus the zero-mode resample policy (counted, capped)."""
    retry = 0
    while True:
        seed = derive_seed(base_seed, sample, retry) if lam else None
        try:
            return run_point(
                pattern, model, params, cfg, lam=lam, seed=seed,
                sample=sample, resamples=retry, **kw,
            )
        except ZeroModeError as e:
            if not lam or retry >= MAX_RESAMPLES:
                return ExperimentRow(
                    point=str(kw.get("point", "point")), t=float(kw.get("t", 0.0)),
                    sample=int(sample), seed=int(seed) if seed is not None else -1,
                    kind="undefined", value=0, defined=False,
                    reason=f"zero-mode persisted after {retry} resamples: {e}",
                    localizer_gap=float("nan"), flattening_gap=float(e.min_abs_eig),
                    gap_ok=False, guaranteed=False, margin_ok=True, resamples=retry,
                    kappa=cfg.kappa, rho=cfg.rho, offset=tuple(cfg.z),
                )
            retry += 1


@dataclass(frozen=True)
class SweepSpec:
    model: str
    grid: tuple                  # t values, monotone
    params_of_t: object          # callable t -> params dict
    lam_of_t: object             # callable t -> disorder strength
    samples: int
    base_seed: int
    cfg: LocalizerConfig
    half_width: int = 15
    d: int = 2

    def params(self, t):
        return self.params_of_t(t)

    def lam(self, t):
        return self.lam_of_t(t)


def _pool_size(workers):
    if workers is None:
        workers = int(os.environ.get("LOCALIZER_LAB_THREADS", "1"))
    return max(1, int(workers))


def sweep(spec, workers=None):
    """Empirical index distribution along a parameter path, CRN across t."""
    if len(spec.grid) == 0:
        return ResultTable(rows=[], summary={"points": []}, config=_sweep_config(spec))
    if spec.samples < 1:
        raise ValueError("samples must be >= 1")
    grid = list(spec.grid)
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("sweep grid must be monotone")
    pattern = build_cubic_window(spec.d, spec.half_width)

    tasks = [(ti, s) for ti in range(len(grid)) for s in range(spec.samples)]

    def one(task):
        ti, s = task
        t = grid[ti]
        return run_point_resampled(
            pattern, spec.model, spec.params(t), spec.cfg, spec.lam(t),
            spec.base_seed, s, point=f"t={t:g}", t=t,
        )

    nw = _pool_size(workers)
    if nw == 1:
        rows = [one(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            rows = list(pool.map(one, tasks))
    rows.sort(key=lambda r: (r.t, r.sample))

    points = []
    prev_dist = None
    tv_distances = []
    for t in grid:
        key = f"t={t:g}"
        dist, ndef = {}, 0
        resample_count = 0
        for r in rows:
            if r.point == key:
                resample_count += r.resamples
                if r.defined:
                    dist[r.value] = dist.get(r.value, 0) + 1
                    ndef += 1
        probs = {v: c / ndef for v, c in dist.items()} if ndef else {}
        intervals = {v: wilson_interval(c, ndef) for v, c in dist.items()}
        points.append({
            "t": t,
            "n_defined": ndef,
            "n_undefined": spec.samples - ndef,
            "distribution": probs,
            "wilson": intervals,
            "resamples": resample_count,
        })
        if prev_dist is not None:
            support = set(prev_dist) | set(probs)
            tv = 0.5 * sum(abs(prev_dist.get(v, 0.0) - probs.get(v, 0.0)) for v in support)
            tv_distances.append(tv)
        prev_dist = probs
    summary = {
        "points": points,
        "adjacent_tv_distance": tv_distances,
        "total_resamples": sum(p["resamples"] for p in points),
    }
    return ResultTable(rows=rows, summary=summary, config=_sweep_config(spec))


def _sweep_config(spec):
    return {
        "model": spec.model,
        "grid": list(spec.grid),
        "samples": spec.samples,
        "base_seed": spec.base_seed,
        "kappa": spec.cfg.kappa,
        "rho": spec.cfg.rho,
        "z": list(spec.cfg.z),
        "r": spec.cfg.r,
        "half_width": spec.half_width,
        "d": spec.d,
    }


def offset_invariance(pattern, model, params, cfg, offsets, lam=0.0, base_seed=0, seeds=(None,)):
    """Index equality across Dirac offsets, clean or per-seed disordered."""
    runs = {}
    rows = []
    for s_i, seed in enumerate(seeds):
        vals = []
        for z in offsets:
            c = replace(cfg, z=tuple(float(v) for v in z))
            row = run_point(
                pattern, model, params, c, lam=lam if seed is not None else 0.0,
                seed=seed, point=f"seed={seed}", t=float(s_i), sample=s_i,
            )
            rows.append(row)
            vals.append(row.value if row.defined else None)
        runs[str(seed)] = vals
    violations = [
        {"seed": k, "values": v} for k, v in runs.items()
        if len({x for x in v}) != 1 or v[0] is None
    ]
    return {
        "passed": not violations,
        "per_seed": runs,
        "violations": violations,
        "offsets": [tuple(z) for z in offsets],
        "rows": rows,
    }


# ---------------------------------------------------------------------------
# interface experiment


@dataclass(frozen=True)
class InterfaceSpec:
    model1: str
    params1: dict
    model2: str
    params2: dict
    partition: Region            # Lambda; model1 lives on Lambda, model2 off it
    probes: tuple                # probe centers (one per side or more)
    cfg: LocalizerConfig
    lam: float = 0.0
    glue: str = "hard"           # or "smooth"
    glue_width: float = 4.0
    collar_halfwidth: float = 6.0


def _signed_distance(spec, sites):
    reg = spec.partition
    if reg.kind == "halfspace":
        return sites[:, reg.axis] - reg.threshold
    raise ValueError("signed distance implemented for halfspace partitions")


def glue_models(pattern, spec):
    """Interface Hamiltonian: h1 blocks inside Lambda, h2 outside, averaged
    (hard) or ramp-interpolated (smooth) across the cut."""
    h1, sym1 = build_model(spec.model1, spec.params1, pattern)
    h2, sym2 = build_model(spec.model2, spec.params2, pattern)
    if sym1.az_class != sym2.az_class or h1.n != h2.n:
        raise ValueError("interface bulks must share symmetry class and fiber")
    if spec.glue == "hard":
        alpha = (spec.partition.contains(pattern.sites)).astype(float)
    elif spec.glue == "smooth":
        sd = _signed_distance(spec, pattern.sites)
        alpha = np.clip(sd / spec.glue_width + 0.5, 0.0, 1.0)
    else:
        raise ValueError(f"unknown glue {spec.glue!r}")
    out = h1.copy()
    for key in set(h1.blocks) | set(h2.blocks):
        i, j = key
        w = 0.5 * (alpha[i] + alpha[j])
        b1 = h1.blocks.get(key, 0.0)
        b2 = h2.blocks.get(key, 0.0)
        out.blocks[key] = w * b1 + (1.0 - w) * b2
    return out, sym1


def _min_abs_eigenvalue_sparse(h):
    Hs = h.to_sparse().tocsc()
    vals = spla.eigsh(Hs, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(abs(vals[0]))


def _probe_index(pattern, h, sym, cfg, z, zero_tol=1e-8):
    dd = DiracData(pattern, tuple(z), r=cfg.r)
    region, margin_ok, sel = _flatten_region_for(pattern, dd, replace(cfg, z=tuple(z)))
    c = replace(cfg, z=tuple(float(v) for v in z))
    H = spectral_flatten(h, region, zero_tol=zero_tol)
    L = assemble_skew_aii(H, dd, c, sym)
    H_ref, sym_ref = _reference_flattened(pattern, c, region, H.n, zero_tol)
    L_ref = assemble_skew_aii(H_ref, dd, c, sym_ref)
    res = evaluate_index(L, reference=L_ref)
    return res.value, H.gap, res.localizer_gap, margin_ok


def interface_probe(pattern, spec, seeds=(None,), collar_decay=True):
    """Probe indices deep on each side of the cut, bulk comparisons, and the
    interface spectral statistics (gap closing when the bulk indices differ).

    seeds: explicit disorder seeds, or (None,) for a single clean run.
    """
    results = []
    for seed in seeds:
        seed_val = int(seed) if (spec.lam and seed is not None) else None
        h_int, sym = glue_models(pattern, spec)
        if spec.lam and seed_val is not None:
            h_int = apply_disorder(h_int, DisorderSpec(strength=spec.lam, seed=seed_val), sym)

        sd = _signed_distance(spec, pattern.sites)
        probe_rows = []
        for z in spec.probes:
            zz = np.asarray(z, dtype=float)
            dd = DiracData(pattern, tuple(zz), r=spec.cfg.r)
            sel = ball_projection(dd, spec.cfg.rho)
            depth = abs(_signed_distance(spec, zz[None, :])[0])
            if depth <= 2.0 * sel.euclid_radius:
                raise ValueError(
                    f"probe at {tuple(zz)} too close to the cut: depth {depth:.1f} "
                    f"<= 2 x ball radius {sel.euclid_radius:.1f}"
                )
            side = "model1" if _signed_distance(spec, zz[None, :])[0] > 0 else "model2"
            val, fgap, lgap, margin_ok = _probe_index(pattern, h_int, sym, spec.cfg, zz)
            # bulk comparison: same probe, pure bulk Hamiltonian, same disorder
            bulk_model = spec.model1 if side == "model1" else spec.model2
            bulk_params = spec.params1 if side == "model1" else spec.params2
            h_bulk, sym_b = build_model(bulk_model, bulk_params, pattern)
            if spec.lam and seed_val is not None:
                h_bulk = apply_disorder(h_bulk, DisorderSpec(strength=spec.lam, seed=seed_val), sym_b)
            bval, bfgap, blgap, _ = _probe_index(pattern, h_bulk, sym_b, spec.cfg, zz)
            probe_rows.append({
                "probe": tuple(zz), "side": side, "depth": float(depth),
                "index": val, "bulk_index": bval, "match": val == bval,
                "flattening_gap": fgap, "localizer_gap": lgap, "margin_ok": margin_ok,
            })

        min_eig_interface = _min_abs_eigenvalue_sparse(h_int)

        # control: both bulks equal to model2 (glued control), same disorder
        control_spec = replace(spec, model1=spec.model2, params1=spec.params2)
        h_ctl, sym_c = glue_models(pattern, control_spec)
        if spec.lam and seed_val is not None:
            h_ctl = apply_disorder(h_ctl, DisorderSpec(strength=spec.lam, seed=seed_val), sym_c)
        min_eig_control = _min_abs_eigenvalue_sparse(h_ctl)

        entry = {
            "seed": seed_val if seed_val is not None else -1,
            "probes": probe_rows,
            "min_abs_eig_interface": min_eig_interface,
            "min_abs_eig_control": min_eig_control,
            "ratio": min_eig_interface / min_eig_control if min_eig_control else float("inf"),
        }
        if collar_decay:
            collar = np.flatnonzero(np.abs(sd) <= spec.collar_halfwidth)
            H_collar = spectral_flatten(h_int, Region.explicit(collar))
            diag = decay_diagnostic(H_collar, k_list=(1, 2))
            entry["collar_decay_rate"] = diag["fitted_rate"]
        results.append(entry)
    return {
        "per_seed": results,
        "all_probes_match": all(p["match"] for e in results for p in e["probes"]),
    }


def convergence_study(pattern, model, params, kappa_grid, rho_grid, cfg, lam=0.0, seed=None, gap_threshold=1e-3, zero_tol=1e-8):
    """Index over a (kappa, rho) grid; the plateau is the largest connected
    constant-index region whose localizer gap clears the threshold."""
    kappa_grid = list(kappa_grid)
    rho_grid = list(rho_grid)
    dd_max = DiracData(pattern, cfg.z, r=cfg.r)
    sel_max = ball_projection(dd_max, max(rho_grid))
    if sel_max.exhausted and not cfg.allow_exhausted:
        raise WindowExhausted("largest rho in the scan exceeds the window")
    margin_radius = 2.0 * sel_max.euclid_radius
    region = (
        Region.ball(cfg.z, margin_radius)
        if margin_radius <= pattern.in_radius(cfg.z)
        else Region.all()
    )
    h, sym = build_model(model, params, pattern)
    if lam and seed is not None:
        h = apply_disorder(h, DisorderSpec(strength=lam, seed=int(seed)), sym)
    H = spectral_flatten(h, region, zero_tol=zero_tol)
    kind = CLASS_DISPATCH[sym.az_class]

    values = np.zeros((len(kappa_grid), len(rho_grid)), dtype=int)
    gaps = np.zeros_like(values, dtype=float)
    defined = np.zeros_like(values, dtype=bool)
    for i, kap in enumerate(kappa_grid):
        for j, rho in enumerate(rho_grid):
            c = replace(cfg, kappa=float(kap), rho=float(rho))
            try:
                if kind == "skew_aii":
                    dd = DiracData(pattern, c.z, r=c.r)
                    L = assemble_skew_aii(H, dd, c, sym)
                    H_ref, sym_ref = _reference_flattened(pattern, c, region, H.n, zero_tol)
                    L_ref = assemble_skew_aii(H_ref, dd, c, sym_ref)
                    res = evaluate_index(L, reference=L_ref)
                else:
                    dd = DiracData(pattern, c.z, r=c.r)
                    L = assemble_even(H, dd, c) if kind == "even" else assemble_odd(H, dd, c, sym=sym)
                    res = evaluate_index(L)
                values[i, j] = res.value
                gaps[i, j] = res.localizer_gap
                defined[i, j] = True
            except (IndexUndefinedError, WindowExhausted):
                defined[i, j] = False

    ok = defined & (gaps >= gap_threshold)
    best = None
    seen = np.zeros_like(ok, dtype=bool)
    for i in range(ok.shape[0]):
        for j in range(ok.shape[1]):
            if not ok[i, j] or seen[i, j]:
                continue
            stack = [(i, j)]
            seen[i, j] = True
            cells = []
            v = values[i, j]
            while stack:
                a, b = stack.pop()
                cells.append((a, b))
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    na, nb = a + da, b + db
                    if (
                        0 <= na < ok.shape[0] and 0 <= nb < ok.shape[1]
                        and ok[na, nb] and not seen[na, nb] and values[na, nb] == v
                    ):
                        seen[na, nb] = True
                        stack.append((na, nb))
            if best is None or len(cells) > len(best[1]):
                best = (v, cells)

    report = {
        "kappa_grid": kappa_grid,
        "rho_grid": rho_grid,
        "values": values.tolist(),
        "gaps": gaps.tolist(),
        "defined": defined.tolist(),
    }
    if best is None:
        report["plateau"] = None
        report["no_plateau"] = True
    else:
        v, cells = best
        ci = sum(c[0] for c in cells) / len(cells)
        cj = sum(c[1] for c in cells) / len(cells)
        i0, j0 = min(cells, key=lambda c: (c[0] - ci) ** 2 + (c[1] - cj) ** 2)
        report["plateau"] = {
            "index": int(v),
            "cells": len(cells),
            "kappa_range": (
                float(min(kappa_grid[c[0]] for c in cells)),
                float(max(kappa_grid[c[0]] for c in cells)),
            ),
            "rho_range": (
                float(min(rho_grid[c[1]] for c in cells)),
                float(max(rho_grid[c[1]] for c in cells)),
            ),
            "recommended": (float(kappa_grid[i0]), float(rho_grid[j0])),
        }
        report["no_plateau"] = False
    return report
