"""Ensemble / sweep / interface machinery.

Index values asserted here were cross-checked against the momentum-space
oracles in tests/oracles.py (see test_localizer.py for the direct
comparisons); these tests focus on the experiment plumbing: seeding,
determinism, resample policy, serial/parallel equality, and report shape.
"""

import csv
import itertools
import json
import math

import numpy as np
import pytest

from localizer_lab.lattice import Pattern, Region, build_cubic_window
from localizer_lab.localizer import LocalizerConfig, WindowExhausted
from localizer_lab.experiments import (
    ExperimentRow,
    InterfaceSpec,
    ResultTable,
    SweepSpec,
    convergence_study,
    derive_seed,
    glue_models,
    interface_probe,
    offset_invariance,
    run_point,
    run_point_resampled,
    sweep,
    wilson_interval,
)
from localizer_lab.operators import build_model


# ---------------------------------------------------------------------------
# seeding


def test_derive_seed_deterministic_and_distinct():
    assert derive_seed(11, 0) == derive_seed(11, 0)
    assert derive_seed(11, 0) != derive_seed(11, 1)
    assert derive_seed(11, 0) != derive_seed(12, 0)
    # retries branch off the sample stream instead of shifting it
    assert derive_seed(11, 3, retry=1) != derive_seed(11, 3, retry=0)
    assert derive_seed(11, 3, retry=1) != derive_seed(11, 4, retry=0)


def test_derive_seed_matches_seedsequence_convention():
    ss = np.random.SeedSequence(entropy=11, spawn_key=(4,))
    assert derive_seed(11, 4) == int(ss.generate_state(1, np.uint64)[0])
    ss2 = np.random.SeedSequence(entropy=11, spawn_key=(4, 2))
    assert derive_seed(11, 4, retry=2) == int(ss2.generate_state(1, np.uint64)[0])


def test_wilson_interval_properties():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(8, 10)
    assert 0.0 <= lo <= 0.8 <= hi <= 1.0
    # tighter with more data at the same rate
    lo2, hi2 = wilson_interval(80, 100)
    assert hi2 - lo2 < hi - lo
    # degenerate counts still give a proper interval (never collapses to a point)
    lo3, hi3 = wilson_interval(10, 10)
    assert lo3 < 0.999 and hi3 == pytest.approx(1.0)
    lo4, hi4 = wilson_interval(0, 10)
    assert lo4 == pytest.approx(0.0) and hi4 > 0.001


# ---------------------------------------------------------------------------
# run_point


@pytest.fixture(scope="module")
def window8():
    return build_cubic_window(2, 8)


CFG = LocalizerConfig(kappa=0.3, rho=4.5, z=(0.5, 0.5))


def test_run_point_clean_even(window8):
    row = run_point(window8, "qwz_2d", {"m": -1.0}, CFG)
    assert row.defined and row.kind == "Z" and row.value == -1
    assert row.seed == -1 and row.resamples == 0
    assert row.flattening_gap > 0 and row.localizer_gap > 0
    assert row.gap_ok
    assert row.offset == (0.5, 0.5)
    assert row.kappa == 0.3 and row.rho == 4.5


def test_run_point_clean_z2(window8):
    row = run_point(window8, "aii_2d", {"m": 1.0}, CFG)
    assert row.defined and row.kind == "Z2" and row.value == -1
    trivial = run_point(window8, "aii_2d", {"m": 3.0}, CFG)
    assert trivial.defined and trivial.value == 1


def test_run_point_disorder_deterministic(window8):
    a = run_point(window8, "qwz_2d", {"m": 1.0}, CFG, lam=0.4, seed=123)
    b = run_point(window8, "qwz_2d", {"m": 1.0}, CFG, lam=0.4, seed=123)
    assert a.seed == b.seed == 123
    assert a.value == b.value == 1
    assert a.localizer_gap == b.localizer_gap  # bit-identical
    assert a.flattening_gap == b.flattening_gap
    c = run_point(window8, "qwz_2d", {"m": 1.0}, CFG, lam=0.4, seed=124)
    assert c.localizer_gap != a.localizer_gap  # realization actually changed


def test_run_point_exhaustion_guard(window8):
    big = LocalizerConfig(kappa=0.3, rho=14.0, z=(0.5, 0.5))
    with pytest.raises(WindowExhausted):
        run_point(window8, "qwz_2d", {"m": 1.0}, big)
    row = run_point(
        window8, "qwz_2d", {"m": 1.0},
        LocalizerConfig(kappa=0.3, rho=14.0, z=(0.5, 0.5), allow_exhausted=True),
    )
    assert row.defined and row.value == 1


def test_run_point_guarantee_flag(window8):
    # kappa far above the proven bound: runs fine, flagged as unguaranteed
    row = run_point(window8, "qwz_2d", {"m": 1.0}, CFG, verify_guarantee=True)
    assert row.defined and not row.guaranteed


# ---------------------------------------------------------------------------
# resample policy


def test_resample_cap_without_disorder_reports_undefined():
    # open chiral chain in the nontrivial phase: exact zero modes, and with
    # lam=0 there is nothing to resample
    pat = build_cubic_window(1, 25)
    cfg = LocalizerConfig(kappa=0.3, rho=20.0, z=(0.25,))
    row = run_point_resampled(pat, "ssh_1d", {"m": 0.4}, cfg, 0.0, 7, 0)
    assert not row.defined and row.kind == "undefined"
    assert "zero-mode persisted after 0 resamples" in row.reason
    assert row.resamples == 0
    assert row.flattening_gap < 1e-8


def test_resampled_clean_path_uses_no_seed(window8):
    row = run_point_resampled(window8, "qwz_2d", {"m": 1.0}, CFG, 0.0, 99, 0)
    assert row.defined and row.seed == -1 and row.resamples == 0


def test_resampled_disordered_seed_is_derived(window8):
    row = run_point_resampled(window8, "qwz_2d", {"m": 1.0}, CFG, 0.3, 99, 2)
    assert row.defined and row.resamples == 0
    assert row.seed == derive_seed(99, 2, 0)


# ---------------------------------------------------------------------------
# sweep


def _qwz_sweep(samples=2, lam=0.25, grid=(1.0, 3.0)):
    return SweepSpec(
        model="qwz_2d",
        grid=grid,
        params_of_t=lambda t: {"m": t},
        lam_of_t=lambda t: lam,
        samples=samples,
        base_seed=11,
        cfg=CFG,
        half_width=8,
        d=2,
    )


def test_sweep_serial_parallel_identical():
    tab_s = sweep(_qwz_sweep(), workers=1)
    tab_p = sweep(_qwz_sweep(), workers=3)
    assert len(tab_s.rows) == len(tab_p.rows) == 4
    for a, b in zip(tab_s.rows, tab_p.rows):
        assert (a.point, a.t, a.sample, a.seed, a.kind, a.value, a.defined) == (
            b.point, b.t, b.sample, b.seed, b.kind, b.value, b.defined
        )
        assert a.localizer_gap == b.localizer_gap
        assert a.flattening_gap == b.flattening_gap


def test_sweep_common_random_numbers():
    tab = sweep(_qwz_sweep(), workers=1)
    rows = {(r.t, r.sample): r for r in tab.rows}
    # same sample -> same seed at every t
    assert rows[(1.0, 0)].seed == rows[(3.0, 0)].seed == derive_seed(11, 0)
    assert rows[(1.0, 1)].seed == rows[(3.0, 1)].seed == derive_seed(11, 1)
    assert rows[(1.0, 0)].seed != rows[(1.0, 1)].seed


def test_sweep_summary_distributions():
    tab = sweep(_qwz_sweep(), workers=1)
    pts = tab.summary["points"]
    assert [p["t"] for p in pts] == [1.0, 3.0]
    assert pts[0]["distribution"] == {1: 1.0}
    assert pts[1]["distribution"] == {0: 1.0}
    assert pts[0]["n_defined"] == 2 and pts[0]["n_undefined"] == 0
    # a full phase flip between adjacent points has total-variation distance 1
    assert tab.summary["adjacent_tv_distance"] == [1.0]
    lo, hi = pts[0]["wilson"][1]
    assert lo < 1.0 and hi == 1.0
    assert tab.summary["total_resamples"] == 0
    # rows come back sorted by (t, sample) regardless of execution order
    keys = [(r.t, r.sample) for r in tab.rows]
    assert keys == sorted(keys)


def test_sweep_input_validation():
    with pytest.raises(ValueError, match="monotone"):
        sweep(_qwz_sweep(grid=(3.0, 1.0)), workers=1)
    with pytest.raises(ValueError, match="samples"):
        sweep(_qwz_sweep(samples=0), workers=1)
    empty = sweep(_qwz_sweep(grid=()), workers=1)
    assert empty.rows == [] and empty.summary["points"] == []


# ---------------------------------------------------------------------------
# result table


def test_result_table_roundtrip(tmp_path):
    tab = sweep(_qwz_sweep(samples=1, lam=0.0), workers=1)
    csv_path = tmp_path / "rows.csv"
    json_path = tmp_path / "summary.json"
    tab.to_csv(csv_path)
    tab.to_json(json_path)

    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(ExperimentRow.__dataclass_fields__)
    assert len(rows) == 1 + len(tab.rows)
    # spot-check a numeric column survives the trip
    gap_col = rows[0].index("localizer_gap")
    assert float(rows[1][gap_col]) == tab.rows[0].localizer_gap

    blob = json.loads(json_path.read_text())
    assert set(blob) == {"summary", "config"}
    assert blob["config"]["model"] == "qwz_2d"
    assert blob["config"]["samples"] == 1
    assert len(blob["summary"]["points"]) == 2


def test_result_table_distribution():
    tab = sweep(_qwz_sweep(samples=2), workers=1)
    dist, ndef = tab.distribution("t=1")
    assert dist == {1: 2} and ndef == 2
    dist3, _ = tab.distribution("t=3")
    assert dist3 == {0: 2}


# ---------------------------------------------------------------------------
# offset invariance


def test_offset_invariance_clean(window8):
    rep = offset_invariance(
        window8, "qwz_2d", {"m": -1.0}, CFG,
        offsets=[(0.5, 0.5), (0.3, 0.7), (0.6, 0.4)],
    )
    assert rep["passed"] and rep["violations"] == []
    assert rep["per_seed"] == {"None": [-1, -1, -1]}
    assert len(rep["rows"]) == 3
    assert [r.offset for r in rep["rows"]] == [(0.5, 0.5), (0.3, 0.7), (0.6, 0.4)]


def test_offset_invariance_disordered_z2(window8):
    rep = offset_invariance(
        window8, "aii_2d", {"m": 1.0}, CFG,
        offsets=[(0.5, 0.5), (0.4, 0.6)],
        lam=0.3, seeds=(101, 202),
    )
    assert rep["passed"]
    assert rep["per_seed"] == {"101": [-1, -1], "202": [-1, -1]}
    seeds = {r.seed for r in rep["rows"]}
    assert seeds == {101, 202}


# ---------------------------------------------------------------------------
# interface


def _rect_pattern(hx, hy):
    xs = np.arange(-hx, hx + 1, dtype=float)
    ys = np.arange(-hy, hy + 1, dtype=float)
    return Pattern(d=2, sites=np.array(list(itertools.product(xs, ys))), min_distance=1.0)


def _mini_interface_spec(lam=0.0):
    return InterfaceSpec(
        model1="aii_2d", params1={"m": 1.0},
        model2="aii_2d", params2={"m": 3.0},
        partition=Region.halfspace(axis=0, threshold=0.5),
        probes=((10.5, 0.5), (-9.5, 0.5)),
        cfg=CFG, lam=lam,
    )


def test_glue_models_hard_blocks():
    pat = _rect_pattern(6, 3)
    spec = _mini_interface_spec()
    h, sym = glue_models(pat, spec)
    h1, _ = build_model("aii_2d", {"m": 1.0}, pat)
    h2, _ = build_model("aii_2d", {"m": 3.0}, pat)
    deep1 = pat.index_of((4.0, 0.0))    # inside Lambda (x >= 0.5)
    deep2 = pat.index_of((-4.0, 0.0))
    assert np.allclose(h.blocks[(deep1, deep1)], h1.blocks[(deep1, deep1)])
    assert np.allclose(h.blocks[(deep2, deep2)], h2.blocks[(deep2, deep2)])
    # bond straddling the cut: hard glue averages the two bulks
    i, j = pat.index_of((0.0, 0.0)), pat.index_of((1.0, 0.0))
    expect = 0.5 * (h1.blocks[(i, j)] + h2.blocks[(i, j)])
    assert np.allclose(h.blocks[(i, j)], expect)
    assert sym.az_class == "AII"


def test_glue_models_smooth_ramp():
    pat = _rect_pattern(6, 3)
    spec = InterfaceSpec(
        model1="aii_2d", params1={"m": 1.0},
        model2="aii_2d", params2={"m": 3.0},
        partition=Region.halfspace(axis=0, threshold=0.5),
        probes=((10.5, 0.5), (-9.5, 0.5)),
        cfg=CFG, glue="smooth", glue_width=4.0,
    )
    h, _ = glue_models(pat, spec)
    h1, _ = build_model("aii_2d", {"m": 1.0}, pat)
    h2, _ = build_model("aii_2d", {"m": 3.0}, pat)
    # signed distance +1.5 -> alpha = 1.5/4 + 0.5 = 0.875
    i = pat.index_of((2.0, 0.0))
    expect = 0.875 * h1.blocks[(i, i)] + 0.125 * h2.blocks[(i, i)]
    assert np.allclose(h.blocks[(i, i)], expect)
    # far on either side the ramp saturates
    far = pat.index_of((6.0, 1.0))
    assert np.allclose(h.blocks[(far, far)], h1.blocks[(far, far)])


def test_glue_models_rejects_mixed_classes():
    pat = _rect_pattern(4, 2)
    spec = InterfaceSpec(
        model1="aii_2d", params1={"m": 1.0},
        model2="qwz_2d", params2={"m": 3.0},
        partition=Region.halfspace(axis=0, threshold=0.5),
        probes=((3.5, 0.5),), cfg=CFG,
    )
    with pytest.raises(ValueError, match="share symmetry class"):
        glue_models(pat, spec)


def test_interface_probe_mini():
    pat = _rect_pattern(18, 9)
    rep = interface_probe(pat, _mini_interface_spec(), seeds=(None,))
    assert rep["all_probes_match"]
    entry = rep["per_seed"][0]
    by_side = {p["side"]: p for p in entry["probes"]}
    assert by_side["model1"]["index"] == -1 and by_side["model1"]["bulk_index"] == -1
    assert by_side["model2"]["index"] == 1 and by_side["model2"]["bulk_index"] == 1
    # topological mismatch across the cut closes the interface gap
    assert entry["min_abs_eig_control"] > 0.9
    assert entry["ratio"] < 0.15
    assert 0.05 < entry["collar_decay_rate"] < 0.6


def test_interface_probe_rejects_shallow_probe():
    pat = _rect_pattern(18, 9)
    spec = InterfaceSpec(
        model1="aii_2d", params1={"m": 1.0},
        model2="aii_2d", params2={"m": 3.0},
        partition=Region.halfspace(axis=0, threshold=0.5),
        probes=((4.5, 0.5),),   # depth 4 <= 2 * ball radius 4.5
        cfg=CFG,
    )
    with pytest.raises(ValueError, match="too close"):
        interface_probe(pat, spec, seeds=(None,))


# ---------------------------------------------------------------------------
# convergence


def test_convergence_study_plateau(window8):
    rep = convergence_study(
        window8, "qwz_2d", {"m": -1.0}, (0.2, 0.3), (3.5, 4.5), CFG,
    )
    assert rep["defined"] == [[True, True], [True, True]]
    assert rep["values"] == [[-1, -1], [-1, -1]]
    assert not rep["no_plateau"]
    plat = rep["plateau"]
    assert plat["index"] == -1 and plat["cells"] == 4
    assert plat["kappa_range"] == (0.2, 0.3)
    assert plat["rho_range"] == (3.5, 4.5)
    k0, r0 = plat["recommended"]
    assert k0 in (0.2, 0.3) and r0 in (3.5, 4.5)
