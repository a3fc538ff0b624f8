"""Fast invariant suite behind the CLI `selfcheck` command.

Each check returns (name, passed, detail).  These are smoke-level guards (a
few seconds total); the full property suites live in the test tree.
"""

import numpy as np

from .clifford import build_clifford_rep, clifford_vector, symmetry_ops
from .dirac import DiracData, ball_projection, d0_values
from .lattice import build_cubic_window
from .linalg import StructuredMatrix, inertia, ldl_inertia, pfaffian_sign
from .localizer import LocalizerConfig, assemble_even, assemble_skew_aii, evaluate_index
from .operators import (
    DisorderSpec,
    apply_disorder,
    build_model,
    spectral_flatten,
    standard_symmetry_ops,
    verify_symmetry,
)


def _clifford_check():
    worst = 0.0
    for d in range(1, 7):
        rep = build_clifford_rep(d)
        for i, gi in enumerate(rep.generators):
            worst = max(worst, float(np.abs(gi - gi.conj().T).max()))
            for j, gj in enumerate(rep.generators):
                acom = gi @ gj + gj @ gi
                target = 2.0 * np.eye(rep.matrix_size) if i == j else 0.0
                worst = max(worst, float(np.abs(acom - target).max()))
        symmetry_ops(rep)
    return worst <= 1e-12, f"max relation violation {worst:.2e}"


def _linalg_check():
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(11)))
    ok = True
    for _ in range(5):
        A = rng.standard_normal((60, 60)) + 1j * rng.standard_normal((60, 60))
        M = StructuredMatrix(A + A.conj().T, "hermitian")
        np_, nm, _ = inertia(M)
        lp, lm = ldl_inertia(M)
        ok &= (np_, nm) == (lp, lm)
        B = rng.standard_normal((40, 40))
        S = StructuredMatrix(B - B.T, "real-skew")
        s, lg = pfaffian_sign(S, return_log=True)
        sd, ld = np.linalg.slogdet(S.matrix)
        ok &= sd > 0 and abs(2 * lg - ld) < 1e-8 * max(1.0, abs(ld))
    return ok, "inertia == LDL oracle, Pf^2 == det"


def _model_symmetry_check():
    pattern = build_cubic_window(2, 5)
    h, sym = build_model("aii_2d", {"m": 1.0}, pattern)
    rep = verify_symmetry(h, sym, tol=1e-12)
    dis = apply_disorder(h, DisorderSpec(strength=0.7, seed=3), sym)
    rep2 = verify_symmetry(dis, sym, tol=1e-12)
    return rep["passed"] and rep2["passed"], (
        f"clean max dev {max(rep['relations'].values()):.2e}, "
        f"disordered {max(rep2['relations'].values()):.2e}"
    )


def _dirac_check():
    pattern = build_cubic_window(2, 5)
    dd = DiracData(pattern, (0.5, 0.5))
    sel = ball_projection(dd, 3.0)
    d0 = d0_values(dd, sel.site_indices)
    disp = dd.displacements(sel.site_indices)
    ok = np.allclose(np.abs(d0), np.linalg.norm(disp, axis=1), atol=1e-13)
    rep = build_clifford_rep(2)
    v = np.array([0.3, -1.2])
    sq = clifford_vector(rep, v) @ clifford_vector(rep, v)
    ok &= np.allclose(sq, (v @ v) * np.eye(2), atol=1e-13)
    return bool(ok), f"{len(sel.site_indices)} ball sites, |gamma.v|^2 = |v|^2"


def _flatten_check():
    pattern = build_cubic_window(2, 5)
    h, sym = build_model("aii_2d", {"m": 3.0}, pattern)
    H = spectral_flatten(h)
    dev = np.abs(H.matrix @ H.matrix - np.eye(H.dim)).max()
    return dev <= 1e-10 and H.gap > 0.8, f"|H^2-1| {dev:.2e}, gap {H.gap:.3f}"


def _index_check():
    pattern = build_cubic_window(2, 8)
    cfg = LocalizerConfig(kappa=0.3, rho=4.5, z=(0.5, 0.5))
    dd = DiracData(pattern, cfg.z)
    hq, _ = build_model("qwz_2d", {"m": 1.0}, pattern)
    Hq = spectral_flatten(hq)
    val = evaluate_index(assemble_even(Hq, dd, cfg)).value
    ha, syma = build_model("aii_2d", {"m": 1.0}, pattern)
    Ha = spectral_flatten(ha)
    L = assemble_skew_aii(Ha, dd, cfg, syma)
    href, symr = build_model("trivial_reference", {"n": 4}, pattern)
    Lref = assemble_skew_aii(spectral_flatten(href), dd, cfg, symr)
    z2 = evaluate_index(L, reference=Lref).value
    return val == 1 and z2 == -1, f"qwz m=1 -> {val}, aii m=1 -> Z2 {z2}"


def _repro_check():
    pattern = build_cubic_window(2, 5)
    h, sym = build_model("aii_2d", {"m": 1.0}, pattern)
    a = apply_disorder(h, DisorderSpec(strength=0.5, seed=42), sym)
    b = apply_disorder(h, DisorderSpec(strength=0.5, seed=42), sym)
    same = all(np.array_equal(a.blocks[k], b.blocks[k]) for k in a.blocks)
    return same, "same seed -> bitwise-identical disorder"


def run_all():
    checks = [
        ("clifford relations d=1..6", _clifford_check),
        ("inertia and pfaffian", _linalg_check),
        ("model symmetry relations", _model_symmetry_check),
        ("dirac geometry", _dirac_check),
        ("spectral flattening", _flatten_check),
        ("index sanity (clean models)", _index_check),
        ("disorder reproducibility", _repro_check),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as e:  # a selfcheck must report, not crash
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append((name, bool(ok), detail))
    return out
