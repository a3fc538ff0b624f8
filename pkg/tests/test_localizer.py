import numpy as np
import pytest

import oracles
from localizer_lab.lattice import build_cubic_window
from localizer_lab.linalg import StructuredMatrix
from localizer_lab.operators import build_model, spectral_flatten, standard_symmetry_ops
from localizer_lab.dirac import DiracData, WindowExhausted, d0_values
from localizer_lab.localizer import (
    IndexUndefinedError,
    LocalizerConfig,
    LocalizerMatrix,
    admissible_params,
    assemble_even,
    assemble_odd,
    assemble_skew_aii,
    evaluate_index,
    export_localizer,
    localizer_gap_check,
    restrict_to_ball,
)

Z = (0.5, 0.5)


def flattened(model, m, hw=8):
    pat = build_cubic_window(2, hw)
    h, sym = build_model(model, {"m": m}, pat)
    return spectral_flatten(h), sym, pat


# ----------------------------------------------------------------- layouts


def test_even_localizer_layout():
    H, _, pat = flattened("qwz_2d", 1.0, hw=5)
    dd = DiracData(pat, Z)
    cfg = LocalizerConfig(kappa=0.37, rho=3.0, z=Z)
    L = assemble_even(H, dd, cfg)
    # manual global-halves construction
    from localizer_lab.localizer import _ball_sites, _restrict

    sel, ball_idx, pos = _ball_sites(H, dd, cfg)
    Hb = _restrict(H, pos)
    d0 = np.repeat(d0_values(dd, ball_idx), H.n)
    manual = np.block(
        [
            [Hb, cfg.kappa * np.diag(d0.conj())],
            [cfg.kappa * np.diag(d0), -Hb],
        ]
    )
    assert np.abs(L.matrix - manual).max() < 1e-14
    assert np.abs(L.matrix - L.matrix.conj().T).max() < 1e-14
    assert L.kind == "even" and L.fiber_dim == H.n


def test_odd_localizer_layout():
    pat = build_cubic_window(1, 12)
    h, sym = build_model("ssh_1d", {"m": 2.0}, pat)
    H = spectral_flatten(h)
    dd = DiracData(pat, (0.5,))
    cfg = LocalizerConfig(kappa=0.4, rho=6.0, z=(0.5,))
    L = assemble_odd(H, dd, cfg, sym=sym)
    from localizer_lab.localizer import _ball_sites, _restrict

    sel, ball_idx, pos = _ball_sites(H, dd, cfg)
    Hb = _restrict(H, pos)
    S = len(pos)
    blk = Hb.reshape(S, 2, S, 2)
    H0 = blk[:, 1, :, 0].reshape(S, S)  # chiral lower-left block
    disp = dd.displacements(ball_idx)[:, 0]
    kD = cfg.kappa * np.diag(disp)
    manual = np.block([[kD, H0.conj().T], [H0, -kD]])
    assert np.abs(L.matrix - manual).max() < 1e-14


def test_odd_localizer_rejects_nonchiral_input():
    pat = build_cubic_window(1, 10)
    h, sym = build_model("ssh_1d", {"m": 0.5}, pat)
    h2 = h.copy()
    h2.add_onsite(pat.index_of((0.0,)), 0.2 * np.diag([1.0, -1.0]))  # breaks the grading
    idx = np.arange(len(pat))

    class Raw:
        matrix = h2.dense(idx)
        site_indices = idx
        n = 2
        pattern = pat

    dd = DiracData(pat, (0.5,))
    cfg = LocalizerConfig(kappa=0.4, rho=5.0, z=(0.5,))
    with pytest.raises(ValueError, match="chiral grading"):
        assemble_odd(Raw(), dd, cfg, sym=sym)


def test_skew_localizer_structure_guard():
    # feed symmetry data inconsistent with the Hamiltonian: a T-broken model
    pat = build_cubic_window(2, 4)
    h, sym = build_model("aii_2d", {"m": 1.0}, pat)
    h2 = h.copy()
    h2.add_onsite(5, 0.4 * np.diag([1.0, -1.0, 0.0, 0.0]))  # hermitian, breaks T
    H = spectral_flatten(h2)
    dd = DiracData(pat, Z)
    cfg = LocalizerConfig(kappa=0.3, rho=3.0, z=Z)
    with pytest.raises(AssertionError, match="structure"):
        assemble_skew_aii(H, dd, cfg, sym)


def test_dimension_guards():
    H, sym, pat = flattened("aii_2d", 1.0, hw=4)
    dd1 = DiracData(build_cubic_window(1, 4), (0.5,))
    cfg = LocalizerConfig(kappa=0.3, rho=2.0, z=(0.5,))
    with pytest.raises(NotImplementedError):
        assemble_even(H, dd1, cfg)
    with pytest.raises(NotImplementedError):
        assemble_skew_aii(H, dd1, cfg, sym)
    dd2 = DiracData(pat, Z)
    cfg2 = LocalizerConfig(kappa=0.3, rho=2.0, z=Z)
    with pytest.raises(NotImplementedError):
        assemble_odd(H, dd2, cfg2, sym=sym)


# ------------------------------------------------------------ index values


def test_even_index_matches_chern_oracle():
    cfg = LocalizerConfig(kappa=0.3, rho=4.5, z=Z)
    for m in (1.0, -1.0, 3.0, -3.0):
        H, _, pat = flattened("qwz_2d", m)
        dd = DiracData(pat, Z)
        L = assemble_even(H, dd, cfg)
        res = evaluate_index(L)
        assert res.kind == "Z"
        assert res.value == oracles.qwz_chern(m, N=48)
        assert res.localizer_gap > 0.5


def test_skew_index_matches_z2_oracle():
    cfg = LocalizerConfig(kappa=0.3, rho=4.5, z=Z)
    for m in (1.0, -1.0, 3.0, -3.0):
        H, sym, pat = flattened("aii_2d", m)
        dd = DiracData(pat, Z)
        L = assemble_skew_aii(H, dd, cfg, sym)
        href, sref = build_model("trivial_reference", {"n": 4}, pat)
        Lref = assemble_skew_aii(spectral_flatten(href), dd, cfg, sref)
        res = evaluate_index(L, reference=Lref)
        assert res.kind == "Z2"
        assert res.value == oracles.aii_z2(m, N=48)


def test_odd_index_matches_winding_oracle(raw_window):
    pat = build_cubic_window(1, 30)
    dd = DiracData(pat, (0.5,))
    cfg = LocalizerConfig(kappa=0.3, rho=15.0, z=(0.5,))
    for m in (0.5, -0.5, 0.8, 1.5, 2.0):
        h, sym = build_model("ssh_1d", {"m": m}, pat)
        L = assemble_odd(raw_window(h), dd, cfg, sym=sym)
        res = evaluate_index(L)
        assert res.value == oracles.ssh_winding(m)


def test_z2_requires_matching_reference():
    H, sym, pat = flattened("aii_2d", 1.0, hw=6)
    dd = DiracData(pat, Z)
    cfg = LocalizerConfig(kappa=0.3, rho=3.5, z=Z)
    L = assemble_skew_aii(H, dd, cfg, sym)
    with pytest.raises(ValueError, match="reference"):
        evaluate_index(L)
    href, sref = build_model("trivial_reference", {"n": 4}, pat)
    Href = spectral_flatten(href)
    Lref_small = assemble_skew_aii(Href, dd, LocalizerConfig(kappa=0.3, rho=3.0, z=Z), sref)
    with pytest.raises(ValueError, match="normalization contract"):
        evaluate_index(L, reference=Lref_small)
    # kappa is NOT part of the fingerprint: same ball, different coupling is fine
    Lref_kappa = assemble_skew_aii(Href, dd, LocalizerConfig(kappa=0.35, rho=3.5, z=Z), sref)
    res = evaluate_index(L, reference=Lref_kappa)
    assert res.value == -1


def test_z_kinds_take_no_reference():
    H, _, pat = flattened("qwz_2d", 1.0, hw=5)
    dd = DiracData(pat, Z)
    cfg = LocalizerConfig(kappa=0.3, rho=3.0, z=Z)
    L = assemble_even(H, dd, cfg)
    with pytest.raises(ValueError, match="no reference"):
        evaluate_index(L, reference=L)


def _wrap_hermitian(mat, kind="even"):
    return LocalizerMatrix(
        structured=StructuredMatrix(mat, "hermitian"),
        az_class="A", kind=kind, ball=None,
        site_indices=np.arange(mat.shape[0]), kappa=0.1, rho=1.0,
        z=(0.5, 0.5), r=0.0, fiber_dim=1, provenance={},
    )


def test_index_undefined_on_singular_localizer():
    L = _wrap_hermitian(np.diag([1.0, 0.0, -1.0, -1.0]))
    with pytest.raises(IndexUndefinedError):
        evaluate_index(L)


def test_odd_signature_is_a_hard_bug():
    L = _wrap_hermitian(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(AssertionError, match="odd signature"):
        evaluate_index(L)


def test_sign_conventions_of_the_two_hermitian_kinds():
    M = np.diag([1.0, 1.0, 1.0, -1.0])  # signature +2
    assert evaluate_index(_wrap_hermitian(M, "even")).value == +1
    assert evaluate_index(_wrap_hermitian(M, "odd")).value == -1


# ------------------------------------------------------- guarantees & misc


def test_localizer_gap_check_reports():
    H, _, pat = flattened("qwz_2d", 3.0, hw=6)
    dd = DiracData(pat, Z)
    L = assemble_even(H, dd, LocalizerConfig(kappa=0.3, rho=3.5, z=Z))
    rep = localizer_gap_check(L, H.gap)
    assert set(rep) == {"passed", "min_singular_value", "threshold", "source_gap"}
    assert rep["threshold"] == pytest.approx(H.gap / 2)
    res = evaluate_index(L)
    assert rep["min_singular_value"] == pytest.approx(res.localizer_gap, rel=1e-8)


def test_admissible_params_formulas():
    H, _, pat = flattened("aii_2d", 3.0, hw=6)
    dd = DiracData(pat, Z)
    adm = admissible_params(H, dd, H.gap)
    g, C, hn = adm.gap, adm.commutator_norm, adm.hamiltonian_norm
    assert hn == pytest.approx(1.0, abs=1e-9)  # flattened
    assert adm.kappa_max == pytest.approx(g**3 / (12 * hn * C), rel=1e-12)
    assert adm.rho_min_of_kappa_max == pytest.approx(2 * g / adm.kappa_max, rel=1e-12)
    kap, rho = adm.suggested
    assert kap < adm.kappa_max
    assert rho > adm.rho_min(kap)
    with pytest.raises(ValueError):
        admissible_params(H, dd, 0.0)


def test_window_exhaustion_and_opt_in():
    H, sym, pat = flattened("aii_2d", 3.0, hw=5)
    dd = DiracData(pat, Z)
    with pytest.raises(WindowExhausted):
        assemble_skew_aii(H, dd, LocalizerConfig(kappa=0.3, rho=6.0, z=Z), sym)
    # rho beyond the corner distance: the whole window becomes the ball
    cfg = LocalizerConfig(kappa=0.3, rho=8.0, z=Z, allow_exhausted=True)
    L = assemble_skew_aii(H, dd, cfg, sym)
    assert len(L.site_indices) == len(pat)


def test_restrict_to_ball_is_transparent():
    H, sym, pat = flattened("aii_2d", 1.0, hw=6)
    dd = DiracData(pat, Z)
    cfg = LocalizerConfig(kappa=0.3, rho=3.5, z=Z)
    Hs = restrict_to_ball(H, dd, cfg)
    assert Hs.matrix.shape[0] == 4 * len(Hs.site_indices)
    L1 = assemble_skew_aii(H, dd, cfg, sym)
    L2 = assemble_skew_aii(Hs, dd, cfg, sym)
    assert np.array_equal(L1.matrix, L2.matrix)
    assert L1.site_fingerprint() == L2.site_fingerprint()


def test_config_validation():
    with pytest.raises(ValueError):
        LocalizerConfig(kappa=0.0, rho=1.0, z=Z)
    with pytest.raises(ValueError):
        LocalizerConfig(kappa=0.1, rho=-1.0, z=Z)


def test_export_roundtrip(tmp_path):
    H, _, pat = flattened("qwz_2d", 1.0, hw=5)
    dd = DiracData(pat, Z)
    L = assemble_even(H, dd, LocalizerConfig(kappa=0.3, rho=3.0, z=Z))
    path = tmp_path / "loc.npz"
    header = export_localizer(L, path)
    data = np.load(path, allow_pickle=False)
    assert np.array_equal(data["matrix"], L.matrix)
    import json

    loaded = json.loads(str(data["header"]))
    assert loaded["kind"] == "even" and loaded["kappa"] == 0.3
    assert header["structure"] == "hermitian"
