"""Finite-volume spectral localizers and index evaluation.

Three assemblers share one recipe: restrict the (flattened) Hamiltonian to the
ball selected by the Dirac data, couple it to kappa * D0, and wrap the result
in the structure class the index formula needs.

  even (d = 2, class A):    L = [[ H, k D0^*], [k D0, -H]]     index = +Sig/2
  odd  (d = 1, class AIII): L = [[k D, H0^*], [H0, -k D]]      index = -Sig/2
  skew (d = 2, class AII):  i R L_even R^*, real skew,
                            index = sgn Pf x sgn Pf(reference) in {+1, -1}

Sign conventions are pinned by momentum-space oracles in the test suite
(plaquette Chern number for even, winding number for odd, and the phase
diagram of the spin model for the skew form).
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .dirac import DiracData, WindowExhausted, ball_projection, commutator_norm, d0_values
from .linalg import (
    GapFloorError,
    StructuredMatrix,
    inertia,
    pfaffian_sign,
    symmetric_unitary_sqrt,
)

__all__ = [
    "LocalizerConfig", "LocalizerMatrix", "IndexValue", "AdmissibleParams",
    "IndexUndefinedError", "assemble_even", "assemble_odd", "assemble_skew_aii",
    "evaluate_index", "localizer_gap_check", "admissible_params",
    "restrict_to_ball", "export_localizer",
]

GAP_FLOOR = 1e-8


class IndexUndefinedError(ArithmeticError):
    """Localizer not invertible at tolerance: index undefined here."""


@dataclass(frozen=True)
class LocalizerConfig:
    kappa: float
    rho: float
    z: tuple
    r: float = 0.0
    reference_model: str = "trivial_reference"
    allow_exhausted: bool = False

    def __post_init__(self):
        if self.kappa <= 0 or self.rho <= 0:
            raise ValueError("kappa and rho must be positive")


@dataclass
class LocalizerMatrix:
    structured: StructuredMatrix
    az_class: str
    kind: str                    # "even" | "odd" | "skew_aii"
    ball: object                 # BallSelection
    site_indices: np.ndarray     # pattern-order sites entering the localizer
    kappa: float
    rho: float
    z: tuple
    r: float
    fiber_dim: int
    provenance: dict = field(default_factory=dict)

    @property
    def matrix(self):
        return self.structured.matrix

    @property
    def dim(self):
        return self.structured.matrix.shape[0]

    def site_fingerprint(self):
        """Equality of this fingerprint is the normalization contract between
        a localizer and its reference: same pattern, offset, ball, ordering,
        and rescaling (kappa is allowed to differ)."""
        return (
            tuple(np.asarray(self.site_indices, dtype=int).tolist()),
            self.z,
            round(self.rho, 12),
            round(self.r, 12),
            self.fiber_dim,
            self.kind,
        )


@dataclass
class IndexValue:
    kind: str                    # "Z" | "Z2"
    value: int
    localizer_gap: float
    admissibility: dict = field(default_factory=dict)
    guaranteed: bool = False


def _ball_sites(H, dd, cfg):
    """Ball selection wired to the flattening window: returns the pattern-order
    site indices of the ball and their positions inside H's window."""
    sel = ball_projection(dd, cfg.rho)
    if sel.exhausted and not cfg.allow_exhausted:
        raise WindowExhausted(
            f"rho ball (Euclidean radius {sel.euclid_radius:.2f}) reaches the window edge; "
            "pass allow_exhausted=True only when the whole pattern is the intended universe"
        )
    window_pos = {int(g): i for i, g in enumerate(np.asarray(H.site_indices, dtype=int))}
    pos = []
    for g in sel.site_indices:
        p = window_pos.get(int(g))
        if p is None:
            raise ValueError("localizer ball is not contained in the flattening window")
        pos.append(p)
    return sel, np.asarray(sel.site_indices, dtype=int), np.asarray(pos, dtype=int)


def _fiber_expand(pos, n):
    return (np.repeat(pos * n, n) + np.tile(np.arange(n), len(pos))).astype(int)


def _restrict(H, pos):
    idx = _fiber_expand(pos, H.n)
    return np.ascontiguousarray(H.matrix[np.ix_(idx, idx)])


def restrict_to_ball(H, dd, cfg):
    """Shrink a flattened Hamiltonian to the localizer ball.

    Every assembler only reads the ball block, so a caller holding a much
    larger flattening window can swap it for this restriction and release the
    window before assembly.  Gap and norm metadata (properties of the full
    window) are carried over unchanged.
    """
    from .lattice import Region
    from .operators import FlattenedHamiltonian

    sel, ball_idx, pos = _ball_sites(H, dd, cfg)
    return FlattenedHamiltonian(
        matrix=_restrict(H, pos),
        site_indices=ball_idx,
        n=H.n,
        pattern=H.pattern,
        gap=H.gap,
        window=Region.explicit(ball_idx),
        hnorm=H.hnorm,
        spectrum_radius=H.spectrum_radius,
    )


def assemble_even(H, dd, cfg, provenance=None):
    """Hermitian even localizer on the rho ball; d = 2 only."""
    if dd.pattern.d != 2:
        raise NotImplementedError("even localizer implemented for d = 2")
    sel, ball_idx, pos = _ball_sites(H, dd, cfg)
    Hb = _restrict(H, pos)
    d0 = d0_values(dd, ball_idx)
    diag = cfg.kappa * np.repeat(d0, H.n)
    L = np.block([
        [Hb, np.diag(diag.conj())],
        [np.diag(diag), -Hb],
    ])
    sm = StructuredMatrix(L, "hermitian")
    return LocalizerMatrix(
        structured=sm, az_class="A", kind="even", ball=sel, site_indices=ball_idx,
        kappa=cfg.kappa, rho=cfg.rho, z=dd.z, r=dd.r, fiber_dim=H.n,
        provenance=dict(provenance or {}),
    )


def assemble_odd(H, dd, cfg, sym=None, provenance=None, chiral_tol=1e-10):
    """Hermitian odd localizer for chiral (AIII) Hamiltonians; d = 1 only.

    The fiber grading is the standard balanced J = diag(+1_{n/2}, -1_{n/2});
    H must be off-diagonal in it (checked).  H0 is the (-,+) block.
    """
    if dd.pattern.d != 1:
        raise NotImplementedError("odd localizer implemented for d = 1")
    n = H.n
    if n % 2:
        raise ValueError("chiral fiber must be even-dimensional")
    h = n // 2
    sel, ball_idx, pos = _ball_sites(H, dd, cfg)
    Hb = _restrict(H, pos)
    S = len(pos)
    Hblk = Hb.reshape(S, n, S, n)
    diag_violation = max(
        float(np.abs(Hblk[:, :h, :, :h]).max()),
        float(np.abs(Hblk[:, h:, :, h:]).max()),
    )
    if diag_violation > chiral_tol:
        raise ValueError(
            f"Hamiltonian is not off-diagonal in the chiral grading (violation {diag_violation:.3e})"
        )
    H0 = np.ascontiguousarray(Hblk[:, h:, :, :h]).reshape(S * h, S * h)
    dvals = dd.displacements(ball_idx)[:, 0]
    w = (1.0 + dvals ** 2) ** (-dd.r / 2.0)
    kD = cfg.kappa * np.repeat(dvals * w, h)
    L = np.block([
        [np.diag(kD).astype(complex), H0.conj().T],
        [H0, -np.diag(kD).astype(complex)],
    ])
    sm = StructuredMatrix(L, "hermitian")
    return LocalizerMatrix(
        structured=sm, az_class="AIII", kind="odd", ball=sel, site_indices=ball_idx,
        kappa=cfg.kappa, rho=cfg.rho, z=dd.z, r=dd.r, fiber_dim=n,
        provenance=dict(provenance or {}),
    )


def _skew_rotation(n, T):
    """R (x) 1_sites data for the AII skew form: R = sqrt of Q = [[0,u],[-u,0]]
    on (grading 2) x (fiber n), u the real matrix of the standard T."""
    u = np.asarray(T)
    if np.abs(u.imag).max() > 1e-13:
        raise ValueError("standard AII time-reversal matrix is expected to be real")
    u = u.real
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, n:] = u
    Q[n:, :n] = -u
    R = symmetric_unitary_sqrt(Q)
    return R


def assemble_skew_aii(H, dd, cfg, sym, provenance=None, structure_tol=1e-10):
    """Real skew localizer for class AII in d = 2.

    Site-major layout: per site an (grading 2) x (fiber n) cell holding
    [[H, k conj(d0)], [k d0, -H]], conjugated by 1_sites (x) R and multiplied
    by i.  The conjugation is applied cellwise through precontracted tensors
    (never materializing 1_sites (x) R), and the real and imaginary parts of
    i R L R^* are accumulated separately — the imaginary part vanishing and
    the real part being skew IS the operational check of the underlying
    quaternionic symmetry; failure is a hard error.
    """
    if dd.pattern.d != 2:
        raise NotImplementedError("skew localizer implemented for d = 2")
    if sym is None or sym.T is None:
        raise ValueError("class AII symmetry data with T is required")
    n = H.n
    sel, ball_idx, pos = _ball_sites(H, dd, cfg)
    Hb = _restrict(H, pos)
    S = len(pos)
    d0 = d0_values(dd, ball_idx)
    R = _skew_rotation(n, sym.T)

    # cell maps under M  ->  R (s (x) M) R^*  for the grading structures that
    # occur: s = diag(1,-1) carrying the Hamiltonian block, and the two
    # off-grading units carrying kappa d0 / kappa conj(d0).
    Rg = R.reshape(2 * n, 2, n)
    sgn = np.array([1.0, -1.0])
    T1 = np.einsum("g,uga,vgb->uvab", sgn, Rg, Rg.conj())          # (2n,2n,n,n)
    K01 = np.einsum("ua,va->uv", Rg[:, 0, :], Rg[:, 1, :].conj())  # E01 (x) 1_n
    K10 = np.einsum("ua,va->uv", Rg[:, 1, :], Rg[:, 0, :].conj())  # E10 (x) 1_n

    Hblk = Hb.reshape(S, n, S, n)
    HR = np.ascontiguousarray(Hblk.real)
    HI = np.ascontiguousarray(Hblk.imag)
    del Hb, Hblk
    two_n = 2 * n
    # site-diagonal d0 cells: i * kappa * (conj(c) K01 + c K10), split into the
    # real-part (A) and imaginary-part (B) responses to Re c and Im c.
    A_re = -(K01.imag + K10.imag)
    A_im = K01.real - K10.real
    B_re = K01.real + K10.real
    B_im = K01.imag - K10.imag
    # i * (T1 . H): real part = -(T1i.HR + T1r.HI), imag part = T1r.HR - T1i.HI.
    # Work in site-row chunks so the imaginary part (which must vanish) is
    # checked without ever being held whole.
    LA = np.empty((S, two_n, S, two_n))
    chunk = max(1, int(2 ** 27) // max(1, S * two_n * two_n * 8))
    buf = np.empty((min(chunk, S), two_n, S, two_n))
    re_err = 0.0
    for a in range(0, S, chunk):
        b = min(a + chunk, S)
        ids = np.arange(a, b)
        blk = LA[a:b]
        np.einsum("uvab,xayb->xuyv", T1.imag, HR[a:b], out=blk, optimize=True)
        blk += np.einsum("uvab,xayb->xuyv", T1.real, HI[a:b], optimize=True)
        blk *= -1.0
        blk[ids - a, :, ids, :] += cfg.kappa * (
            d0.real[ids, None, None] * A_re + d0.imag[ids, None, None] * A_im
        )
        w = buf[: b - a]
        np.einsum("uvab,xayb->xuyv", T1.real, HR[a:b], out=w, optimize=True)
        w -= np.einsum("uvab,xayb->xuyv", T1.imag, HI[a:b], optimize=True)
        w[ids - a, :, ids, :] += cfg.kappa * (
            d0.real[ids, None, None] * B_re + d0.imag[ids, None, None] * B_im
        )
        re_err = max(re_err, float(np.abs(w).max()))
    del HR, HI, buf
    dim = S * two_n
    LA = LA.reshape(dim, dim)
    skew_err = float(np.abs(LA + LA.T).max())
    scale = max(1.0, float(np.abs(LA).max()))
    if re_err > structure_tol * scale or skew_err > structure_tol * scale:
        raise AssertionError(
            f"skew localizer failed its structure check (imag {re_err:.3e}, skew {skew_err:.3e}): "
            "symmetry data inconsistent with the Hamiltonian"
        )
    sm = StructuredMatrix(LA, "real-skew")
    del LA
    prov = dict(provenance or {})
    prov.update(structure_errors={"imag": re_err, "skew": skew_err})
    return LocalizerMatrix(
        structured=sm, az_class="AII", kind="skew_aii", ball=sel, site_indices=ball_idx,
        kappa=cfg.kappa, rho=cfg.rho, z=dd.z, r=dd.r, fiber_dim=n,
        provenance=prov,
    )


def _min_abs_eig(mat, hermitian=True, dense_cutoff=2600, tol=1e-9):
    """min |eigenvalue| of a hermitian matrix (or i * skew), dense or Lanczos
    on the square."""
    dim = mat.shape[0]
    if dim <= dense_cutoff:
        A = mat if hermitian else 1j * mat
        return float(np.abs(np.linalg.eigvalsh(A)).min())
    if hermitian:
        op = LinearOperator((dim, dim), matvec=lambda x: mat @ (mat @ x), dtype=complex)
    else:
        # (iS)^2 = -S S for real skew S; avoids a complex copy of S
        op = LinearOperator((dim, dim), matvec=lambda x: -(mat @ (mat @ x)), dtype=mat.dtype)
    w = eigsh(op, k=1, which="SA", tol=tol, return_eigenvectors=False)
    w0 = float(w[0])
    return float(np.sqrt(max(w0, 0.0)))


def evaluate_index(L, reference=None, gap_floor=GAP_FLOOR, compute_gap=True):
    """Index of a localizer: signature for the hermitian kinds, normalized
    Pfaffian sign for the skew kind (reference mandatory, same fingerprint)."""
    if L.kind in ("even", "odd"):
        if reference is not None:
            raise ValueError("Z-valued kinds take no reference")
        try:
            n_pos, n_neg, gap = inertia(L.structured, gap_floor=gap_floor)
        except GapFloorError as e:
            raise IndexUndefinedError(
                f"localizer not invertible at tolerance (min |eig| {e.gap:.3e}); "
                "index undefined at this configuration"
            ) from e
        sig = n_pos - n_neg
        if sig % 2:
            raise AssertionError(f"odd signature {sig}: localizer dimension/structure bug")
        value = sig // 2 if L.kind == "even" else -(sig // 2)
        return IndexValue(kind="Z", value=int(value), localizer_gap=float(gap))
    if L.kind == "skew_aii":
        if reference is None:
            raise ValueError("Z2 evaluation requires a reference localizer")
        if reference.site_fingerprint() != L.site_fingerprint():
            raise ValueError(
                "reference localizer was built with a different (pattern, offset, ball, "
                "ordering, rescale) — normalization contract violated"
            )
        s_val = pfaffian_sign(L.structured)
        s_ref = pfaffian_sign(reference.structured)
        gap = _min_abs_eig(L.matrix, hermitian=False) if compute_gap else float("nan")
        if compute_gap and gap < gap_floor:
            raise IndexUndefinedError(
                f"skew localizer not invertible at tolerance (min |eig| {gap:.3e})"
            )
        return IndexValue(kind="Z2", value=int(s_val * s_ref), localizer_gap=float(gap))
    raise ValueError(f"unknown localizer kind {L.kind!r}")


def localizer_gap_check(L, g):
    """Guaranteed-regime check: min singular value >= g/2.

    Failure marks the run "outside guaranteed regime" rather than aborting;
    plateau-stable indices are routinely correct outside it.
    """
    hermitian = L.kind in ("even", "odd")
    min_sv = _min_abs_eig(L.matrix, hermitian=hermitian)
    return {
        "passed": bool(min_sv >= g / 2.0),
        "min_singular_value": float(min_sv),
        "threshold": float(g / 2.0),
        "source_gap": float(g),
    }


@dataclass
class AdmissibleParams:
    kappa_max: float
    rho_min_of_kappa_max: float
    commutator_norm: float
    hamiltonian_norm: float
    gap: float
    suggested: tuple  # (kappa, rho) just inside the bounds

    def rho_min(self, kappa):
        return 2.0 * self.gap / kappa


def admissible_params(H, dd, g, hnorm=None, margin=0.98):
    """Conservative guaranteed (kappa, rho) bounds from measured quantities:
    kappa < g^3/(12 |H| |[D,H]|) and rho > 2 g / kappa."""
    if g <= 0:
        raise ValueError("gap must be positive")
    C = commutator_norm(dd, H, 0.0)
    if hnorm is None:
        dim = H.matrix.shape[0]
        if dim <= 1500:
            hnorm = float(np.linalg.norm(H.matrix, 2))
        else:
            w = eigsh(H.matrix, k=1, which="LM", tol=1e-9, return_eigenvectors=False)
            hnorm = float(abs(w[0]))
    kappa_max = g ** 3 / (12.0 * hnorm * C)
    kappa = margin * kappa_max
    rho = (2.0 - margin) * 2.0 * g / kappa
    return AdmissibleParams(
        kappa_max=float(kappa_max),
        rho_min_of_kappa_max=float(2.0 * g / kappa_max),
        commutator_norm=float(C),
        hamiltonian_norm=float(hnorm),
        gap=float(g),
        suggested=(float(kappa), float(rho)),
    )


def export_localizer(L, path):
    """Dump the dense matrix with a self-describing header for external checks."""
    header = {
        "class": L.az_class,
        "kind": L.kind,
        "kappa": L.kappa,
        "rho": L.rho,
        "z": list(L.z),
        "r": L.r,
        "fiber_dim": L.fiber_dim,
        "structure": L.structured.structure,
        "provenance": {k: v for k, v in L.provenance.items() if isinstance(v, (str, int, float))},
    }
    np.savez_compressed(path, matrix=L.matrix, header=json.dumps(header))
    return header
