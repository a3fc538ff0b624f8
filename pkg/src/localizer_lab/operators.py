"""Model Hamiltonians, AZ symmetry data, disorder, and spectral flattening.

Operators are stored blockwise: a map (site index pair) -> n x n fiber block.
The canonical fiber ordering for the spin model is C^2_orbital (x) C^2_TRS
with time reversal acting as 1 (x) i sigma_2 on the fiber (the standard-form
convention); the momentum-space checks in the tests pin the real-space
conventions to the lattice Chern / winding oracles.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh as _dense_eigh
from scipy.sparse.csgraph import connected_components

from .lattice import Pattern, Region

__all__ = [
    "s0", "sx", "sy", "sz",
    "BlockOperator", "SymmetryData", "DisorderSpec", "FlattenedHamiltonian",
    "SymmetryViolation", "ZeroModeError",
    "standard_symmetry_ops", "build_model", "apply_disorder",
    "verify_symmetry", "spectral_flatten", "decay_diagnostic",
    "MODEL_REGISTRY",
]

s0 = np.eye(2, dtype=complex)
sx = np.array([[0, 1], [1, 0]], dtype=complex)
sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
sz = np.array([[1, 0], [0, -1]], dtype=complex)


class SymmetryViolation(ValueError):
    pass


class ZeroModeError(ArithmeticError):
    """Flattening hit a (near-)zero eigenvalue; signals resampling upstream."""

    def __init__(self, min_abs_eig, zero_tol):
        self.min_abs_eig = min_abs_eig
        self.zero_tol = zero_tol
        super().__init__(
            f"zero-mode: min |eigenvalue| {min_abs_eig:.3e} below zero_tol {zero_tol:.3e}"
        )


# ---------------------------------------------------------------------------
# symmetry data


@dataclass(frozen=True)
class SymmetryData:
    az_class: str
    n: int
    T: np.ndarray = None
    P: np.ndarray = None
    J: np.ndarray = None
    s_T: int = 0
    s_P: int = 0


# AZ table, j = 0..7: (class, T entry, P entry, s_T, s_P, minimal fiber).
# Fiber operators on C^n are kron(eye(n/k), entry).  Classes with both T and P
# (odd j) have T conj(P) proportional to the balanced chiral grading.
_AZ_ROWS = {
    "AI":   (np.eye(1), None, +1, 0, 1),
    "BDI":  (np.eye(2), sz, +1, +1, 2),
    "D":    (None, np.eye(1), 0, +1, 1),
    "DIII": (np.kron(sx, 1j * sy), np.kron(sy, 1j * sy), -1, +1, 4),
    "AII":  (1j * sy, None, -1, 0, 2),
    "CII":  (np.kron(s0, sy), np.kron(sz, sy), -1, -1, 4),
    "C":    (None, 1j * sy, 0, -1, 2),
    "CI":   (sx, sy, +1, -1, 2),
}


def standard_symmetry_ops(az_class, n):
    """Standard-form T / P / J for the requested class on a fiber C^n."""
    n = int(n)
    if az_class == "A":
        return SymmetryData(az_class="A", n=n)
    if az_class == "AIII":
        if n % 2:
            raise ValueError("AIII needs an even fiber for a balanced chiral grading")
        J = np.diag(np.concatenate([np.ones(n // 2), -np.ones(n // 2)])).astype(complex)
        return SymmetryData(az_class="AIII", n=n, J=J)
    if az_class not in _AZ_ROWS:
        raise ValueError(f"unknown AZ class {az_class!r}")
    T_ent, P_ent, s_T, s_P, k = _AZ_ROWS[az_class]
    if n % k:
        raise ValueError(f"fiber dimension {n} not divisible by the minimal fiber {k} of {az_class}")
    reps = n // k
    T = np.kron(np.eye(reps), T_ent).astype(complex) if T_ent is not None else None
    P = np.kron(np.eye(reps), P_ent).astype(complex) if P_ent is not None else None
    J = None
    if T is not None and P is not None:
        J = T @ P.conj()
        # normalize the phase so J is a self-adjoint unitary grading with
        # positive leading entry
        tr = np.trace(J @ J)
        phase = np.sqrt(tr / n)
        J = J / phase
        if J[0, 0].real < 0:
            J = -J
        if np.abs(J - J.conj().T).max() > 1e-12:
            raise AssertionError("chiral grading from T conj(P) is not self-adjoint")
    if T is not None:
        assert np.abs(T @ T.conj() - s_T * np.eye(n)).max() < 1e-12
    if P is not None:
        assert np.abs(P @ P.conj() - s_P * np.eye(n)).max() < 1e-12
    return SymmetryData(az_class=az_class, n=n, T=T, P=P, J=J, s_T=s_T, s_P=s_P)


# ---------------------------------------------------------------------------
# block operators


@dataclass
class BlockOperator:
    """Finite hermitian operator on sites x fiber C^n, stored as n x n blocks."""

    pattern: Pattern
    n: int
    blocks: dict  # (i, j) -> (n, n) complex ndarray
    hermitian: bool = True

    def copy(self):
        return BlockOperator(
            pattern=self.pattern,
            n=self.n,
            blocks={k: v.copy() for k, v in self.blocks.items()},
            hermitian=self.hermitian,
        )

    def check_hermitian(self, tol=1e-12):
        worst = 0.0
        for (i, j), b in self.blocks.items():
            other = self.blocks.get((j, i))
            dev = np.abs(b - (other.conj().T if other is not None else 0)).max()
            worst = max(worst, float(dev))
        return worst <= tol, worst

    def dense(self, site_indices=None):
        """Dense matrix on the chosen site subset (parent site order)."""
        if site_indices is None:
            site_indices = np.arange(len(self.pattern))
        site_indices = np.asarray(site_indices, dtype=int)
        pos = {int(g): i for i, g in enumerate(site_indices)}
        m, n = len(site_indices), self.n
        H = np.zeros((m * n, m * n), dtype=complex)
        for (i, j), b in self.blocks.items():
            if i in pos and j in pos:
                ii, jj = pos[i], pos[j]
                H[ii * n : (ii + 1) * n, jj * n : (jj + 1) * n] = b
        return H

    def to_sparse(self):
        n = self.n
        rows, cols, vals = [], [], []
        for (i, j), b in self.blocks.items():
            bi, bj = np.nonzero(b)
            rows.extend(i * n + bi)
            cols.extend(j * n + bj)
            vals.extend(b[bi, bj])
        dim = len(self.pattern) * n
        return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))

    def add_onsite(self, site_index, fiber_block):
        key = (site_index, site_index)
        self.blocks[key] = self.blocks.get(key, np.zeros((self.n, self.n), dtype=complex)) + fiber_block


def _hop_blocks(pattern, hoppings, onsite):
    """Assemble blocks from a dict {displacement tuple: block} plus an on-site
    block; displacements are truncated at the window boundary (open bc)."""
    idx = pattern._index
    blocks = {}
    for i, s in enumerate(pattern.sites):
        blocks[(i, i)] = onsite.copy()
        for disp, hop in hoppings.items():
            t = tuple(s + np.asarray(disp, dtype=float))
            j = idx.get(t)
            if j is not None:
                blocks[(j, i)] = hop.copy()
                blocks[(i, j)] = hop.conj().T.copy()
    return blocks


def _qwz_hoppings(m):
    # one time-reversal sector of the spin model: Chern insulator with
    # sigma_x / sigma_y spin-orbit hopping and an m sigma_z mass
    hop1 = sx / 2j - sz / 2.0
    hop2 = sy / 2j - sz / 2.0
    return {(1.0, 0.0): hop1, (0.0, 1.0): hop2}, m * sz


def _aii_hoppings(m):
    # spin-doubled Chern pair: fiber = C^2_orbital (x) C^2_TRS, the second
    # factor carries time reversal T = 1 (x) i sigma_2
    hop1 = np.kron(sx, sz) / 2j - np.kron(sz, s0) / 2.0
    hop2 = np.kron(sy, s0) / 2j - np.kron(sz, s0) / 2.0
    return {(1.0, 0.0): hop1, (0.0, 1.0): hop2}, m * np.kron(sz, s0)


def build_model(name, params, pattern):
    """Model registry: returns (BlockOperator, SymmetryData)."""
    builder = MODEL_REGISTRY.get(name)
    if builder is None:
        raise ValueError(f"unknown model {name!r}; available: {sorted(MODEL_REGISTRY)}")
    return builder(params or {}, pattern)


def _build_qwz(params, pattern):
    if pattern.d != 2:
        raise ValueError("qwz_2d needs a 2-dimensional pattern")
    m = float(params["m"])
    hops, onsite = _qwz_hoppings(m)
    op = BlockOperator(pattern, 2, _hop_blocks(pattern, hops, onsite))
    return op, standard_symmetry_ops("A", 2)


def _build_aii(params, pattern):
    if pattern.d != 2:
        raise ValueError("aii_2d needs a 2-dimensional pattern")
    m = float(params["m"])
    hops, onsite = _aii_hoppings(m)
    op = BlockOperator(pattern, 4, _hop_blocks(pattern, hops, onsite))
    return op, standard_symmetry_ops("AII", 4)


def _build_ssh(params, pattern):
    if pattern.d != 1:
        raise ValueError("ssh_1d needs a 1-dimensional pattern")
    m = float(params["m"])
    # chiral two-band chain, off-diagonal part H0 = m + right-shift
    onsite = m * sx
    hop = np.array([[0, 0], [1, 0]], dtype=complex)
    op = BlockOperator(pattern, 2, _hop_blocks(pattern, {(1.0,): hop}, onsite))
    return op, standard_symmetry_ops("AIII", 2)


def _build_trivial(params, pattern):
    n = int(params.get("n", 4))
    if n % 2:
        raise ValueError("trivial_reference needs an even fiber")
    fiber = np.kron(sz, np.eye(n // 2)).astype(complex)
    blocks = {(i, i): fiber.copy() for i in range(len(pattern))}
    op = BlockOperator(pattern, n, blocks)
    sym = standard_symmetry_ops("AII", n) if n % 4 == 0 else standard_symmetry_ops("A", n)
    return op, sym


MODEL_REGISTRY = {
    "qwz_2d": _build_qwz,
    "aii_2d": _build_aii,
    "ssh_1d": _build_ssh,
    "trivial_reference": _build_trivial,
}


# ---------------------------------------------------------------------------
# disorder


@dataclass(frozen=True)
class DisorderSpec:
    """On-site i.i.d. disorder; the realization is a pure function of the seed
    and the (deterministic) site order."""

    strength: float
    seed: int
    distribution: str = "uniform01"  # or "centered"
    coupling: np.ndarray = None      # fiber matrix, default identity


def _disorder_values(spec, nsites):
    bits = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(spec.seed))))
    omega = bits.random(nsites)
    if spec.distribution == "uniform01":
        return omega
    if spec.distribution == "centered":
        return omega - 0.5
    raise ValueError(f"unknown disorder distribution {spec.distribution!r}")


def _check_coupling_symmetry(coupling, sym, tol=1e-10):
    """The disorder coupling must preserve every declared symmetry relation."""
    C = coupling
    if sym.T is not None:
        dev = np.abs(sym.T @ C.conj() @ sym.T.conj().T - C).max()
        if dev > tol:
            raise SymmetryViolation(
                f"disorder coupling violates time reversal T conj(C) T* = C (max dev {dev:.3e})"
            )
    if sym.P is not None:
        dev = np.abs(sym.P @ C.conj() @ sym.P.conj().T + C).max()
        if dev > tol:
            raise SymmetryViolation(
                f"disorder coupling violates particle-hole P conj(C) P* = -C (max dev {dev:.3e})"
            )
    if sym.J is not None:
        dev = np.abs(sym.J @ C @ sym.J + C).max()
        if dev > tol:
            raise SymmetryViolation(
                f"disorder coupling violates chiral J C J = -C (max dev {dev:.3e})"
            )


def apply_disorder(h, spec, sym=None):
    """h + strength * sum_x omega_x C (x) |x><x|, seed-deterministic."""
    n = h.n
    C = spec.coupling if spec.coupling is not None else np.eye(n, dtype=complex)
    C = np.asarray(C, dtype=complex)
    if C.shape != (n, n):
        raise ValueError("coupling fiber dimension mismatch")
    if sym is not None:
        _check_coupling_symmetry(C, sym)
    out = h.copy()
    if spec.strength == 0:
        return out
    omega = _disorder_values(spec, len(h.pattern))
    for i in range(len(h.pattern)):
        out.add_onsite(i, spec.strength * omega[i] * C)
    return out


# ---------------------------------------------------------------------------
# symmetry verification


def verify_symmetry(h, sym, tol=1e-12):
    """Evaluate every declared relation blockwise; returns a report dict with
    per-relation max violations and an overall pass flag."""
    relations = {}
    _, herm_dev = h.check_hermitian(tol)
    relations["hermiticity"] = herm_dev
    if sym.T is not None:
        dev = 0.0
        for (i, j), b in h.blocks.items():
            dev = max(dev, float(np.abs(sym.T @ b.conj() @ sym.T.conj().T - b).max()))
        relations["time_reversal"] = dev
    if sym.P is not None:
        dev = 0.0
        for (i, j), b in h.blocks.items():
            dev = max(dev, float(np.abs(sym.P @ b.conj() @ sym.P.conj().T + b).max()))
        relations["particle_hole"] = dev
    if sym.J is not None:
        dev = 0.0
        for (i, j), b in h.blocks.items():
            dev = max(dev, float(np.abs(sym.J @ b @ sym.J + b).max()))
        relations["chiral"] = dev
    passed = all(v <= tol for v in relations.values())
    return {"passed": passed, "tol": tol, "relations": relations}


# ---------------------------------------------------------------------------
# spectral flattening


@dataclass
class FlattenedHamiltonian:
    """sgn(h) restricted to a flattening window, with the gap report."""

    matrix: np.ndarray          # dense, dim = len(site_indices) * n
    site_indices: np.ndarray    # window sites, parent pattern order
    n: int
    pattern: Pattern
    gap: float                  # min |eigenvalue| of the window restriction
    window: Region
    hnorm: float = 1.0          # max |eigenvalue| after flattening (exactly 1)
    spectrum_radius: float = 1.0

    @property
    def dim(self):
        return self.matrix.shape[0]


def _hermitize_inplace(H, step=2048):
    """Symmetrize H <- (H + H*)/2 blockwise in place; returns (max |entry|,
    max hermiticity deviation) without any full-size temporary."""
    dim = H.shape[0]
    scale = 0.0
    dev = 0.0
    for a in range(0, dim, step):
        sa = slice(a, min(a + step, dim))
        diag = H[sa, sa]
        t = diag.conj().T.copy()
        dev = max(dev, float(np.abs(diag - t).max()))
        diag += t
        diag *= 0.5
        scale = max(scale, float(np.abs(diag).max()))
        for b in range(a + step, dim, step):
            sb = slice(b, min(b + step, dim))
            upper = H[sa, sb]
            lower_t = H[sb, sa].conj().T
            dev = max(dev, float(np.abs(upper - lower_t).max()))
            t = 0.5 * (upper + lower_t)
            H[sa, sb] = t
            H[sb, sa] = t.conj().T
            scale = max(scale, float(np.abs(t).max()))
    return scale, dev


def _component_split(H, tol=1e-14):
    """Connected components of the nonzero-entry graph of H; flattening each
    component separately is exact and much cheaper when the Hamiltonian
    decouples (e.g. conserved spin sectors).  The mask is built in row chunks
    so no full-size floating temporary is ever allocated."""
    dim = H.shape[0]
    mask = np.empty(H.shape, dtype=bool)
    step = max(1, int(2 ** 26) // max(1, dim * 16))
    for a in range(0, dim, step):
        np.greater(np.abs(H[a : a + step]), tol, out=mask[a : a + step])
    adj = sp.csr_matrix(mask)
    ncomp, labels = connected_components(adj, directed=False)
    return ncomp, labels


def spectral_flatten(h, window=None, zero_tol=1e-8):
    """H = sgn(h) on the window via dense eigendecomposition.

    Raises ZeroModeError when any |eigenvalue| < zero_tol (ensemble drivers
    treat that as a resample event).  The input operator is unchanged; the
    result carries the realized finite-volume gap g = min |eigenvalue|.
    """
    if window is None:
        window = Region.all()
    site_indices = window.select(h.pattern)
    if len(site_indices) == 0:
        raise ValueError("flattening window selects no sites")
    H = h.dense(site_indices)
    scale, herm_dev = _hermitize_inplace(H)
    if herm_dev > 1e-10 * max(1.0, scale):
        raise ValueError("window restriction is not hermitian")
    gmin = np.inf
    ncomp, labels = _component_split(H)
    # H is exactly block diagonal across components and sgn preserves that
    # structure, so each flattened block can be written back in place.  The
    # MRRR driver keeps the LAPACK workspace linear, and the sign function is
    # formed as 1 - 2 P_minus from the negative-eigenvector slab, so the peak
    # footprint stays near one dense window plus ~1.5 component copies.
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        sub = H if idx.size == H.shape[0] else H[np.ix_(idx, idx)]
        w, V = _dense_eigh(sub, overwrite_a=True, check_finite=False, driver="evr")
        del sub
        gmin = min(gmin, float(np.abs(w).min()))
        if gmin < zero_tol:
            raise ZeroModeError(gmin, zero_tol)
        Vn = np.ascontiguousarray(V[:, w < 0])
        del V
        P = (-2.0 * Vn) @ Vn.conj().T
        del Vn
        P[np.diag_indices_from(P)] += 1.0
        H[np.ix_(idx, idx)] = P
    return FlattenedHamiltonian(
        matrix=H,
        site_indices=site_indices,
        n=h.n,
        pattern=h.pattern,
        gap=float(gmin),
        window=window,
        hnorm=1.0,
        spectrum_radius=1.0,
    )


# ---------------------------------------------------------------------------
# decay diagnostics


def decay_diagnostic(H, k_list=(1, 2, 4)):
    """Off-diagonal decay table of a flattened Hamiltonian.

    For each integer separation bin s the site-pair average of the fiber-block
    operator norm over |x - y| in [s, s+1); also returns the weighted moment
    sup_s <s>^k avg(s) for each k and a fitted exponential rate from a
    log-linear fit (positive rate = decay per unit distance).
    """
    sites = H.pattern.sites[H.site_indices]
    m = len(sites)
    n = H.n
    blocks = H.matrix.reshape(m, n, m, n)
    dist = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=2)
    norms = np.linalg.norm(blocks.transpose(0, 2, 1, 3), axis=(2, 3), ord=2)
    bins = np.floor(dist).astype(int)
    smax = bins.max()
    seps, avgs, counts = [], [], []
    for s in range(smax + 1):
        mask = bins == s
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        seps.append(s)
        counts.append(cnt)
        avgs.append(float(norms[mask].mean()))
    seps = np.asarray(seps)
    avgs = np.asarray(avgs)
    moments = {
        int(k): float(np.max(((1.0 + seps.astype(float) ** 2) ** (k / 2.0)) * avgs))
        for k in k_list
    }
    pos = (seps >= 1) & (avgs > 1e-300)
    rate = float("nan")
    if pos.sum() >= 2:
        slope, _ = np.polyfit(seps[pos], np.log(avgs[pos]), 1)
        rate = float(-slope)
    return {
        "separations": seps,
        "averages": avgs,
        "counts": np.asarray(counts),
        "moments": moments,
        "fitted_rate": rate,
    }
