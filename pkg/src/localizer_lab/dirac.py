"""Position-space Dirac operators: offsets, fractional rescaling, ball
projections, and commutator norms against dense Hamiltonians.

The operator is D = sum_j gamma_j (x) (X_j - z_j) with an offset z off the
site set; the rescaled variant D^(r) = D (1 + D^2)^(-r/2) acts sitewise as
gamma . (x-z) times (1 + |x-z|^2)^(-r/2) because D^2 is the diagonal weight.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, eigsh

from .clifford import CliffordRep, build_clifford_rep, clifford_vector
from .lattice import OFFSET_GUARD, Pattern, check_offset

__all__ = [
    "DiracData", "DiracMatrix", "BallSelection", "WindowExhausted",
    "dirac_matrix", "d0_values", "ball_projection", "commutator_norm",
    "rescale_profile",
]


class WindowExhausted(RuntimeError):
    """The requested ball reaches the simulation window edge."""


@dataclass(frozen=True)
class DiracData:
    pattern: Pattern
    z: tuple
    rep: CliffordRep = None
    r: float = 0.0
    guard: float = OFFSET_GUARD

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        object.__setattr__(self, "z", z)
        if len(z) != self.pattern.d:
            raise ValueError("offset dimension does not match the pattern")
        if not (0.0 <= self.r < 1.0):
            raise ValueError("rescale exponent r must lie in [0, 1)")
        check_offset(self.pattern, z, guard=self.guard)
        if self.rep is None:
            object.__setattr__(self, "rep", build_clifford_rep(self.pattern.d))
        elif self.rep.d != self.pattern.d:
            raise ValueError("Clifford representation dimension mismatch")

    def displacements(self, site_indices=None):
        sites = self.pattern.sites
        if site_indices is not None:
            sites = sites[np.asarray(site_indices, dtype=int)]
        return sites - np.asarray(self.z)


def rescale_profile(s, r):
    """f_r(s) = s (1 + s^2)^(-r/2); strictly increasing on [0, inf) for r < 1."""
    s = np.asarray(s, dtype=float)
    return s * (1.0 + s * s) ** (-r / 2.0)


@dataclass
class DiracMatrix:
    """Per-site gamma.(x-z) blocks, optionally rescaled.

    For even d the representation is chirally graded (the last recursive
    generator is diag(+1, -1) blocks), so each site block is off-diagonal;
    d0_blocks holds the upper-right quadrants (scalars for d = 2).
    """

    site_indices: np.ndarray
    blocks: np.ndarray           # (S, s, s) hermitian per-site blocks
    d0_blocks: np.ndarray = None  # (S, s/2, s/2) for even d, else None
    r: float = 0.0

    def dense(self):
        S, s, _ = self.blocks.shape
        D = np.zeros((S * s, S * s), dtype=complex)
        for i in range(S):
            D[i * s : (i + 1) * s, i * s : (i + 1) * s] = self.blocks[i]
        return D


def dirac_matrix(dd, site_subset=None):
    if site_subset is None:
        site_subset = np.arange(len(dd.pattern))
    site_subset = np.asarray(site_subset, dtype=int)
    if site_subset.size == 0:
        raise ValueError("empty site subset")
    disp = dd.displacements(site_subset)
    w = (1.0 + (disp ** 2).sum(axis=1)) ** (-dd.r / 2.0)
    s = dd.rep.matrix_size
    blocks = np.zeros((len(site_subset), s, s), dtype=complex)
    for i in range(len(site_subset)):
        blocks[i] = clifford_vector(dd.rep, disp[i] * w[i])
    d0_blocks = None
    if dd.pattern.d % 2 == 0:
        half = s // 2
        d0_blocks = blocks[:, :half, half:].copy()
        if np.abs(blocks[:, :half, :half]).max() > 1e-14 or np.abs(blocks[:, half:, half:]).max() > 1e-14:
            raise AssertionError("even-d Clifford block is not chirally off-diagonal")
    return DiracMatrix(site_indices=site_subset, blocks=blocks, d0_blocks=d0_blocks, r=dd.r)


def d0_values(dd, site_indices=None):
    """Scalar D0 per site for d = 2: (x1-z1) + i(x2-z2), rescaled by w_r."""
    if dd.pattern.d != 2:
        raise ValueError("scalar D0 values exist only for d = 2")
    disp = dd.displacements(site_indices)
    w = (1.0 + (disp ** 2).sum(axis=1)) ** (-dd.r / 2.0)
    return (disp[:, 0] + 1j * disp[:, 1]) * w


@dataclass(frozen=True)
class BallSelection:
    site_indices: np.ndarray
    rho: float
    euclid_radius: float
    exhausted: bool


def ball_projection(dd, rho):
    """Sites with f_r(|x - z|) <= rho, in pattern order.

    f_r is strictly increasing, so the selection is the Euclidean ball of
    radius f_r^{-1}(rho); the selection is flagged exhausted when that radius
    reaches the window edge (the projection then truncates at the boundary
    and downstream localizer runs must opt in explicitly).
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if dd.r == 0.0:
        radius = float(rho)
    else:
        hi = max(2.0, (2.0 * rho) ** (1.0 / (1.0 - dd.r)) + 2.0)
        while rescale_profile(hi, dd.r) < rho:
            hi *= 2.0
        radius = float(brentq(lambda t: rescale_profile(t, dd.r) - rho, 0.0, hi))
    dist = np.linalg.norm(dd.displacements(), axis=1)
    inside = np.flatnonzero(rescale_profile(dist, dd.r) <= rho)
    exhausted = radius > dd.pattern.in_radius(dd.z)
    return BallSelection(site_indices=inside, rho=float(rho), euclid_radius=radius, exhausted=bool(exhausted))


def _commutator_operator(dd, H, site_indices, n, s_weight):
    """LinearOperator for [D^(r), 1 (x) H] . w^s on (gamma) x (site x fiber).

    Blockwise K_{xy} = gamma.(v_r(x) - v_r(y)) (x) H_{xy} w(y)^s, applied via
    d (hadamard) products with the dense H: for each axis k,
    (Delta_k o H) u = d_k * (H u) - H (d_k * u).
    """
    disp = dd.displacements(site_indices)
    w_r = (1.0 + (disp ** 2).sum(axis=1)) ** (-dd.r / 2.0)
    dvals = disp * w_r[:, None]                      # (S, d) rescaled coordinates
    w_s = (1.0 + (disp ** 2).sum(axis=1)) ** (-s_weight / 2.0)
    S = len(site_indices)
    sg = dd.rep.matrix_size
    gammas = dd.rep.generators
    dim = sg * S * n

    d_site = [np.repeat(dvals[:, k], n) for k in range(dd.pattern.d)]
    ws_site = np.repeat(w_s, n)

    def hadamard(k, u):
        return d_site[k] * (H @ u) - H @ (d_site[k] * u)

    def matvec(x):
        X = x.reshape(sg, S * n)
        Xw = X * ws_site if s_weight else X
        out = np.zeros_like(X)
        for k in range(dd.pattern.d):
            hk = np.stack([hadamard(k, Xw[a]) for a in range(sg)])
            out += gammas[k] @ hk
        return out.reshape(dim)

    def rmatvec(x):
        # adjoint: w^s on the left, hadamard blocks conjugate-transposed
        X = x.reshape(sg, S * n)
        out = np.zeros_like(X)
        for k in range(dd.pattern.d):
            hk = np.stack([H @ (d_site[k] * Xa) - d_site[k] * (H @ Xa) for Xa in X])
            out += gammas[k].conj().T @ hk
        if s_weight:
            out = out * ws_site
        return out.reshape(dim)

    return LinearOperator((dim, dim), matvec=matvec, rmatvec=rmatvec, dtype=complex), dim


def commutator_norm(dd, H, s_weight=0.0, tol=1e-8, dense_cutoff=1200):
    """Operator norm of [D^(r), H] w^s on H's window.

    H is a FlattenedHamiltonian or any object with .matrix, .site_indices, .n;
    a bare (matrix, site_indices, n) triple is also accepted.  Dense SVD below
    dense_cutoff site-fiber dimensions, Lanczos on K*K above.
    """
    if hasattr(H, "matrix"):
        mat, site_indices, n = H.matrix, H.site_indices, H.n
    else:
        mat, site_indices, n = H
    site_indices = np.asarray(site_indices, dtype=int)
    op, dim = _commutator_operator(dd, mat, site_indices, n, s_weight)
    if dim <= dense_cutoff:
        K = op @ np.eye(dim, dtype=complex)
        return float(np.linalg.norm(K, 2))
    gram = LinearOperator((dim, dim), matvec=lambda x: op.rmatvec(op.matvec(x)), dtype=complex)
    w = eigsh(gram, k=1, which="LA", tol=tol, return_eigenvectors=False)
    return float(np.sqrt(max(float(w[0]), 0.0)))
