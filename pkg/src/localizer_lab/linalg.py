"""Structured dense factorizations: inertia, Pfaffian sign, unitary roots.

All localizer matrices at desk scale are handled dense.  The Pfaffian sign
uses Parlett-Reid elimination (skew-symmetric tridiagonalization) with partial
pivoting and permutation-parity tracking; the rank-2 updates are accumulated
per panel and applied as two GEMMs, which keeps the elimination BLAS-3 without
changing the arithmetic.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "StructuredMatrix",
    "StructureError",
    "GapFloorError",
    "SingularPfaffianError",
    "inertia",
    "pfaffian_sign",
    "symmetric_unitary_sqrt",
]


class StructureError(ValueError):
    pass


class GapFloorError(ArithmeticError):
    """Matrix not invertible at the requested tolerance."""

    def __init__(self, gap, floor):
        self.gap = gap
        self.floor = floor
        super().__init__(f"not invertible at tolerance: min |eigenvalue| {gap:.3e} < gap floor {floor:.3e}")


class SingularPfaffianError(ArithmeticError):
    """Pfaffian vanished at working tolerance."""


_STRUCTURES = ("hermitian", "real-symmetric", "real-skew")


@dataclass
class StructuredMatrix:
    """Dense square matrix with a declared structure.

    The constructor symmetrizes (averages the matrix with its structural
    transform) and records the pre-symmetrization violation, so floating-point
    assembly noise cannot flip the structure classification downstream.
    """

    matrix: np.ndarray
    structure: str
    violation: float = 0.0

    def __post_init__(self):
        if self.structure not in _STRUCTURES:
            raise StructureError(f"unknown structure {self.structure!r}")
        M = np.asarray(self.matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise StructureError("matrix must be square")
        scale = max(1.0, np.abs(M).max())
        if self.structure == "hermitian":
            sym = 0.5 * (M + M.conj().T)
        elif self.structure == "real-symmetric":
            if np.iscomplexobj(M) and np.abs(M.imag).max() > 1e-10 * scale:
                raise StructureError("declared real-symmetric but has imaginary entries")
            M = M.real if np.iscomplexobj(M) else M
            sym = 0.5 * (M + M.T)
        else:  # real-skew
            if np.iscomplexobj(M) and np.abs(M.imag).max() > 1e-10 * scale:
                raise StructureError("declared real-skew but has imaginary entries")
            M = M.real if np.iscomplexobj(M) else M
            sym = 0.5 * (M - M.T)
        self.violation = float(np.abs(M - sym).max())
        if self.violation > 1e-10 * scale:
            raise StructureError(
                f"structure violation {self.violation:.3e} exceeds tolerance for {self.structure}"
            )
        self.matrix = sym

    @property
    def dim(self):
        return self.matrix.shape[0]


def _as_matrix(M, structure=None):
    if isinstance(M, StructuredMatrix):
        return M.matrix, M.structure
    return np.asarray(M), structure


def inertia(M, gap_floor=0.0):
    """(n_plus, n_minus, gap) of a hermitian matrix via eigendecomposition.

    gap is min |eigenvalue|; raises GapFloorError below the floor, which is
    how inadmissible (kappa, rho) configurations surface downstream.
    """
    A, structure = _as_matrix(M, "hermitian")
    if structure not in (None, "hermitian", "real-symmetric"):
        raise StructureError("inertia requires a hermitian matrix")
    if np.abs(A - A.conj().T).max() > 1e-8 * max(1.0, np.abs(A).max()):
        raise StructureError("matrix is not hermitian")
    ev = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    gap = float(np.abs(ev).min()) if len(ev) else 0.0
    if gap < gap_floor:
        raise GapFloorError(gap, gap_floor)
    n_plus = int(np.sum(ev > 0))
    n_minus = int(np.sum(ev < 0))
    return n_plus, n_minus, gap


def ldl_inertia(M):
    """Inertia via the Bunch-Kaufman factorization; independent cross-check of
    the eigendecomposition route (both must agree on invertible input)."""
    A, _ = _as_matrix(M)
    A = np.asarray(A, dtype=complex)
    _, D, _ = scipy.linalg.ldl(0.5 * (A + A.conj().T))
    n = D.shape[0]
    n_plus = n_minus = 0
    i = 0
    while i < n:
        if i + 1 < n and abs(D[i + 1, i]) > 1e-14 * max(1.0, abs(D[i, i])):
            block = D[i : i + 2, i : i + 2]
            ev = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
            n_plus += int(np.sum(ev > 0))
            n_minus += int(np.sum(ev < 0))
            i += 2
        else:
            v = D[i, i].real
            if v > 0:
                n_plus += 1
            elif v < 0:
                n_minus += 1
            i += 1
    return n_plus, n_minus


def pfaffian_sign(M, panel=64, return_log=False):
    """Sign of the Pfaffian of a real skew-symmetric matrix.

    Parlett-Reid elimination with partial pivoting: step k eliminates column k
    below row k+1 with a Gauss congruence, the pivot row is chosen by largest
    modulus and the row/column swap parity flips the sign.  The Pfaffian is
    the product of the resulting tridiagonal superdiagonal entries at even k
    times the permutation parity.  Rank-2 updates are deferred panel-wise into
    two GEMMs; the arithmetic is identical to the unblocked elimination.
    """
    A, structure = _as_matrix(M, "real-skew")
    if structure not in (None, "real-skew"):
        raise StructureError("pfaffian_sign requires a real skew-symmetric matrix")
    n = A.shape[0]
    if n % 2 != 0:
        raise StructureError(f"Pfaffian undefined for odd dimension {n}")
    scale = np.abs(A).max()
    if np.abs(A + A.T).max() > 1e-10 * max(1.0, scale):
        raise StructureError("matrix is not skew-symmetric at tolerance")
    if n == 0:
        return (1, 0.0) if return_log else 1
    if scale == 0.0:
        raise SingularPfaffianError("zero matrix")
    A = np.array(0.5 * (A - A.T), dtype=float, copy=True)
    sign = 1.0
    logabs = 0.0
    tiny = 1e-13 * scale
    k0 = 0
    while k0 < n - 2:
        b = min(panel, n - 2 - k0)
        T = np.zeros((n, b))  # accumulated Gauss vectors
        V = np.zeros((n, b))  # accumulated pivot rows
        for j in range(b):
            k = k0 + j
            col = A[:, k] + V[:, :j] @ T[k, :j] - T[:, :j] @ V[k, :j]
            p = k + 1 + int(np.argmax(np.abs(col[k + 1 :])))
            if p != k + 1:
                A[[k + 1, p], :] = A[[p, k + 1], :]
                A[:, [k + 1, p]] = A[:, [p, k + 1]]
                T[[k + 1, p], :] = T[[p, k + 1], :]
                V[[k + 1, p], :] = V[[p, k + 1], :]
                col[[k + 1, p]] = col[[p, k + 1]]
                sign = -sign
            piv = col[k + 1]
            if k % 2 == 0:
                # superdiagonal entry of the final tridiagonal form is -piv
                t = -piv
                if abs(t) <= tiny:
                    raise SingularPfaffianError(
                        f"Pfaffian factor {t:.3e} at step {k} is zero at tolerance"
                    )
                logabs += np.log(abs(t))
                if t < 0.0:
                    sign = -sign
            if piv != 0.0:
                tau = np.zeros(n)
                tau[k + 2 :] = col[k + 2 :] / piv
                vrow = A[k + 1, :] + V[k + 1, :j] @ T[:, :j].T - T[k + 1, :j] @ V[:, :j].T
                T[:, j] = tau
                V[:, j] = vrow
        r = slice(k0 + b, n)
        A[r, r] += V[r, :] @ T[r, :].T - T[r, :] @ V[r, :].T
        k0 += b
    t = A[n - 2, n - 1]
    if abs(t) <= tiny:
        raise SingularPfaffianError(f"final Pfaffian factor {t:.3e} is zero at tolerance")
    logabs += np.log(abs(t))
    if t < 0.0:
        sign = -sign
    result = int(np.sign(sign))
    return (result, float(logabs)) if return_log else result


def symmetric_unitary_sqrt(Q, tol=1e-10):
    """Unitary R with R = R^T and R^2 = Q, for symmetric unitary Q.

    R is built by functional calculus on the spectral projections of Q with
    the principal branch sqrt(e^{i theta}) = e^{i theta/2}, theta in (-pi,pi],
    which is deterministic and basis-free (no eigenvector tie-breaking).
    A symmetric root forces Q = R R = R^T R^T = Q^T, so skew-symmetric input
    is rejected: no such R exists.
    """
    Q = np.asarray(Q, dtype=complex)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise StructureError("Q must be square")
    n = Q.shape[0]
    err_u = np.abs(Q @ Q.conj().T - np.eye(n)).max()
    if err_u > 1e-8:
        raise StructureError(f"Q is not unitary at tolerance (deviation {err_u:.3e})")
    skew = np.abs(Q + Q.T).max()
    sym = np.abs(Q - Q.T).max()
    if sym > tol:
        if skew <= tol:
            raise StructureError(
                "Q is skew-symmetric: a symmetric square root R would force "
                "Q = R^2 to be symmetric, so no such R exists"
            )
        raise StructureError(f"Q is not symmetric at tolerance (deviation {sym:.3e})")
    Q = 0.5 * (Q + Q.T)

    if np.abs(Q.imag).max() <= 1e-12 and np.abs(Q - Q.conj().T).max() <= 1e-12:
        # real symmetric unitary: spectrum in {+1, -1}; R = P_+ + i P_-
        w, U = np.linalg.eigh(Q.real)
        root = np.where(w > 0, 1.0 + 0.0j, 1j)
        R = (U * root) @ U.T
    else:
        # complex symmetric unitary (normal): cluster the unitary spectrum and
        # assemble spectral projections via the complex Schur form
        Tm, Z = scipy.linalg.schur(Q, output="complex")
        w = np.diag(Tm)
        theta = np.angle(w)  # in (-pi, pi]
        root = np.exp(0.5j * theta)
        R = (Z * root) @ Z.conj().T

    R = 0.5 * (R + R.T)
    err_sq = np.abs(R @ R - Q).max()
    err_sym = np.abs(R - R.T).max()
    if err_sq > tol or err_sym > tol:
        raise StructureError(
            f"square-root construction failed: |R^2-Q|={err_sq:.3e}, |R-R^T|={err_sym:.3e}"
        )
    return R
