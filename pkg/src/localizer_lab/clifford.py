"""Recursive irreducible representation of the complex Clifford algebra.

Generators gamma_1..gamma_d are hermitian unitaries with {gamma_i, gamma_j} =
2 delta_ij, built so that odd-indexed generators are real and even-indexed ones
purely imaginary.  On top of the generators we expose the real structure
operators Sigma, SigmaHat and Omega used to classify symmetry-adapted
localizers, and the chiral grading gamma_0 for even dimension.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CliffordRep",
    "CliffordSymmetryOps",
    "build_clifford_rep",
    "symmetry_ops",
    "clifford_vector",
]

_REL_TOL = 1e-14


@dataclass(frozen=True)
class CliffordRep:
    """Generators of the d-dimensional complex Clifford algebra."""

    d: int
    matrix_size: int
    generators: tuple  # d hermitian unitary matrices, size matrix_size

    def __post_init__(self):
        if len(self.generators) != self.d:
            raise ValueError("generator count does not match dimension")


@dataclass(frozen=True)
class CliffordSymmetryOps:
    """Real symmetry operators attached to a Clifford representation.

    Sigma exists for every d; SigmaHat, Omega and the chiral grading gamma_0
    only for even d.  Sigma / SigmaHat are real unitaries but flip between
    symmetric and antisymmetric depending on d mod 8; the algebraic relations
    below are the normative content, so we record the observed structure
    instead of asserting a fixed one.
    """

    d: int
    Sigma: np.ndarray
    SigmaHat: np.ndarray | None
    Omega: np.ndarray | None
    chiral: np.ndarray | None
    sigma_symmetric: bool = field(default=True)


def _validate_generators(gens, d):
    size = gens[0].shape[0]
    for i, g in enumerate(gens):
        if np.abs(g - g.conj().T).max() > _REL_TOL:
            raise AssertionError(f"gamma_{i+1} not hermitian")
        parity = np.abs(g.imag).max() if i % 2 == 0 else np.abs(g.real).max()
        if parity > _REL_TOL:
            raise AssertionError(f"gamma_{i+1} violates real/imaginary parity")
    for i in range(d):
        for j in range(d):
            anti = gens[i] @ gens[j] + gens[j] @ gens[i]
            target = 2.0 * np.eye(size) if i == j else np.zeros((size, size))
            if np.abs(anti - target).max() > _REL_TOL:
                raise AssertionError(f"Clifford relation fails for ({i+1},{j+1})")


def build_clifford_rep(d):
    """Recursive construction: start from (1) in d=1, extend odd d to d+2 by

        gamma_i -> [[0, gamma_i], [gamma_i, 0]]        (i = 1..d)
        gamma_{d+1} = [[0, i], [-i, 0]]   gamma_{d+2} = diag(1, -1)

    and obtain even d by dropping the last generator of the (d+1)-dimensional
    representation.  The appended-generator indices are validated against the
    Clifford relations and the real/imaginary parity convention rather than
    trusted on faith.
    """
    d = int(d)
    if d <= 0:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if d % 2 == 0:
        odd = build_clifford_rep(d + 1)
        gens = odd.generators[:d]
        _validate_generators(gens, d)
        return CliffordRep(d=d, matrix_size=odd.matrix_size, generators=gens)
    if d == 1:
        gens = (np.ones((1, 1), dtype=complex),)
        return CliffordRep(d=1, matrix_size=1, generators=gens)
    prev = build_clifford_rep(d - 2)
    k = prev.matrix_size
    zero = np.zeros((k, k), dtype=complex)
    eye = np.eye(k, dtype=complex)
    gens = [np.block([[zero, g], [g, zero]]) for g in prev.generators]
    gens.append(np.block([[zero, 1j * eye], [-1j * eye, zero]]))
    gens.append(np.block([[eye, zero], [zero, -eye]]))
    gens = tuple(gens)
    _validate_generators(gens, d)
    return CliffordRep(d=d, matrix_size=2 * k, generators=gens)


def clifford_vector(rep, x):
    """X = sum_j x_j gamma_j for a real coefficient vector x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (rep.d,):
        raise ValueError("coefficient vector has wrong length")
    X = np.zeros((rep.matrix_size, rep.matrix_size), dtype=complex)
    for xj, g in zip(x, rep.generators):
        X += xj * g
    return X


def symmetry_ops(rep):
    """Sigma = i^floor(d/2) gamma_2 gamma_4 ..., SigmaHat = (-1)^floor(d/2)
    gamma_1 gamma_3 ... and Omega = i^floor(d/2) gamma_1 ... gamma_d.

    Relations (entrywise, validated in the test suite on random vectors):
        Sigma* conj(X) Sigma = (-1)^floor(d/2) X
        even d:  SigmaHat* conj(X) SigmaHat = -(-1)^floor(d/2) X
                 Omega* X Omega = -X
                 gamma_0 = i^(d/2) gamma_1...gamma_d = diag(1, -1) blocks
    """
    d = rep.d
    size = rep.matrix_size
    half = d // 2

    sigma = np.eye(size, dtype=complex)
    for g in rep.generators[1::2]:
        sigma = sigma @ g
    sigma = (1j**half) * sigma
    if np.abs(sigma.imag).max() > _REL_TOL:
        raise AssertionError("Sigma failed to come out real")
    sigma = sigma.real.copy()
    sig_sym = np.abs(sigma - sigma.T).max() <= _REL_TOL

    sigma_hat = None
    omega = None
    chiral = None
    if d % 2 == 0:
        sh = np.eye(size, dtype=complex)
        for g in rep.generators[0::2]:
            sh = sh @ g
        sh = ((-1.0) ** half) * sh
        if np.abs(sh.imag).max() > _REL_TOL:
            raise AssertionError("SigmaHat failed to come out real")
        sigma_hat = sh.real.copy()

        om = np.eye(size, dtype=complex)
        for g in rep.generators:
            om = om @ g
        omega = (1j**half) * om
        chiral = omega.copy()
        ref = np.diag(np.concatenate([np.ones(size // 2), -np.ones(size // 2)]))
        if np.abs(chiral - ref).max() > _REL_TOL:
            raise AssertionError("chiral grading is not diag(1,-1) in this basis")
    return CliffordSymmetryOps(
        d=d,
        Sigma=sigma,
        SigmaHat=sigma_hat,
        Omega=omega,
        chiral=chiral,
        sigma_symmetric=bool(sig_sym),
    )
