"""Dense complex linear algebra and entanglement criteria for bipartite states.

All certificates (PPT, realignment, density-matrix validity) run in double
precision regardless of the neural-network engine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidDensityMatrixError,
    NoConvergenceError,
    NonSquareError,
    NotHermitianError,
    ShapeMismatchError,
)

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
PPT_DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class DensityMatrix:
    """A bipartite density matrix with local dimensions (dim_a, dim_b)."""

    dim_a: int
    dim_b: int
    mat: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=np.complex128)
        object.__setattr__(self, "mat", mat)
        n = self.dim_a * self.dim_b
        if mat.shape != (n, n):
            raise DimensionMismatchError(
                f"matrix shape {mat.shape} does not match dims ({self.dim_a}, {self.dim_b})"
            )

    @property
    def dim(self):
        return self.dim_a * self.dim_b

    def validate(self, tol_herm=HERMITICITY_TOL, tol_trace=TRACE_TOL, tol_psd=PSD_TOL):
        """Raise InvalidDensityMatrixError unless Hermitian, unit trace, PSD."""
        m = self.mat
        if not np.all(np.isfinite(m.view(np.float64))):
            raise InvalidDensityMatrixError("non-finite entries")
        herm_defect = np.abs(m - m.conj().T).max()
        if herm_defect > tol_herm:
            raise InvalidDensityMatrixError(f"not Hermitian: defect {herm_defect:.3e}")
        tr = m.trace()
        if abs(tr - 1.0) > tol_trace:
            raise InvalidDensityMatrixError(f"trace {tr} not 1")
        min_eig = hermitian_eigenvalues(m)[0]
        if min_eig < -tol_psd:
            raise InvalidDensityMatrixError(f"not PSD: min eigenvalue {min_eig:.3e}")
        return self

    def is_valid(self, **kwargs):
        try:
            self.validate(**kwargs)
            return True
        except InvalidDensityMatrixError:
            return False


def hermitize(m):
    """Hermitian part (m + m^dag)/2."""
    return (m + m.conj().T) / 2.0


def kron(a, b):
    """Tensor (Kronecker) product."""
    return np.kron(np.asarray(a), np.asarray(b))


def hermitian_eigenvalues(m, herm_tol=1e-8):
    """Ascending real eigenvalues of a Hermitian matrix.

    The matrix is symmetrized before solving; a Hermiticity defect beyond
    herm_tol raises NotHermitianError.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquareError(f"expected a square matrix, got shape {m.shape}")
    defect = np.abs(m - m.conj().T).max()
    if defect > herm_tol:
        raise NotHermitianError(f"Hermiticity defect {defect:.3e} exceeds {herm_tol:.1e}")
    try:
        return np.linalg.eigvalsh(hermitize(m))
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from exc


def partial_transpose(rho, dim_a=None, dim_b=None):
    """Transpose the A subsystem: block (i, j) of the output is block (j, i)."""
    if isinstance(rho, DensityMatrix):
        mat, da, db = rho.mat, rho.dim_a, rho.dim_b
    else:
        mat = np.asarray(rho)
        if dim_a is None or dim_b is None:
            raise DimensionMismatchError("partial_transpose of a bare matrix needs dim_a and dim_b")
        da, db = dim_a, dim_b
    return mat.reshape(da, db, da, db).transpose(2, 1, 0, 3).reshape(da * db, da * db)


def is_ppt(rho, tol=PPT_DEFAULT_TOL):
    """(ppt?, min eigenvalue of the partial transpose)."""
    if isinstance(rho, DensityMatrix):
        pt = partial_transpose(rho)
    else:
        raise DimensionMismatchError("is_ppt requires a DensityMatrix")
    min_eig = float(hermitian_eigenvalues(pt)[0])
    return min_eig >= -tol, min_eig


def realignment_ccnr(rho):
    """Sum of singular values of the realigned matrix; > 1 certifies entanglement."""
    if not isinstance(rho, DensityMatrix):
        raise DimensionMismatchError("realignment_ccnr requires a DensityMatrix")
    if rho.dim_a != rho.dim_b:
        raise DimensionMismatchError("realignment_ccnr requires equal local dimensions")
    da, db = rho.dim_a, rho.dim_b
    realigned = rho.mat.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)
    try:
        return float(np.linalg.svd(realigned, compute_uv=False).sum())
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from exc


def partial_trace(rho, keep):
    """Trace out one subsystem; keep='a' or 'b'."""
    if not isinstance(rho, DensityMatrix):
        raise DimensionMismatchError("partial_trace requires a DensityMatrix")
    da, db = rho.dim_a, rho.dim_b
    t = rho.mat.reshape(da, db, da, db)
    if keep == "a":
        return np.einsum("ikjk->ij", t)
    if keep == "b":
        return np.einsum("kikj->ij", t)
    raise ValueError("keep must be 'a' or 'b'")


def von_neumann_entropy(rho):
    """S = -Tr(rho log rho), natural log, eigenvalues clipped at 0."""
    mat = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    eigs = np.clip(hermitian_eigenvalues(mat), 0.0, None)
    nonzero = eigs[eigs > 0]
    return float(-(nonzero * np.log(nonzero)).sum())


def elementwise_l1(a, b):
    """Mean absolute difference over the two-channel real representation.

    The mean runs over all 2*n*m real scalars (real parts and imaginary
    parts), so real matrices still divide by 2*n*m.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    diff = np.asarray(a, dtype=np.complex128) - np.asarray(b, dtype=np.complex128)
    total = np.abs(diff.real).sum() + np.abs(diff.imag).sum()
    return float(total / (2 * diff.size))
