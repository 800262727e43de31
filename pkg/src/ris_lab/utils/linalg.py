"""Complex dense-matrix primitives shared by the channel, environment and learning code.

numpy ``complex128`` arrays are the matrix carrier, ``float64`` arrays the real-vector
carrier. Vector encodings stack columns (column-major) with the real block first and the
imaginary block second; network inputs, outputs, states and actions all use that layout.
"""

import numpy as np
import numpy.typing as npt
import scipy.linalg

from ris_lab.core.errors import DimensionMismatchError, FactorizationError, NotHermitianError

CMatrix = npt.NDArray[np.complex128]
RealVector = npt.NDArray[np.float64]

HERMITIAN_TOL = 1e-9


def as_cmatrix(x: npt.ArrayLike) -> CMatrix:
    """Coerce to a 2-D complex128 array (vectors become columns)."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatchError("as_cmatrix", arr.shape)
    return arr


def matmul(a: CMatrix, b: CMatrix) -> CMatrix:
    a, b = as_cmatrix(a), as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError("matmul", a.shape, b.shape)
    return a @ b


def conj_transpose(a: CMatrix) -> CMatrix:
    return np.ascontiguousarray(as_cmatrix(a).conj().T)


def frob_norm_sq(x: npt.ArrayLike) -> float:
    arr = np.asarray(x)
    return float(np.sum(arr.real**2 + arr.imag**2))


def is_hermitian(x: CMatrix, tol: float = HERMITIAN_TOL) -> bool:
    """Hermitian within ``tol`` relative to the Frobenius norm of ``x``."""
    x = as_cmatrix(x)
    if x.shape[0] != x.shape[1]:
        return False
    scale = np.sqrt(frob_norm_sq(x))
    return float(np.sqrt(frob_norm_sq(x - x.conj().T))) <= tol * scale


def _require_hermitian(x: CMatrix, operation: str) -> CMatrix:  # Validate and symmetrize a Hermitian operand !!!
    x = as_cmatrix(x)
    if x.shape[0] != x.shape[1]:
        raise DimensionMismatchError(operation, x.shape)
    if not np.all(np.isfinite(x)):
        raise NotHermitianError(f"{operation}: input has non-finite entries")
    if not is_hermitian(x):
        raise NotHermitianError(f"{operation}: input is not Hermitian within {HERMITIAN_TOL:g}")
    return 0.5 * (x + x.conj().T)


def hermitian_eig(x: CMatrix) -> tuple[RealVector, CMatrix]:
    """Eigenvalues in descending order and the matching unitary eigenvector matrix."""
    xs = _require_hermitian(x, "hermitian_eig")
    eigenvalues, eigenvectors = scipy.linalg.eigh(xs)
    return eigenvalues[::-1].copy(), np.ascontiguousarray(eigenvectors[:, ::-1])


def logdet_capacity(x: CMatrix) -> float:
    """log2 det of a Hermitian positive-definite matrix, in bits."""
    xs = _require_hermitian(x, "logdet_capacity")
    try:
        chol = scipy.linalg.cholesky(xs, lower=True)
        return float(2.0 * np.sum(np.log2(np.real(np.diag(chol)))))
    except scipy.linalg.LinAlgError:
        # Cholesky breaks down on nearly singular input; eigenvalues decide definiteness
        eigenvalues = scipy.linalg.eigvalsh(xs)
        if eigenvalues.min() <= 0.0:
            raise FactorizationError(
                f"logdet_capacity: matrix is not positive definite (min eigenvalue {eigenvalues.min():.3e})"
            ) from None
        return float(np.sum(np.log2(eigenvalues)))


def logdet_capacity_batch(x: npt.NDArray[np.complex128]) -> RealVector:
    """log2 det for a stack of Hermitian positive-definite matrices shaped (B, K, K)."""
    xs = 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))
    try:
        chol = np.linalg.cholesky(xs)
        return 2.0 * np.sum(np.log2(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
    except np.linalg.LinAlgError:
        eigenvalues = np.linalg.eigvalsh(xs)
        if eigenvalues.min() <= 0.0:
            raise FactorizationError("logdet_capacity_batch: a matrix in the stack is not positive definite") from None
        return np.sum(np.log2(eigenvalues), axis=-1)


def hermitian_sqrt(x: CMatrix) -> CMatrix:
    """Principal square root of a Hermitian PSD matrix (negative eigenvalues clipped to zero)."""
    eigenvalues, eigenvectors = hermitian_eig(x)
    roots = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (eigenvectors * roots) @ eigenvectors.conj().T


def complex_to_realvec(x: npt.ArrayLike) -> RealVector:
    """Column-stacked real parts followed by column-stacked imaginary parts."""
    arr = as_cmatrix(x)
    return np.concatenate([arr.real.ravel(order="F"), arr.imag.ravel(order="F")])


def realvec_to_complex(v: npt.ArrayLike, rows: int, cols: int) -> CMatrix:
    """Inverse of :func:`complex_to_realvec`; bit-exact round trip."""
    vec = np.asarray(v, dtype=np.float64)
    size = rows * cols
    if vec.ndim != 1 or vec.shape[0] != 2 * size:
        raise DimensionMismatchError("realvec_to_complex", vec.shape, (2 * size,))
    out = np.empty((rows, cols), dtype=np.complex128)
    out.real = vec[:size].reshape((rows, cols), order="F")
    out.imag = vec[size:].reshape((rows, cols), order="F")
    return out
