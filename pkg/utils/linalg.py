"""
Small complex linear-algebra helpers shared by the physical-layer modules.

vec() is column-major throughout, so vec(U^H H W) = (W^T kron U^H) vec(H).
"""

from typing import Tuple

import numpy as np
import scipy.linalg


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Draw circularly-symmetric CN(0, variance) samples."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def herm(matrix: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(matrix, -1, -2))


def hermitian_part(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + herm(matrix))


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major vectorization of the last two axes."""
    leading = matrix.shape[:-2]
    rows, cols = matrix.shape[-2:]
    return np.swapaxes(matrix, -1, -2).reshape(*leading, rows * cols)


def unvec(vector: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of vec() for the last axis."""
    leading = vector.shape[:-1]
    return np.swapaxes(vector.reshape(*leading, cols, rows), -1, -2)


def eigh_descending(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending."""
    values, vectors = scipy.linalg.eigh(hermitian_part(matrix))
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Return S with S S^H = matrix for a (batched) Hermitian PSD input.

    Negative eigenvalues from round-off are clipped to zero.
    """
    values, vectors = np.linalg.eigh(hermitian_part(matrix))
    return vectors * np.sqrt(np.clip(values, 0.0, None))[..., None, :]


def sample_from_covariance(rng: np.random.Generator, sqrt_factor: np.ndarray,
                           n_samples: int) -> np.ndarray:
    """Draw n_samples CN(0, S S^H) vectors for a batch of factors S.

    Returns an array shaped (n_samples, *batch, dim).
    """
    dim = sqrt_factor.shape[-1]
    batch = sqrt_factor.shape[:-2]
    white = complex_normal(rng, (n_samples, *batch, dim))
    return np.einsum("...ab,s...b->s...a", sqrt_factor, white)


def is_psd(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    """True when the Hermitian part has no eigenvalue below -tol * trace."""
    values = np.linalg.eigvalsh(hermitian_part(matrix))
    scale = max(float(np.abs(np.trace(matrix))), 1e-300)
    return bool(np.all(values >= -tol * scale))
