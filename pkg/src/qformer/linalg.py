"""Dense matrix/vector kernels: norms, power-of-two padding, unitary dilation.

All matrices are plain ``numpy.ndarray`` values (row-major, complex or real
doubles).  Functions here are pure and never mutate their arguments.
"""

from __future__ import annotations

import numpy as np

from .errors import FactorTooSmallError, InvalidInputError


def as_matrix(a) -> np.ndarray:
    """Validate and return a 2-D array with finite entries."""
    m = np.asarray(a)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(f"expected a nonempty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has non-finite entries")
    return m


def as_vector(v) -> np.ndarray:
    """Validate and return a 1-D array with finite entries."""
    x = np.asarray(v)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError(f"expected a nonempty 1-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("vector has non-finite entries")
    return x


def spectral_norm(a) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(as_matrix(a), 2))


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entry magnitudes."""
    return float(np.linalg.norm(as_matrix(a)))


def max_entry_norm(a) -> float:
    """Largest entry magnitude; never exceeds the spectral norm."""
    return float(np.max(np.abs(as_matrix(a))))


def next_pow2(k: int) -> int:
    if k < 1:
        raise InvalidInputError("dimension must be positive")
    return 1 << (k - 1).bit_length()


def is_pow2(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


def pad_pow2(a) -> np.ndarray:
    """Zero-pad both dimensions to the next powers of two.

    The original block sits at the top left; padding leaves spectral and
    Frobenius norms unchanged.
    """
    m = as_matrix(a)
    rows, cols = m.shape
    r2, c2 = next_pow2(rows), next_pow2(cols)
    if (r2, c2) == (rows, cols):
        return m.copy()
    out = np.zeros((r2, c2), dtype=m.dtype)
    out[:rows, :cols] = m
    return out


def pad_pow2_vector(v) -> np.ndarray:
    x = as_vector(v)
    n2 = next_pow2(x.size)
    if n2 == x.size:
        return x.copy()
    out = np.zeros(n2, dtype=x.dtype)
    out[: x.size] = x
    return out


def unitary_dilation(a, alpha: float) -> np.ndarray:
    """Embed A/alpha as the top-left block of a unitary twice the size.

        U = [[A/α, sqrt(I - AA†/α²)],
             [sqrt(I - A†A/α²), -A†/α]]

    Requires square A with power-of-two dimension and alpha >= ||A||.  Both
    square roots are taken in the singular basis of A/α with the singular
    values clamped into [0, 1]; sharing one decomposition keeps the
    off-diagonal cancellation exact even when alpha equals the norm.
    """
    m = as_matrix(a).astype(complex)
    n = m.shape[0]
    if m.shape[0] != m.shape[1] or not is_pow2(n):
        raise InvalidInputError("dilation needs a square power-of-two matrix")
    if alpha <= 0:
        raise FactorTooSmallError("alpha must be positive")
    norm = spectral_norm(m)
    if alpha < norm * (1 - 1e-9):
        raise FactorTooSmallError(f"alpha={alpha} is below the spectral norm {norm}")
    w, s, vh = np.linalg.svd(m / alpha)
    s = np.clip(s, 0.0, 1.0)
    c = np.sqrt(1.0 - s**2)
    v = vh.conj().T
    top_left = (w * s) @ vh
    top_right = (w * c) @ w.conj().T
    bottom_left = (v * c) @ vh
    bottom_right = -(v * s) @ w.conj().T
    return np.block([[top_left, top_right], [bottom_left, bottom_right]])
