"""Dense complex linear algebra on bipartite qudit systems.

Heisenberg-Weyl shift/clock operators, Kronecker products, partial
transposition, trace norms and Hermitian spectra.  All matrices are plain
``numpy`` arrays of dtype ``complex128``; bipartite index order is
``|i>_A |j>_B -> i * d_B + j``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

ATOL = 1e-10


class BipartiteDims(NamedTuple):
    """Local dimensions of a bipartite system, ordered so that ``d_A <= d_B``."""

    d_A: int
    d_B: int

    @classmethod
    def of(cls, d_A: int, d_B: int) -> "BipartiteDims":
        d_A, d_B = int(d_A), int(d_B)
        if d_A < 1 or d_B < 1:
            raise ValueError(f"invalid dimensions ({d_A}, {d_B})")
        if d_A > d_B:
            raise ValueError(f"dimensions must satisfy d_A <= d_B, got ({d_A}, {d_B})")
        return cls(d_A, d_B)

    @property
    def total(self) -> int:
        return self.d_A * self.d_B


def as_dims(dims) -> BipartiteDims:
    if isinstance(dims, BipartiteDims):
        return dims
    return BipartiteDims.of(*dims)


def _check_dim(d: int) -> int:
    d = int(d)
    if d < 1:
        raise ValueError(f"invalid dimension {d}")
    return d


def as_matrix(m) -> np.ndarray:
    """Convert to a 2-D complex array, rejecting NaN/Inf entries."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def shift(d: int) -> np.ndarray:
    """Shift operator ``X|i> = |i+1 mod d>``."""
    d = _check_dim(d)
    return np.roll(np.eye(d, dtype=complex), 1, axis=0)


def clock(d: int, root: int | None = None) -> np.ndarray:
    """Clock operator ``Z|i> = w^i |i>`` with ``w = exp(2 pi i / root)``.

    ``root`` defaults to ``d``; passing a different root gives the modified
    clock used for unequal local dimensions.
    """
    d = _check_dim(d)
    root = d if root is None else _check_dim(root)
    return np.diag(np.exp(2j * np.pi * np.arange(d) / root))


def hw_operator(d: int, mu: int, nu: int) -> np.ndarray:
    """Heisenberg-Weyl operator ``X^mu Z^nu`` on a ``d``-level system."""
    d = _check_dim(d)
    mu, nu = int(mu) % d, int(nu) % d
    phases = np.exp(2j * np.pi * nu * np.arange(d) / d)
    out = np.zeros((d, d), dtype=complex)
    cols = np.arange(d)
    out[(cols + mu) % d, cols] = phases
    return out


def modified_clock(d_A: int, d_B: int, nu: int) -> np.ndarray:
    """``Z~^nu`` on the ``d_A``-level system, with ``Z~|i> = w_B^i |i>``."""
    d_A, d_B = _check_dim(d_A), _check_dim(d_B)
    nu = int(nu) % d_B
    return np.diag(np.exp(2j * np.pi * nu * np.arange(d_A) / d_B))


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def trace_norm(m) -> float:
    """Sum of the singular values of ``m``."""
    m = np.asarray(m, dtype=complex)
    try:
        s = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"SVD failed: {exc}") from exc
    return float(np.sum(s))


def trace_norms(stack: np.ndarray) -> np.ndarray:
    """Batched trace norm over the leading axes of ``stack``."""
    try:
        s = np.linalg.svd(stack, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"SVD failed: {exc}") from exc
    return s.sum(axis=-1)


def partial_transpose(rho, dims, subsystem: str = "B") -> np.ndarray:
    """Transpose one tensor factor of a bipartite operator."""
    dims = as_dims(dims)
    rho = as_matrix(rho)
    n = dims.total
    if rho.shape != (n, n):
        raise ValueError(f"operator of shape {rho.shape} does not match dims {tuple(dims)}")
    t = rho.reshape(dims.d_A, dims.d_B, dims.d_A, dims.d_B)
    if subsystem == "A":
        t = t.transpose(2, 1, 0, 3)
    elif subsystem == "B":
        t = t.transpose(0, 3, 2, 1)
    else:
        raise ValueError(f"subsystem must be 'A' or 'B', got {subsystem!r}")
    return t.reshape(n, n)


def hermitian_part(m, atol: float = ATOL) -> np.ndarray:
    """Return ``(M + M^dag) / 2``; reject ``M`` that is not Hermitian up to ``atol``."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.conj().T)) > atol:
        raise ValueError("matrix is not Hermitian")
    return (m + m.conj().T) / 2


def eigvalsh(m, atol: float = ATOL) -> np.ndarray:
    return np.linalg.eigvalsh(hermitian_part(m, atol))


def min_eigenvalue_hermitian(m, atol: float = ATOL) -> float:
    """Smallest eigenvalue of a Hermitian matrix."""
    return float(eigvalsh(m, atol)[0])
