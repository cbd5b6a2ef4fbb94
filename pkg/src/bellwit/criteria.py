"""Correlation matrices and trace-norm separability criteria.

The local operator bases are the Heisenberg-Weyl operators in the order
``B_i^A = X^(i // d_A) Z^i`` and ``B_j^B = X^(j // d_B) Z^(-j)``, normalized
so that ``Tr(B_i^dag B_j) = d delta_ij``.  The correlation matrix has entries
``c_ij = Tr((B_i^A (x) B_j^B)^dag rho)`` and ``c_00 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qlinalg import (
    ATOL,
    BipartiteDims,
    as_dims,
    as_matrix,
    hw_operator,
    min_eigenvalue_hermitian,
    partial_transpose,
    trace_norm,
)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    dims: BipartiteDims
    c: np.ndarray

    def __post_init__(self):
        dims = as_dims(self.dims)
        c = np.asarray(self.c, dtype=complex)
        if c.shape != (dims.d_A**2, dims.d_B**2):
            raise ValueError(f"correlation matrix of shape {c.shape} does not match dims {tuple(dims)}")
        if abs(c[0, 0] - 1) > ATOL:
            raise ValueError(f"c_00 must be 1 for a normalized state, got {c[0, 0]!r}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "c", c)

    def scaled(self, x: float, y: float) -> np.ndarray:
        """``D_x C D_y``."""
        m = self.c.copy()
        m[0, :] *= x
        m[:, 0] *= y
        return m


@dataclass(frozen=True)
class SSCResult:
    x: float
    y: float
    bound: float
    norm: float
    g: float

    @property
    def detected(self) -> bool:
        return self.g < -ATOL

    @property
    def relative(self) -> float:
        """``g / R``, the violation in units of the bound (the normalized witness expectation)."""
        return self.g / self.bound


def ssc_bound(dims, x: float, y: float) -> float:
    """``R(x, y) = sqrt(d_A - 1 + x^2) sqrt(d_B - 1 + y^2)``."""
    d_A, d_B = as_dims(dims)
    return float(np.sqrt(d_A - 1 + x * x) * np.sqrt(d_B - 1 + y * y))


def basis_operator(dims, side: str, i: int) -> np.ndarray:
    d_A, d_B = as_dims(dims)
    if side == "A":
        d, sign = d_A, 1
    elif side == "B":
        d, sign = d_B, -1
    else:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    if not 0 <= i < d * d:
        raise ValueError(f"basis index {i} out of range for d = {d}")
    return hw_operator(d, i // d, sign * i)


@lru_cache(maxsize=16)
def _basis_stack(d: int, side: str) -> np.ndarray:
    dims = (d, d)
    out = np.stack([basis_operator(dims, side, i) for i in range(d * d)])
    out.setflags(write=False)
    return out


def basis_stack(dims, side: str) -> np.ndarray:
    """All local basis operators of one side, shape ``(d^2, d, d)``."""
    d_A, d_B = as_dims(dims)
    return _basis_stack(d_A if side == "A" else d_B, side)


@lru_cache(maxsize=16)
def _correlation_map(dims: BipartiteDims) -> np.ndarray:
    d_A, d_B = dims
    BA = _basis_stack(d_A, "A")
    BB = _basis_stack(d_B, "B")
    # K[(a, b, a', b'), (i, j)] = conj(BA[i, a, a'] BB[j, b, b'])
    K = np.einsum("ipq,jrs->prqsij", BA.conj(), BB.conj()).reshape(dims.total**2, d_A**2 * d_B**2)
    K.setflags(write=False)
    return K


def correlation_map(dims) -> np.ndarray:
    """Linear map taking a flattened operator to its flattened correlation matrix."""
    return _correlation_map(as_dims(dims))


def correlation_matrix(rho, dims) -> CorrelationMatrix:
    dims = as_dims(dims)
    rho = as_matrix(rho)
    if rho.shape != (dims.total, dims.total):
        raise ValueError(f"operator of shape {rho.shape} does not match dims {tuple(dims)}")
    c = (rho.reshape(-1) @ correlation_map(dims)).reshape(dims.d_A**2, dims.d_B**2)
    return CorrelationMatrix(dims, c)


def correlation_matrices(rhos: np.ndarray, dims) -> np.ndarray:
    """Batched correlation matrices for a stack of operators, shape ``(n, d_A^2, d_B^2)``."""
    dims = as_dims(dims)
    rhos = np.asarray(rhos, dtype=complex)
    flat = rhos.reshape(rhos.shape[0], -1)
    return (flat @ correlation_map(dims)).reshape(-1, dims.d_A**2, dims.d_B**2)


def state_from_correlation(C: CorrelationMatrix) -> np.ndarray:
    """``rho = sum_ij c_ij B_i^A (x) B_j^B / (d_A d_B)``."""
    d_A, d_B = C.dims
    BA = basis_stack(C.dims, "A")
    BB = basis_stack(C.dims, "B")
    rho = np.einsum("ij,ipq,jrs->prqs", C.c, BA, BB).reshape(d_A * d_B, d_A * d_B)
    return rho / (d_A * d_B)


def ssc_value(C: CorrelationMatrix, x: float, y: float) -> SSCResult:
    """Evaluate ``g(x, y) = R(x, y) - ||D_x C D_y||_1``; ``g < 0`` certifies entanglement."""
    if x < 0 or y < 0:
        raise ValueError(f"x and y must be nonnegative, got ({x}, {y})")
    bound = ssc_bound(C.dims, x, y)
    norm = trace_norm(C.scaled(x, y))
    return SSCResult(float(x), float(y), bound, norm, bound - norm)


def _verdict(value: float, threshold: float) -> dict:
    return {"value": value, "threshold": threshold, "detected": bool(value > threshold + ATOL)}


def ccnr(rho, dims) -> dict:
    """Realignment criterion: ``||C||_1 > sqrt(d_A d_B)`` certifies entanglement."""
    dims = as_dims(dims)
    C = correlation_matrix(rho, dims)
    return _verdict(trace_norm(C.c), float(np.sqrt(dims.total)))


def de_vicente(rho, dims) -> dict:
    """Correlation-tensor criterion with the identity row and column removed."""
    dims = as_dims(dims)
    C = correlation_matrix(rho, dims)
    return _verdict(trace_norm(C.scaled(0.0, 0.0)), float(np.sqrt((dims.d_A - 1) * (dims.d_B - 1))))


def ppt_check(rho, dims) -> dict:
    m = min_eigenvalue_hermitian(partial_transpose(rho, dims, "B"))
    return {"min_eig": m, "is_ppt": bool(m >= -ATOL)}
