"""Generalized Bell diagonal states on ``d_A x d_B`` systems.

A Bell diagonal state is fixed by a ``d_A x d_B`` probability matrix ``P``
over the Bell basis ``|phi^{ab}> = (Z_A^a (x) X_B^b)|phi^00>``.  Its 2-D
discrete Fourier transform ``Lambda`` carries the Bloch-type coefficients.

For ``d_A < d_B`` the shift ``X_A^mu`` wraps modulo ``d_A`` while the shift
on ``B`` wraps modulo ``d_B``, so the operator pairing each ``lambda`` with a
local Heisenberg-Weyl product has to split off the wrapped part of
``X_A^mu``; see :func:`t_operator`.
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
    hermitian_part,
    hw_operator,
    modified_clock,
)

PROB_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    """Bell-state weights ``p[a, b]`` of a Bell diagonal state."""

    dims: BipartiteDims
    p: np.ndarray

    def __post_init__(self):
        dims = as_dims(self.dims)
        p = np.array(self.p, dtype=float)
        if p.shape != (dims.d_A, dims.d_B):
            raise ValueError(f"probability matrix of shape {p.shape} does not match dims {tuple(dims)}")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        if p.min() < -PROB_ATOL or p.max() > 1 + PROB_ATOL:
            raise ValueError("not a valid probability distribution: entries outside [0, 1]")
        if abs(p.sum() - 1) > ATOL:
            raise ValueError(f"not a valid probability distribution: sum is {p.sum()!r}")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, dims) -> "ProbabilityMatrix":
        dims = as_dims(dims)
        return cls(dims, np.full(dims, 1.0 / dims.total))

    @classmethod
    def point(cls, dims, alpha: int = 0, beta: int = 0) -> "ProbabilityMatrix":
        dims = as_dims(dims)
        p = np.zeros(dims)
        p[alpha, beta] = 1.0
        return cls(dims, p)


@dataclass(frozen=True, eq=False)
class FourierMatrix:
    """Fourier coefficients ``lam[mu, nu]`` of a probability matrix."""

    dims: BipartiteDims
    lam: np.ndarray

    def __post_init__(self):
        dims = as_dims(self.dims)
        lam = np.array(self.lam, dtype=complex)
        if lam.shape != (dims.d_A, dims.d_B):
            raise ValueError(f"Fourier matrix of shape {lam.shape} does not match dims {tuple(dims)}")
        if not np.all(np.isfinite(lam)):
            raise ValueError("Fourier coefficients must be finite")
        if abs(lam[0, 0] - 1) > ATOL:
            raise ValueError(f"lambda_00 must be 1, got {lam[0, 0]!r}")
        mirrored = np.conj(lam[np.ix_(-np.arange(dims.d_A) % dims.d_A, -np.arange(dims.d_B) % dims.d_B)])
        if np.max(np.abs(lam - mirrored)) > ATOL:
            raise ValueError("Fourier matrix violates lambda[mu, nu] = conj(lambda[-mu, -nu])")
        lam.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lam", lam)

    @property
    def bounded(self) -> bool:
        """Whether every ``|lambda| <= 1`` (the 2x2 Toeplitz condition)."""
        return bool(np.max(np.abs(self.lam)) <= 1 + ATOL)


@dataclass(frozen=True, eq=False)
class HWDecomposition:
    """Heisenberg-Weyl expansion of a Bell diagonal state.

    ``s[kappa, nu]`` expands the modified clock, ``Z~^nu = sum_kappa
    s[kappa, nu] Z^kappa``.  ``s_wrap[mu, kappa, nu]`` is the part of that
    expansion carried by the wrapped block of ``X_A^mu Z~^nu``, which pairs
    with ``X_B^(mu - d_A)`` instead of ``X_B^mu`` on the second factor.  It
    vanishes identically when ``d_A == d_B``.
    """

    s: np.ndarray
    s_wrap: np.ndarray
    lam: FourierMatrix

    @property
    def dims(self) -> BipartiteDims:
        return self.lam.dims

    def terms(self):
        """Yield ``(coefficient, A operator, B operator)`` with ``rho = sum c A (x) B / (d_A d_B)``."""
        d_A, d_B = self.dims
        lam = self.lam.lam
        for mu in range(d_A):
            for kappa in range(d_A):
                a_op = hw_operator(d_A, mu, kappa)
                for nu in range(d_B):
                    c_main = lam[mu, nu] * (self.s[kappa, nu] - self.s_wrap[mu, kappa, nu])
                    c_wrap = lam[mu, nu] * self.s_wrap[mu, kappa, nu]
                    if d_A == d_B:
                        c_main, c_wrap = c_main + c_wrap, 0.0
                    if abs(c_main) > 0:
                        yield c_main, a_op, hw_operator(d_B, mu, -nu)
                    if abs(c_wrap) > 0:
                        yield c_wrap, a_op, hw_operator(d_B, mu - d_A, -nu)

    def reconstruct(self) -> np.ndarray:
        d_A, d_B = self.dims
        rho = np.zeros((d_A * d_B, d_A * d_B), dtype=complex)
        for c, a_op, b_op in self.terms():
            rho += c * np.kron(a_op, b_op)
        return rho / (d_A * d_B)


def _roots(d: int, sign: int = 1) -> np.ndarray:
    k = np.arange(d)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / d)


def bell_state(dims, alpha: int, beta: int) -> np.ndarray:
    """Generalized Bell vector ``(Z_A^alpha (x) X_B^beta)|phi^00>``."""
    d_A, d_B = as_dims(dims)
    if not (0 <= alpha < d_A and 0 <= beta < d_B):
        raise ValueError(f"Bell index ({alpha}, {beta}) out of range for dims ({d_A}, {d_B})")
    i = np.arange(d_A)
    v = np.zeros(d_A * d_B, dtype=complex)
    v[i * d_B + (i + beta) % d_B] = np.exp(2j * np.pi * alpha * i / d_A) / np.sqrt(d_A)
    return v


@lru_cache(maxsize=32)
def _bell_basis(dims: BipartiteDims) -> np.ndarray:
    d_A, d_B = dims
    basis = np.stack([bell_state(dims, a, b) for a in range(d_A) for b in range(d_B)], axis=1)
    basis.setflags(write=False)
    return basis


def bell_basis(dims) -> np.ndarray:
    """Unitary whose column ``a * d_B + b`` is ``|phi^{ab}>``."""
    return _bell_basis(as_dims(dims))


def bds_from_probabilities(P: ProbabilityMatrix) -> np.ndarray:
    """Density matrix ``sum_ab p_ab |phi^ab><phi^ab|``."""
    V = bell_basis(P.dims)
    return (V * P.p.ravel()) @ V.conj().T


def bell_weights(rho, dims) -> np.ndarray:
    """Bell-basis populations ``<phi^ab|rho|phi^ab>`` as a ``d_A x d_B`` array."""
    dims = as_dims(dims)
    rho = as_matrix(rho)
    V = bell_basis(dims)
    w = np.einsum("ik,ij,jk->k", V.conj(), rho, V)
    return w.real.reshape(dims)


def werner(q: float) -> ProbabilityMatrix:
    """Two-qubit Werner family: ``q/3`` on three Bell states and ``1 - q`` on ``|phi^11>``."""
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    return ProbabilityMatrix((2, 2), [[q / 3, q / 3], [q / 3, 1 - q]])


def fourier_from_probabilities(P: ProbabilityMatrix) -> FourierMatrix:
    d_A, d_B = P.dims
    lam = _roots(d_A) @ P.p @ _roots(d_B)
    # enforce exact conjugate symmetry against rounding
    mirrored = np.conj(lam[np.ix_(-np.arange(d_A) % d_A, -np.arange(d_B) % d_B)])
    return FourierMatrix(P.dims, (lam + mirrored) / 2)


def probabilities_from_fourier(F: FourierMatrix) -> ProbabilityMatrix:
    """Inverse transform; raises if ``F`` does not describe a probability distribution."""
    d_A, d_B = F.dims
    p = _roots(d_A, -1) @ F.lam @ _roots(d_B, -1) / (d_A * d_B)
    if np.max(np.abs(p.imag)) > ATOL:
        raise ValueError("not a valid probability distribution: complex probabilities")
    p = p.real
    if p.min() < -ATOL:
        raise ValueError(f"not a valid probability distribution: entry {p.min():.3e} < 0")
    p = np.clip(p, 0.0, None)
    return ProbabilityMatrix(F.dims, p / p.sum())


def toeplitz_necessary_check(F: FourierMatrix, r_max: int | None = None) -> dict:
    """Herglotz-Bochner positivity of the Toeplitz matrices built from ``F``.

    For every direction ``(f_A, f_B)`` and size ``2 <= r <= r_max`` the matrix
    ``T[m, n] = lam[(m - n) f_A, (m - n) f_B]`` must be positive semidefinite.
    Returns ``{"pass": bool, "first_failure": (f_A, f_B, r) or None}``.
    """
    d_A, d_B = F.dims
    r_max = d_A * d_B if r_max is None else int(r_max)
    if r_max < 2:
        raise ValueError("r_max must be at least 2")
    lam = F.lam
    for r in range(2, r_max + 1):
        diff = np.subtract.outer(np.arange(r), np.arange(r))
        for f_A in range(d_A):
            for f_B in range(d_B):
                T = lam[(diff * f_A) % d_A, (diff * f_B) % d_B]
                if np.linalg.eigvalsh(hermitian_part(T))[0] < -ATOL:
                    return {"pass": False, "first_failure": (f_A, f_B, r)}
    return {"pass": True, "first_failure": None}


def clock_expansion(d_A: int, d_B: int) -> np.ndarray:
    """Coefficients ``s[kappa, nu]`` with ``Z~^nu = sum_kappa s[kappa, nu] Z_A^kappa``."""
    j = np.arange(d_A)
    kappa = np.arange(d_A)[:, None, None]
    nu = np.arange(d_B)[None, :, None]
    terms = np.exp(2j * np.pi * j * (nu / d_B - kappa / d_A))
    return terms.mean(axis=-1)


def _wrap_expansion(d_A: int, d_B: int) -> np.ndarray:
    # s_wrap[mu, kappa, nu]: expansion of diag(w_B^{j nu} [j >= d_A - mu]) in Z_A^kappa
    j = np.arange(d_A)
    mu = np.arange(d_A)[:, None, None, None]
    kappa = np.arange(d_A)[None, :, None, None]
    nu = np.arange(d_B)[None, None, :, None]
    mask = j >= d_A - mu
    terms = np.where(mask, np.exp(2j * np.pi * j * (nu / d_B - kappa / d_A)), 0)
    return terms.sum(axis=-1) / d_A


def hw_full_decomposition(P: ProbabilityMatrix) -> HWDecomposition:
    d_A, d_B = P.dims
    return HWDecomposition(
        s=clock_expansion(d_A, d_B),
        s_wrap=_wrap_expansion(d_A, d_B),
        lam=fourier_from_probabilities(P),
    )


def t_operator(dims, mu: int, nu: int) -> np.ndarray:
    """Operator paired with ``lam[mu, nu]`` in the Fourier expansion of a BDS.

    ``T = (X^mu Z~^nu)_low (x) X^mu Z^-nu + (X^mu Z~^nu)_wrap (x) X^(mu - d_A) Z^-nu``
    where the ``wrap`` block holds the columns ``j >= d_A - mu`` whose shift
    passes ``d_A - 1 -> 0``.  For ``d_A == d_B`` both B factors coincide and
    ``T = X^mu Z^nu (x) X^mu Z^-nu``.
    """
    d_A, d_B = as_dims(dims)
    mu, nu = int(mu) % d_A, int(nu) % d_B
    a_full = hw_operator(d_A, mu, 0) @ modified_clock(d_A, d_B, nu)
    low = np.arange(d_A) < d_A - mu
    a_low = a_full * low
    a_wrap = a_full * ~low
    return np.kron(a_low, hw_operator(d_B, mu, -nu)) + np.kron(a_wrap, hw_operator(d_B, mu - d_A, -nu))


def bds_from_fourier(F: FourierMatrix) -> np.ndarray:
    """``rho = sum_{mu nu} lam[mu, nu] T(mu, nu) / (d_A d_B)``.

    Raises if ``F`` does not correspond to a probability distribution.
    """
    probabilities_from_fourier(F)
    d_A, d_B = F.dims
    rho = np.zeros((d_A * d_B,) * 2, dtype=complex)
    for mu in range(d_A):
        for nu in range(d_B):
            rho += F.lam[mu, nu] * t_operator(F.dims, mu, nu)
    return rho / (d_A * d_B)


def twirl_channel(rho, dims, q: float) -> np.ndarray:
    """``(1 - q) rho + q sum_ab <phi^ab|rho|phi^ab> |phi^ab><phi^ab|``.

    For ``d_A == d_B`` this equals the local-unitary twirl
    :func:`hw_twirl`; for ``d_A < d_B`` the Bell-basis dephasing is not a
    mixture of local unitaries and can map product states to NPT states.
    """
    dims = as_dims(dims)
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    rho = as_matrix(rho)
    if rho.shape != (dims.total, dims.total):
        raise ValueError(f"operator of shape {rho.shape} does not match dims {tuple(dims)}")
    V = bell_basis(dims)
    w = bell_weights(rho, dims).ravel()
    return (1 - q) * rho + q * (V * w) @ V.conj().T


def hw_twirl(rho, dims, q: float) -> np.ndarray:
    """Local-unitary twirl ``(1 - q) rho + q/(d_A d_B) sum U rho U^dag`` over
    ``U = X^mu Z~^nu (x) X^mu Z^-nu``.  Matches :func:`twirl_channel` only
    when ``d_A == d_B``."""
    d_A, d_B = as_dims(dims)
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    rho = as_matrix(rho)
    acc = np.zeros_like(rho)
    for mu in range(d_A):
        for nu in range(d_B):
            U = np.kron(hw_operator(d_A, mu, 0) @ modified_clock(d_A, d_B, nu), hw_operator(d_B, mu, -nu))
            acc += U @ rho @ U.conj().T
    return (1 - q) * rho + q * acc / (d_A * d_B)


def ccnr_value_equal_dims(F: FourierMatrix) -> float:
    """``sum |lam|``; the state is entangled when this exceeds ``d``."""
    d_A, d_B = F.dims
    if d_A != d_B:
        raise ValueError("sum |lambda| is the CCNR value only for d_A == d_B; use criteria.ccnr")
    return float(np.abs(F.lam).sum())


def mix_with_noise(rho, eps: float) -> np.ndarray:
    """``(1 - eps) rho + eps * 1 / n``."""
    rho = as_matrix(rho)
    n = rho.shape[0]
    return (1 - eps) * rho + eps * np.eye(n) / n
