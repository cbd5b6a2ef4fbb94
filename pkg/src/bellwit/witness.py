"""Witnesses built from the two-parameter trace-norm criterion.

For a state with correlation matrix ``C`` and parameters ``x, y >= 0`` the
criterion reads ``g(x, y) = R(x, y) - ||D_x C D_y||_1 >= 0`` on separable
states.  Any ``U`` with ``||U||_inf <= 1`` yields the witness with
coefficients ``w = D_x U D_y + R e_00 e_00^T`` in the product basis,

    W = 1/2 sum_ij (w_ij B_i (x) B_j + conj(w_ij) B_i^dag (x) B_j^dag),

and ``Tr(W rho) = R + Re Tr(D_y U^dag D_x C)``.  The isometry from the SVD of
``D_x C D_y`` makes the witness as strong as the criterion itself; sparse
``U`` trade detection power for fewer local measurements.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .criteria import (
    CorrelationMatrix,
    basis_stack,
    correlation_matrix,
    ssc_bound,
)
from .qlinalg import ATOL, BipartiteDims, as_dims, as_matrix
from .bds import mix_with_noise

log = logging.getLogger(__name__)

DETECT_TOL = 1e-8
ARGMAX_TOL = 1e-4


def default_workers() -> int:
    return max(1, int(os.environ.get("BELLWIT_WORKERS", "1")))


@dataclass(frozen=True, eq=False)
class Isometry:
    u: np.ndarray
    sparse: bool = False

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        if u.shape[0] > u.shape[1]:
            raise ValueError(f"isometry must have rows <= cols, got shape {u.shape}")
        if self.sparse:
            if np.linalg.norm(u, 2) > 1 + 1e-8:
                raise ValueError("sparse witness matrix must satisfy ||U||_inf <= 1")
        elif np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > 1e-8:
            raise ValueError("U U^dag != 1")
        object.__setattr__(self, "u", u)


@dataclass(frozen=True, eq=False)
class WitnessOperator:
    dims: BipartiteDims
    x: float
    y: float
    w: np.ndarray
    matrix_form: np.ndarray

    @property
    def bound(self) -> float:
        return ssc_bound(self.dims, self.x, self.y)

    def normalized(self) -> "WitnessOperator":
        """Witness rescaled by ``1 / R(x, y)``, so its expectation is ``g / R``."""
        r = self.bound
        return WitnessOperator(self.dims, self.x, self.y, self.w / r, self.matrix_form / r)

    def measurements(self, atol: float = 1e-12) -> list[tuple[int, int]]:
        """Product-basis indices ``(i, j) != (0, 0)`` with non-vanishing coefficient."""
        idx = np.argwhere(np.abs(self.w) > atol)
        return [(int(i), int(j)) for i, j in idx if (i, j) != (0, 0)]


@dataclass(frozen=True, eq=False)
class NoiseScan:
    xs: np.ndarray
    ys: np.ndarray
    eps_max: np.ndarray  # shape (len(xs), len(ys))
    monotone: bool = True
    argmax_tol: float = ARGMAX_TOL

    @property
    def grid(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x in self.xs for y in self.ys]

    @property
    def max(self) -> float:
        return float(self.eps_max.max())

    @property
    def argmax_set(self) -> list[tuple[float, float]]:
        if self.max <= 0:
            return []
        idx = np.argwhere(self.eps_max >= self.max - self.argmax_tol)
        return [(float(self.xs[i]), float(self.ys[j])) for i, j in idx]

    @property
    def boundary(self) -> list[tuple[float, float]]:
        """Detected grid points with an undetected 4-neighbour."""
        det = self.eps_max > 0
        pad = np.pad(det, 1, constant_values=False)
        inner = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
        idx = np.argwhere(det & ~inner)
        return [(float(self.xs[i]), float(self.ys[j])) for i, j in idx]

    def rows(self):
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                yield float(x), float(y), float(self.eps_max[i, j])


def grid_axis(lo: float, hi: float, steps: int) -> np.ndarray:
    """``steps`` subdivisions of ``[lo, hi]``, endpoints included (``steps + 1`` samples)."""
    if steps < 1:
        raise ValueError("steps must be positive")
    return np.linspace(lo, hi, int(steps) + 1)


# --- optimal witnesses -------------------------------------------------------


def optimal_isometry(C: CorrelationMatrix, x: float, y: float) -> Isometry:
    """``U = -(R, 0) S^dag`` from the SVD ``D_x C D_y = R Sigma S^dag``."""
    if x < 0 or y < 0:
        raise ValueError(f"x and y must be nonnegative, got ({x}, {y})")
    m = C.scaled(x, y)
    try:
        left, _, right_h = np.linalg.svd(m)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"SVD failed: {exc}") from exc
    return Isometry(-left @ right_h[: m.shape[0]])


def witness_coefficients(u: np.ndarray, dims, x: float, y: float) -> np.ndarray:
    w = np.array(u, dtype=complex)
    w[0, :] *= x
    w[:, 0] *= y
    w[0, 0] += ssc_bound(dims, x, y)
    return w


def operator_from_coefficients(w: np.ndarray, dims) -> np.ndarray:
    dims = as_dims(dims)
    BA = basis_stack(dims, "A")
    BB = basis_stack(dims, "B")
    n = dims.total
    half = np.einsum("ij,ipq,jrs->prqs", w, BA, BB).reshape(n, n)
    return (half + half.conj().T) / 2


def build_witness(U: Isometry, dims, x: float, y: float) -> WitnessOperator:
    dims = as_dims(dims)
    if U.u.shape != (dims.d_A**2, dims.d_B**2):
        raise ValueError(f"U of shape {U.u.shape} does not match dims {tuple(dims)}")
    w = witness_coefficients(U.u, dims, x, y)
    return WitnessOperator(dims, float(x), float(y), w, operator_from_coefficients(w, dims))


def witness_expectation(W: WitnessOperator, rho) -> float:
    rho = as_matrix(rho)
    if rho.shape != W.matrix_form.shape:
        raise ValueError(f"state of shape {rho.shape} does not match witness {W.matrix_form.shape}")
    val = np.einsum("ij,ji->", W.matrix_form, rho)
    if abs(val.imag) > ATOL * max(1.0, abs(val.real)):
        raise ArithmeticError(f"witness expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def expectation_from_coefficients(W: WitnessOperator, C: CorrelationMatrix) -> float:
    """``1/2 sum (c_ij conj(w_ij) + conj(c_ij) w_ij)``."""
    return float(np.real(np.sum(C.c * np.conj(W.w))))


def optimal_witness(rho, dims, x: float, y: float) -> WitnessOperator:
    C = correlation_matrix(rho, dims)
    return build_witness(optimal_isometry(C, x, y), dims, x, y)


# --- noise robustness --------------------------------------------------------


def noise_threshold(rho, dims, x: float, y: float, tol: float = 1e-5) -> float:
    """Largest white-noise fraction ``eps`` for which ``g_eps(x, y) < 0``.

    Bisection on ``[0, 1]``; returns 0 when the noiseless state is not
    detected at ``(x, y)``.  The value returned is the detected end of the
    final bracket, within ``tol`` of the boundary.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dims = as_dims(dims)
    rho = as_matrix(rho)

    def g(eps):
        Ce = correlation_matrix(mix_with_noise(rho, eps), dims)
        return ssc_bound(dims, x, y) - float(np.linalg.svd(Ce.scaled(x, y), compute_uv=False).sum())

    if g(0.0) >= -ATOL:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if g(mid) < -ATOL:
            lo = mid
        else:
            hi = mid
    return lo


def _scaled_stack(c: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    M = np.broadcast_to(c, (len(X),) + c.shape).copy()
    M[:, 0, :] *= X[:, None]
    M[:, :, 0] *= Y[:, None]
    return M


def g_batch(c: np.ndarray, dims, X: np.ndarray, Y: np.ndarray, eps) -> np.ndarray:
    """``g_eps(x, y)`` for many points at once, using ``C_eps = (1 - eps) C + eps e_00``."""
    d_A, d_B = as_dims(dims)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), X.shape)
    M = _scaled_stack(c, X, Y) * (1 - eps)[:, None, None]
    M[:, 0, 0] += eps * X * Y
    R = np.sqrt(d_A - 1 + X**2) * np.sqrt(d_B - 1 + Y**2)
    return R - np.linalg.svd(M, compute_uv=False).sum(axis=-1)


def _threshold_chunk(args):
    c, dims, X, Y, tol, checks = args
    n = len(X)
    g0 = g_batch(c, dims, X, Y, np.zeros(n))
    det = g0 < -ATOL
    lo, hi = np.zeros(n), np.ones(n)
    while np.any(hi - lo > tol):
        mid = (lo + hi) / 2
        neg = g_batch(c, dims, X, Y, mid) < -ATOL
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    eps_max = np.where(det, lo, 0.0)
    monotone = True
    if checks:
        # detection must hold on a prefix [0, eps_max) of the sampled eps values
        prev = np.ones(n, dtype=bool)
        for e in np.linspace(0, 1, checks):
            neg = g_batch(c, dims, X, Y, np.full(n, e)) < -ATOL
            if np.any(neg & ~prev):
                monotone = False
            prev = neg
    return eps_max, monotone


def _chunks(n: int, size: int):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def scan_noise_threshold(
    rho,
    dims,
    x_range=(0.0, 2.0),
    y_range=(0.0, 2.0),
    steps: int = 200,
    tol: float = 1e-5,
    checks: int = 20,
    workers: int | None = None,
    chunk: int = 4096,
) -> NoiseScan:
    """``eps_max`` on the inclusive ``(steps + 1) x (steps + 1)`` grid.

    All points are bisected together in batches.  ``checks`` equispaced
    ``eps`` values per point verify that detection is an initial interval.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    dims = as_dims(dims)
    c = correlation_matrix(rho, dims).c
    xs = grid_axis(*x_range, steps)
    ys = grid_axis(*y_range, steps)
    X, Y = (a.ravel() for a in np.meshgrid(xs, ys, indexing="ij"))
    tasks = [(c, dims, X[s], Y[s], tol, checks) for s in _chunks(len(X), chunk)]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_threshold_chunk, tasks))
    else:
        results = [_threshold_chunk(t) for t in tasks]
    eps = np.concatenate([r[0] for r in results]).reshape(len(xs), len(ys))
    monotone = all(r[1] for r in results)
    if not monotone:
        log.warning("detection is not an initial interval in eps at some grid points")
    return NoiseScan(xs, ys, eps, monotone)


# --- sparse witnesses --------------------------------------------------------


def select_entries(m: np.ndarray, ell: int, decimals: int = 9) -> np.ndarray:
    """Flat indices of the ``ell`` largest ``|m_ij|`` excluding ``(0, 0)``.

    Magnitudes are compared after rounding to ``decimals`` places; ties go to
    the lower flat index.
    """
    mags = np.round(np.abs(m).ravel(), decimals)
    order = np.argsort(-mags[1:], kind="stable") + 1
    return np.sort(order[:ell])


def _components(entries: list[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    parent: dict = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in entries:
        ra, rb = find(("r", i)), find(("c", j))
        if ra != rb:
            parent[ra] = rb
    groups: dict = {}
    for e in entries:
        groups.setdefault(find(("r", e[0])), []).append(e)
    return list(groups.values())


class _Block:
    """One row/column-connected piece of the support, in local coordinates."""

    def __init__(self, entries, m):
        self.entries = entries
        rows = sorted({i for i, _ in entries})
        cols = sorted({j for _, j in entries})
        ri = {r: k for k, r in enumerate(rows)}
        ci = {c: k for k, c in enumerate(cols)}
        self.shape = (len(rows), len(cols))
        self.pos = (np.array([ri[i] for i, _ in entries]), np.array([ci[j] for _, j in entries]))
        self.vals = np.array([m[i, j] for i, j in entries])
        self.key = (tuple(zip(*(p.tolist() for p in self.pos))), self.shape, tuple(np.round(self.vals, 12)))

    @property
    def is_vector(self) -> bool:
        return 1 in self.shape

    def matrix(self, z) -> np.ndarray:
        V = np.zeros(self.shape, dtype=complex)
        V[self.pos] = z
        return V

    def value(self, z) -> float:
        """``Re <V, M> / ||V||_inf`` for ``V`` with entries ``z``."""
        nrm = np.linalg.norm(self.matrix(z), 2)
        return float(np.real(np.vdot(z, self.vals))) / nrm if nrm > 0 else 0.0

    def upper(self) -> float:
        # zero completion of the block: feasible for the dual trace-norm problem
        return float(np.linalg.svd(self.matrix(self.vals), compute_uv=False).sum())

    def starts(self) -> list:
        left, _, right_h = np.linalg.svd(self.matrix(self.vals), full_matrices=False)
        return [(left @ right_h)[self.pos], self.vals, np.exp(1j * np.angle(self.vals))]


class _SparseSolver:
    """Maximize ``Re <U, M>`` over ``||U||_inf <= 1`` with ``U`` on a fixed support.

    The support splits into blocks sharing no row or column; ``||U||_inf`` is
    the largest block norm, so each block is solved on its own.  Vector
    blocks have the closed form ``||m||_2``.  Other blocks use BFGS on the
    scale-invariant ratio ``Re <V, M> / ||V||_inf`` (every iterate is scaled
    onto the unit ball) from deterministic and seeded random starts.

    With a ``target`` the solver stops early once the feasible lower bounds
    exceed it or the trace-norm upper bounds cannot reach it.
    """

    def __init__(self, restarts: int = 8, seed: int = 0):
        self.restarts = restarts
        self.seed = seed
        self.cache: dict = {}

    def solve(self, m: np.ndarray, support: list[tuple[int, int]], target: float | None = None):
        blocks = [_Block(e, m) for e in _components(support)]
        sol = {}
        for k, b in enumerate(blocks):
            if b.is_vector:
                nrm = float(np.linalg.norm(b.vals))
                sol[k] = (nrm, b.vals / nrm if nrm > 0 else np.zeros_like(b.vals))
            elif b.key in self.cache:
                sol[k] = self.cache[b.key]
        hard = [k for k in range(len(blocks)) if k not in sol]
        if target is not None and hard:
            fixed = sum(sol[k][0] for k in sol)
            lows = {}
            for k in hard:
                z = max(blocks[k].starts(), key=blocks[k].value)
                lows[k] = (blocks[k].value(z), z / np.linalg.norm(blocks[k].matrix(z), 2))
            if fixed + sum(v for v, _ in lows.values()) > target or fixed + sum(blocks[k].upper() for k in hard) <= target:
                sol.update(lows)
                hard = []
        for k in hard:
            sol[k] = self.cache[blocks[k].key] = self._optimize(blocks[k])
        u = np.zeros_like(m, dtype=complex)
        total = 0.0
        for k, b in enumerate(blocks):
            best, z = sol[k]
            total += best
            u[tuple(np.array(b.entries).T)] = z
        return total, u

    def _optimize(self, b: _Block):
        n = len(b.vals)
        d_lin = np.concatenate([b.vals.real, b.vals.imag])

        def fun(p):
            z = p[:n] + 1j * p[n:]
            uu, s, vh = np.linalg.svd(b.matrix(z))
            if s[0] <= 0:
                return 0.0, np.zeros_like(p)
            lin = float(np.real(np.vdot(z, b.vals)))
            gsig = (uu[:, 0].conj()[:, None] * vh[0].conj()[None, :])[b.pos]
            d_sig = np.concatenate([gsig.real, -gsig.imag])
            grad = (d_lin * s[0] - lin * d_sig) / s[0] ** 2
            return -lin / s[0], -grad

        rng = np.random.default_rng([self.seed, n])
        starts = b.starts() + [rng.normal(size=n) + 1j * rng.normal(size=n) for _ in range(self.restarts)]
        best, best_z = -np.inf, None
        for z0 in starts:
            p0 = np.concatenate([z0.real, z0.imag])
            res = minimize(fun, p0, jac=True, method="BFGS", options={"gtol": 1e-9, "maxiter": 200})
            for z in (res.x[:n] + 1j * res.x[n:], z0):
                v = b.value(z)
                if v > best:
                    best, best_z = v, z
        return best, best_z / np.linalg.norm(b.matrix(best_z), 2)


@dataclass
class SparseResult:
    witness: WitnessOperator
    value: float
    support: list = field(default_factory=list)

    @property
    def detected(self) -> bool:
        return self.value < -DETECT_TOL


def _sparse_optimize(C: CorrelationMatrix, x, y, ell, solver: _SparseSolver, early_exit: bool = False):
    dims = C.dims
    n_free = dims.d_A**2 * dims.d_B**2 - 1
    if not 1 <= ell <= n_free:
        raise ValueError(f"ell must lie in [1, {n_free}], got {ell}")
    m = C.scaled(x, y)
    idx = select_entries(m, ell)
    nb = m.shape[1]
    support = [(0, 0)] + [(int(k // nb), int(k % nb)) for k in idx]
    bound = ssc_bound(dims, x, y)
    best, u = solver.solve(m, support, bound + DETECT_TOL if early_exit else None)
    # U = -V maximizes -Re<U, M>
    W = build_witness(Isometry(-u, sparse=True), dims, x, y)
    value = bound - best
    return SparseResult(W, value, support[1:])


def sparse_witness(rho, dims, x: float, y: float, ell: int, restarts: int = 8, seed: int = 0):
    """Best witness whose coefficient matrix has ``ell`` non-vanishing entries besides ``(0, 0)``.

    The entries are those of the ``ell`` largest ``|(D_x C D_y)_ij|``.  Returns
    ``{"witness", "value"}`` when the optimized expectation is below ``-1e-8``,
    otherwise ``None`` (not found; this is no proof that none exists).
    """
    dims = as_dims(dims)
    C = correlation_matrix(rho, dims)
    res = _sparse_optimize(C, x, y, ell, _SparseSolver(restarts, seed))
    if not res.detected:
        return None
    return {"witness": res.witness, "value": res.value}


def _filtration_chunk(args):
    c, dims, points, ell_max, restarts, seed = args
    C = CorrelationMatrix(dims, c)
    solver = _SparseSolver(restarts, seed)
    out = np.zeros((len(points), ell_max))
    for p, (x, y) in enumerate(points):
        prev = np.inf
        for ell in range(1, ell_max + 1):
            res = _sparse_optimize(C, x, y, ell, solver, early_exit=True)
            # the witness found for a smaller support stays admissible
            prev = min(prev, res.value)
            out[p, ell - 1] = prev
    return out


@dataclass(frozen=True, eq=False)
class Filtration:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (len(xs), len(ys), ell_max) optimized expectations

    @property
    def ell_max(self) -> int:
        return self.values.shape[-1]

    @property
    def detected(self) -> np.ndarray:
        return self.values < -DETECT_TOL

    @property
    def min_ell(self) -> np.ndarray:
        """Least ``ell`` detecting at each point, 0 where undetected up to ``ell_max``."""
        det = self.detected
        first = np.argmax(det, axis=-1) + 1
        return np.where(det.any(axis=-1), first, 0)

    def region(self, ell: int) -> np.ndarray:
        return self.detected[..., ell - 1]

    def nested(self) -> bool:
        det = self.detected
        return bool(np.all(det[..., :-1] <= det[..., 1:]))

    def rows(self):
        ml = self.min_ell
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                yield float(x), float(y), int(ml[i, j])


def measurement_filtration(
    rho,
    dims,
    x_range=(0.0, 2.0),
    y_range=(0.0, 2.0),
    steps: int = 200,
    ell_max: int = 6,
    restarts: int = 8,
    seed: int = 0,
    workers: int | None = None,
    chunk: int = 2048,
) -> Filtration:
    """Sparse-witness detection for ``ell = 1 .. ell_max`` on the inclusive grid."""
    if ell_max < 1:
        raise ValueError("ell_max must be at least 1")
    dims = as_dims(dims)
    c = correlation_matrix(rho, dims).c
    xs = grid_axis(*x_range, steps)
    ys = grid_axis(*y_range, steps)
    points = [(float(x), float(y)) for x in xs for y in ys]
    sl = _chunks(len(points), chunk)
    tasks = [(c, dims, points[s], ell_max, restarts, seed + k) for k, s in enumerate(sl)]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_filtration_chunk, tasks))
    else:
        results = [_filtration_chunk(t) for t in tasks]
    values = np.concatenate(results).reshape(len(xs), len(ys), ell_max)
    return Filtration(xs, ys, values)
