"""Dichotomous Bell diagonal states and searches for bound entangled ones.

A dichotomous state puts equal weight on a support set of Bell states.
Supports are handled as integer bitmasks over the ``d_A x d_B`` grid, cell
``(a, b)`` being bit ``a * d_B + b``.  Searches enumerate supports, reduce
them modulo cyclic row and column shifts and test predicates in batches.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .bds import FourierMatrix, ProbabilityMatrix, bell_state, probabilities_from_fourier
from .criteria import correlation_matrix
from .qlinalg import ATOL, BipartiteDims, as_dims, partial_transpose
from .witness import default_workers

log = logging.getLogger(__name__)

PREDICATES = ("phase_condition", "ppt", "ccnr_detected", "homogeneous")
DEFAULT_BUDGET = 50_000_000


@dataclass(frozen=True)
class SupportSet:
    dims: BipartiteDims
    points: frozenset

    def __post_init__(self):
        dims = as_dims(self.dims)
        pts = frozenset((int(a), int(b)) for a, b in self.points)
        if not pts:
            raise ValueError("support set is empty")
        if len(pts) != len(list(self.points)):
            raise ValueError("support set has duplicate points")
        for a, b in pts:
            if not (0 <= a < dims.d_A and 0 <= b < dims.d_B):
                raise ValueError(f"point ({a}, {b}) out of range for dims {tuple(dims)}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def mask(self) -> int:
        return sum(1 << (a * self.dims.d_B + b) for a, b in self.points)

    @classmethod
    def from_mask(cls, dims, mask: int) -> "SupportSet":
        dims = as_dims(dims)
        pts = [divmod(k, dims.d_B) for k in range(dims.total) if mask >> k & 1]
        return cls(dims, pts)

    @classmethod
    def from_matrix(cls, dims, m) -> "SupportSet":
        """Support of the nonzero entries of a ``d_A x d_B`` array."""
        m = np.asarray(m)
        return cls(dims, [tuple(p) for p in np.argwhere(m != 0)])

    def complement(self) -> "SupportSet":
        d_A, d_B = self.dims
        return SupportSet(self.dims, [(a, b) for a in range(d_A) for b in range(d_B) if (a, b) not in self.points])

    def to_json(self) -> dict:
        return {"d_A": self.dims.d_A, "d_B": self.dims.d_B, "points": sorted([a, b] for a, b in self.points)}

    @classmethod
    def from_json(cls, obj: dict) -> "SupportSet":
        return cls((obj["d_A"], obj["d_B"]), [tuple(p) for p in obj["points"]])


@dataclass(frozen=True)
class DiophantineSolution:
    d: int
    cardinality: int
    k: int
    ccnr_excess: float

    def __post_init__(self):
        d, s, k = self.d, self.cardinality, self.k
        if (k - s) * d * d - k + s * s != 0:
            raise ValueError(f"({d}, {s}, {k}) does not solve the link-count equation")
        if not 1 < s < d * d:
            raise ValueError(f"trivial cardinality {s}")


def dichotomous_state(S: SupportSet) -> ProbabilityMatrix:
    p = np.zeros(S.dims)
    for a, b in S.points:
        p[a, b] = 1.0 / len(S)
    return ProbabilityMatrix(S.dims, p)


# --- combinatorial conditions --------------------------------------------------


def phase_condition_check(S: SupportSet) -> dict:
    """Vanishing of the symplectic phase sums over links from ``S`` into its complement.

    For each displacement ``D = (mu, nu) != 0`` the phases ``w^(a nu - b mu)``
    are summed over the points ``(a, b)`` of ``S`` with ``(a, b) + D`` outside
    ``S``.  When all sums vanish the partial transpose of the state is
    proportional to a projector, so the state is PPT.
    """
    d_A, d_B = S.dims
    if d_A != d_B:
        raise NotImplementedError("the phase condition is only available for equal local dimensions")
    d = d_A
    failing = []
    for mu in range(d):
        for nu in range(d):
            if mu == nu == 0:
                continue
            total = 0j
            for a, b in S.points:
                if ((a + mu) % d, (b + nu) % d) not in S.points:
                    total += np.exp(2j * np.pi * ((a * nu - b * mu) % d) / d)
            if abs(total) >= ATOL:
                failing.append((mu, nu))
    return {"holds": not failing, "failing_displacements": failing}


def link_counts(S: SupportSet) -> np.ndarray:
    """``counts[mu, nu]`` = number of points of ``S`` moved outside ``S`` by ``(mu, nu)``."""
    d_A, d_B = S.dims
    grid = np.zeros(S.dims, dtype=bool)
    for a, b in S.points:
        grid[a, b] = True
    counts = np.zeros(S.dims, dtype=int)
    for mu in range(d_A):
        for nu in range(d_B):
            moved = np.roll(grid, (-mu, -nu), axis=(0, 1))
            # moved[a, b] = grid[a + mu, b + nu]
            counts[mu, nu] = int(np.sum(grid & ~moved))
    return counts


def displacement_homogeneity(S: SupportSet):
    """Common number of links into the complement, or ``"inhomogeneous"``."""
    counts = link_counts(S)
    n, s = S.dims.total, len(S)
    # each pair (inside, outside) is linked by exactly one displacement
    assert counts.sum() == s * (n - s)
    rest = counts.ravel()[1:]
    if rest.size == 0:
        return 0
    if np.all(rest == rest[0]):
        return int(rest[0])
    return "inhomogeneous"


def ccnr_homogeneous(d: int, s: int, k: int) -> float:
    """Realignment value ``1 + (d^2 - 1) sqrt(k) / s`` of a ``k``-homogeneous dichotomous state."""
    if not (0 <= k <= s <= d * d and s > 0):
        raise ValueError(f"invalid parameters d={d}, s={s}, k={k}")
    return 1 + (d * d - 1) * math.sqrt(k) / s


def diophantine_solutions(d_min: int, d_max: int) -> list[DiophantineSolution]:
    """Nontrivial integer solutions of ``(k - s) d^2 - k + s^2 = 0``.

    Only the smaller of each pair ``s, d^2 - s`` is kept; both share ``k``.
    """
    if not 2 <= d_min <= d_max:
        raise ValueError(f"need 2 <= d_min <= d_max, got {d_min}, {d_max}")
    out = []
    for d in range(d_min, d_max + 1):
        n = d * d
        for s in range(2, n // 2 + 1):
            num = s * (n - s)
            if num % (n - 1):
                continue
            k = num // (n - 1)
            if k <= 0:
                continue
            out.append(DiophantineSolution(d, s, k, ccnr_homogeneous(d, s, k) - d))
    return out


# --- bitmask machinery ---------------------------------------------------------


@lru_cache(maxsize=8)
def _shift_tables(dims: BipartiteDims) -> np.ndarray:
    """Byte lookup tables of the cyclic shifts: ``tables[g, byte, value]``."""
    d_A, d_B = dims
    n = dims.total
    nbytes = (n + 7) // 8
    tables = np.zeros((n, nbytes, 256), dtype=np.int64)
    for g, (r, c) in enumerate(itertools.product(range(d_A), range(d_B))):
        target = [((k // d_B + r) % d_A) * d_B + (k % d_B + c) % d_B for k in range(n)]
        for byte in range(nbytes):
            for v in range(256):
                out = 0
                for bit in range(8):
                    k = byte * 8 + bit
                    if k < n and v >> bit & 1:
                        out |= 1 << target[k]
                tables[g, byte, v] = out
    return tables


def shifted_masks(masks: np.ndarray, dims) -> np.ndarray:
    """All cyclic shifts of each mask, shape ``(d_A d_B, len(masks))``; row ``r d_B + c`` shifts by ``(r, c)``."""
    dims = as_dims(dims)
    tables = _shift_tables(dims)
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros((tables.shape[0], masks.size), dtype=np.int64)
    for byte in range(tables.shape[1]):
        out |= tables[:, byte, (masks >> (8 * byte)) & 0xFF]
    return out


def canonical_masks(masks: np.ndarray, dims) -> np.ndarray:
    """Least mask in each orbit under cyclic row and column shifts."""
    return shifted_masks(masks, dims).min(axis=0)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    c = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        c += (x & np.uint64(1)).astype(np.int64)
        x >>= np.uint64(1)
    return c


def _bits(masks: np.ndarray, n: int) -> np.ndarray:
    return ((np.asarray(masks, dtype=np.int64)[:, None] >> np.arange(n)) & 1).astype(float)


@lru_cache(maxsize=8)
def _projector_data(dims: BipartiteDims):
    """Correlation matrices and partial transposes of the Bell projectors, flattened per cell."""
    n = dims.total
    corr, pts = [], []
    for a in range(dims.d_A):
        for b in range(dims.d_B):
            v = bell_state(dims, a, b)
            proj = np.outer(v, v.conj())
            corr.append(correlation_matrix(proj, dims).c.ravel())
            pts.append(partial_transpose(proj, dims, "B").ravel())
    return np.array(corr), np.array(pts), n


def batch_ccnr(masks: np.ndarray, dims) -> np.ndarray:
    """Realignment values ``||C||_1`` of the dichotomous states of a batch of masks."""
    dims = as_dims(dims)
    corr, _, n = _projector_data(dims)
    w = _bits(masks, n)
    w /= w.sum(axis=1, keepdims=True)
    c = (w @ corr).reshape(-1, dims.d_A**2, dims.d_B**2)
    return np.linalg.svd(c, compute_uv=False).sum(axis=-1)


def batch_min_pt_eigenvalue(masks: np.ndarray, dims) -> np.ndarray:
    dims = as_dims(dims)
    _, pts, n = _projector_data(dims)
    w = _bits(masks, n)
    w /= w.sum(axis=1, keepdims=True)
    m = (w @ pts).reshape(-1, n, n)
    m = (m + m.conj().transpose(0, 2, 1)) / 2
    return np.linalg.eigvalsh(m)[:, 0]


def batch_homogeneity(masks: np.ndarray, dims) -> np.ndarray:
    """Common link count of each mask, ``-1`` where inhomogeneous."""
    dims = as_dims(dims)
    masks = np.asarray(masks, dtype=np.int64)
    sh = shifted_masks(masks, dims)
    # shifting S by -D and intersecting with S counts the points that D keeps inside
    inv = [((-r) % dims.d_A) * dims.d_B + (-c) % dims.d_B for r in range(dims.d_A) for c in range(dims.d_B)]
    s = _popcount(masks)
    stay = np.stack([_popcount(masks & sh[g]) for g in inv])
    out = s[None, :] - stay
    rest = out[1:]
    if rest.shape[0] == 0:
        return np.zeros(masks.size, dtype=np.int64)
    return np.where(np.all(rest == rest[0], axis=0), rest[0], -1)


# --- exhaustive search ---------------------------------------------------------


def _parse_predicates(predicates) -> tuple[list[str], int | None]:
    names, k = [], None
    for p in predicates:
        p = p.strip()
        if p == "ccnr":
            p = "ccnr_detected"
        if p.startswith("homogeneous"):
            inner = p[len("homogeneous"):].strip("()= ")
            k = int(inner) if inner else None
            p = "homogeneous"
        if p not in PREDICATES:
            raise ValueError(f"unknown predicate {p!r}; choose from {PREDICATES}")
        names.append(p)
    return names, k


def _evaluate(masks: np.ndarray, dims: BipartiteDims, names: list[str], k: int | None):
    """Apply predicates cheapest first; returns surviving masks and their measured values.

    The realignment value and the least partial-transpose eigenvalue are
    always reported for the survivors.
    """
    info: dict = {}

    def apply(key, values, keep):
        nonlocal masks, info
        info = {a: v[keep] for a, v in info.items()}
        info[key] = values[keep]
        masks = masks[keep]

    if "homogeneous" in names:
        h = batch_homogeneity(masks, dims)
        apply("homogeneity", h, h >= 0 if k is None else h == k)
    if "phase_condition" in names:
        ok = np.array([phase_condition_check(SupportSet.from_mask(dims, int(m)))["holds"] for m in masks], dtype=bool)
        apply("phase_condition", ok, ok)
    v = batch_ccnr(masks, dims) if masks.size else np.zeros(0)
    apply("ccnr", v, v > np.sqrt(dims.total) + ATOL if "ccnr_detected" in names else np.ones(v.size, dtype=bool))
    e = batch_min_pt_eigenvalue(masks, dims) if masks.size else np.zeros(0)
    apply("min_pt_eig", e, e >= -ATOL if "ppt" in names else np.ones(e.size, dtype=bool))
    return masks, info


def _combination_masks(n: int, size: int, start: int, stop: int) -> np.ndarray:
    it = itertools.islice(itertools.combinations(range(n), size), start, stop)
    idx = np.fromiter(itertools.chain.from_iterable(it), dtype=np.int64)
    if size == 0 or idx.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.bitwise_or.reduce(np.left_shift(1, idx.reshape(-1, size)), axis=1)


def _search_chunk(args):
    dims, size, start, stop, names, k = args
    masks = _combination_masks(dims.total, size, start, stop)
    masks = masks[canonical_masks(masks, dims) == masks]
    hits, info = _evaluate(masks, dims, names, k)
    return [{"mask": int(m), **{key: v[i].item() for key, v in info.items()}} for i, m in enumerate(hits)]


@dataclass(frozen=True)
class SearchHit:
    support: SupportSet
    values: dict

    def to_json(self) -> dict:
        return {**self.support.to_json(), **self.values}


def enumeration_count(dims, size) -> int:
    dims = as_dims(dims)
    if size == "any":
        return 2**dims.total - 1
    return math.comb(dims.total, int(size))


def exhaustive_dichotomous_search(
    dims,
    size="any",
    predicates=("ppt", "ccnr_detected"),
    workers: int | None = None,
    chunk: int = 200_000,
    budget: int = DEFAULT_BUDGET,
    checkpoint: str | None = None,
) -> list[SearchHit]:
    """Orbit representatives of all supports passing every predicate.

    Supports of the given size (or of every size) are enumerated in
    lexicographic order of combinations and split into index ranges.
    Only the least mask of each orbit under cyclic row and column shifts is
    kept.  With ``checkpoint`` the finished ranges and hits are stored in a
    JSON file after each range, and a rerun resumes from it.
    """
    dims = as_dims(dims)
    names, k = _parse_predicates(predicates)
    if "phase_condition" in names and dims.d_A != dims.d_B:
        raise NotImplementedError("the phase condition is only available for equal local dimensions")
    total = enumeration_count(dims, size)
    if size == "any" and dims.total > 16:
        raise ValueError(f"full enumeration needs {total} supports; fix the size for grids above 16 cells")
    if total > budget:
        raise ValueError(f"enumeration needs {total} supports, above the budget of {budget}")
    sizes = range(1, dims.total + 1) if size == "any" else [int(size)]
    tasks = []
    for s in sizes:
        m = math.comb(dims.total, s)
        tasks += [(dims, s, a, min(a + chunk, m), names, k) for a in range(0, m, chunk)]

    state = {"done": [], "hits": []}
    if checkpoint and os.path.exists(checkpoint):
        with open(checkpoint) as fh:
            state = json.load(fh)
        log.info("resuming from %s with %d finished ranges", checkpoint, len(state["done"]))
    done = {tuple(t) for t in state["done"]}
    todo = [t for t in tasks if (t[1], t[2]) not in done]

    def record(task, rows):
        state["done"].append([task[1], task[2]])
        state["hits"].extend(rows)
        if checkpoint:
            tmp = checkpoint + ".tmp"
            with open(tmp, "w") as fh:
                json.dump(state, fh)
            os.replace(tmp, checkpoint)

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(todo) <= 1:
        for t in todo:
            record(t, _search_chunk(t))
    else:
        with ProcessPoolExecutor(workers) as pool:
            for t, rows in zip(todo, pool.map(_search_chunk, todo)):
                record(t, rows)

    merged = {}
    for row in state["hits"]:
        merged.setdefault(row["mask"], row)
    return [
        SearchHit(SupportSet.from_mask(dims, m), {a: v for a, v in merged[m].items() if a != "mask"})
        for m in sorted(merged)
    ]


def orbit(S: SupportSet) -> set[int]:
    """Masks of all cyclic row and column shifts of ``S``."""
    return {int(m) for m in shifted_masks(np.array([S.mask]), S.dims)[:, 0]}


# --- randomized search for homogeneous supports --------------------------------


def homogeneous_support_search(d: int, size: int, k: int, seed: int = 0, max_steps: int = 20_000, tenure: int = 7):
    """Tabu search for a ``k``-homogeneous support of the given size on a ``d x d`` grid.

    Each step makes the best swap of a point in the support with one outside
    it, scored by the squared deviation of the link counts from ``k``;
    recently moved cells are frozen for ``tenure`` steps and ties are broken
    at random.  Returns ``None`` when nothing is found, which proves nothing.
    """
    n = d * d
    if (k - size) * n - k + size * size != 0:
        raise ValueError(f"no {k}-homogeneous support of size {size} can exist for d = {d}")
    rng = np.random.default_rng(seed)
    cells = np.arange(n)
    # moves[g, c] is the cell reached from c by the g-th nonzero displacement
    moves = np.array([((cells // d + mu) % d) * d + (cells % d + nu) % d for mu in range(d) for nu in range(d)])[1:]
    grid = np.zeros(n, dtype=bool)
    grid[rng.choice(n, size, replace=False)] = True
    frozen = np.zeros(n, dtype=int)
    for step in range(max_steps):
        ins, outs = np.flatnonzero(grid), np.flatnonzero(~grid)
        ii, jj = np.repeat(ins, outs.size), np.tile(outs, ins.size)
        cand = np.repeat(grid[None], ii.size, axis=0)
        rows = np.arange(ii.size)
        cand[rows, ii], cand[rows, jj] = False, True
        links = (cand[:, None, :] & ~cand[:, moves]).sum(axis=-1)
        cost = ((links - k) ** 2).sum(axis=1)
        if cost.min() == 0:
            return SupportSet.from_matrix((d, d), cand[np.argmin(cost)].reshape(d, d))
        allowed = (frozen[ii] <= step) & (frozen[jj] <= step)
        score = np.where(allowed, cost, np.iinfo(np.int64).max // 2) + rng.random(cost.size) * 0.5
        b = int(np.argmin(score))
        grid = cand[b]
        frozen[ii[b]] = frozen[jj[b]] = step + tenure
    return None


# --- PT-invariant family -------------------------------------------------------


def pt_invariant_support(d: int) -> list[tuple[int, int]]:
    """Fourier indices allowed for states invariant under partial transposition."""
    if d < 2:
        raise ValueError(f"d must be at least 2, got {d}")
    out = [(0, nu) for nu in range(d)]
    if d % 2 == 0:
        out += [(d // 2, nu) for nu in range(0, d, 2)]
    return out


def _pt_parametrization(d: int):
    """Linear map from real parameters to the Fourier entries on the invariant support.

    Returns ``(basis, offset)`` with ``lam = offset + basis @ params`` flattened.
    """
    support = set(pt_invariant_support(d))
    cols, seen = [], set()
    for mu, nu in sorted(support):
        if (mu, nu) == (0, 0) or (mu, nu) in seen:
            continue
        partner = ((-mu) % d, (-nu) % d)
        seen |= {(mu, nu), partner}
        re = np.zeros((d, d), dtype=complex)
        re[mu, nu] += 1
        re[partner] += 1
        cols.append(re.ravel() / (1 if partner != (mu, nu) else 2))
        if partner != (mu, nu):
            im = np.zeros((d, d), dtype=complex)
            im[mu, nu], im[partner] = 1j, -1j
            cols.append(im.ravel())
    offset = np.zeros(d * d, dtype=complex)
    offset[0] = 1
    return np.array(cols).T, offset


def maximize_ccnr_pt_invariant(d: int, restarts: int = 64, seed: int = 0) -> dict:
    """Heuristic maximum of ``sum |lambda|`` over PT-invariant Bell diagonal states.

    The probabilities are linear in the free Fourier parameters, so
    positivity is a set of linear inequalities.  Each restart draws a
    feasible start with ``sum_{(mu,nu) != 0} |lambda| <= 1`` and runs SLSQP
    under these constraints.  Only feasible end points are reported.
    """
    if d < 2:
        raise ValueError(f"d must be at least 2, got {d}")
    basis, offset = _pt_parametrization(d)
    n = d * d
    w = np.exp(-2j * np.pi * np.arange(d) / d)
    inv = np.kron(np.vander(w, d, increasing=True), np.vander(w, d, increasing=True)) / n
    # p = Re(inv @ lam), lam linear in params
    A = np.real(inv @ basis)
    b = np.real(inv @ offset)
    cons = [{"type": "ineq", "fun": lambda t: A @ t + b, "jac": lambda t: A}]

    def neg(t):
        lam = offset + basis @ t
        mag = np.abs(lam)
        g = np.real(np.conj(lam) / np.where(mag > 1e-14, mag, 1.0)) @ np.real(basis)
        g += np.imag(np.conj(lam) / np.where(mag > 1e-14, mag, 1.0)) @ np.imag(basis)
        return -mag.sum(), -g

    rng = np.random.default_rng(seed)
    best_val, best_lam = 1.0, offset.copy()
    m = basis.shape[1]
    for _ in range(restarts):
        t0 = rng.normal(size=m)
        lam0 = basis @ t0
        t0 /= max(np.abs(lam0).sum(), 1e-12) / rng.uniform(0, 1)
        res = minimize(neg, t0, jac=True, method="SLSQP", constraints=cons, options={"maxiter": 500, "ftol": 1e-12})
        for t in (res.x, t0):
            if np.min(A @ t + b) < -ATOL:
                continue
            lam = offset + basis @ t
            val = float(np.abs(lam).sum())
            if val > best_val:
                best_val, best_lam = val, lam
    F = FourierMatrix((d, d), best_lam.reshape(d, d))
    probabilities_from_fourier(F)  # raises if infeasible
    return {"best_value": best_val, "best_lambda": F}
