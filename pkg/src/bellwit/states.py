"""Named Bell diagonal states used as fixtures and by the command line."""

from __future__ import annotations

import numpy as np

from .bds import ProbabilityMatrix, werner
from .search import SupportSet, dichotomous_state

# dichotomous supports, given as 0/1 grids
_GRIDS = {
    # the 4x4 PPT state with realignment value 6, 4-homogeneous
    "bound-4x4": [[1, 0, 0, 0], [0, 1, 1, 1], [0, 0, 1, 0], [0, 0, 1, 0]],
    # the two PPT 4x6 states detected by realignment
    "bound-4x6-a": [[1, 0, 1, 0, 0, 0], [1, 1, 1, 0, 1, 0], [1, 0, 1, 0, 0, 0], [0, 0, 0, 1, 0, 1]],
    "bound-4x6-b": [[1, 0, 0, 0, 1, 0], [1, 1, 1, 1, 1, 0], [1, 0, 0, 0, 1, 0], [0, 0, 0, 0, 0, 1]],
    # 3x3 support without the projector property
    "block-3x3": [[1, 0, 0], [0, 1, 1], [0, 1, 1]],
    # 3x3 support with the projector property, separable
    "diagonal-3x3": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    # 3x3 PPT state with realignment value 17/5 > 3, without the projector property
    "cross-3x3": [[1, 1, 1], [1, 0, 0], [1, 0, 0]],
}


def menon_6x6() -> SupportSet:
    """A 9-homogeneous support of size 15 on the 6x6 grid.

    Built from ``Z_6^2 = Z_2^2 x Z_3^2``: the cells over ``(0, 0)`` in
    ``Z_2^2`` take the complement of one line through the origin of
    ``Z_3^2``, the other three cosets take the three remaining lines.
    """
    lines = [
        {(t, 0) for t in range(3)},
        {(0, t) for t in range(3)},
        {(t, t) for t in range(3)},
        {(t, 2 * t % 3) for t in range(3)},
    ]
    everything = {(a, b) for a in range(3) for b in range(3)}
    parts = {(0, 0): everything - lines[0], (0, 1): lines[1], (1, 0): lines[2], (1, 1): lines[3]}
    pts = [(a, b) for a in range(6) for b in range(6) if (a % 3, b % 3) in parts[(a % 2, b % 2)]]
    return SupportSet((6, 6), pts)


def support(name: str) -> SupportSet:
    if name == "homogeneous-6x6":
        return menon_6x6()
    try:
        grid = np.array(_GRIDS[name])
    except KeyError:
        raise ValueError(f"unknown support {name!r}; choose from {sorted(SUPPORTS)}") from None
    return SupportSet.from_matrix(grid.shape, grid)


SUPPORTS = tuple(_GRIDS) + ("homogeneous-6x6",)
BUILTINS = ("werner", "bell", "maximally-mixed") + SUPPORTS


def builtin(name: str, q: float | None = None, alpha: int = 0, beta: int = 0, dims=(2, 2)) -> ProbabilityMatrix:
    """Probability matrix of a named state.

    ``werner`` needs ``q``; ``bell`` puts all weight on ``(alpha, beta)`` in
    ``dims``; ``maximally-mixed`` is uniform on ``dims``.
    """
    if name == "werner":
        if q is None:
            raise ValueError("the werner state needs q")
        return werner(q)
    if name == "bell":
        return ProbabilityMatrix.point(dims, alpha, beta)
    if name == "maximally-mixed":
        return ProbabilityMatrix.uniform(dims)
    return dichotomous_state(support(name))
