"""Distance to infinity along box exhaustions, and the Hsu-condition check.

d(x, infinity) is the supremum over an exhaustion of d(x, A_n) where A_n is
the complement of the n-th relatively compact piece.  For domain-restricted
models the n-th piece excludes a shrinking neighborhood of the deleted set
(gap <= eps_n counts as escaped), so escape to the chart-domain boundary is
measured as well as escape to Euclidean infinity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distance import CAP_INF, DistanceOptions, distance, distance_to_set, tol_dist
from .geometry import SubRiemannianStructure
from .sets import ClosedSet, box_complement, union


def default_exhaustion(half_widths: Sequence[float]):
    """Centered-cube exhaustion given by a nondecreasing list of half-widths."""
    return [float(h) for h in half_widths]


def _escape_set(s: SubRiemannianStructure, half_width, eps):
    """Complement of (box of given half-width) intersect {gap > eps}."""
    d = s.dim
    box = box_complement(-half_width * np.ones(d), half_width * np.ones(d))
    if not s.domain.restricted:
        return box
    gap_set = ClosedSet(level=lambda z: eps - s.boundary_gap(z),
                        name=f"gap<={eps:g}")
    return union(box, gap_set, name=f"escape(h={half_width:g},eps={eps:g})")


def distance_to_infinity(s: SubRiemannianStructure, x,
                         exhaustion: Optional[Sequence[float]] = None,
                         opts: Optional[DistanceOptions] = None,
                         cap_inf: float = CAP_INF,
                         stabilize_rel: float = 0.01):
    """sup_n d(x, A_n) over the exhaustion; +inf when values pass cap_inf.

    Returns (value, converged): converged means consecutive values stabilized
    within stabilize_rel before the list ran out.
    """
    opts = opts or DistanceOptions(n_steps=48, restarts=4, maxiter=150)
    x = np.asarray(x, dtype=float)
    s.require_in_domain(x)
    if exhaustion is None:
        exhaustion = default_exhaustion([1, 2, 4, 8, 16])

    eps0 = 0.25
    if s.domain.restricted:
        g0 = float(s.boundary_gap(x))
        if np.isfinite(g0):
            eps0 = min(0.25, 0.5 * g0)

    best = 0.0
    prev = None
    for n, h in enumerate(exhaustion):
        eps_n = eps0 * 0.5 ** n
        target = _escape_set(s, h, eps_n)
        res = distance_to_set(s, x, target, opts)
        best = max(best, res.value)
        if best > cap_inf:
            return np.inf, True
        if prev is not None and abs(best - prev) <= stabilize_rel * (1.0 + best):
            return best, True
        prev = best
    return best, False


@dataclass
class HsuRecord:
    in_S: bool
    d: float
    dx_inf: float
    dy_inf: float


def hsu_condition(s: SubRiemannianStructure, x, y,
                  exhaustion: Optional[Sequence[float]] = None,
                  opts: Optional[DistanceOptions] = None,
                  dist_opts: Optional[DistanceOptions] = None) -> HsuRecord:
    """Membership of (x, y) in {d(x, y) <= d(x, inf) + d(y, inf)}.

    The comparison allows the distance tolerance on both sides, so boundary
    cases (equality) report True.
    """
    d_xy = distance(s, x, y, dist_opts).value
    dx_inf, _ = distance_to_infinity(s, x, exhaustion, opts)
    dy_inf, _ = distance_to_infinity(s, y, exhaustion, opts)
    slack = 3.0 * tol_dist(d_xy)
    in_s = bool(d_xy <= dx_inf + dy_inf + slack)
    return HsuRecord(in_S=in_s, d=float(d_xy), dx_inf=float(dx_inf),
                     dy_inf=float(dy_inf))
