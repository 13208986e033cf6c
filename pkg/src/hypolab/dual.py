"""Dual certificates: grid-checked sub-unit-gradient functions.

A certificate is a pair (w_minus, w_plus) of chart functions with
a(grad w, grad w) = sum_l (X_l w)^2 <= 1 on a check grid and w_plus = w_minus
on sampled points of the target set.  An admissible pair certifies the lower
bound w_plus(y) - w_minus(x) on d(x, A, y); with A absent (w_plus = w_minus)
it bounds d(x, y), and the vanishing-on-A form bounds d(x, A) by w(x).
Certificates are *checked*, never synthesized, and the bound is numerical
(finite grid, tolerance TOL_GRAD), not rigorous.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .distance import TOL_EQ, TOL_GRAD
from .geometry import SubRiemannianStructure
from .sets import ClosedSet


@dataclass
class DualCertificate:
    """Candidate dual pair with its check grid.

    `grid` is an (n_points, d) array of chart points on which the gradient
    bound is verified; populated results live in the fields below after
    `dual_certificate_check` runs.
    """
    w_minus: Callable[[np.ndarray], np.ndarray]
    w_plus: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grid: Optional[np.ndarray] = None
    h_grad: float = 1e-5
    max_gradient_norm2: float = field(default=np.nan, init=False)
    admissible: bool = field(default=False, init=False)

    def functions(self):
        wp = self.w_plus if self.w_plus is not None else self.w_minus
        return self.w_minus, wp


def check_grid_box(lo, hi, per_axis=9):
    """Regular grid over a box, endpoints included."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [np.linspace(lo[j], hi[j], per_axis) for j in range(lo.size)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)


def horizontal_gradient_norm2(s: SubRiemannianStructure, w, pts, h=1e-5):
    """a(grad w, grad w)(x) = sum_l (X_l w)^2 by central directional differences."""
    pts = np.asarray(pts, dtype=float)
    fr = s.frame(pts)                                  # (..., d, m)
    out = np.zeros(pts.shape[:-1])
    for l in range(s.m):
        step = h * fr[..., :, l]
        # step h*X_l makes the quotient the directional derivative <grad w, X_l>
        dw = (np.asarray(w(pts + step)) - np.asarray(w(pts - step))) / (2.0 * h)
        out = out + dw ** 2
    return out


def dual_certificate_check(s: SubRiemannianStructure, cert: DualCertificate,
                           x, y=None, target: Optional[ClosedSet] = None,
                           set_samples=None, tol_grad=TOL_GRAD, tol_eq=TOL_EQ):
    """Validate a certificate on its grid and return the certified lower bound.

    Modes:
      * y given, no target: bound on d(x, y) = w(y) - w(x);
      * y and target: bound on d(x, A, y) = w_plus(y) - w_minus(x), requiring
        w_plus = w_minus on set samples;
      * target only: bound on d(x, A) = w(x), requiring w = 0 on set samples.
    Non-admissible certificates return bound 0 with admissible=False.
    """
    if cert.grid is None:
        raise ValueError("certificate needs a check grid")
    wm, wp = cert.functions()
    g2 = np.maximum(horizontal_gradient_norm2(s, wm, cert.grid, cert.h_grad),
                    horizontal_gradient_norm2(s, wp, cert.grid, cert.h_grad))
    cert.max_gradient_norm2 = float(np.max(g2))
    admissible = cert.max_gradient_norm2 <= 1.0 + tol_grad

    if target is not None:
        if set_samples is None:
            set_samples = _sample_set(target, cert.grid)
        if set_samples.shape[0] == 0:
            admissible = False
        else:
            if y is None:
                mism = np.max(np.abs(np.asarray(wm(set_samples))))
            else:
                mism = np.max(np.abs(np.asarray(wp(set_samples))
                                     - np.asarray(wm(set_samples))))
            admissible = admissible and (mism <= tol_eq)

    cert.admissible = bool(admissible)
    if not admissible:
        return 0.0
    x = np.asarray(x, dtype=float)
    if y is None:
        return float(np.asarray(wm(x[None, :]))[0])
    y = np.asarray(y, dtype=float)
    return float(np.asarray(wp(y[None, :]))[0] - np.asarray(wm(x[None, :]))[0])


def _sample_set(target: ClosedSet, grid):
    mask = target(grid) >= 0.0
    samples = grid[mask]
    extra = [np.asarray(h, dtype=float) for h in target.projection_hint]
    if extra:
        samples = np.concatenate([samples, np.stack(extra)], axis=0) \
            if samples.size else np.stack(extra)
    return samples


def linear_certificate(coeffs, offset=0.0):
    """w(z) = <coeffs, z> + offset as a vectorized chart function."""
    coeffs = np.asarray(coeffs, dtype=float)

    def w(z):
        return np.einsum("...i,i->...", np.asarray(z, dtype=float), coeffs) + offset

    return w
