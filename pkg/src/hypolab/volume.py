"""Metric-ball volumes and dimension/doubling/Hoelder diagnostics.

Ball volumes are Monte Carlo integrals of the nu density over the metric ball:
points are sampled uniformly in the Euclidean box of half-width r^(1/step_max)
around the center (step_max = largest bracket length needed at the center),
weighted by density and box volume, and classified by a cheap-mode distance
solve.  An exact lower-bound prefilter (d >= |z - x| / sup ||frame||) discards
the bulk of obvious outsiders before any optimization runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distance import DistanceOptions, distance, distance_batch
from .geometry import DomainError, SubRiemannianStructure, max_bracket_step
from .rng import philox


@dataclass
class VolumeEstimate:
    volume: float
    stderr: float
    n_samples: int
    n_classified: int
    radius: float
    box_half_width: float


def _frame_norm_bound(s, pts, inflation=1.02):
    """Upper bound on ||frame(z)||_2 over the sampled region."""
    fr = s.frame(pts)
    sv = np.linalg.svd(fr, compute_uv=False)
    return inflation * float(np.max(sv[..., 0]))


def _frame_row_bounds(s, pts, inflation=1.02):
    """Upper bounds on each coordinate speed |e_i . frame(z) u| / |u|."""
    fr = s.frame(pts)
    return inflation * np.max(np.linalg.norm(fr, axis=-1), axis=0)


def ball_volume(s: SubRiemannianStructure, x, r, n_samples=20000, seed=0,
                opts: Optional[DistanceOptions] = None,
                step_max: Optional[int] = None,
                batch: int = 4096) -> VolumeEstimate:
    """nu(B(x, r)) by box sampling with cheap-distance membership."""
    if r <= 0.0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    s.require_in_domain(x)
    if step_max is None:
        step_max = max_bracket_step(s, x)
    half = r ** (1.0 / step_max)
    lo, hi = x - half, x + half
    corners = np.stack(np.meshgrid(*[(lo[j], hi[j]) for j in range(s.dim)],
                                   indexing="ij"), axis=-1).reshape(-1, s.dim)
    if s.domain.restricted and not np.all(s.in_domain(corners)):
        raise DomainError("sampling box exits the chart domain; reduce r")
    box_vol = float(np.prod(hi - lo))

    gen = philox(seed, f"ball-volume:{s.name}:{r:g}")
    pts = lo + (hi - lo) * gen.random((n_samples, s.dim))
    c_box = _frame_norm_bound(s, pts)
    c_rows = _frame_row_bounds(s, pts)

    # exact lower bounds d >= |z - x| / C and d >= |z_i - x_i| / C_i rule out
    # the bulk of the box before any optimization runs
    dists = np.linalg.norm(pts - x, axis=1)
    maybe = dists <= r * c_box
    for i in range(s.dim):
        maybe &= np.abs(pts[:, i] - x[i]) <= r * c_rows[i]
    inside = np.zeros(n_samples, dtype=bool)
    idx = np.nonzero(maybe)[0]
    opts = opts or DistanceOptions.cheap(seed=seed)
    for start in range(0, idx.size, batch):
        sel = idx[start:start + batch]
        values, _ = distance_batch(s, x, pts[sel], opts)
        inside[sel] = values <= r

    weights = np.where(inside, s.nu_density(pts), 0.0) * box_vol
    volume = float(np.mean(weights))
    stderr = float(np.std(weights) / np.sqrt(n_samples))
    return VolumeEstimate(volume=volume, stderr=stderr, n_samples=n_samples,
                          n_classified=int(idx.size), radius=float(r),
                          box_half_width=half)


def dimension_estimate(s: SubRiemannianStructure, x, r_grid, n_samples=20000,
                       seed=0, opts: Optional[DistanceOptions] = None):
    """Least-squares slope of log nu(B(x, r)) against log r.

    Returns (slope, estimates).  Raises when any volume estimate is
    non-positive (insufficient samples).
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size < 4 or np.any(np.diff(r_grid) >= 0.0):
        raise ValueError("need a decreasing grid of at least 4 radii")
    estimates = []
    for i, r in enumerate(r_grid):
        est = ball_volume(s, x, float(r), n_samples=n_samples, seed=seed + i,
                          opts=opts)
        if est.volume <= 0.0:
            raise RuntimeError(
                f"ball volume estimate non-positive at r={r:g}; "
                f"increase n_samples")
        estimates.append(est)
    logs = np.log([e.volume for e in estimates])
    slope = float(np.polyfit(np.log(r_grid), logs, 1)[0])
    return slope, estimates


def doubling_ratio(s: SubRiemannianStructure, x, r, n_samples=20000, seed=0,
                   opts: Optional[DistanceOptions] = None):
    """nu(B(x, 2r)) / nu(B(x, r)); finite and >= 1 for any metric measure."""
    small = ball_volume(s, x, r, n_samples=n_samples, seed=seed, opts=opts)
    big = ball_volume(s, x, 2.0 * r, n_samples=n_samples, seed=seed + 1, opts=opts)
    if small.volume <= 0.0:
        raise RuntimeError("inner ball volume estimate non-positive")
    ratio = big.volume / small.volume
    rel = np.sqrt((small.stderr / max(small.volume, 1e-300)) ** 2
                  + (big.stderr / max(big.volume, 1e-300)) ** 2)
    return float(ratio), float(ratio * rel), (small, big)


def chart_exponent(s: SubRiemannianStructure, x, direction, h_grid,
                   opts: Optional[DistanceOptions] = None, seed=0):
    """Hoelder exponent: slope of log d(x, x + h * direction) against log h."""
    h_grid = np.asarray(h_grid, dtype=float)
    if np.any(h_grid <= 0.0) or np.any(np.diff(h_grid) >= 0.0):
        raise ValueError("need a decreasing positive h grid")
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    opts = opts or DistanceOptions(seed=seed)
    vals = []
    for h in h_grid:
        res = distance(s, x, x + h * direction, opts)
        vals.append(res.value)
    vals = np.asarray(vals)
    if np.any(vals <= 0.0):
        raise RuntimeError("distance along the direction collapsed to zero")
    slope = float(np.polyfit(np.log(h_grid), np.log(vals), 1)[0])
    return slope, vals
