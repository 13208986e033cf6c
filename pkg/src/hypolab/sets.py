"""Closed target sets A = {level >= 0} given by vectorized level functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass
class ClosedSet:
    """A closed set {level >= 0}; {level < 0} is its open complement.

    `gradient` is optional and analytic when available; otherwise central
    finite differences with step `h_grad` are used.  `projection_hint` seeds
    multi-start searches on the boundary {level = 0}.
    """
    level: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    projection_hint: Sequence = field(default_factory=list)
    name: str = "set"
    h_grad: float = 1e-6

    def __call__(self, x):
        return np.asarray(self.level(np.asarray(x, dtype=float)), dtype=float)

    def contains(self, x):
        return self(x) >= 0.0

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        d = x.shape[-1]
        out = np.empty(x.shape)
        for j in range(d):
            dx = np.zeros(d)
            dx[j] = self.h_grad
            out[..., j] = (self(x + dx) - self(x - dx)) / (2.0 * self.h_grad)
        return out

    def project_to_boundary(self, z, direction=None, max_expand=60):
        """Root-find level = 0 from z along a direction (default: down the gradient).

        Returns the boundary point, or None when no sign change is found.
        """
        z = np.asarray(z, dtype=float)
        lz = float(self(z))
        if abs(lz) < 1e-12:
            return z
        if direction is None:
            g = self.grad(z)
            ng = np.linalg.norm(g)
            if ng == 0.0:
                return None
            direction = -np.sign(lz) * g / ng
        else:
            direction = np.asarray(direction, dtype=float)
            nd = np.linalg.norm(direction)
            if nd == 0.0:
                return None
            direction = direction / nd
        step = 1e-3
        t_prev, l_prev = 0.0, lz
        for _ in range(max_expand):
            t = step
            lt = float(self(z + t * direction))
            if l_prev * lt <= 0.0:
                # bisect on [t_prev, t]
                a, b, la = t_prev, t, l_prev
                for _ in range(80):
                    mid = 0.5 * (a + b)
                    lm = float(self(z + mid * direction))
                    if la * lm <= 0.0:
                        b = mid
                    else:
                        a, la = mid, lm
                return z + 0.5 * (a + b) * direction
            t_prev, l_prev = t, lt
            step *= 2.0
        return None


def halfspace(normal, offset, name=None):
    """A = {<normal, z> >= offset}."""
    normal = np.asarray(normal, dtype=float)

    def level(x):
        return np.einsum("...i,i->...", np.asarray(x, dtype=float), normal) - offset

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(normal, x.shape).copy()

    hint_base = offset * normal / max(np.dot(normal, normal), 1e-300)
    return ClosedSet(level, gradient, projection_hint=[hint_base],
                     name=name or f"halfspace({normal.tolist()},{offset})")


def outside_ball(center, radius, name=None):
    """A = {|z - center| >= radius} (complement of an open ball)."""
    center = np.asarray(center, dtype=float)

    def level(x):
        return np.linalg.norm(np.asarray(x, dtype=float) - center, axis=-1) - radius

    def gradient(x):
        diff = np.asarray(x, dtype=float) - center
        nrm = np.linalg.norm(diff, axis=-1, keepdims=True)
        return diff / np.maximum(nrm, 1e-300)

    hints = [center + radius * e for e in np.eye(center.size)]
    return ClosedSet(level, gradient, projection_hint=hints,
                     name=name or f"outside_ball(r={radius})")


def box_complement(lo, hi, name=None):
    """A = complement of the open box (lo, hi); level >= 0 outside the box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def level(x):
        x = np.asarray(x, dtype=float)
        return np.max(np.maximum(lo - x, x - hi), axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        low = lo - x
        high = x - hi
        take_low = low > high
        vals = np.where(take_low, low, high)
        idx = np.argmax(vals, axis=-1)
        out = np.zeros(x.shape)
        sign = np.where(np.take_along_axis(take_low, idx[..., None], -1)[..., 0], -1.0, 1.0)
        np.put_along_axis(out, idx[..., None], sign[..., None], -1)
        return out

    return ClosedSet(level, gradient, name=name or "box_complement")


def nowhere(dim, name="nowhere"):
    """Empty monitored set (level = -1 everywhere)."""
    return ClosedSet(lambda x: np.full(np.asarray(x).shape[:-1], -1.0),
                     lambda x: np.zeros(np.asarray(x, dtype=float).shape),
                     name=name)


def union(a: ClosedSet, b: ClosedSet, name=None):
    """Union of closed sets via pointwise max of levels."""
    def level(x):
        return np.maximum(a(x), b(x))

    def gradient(x):
        la, lb = a(x), b(x)
        ga, gb = a.grad(x), b.grad(x)
        pick = (la >= lb)[..., None]
        return np.where(pick, ga, gb)

    return ClosedSet(level, gradient,
                     projection_hint=list(a.projection_hint) + list(b.projection_hint),
                     name=name or f"union({a.name},{b.name})")
