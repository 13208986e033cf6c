"""Discretized horizontal controls and their RK4 flow.

A ControlPath stores frame-coordinate controls u on n uniform steps of [0, 1];
the driven path solves gamma' = sum_l u_l(t) X_l(gamma) with u piecewise
constant per step.  Integration is classical RK4 per control step, batched
over leading axes, and `integrate_adjoint` back-propagates exactly through
the discrete RK4 graph (one gradient call costs about two forward passes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SubRiemannianStructure


@dataclass
class ControlPath:
    """Controls in frame coordinates: array (n_steps, m), dt = 1/n_steps."""
    controls: np.ndarray

    def __post_init__(self):
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.ndim != 2:
            raise ValueError("controls must be (n_steps, m)")

    @property
    def n_steps(self):
        return self.controls.shape[0]

    @property
    def m(self):
        return self.controls.shape[1]

    @property
    def dt(self):
        return 1.0 / self.n_steps

    @property
    def energy(self):
        return float(np.sum(self.controls ** 2) * self.dt)


def energy(c: ControlPath) -> float:
    """I = sum_k |u_k|^2 dt."""
    return c.energy


def _velocity(s, x, u):
    """gamma' = F(x) u for batched states x (..., d) and controls u (..., m)."""
    return (s.frame(x) @ u[..., None])[..., 0]


def integrate_controls_array(s: SubRiemannianStructure, x0, controls):
    """RK4 flow of batched controls.

    controls: (..., n_steps, m); x0: (..., d) or (d,) broadcast over the batch.
    Returns trajectory (..., n_steps + 1, d) plus the stage states needed by
    the adjoint pass, shape (..., n_steps, 3, d).
    """
    controls = np.asarray(controls, dtype=float)
    batch = controls.shape[:-2]
    n = controls.shape[-2]
    dt = 1.0 / n
    x0 = np.asarray(x0, dtype=float)
    x = np.broadcast_to(x0, batch + (s.dim,)).copy()

    traj = np.empty(batch + (n + 1, s.dim))
    stages = np.empty(batch + (n, 3, s.dim))
    traj[..., 0, :] = x
    for k in range(n):
        u = controls[..., k, :]
        k1 = _velocity(s, x, u)
        a2 = x + 0.5 * dt * k1
        k2 = _velocity(s, a2, u)
        a3 = x + 0.5 * dt * k2
        k3 = _velocity(s, a3, u)
        a4 = x + dt * k3
        k4 = _velocity(s, a4, u)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        stages[..., k, 0, :] = a2
        stages[..., k, 1, :] = a3
        stages[..., k, 2, :] = a4
        traj[..., k + 1, :] = x
    return traj, stages


def integrate_adjoint(s: SubRiemannianStructure, traj, stages, controls,
                      terminal_grad, node_grads=None):
    """Exact gradient of sum_k phi_k(x_k) + phi_N(x_N) w.r.t. the controls.

    terminal_grad: (..., d) seed at the final state; node_grads (optional):
    (..., n_steps + 1, d) per-node seeds added along the backward sweep.
    Returns (..., n_steps, m).
    """
    controls = np.asarray(controls, dtype=float)
    n = controls.shape[-2]
    dt = 1.0 / n
    lam = np.array(terminal_grad, dtype=float, copy=True)
    if node_grads is not None:
        lam = lam + node_grads[..., n, :]
    grad_u = np.empty_like(controls)

    m = controls.shape[-1]
    for k in range(n - 1, -1, -1):
        u = controls[..., k, :]
        # all four RK4 stage points in one stacked evaluation
        pts = np.concatenate([traj[..., k, :][..., None, :],
                              stages[..., k, :, :]], axis=-2)   # (..., 4, d)
        fr = s.frame(pts)                                       # (..., 4, d, m)
        jac = s.frame_jacobians(pts)                            # (..., 4, m, d, d)
        # sum_l u_l DX_l at each stage (short loop beats einsum on views)
        jx = u[..., 0, None, None, None] * jac[..., :, 0, :, :]
        for l in range(1, m):
            jx = jx + u[..., l, None, None, None] * jac[..., :, l, :, :]

        w4 = (dt / 6.0) * lam
        bx4 = (w4[..., None, :] @ jx[..., 3, :, :])[..., 0, :]
        w3 = (dt / 3.0) * lam + dt * bx4
        bx3 = (w3[..., None, :] @ jx[..., 2, :, :])[..., 0, :]
        w2 = (dt / 3.0) * lam + 0.5 * dt * bx3
        bx2 = (w2[..., None, :] @ jx[..., 1, :, :])[..., 0, :]
        w1 = (dt / 6.0) * lam + 0.5 * dt * bx2
        bx1 = (w1[..., None, :] @ jx[..., 0, :, :])[..., 0, :]

        gu = (w1[..., None, :] @ fr[..., 0, :, :])[..., 0, :]
        gu += (w2[..., None, :] @ fr[..., 1, :, :])[..., 0, :]
        gu += (w3[..., None, :] @ fr[..., 2, :, :])[..., 0, :]
        gu += (w4[..., None, :] @ fr[..., 3, :, :])[..., 0, :]
        grad_u[..., k, :] = gu
        lam = lam + bx1 + bx2 + bx3 + bx4
        if node_grads is not None:
            lam = lam + node_grads[..., k, :]
    return grad_u


def integrate_control(s: SubRiemannianStructure, x0, c: ControlPath):
    """Integrate one control path; flags the first chart-domain exit.

    Returns (trajectory (n_steps + 1, d), exit_index or None).
    """
    s.require_in_domain(x0)
    traj, _ = integrate_controls_array(s, np.asarray(x0, dtype=float), c.controls)
    inside = s.in_domain(traj)
    exit_index = None
    if not np.all(inside):
        exit_index = int(np.argmin(inside))
    return traj, exit_index


def reparametrize_constant_speed(c: ControlPath) -> ControlPath:
    """Resample the controls to constant speed at equal total arc length.

    Never increases the energy (Cauchy-Schwarz: I >= (sum |u_k| dt)^2 with
    equality iff the speed is constant).
    """
    u = c.controls
    n = c.n_steps
    dt = c.dt
    speeds = np.linalg.norm(u, axis=1)
    lengths = speeds * dt
    total = float(np.sum(lengths))
    if total <= 0.0:
        return ControlPath(np.zeros_like(u))
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    new_u = np.zeros_like(u)
    for j in range(n):
        a = total * j / n
        b = total * (j + 1) / n
        # arc-length-weighted mean of the unit directions over [a, b)
        vec = np.zeros(c.m)
        for k in range(n):
            if lengths[k] == 0.0:
                continue
            lo = max(a, cum[k])
            hi = min(b, cum[k + 1])
            if hi > lo:
                vec += (hi - lo) * u[k] / speeds[k]
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            new_u[j] = total * vec / norm
    return ControlPath(new_u)
