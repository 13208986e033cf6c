"""Carnot-Caratheodory distances by penalized energy minimization.

The primal problem min I(u) subject to endpoint constraints is solved with a
quadratic penalty whose weight follows the schedule RHO_SCHEDULE, L-BFGS-B on
the stacked restart batch (the objective is separable across restarts, so the
joint minimum is the per-restart minimum), and exact discrete-adjoint
gradients from controls.integrate_adjoint.  Restart seeds are a straight
least-squares control, a rotating control (which unlocks bracket directions),
and randomized piecewise-linear perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .controls import (ControlPath, integrate_adjoint, integrate_controls_array,
                       reparametrize_constant_speed)
from .geometry import SubRiemannianStructure
from .rng import substream
from .sets import ClosedSet

# tolerance policy (relative tolerances scale as tol * (1 + value))
TOL_DIST_REL = 0.01
TOL_GAP_REL = 0.02
TOL_GRAD = 1e-3
TOL_EQ = 1e-6
TOL_H = 1e-6
CAP_INF = 1e3

RHO_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)


def tol_dist(value):
    return TOL_DIST_REL * (1.0 + abs(value))


def tol_gap(value):
    return TOL_GAP_REL * (1.0 + abs(value))


@dataclass
class DistanceOptions:
    n_steps: int = 64
    restarts: int = 8
    rho_schedule: tuple = RHO_SCHEDULE
    tol_end: float = 1e-4
    maxiter: int = 220
    seed: int = 0
    refine: bool = False
    ftol: float = 1e-14
    gtol: float = 1e-10

    @classmethod
    def cheap(cls, seed=0):
        """Coarse classification mode for volume sampling (2 restarts, 24 steps)."""
        return cls(n_steps=24, restarts=2, rho_schedule=(1e2, 1e4),
                   maxiter=55, tol_end=3e-3, seed=seed,
                   ftol=1e-11, gtol=1e-7)


@dataclass
class DistanceResult:
    value: float
    witness: Optional[ControlPath] = None
    dual_bound: Optional[float] = None
    converged: bool = False
    restarts_used: int = 0
    endpoint_gap: float = np.inf
    refine_converged: Optional[bool] = None
    via_point: Optional[np.ndarray] = None

    @property
    def gap(self):
        if self.dual_bound is None:
            return None
        return self.value - self.dual_bound

    @property
    def energy(self):
        return self.value ** 2


# ---------------------------------------------------------------------------
# restart seeds
# ---------------------------------------------------------------------------

def _seed_controls(s, x0, targets, n_steps, restarts, seed):
    """Initial controls (B, R, n_steps, m) for each target row of (B, d)."""
    x0 = np.asarray(x0, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B = targets.shape[0]
    m = s.m
    base_x0 = np.broadcast_to(x0, targets.shape)

    fr = s.frame(base_x0)                              # (B, d, m)
    diff = targets - base_x0
    u_base = np.empty((B, m))
    for b in range(B):
        u_base[b] = np.linalg.lstsq(fr[b], diff[b], rcond=None)[0]
    amp = np.linalg.norm(u_base, axis=1) + 1.0         # (B,)

    rng = substream(seed, "distance-seeds")
    out = np.zeros((B, restarts, n_steps, m))
    tgrid = (np.arange(n_steps) + 0.5) / n_steps
    for r in range(restarts):
        if r == 0:
            out[:, r] = u_base[:, None, :]
        elif r == 1 and m >= 2:
            # rotating seed: drives bracket directions that constant controls miss
            rot = np.zeros((n_steps, m))
            rot[:, 0] = np.cos(2.0 * np.pi * tgrid)
            rot[:, 1] = np.sin(2.0 * np.pi * tgrid)
            out[:, r] = 0.5 * u_base[:, None, :] + amp[:, None, None] * rot[None]
        else:
            # piecewise-linear noise on ~5 breakpoints
            n_knots = 5
            knots = rng.standard_normal((B, n_knots, m))
            xs = np.linspace(0.0, 1.0, n_knots)
            noise = np.empty((B, n_steps, m))
            for j in range(m):
                for b in range(B):
                    noise[b, :, j] = np.interp(tgrid, xs, knots[b, :, j])
            out[:, r] = u_base[:, None, :] + 0.8 * amp[:, None, None] * noise
    return out


# ---------------------------------------------------------------------------
# penalty objectives
# ---------------------------------------------------------------------------

class _PointPenalty:
    """rho * |endpoint - target|^2 per batch row."""

    def __init__(self, targets):
        self.targets = np.atleast_2d(np.asarray(targets, dtype=float))

    def __call__(self, rho, traj, controls):
        end = traj[..., -1, :]
        diff = end - self.targets.reshape(
            self.targets.shape[0], *([1] * (end.ndim - 2)), -1)
        pen = rho * np.sum(diff ** 2, axis=-1)
        return pen, 2.0 * rho * diff, None

    def gaps(self, traj):
        end = traj[..., -1, :]
        diff = end - self.targets.reshape(
            self.targets.shape[0], *([1] * (end.ndim - 2)), -1)
        return np.linalg.norm(diff, axis=-1)


class _SetPenalty:
    """rho * max(0, -level(endpoint))^2: pushes the endpoint into {level >= 0}."""

    def __init__(self, target_set: ClosedSet):
        self.target_set = target_set

    def __call__(self, rho, traj, controls):
        end = traj[..., -1, :]
        lev = self.target_set(end)
        viol = np.maximum(0.0, -lev)
        pen = rho * viol ** 2
        grad = (-2.0 * rho * viol)[..., None] * self.target_set.grad(end)
        return pen, grad, None

    def gaps(self, traj):
        return np.maximum(0.0, -self.target_set(traj[..., -1, :]))


class _ProbePenalty:
    """Endpoint pin plus a constraint that the path leaves a box by delta_probe.

    Penetration beyond the box boundary is max over nodes, smoothed by a
    log-sum-exp lower bound so the constraint never activates spuriously.
    """

    def __init__(self, target, outside_level: ClosedSet, delta_probe, rho_probe_factor=4.0):
        self.point = _PointPenalty(target)
        self.outside_level = outside_level
        self.delta = float(delta_probe)
        self.alpha = max(200.0, 12.0 / max(self.delta, 1e-3))
        self.rho_probe_factor = rho_probe_factor

    def __call__(self, rho, traj, controls):
        pen_end, grad_end, _ = self.point(rho, traj, controls)
        lev = self.outside_level(traj)                 # (..., n+1), signed
        a = self.alpha
        n_nodes = lev.shape[-1]
        mx = np.max(lev, axis=-1, keepdims=True)
        w = np.exp(a * (lev - mx))
        sw = np.sum(w, axis=-1, keepdims=True)
        # signed log-sum-exp lower bound of max level keeps a pull toward the
        # boundary alive even while the whole path is still inside the box
        soft = (mx + np.log(sw) / a - np.log(n_nodes) / a)[..., 0]
        slack = np.maximum(0.0, self.delta - soft)
        rho_p = self.rho_probe_factor * rho
        pen = pen_end + rho_p * slack ** 2
        coef = (-2.0 * rho_p * slack)[..., None] * (w / sw)
        node_grads = coef[..., None] * self.outside_level.grad(traj)
        return pen, grad_end, node_grads

    def gaps(self, traj):
        return self.point.gaps(traj)

    def achieved_penetration(self, traj):
        return float(np.max(np.maximum(0.0, self.outside_level(traj))))


# ---------------------------------------------------------------------------
# batched penalty solver
# ---------------------------------------------------------------------------

def _solve_penalty(s, x0, controls0, penalty, rho_schedule, maxiter, tol_end,
                   ftol=1e-14, gtol=1e-10):
    """Run the penalty schedule; returns (controls, traj, energies, gaps)."""
    shape = controls0.shape                            # (..., n, m)
    n = shape[-2]
    dt = 1.0 / n
    seeds = controls0.copy()
    U = controls0.copy()

    def per_row_objective(rho, U):
        traj, _ = integrate_controls_array(s, x0, U)
        pen, _, _ = penalty(rho, traj, U)
        return dt * np.sum(U ** 2, axis=(-2, -1)) + pen

    def make_objective(rho):
        def objective(flat):
            Uc = flat.reshape(shape)
            traj, stages = integrate_controls_array(s, x0, Uc)
            pen, tgrad, ngrads = penalty(rho, traj, Uc)
            val = dt * np.sum(Uc ** 2) + float(np.sum(pen))
            gU = 2.0 * dt * Uc + integrate_adjoint(s, traj, stages, Uc, tgrad, ngrads)
            return val, gU.reshape(-1)
        return objective

    for i, rho in enumerate(rho_schedule):
        # low-rho stages can collapse non-convex restarts onto the zero-control
        # saddle; restart any row whose original seed scores better at this rho
        take_seed = per_row_objective(rho, seeds) < per_row_objective(rho, U)
        U = np.where(take_seed[..., None, None], seeds, U)
        obj = make_objective(rho)
        it = maxiter if i < len(rho_schedule) - 1 else maxiter + maxiter // 2
        res = minimize(obj, U.reshape(-1), jac=True, method="L-BFGS-B",
                       options={"maxiter": it, "ftol": ftol, "gtol": gtol})
        U = res.x.reshape(shape)
        traj, _ = integrate_controls_array(s, x0, U)
        if np.all(penalty.gaps(traj) <= tol_end):
            break
    traj, _ = integrate_controls_array(s, x0, U)
    energies = dt * np.sum(U ** 2, axis=(-2, -1))
    return U, traj, energies, penalty.gaps(traj)


def _pick_restart(energies, gaps, tol_end):
    """Deterministic reduction: min energy among converged restarts, else min gap."""
    ok = gaps <= tol_end
    if np.any(ok):
        masked = np.where(ok, energies, np.inf)
        idx = int(np.argmin(masked))
        return idx, True
    return int(np.argmin(gaps)), False


def distance(s: SubRiemannianStructure, x, y, opts: Optional[DistanceOptions] = None,
             ) -> DistanceResult:
    """Sub-Riemannian distance d(x, y) with a primal witness control path."""
    opts = opts or DistanceOptions()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s.require_in_domain(x)
    s.require_in_domain(y)
    if np.allclose(x, y, atol=1e-14):
        return DistanceResult(value=0.0, witness=ControlPath(np.zeros((opts.n_steps, s.m))),
                              converged=True, restarts_used=0, endpoint_gap=0.0)

    seeds = _seed_controls(s, x, y[None, :], opts.n_steps, opts.restarts, opts.seed)
    penalty = _PointPenalty(y[None, :])
    U, traj, energies, gaps = _solve_penalty(
        s, x, seeds, penalty, opts.rho_schedule, opts.maxiter, opts.tol_end,
        ftol=opts.ftol, gtol=opts.gtol)
    idx, converged = _pick_restart(energies[0], gaps[0], opts.tol_end)

    witness = ControlPath(U[0, idx])
    best_energy = float(energies[0, idx])
    best_gap = float(gaps[0, idx])

    const = reparametrize_constant_speed(witness)
    traj_c, _ = integrate_controls_array(s, x, const.controls)
    gap_c = float(np.linalg.norm(traj_c[-1] - y))
    if const.energy <= best_energy + 1e-12 and gap_c <= max(2.0 * opts.tol_end, best_gap):
        witness, best_energy, best_gap = const, const.energy, max(best_gap, gap_c)

    result = DistanceResult(value=float(np.sqrt(max(best_energy, 0.0))),
                            witness=witness, converged=converged,
                            restarts_used=opts.restarts, endpoint_gap=best_gap)
    if opts.refine:
        from .shooting import shoot_refine
        result = shoot_refine(s, x, y, result)
    return result


def distance_batch(s: SubRiemannianStructure, x, targets,
                   opts: Optional[DistanceOptions] = None):
    """Distances from one base point to many targets (classification grade).

    Returns (values, gaps) arrays of length len(targets).  All restarts of all
    targets run in one separable L-BFGS batch.
    """
    opts = opts or DistanceOptions.cheap()
    x = np.asarray(x, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B = targets.shape[0]
    if B == 0:
        return np.zeros(0), np.zeros(0)
    seeds = _seed_controls(s, x, targets, opts.n_steps, opts.restarts, opts.seed)
    penalty = _PointPenalty(targets)
    U, traj, energies, gaps = _solve_penalty(
        s, x, seeds, penalty, opts.rho_schedule, opts.maxiter, opts.tol_end,
        ftol=opts.ftol, gtol=opts.gtol)
    values = np.empty(B)
    out_gaps = np.empty(B)
    for b in range(B):
        idx, _ = _pick_restart(energies[b], gaps[b], opts.tol_end)
        values[b] = np.sqrt(max(energies[b, idx], 0.0))
        out_gaps[b] = gaps[b, idx]
    return values, out_gaps


def distance_to_set(s: SubRiemannianStructure, x, target: ClosedSet,
                    opts: Optional[DistanceOptions] = None) -> DistanceResult:
    """d(x, A) for a closed set A = {level >= 0}; zero when x is already in A."""
    opts = opts or DistanceOptions()
    x = np.asarray(x, dtype=float)
    s.require_in_domain(x)
    if float(target(x)) >= 0.0:
        return DistanceResult(value=0.0, witness=ControlPath(np.zeros((opts.n_steps, s.m))),
                              converged=True, endpoint_gap=0.0)

    # seed targets: projections of x toward the boundary plus any hints
    cand = []
    proj = target.project_to_boundary(x)
    if proj is not None:
        cand.append(proj)
    for hint in target.projection_hint:
        cand.append(np.asarray(hint, dtype=float))
    if not cand:
        cand.append(x)
    seed_targets = np.stack(cand[:3], axis=0)
    seed_list = [_seed_controls(s, x, seed_targets[i:i + 1], opts.n_steps,
                                max(2, opts.restarts // max(1, len(cand[:3]))), opts.seed + i)[0]
                 for i in range(seed_targets.shape[0])]
    seeds = np.concatenate(seed_list, axis=0)[None, ...]

    penalty = _SetPenalty(target)
    U, traj, energies, gaps = _solve_penalty(
        s, x, seeds, penalty, opts.rho_schedule, opts.maxiter, opts.tol_end,
        ftol=opts.ftol, gtol=opts.gtol)
    idx, converged = _pick_restart(energies[0], gaps[0], opts.tol_end)
    witness = ControlPath(U[0, idx])
    endpoint = traj[0, idx, -1]
    return DistanceResult(value=float(np.sqrt(max(energies[0, idx], 0.0))),
                          witness=witness, converged=converged,
                          restarts_used=seeds.shape[1],
                          endpoint_gap=float(gaps[0, idx]),
                          via_point=np.asarray(endpoint))


def distance_through_set(s: SubRiemannianStructure, x, target: ClosedSet, y,
                         opts: Optional[DistanceOptions] = None,
                         via_opts: Optional[DistanceOptions] = None) -> DistanceResult:
    """d(x, A, y) = inf over boundary via-points z of d(x, z) + d(z, y).

    The via-point search runs Nelder-Mead in chart coordinates with each
    iterate projected onto {level = 0}; distances during the search use the
    cheap mode, and the best via-point is re-evaluated at full quality.
    """
    from scipy.optimize import minimize as nm_minimize

    opts = opts or DistanceOptions()
    cheap = via_opts or DistanceOptions(n_steps=32, restarts=3,
                                        rho_schedule=(1e2, 1e4), maxiter=80,
                                        tol_end=1e-3, seed=opts.seed)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s.require_in_domain(x)
    s.require_in_domain(y)

    starts = []
    for z in [x, y, 0.5 * (x + y)]:
        p = target.project_to_boundary(z)
        if p is not None:
            starts.append(p)
    starts.extend(np.asarray(h, dtype=float) for h in target.projection_hint)
    if not starts:
        raise ValueError("no feasible boundary seed for the via-point search")

    def via_cost(z):
        p = target.project_to_boundary(z)
        if p is None:
            return 1e6 + float(np.abs(target(z)))
        dx_val, _ = distance_batch(s, x, p[None, :], cheap)
        dy_val, _ = distance_batch(s, y, p[None, :], cheap)
        return float(dx_val[0] + dy_val[0])

    best_z, best_val = None, np.inf
    seen = []
    for z0 in starts[:4]:
        if any(np.linalg.norm(z0 - q) < 1e-9 for q in seen):
            continue
        seen.append(z0)
        res = nm_minimize(via_cost, z0, method="Nelder-Mead",
                          options={"maxfev": 70, "xatol": 1e-3, "fatol": 1e-4})
        if res.fun < best_val:
            best_val, best_z = float(res.fun), np.asarray(res.x, dtype=float)

    z_star = target.project_to_boundary(best_z)
    if z_star is None:
        z_star = best_z
    leg_x = distance(s, x, z_star, opts)
    leg_y = distance(s, z_star, y, opts)
    value = leg_x.value + leg_y.value

    witness = _join_witness(leg_x.witness, leg_y.witness)
    return DistanceResult(value=float(value), witness=witness,
                          converged=leg_x.converged and leg_y.converged,
                          restarts_used=opts.restarts,
                          endpoint_gap=max(leg_x.endpoint_gap, leg_y.endpoint_gap),
                          via_point=z_star)


def _join_witness(a: ControlPath, b: ControlPath) -> ControlPath:
    """Concatenate two unit-interval legs into one (speeds double)."""
    ua = 2.0 * a.controls
    ub = 2.0 * b.controls
    return ControlPath(np.concatenate([ua, ub], axis=0))


def min_energy_outside(s: SubRiemannianStructure, x, y, box_lo, box_hi,
                       delta_probe=0.02, opts: Optional[DistanceOptions] = None):
    """Minimal energy over paths x -> y that leave the open box U by delta_probe.

    Returns (DistanceResult with value = sqrt(energy), achieved_penetration).
    The strong-minimality margin is result.energy - distance(x, y)^2.
    """
    from .sets import box_complement

    opts = opts or DistanceOptions()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    outside = box_complement(box_lo, box_hi)

    seeds = _seed_controls(s, x, y[None, :], opts.n_steps, opts.restarts, opts.seed)
    # bias half the seeds toward different box faces so restarts explore exits
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    rng = substream(opts.seed, "probe-seeds")
    fr_x = s.frame(x)
    for r in range(opts.restarts):
        if r % 2 == 1:
            face = rng.integers(0, s.dim)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            tgt = 0.5 * (lo + hi)
            tgt[face] = (hi[face] + delta_probe + 0.2) if sign > 0 else (lo[face] - delta_probe - 0.2)
            u_out = np.linalg.lstsq(fr_x, tgt - x, rcond=None)[0]
            bump = np.sin(np.pi * (np.arange(opts.n_steps) + 0.5) / opts.n_steps)
            seeds[0, r] += 2.0 * bump[:, None] * u_out[None, :]

    penalty = _ProbePenalty(y[None, :], outside, delta_probe)
    U, traj, energies, gaps = _solve_penalty(
        s, x, seeds, penalty, opts.rho_schedule, opts.maxiter, opts.tol_end,
        ftol=opts.ftol, gtol=opts.gtol)

    pens = np.array([np.max(np.maximum(0.0, outside(traj[0, r])))
                     for r in range(seeds.shape[1])])
    ok = (gaps[0] <= opts.tol_end) & (pens >= 0.9 * delta_probe)
    if np.any(ok):
        masked = np.where(ok, energies[0], np.inf)
        idx = int(np.argmin(masked))
        converged = True
    else:
        idx = int(np.argmin(gaps[0]))
        converged = False
    result = DistanceResult(value=float(np.sqrt(max(energies[0, idx], 0.0))),
                            witness=ControlPath(U[0, idx]), converged=converged,
                            restarts_used=opts.restarts,
                            endpoint_gap=float(gaps[0, idx]))
    return result, float(pens[idx])
