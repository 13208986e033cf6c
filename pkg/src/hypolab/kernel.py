"""Monte Carlo heat-kernel estimation and small-time bound audits.

Point densities are estimated with a hard-ball counting kernel of radius
r_kde (default 0.4 sqrt(t)): the estimate is the weighted fraction of
surviving paths landing in the chart-Euclidean ball around the target,
divided by the nu-measure of the ball.  The Dirichlet estimate counts only
paths that never touched the closed set, on the *same* driving noise, so
p_dirichlet <= p_full holds pathwise and the through-kernel difference is
nonnegative by construction.  Optional exponential tilting along a distance
witness (likelihood-ratio reweighted) handles the deep small-time regime.

Audits compare t log(estimate) against the squared-distance bounds; the
small-time limit is read off a least-squares fit L + a t log(1/t) + b t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .controls import ControlPath
from .distance import DistanceOptions, distance, distance_to_set, distance_through_set
from .geometry import SubRiemannianStructure, hormander_drift, sector_bound
from .rng import philox
from .sde import PathBatch, default_n_steps, run_paths
from .sets import ClosedSet


def default_r_kde(t):
    return 0.4 * np.sqrt(t)


def unit_ball_volume(d):
    return float(np.exp(0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)))


def nu_ball_measure(s: SubRiemannianStructure, center, r, seed=0, n_quad=65536):
    """nu-measure of the chart-Euclidean ball; closed form under Lebesgue."""
    vol = unit_ball_volume(s.dim) * r ** s.dim
    if s.lebesgue:
        return vol
    gen = philox(seed, f"ball-quad:{s.name}")
    z = gen.standard_normal((n_quad, s.dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radii = r * gen.random(n_quad) ** (1.0 / s.dim)
    pts = np.asarray(center, dtype=float) + z * radii[:, None]
    return vol * float(np.mean(s.nu_density(pts)))


@dataclass
class KernelEstimate:
    """Point estimate of a kernel quantity with its error budget."""
    value: float
    stderr: float
    kind: str                      # full | dirichlet | through | hitting | reflected
    r_kde: float = np.nan
    n_paths: int = 0
    hits: float = 0.0              # weighted hit mass (count when untilted)
    bias: float = 0.0              # recorded KDE bias bound, 0 for hitting
    nu_ball: float = np.nan
    t: float = np.nan
    seed: int = 0
    pre_clip: Optional[float] = None

    def three_sigma(self):
        return 3.0 * self.stderr + self.bias


def _witness_tilt(witness: ControlPath, t, n_steps):
    """Resample a unit-interval witness control onto n_steps and scale by 1/t."""
    u = witness.controls
    idx = np.minimum((np.arange(n_steps) * u.shape[0]) // n_steps, u.shape[0] - 1)
    return u[idx] / t


def run_kernel_paths(s: SubRiemannianStructure, t, x, n_paths, seed,
                     stream, n_steps=None, monitor: Optional[ClosedSet] = None,
                     tilt_witness: Optional[ControlPath] = None, workers=1,
                     drift=None) -> PathBatch:
    """Simulate the estimator ensemble once; all paired estimates reuse it."""
    n_steps = int(n_steps) if n_steps is not None else default_n_steps(t)
    tilt = None
    if tilt_witness is not None:
        tilt = _witness_tilt(tilt_witness, t, n_steps)
    return run_paths(s, x, t, n_paths, seed, stream=stream, n_steps=n_steps,
                     monitor=monitor, tilt_controls=tilt, workers=workers,
                     drift=drift)


def _ball_estimate(s, batch: PathBatch, y, r_kde, select, kind, t, seed,
                   nu_ball=None):
    """Weighted ball-count estimate over a path selection mask."""
    y = np.asarray(y, dtype=float)
    n = batch.n
    nu_b = nu_ball_measure(s, y, r_kde, seed=seed) if nu_ball is None else nu_ball
    in_ball = np.linalg.norm(batch.terminal - y, axis=1) <= r_kde
    q = np.where(select & in_ball, batch.weight, 0.0)
    hits = float(np.sum(q))
    value = hits / (n * nu_b)
    if hits > 0.0:
        stderr = float(np.std(q) / np.sqrt(n) / nu_b)
    else:
        stderr = 1.0 / (n * nu_b)   # one-sided scale for a zero count
    return KernelEstimate(value=value, stderr=stderr, kind=kind, r_kde=r_kde,
                          n_paths=n, hits=hits, nu_ball=nu_b, t=t, seed=seed)


def _kde_bias_bound(s, batch, y, r_kde, select, base: KernelEstimate, t, seed):
    """|Laplacian| r^2 / 2, the Laplacian estimated by recounting at y +- r e_j."""
    y = np.asarray(y, dtype=float)
    lap = 0.0
    for j in range(s.dim):
        dy = np.zeros(s.dim)
        dy[j] = r_kde
        up = _ball_estimate(s, batch, y + dy, r_kde, select, base.kind, t, seed)
        dn = _ball_estimate(s, batch, y - dy, r_kde, select, base.kind, t, seed)
        lap += (up.value + dn.value - 2.0 * base.value) / r_kde ** 2
    return abs(lap) * r_kde ** 2 / 2.0


def estimate_kernel(s: SubRiemannianStructure, t, x, y, n_paths=100000,
                    r_kde=None, seed=0, n_steps=None, stream="kernel",
                    tilt_witness=None, workers=1, batch=None,
                    with_bias=True) -> KernelEstimate:
    """p(t, x, y) with respect to nu (paths killed at the chart boundary)."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    s.require_in_domain(x)
    s.require_in_domain(y)
    r_kde = float(r_kde) if r_kde is not None else default_r_kde(t)
    if batch is None:
        batch = run_kernel_paths(s, t, x, n_paths, seed, stream,
                                 n_steps=n_steps, tilt_witness=tilt_witness,
                                 workers=workers)
    est = _ball_estimate(s, batch, y, r_kde, batch.alive, "full", t, seed)
    if with_bias:
        est.bias = _kde_bias_bound(s, batch, y, r_kde, batch.alive, est, t, seed)
    return est


def estimate_kernel_dirichlet(s: SubRiemannianStructure, t, x, y,
                              barrier: ClosedSet, n_paths=100000, r_kde=None,
                              seed=0, n_steps=None, stream="kernel",
                              tilt_witness=None, workers=1, batch=None,
                              with_bias=True) -> KernelEstimate:
    """p_U(t, x, y) for U = complement of the barrier set, common noise with p."""
    if float(barrier(np.asarray(x, dtype=float))) >= 0.0 \
            or float(barrier(np.asarray(y, dtype=float))) >= 0.0:
        raise ValueError("endpoints must lie in the open complement of the barrier")
    r_kde = float(r_kde) if r_kde is not None else default_r_kde(t)
    if batch is None:
        batch = run_kernel_paths(s, t, x, n_paths, seed, stream,
                                 n_steps=n_steps, monitor=barrier,
                                 tilt_witness=tilt_witness, workers=workers)
    select = batch.alive & (batch.hit_step < 0)
    est = _ball_estimate(s, batch, y, r_kde, select, "dirichlet", t, seed)
    if with_bias:
        est.bias = _kde_bias_bound(s, batch, y, r_kde, select, est, t, seed)
    return est


def through_kernel(s: SubRiemannianStructure, t, x, barrier: ClosedSet, y,
                   n_paths=100000, r_kde=None, seed=0, n_steps=None,
                   stream="kernel", tilt_witness=None, workers=1,
                   batch=None) -> KernelEstimate:
    """p(t, x, A, y): paths that touch A and land near y (= p - p_U pathwise)."""
    r_kde = float(r_kde) if r_kde is not None else default_r_kde(t)
    if batch is None:
        batch = run_kernel_paths(s, t, x, n_paths, seed, stream,
                                 n_steps=n_steps, monitor=barrier,
                                 tilt_witness=tilt_witness, workers=workers)
    select = batch.alive & (batch.hit_step >= 0)
    est = _ball_estimate(s, batch, y, r_kde, select, "through", t, seed)
    est.pre_clip = est.value        # nonnegative by construction; kept for audits
    return est


def hitting_probability(s: SubRiemannianStructure, t, x, target: ClosedSet,
                        n_paths=100000, seed=0, n_steps=None, stream="hitprob",
                        tilt_witness=None, workers=1, batch=None) -> KernelEstimate:
    """P_x(T <= t): weighted fraction of paths entering the set while alive."""
    if float(target(np.asarray(x, dtype=float))) >= 0.0:
        raise ValueError("start point already in the target set")
    if batch is None:
        batch = run_kernel_paths(s, t, x, n_paths, seed, stream,
                                 n_steps=n_steps, monitor=target,
                                 tilt_witness=tilt_witness, workers=workers)
    q = np.where(batch.hit_step >= 0, batch.weight, 0.0)
    value = float(np.mean(q))
    stderr = float(np.std(q) / np.sqrt(batch.n))
    return KernelEstimate(value=value, stderr=stderr, kind="hitting",
                          n_paths=batch.n, hits=float(np.sum(q)), t=t, seed=seed)


def reflected_kernel(s: SubRiemannianStructure, t, x_sign, y_sign, x, y,
                     barrier: ClosedSet, n_paths=100000, r_kde=None, seed=0,
                     n_steps=None, stream="kernel", workers=1, batch=None):
    """Doubled-manifold kernel: p + p_D on matching copies, p - p_D otherwise."""
    if x_sign not in ("+", "-") or y_sign not in ("+", "-"):
        raise ValueError("copy signs must be '+' or '-'")
    r_kde = float(r_kde) if r_kde is not None else default_r_kde(t)
    if batch is None:
        batch = run_kernel_paths(s, t, x, n_paths, seed, stream,
                                 n_steps=n_steps, monitor=barrier, workers=workers)
    full = estimate_kernel(s, t, x, y, r_kde=r_kde, seed=seed, batch=batch,
                           with_bias=False)
    diri = estimate_kernel_dirichlet(s, t, x, y, barrier, r_kde=r_kde,
                                     seed=seed, batch=batch, with_bias=False)
    sign = 1.0 if x_sign == y_sign else -1.0
    value = full.value + sign * diri.value
    stderr = full.stderr + diri.stderr  # conservative: the two are coupled
    return KernelEstimate(value=value, stderr=stderr, kind="reflected",
                          r_kde=r_kde, n_paths=batch.n, t=t, seed=seed,
                          nu_ball=full.nu_ball)


def reppk_check(s: SubRiemannianStructure, t, x, barrier: ClosedSet, y,
                restart_density: Callable, n_paths=100000, seed=0,
                n_steps=None, stream="reppk", workers=1, batch=None,
                r_kde=None):
    """Restart estimator of the through-kernel: mean of p(t - T, B_T, y) 1{T < t}.

    `restart_density` is an exact kernel oracle (s_rem, z, y) -> density.
    Returns (restart KernelEstimate, difference KernelEstimate from p - p_U
    on the same paths).
    """
    n_steps = int(n_steps) if n_steps is not None else default_n_steps(t)
    if batch is None:
        batch = run_kernel_paths(s, t, x, n_paths, seed, stream,
                                 n_steps=n_steps, monitor=barrier, workers=workers)
    dt = t / n_steps
    q = np.zeros(batch.n)
    mask = (batch.hit_step >= 0) & (batch.hit_step < n_steps)
    if np.any(mask):
        t_rem = t - batch.hit_step[mask] * dt
        states = batch.hit_state[mask]
        vals = np.array([restart_density(float(tr), states[i], y)
                         for i, tr in enumerate(t_rem)])
        q[mask] = vals * batch.weight[mask]
    value = float(np.mean(q))
    stderr = float(np.std(q) / np.sqrt(batch.n))
    restart_est = KernelEstimate(value=value, stderr=stderr, kind="through",
                                 n_paths=batch.n, t=t, seed=seed,
                                 hits=float(np.sum(mask)))
    diff_est = through_kernel(s, t, x, barrier, y, seed=seed, batch=batch,
                              r_kde=r_kde)
    return restart_est, diff_est


# ---------------------------------------------------------------------------
# small-time audits
# ---------------------------------------------------------------------------

@dataclass
class BoundAudit:
    """t log(estimate) against a squared-distance bound along a t grid."""
    kind: str
    t_grid: np.ndarray
    lhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs: float                       # the limiting bound (-d^2/2 form)
    extrapolated_limit: float
    fit_coefficients: np.ndarray     # (L, a, b) of L + a t log(1/t) + b t
    estimates: list
    rhs_finite: Optional[np.ndarray] = None   # pointwise bound incl. sector term
    extra: dict = field(default_factory=dict)

    @property
    def margins(self):
        rhs = self.rhs_finite if self.rhs_finite is not None else self.rhs
        return rhs - self.lhs

    @property
    def margin_limit(self):
        return self.rhs - self.extrapolated_limit


def fit_small_time_limit(t_vals, lhs_vals):
    """Least-squares fit lhs = L + a t log(1/t) + b t; returns (L, a, b)."""
    t_vals = np.asarray(t_vals, dtype=float)
    lhs_vals = np.asarray(lhs_vals, dtype=float)
    if t_vals.size < 3:
        raise ValueError("need at least 3 usable grid points for extrapolation")
    design = np.column_stack([np.ones_like(t_vals),
                              t_vals * np.log(1.0 / t_vals), t_vals])
    coeffs, *_ = np.linalg.lstsq(design, lhs_vals, rcond=None)
    return coeffs


def _collect_audit(kind, t_grid, estimates, rhs, rhs_finite=None, extra=None):
    ts, lhs, errs, kept, kept_finite = [], [], [], [], []
    for i, (t, est) in enumerate(zip(t_grid, estimates)):
        if est.value <= 0.0:
            continue
        ts.append(t)
        lhs.append(t * np.log(est.value))
        errs.append(t * est.stderr / est.value)
        kept.append(est)
        if rhs_finite is not None:
            kept_finite.append(rhs_finite[i])
    coeffs = fit_small_time_limit(ts, lhs)
    return BoundAudit(kind=kind, t_grid=np.asarray(ts), lhs=np.asarray(lhs),
                      lhs_stderr=np.asarray(errs), rhs=float(rhs),
                      extrapolated_limit=float(coeffs[0]),
                      fit_coefficients=coeffs, estimates=kept,
                      rhs_finite=np.asarray(kept_finite) if rhs_finite is not None else None,
                      extra=extra or {})


def varadhan_audit(s: SubRiemannianStructure, x, y, t_grid, n_paths=200000,
                   seed=0, n_steps_for=None, tilt=False, workers=1,
                   dist_opts: Optional[DistanceOptions] = None,
                   r_kde_scale=0.4) -> BoundAudit:
    """t log p(t, x, y) against -d(x, y)^2 / 2 with small-time extrapolation."""
    dres = distance(s, x, y, dist_opts)
    rhs = -0.5 * dres.value ** 2
    witness = dres.witness if tilt else None
    ests = []
    for i, t in enumerate(np.asarray(t_grid, dtype=float)):
        n_steps = n_steps_for(t) if n_steps_for is not None else None
        ests.append(estimate_kernel(
            s, t, x, y, n_paths=n_paths, r_kde=r_kde_scale * np.sqrt(t),
            seed=seed, n_steps=n_steps, stream=f"varadhan:{i}",
            tilt_witness=witness, workers=workers, with_bias=False))
    extra = {"distance": dres.value, "tilted": bool(tilt)}
    if not s.domain.restricted:
        extra["hsu"] = {"in_S": True, "d": dres.value,
                        "dx_inf": np.inf, "dy_inf": np.inf}
    return _collect_audit("varadhan", np.asarray(t_grid, dtype=float), ests,
                          rhs, extra=extra)


def hitting_bound_audit(s: SubRiemannianStructure, x, target: ClosedSet,
                        t_grid, n_paths=100000, seed=0, n_steps_for=None,
                        tilt=False, workers=1,
                        dist_opts: Optional[DistanceOptions] = None,
                        ball_volume_fn=None) -> BoundAudit:
    """t log p(t, x, A) against -d(x, A)^2 / 2, plus the finite-t constant.

    The implied constant is C_hat = p_hat sqrt(nu(B(x, r))) exp(d^2 / 2t) at
    r = t / d(x, A), using the metric ball-volume estimator when provided.
    """
    dres = distance_to_set(s, x, target, dist_opts)
    d_a = dres.value
    rhs = -0.5 * d_a ** 2
    witness = dres.witness if tilt else None
    ests, constants = [], []
    for i, t in enumerate(np.asarray(t_grid, dtype=float)):
        n_steps = n_steps_for(t) if n_steps_for is not None else None
        est = hitting_probability(s, t, x, target, n_paths=n_paths, seed=seed,
                                  n_steps=n_steps, stream=f"hitting:{i}",
                                  tilt_witness=witness, workers=workers)
        ests.append(est)
        if ball_volume_fn is not None and est.value > 0.0 and d_a > 0.0:
            r = t / d_a
            vol = ball_volume_fn(r)
            if vol > 0.0:
                constants.append(float(est.value * np.sqrt(vol)
                                       * np.exp(d_a ** 2 / (2.0 * t))))
    extra = {"distance_to_set": d_a, "implied_constants": constants,
             "tilted": bool(tilt)}
    return _collect_audit("hitting", np.asarray(t_grid, dtype=float), ests,
                          rhs, extra=extra)


def through_bound_audit(s: SubRiemannianStructure, x, target: ClosedSet, y,
                        t_grid, n_paths=200000, seed=0, n_steps_for=None,
                        sector=False, sector_box=None, tilt=False, workers=1,
                        dist_opts: Optional[DistanceOptions] = None,
                        r_kde_scale=0.4) -> BoundAudit:
    """t log p(t, x, A, y) against the sum or through-distance bound.

    sector=False: rhs = -(d(x,A) + d(y,A))^2 / 2 (valid when the complement of
    A is relatively compact).  sector=True: rhs = -d(x,A,y)^2 / 2 and the
    pointwise finite-t bound carries the +lambda^2 t / 2 inflation from the
    sector constant estimated over sector_box.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    d_xa = distance_to_set(s, x, target, dist_opts).value
    d_ya = distance_to_set(s, y, target, dist_opts).value
    extra = {"d_xA": d_xa, "d_yA": d_ya, "tilted": bool(tilt)}
    if sector:
        through = distance_through_set(s, x, target, y, dist_opts)
        rhs = -0.5 * through.value ** 2
        lam2 = 0.0
        if s.beta is not None:
            if sector_box is None:
                raise ValueError("sector=True needs a sector_box")
            lam2 = sector_bound(s, sector_box)
        extra["d_xAy"] = through.value
        extra["lambda2"] = lam2
        rhs_finite = rhs + 0.5 * lam2 * t_grid ** 2
    else:
        rhs = -0.5 * (d_xa + d_ya) ** 2
        rhs_finite = None
    # record which term of r(x, A) = min{d(., inf), d(., A)} binds (complete
    # catalog charts have d(., inf) = inf, so the set distance always binds)
    extra["r_binding"] = "set-distance" if not s.domain.restricted else "min(gap, set)"

    witness = None
    if tilt:
        mid = distance(s, x, y, dist_opts)
        witness = mid.witness
    ests = []
    for i, t in enumerate(t_grid):
        n_steps = n_steps_for(t) if n_steps_for is not None else None
        ests.append(through_kernel(
            s, t, x, target, y, n_paths=n_paths,
            r_kde=r_kde_scale * np.sqrt(t), seed=seed, n_steps=n_steps,
            stream=f"through:{i}", tilt_witness=witness, workers=workers))
    return _collect_audit("through", t_grid, ests, rhs,
                          rhs_finite=rhs_finite, extra=extra)
