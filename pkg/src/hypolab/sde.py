"""Hypoelliptic diffusion simulation in Hormander form.

dB = sum_l X_l(B) o dW^l + X_0(B) dt, stepped by stochastic Heun
(predictor-corrector, Stratonovich-consistent, weak order 1), with domain
killing, first-hit monitoring of a closed set, and optional deterministic
exponential tilting (the Girsanov log-weight is accumulated per path).

Paths are simulated in fixed blocks of rng.BLOCK; the noise of path p is row
p % BLOCK of the Philox block p // BLOCK on the experiment's stream, so every
trajectory is a pure function of (seed, stream, path_id) regardless of worker
count.  Blocks can be dispatched to a thread pool; merging is by block index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import DriftDecomposition, SubRiemannianStructure, hormander_drift
from .rng import BLOCK, block_normals, block_ranges, philox
from .sets import ClosedSet


def default_n_steps(t_final):
    """dt <= 1/400 for small-time runs, never fewer than 200 steps."""
    return int(max(200, np.ceil(400.0 * t_final)))


@dataclass
class SamplePath:
    """One trajectory with kill/hit bookkeeping.

    exit_index is the first step index outside the surviving region (the
    explosion/exit time zeta lives at times[exit_index]); hit_index is the
    first step inside the monitored set, never later than exit_index.
    """
    times: np.ndarray
    states: np.ndarray
    killed: bool
    exit_index: Optional[int]
    hit_index: Optional[int]
    seed: int
    path_id: int = 0


@dataclass
class PathBatch:
    """Terminal summary of a block of paths (full states optional)."""
    terminal: np.ndarray          # (B, d) last alive state (frozen at kill)
    alive: np.ndarray             # (B,) bool: survived to t_final
    exit_step: np.ndarray         # (B,) int, -1 if never killed
    hit_step: np.ndarray          # (B,) int, -1 if never hit
    hit_state: np.ndarray         # (B, d) state at first hit (nan rows if none)
    log_weight: np.ndarray        # (B,) Girsanov log dP/dPtilde (zeros untilted)
    paths: Optional[np.ndarray] = None   # (B, n_steps + 1, d) when stored

    @property
    def n(self):
        return self.terminal.shape[0]

    @property
    def weight(self):
        return np.exp(self.log_weight)


class _StepContext:
    """Precomputed pieces shared by all blocks of one simulation call."""

    def __init__(self, s, t_final, n_steps, kill_region, monitor, tilt_controls,
                 drift: Optional[DriftDecomposition]):
        self.s = s
        self.n_steps = int(n_steps)
        self.dt = float(t_final) / self.n_steps
        self.sqrt_dt = np.sqrt(self.dt)
        self.kill_region = kill_region
        self.monitor = monitor
        self.drift = drift if drift is not None else hormander_drift(s)
        self.has_drift = not self.drift.is_zero
        self.tilt = None
        if tilt_controls is not None:
            tilt = np.asarray(tilt_controls, dtype=float)
            if tilt.shape != (self.n_steps, s.m):
                raise ValueError("tilt_controls must be (n_steps, m)")
            self.tilt = tilt
        self.check_domain = s.domain.restricted

    def drift_vec(self, x, k):
        """Total drift X_0 + F c*_k at the batch states x."""
        if self.tilt is None:
            if not self.has_drift:
                return None
            return self.drift.drift_vector(x)
        vec = (self.s.frame(x) @ self.tilt[k][:, None])[..., 0]
        if self.has_drift:
            vec = vec + self.drift.drift_vector(x)
        return vec


def _step_block(ctx: _StepContext, x0, normals, store=False):
    """Heun-step one block; normals has shape (B, n_steps, m)."""
    s = ctx.s
    B = normals.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (B, s.dim)).copy()
    alive = np.ones(B, dtype=bool)
    exit_step = np.full(B, -1, dtype=np.int64)
    hit_step = np.full(B, -1, dtype=np.int64)
    hit_state = np.full((B, s.dim), np.nan)
    log_w = np.zeros(B)
    paths = None
    if store:
        paths = np.empty((B, ctx.n_steps + 1, s.dim))
        paths[:, 0] = x

    dt = ctx.dt
    for k in range(ctx.n_steps):
        dw = ctx.sqrt_dt * normals[:, k, :]
        fr = s.frame(x)
        diff = (fr @ dw[:, :, None])[..., 0]
        bx = ctx.drift_vec(x, k)
        pred = x + diff + bx * dt if bx is not None else x + diff
        fr_p = s.frame(pred)
        diff2 = ((fr + fr_p) @ dw[:, :, None])[..., 0] * 0.5
        if bx is not None:
            bp = ctx.drift_vec(pred, k)
            x_new = x + diff2 + 0.5 * dt * (bx + bp)
        else:
            x_new = x + diff2
        # freeze killed paths at their last alive state
        x = np.where(alive[:, None], x_new, x)

        if ctx.tilt is not None:
            c = ctx.tilt[k]
            log_w -= np.where(alive, dw @ c + 0.5 * np.dot(c, c) * dt, 0.0)

        newly_dead = np.zeros(B, dtype=bool)
        if ctx.check_domain:
            inside = s.in_domain(x)
            gap = s.boundary_gap(x)
            tr_a = np.sum(fr ** 2, axis=(-2, -1))
            gap_min = 2.0 * np.sqrt(dt * tr_a)
            newly_dead |= alive & (~inside | (gap < gap_min))
        if ctx.kill_region is not None:
            newly_dead |= alive & (ctx.kill_region(x) >= 0.0)
        if np.any(newly_dead):
            exit_step[newly_dead] = k + 1
            alive &= ~newly_dead

        if ctx.monitor is not None:
            hits = alive & (hit_step < 0) & (ctx.monitor(x) >= 0.0)
            if np.any(hits):
                hit_step[hits] = k + 1
                hit_state[hits] = x[hits]
        if store:
            paths[:, k + 1] = x
    return PathBatch(terminal=x, alive=alive, exit_step=exit_step,
                     hit_step=hit_step, hit_state=hit_state,
                     log_weight=log_w, paths=paths)


def run_paths(s: SubRiemannianStructure, x0, t_final, n_paths, seed,
              stream="sim", n_steps=None, kill_region: Optional[ClosedSet] = None,
              monitor: Optional[ClosedSet] = None, tilt_controls=None,
              workers=1, store=False, path_offset=0,
              drift: Optional[DriftDecomposition] = None) -> PathBatch:
    """Simulate n_paths trajectories and merge block results in block order."""
    if t_final <= 0.0 or n_paths <= 0:
        raise ValueError("t_final and n_paths must be positive")
    n_steps = int(n_steps) if n_steps is not None else default_n_steps(t_final)
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    s.require_in_domain(x0)
    if kill_region is not None and float(kill_region(np.asarray(x0, dtype=float))) >= 0.0:
        raise ValueError("start point lies in the kill region")
    ctx = _StepContext(s, t_final, n_steps, kill_region, monitor, tilt_controls, drift)

    if path_offset % BLOCK != 0:
        raise ValueError("path_offset must be a multiple of the block size")
    first_block = path_offset // BLOCK
    ranges = [(b + first_block, lo, hi) for b, lo, hi in block_ranges(n_paths)]

    def one(block_spec):
        block, lo, hi = block_spec
        normals = block_normals(seed, stream, block, hi - lo, n_steps * s.m)
        normals = normals.reshape(hi - lo, n_steps, s.m)
        return _step_block(ctx, x0, normals, store=store)

    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            batches = list(pool.map(one, ranges))
    else:
        batches = [one(r) for r in ranges]

    return PathBatch(
        terminal=np.concatenate([b.terminal for b in batches]),
        alive=np.concatenate([b.alive for b in batches]),
        exit_step=np.concatenate([b.exit_step for b in batches]),
        hit_step=np.concatenate([b.hit_step for b in batches]),
        hit_state=np.concatenate([b.hit_state for b in batches]),
        log_weight=np.concatenate([b.log_weight for b in batches]),
        paths=np.concatenate([b.paths for b in batches]) if store else None,
    )


def simulate(s: SubRiemannianStructure, x0, t_final, n_steps=None, seed=0,
             kill_region: Optional[ClosedSet] = None,
             monitor: Optional[ClosedSet] = None, path_id=0,
             stream="sim") -> SamplePath:
    """Simulate a single path (bit-identical to its row in any block run)."""
    from .rng import path_normals

    if t_final <= 0.0:
        raise ValueError("t_final must be positive")
    n_steps = int(n_steps) if n_steps is not None else default_n_steps(t_final)
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    s.require_in_domain(x0)
    ctx = _StepContext(s, t_final, n_steps, kill_region, monitor, None, None)
    normals = path_normals(seed, stream, path_id, n_steps * s.m)
    batch = _step_block(ctx, x0, normals.reshape(1, n_steps, s.m), store=True)
    times = np.linspace(0.0, t_final, n_steps + 1)
    killed = not bool(batch.alive[0])
    exit_index = int(batch.exit_step[0]) if batch.exit_step[0] >= 0 else None
    hit_index = int(batch.hit_step[0]) if batch.hit_step[0] >= 0 else None
    return SamplePath(times=times, states=batch.paths[0], killed=killed,
                      exit_index=exit_index, hit_index=hit_index,
                      seed=seed, path_id=path_id)


@dataclass
class HittingSample:
    """Empirical law of T wedge t_final over n_paths trajectories."""
    hit_times: np.ndarray         # sorted times of recorded hits
    n_paths: int
    t_final: float

    def probability(self, t=None):
        t = self.t_final if t is None else t
        return float(np.sum(self.hit_times <= t) / self.n_paths)

    def stderr(self, t=None):
        p = self.probability(t)
        return float(np.sqrt(p * (1.0 - p) / self.n_paths))


def hitting_time_samples(s: SubRiemannianStructure, x0, target: ClosedSet,
                         t_final, n_paths, seed, n_steps=None, workers=1,
                         stream="hit") -> HittingSample:
    """First-entry times into the monitored set, censored at t_final."""
    if float(target(np.asarray(x0, dtype=float))) >= 0.0:
        raise ValueError("start point already lies in the target set")
    n_steps = int(n_steps) if n_steps is not None else default_n_steps(t_final)
    batch = run_paths(s, x0, t_final, n_paths, seed, stream=stream,
                      n_steps=n_steps, monitor=target, workers=workers)
    dt = t_final / n_steps
    hits = batch.hit_step[batch.hit_step >= 0]
    return HittingSample(hit_times=np.sort(hits.astype(float) * dt),
                         n_paths=n_paths, t_final=float(t_final))
