"""Diffusion bridge sampling at small time and tube-concentration diagnostics.

Bridges are sampled by rejection: forward paths of duration t are accepted
when they survive and land within terminal_tol of the target, then rescaled
to the unit interval.  The tilted sampler adds the time-rescaled witness
drift to the proposal; acceptance still conditions on the same terminal
event, so accepted-path statistics are reported without reweighting (exact
for constant-frame models, an approximation documented for curved frames).

Proposals are generated in fixed path-id blocks (terminal-only first pass);
accepted trajectories are re-simulated from their reproducible noise rows,
so ensembles are deterministic and merge in path-id order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controls import ControlPath, integrate_controls_array, reparametrize_constant_speed
from .distance import DistanceOptions, DistanceResult, distance, min_energy_outside
from .geometry import SubRiemannianStructure, hormander_drift
from .kernel import _witness_tilt
from .rng import BLOCK, normals_for_paths
from .sde import _StepContext, _step_block, default_n_steps, run_paths

RATE_MIN = 1e-4


class BridgeInfeasibleError(RuntimeError):
    """Pilot acceptance below rate_min; enlarge t, the tolerance, or tilt."""


def default_terminal_tol(t):
    return 0.3 * np.sqrt(t)


@dataclass
class BridgeEnsemble:
    """Accepted unit-time bridge paths from x to y over duration t."""
    t: float
    x: np.ndarray
    y: np.ndarray
    s_grid: np.ndarray            # unit-interval grid, shape (n_steps + 1,)
    paths: np.ndarray             # (n_accepted, n_steps + 1, d)
    acceptance_rate: float
    terminal_tol: float
    seed: int
    n_proposals: int
    path_ids: np.ndarray
    tilted: bool = False

    @property
    def n_accepted(self):
        return self.paths.shape[0]

    def marginal(self, s_value):
        """Path states at unit time s (nearest grid point)."""
        k = int(round(s_value * (self.s_grid.size - 1)))
        return self.paths[:, k, :]


def _sample_bridge(s, t, x, y, n_target, terminal_tol, seed, n_steps,
                   tilt_witness, rate_min, max_proposals, stream, workers):
    if t <= 0.0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s.require_in_domain(x)
    s.require_in_domain(y)
    n_steps = int(n_steps) if n_steps is not None else default_n_steps(t)
    terminal_tol = float(terminal_tol) if terminal_tol is not None \
        else default_terminal_tol(t)

    tilt = _witness_tilt(tilt_witness, t, n_steps) if tilt_witness is not None else None
    drift = hormander_drift(s)

    accepted_ids = []
    n_proposed = 0
    pilot = max(2 * BLOCK, 4096)
    while n_proposed < max_proposals and len(accepted_ids) < n_target:
        chunk = min(4 * BLOCK, max_proposals - n_proposed)
        batch = run_paths(s, x, t, chunk, seed, stream=stream, n_steps=n_steps,
                          tilt_controls=tilt, workers=workers,
                          path_offset=n_proposed, drift=drift)
        ok = batch.alive & (np.linalg.norm(batch.terminal - y, axis=1) <= terminal_tol)
        accepted_ids.extend((n_proposed + np.nonzero(ok)[0]).tolist())
        n_proposed += chunk
        if n_proposed >= pilot:
            rate = len(accepted_ids) / n_proposed
            if rate < rate_min:
                raise BridgeInfeasibleError(
                    f"acceptance rate {rate:.2e} below {rate_min:.0e} after "
                    f"{n_proposed} proposals; increase t or terminal_tol, or "
                    f"use the tilted sampler")

    ids = np.asarray(accepted_ids[:n_target], dtype=np.int64)
    rate = len(accepted_ids) / max(n_proposed, 1)
    if ids.size == 0:
        raise BridgeInfeasibleError(
            "no accepted paths; increase t or terminal_tol, or tilt")

    # second pass: regenerate the accepted rows' noise and store trajectories
    ctx = _StepContext(s, t, n_steps, None, None, tilt, drift)
    normals = normals_for_paths(seed, stream, ids, n_steps * s.m)
    stored = _step_block(ctx, x, normals.reshape(ids.size, n_steps, s.m),
                         store=True)
    # terminal contract is a hard assertion, not a tolerance
    final_gap = np.linalg.norm(stored.paths[:, -1, :] - y, axis=1)
    if not np.all(stored.alive & (final_gap <= terminal_tol)):
        raise AssertionError("re-simulated accepted path violates the terminal ball")

    return BridgeEnsemble(t=float(t), x=x, y=y,
                          s_grid=np.linspace(0.0, 1.0, n_steps + 1),
                          paths=stored.paths, acceptance_rate=float(rate),
                          terminal_tol=terminal_tol, seed=seed,
                          n_proposals=n_proposed, path_ids=ids,
                          tilted=tilt_witness is not None)


def sample_bridge_rejection(s: SubRiemannianStructure, t, x, y, n_target=1000,
                            terminal_tol=None, seed=0, n_steps=None,
                            rate_min=RATE_MIN, max_proposals=4_000_000,
                            stream="bridge", workers=1) -> BridgeEnsemble:
    """Plain rejection sampler for the bridge law over duration t."""
    return _sample_bridge(s, t, x, y, n_target, terminal_tol, seed, n_steps,
                          None, rate_min, max_proposals, stream, workers)


def sample_bridge_tilted(s: SubRiemannianStructure, t, x, y, n_target=1000,
                         terminal_tol=None, seed=0, n_steps=None,
                         witness: Optional[ControlPath] = None,
                         rate_min=RATE_MIN, max_proposals=4_000_000,
                         stream="bridge", workers=1,
                         dist_opts: Optional[DistanceOptions] = None) -> BridgeEnsemble:
    """Rejection sampler with the distance-witness drift added to the proposal.

    Acceptance conditions on the same terminal ball, so accepted-path
    statistics estimate the same conditional law; the drift only raises the
    acceptance rate.  With a zero witness this reduces to the plain sampler
    on the same seeds.
    """
    if witness is None:
        witness = distance(s, x, y, dist_opts).witness
    if np.all(witness.controls == 0.0):
        return _sample_bridge(s, t, x, y, n_target, terminal_tol, seed,
                              n_steps, None, rate_min, max_proposals, stream,
                              workers)
    return _sample_bridge(s, t, x, y, n_target, terminal_tol, seed, n_steps,
                          witness, rate_min, max_proposals, stream, workers)


@dataclass
class TubeDiagnostic:
    """Share of bridge paths staying in the chart-Euclidean rho-tube of gamma."""
    rho: float
    fraction_inside: float
    stderr: float
    sup_deviation_quantiles: dict
    n_paths: int
    t: float


def reference_path(s: SubRiemannianStructure, x, result: DistanceResult,
                   s_grid) -> np.ndarray:
    """Constant-speed witness trajectory interpolated onto the bridge grid."""
    witness = reparametrize_constant_speed(result.witness)
    traj, _ = integrate_controls_array(s, np.asarray(x, dtype=float),
                                       witness.controls)
    src = np.linspace(0.0, 1.0, traj.shape[0])
    out = np.empty((len(s_grid), s.dim))
    for j in range(s.dim):
        out[:, j] = np.interp(s_grid, src, traj[:, j])
    return out


def concentration_diagnostic(ens: BridgeEnsemble, gamma: np.ndarray,
                             rho) -> TubeDiagnostic:
    """Fraction of accepted paths with sup_s |omega_s - gamma_s| < rho.

    Deviations are chart-Euclidean (a distance surrogate equivalent by the
    chart Hoelder bounds); gamma must be sampled on the ensemble grid.
    """
    if ens.n_accepted == 0:
        raise ValueError("empty ensemble")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (ens.s_grid.size, ens.paths.shape[2]):
        raise ValueError("gamma must be sampled on the ensemble grid")
    dev = np.linalg.norm(ens.paths - gamma[None], axis=2)
    sup_dev = np.max(dev, axis=1)
    inside = sup_dev < rho
    frac = float(np.mean(inside))
    stderr = float(np.sqrt(max(frac * (1.0 - frac), 1e-12) / ens.n_accepted))
    qs = {q: float(np.quantile(sup_dev, q)) for q in (0.5, 0.9, 0.95, 0.99)}
    return TubeDiagnostic(rho=float(rho), fraction_inside=frac, stderr=stderr,
                          sup_deviation_quantiles=qs, n_paths=ens.n_accepted,
                          t=ens.t)


@dataclass
class StrongMinimalityReport:
    is_strong: bool
    margin: float
    outside_energy: float
    minimal_energy: float
    penetration: float
    converged: bool


def strong_minimality_report(s: SubRiemannianStructure, x, y, box_lo, box_hi,
                             delta_probe=0.02,
                             opts: Optional[DistanceOptions] = None,
                             dist_result: Optional[DistanceResult] = None,
                             margin_tol=1e-3) -> StrongMinimalityReport:
    """Margin between paths forced to leave the box and the minimal energy."""
    if dist_result is None:
        dist_result = distance(s, x, y, opts)
    outside, penetration = min_energy_outside(s, x, y, box_lo, box_hi,
                                              delta_probe=delta_probe, opts=opts)
    margin = outside.energy - dist_result.energy
    return StrongMinimalityReport(
        is_strong=bool(margin > margin_tol and outside.converged),
        margin=float(margin), outside_energy=float(outside.energy),
        minimal_energy=float(dist_result.energy),
        penetration=float(penetration), converged=bool(outside.converged))
