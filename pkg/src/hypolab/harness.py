"""Experiment front end: dispatch configs to the modules and write outputs.

Every run writes `results.jsonl` (one record per estimate/audit, sorted keys,
no timestamps), CSV plot data where the command produces curves or paths, and
a human-readable `summary.txt` whose header carries the only timestamp.
Exit status: 0 all configured assertions passed, 1 an assertion failed,
2 invalid config, 3 runtime infeasibility.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import kernel as kernel_mod
from . import sde as sde_mod
from .bridge import (BridgeInfeasibleError, concentration_diagnostic,
                     reference_path, sample_bridge_rejection,
                     sample_bridge_tilted, strong_minimality_report)
from .config import (ConfigError, ExperimentConfig, dump_config, make_set,
                     parse_config, structure_from_model_spec)
from .distance import (DistanceOptions, distance, distance_to_set,
                       distance_through_set)
from .dual import DualCertificate, check_grid_box, dual_certificate_check
from .geometry import Polynomial, cometric, homogeneous_dimension, lie_bracket
from .infinity import distance_to_infinity, hsu_condition
from .volume import ball_volume, chart_exponent, dimension_estimate, doubling_ratio

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

# command -> spec operations it reaches (coverage self-test enumerates this)
DISPATCH_COVERAGE = {
    "distance": ["metric.distance", "metric.shoot_refine",
                 "metric.integrate_control", "metric.energy",
                 "metric.distance_to_set", "metric.distance_through_set"],
    "dual": ["metric.dual_certificate_check"],
    "volume": ["metric.ball_volume", "metric.dimension_estimate",
               "metric.doubling_ratio", "metric.chart_exponent",
               "models.homogeneous_dimension", "models.cometric",
               "models.lie_bracket"],
    "simulate": ["sde.simulate", "sde.hitting_time_samples",
                 "models.hormander_drift", "models.augment_with_time"],
    "kernel": ["kernel.estimate_kernel", "kernel.estimate_kernel_dirichlet",
               "kernel.reflected_kernel"],
    "hitprob": ["kernel.hitting_probability", "kernel.hitting_bound_audit"],
    "through": ["kernel.through_kernel", "kernel.through_bound_audit",
                "models.sector_bound"],
    "varadhan": ["kernel.varadhan_audit", "metric.hsu_condition",
                 "metric.distance_to_infinity"],
    "bridge": ["bridge.sample_bridge_rejection", "bridge.sample_bridge_tilted",
               "bridge.concentration_diagnostic",
               "bridge.strong_minimality_report", "metric.min_energy_outside"],
    "audit-all": ["harness.run", "harness.audit_all"],
}

ALL_OPERATIONS = [
    "models.cometric", "models.lie_bracket", "models.homogeneous_dimension",
    "models.hormander_drift", "models.sector_bound", "models.augment_with_time",
    "metric.integrate_control", "metric.energy", "metric.distance",
    "metric.shoot_refine", "metric.distance_to_set",
    "metric.distance_through_set", "metric.distance_to_infinity",
    "metric.hsu_condition", "metric.dual_certificate_check",
    "metric.ball_volume", "metric.dimension_estimate", "metric.doubling_ratio",
    "metric.chart_exponent", "metric.min_energy_outside",
    "sde.simulate", "sde.hitting_time_samples",
    "kernel.estimate_kernel", "kernel.estimate_kernel_dirichlet",
    "kernel.through_kernel", "kernel.hitting_probability",
    "kernel.reflected_kernel", "kernel.varadhan_audit",
    "kernel.hitting_bound_audit", "kernel.through_bound_audit",
    "bridge.sample_bridge_rejection", "bridge.sample_bridge_tilted",
    "bridge.concentration_diagnostic", "bridge.strong_minimality_report",
    "harness.run", "harness.audit_all",
]


def _to_plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _to_plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_to_plain(x) for x in v]
    return v


def render_records(records):
    """Deterministic JSON-lines rendering (sorted keys, repr floats)."""
    lines = [json.dumps(_to_plain(r), sort_keys=True) for r in records]
    return ("\n".join(lines) + "\n") if lines else ""


def write_outputs(out_dir, records, csv_files, summary_lines):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.jsonl").write_text(render_records(records))
    for name, (header, rows) in csv_files.items():
        text = ",".join(header) + "\n"
        text += "\n".join(",".join(repr(v) if isinstance(v, float) else str(v)
                                   for v in row) for row in rows)
        (out / name).write_text(text + ("\n" if rows else ""))
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    body = f"# summary written {stamp}\n" + "\n".join(summary_lines) + "\n"
    (out / "summary.txt").write_text(body)


class _RunContext:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.records = []
        self.csv = {}
        self.summary = []
        self.failures = 0

    def note(self, line):
        self.summary.append(line)

    def assert_close(self, label, value, expect, tol):
        ok = abs(value - expect) <= tol
        self.failures += 0 if ok else 1
        self.note(f"[{'PASS' if ok else 'FAIL'}] {label}: {value:.6g} "
                  f"(expected {expect:.6g} +- {tol:.2g})")
        return ok

    def assert_true(self, label, ok, detail=""):
        ok = bool(ok)
        self.failures += 0 if ok else 1
        self.note(f"[{'PASS' if ok else 'FAIL'}] {label}" +
                  (f": {detail}" if detail else ""))
        return ok


def _dist_opts(body, seed):
    kw = {"seed": seed}
    if "n_steps" in body:
        kw["n_steps"] = int(body["n_steps"])
    if "restarts" in body:
        kw["restarts"] = int(body["restarts"])
    if "maxiter" in body:
        kw["maxiter"] = int(body["maxiter"])
    if body.get("refine"):
        kw["refine"] = True
    return DistanceOptions(**kw)


def _witness_csv(ctx, s, x, result, name="witness.csv"):
    if result.witness is None:
        return
    from .controls import integrate_controls_array

    traj, _ = integrate_controls_array(s, np.asarray(x, dtype=float),
                                       result.witness.controls)
    n = traj.shape[0] - 1
    rows = [[k / n] + list(map(float, traj[k])) for k in range(n + 1)]
    ctx.csv[name] = (["t"] + [f"x{i+1}" for i in range(s.dim)], rows)


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def _cmd_distance(ctx, s, body, seed, workers):
    opts = _dist_opts(body, seed)
    x = np.asarray(body["x"], dtype=float)
    target_set = make_set(body.get("set_kind"), body.get("set_param"), s.dim)
    if target_set is not None and body.get("through_y") is not None:
        y = np.asarray(body["through_y"], dtype=float)
        res = distance_through_set(s, x, target_set, y, opts)
        label = f"d(x, A, y) on {s.name}"
    elif target_set is not None:
        res = distance_to_set(s, x, target_set, opts)
        label = f"d(x, A) on {s.name}"
    else:
        y = np.asarray(body["y"], dtype=float)
        res = distance(s, x, y, opts)
        label = f"d(x, y) on {s.name}"
    rec = {"kind": "distance", "model": s.name, "x": x, "value": res.value,
           "converged": res.converged, "energy": res.energy,
           "endpoint_gap": res.endpoint_gap, "seed": seed}
    if res.witness is not None:
        rec["witness_energy"] = res.witness.energy
    ctx.records.append(rec)
    ctx.csv["distances.csv"] = (
        ["model", "x", "y", "value", "dual_bound", "gap", "converged"],
        [[s.name, " ".join(map(str, x)),
          " ".join(map(str, np.asarray(body.get("y", body.get("through_y", [])))))
          or "-", float(res.value), "", "", bool(res.converged)]])
    _witness_csv(ctx, s, x, res)
    ctx.note(f"{label} = {res.value:.6f} (converged={res.converged})")
    if "expect" in body:
        ctx.assert_close(label, res.value, float(body["expect"]),
                         float(body.get("tolerance", 1e-3)))
    return EXIT_OK


def _cmd_dual(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    y = np.asarray(body["y"], dtype=float) if body.get("y") is not None else None
    dim = s.dim
    lo = body.get("grid_lo", [-1.5] * dim)
    hi = body.get("grid_hi", [1.5] * dim)
    grid = check_grid_box(lo, hi, int(body.get("grid_per_axis", 7)))

    def poly_fn(rows):
        p = Polynomial.from_table(dim, rows)
        return lambda z: p(z)

    cert = DualCertificate(w_minus=poly_fn(body["w"]),
                           w_plus=poly_fn(body["w_plus"]) if body.get("w_plus") else None,
                           grid=grid)
    target_set = make_set(body.get("set_kind"), body.get("set_param"), dim)
    bound = dual_certificate_check(s, cert, x, y, target=target_set)
    ctx.records.append({"kind": "dual-certificate", "model": s.name,
                        "bound": bound, "admissible": cert.admissible,
                        "max_gradient_norm2": cert.max_gradient_norm2,
                        "seed": seed})
    ctx.note(f"dual bound {bound:.6f} (admissible={cert.admissible}, "
             f"max a(grad w, grad w) = {cert.max_gradient_norm2:.4f})")
    if "expect_min" in body:
        ctx.assert_true("bound >= expect_min", bound >= float(body["expect_min"]),
                        f"bound {bound:.6f}")
    return EXIT_OK


def _cmd_volume(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    growth = homogeneous_dimension(s, x)
    a_mat = cometric(s, x)
    rank = int(np.linalg.matrix_rank(a_mat, tol=1e-10))
    bracket = lie_bracket(s, 0, min(1, s.m - 1), x)
    ctx.note(f"bracket growth at x: {growth.growth}, N = {growth.N}, "
             f"cometric rank {rank}")
    rec = {"kind": "volume", "model": s.name, "x": x, "bracket_N": growth.N,
           "growth": list(growth.growth), "cometric_rank": rank,
           "first_bracket": bracket, "seed": seed}
    if "r_grid" in body:
        slope, ests = dimension_estimate(
            s, x, body["r_grid"], n_samples=int(body.get("n_samples", 20000)),
            seed=seed)
        rec["slope"] = slope
        rec["volumes"] = [e.volume for e in ests]
        rec["stderrs"] = [e.stderr for e in ests]
        ctx.csv["volumes.csv"] = (
            ["r", "volume", "stderr"],
            [[float(r), e.volume, e.stderr]
             for r, e in zip(body["r_grid"], ests)])
        ctx.note(f"log-log volume slope {slope:.3f}")
        if "expect_slope" in body:
            ctx.assert_close("volume slope", slope, float(body["expect_slope"]),
                             float(body.get("tolerance", 0.3)))
    if "doubling_r" in body:
        ratio, rerr, _ = doubling_ratio(
            s, x, float(body["doubling_r"]),
            n_samples=int(body.get("n_samples", 20000)), seed=seed)
        rec["doubling_ratio"] = ratio
        ctx.note(f"doubling ratio {ratio:.3f} +- {rerr:.3f}")
    if "direction" in body and "h_grid" in body:
        expo, vals = chart_exponent(s, x, body["direction"], body["h_grid"],
                                    opts=DistanceOptions(seed=seed))
        rec["chart_exponent"] = expo
        ctx.note(f"chart exponent {expo:.3f}")
    ctx.records.append(rec)
    return EXIT_OK


def _cmd_simulate(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    t_final = float(body.get("t_final", 1.0))
    n_paths = int(body.get("n_paths", 10000))
    n_steps = int(body["n_steps"]) if "n_steps" in body else None
    monitor = make_set(body.get("monitor_kind"), body.get("monitor_param"), s.dim)
    if monitor is not None:
        hs = sde_mod.hitting_time_samples(s, x, monitor, t_final, n_paths,
                                          seed, n_steps=n_steps, workers=workers)
        ctx.records.append({"kind": "hitting-times", "model": s.name,
                            "t_final": t_final,
                            "probability": hs.probability(),
                            "stderr": hs.stderr(), "n_paths": n_paths,
                            "seed": seed})
        ctx.note(f"P(T <= {t_final:g}) = {hs.probability():.4f} "
                 f"+- {hs.stderr():.4f}")
    batch = sde_mod.run_paths(s, x, t_final, n_paths, seed, n_steps=n_steps,
                              workers=workers)
    mean = batch.terminal[batch.alive].mean(axis=0) if np.any(batch.alive) \
        else np.full(s.dim, np.nan)
    ctx.records.append({"kind": "simulate", "model": s.name, "t_final": t_final,
                        "n_paths": n_paths, "survival": float(np.mean(batch.alive)),
                        "terminal_mean": mean, "seed": seed})
    ctx.note(f"survival {np.mean(batch.alive):.4f}, terminal mean "
             + np.array2string(mean, precision=4))
    n_dump = int(body.get("dump_paths", 0))
    if n_dump > 0:
        rows = []
        for pid in range(min(n_dump, n_paths)):
            path = sde_mod.simulate(s, x, t_final, n_steps=n_steps, seed=seed,
                                    path_id=pid)
            alive_until = path.exit_index if path.exit_index is not None \
                else len(path.times)
            for k, (tk, state) in enumerate(zip(path.times, path.states)):
                rows.append([pid, k, float(tk)] + list(map(float, state))
                            + [int(k < alive_until)])
        ctx.csv["trajectories.csv"] = (
            ["path_id", "step", "t"] + [f"x{i+1}" for i in range(s.dim)]
            + ["alive"], rows)
    return EXIT_OK


def _cmd_kernel(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    y = np.asarray(body["y"], dtype=float)
    t = float(body["t"])
    n_paths = int(body.get("n_paths", 100000))
    n_steps = int(body["n_steps"]) if "n_steps" in body else None
    r_kde = float(body["r_kde"]) if "r_kde" in body else None
    barrier = make_set(body.get("barrier_kind"), body.get("barrier_param"), s.dim)
    tilt = None
    if body.get("girsanov"):
        tilt = distance(s, x, y, DistanceOptions(seed=seed)).witness
    batch = kernel_mod.run_kernel_paths(s, t, x, n_paths, seed, "kernel-cmd",
                                        n_steps=n_steps, monitor=barrier,
                                        tilt_witness=tilt, workers=workers)
    est = kernel_mod.estimate_kernel(s, t, x, y, r_kde=r_kde, seed=seed,
                                     batch=batch)
    ctx.records.append({"kind": "kernel", "model": s.name, "t": t,
                        "value": est.value, "stderr": est.stderr,
                        "bias": est.bias, "r_kde": est.r_kde,
                        "n_paths": n_paths, "seed": seed})
    ctx.note(f"p({t:g}, x, y) = {est.value:.6g} +- {est.stderr:.2g} "
             f"(KDE bias bound {est.bias:.2g})")
    if barrier is not None:
        diri = kernel_mod.estimate_kernel_dirichlet(s, t, x, y, barrier,
                                                    r_kde=r_kde, seed=seed,
                                                    batch=batch)
        ctx.records.append({"kind": "kernel-dirichlet", "model": s.name,
                            "t": t, "value": diri.value,
                            "stderr": diri.stderr, "seed": seed})
        ctx.note(f"p_U = {diri.value:.6g} +- {diri.stderr:.2g} "
                 f"(coupling p_U <= p: {diri.value <= est.value})")
        if body.get("reflected"):
            for xs, ys in (("-", "-"), ("-", "+")):
                refl = kernel_mod.reflected_kernel(s, t, xs, ys, x, y, barrier,
                                                   r_kde=r_kde, seed=seed,
                                                   batch=batch)
                ctx.records.append({"kind": "kernel-reflected", "model": s.name,
                                    "copies": xs + ys, "t": t,
                                    "value": refl.value,
                                    "stderr": refl.stderr, "seed": seed})
                ctx.note(f"doubled-manifold p~({xs},{ys}) = {refl.value:.6g}")
    if "expect" in body:
        tol = float(body.get("tolerance", est.three_sigma()))
        ctx.assert_close("kernel estimate", est.value, float(body["expect"]), tol)
    return EXIT_OK


def _cmd_hitprob(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    target = make_set(body["set_kind"], body["set_param"], s.dim)
    n_paths = int(body.get("n_paths", 100000))
    n_steps = int(body["n_steps"]) if "n_steps" in body else None
    if "t" in body:
        est = kernel_mod.hitting_probability(s, float(body["t"]), x, target,
                                             n_paths=n_paths, seed=seed,
                                             n_steps=n_steps, workers=workers)
        ctx.records.append({"kind": "hitting-probability", "model": s.name,
                            "t": float(body["t"]), "value": est.value,
                            "stderr": est.stderr, "n_paths": n_paths,
                            "seed": seed})
        ctx.note(f"P(T <= {body['t']:g}) = {est.value:.5f} +- {est.stderr:.5f}")
        if "expect" in body:
            ctx.assert_close("hitting probability", est.value,
                             float(body["expect"]),
                             float(body.get("tolerance", 3.0 * est.stderr)))
    if "t_grid" in body:
        audit = kernel_mod.hitting_bound_audit(
            s, x, target, body["t_grid"], n_paths=n_paths, seed=seed,
            workers=workers, dist_opts=DistanceOptions(seed=seed),
            ball_volume_fn=lambda r: ball_volume(s, x, r, n_samples=2000,
                                                 seed=seed).volume)
        _audit_outputs(ctx, audit, "hitting")
        if "expect_limit" in body:
            ctx.assert_close("extrapolated hitting limit",
                             audit.extrapolated_limit,
                             float(body["expect_limit"]),
                             float(body.get("limit_tolerance", 0.1)))
    return EXIT_OK


def _audit_outputs(ctx, audit, name):
    ctx.records.append({
        "kind": f"{name}-audit", "t_grid": audit.t_grid, "lhs": audit.lhs,
        "lhs_stderr": audit.lhs_stderr, "rhs": audit.rhs,
        "limit": audit.extrapolated_limit,
        "fit": audit.fit_coefficients, "extra": audit.extra})
    rows = [[float(t), float(l), float(audit.rhs), float(m), float(se)]
            for t, l, m, se in zip(audit.t_grid, audit.lhs, audit.margins,
                                   audit.lhs_stderr)]
    ctx.csv[f"{name}_audit.csv"] = (["t", "t_log_p", "rhs", "margin", "stderr"],
                                    rows)
    ctx.note(f"{name} audit: limit {audit.extrapolated_limit:.4f} vs rhs "
             f"{audit.rhs:.4f} (margin {audit.margin_limit:+.4f})")


def _cmd_through(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    y = np.asarray(body["y"], dtype=float)
    target = make_set(body["set_kind"], body["set_param"], s.dim)
    dt = None
    if "n_steps_per_unit_t" in body:
        per_unit = float(body["n_steps_per_unit_t"])
        dt = 1.0 / per_unit
    audit = kernel_mod.through_bound_audit(
        s, x, target, y, body["t_grid"],
        n_paths=int(body.get("n_paths", 100000)), seed=seed,
        n_steps_for=(lambda t: max(50, int(t / dt))) if dt else None,
        sector=bool(body.get("sector", False)),
        sector_box=body.get("sector_box"), workers=workers,
        dist_opts=DistanceOptions(seed=seed),
        r_kde_scale=float(body.get("r_kde_scale", 0.4)))
    _audit_outputs(ctx, audit, "through")
    if "expect_limit" in body:
        ctx.assert_close("extrapolated through limit", audit.extrapolated_limit,
                         float(body["expect_limit"]),
                         float(body.get("limit_tolerance", 0.15)))
    return EXIT_OK


def _cmd_varadhan(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    y = np.asarray(body["y"], dtype=float)
    audit = kernel_mod.varadhan_audit(
        s, x, y, body["t_grid"], n_paths=int(body.get("n_paths", 200000)),
        seed=seed, tilt=bool(body.get("girsanov", False)), workers=workers,
        dist_opts=DistanceOptions(seed=seed),
        r_kde_scale=float(body.get("r_kde_scale", 0.25)))
    if body.get("check_hsu"):
        rec = hsu_condition(s, x, y, exhaustion=body.get("exhaustion"),
                            dist_opts=DistanceOptions(seed=seed))
        audit.extra["hsu"] = {"in_S": rec.in_S, "d": rec.d,
                              "dx_inf": rec.dx_inf, "dy_inf": rec.dy_inf}
        ctx.note(f"Hsu condition: in_S={rec.in_S} (d={rec.d:.4f}, "
                 f"d(x,inf)={rec.dx_inf:.4g}, d(y,inf)={rec.dy_inf:.4g})")
    _audit_outputs(ctx, audit, "varadhan")
    if "expect_limit" in body:
        ctx.assert_close("extrapolated Varadhan limit",
                         audit.extrapolated_limit, float(body["expect_limit"]),
                         float(body.get("limit_tolerance", 0.1)))
    return EXIT_OK


def _cmd_bridge(ctx, s, body, seed, workers):
    x = np.asarray(body["x"], dtype=float)
    y = np.asarray(body["y"], dtype=float)
    t = float(body["t"])
    dres = distance(s, x, y, DistanceOptions(seed=seed))
    sampler = sample_bridge_tilted if body.get("tilted", True) \
        else sample_bridge_rejection
    kwargs = dict(n_target=int(body.get("n_target", 1000)),
                  terminal_tol=body.get("terminal_tol"), seed=seed,
                  workers=workers)
    if body.get("tilted", True):
        kwargs["witness"] = dres.witness
    ens = sampler(s, t, x, y, **kwargs)
    gamma = reference_path(s, x, dres, ens.s_grid)
    diag = concentration_diagnostic(ens, gamma, float(body.get("rho", 0.3)))
    ctx.records.append({"kind": "bridge", "model": s.name, "t": t,
                        "rho": diag.rho,
                        "fraction_inside": diag.fraction_inside,
                        "stderr": diag.stderr,
                        "quantiles": diag.sup_deviation_quantiles,
                        "acceptance_rate": ens.acceptance_rate,
                        "n_accepted": ens.n_accepted, "seed": seed})
    ctx.note(f"bridge t={t:g}: acceptance {ens.acceptance_rate:.4f}, "
             f"tube fraction {diag.fraction_inside:.3f} at rho={diag.rho:g}")
    rows = []
    for pid in range(min(5, ens.n_accepted)):
        for k, sv in enumerate(ens.s_grid):
            rows.append([pid, float(sv)] + list(map(float, ens.paths[pid, k])))
    ctx.csv["bridge_paths.csv"] = (
        ["path", "s"] + [f"x{i+1}" for i in range(s.dim)], rows)
    if "box_lo" in body and "box_hi" in body:
        rep = strong_minimality_report(
            s, x, y, body["box_lo"], body["box_hi"],
            delta_probe=float(body.get("delta_probe", 0.02)),
            opts=DistanceOptions(seed=seed), dist_result=dres)
        ctx.records.append({"kind": "strong-minimality", "model": s.name,
                            "margin": rep.margin, "is_strong": rep.is_strong,
                            "seed": seed})
        ctx.note(f"strong minimality margin {rep.margin:.4f} "
                 f"(is_strong={rep.is_strong})")
    if "expect_min_fraction" in body:
        ctx.assert_true("tube fraction >= threshold",
                        diag.fraction_inside >= float(body["expect_min_fraction"]),
                        f"{diag.fraction_inside:.3f}")
    return EXIT_OK


def _cmd_audit_all(ctx, s, body, seed, workers):
    from .battery import run_battery

    suite = body.get("suite", "quick")
    if suite not in ("quick", "full"):
        raise ConfigError(f"unknown suite {suite!r}; expected quick or full")
    results = run_battery(suite=suite, seed=seed, workers=workers)
    ctx.note(f"acceptance battery suite={suite}")
    for r in results:
        ctx.records.extend(r.records)
        status = "PASS" if r.passed else "FAIL"
        ctx.note(f"[{status}] criterion {r.index}: {r.name} "
                 f"({r.seconds:.1f}s)")
        for c in r.checks:
            mark = "ok" if c.passed else "FAILED"
            ctx.note(f"    - {c.label}: {mark}" +
                     (f" ({c.detail})" if c.detail else ""))
        if not r.passed:
            ctx.failures += 1
    return EXIT_OK


_HANDLERS = {
    "distance": _cmd_distance,
    "dual": _cmd_dual,
    "volume": _cmd_volume,
    "simulate": _cmd_simulate,
    "kernel": _cmd_kernel,
    "hitprob": _cmd_hitprob,
    "through": _cmd_through,
    "varadhan": _cmd_varadhan,
    "bridge": _cmd_bridge,
    "audit-all": _cmd_audit_all,
}


def run(cfg: ExperimentConfig, out_dir=None) -> int:
    """Execute a validated config; writes outputs and returns the exit status."""
    ctx = _RunContext(cfg)
    out_dir = out_dir or cfg.out
    try:
        s = structure_from_model_spec(cfg.section("model")) \
            if "model" in cfg.sections else None
        handler = _HANDLERS[cfg.command]
        ctx.note(f"command: {cfg.command}  model: "
                 f"{s.name if s is not None else '-'}  seed: {cfg.seed}")
        handler(ctx, s, cfg.section(cfg.command), cfg.seed, cfg.workers)
    except ConfigError as exc:
        ctx.note(f"config error: {exc}")
        write_outputs(out_dir, ctx.records, ctx.csv, ctx.summary)
        return EXIT_CONFIG
    except BridgeInfeasibleError as exc:
        ctx.note(f"infeasible: {exc}")
        write_outputs(out_dir, ctx.records, ctx.csv, ctx.summary)
        return EXIT_INFEASIBLE
    write_outputs(out_dir, ctx.records, ctx.csv, ctx.summary)
    return EXIT_OK if ctx.failures == 0 else EXIT_ASSERTION


def run_text(text: str, out_dir=None, **overrides) -> int:
    """Parse + run a config given as text; config errors exit with status 2."""
    try:
        cfg = parse_config(text)
        cfg.override(**overrides)
        from .config import validate_config
        validate_config(cfg)
    except ConfigError as exc:
        out = Path(out_dir or "out")
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(f"config error: {exc}\n")
        return EXIT_CONFIG
    return run(cfg, out_dir=out_dir)


def audit_all(suite="quick", seed=None, workers=1, out_dir="out"):
    """Run the acceptance battery and write the aggregated report."""
    from .battery import DEFAULT_SEED

    cfg = ExperimentConfig({
        "experiment": {"command": "audit-all",
                       "seed": DEFAULT_SEED if seed is None else int(seed),
                       "workers": int(workers), "out": out_dir},
        "audit-all": {"suite": suite},
    })
    return run(cfg, out_dir=out_dir)
