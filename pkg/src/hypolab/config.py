"""Sectioned key-value experiment configs with typed scalars and inline arrays.

Format: `[section]` headers, `key = value` lines, `#` comments.  Values are
parsed as Python literals (numbers, booleans, quoted strings, nested lists);
bare words fall back to strings.  Unknown keys are rejected against the
per-command schemas, and configs round-trip through serialization unchanged.

Inline user models are polynomial coefficient tables: `field_<l>_<i>` holds
the monomial rows [coeff, e_1, ..., e_d] of component i of field l, and
`beta_<i>` / `nu_log` follow the same row format.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from .geometry import Domain, Polynomial, SubRiemannianStructure, VectorField


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad type, bad value)."""


COMMANDS = ("distance", "dual", "volume", "simulate", "kernel", "hitprob",
            "through", "varadhan", "bridge", "audit-all")

_EXPERIMENT_KEYS = {"command", "seed", "workers", "out"}

# per-command option keys (the command's own section)
_SCHEMAS = {
    "distance": {"x", "y", "expect", "tolerance", "n_steps", "restarts",
                 "refine", "maxiter", "set_kind", "set_param", "through_y"},
    "dual": {"x", "y", "w", "w_plus", "grid_lo", "grid_hi", "grid_per_axis",
             "set_kind", "set_param", "expect_min"},
    "volume": {"x", "r_grid", "n_samples", "expect_slope", "tolerance",
               "doubling_r", "direction", "h_grid"},
    "simulate": {"x", "t_final", "n_paths", "n_steps", "dump_paths",
                 "monitor_kind", "monitor_param"},
    "kernel": {"x", "y", "t", "n_paths", "n_steps", "r_kde", "expect",
               "tolerance", "barrier_kind", "barrier_param", "reflected",
               "girsanov"},
    "hitprob": {"x", "t", "t_grid", "n_paths", "n_steps", "set_kind",
                "set_param", "expect", "tolerance", "expect_limit",
                "limit_tolerance"},
    "through": {"x", "y", "t_grid", "n_paths", "n_steps_per_unit_t", "r_kde_scale",
                "set_kind", "set_param", "sector", "sector_box", "expect_limit",
                "limit_tolerance"},
    "varadhan": {"x", "y", "t_grid", "n_paths", "r_kde_scale", "girsanov",
                 "expect_limit", "limit_tolerance", "check_hsu", "exhaustion"},
    "bridge": {"x", "y", "t", "n_target", "terminal_tol", "tilted", "rho",
               "box_lo", "box_hi", "delta_probe", "expect_min_fraction"},
    "audit-all": {"suite"},
}

_MODEL_KEYS_FIXED = {"name", "dim", "num_fields", "nu_log", "domain"}


@dataclass
class ExperimentConfig:
    sections: dict = field(default_factory=dict)

    @property
    def command(self):
        return self.sections.get("experiment", {}).get("command")

    @property
    def seed(self):
        return int(self.sections.get("experiment", {}).get("seed", 0))

    @property
    def workers(self):
        return int(self.sections.get("experiment", {}).get("workers", 1))

    @property
    def out(self):
        return self.sections.get("experiment", {}).get("out", "out")

    def section(self, name):
        return self.sections.get(name, {})

    def override(self, **kwargs):
        exp = self.sections.setdefault("experiment", {})
        for k, v in kwargs.items():
            if v is not None:
                exp[k] = v

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.sections == other.sections


def _parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text: str) -> ExperimentConfig:
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section name")
            if current in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = _parse_value(value)
    cfg = ExperimentConfig(sections)
    validate_config(cfg)
    return cfg


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return repr(v)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name, body in cfg.sections.items():
        lines.append(f"[{name}]")
        for k, v in body.items():
            lines.append(f"{k} = {_format_value(v)}")
        lines.append("")
    return "\n".join(lines)


def validate_config(cfg: ExperimentConfig):
    if "experiment" not in cfg.sections:
        raise ConfigError("missing [experiment] section")
    exp = cfg.sections["experiment"]
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in [experiment]: {sorted(unknown)}")
    command = exp.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    if "seed" in exp and not isinstance(exp["seed"], int):
        raise ConfigError("seed must be an integer")
    if "workers" in exp:
        if not isinstance(exp["workers"], int) or exp["workers"] < 1:
            raise ConfigError("workers must be a positive integer")

    if command != "audit-all" and "model" not in cfg.sections:
        raise ConfigError(f"command {command!r} needs a [model] section")
    if "model" in cfg.sections:
        _validate_model(cfg.sections["model"])

    body = cfg.sections.get(command, {})
    allowed = _SCHEMAS[command]
    unknown = set(body) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{command}]: {sorted(unknown)}")
    _validate_positive(body, ("t", "t_final", "tolerance", "n_paths", "n_steps",
                              "n_target", "n_samples", "r_kde", "rho",
                              "delta_probe", "terminal_tol"))
    for grid_key, strict in (("t_grid", True), ("r_grid", True), ("h_grid", True)):
        grid = body.get(grid_key)
        if grid is not None:
            arr = np.asarray(grid, dtype=float)
            if arr.ndim != 1 or arr.size < 2:
                raise ConfigError(f"{grid_key} must be a list of at least 2 values")
            if np.any(arr <= 0.0):
                raise ConfigError(f"{grid_key} values must be positive")
            if strict and np.any(np.diff(arr) >= 0.0):
                raise ConfigError(f"{grid_key} must be strictly decreasing")
    unused = set(cfg.sections) - {"experiment", "model", command}
    if unused:
        raise ConfigError(f"sections not used by command {command!r}: {sorted(unused)}")


def _validate_positive(body, keys):
    for k in keys:
        if k in body:
            v = body[k]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"{k} must be a positive number, got {v!r}")


def _validate_model(body):
    if "name" not in body:
        raise ConfigError("[model] needs a name")
    name = body["name"]
    if name != "custom":
        extra = set(body) - {"name"}
        if extra:
            raise ConfigError(f"catalog model takes no extra keys: {sorted(extra)}")
        return
    if "dim" not in body or "num_fields" not in body:
        raise ConfigError("custom model needs dim and num_fields")
    d, m = body["dim"], body["num_fields"]
    if not (isinstance(d, int) and d >= 1 and isinstance(m, int) and m >= 1):
        raise ConfigError("dim and num_fields must be positive integers")
    allowed = set(_MODEL_KEYS_FIXED)
    allowed |= {f"field_{l}_{i}" for l in range(1, m + 1) for i in range(1, d + 1)}
    allowed |= {f"beta_{i}" for i in range(1, d + 1)}
    unknown = set(body) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [model]: {sorted(unknown)}")
    for l in range(1, m + 1):
        if not any(f"field_{l}_{i}" in body for i in range(1, d + 1)):
            raise ConfigError(f"custom model field {l} has no nonzero component")


def structure_from_model_spec(body) -> SubRiemannianStructure:
    """Build a structure from a [model] section (catalog name or tables).

    A trailing "+time" on a catalog name applies the time augmentation.
    """
    from .geometry import augment_with_time

    name = body["name"]
    if name != "custom":
        lifts = 0
        while name.endswith("+time"):
            name = name[:-5]
            lifts += 1
        try:
            s = catalog.get_model(name)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        for _ in range(lifts):
            s = augment_with_time(s)
        return s

    d, m = body["dim"], body["num_fields"]
    fields = []
    for l in range(1, m + 1):
        comps = []
        for i in range(1, d + 1):
            rows = body.get(f"field_{l}_{i}", [])
            comps.append(Polynomial.from_table(d, rows) if rows else Polynomial.zero(d))
        fields.append(VectorField.from_polynomials(comps, label=f"X{l}"))
    beta = None
    if any(f"beta_{i}" in body for i in range(1, d + 1)):
        beta = [Polynomial.from_table(d, body.get(f"beta_{i}", [])) if body.get(f"beta_{i}")
                else Polynomial.zero(d) for i in range(1, d + 1)]
    nu_log = Polynomial.from_table(d, body["nu_log"]) if body.get("nu_log") else None
    domain = _domain_from_spec(body.get("domain", "none"), d)
    return SubRiemannianStructure(d, fields, beta=beta, nu_log=nu_log,
                                  domain=domain, name="custom")


def _domain_from_spec(spec, d):
    if spec in (None, "none"):
        return None
    if isinstance(spec, str) and spec.startswith("slab:"):
        h = float(spec.split(":", 1)[1])
        return Domain(predicate=lambda x: np.abs(x[..., 1]) < h,
                      gap=lambda x: h - np.abs(x[..., 1]))
    if isinstance(spec, str) and spec.startswith("disc:"):
        r = float(spec.split(":", 1)[1])
        return Domain(predicate=lambda x: np.linalg.norm(x, axis=-1) < r,
                      gap=lambda x: r - np.linalg.norm(x, axis=-1))
    if spec == "punctured":
        return Domain(predicate=lambda x: np.linalg.norm(x, axis=-1) > 0.0,
                      gap=lambda x: np.linalg.norm(x, axis=-1))
    raise ConfigError(f"unknown domain spec {spec!r}")


def make_set(kind, param, dim):
    """Closed sets addressable from configs: halfspace / outside-ball / box."""
    from .sets import box_complement, halfspace, nowhere, outside_ball

    if kind in (None, "none"):
        return None
    if kind == "halfspace":
        normal = np.asarray(param[0], dtype=float)
        return halfspace(normal, float(param[1]))
    if kind == "outside-ball":
        return outside_ball(np.asarray(param[0], dtype=float), float(param[1]))
    if kind == "box-complement":
        return box_complement(np.asarray(param[0], dtype=float),
                              np.asarray(param[1], dtype=float))
    if kind == "nowhere":
        return nowhere(dim)
    raise ConfigError(f"unknown set kind {kind!r}")
