"""Sub-Riemannian structures in a single global chart of R^d.

A structure is a frame of smooth vector fields X_1..X_m on an open subset of
R^d, together with a drift 1-form beta, a reference measure nu (stored as the
log of its Lebesgue density), and a domain given by a membership predicate plus
a conservative Euclidean boundary-gap map.  The cometric is

    a(x) = sum_l X_l(x) X_l(x)^T

and the generator in divergence form is L f = (1/2) div_nu(a grad f)
+ a(beta, grad f), which Hormander-form conversion rewrites as
(1/2) sum_l X_l^2 + X_0 with X_0 = sum_l c_l X_l.

All field evaluations are vectorized: points may be arrays of shape (..., d).
Catalog fields are polynomial, so brackets and jacobians are exact; callable
fields fall back to central finite differences with step H_JAC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

H_JAC = 1e-5          # central-difference step for jacobians
TOL_RANK = 1e-8       # relative singular-value threshold for bracket spans
MAX_DEPTH = 6         # default bracket depth cap


class DomainError(ValueError):
    """Point lies outside the chart domain of the structure."""


class BracketGenerationError(RuntimeError):
    """Bracket span did not reach full rank by the requested depth."""


# ---------------------------------------------------------------------------
# sparse polynomials (exact field algebra for the catalog and config models)
# ---------------------------------------------------------------------------

class Polynomial:
    """Sparse multivariate polynomial: dict {exponent tuple: coefficient}."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: Optional[dict] = None):
        self.dim = dim
        self.terms = {}
        if terms:
            for expo, coef in terms.items():
                if coef != 0.0:
                    self.terms[tuple(int(e) for e in expo)] = float(coef)

    @classmethod
    def zero(cls, dim):
        return cls(dim)

    @classmethod
    def constant(cls, dim, value):
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def variable(cls, dim, i):
        expo = [0] * dim
        expo[i] = 1
        return cls(dim, {tuple(expo): 1.0})

    @classmethod
    def from_table(cls, dim, rows):
        """Build from a coefficient table [[coeff, e_1, ..., e_d], ...]."""
        terms = {}
        for row in rows:
            coef = float(row[0])
            expo = tuple(int(e) for e in row[1:])
            if len(expo) != dim:
                raise ValueError(f"monomial row {row!r} does not match dim {dim}")
            terms[expo] = terms.get(expo, 0.0) + coef
        return cls(dim, terms)

    def to_table(self):
        return [[coef] + list(expo) for expo, coef in sorted(self.terms.items())]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for expo, coef in self.terms.items():
            mono = np.full(x.shape[:-1], coef)
            for i, e in enumerate(expo):
                if e:
                    mono = mono * x[..., i] ** e
            out = out + mono
        return out

    def derivative(self, i):
        terms = {}
        for expo, coef in self.terms.items():
            if expo[i] == 0:
                continue
            new = list(expo)
            new[i] -= 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coef * expo[i]
        return Polynomial(self.dim, terms)

    def __add__(self, other):
        if np.isscalar(other):
            other = Polynomial.constant(self.dim, other)
        terms = dict(self.terms)
        for expo, coef in other.terms.items():
            terms[expo] = terms.get(expo, 0.0) + coef
        return Polynomial(self.dim, terms)

    def __neg__(self):
        return Polynomial(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return Polynomial(self.dim, {e: c * float(other) for e, c in self.terms.items()})
        terms = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                expo = tuple(a + b for a, b in zip(e1, e2))
                terms[expo] = terms.get(expo, 0.0) + c1 * c2
        return Polynomial(self.dim, terms)

    __rmul__ = __mul__

    def is_zero(self):
        return not self.terms

    def lift(self, new_dim, offset=0):
        """Re-embed into new_dim variables, shifting variable k to k+offset."""
        terms = {}
        for expo, coef in self.terms.items():
            new = [0] * new_dim
            for i, e in enumerate(expo):
                new[i + offset] = e
            terms[tuple(new)] = coef
        return Polynomial(new_dim, terms)

    def __repr__(self):
        return f"Polynomial(dim={self.dim}, terms={self.terms})"


class _PolyProgram:
    """Batch evaluator for a fixed list of polynomials.

    Splits the terms into a constant array, one linear matrix (applied as a
    single matmul), and a short list of higher-degree monomials; this removes
    the per-polynomial Python overhead from the integrator hot loops.
    """

    def __init__(self, polys, out_shape):
        self.out_shape = tuple(out_shape)
        self.n_out = int(np.prod(out_shape))
        if len(polys) != self.n_out:
            raise ValueError("polynomial count does not match output shape")
        self.dim = polys[0].dim if polys else 0
        self.consts = np.zeros(self.n_out)
        lin = np.zeros((self.dim, self.n_out))
        self.higher = []            # (flat_index, coeff, expo)
        for k, p in enumerate(polys):
            for expo, coef in p.terms.items():
                deg = sum(expo)
                if deg == 0:
                    self.consts[k] += coef
                elif deg == 1:
                    lin[expo.index(1), k] += coef
                else:
                    self.higher.append((k, coef, expo))
        self.lin = lin if np.any(lin) else None
        self.trivial = self.lin is None and not self.higher

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        if self.trivial:
            # read-only broadcast view; hot-loop callers only contract with it
            return np.broadcast_to(self.consts.reshape(self.out_shape),
                                    batch + self.out_shape)
        out = np.empty(batch + (self.n_out,))
        out[...] = self.consts
        if self.lin is not None:
            out += x @ self.lin
        for k, coef, expo in self.higher:
            mono = coef
            for i, e in enumerate(expo):
                if e == 1:
                    mono = mono * x[..., i]
                elif e:
                    mono = mono * x[..., i] ** e
            out[..., k] += mono
        return out.reshape(batch + self.out_shape)


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------

class VectorField:
    """Smooth vector field on the chart, with an (optional) analytic jacobian.

    `comps` holds per-component Polynomials when the field is polynomial; in
    that case evaluation, jacobian and Lie brackets are exact.  Otherwise the
    field wraps callables and the jacobian defaults to central differences.
    """

    def __init__(self, dim, eval_fn=None, jacobian_fn=None, comps=None, label=""):
        self.dim = dim
        self.label = label
        self.comps = None
        if comps is not None:
            self.comps = list(comps)
            if len(self.comps) != dim:
                raise ValueError("component count must equal dim")
            self._eval = self._eval_poly
            self._jac = self._jac_poly
            self._dcomps = [[p.derivative(j) for j in range(dim)] for p in self.comps]
        else:
            if eval_fn is None:
                raise ValueError("need eval_fn or comps")
            self._eval = eval_fn
            self._jac = jacobian_fn  # may be None -> finite differences

    @classmethod
    def from_polynomials(cls, comps, label=""):
        comps = list(comps)
        return cls(comps[0].dim, comps=comps, label=label)

    @classmethod
    def constant(cls, dim, vec, label=""):
        comps = [Polynomial.constant(dim, v) for v in vec]
        return cls.from_polynomials(comps, label=label)

    def is_polynomial(self):
        return self.comps is not None

    def _eval_poly(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for i, p in enumerate(self.comps):
            out[..., i] = p(x)
        return out

    def _jac_poly(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (self.dim,))
        for i in range(self.dim):
            for j in range(self.dim):
                out[..., i, j] = self._dcomps[i][j](x)
        return out

    def __call__(self, x):
        return np.asarray(self._eval(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x):
        """d x d matrix J[i, j] = d(component i)/d(x_j); batched over leading axes."""
        if self._jac is not None:
            return np.asarray(self._jac(np.asarray(x, dtype=float)), dtype=float)
        return fd_jacobian(self, np.asarray(x, dtype=float))

    def divergence(self, x):
        jac = self.jacobian(x)
        return np.trace(jac, axis1=-2, axis2=-1)

    def combine(self, other, ca, cb, label=""):
        """Pointwise linear combination ca*self + cb*other."""
        if self.is_polynomial() and other.is_polynomial():
            comps = [pa * ca + pb * cb for pa, pb in zip(self.comps, other.comps)]
            return VectorField.from_polynomials(comps, label=label)
        return VectorField(
            self.dim,
            eval_fn=lambda x: ca * self(x) + cb * other(x),
            jacobian_fn=lambda x: ca * self.jacobian(x) + cb * other.jacobian(x),
            label=label,
        )


def fd_jacobian(fn, x, h=H_JAC):
    """Central-difference jacobian of a vectorized map R^d -> R^d."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        dx = np.zeros(d)
        dx[j] = h
        cols.append((fn(x + dx) - fn(x - dx)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def lie_bracket_field(a: VectorField, b: VectorField, label="") -> VectorField:
    """The field [a, b](x) = Db(x) a(x) - Da(x) b(x); exact for polynomials."""
    if a.is_polynomial() and b.is_polynomial():
        dim = a.dim
        comps = []
        for i in range(dim):
            acc = Polynomial.zero(dim)
            for j in range(dim):
                acc = acc + a.comps[j] * b.comps[i].derivative(j)
                acc = acc - b.comps[j] * a.comps[i].derivative(j)
            comps.append(acc)
        return VectorField.from_polynomials(comps, label=label)

    def ev(x):
        ja = a.jacobian(x)
        jb = b.jacobian(x)
        av = a(x)
        bv = b(x)
        return (np.einsum("...ij,...j->...i", jb, av)
                - np.einsum("...ij,...j->...i", ja, bv))

    return VectorField(a.dim, eval_fn=ev, label=label)


# ---------------------------------------------------------------------------
# domains, measures, structures
# ---------------------------------------------------------------------------

@dataclass
class Domain:
    """Chart domain: membership predicate plus Euclidean boundary-gap map.

    `gap` must be a conservative lower bound on the Euclidean distance to the
    chart-domain complement (it drives kill detection); np.inf means the chart
    is all of R^d.
    """
    predicate: Callable[[np.ndarray], np.ndarray]
    gap: Callable[[np.ndarray], np.ndarray]
    restricted: bool = True

    @classmethod
    def full(cls, dim):
        return cls(
            predicate=lambda x: np.ones(np.asarray(x).shape[:-1], dtype=bool),
            gap=lambda x: np.full(np.asarray(x).shape[:-1], np.inf),
            restricted=False,
        )


class SubRiemannianStructure:
    """A sub-Riemannian model (fields, drift form, measure, domain) in one chart."""

    def __init__(self, dim, fields, beta=None, nu_log=None, domain=None, name="model"):
        self.dim = int(dim)
        self.fields = list(fields)
        self.m = len(self.fields)
        if self.m < 1 or self.dim < 1:
            raise ValueError("need at least one field and one dimension")
        for f in self.fields:
            if f.dim != self.dim:
                raise ValueError("field dimension mismatch")
        self.name = name
        self.domain = domain if domain is not None else Domain.full(self.dim)

        # beta: list of d Polynomials (covector components), or None for zero.
        if beta is not None and all(p.is_zero() for p in beta):
            beta = None
        self.beta = beta

        # nu: Polynomial log-density, or None for Lebesgue.
        if nu_log is not None and nu_log.is_zero():
            nu_log = None
        self.nu_log = nu_log
        if nu_log is not None:
            self._nu_log_grad = [nu_log.derivative(j) for j in range(self.dim)]
        else:
            self._nu_log_grad = None

        # compiled fast paths when every field is polynomial
        self._frame_prog = None
        self._jac_prog = None
        if all(f.is_polynomial() for f in self.fields):
            # frame columns: entry (i, l) = component i of field l
            cols = [self.fields[l].comps[i]
                    for i in range(self.dim) for l in range(self.m)]
            self._frame_prog = _PolyProgram(cols, (self.dim, self.m))
            jacs = [self.fields[l].comps[i].derivative(j)
                    for l in range(self.m)
                    for i in range(self.dim) for j in range(self.dim)]
            self._jac_prog = _PolyProgram(jacs, (self.m, self.dim, self.dim))

    # -- measure -----------------------------------------------------------
    @property
    def lebesgue(self):
        return self.nu_log is None

    def nu_log_density(self, x):
        x = np.asarray(x, dtype=float)
        if self.nu_log is None:
            return np.zeros(x.shape[:-1])
        return self.nu_log(x)

    def nu_density(self, x):
        return np.exp(self.nu_log_density(x))

    def nu_log_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self._nu_log_grad is None:
            return np.zeros(x.shape)
        out = np.empty(x.shape)
        for j, p in enumerate(self._nu_log_grad):
            out[..., j] = p(x)
        return out

    def beta_covector(self, x):
        x = np.asarray(x, dtype=float)
        if self.beta is None:
            return np.zeros(x.shape)
        out = np.empty(x.shape)
        for j, p in enumerate(self.beta):
            out[..., j] = p(x)
        return out

    # -- frame -------------------------------------------------------------
    def frame(self, x):
        """Matrix of field columns, shape (..., d, m)."""
        x = np.asarray(x, dtype=float)
        if self._frame_prog is not None:
            return self._frame_prog(x)
        return np.stack([f(x) for f in self.fields], axis=-1)

    def frame_jacobians(self, x):
        """Stacked field jacobians, shape (..., m, d, d)."""
        x = np.asarray(x, dtype=float)
        if self._jac_prog is not None:
            return self._jac_prog(x)
        return np.stack([f.jacobian(x) for f in self.fields], axis=-3)

    # -- domain ------------------------------------------------------------
    def in_domain(self, x):
        return np.asarray(self.domain.predicate(np.asarray(x, dtype=float)))

    def boundary_gap(self, x):
        return np.asarray(self.domain.gap(np.asarray(x, dtype=float)), dtype=float)

    def require_in_domain(self, x):
        ok = self.in_domain(x)
        if not np.all(ok):
            raise DomainError(f"point outside the domain of model '{self.name}'")

    def __repr__(self):
        return f"SubRiemannianStructure({self.name!r}, d={self.dim}, m={self.m})"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def cometric(s: SubRiemannianStructure, x):
    """a(x) = sum_l X_l(x) X_l(x)^T, a symmetric PSD (d, d) matrix."""
    s.require_in_domain(x)
    fr = s.frame(x)
    return np.einsum("...im,...jm->...ij", fr, fr)


def lie_bracket(s: SubRiemannianStructure, i, j, x):
    """[X_i, X_j](x) for frame indices i, j."""
    s.require_in_domain(x)
    br = lie_bracket_field(s.fields[i], s.fields[j])
    return br(np.asarray(x, dtype=float))


@dataclass
class BracketGrowth:
    """Homogeneous dimension N(x) and the rank growth per bracket length."""
    N: int
    growth: tuple
    ranks: tuple


def homogeneous_dimension(s: SubRiemannianStructure, x, max_depth=MAX_DEPTH,
                          tol_rank=TOL_RANK) -> BracketGrowth:
    """Rank growth of iterated bracket spans at x.

    N = sum_k k * N_k where N_1 + ... + N_k is the rank of the span of all
    brackets of length <= k.  Rank is counted by singular values above
    tol_rank relative to the largest.  Raises BracketGenerationError if the
    span is still deficient at max_depth.
    """
    s.require_in_domain(x)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    x = np.asarray(x, dtype=float)
    d = s.dim

    def span_rank(vectors):
        mat = np.stack(vectors, axis=0)
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv.size == 0 or sv[0] == 0.0:
            return 0
        return int(np.sum(sv > tol_rank * sv[0]))

    level_fields = list(s.fields)       # brackets of current length
    all_vectors = [f(x) for f in level_fields]
    ranks = [span_rank(all_vectors)]
    growth = [ranks[0]]
    depth = 1
    while ranks[-1] < d and depth < max_depth:
        depth += 1
        # left-normed brackets [X_i, B] span each new bracket generation
        new_level = [lie_bracket_field(base, prev)
                     for prev in level_fields for base in s.fields]
        all_vectors.extend(f(x) for f in new_level)
        ranks.append(span_rank(all_vectors))
        growth.append(ranks[-1] - ranks[-2])
        level_fields = new_level
    if ranks[-1] < d:
        raise BracketGenerationError(
            f"not bracket-generating at depth {max_depth} (rank {ranks[-1]} < {d}) "
            f"at x={x.tolist()} in model '{s.name}'")
    N = int(sum((k + 1) * nk for k, nk in enumerate(growth)))
    return BracketGrowth(N=N, growth=tuple(growth), ranks=tuple(ranks))


def max_bracket_step(s: SubRiemannianStructure, x, max_depth=MAX_DEPTH):
    """Largest bracket length needed to reach full rank at x."""
    return len(homogeneous_dimension(s, x, max_depth=max_depth).growth)


@dataclass
class DriftDecomposition:
    """Hormander-form drift X_0 = sum_l c_l X_l of the divergence-form operator."""
    structure: SubRiemannianStructure
    coefficients: Callable[[np.ndarray], np.ndarray]   # x -> (..., m)
    drift_vector: Callable[[np.ndarray], np.ndarray]   # x -> (..., d)
    is_zero: bool = False


def hormander_drift(s: SubRiemannianStructure) -> DriftDecomposition:
    """Convert the divergence-form generator to Hormander form.

    c_l(x) = (1/2)(trace DX_l(x) + <grad log nu(x), X_l(x)>) + <beta(x), X_l(x)>.
    """
    def coefficients(x):
        x = np.asarray(x, dtype=float)
        fr = s.frame(x)                      # (..., d, m)
        jac = s.frame_jacobians(x)           # (..., m, d, d)
        div = np.trace(jac, axis1=-2, axis2=-1)          # (..., m)
        glog = s.nu_log_gradient(x)                      # (..., d)
        c = 0.5 * (div + np.einsum("...i,...im->...m", glog, fr))
        if s.beta is not None:
            bv = s.beta_covector(x)
            c = c + np.einsum("...i,...im->...m", bv, fr)
        return c

    def drift_vector(x):
        x = np.asarray(x, dtype=float)
        fr = s.frame(x)
        return np.einsum("...im,...m->...i", fr, coefficients(x))

    # cheap zero detection lets the SDE stepper skip drift work entirely
    rng = np.random.default_rng(7)
    probes = rng.uniform(-1.0, 1.0, size=(8, s.dim))
    zero = bool(np.all(np.abs(coefficients(probes)) < 1e-13))
    return DriftDecomposition(s, coefficients, drift_vector, is_zero=zero)


def sector_bound(s: SubRiemannianStructure, sample_box, n_samples=512):
    """Grid maximum of a(beta, beta)(x) = sum_l <beta(x), X_l(x)>^2 over the box.

    `sample_box` is a (lo, hi) pair of length-d arrays.  Returns a lower
    estimate of sup_M a(beta, beta); exact 0 when beta vanishes.
    """
    if s.beta is None:
        return 0.0
    lo, hi = (np.asarray(v, dtype=float) for v in sample_box)
    if n_samples < 1:
        raise ValueError("need at least one sample")
    per_axis = max(2, int(np.ceil(n_samples ** (1.0 / s.dim))))
    axes = [np.linspace(lo[j], hi[j], per_axis) for j in range(s.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, s.dim)
    inside = s.in_domain(grid)
    grid = grid[inside]
    if grid.shape[0] == 0:
        raise ValueError("sample box does not intersect the domain")
    fr = s.frame(grid)
    bv = s.beta_covector(grid)
    pair = np.einsum("...i,...im->...m", bv, fr)
    return float(np.max(np.sum(pair ** 2, axis=-1)))


def augment_with_time(s: SubRiemannianStructure) -> SubRiemannianStructure:
    """Append an auxiliary coordinate tau with unit field d/dtau.

    The lifted cometric is a(x) (+) 1, beta is lifted with zero tau-component,
    and nu becomes nu (x) Lebesgue; the domain ignores tau.
    """
    d_new = s.dim + 1

    def lift_field(f: VectorField) -> VectorField:
        if f.is_polynomial():
            comps = [p.lift(d_new) for p in f.comps]
            comps.append(Polynomial.zero(d_new))
            return VectorField.from_polynomials(comps, label=f.label)
        return VectorField(
            d_new,
            eval_fn=lambda x: np.concatenate(
                [f(x[..., :-1]), np.zeros(x.shape[:-1] + (1,))], axis=-1),
            jacobian_fn=lambda x: _pad_jacobian(f.jacobian(x[..., :-1])),
            label=f.label,
        )

    fields = [lift_field(f) for f in s.fields]
    tau_dir = np.zeros(d_new)
    tau_dir[-1] = 1.0
    fields.append(VectorField.constant(d_new, tau_dir, label="d/dtau"))

    beta = None
    if s.beta is not None:
        beta = [p.lift(d_new) for p in s.beta] + [Polynomial.zero(d_new)]
    nu_log = s.nu_log.lift(d_new) if s.nu_log is not None else None

    base = s.domain
    domain = Domain(
        predicate=lambda x: base.predicate(np.asarray(x, dtype=float)[..., :-1]),
        gap=lambda x: base.gap(np.asarray(x, dtype=float)[..., :-1]),
        restricted=base.restricted,
    )
    return SubRiemannianStructure(d_new, fields, beta=beta, nu_log=nu_log,
                                  domain=domain, name=s.name + "+time")


def _pad_jacobian(jac):
    shape = jac.shape[:-2]
    d = jac.shape[-1]
    out = np.zeros(shape + (d + 1, d + 1))
    out[..., :d, :d] = jac
    return out
