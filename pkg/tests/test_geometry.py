import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypolab import catalog
from hypolab.geometry import (BracketGenerationError, DomainError, Polynomial,
                              SubRiemannianStructure, VectorField,
                              augment_with_time, cometric, fd_jacobian,
                              homogeneous_dimension, hormander_drift,
                              lie_bracket, sector_bound)

import oracles


def test_cometric_euclidean_identity():
    e2 = catalog.euclidean(2)
    assert np.allclose(cometric(e2, [0.3, -1.2]), np.eye(2))


def test_cometric_heisenberg_origin():
    h = catalog.heisenberg()
    assert np.allclose(cometric(h, [0, 0, 0]), np.diag([1.0, 1.0, 0.0]))


def test_cometric_grushin():
    g = catalog.grushin()
    assert np.allclose(cometric(g, [2.0, 0.0]), np.diag([1.0, 4.0]))


def test_cometric_psd_and_rank_matches_growth():
    rng = np.random.default_rng(3)
    for s in (catalog.heisenberg(), catalog.grushin(), catalog.martinet()):
        for _ in range(5):
            x = rng.uniform(-1.5, 1.5, s.dim)
            a = cometric(s, x)
            assert np.allclose(a, a.T)
            ev = np.linalg.eigvalsh(a)
            assert ev.min() >= -1e-12
            n1 = homogeneous_dimension(s, x).growth[0]
            assert np.sum(ev > 1e-10 * max(ev.max(), 1e-30)) == n1


def test_domain_error_outside():
    disc = catalog.disc(1.0)
    with pytest.raises(DomainError):
        cometric(disc, [2.0, 0.0])


def test_bracket_euclidean_zero():
    e2 = catalog.euclidean(2)
    assert np.allclose(lie_bracket(e2, 0, 1, [0.4, 0.7]), 0.0)


def test_bracket_vs_sympy_oracle():
    import sympy as sp

    x, y, z = sp.symbols("x y z")
    h = catalog.heisenberg()
    pt = [0.37, -0.56, 0.12]
    want = oracles.sympy_bracket([1, 0, -y / 2], [0, 1, x / 2], [x, y, z], pt)
    assert np.allclose(lie_bracket(h, 0, 1, pt), want)
    assert np.allclose(want, [0, 0, 1])

    g = catalog.grushin()
    xg, yg = sp.symbols("x y")
    want_g = oracles.sympy_bracket([1, 0], [0, xg], [xg, yg], [1.5, 2.0])
    assert np.allclose(lie_bracket(g, 0, 1, [1.5, 2.0]), want_g)
    assert np.allclose(want_g, [0, 1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1), st.integers(0, 1),
       st.tuples(*[st.floats(-2, 2) for _ in range(3)]))
def test_bracket_antisymmetry(i, j, pt):
    h = catalog.heisenberg()
    b_ij = lie_bracket(h, i, j, list(pt))
    b_ji = lie_bracket(h, j, i, list(pt))
    assert np.allclose(b_ij, -b_ji, rtol=1e-12, atol=1e-12)


def test_homogeneous_dimension_catalog():
    assert homogeneous_dimension(catalog.euclidean(2), [0, 0]).N == 2
    gh = homogeneous_dimension(catalog.heisenberg(), [0.3, 0.1, -2.0])
    assert gh.N == 4 and gh.growth == (2, 1)
    g0 = homogeneous_dimension(catalog.grushin(), [0.0, 0.0])
    assert g0.N == 3 and g0.growth == (1, 1)
    g1 = homogeneous_dimension(catalog.grushin(), [1.0, 0.0])
    assert g1.N == 2 and g1.growth == (2,)
    m0 = homogeneous_dimension(catalog.martinet(), [0.0, 0.0, 0.0])
    assert m0.N == 5 and m0.growth == (2, 0, 1)


def test_homogeneous_dimension_not_generating():
    one = Polynomial.constant(2, 1.0)
    zero = Polynomial.zero(2)
    f = VectorField.from_polynomials([one, zero])
    s = SubRiemannianStructure(2, [f], name="degenerate")
    with pytest.raises(BracketGenerationError):
        homogeneous_dimension(s, [0.0, 0.0], max_depth=4)


def test_homogeneous_dimension_invariance_under_recombination():
    h = catalog.heisenberg()
    theta = 0.83
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    mixed = [h.fields[0].combine(h.fields[1], rot[0, 0], rot[0, 1]),
             h.fields[0].combine(h.fields[1], rot[1, 0], rot[1, 1])]
    s2 = SubRiemannianStructure(3, mixed, name="heis-rot")
    for pt in ([0, 0, 0], [0.5, -0.3, 0.2]):
        a = homogeneous_dimension(h, pt)
        b = homogeneous_dimension(s2, pt)
        assert a.N == b.N and a.growth == b.growth
    # permutation
    s3 = SubRiemannianStructure(3, [h.fields[1], h.fields[0]], name="heis-swap")
    assert homogeneous_dimension(s3, [0.1, 0.2, 0.3]).N == 4


def test_fd_jacobian_matches_analytic():
    h = catalog.heisenberg()
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (6, 3))
    for f in h.fields:
        assert np.allclose(fd_jacobian(f, pts), f.jacobian(pts), atol=1e-8)


def test_hormander_drift_zero_cases():
    for s in (catalog.euclidean(2), catalog.heisenberg()):
        dd = hormander_drift(s)
        assert dd.is_zero
        assert np.allclose(dd.drift_vector(np.zeros(s.dim)), 0.0)


def test_hormander_drift_ou_case():
    # R^1, X1 = d/dx, log-density -x^2/2: X0 = -(x/2) d/dx
    one = Polynomial.constant(1, 1.0)
    f = VectorField.from_polynomials([one])
    nu_log = Polynomial(1, {(2,): -0.5})
    s = SubRiemannianStructure(1, [f], nu_log=nu_log, name="ou")
    dd = hormander_drift(s)
    xs = np.array([[0.0], [1.0], [-2.0], [3.5]])
    assert np.allclose(dd.drift_vector(xs), -0.5 * xs)


def _generator_two_ways(s, f, grad_f, lap_terms, x):
    """(1/2) sum X_l^2 f + X_0 f vs (1/2) div_nu(a grad f) + a(beta, grad f)."""
    h = 1e-5
    x = np.asarray(x, dtype=float)
    dd = hormander_drift(s)

    def xl_f(pts, l):
        fr = s.frame(pts)
        step = h * fr[..., :, l]
        return (f(pts + step) - f(pts - step)) / (2.0 * h)

    lhs = 0.0
    for l in range(s.m):
        fr = s.frame(x[None])
        step = h * fr[0, :, l]
        lhs += 0.5 * (xl_f(x[None] + step, l)[0] - xl_f(x[None] - step, l)[0]) / (2.0 * h)
    lhs += float(np.dot(dd.drift_vector(x[None])[0], grad_f(x)))

    def a_grad_f(pts):
        fr = s.frame(pts)
        gf = np.stack([grad_f(p) for p in pts])
        return np.einsum("bim,bm->bi",
                         fr, np.einsum("bim,bi->bm", fr, gf))

    div = 0.0
    for j in range(s.dim):
        dx = np.zeros(s.dim)
        dx[j] = h
        div += (a_grad_f((x + dx)[None])[0, j] - a_grad_f((x - dx)[None])[0, j]) / (2.0 * h)
    glog = s.nu_log_gradient(x[None])[0]
    rhs = 0.5 * (div + float(np.dot(glog, a_grad_f(x[None])[0])))
    if s.beta is not None:
        bv = s.beta_covector(x[None])[0]
        rhs += float(np.dot(bv, a_grad_f(x[None])[0]))
    return lhs, rhs


def test_generator_consistency_random_quadratics():
    # 20 random quadratic test functions, random points, both operator forms
    rng = np.random.default_rng(12)
    one = Polynomial.constant(2, 1.0)
    zero = Polynomial.zero(2)
    xvar = Polynomial.variable(2, 0)
    beta = [Polynomial.constant(2, 0.3), Polynomial.zero(2)]
    nu_log = Polynomial(2, {(2, 0): -0.25, (0, 2): -0.1})
    s = SubRiemannianStructure(
        2, [VectorField.from_polynomials([one, zero]),
            VectorField.from_polynomials([zero, xvar])],
        beta=beta, nu_log=nu_log, name="grushin-weighted")
    for _ in range(20):
        Q = rng.standard_normal((2, 2))
        Q = 0.5 * (Q + Q.T)
        b = rng.standard_normal(2)

        def f(pts, Q=Q, b=b):
            pts = np.atleast_2d(pts)
            return np.einsum("bi,ij,bj->b", pts, Q, pts) + pts @ b

        def grad_f(p, Q=Q, b=b):
            return 2.0 * Q @ p + b

        x = rng.uniform(-1.0, 1.0, 2)
        lhs, rhs = _generator_two_ways(s, f, grad_f, None, x)
        assert abs(lhs - rhs) <= 1e-6 * (1.0 + abs(rhs))


def test_sector_bound_cases():
    e2 = catalog.euclidean(2)
    assert sector_bound(e2, ([-1, -1], [1, 1])) == 0.0
    beta_dx = [Polynomial.constant(2, 1.0), Polynomial.zero(2)]
    s = SubRiemannianStructure(2, e2.fields, beta=beta_dx, name="e2+dx")
    assert np.isclose(sector_bound(s, ([-1, -1], [1, 1]), 100), 1.0)
    g = catalog.grushin()
    beta_dy = [Polynomial.zero(2), Polynomial.constant(2, 1.0)]
    gs = SubRiemannianStructure(2, g.fields, beta=beta_dy, name="grushin+dy")
    assert np.isclose(sector_bound(gs, ([-2, -2], [2, 2]), 441), 4.0)


def test_augment_with_time():
    e1 = catalog.euclidean(1)
    lifted = augment_with_time(e1)
    assert lifted.dim == 2 and lifted.m == 2
    assert np.allclose(cometric(lifted, [0.3, 0.9]), np.eye(2))
    # sector bound unchanged by the lift
    beta = [Polynomial.constant(1, 0.7)]
    s = SubRiemannianStructure(1, e1.fields, beta=beta, name="e1+beta")
    ls = augment_with_time(s)
    box1 = ([-1.0], [1.0])
    box2 = ([-1.0, -1.0], [1.0, 1.0])
    assert np.isclose(sector_bound(s, box1), sector_bound(ls, box2))
    # N grows by exactly one per lift
    h = catalog.heisenberg()
    n0 = homogeneous_dimension(h, [0, 0, 0]).N
    n1 = homogeneous_dimension(augment_with_time(h), [0, 0, 0, 0]).N
    n2 = homogeneous_dimension(augment_with_time(augment_with_time(h)),
                               [0, 0, 0, 0, 0]).N
    assert (n1, n2) == (n0 + 1, n0 + 2)


def test_lifted_distance_pythagoras():
    from hypolab.distance import DistanceOptions, distance

    lifted = augment_with_time(catalog.euclidean(1))
    res = distance(lifted, [0.0, 0.0], [1.0, 1.0], DistanceOptions(seed=4))
    assert abs(res.value - np.sqrt(2.0)) <= 0.01


def test_polynomial_table_roundtrip():
    p = Polynomial.from_table(3, [[1.5, 2, 0, 1], [-0.5, 0, 0, 0]])
    q = Polynomial.from_table(3, p.to_table())
    pts = np.random.default_rng(1).uniform(-1, 1, (10, 3))
    assert np.allclose(p(pts), q(pts))
