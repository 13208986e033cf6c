"""Independent oracles used to freeze expected values in the tests.

Everything here is derived without touching the estimators under test:
closed-form Gaussian facts, eigenfunction series, an oscillator-integral
formula for the step-2 group kernel (validated internally by total mass,
the value at the origin, and the second moment of the area coordinate),
symbolic differentiation for brackets, and brute-force searches over
explicit control families.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

SQRT2PI = np.sqrt(2.0 * np.pi)


# -- Gaussian facts ----------------------------------------------------------

def gauss_kernel(t, dist, dim):
    """Heat kernel of (1/2) Laplacian on R^dim at separation dist."""
    return np.exp(-dist ** 2 / (2.0 * t)) / (2.0 * np.pi * t) ** (dim / 2.0)


def reflection_hitting_prob(t, barrier):
    """P_0(max_{s<=t} W_s >= barrier) = 2 (1 - Phi(barrier / sqrt(t)))."""
    return 2.0 * (1.0 - norm.cdf(barrier / np.sqrt(t)))


def images_dirichlet_1d(t, x, y, barrier):
    """Dirichlet kernel on (-inf, barrier) by the method of images."""
    return gauss_kernel(t, y - x, 1) - gauss_kernel(t, (2 * barrier - x) - y, 1)


def images_through_1d(t, x, y, barrier):
    return gauss_kernel(t, (2 * barrier - x) - y, 1)


def interval_survival(t, x0=0.0, lo=-1.0, hi=1.0, terms=60):
    """Survival probability of (1/2)-Laplacian BM in (lo, hi), eigenseries."""
    L = hi - lo
    u = x0 - lo
    total = 0.0
    for k in range(1, terms + 1):
        ck = 2.0 * (1.0 - np.cos(k * np.pi)) / (k * np.pi)
        lam = 0.5 * (k * np.pi / L) ** 2
        total += ck * np.exp(-lam * t) * np.sin(k * np.pi * u / L)
    return total


def ball_smoothed_gauss(t, center_dist, r, dim, n=200001):
    """Average of the R^dim Gaussian kernel over a ball of radius r."""
    if dim == 1:
        xs = np.linspace(center_dist - r, center_dist + r, n)
        return float(np.trapz(gauss_kernel(t, xs, 1), xs) / (2 * r))
    raise NotImplementedError


# -- step-2 group kernel (oscillator integral) -------------------------------

def heisenberg_kernel(t, rho, z):
    """Lebesgue density of the diffusion at (x, y, z), rho^2 = x^2 + y^2.

    Derived by Fourier transform in the vertical coordinate and the Mehler
    kernel of the resulting quadratic oscillator.  Internal consistency:
    p(t, 0, 0) = 1/(4 t^2), total mass 1, Var(z_t) = t^2 / 4.
    """
    def f(lam):
        th = lam * t / 2.0
        if th < 1e-8:
            ratio = 2.0 / t
            expo = -rho ** 2 / (2.0 * t)
        else:
            ratio = lam / np.sinh(th)
            expo = -(lam * rho ** 2 / 4.0) / np.tanh(th)
        return np.cos(lam * z) * ratio * np.exp(expo)

    val, _ = quad(f, 0.0, 80.0 / max(t, 0.04), limit=400)
    return val / (4.0 * np.pi ** 2)


def heisenberg_vertical_distance(z):
    """d(0, (0, 0, z)) = sqrt(4 pi |z|) via the minimal lifted loop."""
    return np.sqrt(4.0 * np.pi * np.abs(z))


def vertical_distance_bruteforce(z, radii=None, loops=(1, 2, 3)):
    """Grid search over lifted circles: n loops of radius R enclosing area z."""
    best = np.inf
    radii = radii if radii is not None else np.linspace(0.02, 1.5, 300)
    for n in loops:
        for R in radii:
            if abs(n * np.pi * R ** 2 - abs(z)) < 2e-3:
                best = min(best, 2.0 * np.pi * R * n)
    return best


# -- symbolic brackets --------------------------------------------------------

def sympy_bracket(field_exprs_a, field_exprs_b, variables, point):
    """[A, B](point) by symbolic differentiation (independent of the library)."""
    import sympy as sp

    a = sp.Matrix(field_exprs_a)
    b = sp.Matrix(field_exprs_b)
    xs = sp.Matrix(variables)
    jac_b = b.jacobian(xs)
    jac_a = a.jacobian(xs)
    br = jac_b * a - jac_a * b
    subs = dict(zip(variables, point))
    return np.array([float(br[i].subs(subs)) for i in range(len(variables))])


# -- exact bridge sampling ----------------------------------------------------

def exact_gaussian_bridge_marginal(rng, t, x, y, s, n):
    """Samples of the scalar Brownian bridge from x to y at unit time s."""
    mean = x + s * (y - x)
    sd = np.sqrt(t * s * (1.0 - s))
    return mean + sd * rng.standard_normal(n)


def exact_bridge_tube_fraction(rng, t, rho, terminal_tol, n=30000, ngrid=800):
    """Exact 2-d bridge sup-deviation law with ball-conditioned endpoints."""
    dt = 1.0 / ngrid
    dW = rng.standard_normal((n, ngrid, 2)) * np.sqrt(dt)
    W = np.cumsum(dW, axis=1)
    s = np.linspace(dt, 1.0, ngrid)[None, :, None]
    bridge = W - s * W[:, -1:, :]
    u = rng.random(n)
    ang = rng.random(n) * 2.0 * np.pi
    r = terminal_tol * np.sqrt(u)
    off = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    path = np.sqrt(t) * bridge + s * off[:, None, :]
    dev = np.linalg.norm(path, axis=2).max(axis=1)
    return float(np.mean(dev < rho))


# -- reflected-path energy for the probe problem ------------------------------

def reflected_tube_energy(wall=0.5, x=(0.0, 0.0), y=(1.0, 0.0), probe=0.0):
    """Minimal energy of unit-time paths from x to y touching |z2| = wall+probe."""
    # reflect y across the touched wall; straight two-segment path
    mirror = (y[0], 2.0 * (wall + probe) - y[1])
    length = np.hypot(mirror[0] - x[0], mirror[1] - x[1])
    return length ** 2
