"""Built-in model catalog, addressed by name strings.

Names: "euclidean:<d>", "heisenberg", "grushin", "martinet",
"punctured-plane", "slab:<h>", "disc:<r>".  All catalog models use Lebesgue
measure and zero drift form; user models with general polynomial data are
assembled from harness configs (see config.structure_from_model_spec).
"""

from __future__ import annotations

import numpy as np

from .geometry import Domain, Polynomial, SubRiemannianStructure, VectorField


def euclidean(d):
    fields = [VectorField.constant(d, row, label=f"e{i+1}")
              for i, row in enumerate(np.eye(d))]
    return SubRiemannianStructure(d, fields, name=f"euclidean:{d}")


def heisenberg():
    """X1 = dx - (y/2) dz, X2 = dy + (x/2) dz on R^3."""
    x = Polynomial.variable(3, 0)
    y = Polynomial.variable(3, 1)
    one = Polynomial.constant(3, 1.0)
    zero = Polynomial.zero(3)
    f1 = VectorField.from_polynomials([one, zero, y * (-0.5)], label="X1")
    f2 = VectorField.from_polynomials([zero, one, x * 0.5], label="X2")
    return SubRiemannianStructure(3, [f1, f2], name="heisenberg")


def grushin():
    """X1 = dx, X2 = x dy on R^2; rank drops on the line x = 0."""
    x = Polynomial.variable(2, 0)
    one = Polynomial.constant(2, 1.0)
    zero = Polynomial.zero(2)
    f1 = VectorField.from_polynomials([one, zero], label="X1")
    f2 = VectorField.from_polynomials([zero, x], label="X2")
    return SubRiemannianStructure(2, [f1, f2], name="grushin")


def martinet():
    """X1 = dx, X2 = dy + x^2 dz on R^3; step 3 on the plane x = 0."""
    x = Polynomial.variable(3, 0)
    one = Polynomial.constant(3, 1.0)
    zero = Polynomial.zero(3)
    f1 = VectorField.from_polynomials([one, zero, zero], label="X1")
    f2 = VectorField.from_polynomials([zero, one, x * x], label="X2")
    return SubRiemannianStructure(3, [f1, f2], name="martinet")


def punctured_plane():
    """Euclidean R^2 minus the origin; boundary gap |x|."""
    s = euclidean(2)
    domain = Domain(
        predicate=lambda x: np.linalg.norm(x, axis=-1) > 0.0,
        gap=lambda x: np.linalg.norm(x, axis=-1),
    )
    return SubRiemannianStructure(2, s.fields, domain=domain, name="punctured-plane")


def slab(h):
    """Euclidean R^2 restricted to {|x_2| < h}."""
    h = float(h)
    s = euclidean(2)
    domain = Domain(
        predicate=lambda x: np.abs(x[..., 1]) < h,
        gap=lambda x: h - np.abs(x[..., 1]),
    )
    return SubRiemannianStructure(2, s.fields, domain=domain, name=f"slab:{h:g}")


def disc(r):
    """Euclidean R^2 restricted to the open disc of radius r."""
    r = float(r)
    s = euclidean(2)
    domain = Domain(
        predicate=lambda x: np.linalg.norm(x, axis=-1) < r,
        gap=lambda x: r - np.linalg.norm(x, axis=-1),
    )
    return SubRiemannianStructure(2, s.fields, domain=domain, name=f"disc:{r:g}")


_FIXED = {
    "heisenberg": heisenberg,
    "grushin": grushin,
    "martinet": martinet,
    "punctured-plane": punctured_plane,
}

_PARAMETRIC = {
    "euclidean": lambda arg: euclidean(int(arg)),
    "slab": lambda arg: slab(float(arg)),
    "disc": lambda arg: disc(float(arg)),
}


def get_model(name: str) -> SubRiemannianStructure:
    """Look up a catalog model by name string (e.g. 'euclidean:2', 'slab:1')."""
    name = name.strip()
    if name in _FIXED:
        return _FIXED[name]()
    if ":" in name:
        head, arg = name.split(":", 1)
        if head in _PARAMETRIC:
            return _PARAMETRIC[head](arg)
    raise KeyError(f"unknown model name {name!r}")


def catalog_names():
    return sorted(_FIXED) + [k + ":<param>" for k in sorted(_PARAMETRIC)]
