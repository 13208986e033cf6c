"""hypolab: numerical experiments on diffusions over sub-Riemannian models.

The package computes Carnot-Caratheodory distances (primal witnesses and dual
certificates), simulates hypoelliptic diffusions with killing, estimates heat
kernels, through-kernels and hitting probabilities, samples small-time
diffusion bridges, and audits the Gaussian-type bounds and small-time limits
that govern them.
"""

from . import bridge, catalog, config, geometry, harness, kernel, sde, sets, volume
from .catalog import get_model
from .controls import ControlPath, energy, integrate_control, reparametrize_constant_speed
from .distance import (DistanceOptions, DistanceResult, distance,
                       distance_through_set, distance_to_set, min_energy_outside)
from .dual import DualCertificate, dual_certificate_check, linear_certificate
from .geometry import (BracketGrowth, Domain, DriftDecomposition, Polynomial,
                       SubRiemannianStructure, VectorField, augment_with_time,
                       cometric, homogeneous_dimension, hormander_drift,
                       lie_bracket, sector_bound)
from .infinity import distance_to_infinity, hsu_condition
from .kernel import (BoundAudit, KernelEstimate, estimate_kernel,
                     estimate_kernel_dirichlet, hitting_bound_audit,
                     hitting_probability, reflected_kernel, through_bound_audit,
                     through_kernel, varadhan_audit)
from .sde import SamplePath, hitting_time_samples, run_paths, simulate
from .shooting import shoot_refine
from .volume import ball_volume, chart_exponent, dimension_estimate, doubling_ratio

__version__ = "0.1.0"
