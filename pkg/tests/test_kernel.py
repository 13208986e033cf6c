import numpy as np
import pytest

from hypolab import catalog, kernel
from hypolab.battery import HEISENBERG_P_T025_RHO05
from hypolab.distance import DistanceOptions, distance
from hypolab.sets import halfspace, nowhere

import oracles


def test_gauss_point_estimates():
    e1 = catalog.euclidean(1)
    est = kernel.estimate_kernel(e1, 1.0, [0.0], [0.0], n_paths=200000,
                                 seed=5, n_steps=200)
    want = oracles.gauss_kernel(1.0, 0.0, 1)
    assert abs(est.value - want) <= est.three_sigma()
    # the recorded bias bound covers the measured smoothing error
    smoothed = oracles.ball_smoothed_gauss(1.0, 0.0, est.r_kde, 1)
    assert abs(smoothed - want) <= est.bias + 3e-3

    e2 = catalog.euclidean(2)
    est2 = kernel.estimate_kernel(e2, 0.5, [0, 0], [1, 0], n_paths=200000,
                                  seed=5, n_steps=200)
    want2 = oracles.gauss_kernel(0.5, 1.0, 2)
    assert abs(est2.value - want2) <= est2.three_sigma()


def test_heisenberg_kernel_oracle_consistency():
    # internal validations of the oscillator-integral oracle
    for t in (0.3, 1.0):
        assert np.isclose(oracles.heisenberg_kernel(t, 0.0, 0.0),
                          1.0 / (4.0 * t * t), rtol=1e-8)
    # frozen acceptance constant matches the quadrature
    assert np.isclose(oracles.heisenberg_kernel(0.25, 0.5, 0.0),
                      HEISENBERG_P_T025_RHO05, rtol=1e-10)


def test_heisenberg_kernel_estimate_matches_oracle():
    h = catalog.heisenberg()
    wit = distance(h, [0, 0, 0], [0.5, 0, 0], DistanceOptions(seed=5)).witness
    est = kernel.estimate_kernel(h, 0.25, [0, 0, 0], [0.5, 0, 0],
                                 n_paths=150000, seed=5, n_steps=200,
                                 r_kde=0.08, tilt_witness=wit)
    assert abs(est.value - HEISENBERG_P_T025_RHO05) <= est.three_sigma()


def test_dirichlet_images_and_coupling():
    e1 = catalog.euclidean(1)
    barrier = halfspace([1.0], 1.0)
    batch = kernel.run_kernel_paths(e1, 0.5, [0.0], 150000, 6, "img",
                                    n_steps=3200, monitor=barrier)
    full = kernel.estimate_kernel(e1, 0.5, [0.0], [0.0], batch=batch, seed=6,
                                  r_kde=0.2 * np.sqrt(0.5), with_bias=False)
    diri = kernel.estimate_kernel_dirichlet(e1, 0.5, [0.0], [0.0], barrier,
                                            batch=batch, seed=6,
                                            r_kde=0.2 * np.sqrt(0.5),
                                            with_bias=False)
    want = oracles.images_dirichlet_1d(0.5, 0.0, 0.0, 1.0)
    assert abs(diri.value - want) <= 3.0 * diri.stderr + 0.012
    assert diri.value <= full.value            # exact coupling

    # barrier far beyond reach: dirichlet equals full on the same seeds
    faraway = halfspace([1.0], 50.0)
    batch2 = kernel.run_kernel_paths(e1, 0.5, [0.0], 20000, 6, "img2",
                                     n_steps=200, monitor=faraway)
    f2 = kernel.estimate_kernel(e1, 0.5, [0.0], [0.0], batch=batch2, seed=6,
                                with_bias=False)
    d2 = kernel.estimate_kernel_dirichlet(e1, 0.5, [0.0], [0.0], faraway,
                                          batch=batch2, seed=6, with_bias=False)
    assert d2.value == f2.value


def test_through_kernel_images():
    e1 = catalog.euclidean(1)
    barrier = halfspace([1.0], 1.0)
    thru = kernel.through_kernel(e1, 0.5, [0.0], barrier, [0.0],
                                 n_paths=150000, seed=6, n_steps=3200,
                                 r_kde=0.2 * np.sqrt(0.5))
    want = oracles.images_through_1d(0.5, 0.0, 0.0, 1.0)
    assert abs(thru.value - want) <= 3.0 * thru.stderr + 0.1 * want
    assert thru.value >= 0.0

    # unreachable set: through kernel is zero
    none = nowhere(1)
    z = kernel.through_kernel(e1, 0.5, [0.0], none, [0.0], n_paths=5000,
                              seed=6, n_steps=100)
    assert z.value == 0.0


def test_reflected_kernel_combinations():
    e1 = catalog.euclidean(1)
    barrier = halfspace([1.0], 1.0)
    batch = kernel.run_kernel_paths(e1, 0.5, [0.0], 80000, 8, "refl",
                                    n_steps=1600, monitor=barrier)
    same = kernel.reflected_kernel(e1, 0.5, "-", "-", [0.0], [0.0], barrier,
                                   batch=batch, seed=8,
                                   r_kde=0.2 * np.sqrt(0.5))
    opp = kernel.reflected_kernel(e1, 0.5, "-", "+", [0.0], [0.0], barrier,
                                  batch=batch, seed=8,
                                  r_kde=0.2 * np.sqrt(0.5))
    full = kernel.estimate_kernel(e1, 0.5, [0.0], [0.0], batch=batch, seed=8,
                                  r_kde=0.2 * np.sqrt(0.5), with_bias=False)
    thru = kernel.through_kernel(e1, 0.5, [0.0], barrier, [0.0], batch=batch,
                                 seed=8, r_kde=0.2 * np.sqrt(0.5))
    assert same.value >= full.value            # p + p_D >= p
    assert np.isclose(opp.value, thru.value)   # p - p_D = through kernel
    want = oracles.images_through_1d(0.5, 0.0, 0.0, 1.0)
    assert abs(opp.value - want) <= 3.0 * opp.stderr + 0.1 * want


def test_hitting_probability_and_monotonicity():
    e1 = catalog.euclidean(1)
    barrier = halfspace([1.0], 1.0)
    batch = kernel.run_kernel_paths(e1, 1.0, [0.0], 20000, 9, "hit",
                                    n_steps=6400, monitor=barrier)
    est = kernel.hitting_probability(e1, 1.0, [0.0], barrier, batch=batch,
                                     seed=9)
    want = oracles.reflection_hitting_prob(1.0, 1.0)
    assert abs(est.value - want) <= 3.0 * est.stderr + 0.006
    assert est.value <= 1.0
    # nondecreasing in t on the same seed set (nested events)
    n_steps = 6400
    fracs = [np.mean(batch.hit_step <= int(frac * n_steps))
             - np.mean(batch.hit_step < 0) * 0.0
             for frac in (0.25, 0.5, 0.75, 1.0)]
    fracs = [np.mean((batch.hit_step >= 0) & (batch.hit_step <= int(f * n_steps)))
             for f in (0.25, 0.5, 0.75, 1.0)]
    assert np.all(np.diff(fracs) >= 0.0)


def test_reppk_restart_identity():
    e1 = catalog.euclidean(1)
    barrier = halfspace([1.0], 1.0)

    def gauss_density(t_rem, z, y):
        if t_rem <= 0.0:
            return 0.0
        return oracles.gauss_kernel(t_rem, z[0] - y[0], 1)

    restart, diff = kernel.reppk_check(e1, 0.5, [0.0], barrier, [0.0],
                                       gauss_density, n_paths=100000, seed=10,
                                       n_steps=3200, r_kde=0.2 * np.sqrt(0.5))
    assert abs(restart.value - diff.value) \
        <= 3.0 * (restart.stderr + diff.stderr)


def test_nu_symmetry_of_kernel():
    # beta = 0 models are nu-symmetric: p(t, x, y) = p(t, y, x)
    h = catalog.heisenberg()
    x, y = np.array([0.0, 0.0, 0.0]), np.array([0.4, 0.2, 0.0])
    a = kernel.estimate_kernel(h, 0.5, x, y, n_paths=120000, seed=12,
                               n_steps=200)
    b = kernel.estimate_kernel(h, 0.5, y, x, n_paths=120000, seed=13,
                               n_steps=200)
    assert abs(a.value - b.value) <= 3.0 * (a.stderr + b.stderr) + a.bias + b.bias


def test_bandwidth_consistency():
    e2 = catalog.euclidean(2)
    est1 = kernel.estimate_kernel(e2, 0.5, [0, 0], [1, 0], n_paths=50000,
                                  seed=14, n_steps=200, with_bias=False)
    est2 = kernel.estimate_kernel(e2, 0.5, [0, 0], [1, 0], n_paths=200000,
                                  seed=15, n_steps=200,
                                  r_kde=0.5 * kernel.default_r_kde(0.5),
                                  with_bias=False)
    assert abs(est1.value - est2.value) <= 3.0 * (est1.stderr + est2.stderr) + 5e-3


def test_zero_hits_one_sided_stderr():
    e1 = catalog.euclidean(1)
    est = kernel.estimate_kernel(e1, 0.01, [0.0], [50.0], n_paths=2000,
                                 seed=16, n_steps=50, with_bias=False)
    assert est.value == 0.0
    assert est.stderr > 0.0


def test_tilted_vs_plain_agree():
    e2 = catalog.euclidean(2)
    wit = distance(e2, [0, 0], [1, 0], DistanceOptions(seed=1)).witness
    plain = kernel.estimate_kernel(e2, 0.3, [0, 0], [1, 0], n_paths=150000,
                                   seed=17, n_steps=200, with_bias=False)
    tilted = kernel.estimate_kernel(e2, 0.3, [0, 0], [1, 0], n_paths=150000,
                                    seed=18, n_steps=200, tilt_witness=wit,
                                    with_bias=False)
    assert abs(plain.value - tilted.value) \
        <= 3.0 * (plain.stderr + tilted.stderr)
    assert tilted.stderr < plain.stderr        # variance reduction


def test_fit_small_time_limit_recovers_exact_forms():
    ts = np.array([0.5, 0.35, 0.25, 0.175, 0.125])
    for d_geo in (1.0, 2.0):
        lhs = ts * np.log(oracles.gauss_kernel(ts, d_geo, 2))
        coeffs = kernel.fit_small_time_limit(ts, lhs)
        assert abs(coeffs[0] - (-0.5 * d_geo ** 2)) <= 1e-10


def test_varadhan_audit_euclidean():
    e2 = catalog.euclidean(2)
    audit = kernel.varadhan_audit(e2, [0, 0], [1, 0],
                                  [0.5, 0.35, 0.25, 0.175, 0.125],
                                  n_paths=60000, seed=19,
                                  dist_opts=DistanceOptions(seed=19))
    assert abs(audit.extrapolated_limit - (-0.5)) <= 0.05
    assert audit.extra["hsu"]["in_S"]


def test_audit_requires_three_points():
    with pytest.raises(ValueError):
        kernel.fit_small_time_limit([0.5, 0.25], [-1.0, -0.8])
