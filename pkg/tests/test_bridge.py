import numpy as np
import pytest
from scipy.stats import kstest

from hypolab import bridge, catalog
from hypolab.distance import DistanceOptions, distance

import oracles


def test_flat_bridge_midpoint_law():
    e1 = catalog.euclidean(1)
    ens = bridge.sample_bridge_rejection(e1, 0.5, [0.0], [0.0], n_target=2500,
                                         seed=21)
    mid = ens.marginal(0.5)[:, 0]
    n = mid.size
    assert abs(mid.mean()) <= 3.0 * mid.std() / np.sqrt(n)
    want = 0.5 / 4.0
    assert abs(mid.var() / want - 1.0) <= 0.10


def test_flat_bridge_ks_against_exact_sampler():
    e1 = catalog.euclidean(1)
    ens = bridge.sample_bridge_rejection(e1, 0.5, [0.0], [0.0], n_target=2000,
                                         seed=22)
    mid = ens.marginal(0.5)[:, 0]
    sd = np.sqrt(0.5 * 0.25)
    stat = kstest(mid, lambda v: 0.5 * (1 + np.vectorize(np.math.erf)(v / (sd * np.sqrt(2)))))
    assert stat.statistic <= 0.05


def test_terminal_contract_hard():
    h = catalog.heisenberg()
    dres = distance(h, [0, 0, 0], [1, 0, 0], DistanceOptions(seed=1))
    ens = bridge.sample_bridge_tilted(h, 0.2, [0, 0, 0], [1, 0, 0],
                                      n_target=300, seed=23,
                                      witness=dres.witness)
    gaps = np.linalg.norm(ens.paths[:, -1, :] - np.array([1.0, 0, 0]), axis=1)
    assert np.all(gaps <= ens.terminal_tol)
    assert np.allclose(ens.paths[:, 0, :], 0.0)


def test_time_rescaling_grid():
    e2 = catalog.euclidean(2)
    ens = bridge.sample_bridge_rejection(e2, 0.3, [0, 0], [0.2, 0.0],
                                         n_target=200, seed=24)
    assert np.isclose(ens.s_grid[0], 0.0) and np.isclose(ens.s_grid[-1], 1.0)
    assert np.allclose(np.diff(ens.s_grid), ens.s_grid[1] - ens.s_grid[0])


def test_tilted_reduces_to_rejection_for_zero_witness():
    from hypolab.controls import ControlPath

    e1 = catalog.euclidean(1)
    zero = ControlPath(np.zeros((10, 1)))
    a = bridge.sample_bridge_rejection(e1, 0.4, [0.0], [0.0], n_target=150,
                                       seed=25)
    b = bridge.sample_bridge_tilted(e1, 0.4, [0.0], [0.0], n_target=150,
                                    seed=25, witness=zero)
    assert np.array_equal(a.paths, b.paths)
    assert a.acceptance_rate == b.acceptance_rate


def test_tilted_acceptance_rate_beats_plain():
    e2 = catalog.euclidean(2)
    dres = distance(e2, [0, 0], [2.0, 0.0], DistanceOptions(seed=2))
    tilted = bridge.sample_bridge_tilted(e2, 0.2, [0, 0], [2, 0], n_target=120,
                                         seed=26, witness=dres.witness)
    with pytest.raises(bridge.BridgeInfeasibleError):
        bridge.sample_bridge_rejection(e2, 0.2, [0, 0], [2, 0], n_target=120,
                                       seed=26, max_proposals=250000)
    assert tilted.acceptance_rate >= 1e-3


def test_tilted_statistics_match_rejection():
    # same conditional law: accepted-path midpoints agree across samplers
    e1 = catalog.euclidean(1)
    dres = distance(e1, [0.0], [0.7], DistanceOptions(seed=3))
    a = bridge.sample_bridge_rejection(e1, 0.4, [0.0], [0.7], n_target=1500,
                                       seed=27)
    b = bridge.sample_bridge_tilted(e1, 0.4, [0.0], [0.7], n_target=1500,
                                    seed=28, witness=dres.witness)
    ma, mb = a.marginal(0.5)[:, 0], b.marginal(0.5)[:, 0]
    se = np.sqrt(ma.var() / ma.size + mb.var() / mb.size)
    assert abs(ma.mean() - mb.mean()) <= 3.0 * se


def test_concentration_diagnostic_basics():
    e2 = catalog.euclidean(2)
    dres = distance(e2, [0, 0], [1, 0], DistanceOptions(seed=4))
    ens = bridge.sample_bridge_tilted(e2, 0.1, [0, 0], [1, 0], n_target=600,
                                      seed=29, witness=dres.witness)
    gamma = bridge.reference_path(e2, [0, 0], dres, ens.s_grid)
    assert np.allclose(gamma[0], [0, 0], atol=1e-8)
    assert np.allclose(gamma[-1], [1, 0], atol=1e-3)
    big = bridge.concentration_diagnostic(ens, gamma, rho=50.0)
    assert big.fraction_inside == 1.0
    small = bridge.concentration_diagnostic(ens, gamma, rho=1e-6)
    assert small.fraction_inside == 0.0
    mid = bridge.concentration_diagnostic(ens, gamma, rho=0.3)
    q = mid.sup_deviation_quantiles
    assert q[0.5] <= q[0.9] <= q[0.95] <= q[0.99]


def test_concentration_matches_exact_oracle():
    e2 = catalog.euclidean(2)
    dres = distance(e2, [0, 0], [1, 0], DistanceOptions(seed=4))
    t = 0.1
    ens = bridge.sample_bridge_tilted(e2, t, [0, 0], [1, 0], n_target=1500,
                                      seed=30, witness=dres.witness)
    gamma = bridge.reference_path(e2, [0, 0], dres, ens.s_grid)
    diag = bridge.concentration_diagnostic(ens, gamma, rho=0.3)
    rng = np.random.default_rng(123)
    want = oracles.exact_bridge_tube_fraction(rng, t, 0.3, ens.terminal_tol,
                                              n=20000, ngrid=600)
    assert abs(diag.fraction_inside - want) <= 0.03


def test_monotone_concentration_in_t():
    h = catalog.heisenberg()
    dres = distance(h, [0, 0, 0], [1, 0, 0], DistanceOptions(seed=5))
    fracs, errs = [], []
    for i, t in enumerate([0.5, 0.2, 0.1, 0.05]):
        ens = bridge.sample_bridge_tilted(h, t, [0, 0, 0], [1, 0, 0],
                                          n_target=400, seed=31 + i,
                                          witness=dres.witness)
        gamma = bridge.reference_path(h, [0, 0, 0], dres, ens.s_grid)
        diag = bridge.concentration_diagnostic(ens, gamma, 0.3)
        fracs.append(diag.fraction_inside)
        errs.append(diag.stderr)
    for i in range(3):
        assert fracs[i + 1] >= fracs[i] - 2.0 * np.hypot(errs[i], errs[i + 1])


def test_empty_ensemble_raises():
    e1 = catalog.euclidean(1)
    ens = bridge.sample_bridge_rejection(e1, 0.4, [0.0], [0.0], n_target=50,
                                         seed=32)
    bad = ens.__class__(t=ens.t, x=ens.x, y=ens.y, s_grid=ens.s_grid,
                        paths=ens.paths[:0], acceptance_rate=0.0,
                        terminal_tol=ens.terminal_tol, seed=0, n_proposals=0,
                        path_ids=ens.path_ids[:0])
    with pytest.raises(ValueError):
        bridge.concentration_diagnostic(bad, ens.paths[0], 0.3)


def test_infeasibility_error_message():
    e1 = catalog.euclidean(1)
    with pytest.raises(bridge.BridgeInfeasibleError, match="tilted|terminal_tol"):
        bridge.sample_bridge_rejection(e1, 0.01, [0.0], [3.0], n_target=10,
                                       seed=33, max_proposals=200000)


def test_strong_minimality_reports():
    e2 = catalog.euclidean(2)
    rep = bridge.strong_minimality_report(e2, [0, 0], [1, 0], [-0.5, -0.5],
                                          [1.5, 0.5], delta_probe=0.02)
    oracle = oracles.reflected_tube_energy(wall=0.5, probe=rep.penetration)
    assert rep.is_strong
    assert abs(rep.outside_energy - oracle) <= 0.06 * oracle
    assert abs(rep.margin - (oracle - 1.0)) <= 0.08 * oracle

    big = bridge.strong_minimality_report(e2, [0, 0], [1, 0], [-10, -10],
                                          [10, 10], delta_probe=0.02)
    assert big.is_strong and big.margin > 100.0

    tight = bridge.strong_minimality_report(e2, [0, 0], [1, 0], [-0.2, -0.05],
                                            [0.3, 0.05], delta_probe=0.02)
    assert not tight.is_strong
