import numpy as np
import pytest

from hypolab import catalog, sde
from hypolab.geometry import Polynomial, SubRiemannianStructure, VectorField
from hypolab.rng import BLOCK, block_normals, normals_for_paths, path_normals
from hypolab.sets import halfspace, nowhere, outside_ball

import oracles


def test_brownian_moments_euclidean():
    e2 = catalog.euclidean(2)
    batch = sde.run_paths(e2, [0, 0], 1.0, 100000, seed=7, n_steps=200)
    n = batch.n
    mean = batch.terminal.mean(axis=0)
    cov = np.cov(batch.terminal.T)
    assert np.all(np.abs(mean) <= 3.0 / np.sqrt(n))
    se_var = np.sqrt(2.0 / n)
    assert np.all(np.abs(np.diag(cov) - 1.0) <= 3.0 * se_var)
    assert abs(cov[0, 1]) <= 3.0 / np.sqrt(n)
    assert np.all(batch.alive)


def test_levy_area_variance():
    # Ito isometry: Var(z_t) = t^2 / 4 for the area coordinate
    h = catalog.heisenberg()
    batch = sde.run_paths(h, [0, 0, 0], 1.0, 100000, seed=7, n_steps=400)
    v = batch.terminal[:, 2].var()
    z4 = np.mean((batch.terminal[:, 2] ** 2 - v) ** 2)
    se = np.sqrt(z4 / batch.n)
    assert abs(v - 0.25) <= 3.0 * se + 0.25 / 400.0


def test_interval_survival_series_oracle():
    e1 = catalog.euclidean(1)
    kill = outside_ball([0.0], 1.0)       # kill outside (-1, 1)
    batch = sde.run_paths(e1, [0.0], 0.5, 10000, seed=3, n_steps=8192,
                          kill_region=kill)
    surv = float(np.mean(batch.alive))
    want = oracles.interval_survival(0.5)
    stderr = np.sqrt(want * (1 - want) / batch.n)
    # discrete kill checking biases survival upward ~ 0.6 sqrt(dt)
    assert abs(surv - want) <= 3.0 * stderr + 0.01


def test_hitting_times_reflection_oracle():
    e1 = catalog.euclidean(1)
    target = halfspace([1.0], 1.0)
    hs = sde.hitting_time_samples(e1, [0.0], target, 1.0, 20000, seed=3,
                                  n_steps=6400)
    for t, tol_bias in ((1.0, 0.006), (0.25, 0.004)):
        want = oracles.reflection_hitting_prob(t, 1.0)
        got = hs.probability(t)
        se = hs.stderr(t)
        assert abs(got - want) <= 3.0 * se + tol_bias
    # monotone distribution function by construction
    grid = np.linspace(0.05, 1.0, 12)
    probs = [hs.probability(t) for t in grid]
    assert np.all(np.diff(probs) >= 0.0)


def test_never_hit_unreachable_set():
    e2 = catalog.euclidean(2)
    batch = sde.run_paths(e2, [0, 0], 0.5, 2000, seed=1, n_steps=100,
                          monitor=nowhere(2))
    assert np.all(batch.hit_step == -1)


def test_hit_index_not_after_exit_index():
    e1 = catalog.euclidean(1)
    kill = halfspace([1.0], 1.5)          # kill beyond 1.5
    monitor = halfspace([1.0], 1.0)       # record entry beyond 1.0
    batch = sde.run_paths(e1, [0.0], 1.0, 4000, seed=5, n_steps=400,
                          kill_region=kill, monitor=monitor)
    both = (batch.hit_step >= 0) & (batch.exit_step >= 0)
    assert np.all(batch.hit_step[both] <= batch.exit_step[both])
    killed = batch.exit_step >= 0
    assert np.any(killed)
    assert not np.any(batch.alive & killed)


def test_simulate_single_path_bookkeeping():
    e1 = catalog.euclidean(1)
    p = sde.simulate(e1, [0.0], 1.0, n_steps=300, seed=9, path_id=4,
                     kill_region=halfspace([1.0], 2.0),
                     monitor=halfspace([1.0], 0.5))
    assert p.states.shape == (301, 1)
    assert np.all(np.diff(p.times) > 0)
    if p.hit_index is not None:
        assert p.states[p.hit_index, 0] >= 0.5
    if p.killed:
        assert p.exit_index is not None


def test_kill_monotonicity_same_seeds():
    e1 = catalog.euclidean(1)
    small = outside_ball([0.0], 1.0)
    large = outside_ball([0.0], 0.5)      # larger kill region (smaller survival set)
    b1 = sde.run_paths(e1, [0.0], 0.5, 20000, seed=11, n_steps=400,
                       kill_region=small)
    b2 = sde.run_paths(e1, [0.0], 0.5, 20000, seed=11, n_steps=400,
                       kill_region=large)
    # pathwise: anything alive under the larger kill region is alive under the smaller
    assert np.all(b1.alive >= b2.alive)


def test_refinement_stability_second_moments():
    e2 = catalog.euclidean(2)
    b1 = sde.run_paths(e2, [0, 0], 1.0, 100000, seed=13, n_steps=200)
    b2 = sde.run_paths(e2, [0, 0], 1.0, 100000, seed=14, n_steps=400)
    for j in range(2):
        m1 = np.mean(b1.terminal[:, j] ** 2)
        m2 = np.mean(b2.terminal[:, j] ** 2)
        se = np.sqrt(np.var(b1.terminal[:, j] ** 2) / b1.n
                     + np.var(b2.terminal[:, j] ** 2) / b2.n)
        assert abs(m1 - m2) <= 3.0 * se


def test_driftless_reduction_is_exact_brownian():
    # with beta = 0 and Lebesgue nu the stepper must reproduce plain
    # Brownian increments bit for bit
    e1 = catalog.euclidean(1)
    batch = sde.run_paths(e1, [0.0], 1.0, 100, seed=21, n_steps=64)
    normals = block_normals(21, "sim", 0, 100, 64)
    manual = np.zeros(100)
    for k in range(64):
        manual = manual + np.sqrt(1.0 / 64) * normals[:, k]
    assert np.array_equal(batch.terminal[:, 0], manual)


def test_worker_count_invariance():
    h = catalog.heisenberg()
    b1 = sde.run_paths(h, [0, 0, 0], 0.5, 3 * BLOCK, seed=2, n_steps=50,
                       workers=1)
    b2 = sde.run_paths(h, [0, 0, 0], 0.5, 3 * BLOCK, seed=2, n_steps=50,
                       workers=3)
    assert np.array_equal(b1.terminal, b2.terminal)
    assert np.array_equal(b1.exit_step, b2.exit_step)


def test_single_path_matches_block_row():
    e2 = catalog.euclidean(2)
    block = sde.run_paths(e2, [0, 0], 1.0, BLOCK + 40, seed=11, n_steps=50,
                          store=True)
    for pid in (0, 17, BLOCK - 1, BLOCK + 5):
        p = sde.simulate(e2, [0, 0], 1.0, n_steps=50, seed=11, path_id=pid)
        assert np.array_equal(p.states, block.paths[pid])


def test_rng_block_advance_alignment():
    nb = block_normals(5, "stream", 2, 50, 30)
    for pid_local, pid in ((3, 2 * BLOCK + 3), (49, 2 * BLOCK + 49)):
        row = path_normals(5, "stream", pid, 30)
        assert np.array_equal(row, nb[pid_local])
    sel = normals_for_paths(5, "stream", [2 * BLOCK + 1, 2 * BLOCK + 7], 30)
    assert np.array_equal(sel[0], nb[1])
    assert np.array_equal(sel[1], nb[7])


def test_rng_streams_differ():
    a = block_normals(5, "stream-a", 0, 10, 8)
    b = block_normals(5, "stream-b", 0, 10, 8)
    c = block_normals(6, "stream-a", 0, 10, 8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_invalid_arguments():
    e1 = catalog.euclidean(1)
    with pytest.raises(ValueError):
        sde.run_paths(e1, [0.0], -1.0, 10, seed=0)
    with pytest.raises(ValueError):
        sde.run_paths(e1, [0.0], 1.0, 10, seed=0, n_steps=0)
    with pytest.raises(ValueError):
        sde.simulate(e1, [0.0], 0.0)


def test_ou_drift_stationary_variance():
    # X1 = d/dx with log-density -x^2/2 gives the OU generator; by t = 4 the
    # terminal law is close to the stationary N(0, 1)
    one = Polynomial.constant(1, 1.0)
    f = VectorField.from_polynomials([one])
    nu_log = Polynomial(1, {(2,): -0.5})
    s = SubRiemannianStructure(1, [f], nu_log=nu_log, name="ou")
    batch = sde.run_paths(s, [0.0], 4.0, 40000, seed=17, n_steps=1600)
    v = batch.terminal[:, 0].var()
    want = 1.0 - np.exp(-4.0)
    assert abs(v - want) <= 0.03
