import math

import numpy as np
import pytest

from versionage.analytic import profile_ages
from versionage.core import ConfigurationError, SubscriptionProfile, SystemParams, Topology
from versionage.sim import (
    AgeEstimate,
    SimConfig,
    SimState,
    alternate_age,
    estimate_ages,
    simulate_trajectories,
    step,
)

PARAMS = SystemParams(p_e=0.3, beta=0.6, p=0.2, L=10)


def test_sim_config_defaults_and_validation():
    cfg = SimConfig(horizon=1000, replications=50)
    assert cfg.burn_in == 100
    assert cfg.workers == 1
    assert SimConfig(horizon=1000, replications=50, burn_in=0).burn_in == 0
    with pytest.raises(ConfigurationError):
        SimConfig(horizon=0, replications=50)
    with pytest.raises(ConfigurationError):
        SimConfig(horizon=100, replications=0)
    with pytest.raises(ConfigurationError):
        SimConfig(horizon=100, replications=5, burn_in=100)
    with pytest.raises(ConfigurationError):
        SimConfig(horizon=100, replications=5, workers=0)


def test_step_dimension_checks():
    topo = Topology.line(3)
    prof = SubscriptionProfile.from_string("100")
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigurationError):
        step(SimState(0, (0, 0)), topo, prof, PARAMS, rng)


def _replay_with_step(topology, profile, params, horizon, rep_seed_seq):
    rng = np.random.Generator(np.random.PCG64(rep_seed_seq))
    state = SimState.zeros(topology.n)
    servers = [0]
    ages = [state.node_ages]
    for _ in range(horizon):
        state = step(state, topology, profile, params, rng)
        servers.append(state.server_age)
        ages.append(state.node_ages)
    return servers, ages


@pytest.mark.parametrize(
    "topology,bits",
    [
        (Topology.line(4), "1000"),
        (Topology.star(3), "0110"),
        (Topology.tree(2, 3), "1000000"),
        (Topology.general(5, ((0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 1))), "10010"),
    ],
)
def test_step_matches_batched_kernel(topology, bits):
    # the one-slot reference update and the vectorized kernel must walk the
    # exact same trajectory from the same stream
    profile = SubscriptionProfile.from_string(bits)
    horizon, reps, seed = 257, 3, 99
    server_traj, ages_traj, _ = simulate_trajectories(
        topology, profile, PARAMS, horizon, reps, master_seed=seed
    )
    for rep in range(reps):
        seq = np.random.SeedSequence(seed, spawn_key=(rep,))
        servers, ages = _replay_with_step(topology, profile, PARAMS, horizon, seq)
        assert np.array_equal(server_traj[rep], np.array(servers))
        assert np.array_equal(ages_traj[rep], np.array(ages))


def test_estimate_matches_closed_form_on_line():
    topo = Topology.line(5)
    prof = SubscriptionProfile.from_string("10000")
    est = estimate_ages(topo, prof, PARAMS, SimConfig(horizon=4000, replications=400, master_seed=5))
    expected = profile_ages(topo, prof, PARAMS)
    for i in range(5):
        assert abs(est.mean[i] - expected[i]) < max(3 * est.ci_half_width[i], 0.02 * expected[i])


def test_estimate_matches_closed_form_on_star():
    star = Topology.star(3)
    params = SystemParams(p_e=0.3, beta=0.6, p=0.5, L=2.5)
    prof = SubscriptionProfile.from_string("0110")
    est = estimate_ages(star, prof, params, SimConfig(horizon=4000, replications=400, master_seed=8))
    expected = profile_ages(star, prof, params)
    for i in range(4):
        assert abs(est.mean[i] - expected[i]) < max(3 * est.ci_half_width[i], 0.02 * expected[i])


def test_worker_count_cannot_change_results():
    topo = Topology.line(6)
    prof = SubscriptionProfile.from_string("100000")
    kw = dict(horizon=400, replications=111, master_seed=42)
    one = estimate_ages(topo, prof, PARAMS, SimConfig(**kw, workers=1))
    three = estimate_ages(topo, prof, PARAMS, SimConfig(**kw, workers=3))
    five = estimate_ages(topo, prof, PARAMS, SimConfig(**kw, workers=5))
    assert np.array_equal(one.mean, three.mean)
    assert np.array_equal(one.mean, five.mean)
    assert np.array_equal(one.ci_half_width, three.ci_half_width)
    assert np.array_equal(one.ci_half_width, five.ci_half_width)


def test_same_seed_same_result_different_seed_differs():
    topo = Topology.line(3)
    prof = SubscriptionProfile.from_string("100")
    a = estimate_ages(topo, prof, PARAMS, SimConfig(horizon=300, replications=40, master_seed=1))
    b = estimate_ages(topo, prof, PARAMS, SimConfig(horizon=300, replications=40, master_seed=1))
    c = estimate_ages(topo, prof, PARAMS, SimConfig(horizon=300, replications=40, master_seed=2))
    assert np.array_equal(a.mean, b.mean)
    assert not np.array_equal(a.mean, c.mean)


def test_replication_prefix_is_stable():
    # adding replications must not disturb the ones already run
    topo = Topology.line(3)
    prof = SubscriptionProfile.from_string("100")
    traj_small = simulate_trajectories(topo, prof, PARAMS, 100, 5, master_seed=3)
    traj_big = simulate_trajectories(topo, prof, PARAMS, 100, 9, master_seed=3)
    assert np.array_equal(traj_small[0], traj_big[0][:5])
    assert np.array_equal(traj_small[1], traj_big[1][:5])


def test_divergent_nodes_reported():
    topo = Topology.line(4)
    prof = SubscriptionProfile.from_string("0100")
    est = estimate_ages(topo, prof, PARAMS, SimConfig(horizon=200, replications=20, master_seed=0))
    assert est.any_divergent
    assert est.divergent[0]
    assert math.isinf(est.mean[0]) and math.isinf(est.ci_half_width[0])
    assert all(math.isfinite(est.mean[i]) for i in (1, 2, 3))


def test_single_replication_has_infinite_ci():
    topo = Topology.line(2)
    prof = SubscriptionProfile.from_string("10")
    est = estimate_ages(topo, prof, PARAMS, SimConfig(horizon=200, replications=1))
    assert est.replications == 1
    assert all(math.isinf(w) for w in est.ci_half_width)
    assert all(math.isfinite(m) for m in est.mean)


def test_alternate_age_flips_one_node():
    topo = Topology.line(5)
    prof = SubscriptionProfile.from_string("10000")
    cfg = SimConfig(horizon=2000, replications=200, master_seed=21)
    alt = alternate_age(4, topo, prof, PARAMS, cfg)
    # node 4 subscribed in the counterfactual, so its age is near x_S
    assert abs(alt.mean[4] - 0.8) < max(3 * alt.ci_half_width[4], 0.02)
    direct = estimate_ages(topo, prof.flip(4), PARAMS, cfg)
    assert np.array_equal(alt.mean, direct.mean)


def test_subscriber_age_ignores_in_edges():
    # gossip cannot beat the server feed: all subscribers share one age law,
    # so a subscriber's mean is x_S no matter what points at it
    edges = ((1, 0), (2, 0), (3, 0), (1, 2), (3, 2), (0, 4), (4, 1))
    topo = Topology.general(5, edges)
    prof = SubscriptionProfile.from_string("10110")
    params = SystemParams(p_e=0.4, beta=0.5, p=0.8, L=5)
    est = estimate_ages(topo, prof, params, SimConfig(horizon=4000, replications=300, master_seed=33))
    x_s = 0.4 / 0.5 + 0.4
    for node in (0, 2, 3):
        assert abs(est.mean[node] - x_s) < max(3 * est.ci_half_width[node], 0.02 * x_s)


def test_trajectory_shapes_and_deterministic_start():
    topo = Topology.star(2)
    prof = SubscriptionProfile.from_string("100")
    server_traj, ages_traj, u_traj = simulate_trajectories(topo, prof, PARAMS, 50, 4, master_seed=6)
    assert server_traj.shape == (4, 51)
    assert ages_traj.shape == (4, 51, 3)
    assert u_traj.shape == (4, 50, 2 + len(topo.edges))
    assert np.all(server_traj[:, 0] == 0)
    assert np.all(ages_traj[:, 0, :] == 0)
    assert np.all((u_traj >= 0) & (u_traj < 1))


def test_estimate_consistent_with_trajectories():
    # the streaming reduction must equal a direct average over the recorded
    # trajectory, sample for sample
    topo = Topology.line(4)
    prof = SubscriptionProfile.from_string("1010")
    cfg = SimConfig(horizon=240, replications=12, master_seed=14, burn_in=40)
    est = estimate_ages(topo, prof, PARAMS, cfg)
    _, ages_traj, _ = simulate_trajectories(topo, prof, PARAMS, 240, 12, master_seed=14)
    per_rep = ages_traj[:, 41:, :].sum(axis=1) / float(240 - 40)
    assert np.array_equal(est.mean, per_rep.mean(axis=0))


def test_age_estimate_metadata():
    topo = Topology.line(2)
    prof = SubscriptionProfile.from_string("10")
    cfg = SimConfig(horizon=100, replications=3, master_seed=9)
    est = estimate_ages(topo, prof, PARAMS, cfg)
    assert isinstance(est, AgeEstimate)
    assert est.horizon == 100
    assert est.burn_in == 10
    assert est.master_seed == 9
    assert est.replications == 3
