import math

import numpy as np
import pytest

from versionage.analytic import (
    StarRegime,
    line_beta_star,
    line_fs,
    line_k_star,
    line_node_age,
    line_periodic_profile,
    profile_ages,
    star_profile,
    star_regime,
    star_thresholds,
    tree_cell_size,
    tree_fs,
    tree_level_profile,
)
from versionage.core import (
    ConfigurationError,
    SubscriptionProfile,
    SystemParams,
    Topology,
    UnsupportedTopologyError,
)

PARAMS = SystemParams(p_e=0.3, beta=0.6, p=0.2, L=10)


def test_line_node_age_values():
    # x_S = 0.8, hop increment p_e/p = 1.5
    assert line_node_age(0, PARAMS) == pytest.approx(0.8)
    assert line_node_age(4, PARAMS) == pytest.approx(6.8)
    assert line_node_age(5, PARAMS) == pytest.approx(8.3)


def test_line_k_star_values():
    assert line_k_star(PARAMS) == 5
    assert line_k_star(SystemParams(p_e=0.3, beta=1.0, p=0.2, L=10)) == 4
    assert line_k_star(SystemParams(p_e=0.3, beta=0.5, p=0.5, L=2)) == 2


def test_line_k_star_closed_boundary():
    # when p(L-1)(1/beta + 1) is an exact integer the ceiling must not
    # round up past it, within float noise
    params = SystemParams(p_e=0.3, beta=0.5625, p=0.2, L=10)
    assert line_k_star(params) == 5
    # 1e-6 below the boundary rate lands strictly inside the next band
    assert line_k_star(params.with_beta(0.5625 - 1e-6)) == 6


def test_line_k_star_at_least_one():
    params = SystemParams(p_e=0.3, beta=0.9, p=0.1, L=1.0)
    assert line_k_star(params) == 1


def test_line_beta_star_values():
    assert line_beta_star(5, PARAMS).value == pytest.approx(0.5625)
    rate4 = line_beta_star(4, PARAMS)
    assert rate4.value == pytest.approx(9 / 11)
    assert rate4.feasible
    rate1 = line_beta_star(1, PARAMS)
    assert not rate1.is_finite
    assert rate1.reason == "unachievable-spacing"


def test_line_beta_star_needs_rate_above_one():
    # K barely above p(L-1) forces a rate beyond 1
    params = SystemParams(p_e=0.3, beta=0.6, p=0.5, L=8)
    rate = line_beta_star(4, params)
    assert rate.is_finite and not rate.feasible
    assert rate.reason == "needs-beta-above-1"


def test_line_beta_star_rejects_degenerate_ceiling():
    with pytest.raises(ConfigurationError):
        line_beta_star(3, SystemParams(p_e=0.3, beta=0.6, p=0.2, L=1.0))


def test_staircase_round_trip_grid():
    # beta*(K) must land exactly on spacing K, and any rate slightly below
    # must fall to spacing K+1
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(60):
        p = float(rng.uniform(0.1, 0.9))
        L = float(rng.uniform(2.0, 20.0))
        p_e = float(rng.uniform(0.1, 0.9))
        params = SystemParams(p_e=p_e, beta=0.5, p=p, L=L)
        for K in range(2, 30):
            rate = line_beta_star(K, params)
            if not rate.feasible:
                continue
            run = params.with_beta(rate.value)
            assert line_k_star(run) == K
            assert line_k_star(params.with_beta(rate.value - 1e-6)) == K + 1
            checked += 1
    assert checked >= 100


def test_k_star_monotone_in_beta():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = float(rng.uniform(0.1, 0.9))
        L = float(rng.uniform(1.5, 15.0))
        betas = np.sort(rng.uniform(0.05, 1.0, size=8))
        ks = [line_k_star(SystemParams(p_e=0.3, beta=float(b), p=p, L=L)) for b in betas]
        assert all(a >= b for a, b in zip(ks, ks[1:]))


def test_line_fs():
    assert line_fs(PARAMS) == pytest.approx(0.2)
    assert line_fs(SystemParams(p_e=0.3, beta=0.5, p=0.5, L=2)) == pytest.approx(0.5)


def test_tree_fs_values():
    assert tree_fs(PARAMS, 2) == pytest.approx(1 / 31)
    params = SystemParams(p_e=0.3, beta=0.9, p=0.5, L=2)
    assert line_k_star(params) == 2
    assert tree_fs(params, 3) == pytest.approx(0.25)
    assert tree_cell_size(PARAMS, 2) == 31


def test_tree_dominates_line():
    # a subscribing ancestor covers r^K - 1 descendants vs K - 1 on a line
    rng = np.random.default_rng(13)
    for _ in range(100):
        p = float(rng.uniform(0.1, 0.9))
        L = float(rng.uniform(2.0, 20.0))
        beta = float(rng.uniform(0.05, 1.0))
        r = int(rng.integers(2, 6))
        params = SystemParams(p_e=0.3, beta=beta, p=p, L=L)
        assert tree_fs(params, r) <= line_fs(params) + 1e-15


def test_tree_fs_huge_spacing_underflows_to_zero():
    params = SystemParams(p_e=0.3, beta=0.001, p=0.9, L=2000.0)
    assert line_k_star(params) > 1000
    assert tree_fs(params, 2) >= 0.0


STAR = SystemParams(p_e=0.3, beta=0.6, p=0.5, L=2.5)


def test_star_thresholds_values():
    th = star_thresholds(STAR, 3)
    assert th.beta_k[0].value == pytest.approx(0.6)
    assert th.beta_k[1].value == pytest.approx(9 / 11)
    assert not th.beta_k[2].is_finite
    assert th.beta_k[2].reason == "never-binds"
    assert th.beta_c.value == pytest.approx(3.0)
    assert not th.beta_c.feasible
    assert th.beta_c.reason == "needs-beta-above-1"
    assert th.beta_r is th.beta_k[2]


def test_star_thresholds_sorted():
    rng = np.random.default_rng(17)
    for _ in range(100):
        p = float(rng.uniform(0.1, 0.9))
        L = float(rng.uniform(1.5, 10.0))
        r = int(rng.integers(2, 7))
        th = star_thresholds(SystemParams(p_e=0.3, beta=0.5, p=p, L=L), r)
        finite = [b.value for b in th.beta_k if b.is_finite]
        assert all(a < b for a, b in zip(finite, finite[1:]))
        # infinite entries only as a suffix
        flags = [b.is_finite for b in th.beta_k]
        assert flags == sorted(flags, reverse=True)


def test_star_regime_bands():
    rep = star_regime(0.5, STAR, 3)
    assert rep.regime is StarRegime.PERIPHERAL_K
    assert rep.k == 1
    assert rep.f_s == pytest.approx(0.25)
    assert rep.profile.to_string() == "0100"

    rep = star_regime(0.7, STAR, 3)
    assert rep.k == 2
    assert rep.f_s == pytest.approx(0.5)
    assert rep.profile.to_string() == "0110"

    rep = star_regime(0.9, STAR, 3)
    assert rep.regime is StarRegime.ALL_PERIPHERALS
    assert rep.k == 3
    assert rep.f_s == pytest.approx(0.75)
    assert rep.profile.to_string() == "0111"


def test_star_regime_band_edges_left_closed():
    # at the computed threshold the one-subscriber profile loses stability,
    # so the regime steps up to k = 2; just below it stays at k = 1
    b1 = star_thresholds(STAR, 3).beta_k[0].value
    assert star_regime(b1, STAR, 3).k == 2
    assert star_regime(b1 - 1e-6, STAR, 3).k == 1


def test_star_regime_center_only_flag():
    assert star_regime(0.5, STAR, 3).center_only_stable
    # beta_c = 3 > 1, so center-only stays stable across the whole rate range
    assert star_regime(0.999, STAR, 3).center_only_stable
    th = star_thresholds(SystemParams(p_e=0.3, beta=0.5, p=0.9, L=1.2), 5)
    if th.beta_c.feasible:
        above = star_regime(min(1.0, th.beta_c.value * 1.01), SystemParams(p_e=0.3, beta=0.5, p=0.9, L=1.2), 5)
        assert not above.center_only_stable


def test_star_profile_shapes():
    assert star_profile(4, 0).to_string() == "00000"
    assert star_profile(4, 2).to_string() == "01100"
    assert star_profile(3, 1, center=True).to_string() == "1100"


def test_periodic_profiles():
    assert line_periodic_profile(11, 5).to_string() == "10000100001"
    assert line_periodic_profile(3, 5).to_string() == "100"
    tree = Topology.tree(2, 4)
    prof = tree_level_profile(tree, 2)
    # levels 0 and 2 subscribe: root plus the four grandchildren
    assert prof.subscribers == (0, 3, 4, 5, 6)


def test_profile_ages_line():
    topo = Topology.line(5)
    ages = profile_ages(topo, SubscriptionProfile.from_string("10000"), PARAMS)
    assert ages == pytest.approx((0.8, 2.3, 3.8, 5.3, 6.8))
    ages = profile_ages(topo, SubscriptionProfile.from_string("10100"), PARAMS)
    assert ages == pytest.approx((0.8, 2.3, 0.8, 2.3, 3.8))
    ages = profile_ages(topo, SubscriptionProfile.from_string("01000"), PARAMS)
    assert math.isinf(ages[0])
    assert ages[1:] == pytest.approx((0.8, 2.3, 3.8, 5.3))


def test_profile_ages_tree():
    tree = Topology.tree(2, 3)
    ages = profile_ages(tree, SubscriptionProfile.from_string("1000000"), PARAMS)
    assert ages == pytest.approx((0.8, 2.3, 2.3, 3.8, 3.8, 3.8, 3.8))
    ages = profile_ages(tree, SubscriptionProfile.from_string("1010000"), PARAMS)
    assert ages[2] == pytest.approx(0.8)
    assert ages[5] == pytest.approx(2.3)


def test_profile_ages_star():
    star = Topology.star(3)
    # center subscribes: every spoke is one hop away
    ages = profile_ages(star, SubscriptionProfile.from_string("1000"), STAR)
    assert ages == pytest.approx((0.8, 1.4, 1.4, 1.4))
    # two spokes subscribe: center sees a hit whenever either delivers
    ages = profile_ages(star, SubscriptionProfile.from_string("0110"), STAR)
    q2 = 1 - (1 - 0.5) ** 2
    x0 = 0.8 + 0.3 / q2
    assert ages[0] == pytest.approx(x0)
    assert ages[1] == pytest.approx(0.8)
    assert ages[2] == pytest.approx(0.8)
    assert ages[3] == pytest.approx(x0 + 0.6)
    # nobody subscribes: every age diverges
    ages = profile_ages(star, SubscriptionProfile.from_string("0000"), STAR)
    assert all(math.isinf(a) for a in ages)


def test_profile_ages_rejects_general():
    topo = Topology.general(3, ((0, 1), (1, 2)))
    with pytest.raises(UnsupportedTopologyError):
        profile_ages(topo, SubscriptionProfile.from_string("100"), PARAMS)
