"""Closed-form steady-state ages and subscription structure for tagged topologies.

All expectations here are long-run limits of the slotted dynamics.  The
recurring quantities:

* x_S = p_e * (1/beta + 1), the subscriber age;
* each gossip hop adds p_e / p on top of its source's expected age;
* the tolerance ceiling is L * x_S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .core import (
    ConfigurationError,
    ExtendedRate,
    SubscriptionProfile,
    SystemParams,
    Topology,
    UnsupportedTopologyError,
    check_dimensions,
    subscriber_age,
)

# Absolute snap tolerance for the ceiling in line_k_star.  Composed formulas
# (beta round-tripped through line_beta_star) land within ~1e-12 of an exact
# integer; genuine perturbations of beta move the product by far more.
_CEIL_SNAP = 1e-9


def _snapped_ceil(x: float) -> int:
    nearest = round(x)
    if abs(x - nearest) <= _CEIL_SNAP:
        return int(nearest)
    return math.ceil(x)


def line_node_age(k: int, params: SystemParams) -> float:
    """Expected age of the node k gossip hops below its feeding subscriber."""
    if k < 0:
        raise ConfigurationError(f"hop distance must be >= 0, got {k}")
    x_s = subscriber_age(params.p_e, params.beta)
    return x_s + k * params.p_e / params.p


def line_k_star(params: SystemParams) -> int:
    """Critical subscription spacing on the line: the smallest hop distance at
    which a node prefers subscribing over free-riding.

    Equals ceil(p * (L - 1) * (1/beta + 1)).  The boundary is closed: when the
    product is an exact integer the node sitting exactly at the tolerance
    ceiling subscribes, so K equals the product itself.  Values within
    _CEIL_SNAP of an integer are treated as that integer so the K ->
    line_beta_star(K) -> K round trip is exact under float arithmetic.
    At L = 1 no node tolerates any extra age and K clamps to 1.
    """
    product = params.p * (params.L - 1.0) * (1.0 / params.beta + 1.0)
    return max(1, _snapped_ceil(product))


def line_fs(params: SystemParams) -> float:
    """Subscriber density 1/K of the stable pattern on the (long) line."""
    return 1.0 / line_k_star(params)


def line_beta_star(K: int, params: SystemParams) -> ExtendedRate:
    """Minimal sampling rate at which the line's stable spacing equals K.

    Inverts the spacing formula: beta*(K) = 1 / (K / (p*(L-1)) - 1).  When
    K <= p*(L-1) the spacing K is unachievable at any rate (+inf, reason
    "unachievable-spacing"); a finite result above 1 is kept finite with
    reason "needs-beta-above-1" since no realizable rate reaches it.
    """
    if K < 1:
        raise ConfigurationError(f"spacing must be >= 1, got {K}")
    scale = params.p * (params.L - 1.0)
    if scale == 0.0:
        raise ConfigurationError(
            "L = 1 admits only the all-subscribe pattern; no spacing threshold exists"
        )
    denom = K / scale - 1.0
    if denom <= 0.0:
        return ExtendedRate.infinite("unachievable-spacing")
    return ExtendedRate.finite(1.0 / denom)


def tree_fs(params: SystemParams, r: int) -> float:
    """Subscriber fraction (r-1)/(r**K - 1) of the stable level pattern on the
    complete r-ary tree: one subscriber per cell of K levels."""
    if r < 2:
        raise ConfigurationError(f"tree fan-out must be >= 2, got {r}")
    K = line_k_star(params)
    return (r - 1) / (r**K - 1)


def tree_cell_size(params: SystemParams, r: int) -> int:
    """Nodes per subscription cell on the r-ary tree: 1 + r + ... + r**(K-1)."""
    if r < 2:
        raise ConfigurationError(f"tree fan-out must be >= 2, got {r}")
    K = line_k_star(params)
    return (r**K - 1) // (r - 1)


def _rate_from_denominator(denom: float) -> ExtendedRate:
    if denom <= 0.0:
        return ExtendedRate.infinite("never-binds")
    return ExtendedRate.finite(1.0 / denom)


def _multi_source_hit(p: float, k: int) -> float:
    """Probability 1 - (1-p)**k that at least one of k independent gossip
    edges delivers in a slot."""
    return 1.0 - (1.0 - p) ** k


@dataclass(frozen=True)
class StarThresholds:
    """Critical sampling rates of the (r+1)-node star.

    beta_k[i] is the threshold for k = i+1 subscribed peripherals: below it
    the k-th peripheral regime is stable, at and above it the regime hands
    over to k+1 subscribers.  The last entry (k = r) is the center's own
    threshold: at and above it even the center must subscribe.  beta_c bounds
    the center-only pattern: peripherals tolerate free-riding on a subscribed
    center only below it.
    """

    r: int
    beta_k: tuple[ExtendedRate, ...]
    beta_c: ExtendedRate

    def __post_init__(self) -> None:
        if len(self.beta_k) != self.r:
            raise ConfigurationError(f"expected {self.r} thresholds, got {len(self.beta_k)}")
        finite_vals = [t.value for t in self.beta_k if t.is_finite]
        assert all(a < b for a, b in zip(finite_vals, finite_vals[1:])), (
            "finite peripheral thresholds must be strictly increasing"
        )
        inf_started = False
        for t in self.beta_k:
            if inf_started:
                assert not t.is_finite, "+inf thresholds must form a suffix"
            inf_started = inf_started or not t.is_finite

    @property
    def beta_r(self) -> ExtendedRate:
        return self.beta_k[-1]


def star_thresholds(params: SystemParams, r: int) -> StarThresholds:
    """All critical rates of the star with r peripherals.

    For k < r the binding constraint is the free-riding peripheral two hops
    from the server (center fed by k subscribed spokes, then one more gossip
    hop): its age stays within tolerance iff
    (1/(1-(1-p)**k) + 1/p) / (L-1) - 1 has a positive reciprocal above beta.
    For k = r there is no free-riding peripheral left and the center's own
    age binds: 1/((1-(1-p)**r)*(L-1)) - 1.  The center-only ceiling beta_c
    uses the single-hop version, 1/(p*(L-1)) - 1.
    """
    if r < 1:
        raise ConfigurationError(f"star needs r >= 1 peripherals, got {r}")
    if params.L == 1.0:
        raise ConfigurationError(
            "L = 1 leaves no gossip-fed regime on the star; every node must subscribe"
        )
    scale = params.L - 1.0
    rates = []
    for k in range(1, r):
        hit = _multi_source_hit(params.p, k)
        rates.append(_rate_from_denominator((1.0 / hit + 1.0 / params.p) / scale - 1.0))
    hit_r = _multi_source_hit(params.p, r)
    rates.append(_rate_from_denominator(1.0 / (hit_r * scale) - 1.0))
    beta_c = _rate_from_denominator(1.0 / (params.p * scale) - 1.0)
    return StarThresholds(r=r, beta_k=tuple(rates), beta_c=beta_c)


class StarRegime(Enum):
    CENTER_ONLY = "center_only"
    PERIPHERAL_K = "peripheral_k"
    ALL_PERIPHERALS = "all_peripherals"
    ALL_SUBSCRIBE = "all_subscribe"


@dataclass(frozen=True)
class RegimeReport:
    """Server-preferred stable subscription structure of a star at one rate."""

    beta: float
    r: int
    regime: StarRegime
    k: int  # subscribed peripherals; r when the center subscribes too
    profile: SubscriptionProfile
    f_s: float
    center_only_stable: bool
    thresholds: StarThresholds | None


def star_profile(r: int, k: int, center: bool = False) -> SubscriptionProfile:
    """Star profile with the first k peripherals subscribed."""
    if not 0 <= k <= r:
        raise ConfigurationError(f"need 0 <= k <= r, got k={k}, r={r}")
    actions = (1 if center else 0,) + (1,) * k + (0,) * (r - k)
    return SubscriptionProfile(actions)


def star_regime(beta: float, params: SystemParams, r: int) -> RegimeReport:
    """Locate beta in the star's regime bands [beta_{k-1}, beta_k).

    The k-th band (left-closed, per the convention that a node exactly at the
    tolerance ceiling subscribes) has k peripherals subscribed and the center
    free-riding; at and above the last threshold everyone subscribes.  Bands
    whose upper threshold is +inf or above 1 absorb the rest of (0, 1].
    """
    run = params.with_beta(beta)  # validates beta in (0, 1]
    if params.L == 1.0:
        return RegimeReport(
            beta=beta, r=r, regime=StarRegime.ALL_SUBSCRIBE, k=r,
            profile=star_profile(r, r, center=True), f_s=1.0,
            center_only_stable=False, thresholds=None,
        )
    th = star_thresholds(run, r)
    center_only_stable = beta < th.beta_c.value
    for idx, rate in enumerate(th.beta_k):
        k = idx + 1
        if beta < rate.value:
            regime = StarRegime.ALL_PERIPHERALS if k == r else StarRegime.PERIPHERAL_K
            return RegimeReport(
                beta=beta, r=r, regime=regime, k=k,
                profile=star_profile(r, k), f_s=k / (r + 1),
                center_only_stable=center_only_stable, thresholds=th,
            )
    return RegimeReport(
        beta=beta, r=r, regime=StarRegime.ALL_SUBSCRIBE, k=r,
        profile=star_profile(r, r, center=True), f_s=1.0,
        center_only_stable=center_only_stable, thresholds=th,
    )


def line_periodic_profile(n: int, K: int) -> SubscriptionProfile:
    """Line profile with subscribers at 0, K, 2K, ... (the unique stable pattern)."""
    if n < 1 or K < 1:
        raise ConfigurationError(f"need n >= 1 and K >= 1, got n={n}, K={K}")
    return SubscriptionProfile(tuple(1 if i % K == 0 else 0 for i in range(n)))


def tree_level_profile(topology: Topology, K: int) -> SubscriptionProfile:
    """Tree profile with whole levels 0, K, 2K, ... subscribed."""
    if topology.kind != "tree":
        raise UnsupportedTopologyError("tree_level_profile needs a tree tag")
    if K < 1:
        raise ConfigurationError(f"need K >= 1, got K={K}")
    return SubscriptionProfile(
        tuple(1 if topology.tree_level(v) % K == 0 else 0 for v in range(topology.n))
    )


def profile_ages(
    topology: Topology, profile: SubscriptionProfile, params: SystemParams
) -> tuple[float, ...]:
    """Exact expected steady-state age of every node under an arbitrary profile.

    Supports the tagged classes only; general graphs have no closed form here
    and belong to the simulation module.  Nodes with no subscriber upstream
    diverge and get math.inf.

    Line and tree reduce to hop counting: a free-rider's age is x_S plus
    p_e/p per hop to its nearest feeding subscriber.  On the star all
    subscribed peripherals share one age process, so a free-riding center fed
    by k of them behaves like a single in-edge that hits with probability
    1 - (1-p)**k; free-riding peripherals then sit one plain hop below the
    center.  Gossip arriving from staler neighbors (e.g. spokes feeding a
    fresher center) never lowers an age, so those edges drop out exactly.
    """
    check_dimensions(topology, profile)
    x_s = subscriber_age(params.p_e, params.beta)
    hop = params.p_e / params.p

    if topology.kind == "line":
        ages: list[float] = []
        dist: float = math.inf
        for i in range(topology.n):
            dist = 0.0 if profile.actions[i] == 1 else dist + 1.0
            ages.append(x_s + dist * hop if math.isfinite(dist) else math.inf)
        return tuple(ages)

    if topology.kind == "tree":
        dists: list[float] = []
        ages = []
        for v in range(topology.n):  # heap order: parents precede children
            if profile.actions[v] == 1:
                d = 0.0
            elif v == 0:
                d = math.inf
            else:
                d = dists[topology.tree_parent(v)] + 1.0
            dists.append(d)
            ages.append(x_s + d * hop if math.isfinite(d) else math.inf)
        return tuple(ages)

    if topology.kind == "star":
        r = topology.r
        assert r is not None
        k = sum(profile.actions[1:])
        if profile.actions[0] == 1:
            center: float = x_s
        elif k >= 1:
            center = x_s + params.p_e / _multi_source_hit(params.p, k)
        else:
            return (math.inf,) * topology.n
        spoke_ages = tuple(
            x_s if profile.actions[i] == 1 else center + hop
            for i in range(1, r + 1)
        )
        return (center,) + spoke_ages

    raise UnsupportedTopologyError(
        f"no closed form for kind={topology.kind!r}; estimate ages by simulation"
    )
