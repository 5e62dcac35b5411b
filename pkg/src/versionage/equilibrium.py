"""Subscription stability, exhaustive equilibrium search, and rate optimization.

A profile is stable when no single node gains by flipping its subscription:
a free-rider must sit strictly below the tolerance ceiling L * x_S, and a
subscriber's age upon unsubscribing must reach the ceiling (closed
inequality: a node exactly at the ceiling subscribes).  The server then
leads: among rates it could commit to, it picks the one maximizing subscriber
fraction minus sampling cost, anticipating the stable profile each rate
induces.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol

from . import analytic
from .core import (
    ConfigurationError,
    EnumerationCapError,
    InfeasibleSearchError,
    NoStableProfileError,
    SubscriptionProfile,
    SystemParams,
    Topology,
    ac_threshold,
)
from .sim import SimConfig, estimate_ages


@dataclass(frozen=True)
class OracleAges:
    """Per-node expected ages from some evaluator, with half-width
    uncertainties (zero for exact evaluators, 95% CI for Monte Carlo).
    Divergent nodes carry mean = inf."""

    mean: tuple[float, ...]
    half_width: tuple[float, ...]


class AgeOracle(Protocol):
    def evaluate(
        self, topology: Topology, profile: SubscriptionProfile, params: SystemParams
    ) -> OracleAges: ...


class AnalyticOracle:
    """Exact closed-form evaluator; tagged line/tree/star topologies only."""

    def evaluate(
        self, topology: Topology, profile: SubscriptionProfile, params: SystemParams
    ) -> OracleAges:
        means = analytic.profile_ages(topology, profile, params)
        return OracleAges(mean=means, half_width=(0.0,) * topology.n)


class SimOracle:
    """Monte Carlo evaluator; works on any topology, reports CI half-widths."""

    def __init__(self, config: SimConfig):
        self.config = config

    def evaluate(
        self, topology: Topology, profile: SubscriptionProfile, params: SystemParams
    ) -> OracleAges:
        est = estimate_ages(topology, profile, params, self.config)
        return OracleAges(mean=tuple(est.mean), half_width=tuple(est.ci_half_width))


class _CachingOracle:
    """Memoizes evaluations by action vector; enumeration revisits each
    profile as some neighbor's unilateral deviation."""

    def __init__(self, inner: AgeOracle):
        self._inner = inner
        self._cache: dict[tuple[int, ...], OracleAges] = {}

    def evaluate(
        self, topology: Topology, profile: SubscriptionProfile, params: SystemParams
    ) -> OracleAges:
        key = profile.actions
        hit = self._cache.get(key)
        if hit is None:
            hit = self._inner.evaluate(topology, profile, params)
            self._cache[key] = hit
        return hit


class NodeStatus(Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class NodeAssessment:
    """One node's stability evidence.

    For a free-rider, age is its own expected age and margin is
    threshold - age (> 0 required).  For a subscriber, age is its
    counterfactual unsubscribed age and margin is age - threshold
    (>= 0 required).  Positive margins always point toward stability.
    """

    node: int
    subscribed: bool
    age: float
    threshold: float
    margin: float
    uncertainty: float
    status: NodeStatus


@dataclass(frozen=True)
class StabilityVerdict:
    profile: SubscriptionProfile
    per_node: tuple[NodeAssessment, ...]
    stable: bool
    indeterminate: bool


def is_ac_stable(
    topology: Topology,
    profile: SubscriptionProfile,
    params: SystemParams,
    oracle: AgeOracle,
    margin_tol: float = 0.0,
) -> StabilityVerdict:
    """Check every node's unilateral-deviation incentive under the oracle.

    A margin within max(margin_tol, oracle half-width) of zero is
    Indeterminate rather than guessed: statistical evaluators cannot certify
    knife-edge comparisons.  A divergent free-rider is Unstable outright; a
    subscriber whose counterfactual diverges is Stable outright.
    """
    base = oracle.evaluate(topology, profile, params)
    threshold = ac_threshold(params)
    assessments: list[NodeAssessment] = []
    for i, action in enumerate(profile.actions):
        if action == 0:
            age = base.mean[i]
            unc = base.half_width[i]
            if math.isinf(age):
                assessments.append(NodeAssessment(i, False, age, threshold, -math.inf, 0.0, NodeStatus.UNSTABLE))
                continue
            margin = threshold - age
            status = _classify(margin, max(margin_tol, unc), closed=False)
            assessments.append(NodeAssessment(i, False, age, threshold, margin, unc, status))
        else:
            alt = oracle.evaluate(topology, profile.flip(i), params)
            age = alt.mean[i]
            unc = alt.half_width[i]
            if math.isinf(age):
                assessments.append(NodeAssessment(i, True, age, threshold, math.inf, 0.0, NodeStatus.STABLE))
                continue
            margin = age - threshold
            status = _classify(margin, max(margin_tol, unc), closed=True)
            assessments.append(NodeAssessment(i, True, age, threshold, margin, unc, status))
    statuses = [a.status for a in assessments]
    return StabilityVerdict(
        profile=profile,
        per_node=tuple(assessments),
        stable=all(s is NodeStatus.STABLE for s in statuses),
        indeterminate=any(s is NodeStatus.INDETERMINATE for s in statuses),
    )


def _classify(margin: float, tol: float, closed: bool) -> NodeStatus:
    if tol > 0.0 and abs(margin) <= tol:
        return NodeStatus.INDETERMINATE
    if margin > 0.0:
        return NodeStatus.STABLE
    if margin < 0.0:
        return NodeStatus.UNSTABLE
    # exactly at the ceiling: subscribers stay, free-riders must not be there
    return NodeStatus.STABLE if closed else NodeStatus.UNSTABLE


def enumerate_stable_profiles(
    topology: Topology,
    params: SystemParams,
    oracle: AgeOracle,
    cap: int = 16,
    margin_tol: float = 0.0,
) -> list[StabilityVerdict]:
    """Exhaustively check all 2^n profiles, in lexicographic action order.

    Refuses topologies beyond `cap` nodes: the scan is exponential by design
    (it is the trusted brute-force cross-check for the closed forms).
    """
    if topology.n > cap:
        raise EnumerationCapError(
            f"enumeration over {topology.n} nodes exceeds cap {cap} (2^{topology.n} profiles)"
        )
    cached = _CachingOracle(oracle)
    stable: list[StabilityVerdict] = []
    for bits in itertools.product((0, 1), repeat=topology.n):
        verdict = is_ac_stable(topology, SubscriptionProfile(bits), params, cached, margin_tol)
        if verdict.stable:
            stable.append(verdict)
    return stable


def server_preferred(
    stable_profiles: Iterable[SubscriptionProfile],
) -> tuple[SubscriptionProfile, float]:
    """The server's pick among stable profiles: maximal subscriber fraction,
    ties broken by lexicographically smallest action vector."""
    profiles = list(stable_profiles)
    if not profiles:
        raise NoStableProfileError("no AC-stable profile to choose from")
    best = min(profiles, key=lambda pr: (-pr.subscriber_count, pr.actions))
    return best, best.fraction()


class CostKind(Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"
    TABLE = "table"


@dataclass(frozen=True)
class CostFunction:
    """Sampling cost c(beta), non-decreasing on (0, 1].

    quadratic: c0 * beta**2; linear: c0 * beta; table: linear interpolation
    through (beta, cost) knots, clamped at the ends.
    """

    kind: CostKind
    c0: float = 0.0
    points: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind in (CostKind.QUADRATIC, CostKind.LINEAR):
            if self.c0 < 0.0:
                raise ConfigurationError(f"cost coefficient must be >= 0, got {self.c0}")
        else:
            if len(self.points) < 2:
                raise ConfigurationError("cost table needs at least two points")
            betas = [b for b, _ in self.points]
            costs = [c for _, c in self.points]
            if any(not 0.0 <= b <= 1.0 for b in betas):
                raise ConfigurationError("cost table betas must lie in [0, 1]")
            if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
                raise ConfigurationError("cost table betas must be strictly increasing")
            if any(c2 < c1 for c1, c2 in zip(costs, costs[1:])):
                raise ConfigurationError("cost must be non-decreasing in beta")

    @classmethod
    def quadratic(cls, c0: float) -> "CostFunction":
        return cls(CostKind.QUADRATIC, c0=c0)

    @classmethod
    def linear(cls, c0: float) -> "CostFunction":
        return cls(CostKind.LINEAR, c0=c0)

    @classmethod
    def table(cls, points: Iterable[tuple[float, float]]) -> "CostFunction":
        return cls(CostKind.TABLE, points=tuple(points))

    def __call__(self, beta: float) -> float:
        if self.kind is CostKind.QUADRATIC:
            return self.c0 * beta * beta
        if self.kind is CostKind.LINEAR:
            return self.c0 * beta
        betas = [b for b, _ in self.points]
        costs = [c for _, c in self.points]
        if beta <= betas[0]:
            return costs[0]
        if beta >= betas[-1]:
            return costs[-1]
        for (b1, c1), (b2, c2) in zip(self.points, self.points[1:]):
            if b1 <= beta <= b2:
                w = (beta - b1) / (b2 - b1)
                return c1 + w * (c2 - c1)
        raise AssertionError("unreachable: table covers [betas[0], betas[-1]]")


def server_utility(f_s: float, beta: float, cost: CostFunction) -> float:
    """Leader payoff: subscriber fraction minus sampling cost."""
    return f_s - cost(beta)


@dataclass(frozen=True)
class LineClass:
    """Long-line family; n materializes the winning profile when given."""

    n: int | None = None


@dataclass(frozen=True)
class TreeClass:
    r: int
    depth: int | None = None


@dataclass(frozen=True)
class StarClass:
    r: int


@dataclass(frozen=True)
class GeneralClass:
    """Arbitrary graph optimized over an explicit rate grid by exhaustive
    enumeration.  oracle defaults to the exact evaluator for tagged
    topologies; untagged graphs must supply one (e.g. SimOracle)."""

    topology: Topology
    beta_grid: tuple[float, ...]
    oracle: AgeOracle | None = None


TopologyClass = LineClass | TreeClass | StarClass | GeneralClass


@dataclass(frozen=True)
class SearchSpec:
    """Candidate-set controls for optimize_beta.

    beta_min is the smallest rate the server may commit to: piece endpoints
    below it are lifted to the floor when the floor lies inside the piece and
    discarded otherwise, and it stands in for the k=1 star regime's left
    endpoint (whose true infimum is 0, where no positive rate exists).
    k_max defaults to ceil(p * (L-1) * (1/beta_min + 1)), the largest spacing
    whose piece reaches the floor, so an explicit k_max only matters when it
    is tighter.  General-class grids are taken verbatim.  cap bounds
    exhaustive enumeration for general graphs.
    """

    k_min: int = 1
    k_max: int | None = None
    beta_min: float = 1e-3
    cap: int = 16

    def __post_init__(self) -> None:
        if self.k_min < 1:
            raise ConfigurationError(f"k_min must be >= 1, got {self.k_min}")
        if self.k_max is not None and self.k_max < self.k_min:
            raise ConfigurationError(f"k_max must be >= k_min, got {self.k_max}")
        if not 0.0 < self.beta_min <= 1.0:
            raise ConfigurationError(f"beta_min must be in (0, 1], got {self.beta_min}")


@dataclass(frozen=True)
class Candidate:
    beta: float
    f_s: float
    utility: float
    label: str


@dataclass(frozen=True)
class EquilibriumReport:
    """Stackelberg solution: the winning rate, its induced stable profile
    (when materializable), and every candidate examined."""

    beta_star: float
    f_s: float
    utility: float
    label: str
    profile: SubscriptionProfile | None
    candidates: tuple[Candidate, ...]


def _resolved_k_max(params: SystemParams, search: SearchSpec) -> int:
    if search.k_max is not None:
        return search.k_max
    # largest K whose beta*(K) still clears the rate floor
    scale = params.p * (params.L - 1.0)
    return max(search.k_min, math.ceil(scale * (1.0 / search.beta_min + 1.0)))


def _pick(candidates: list[Candidate]) -> Candidate:
    if not candidates:
        raise InfeasibleSearchError(
            "no candidate rate lies in (0, 1]; every regime threshold is "
            "unachievable or needs beta > 1"
        )
    # max utility; ties resolved toward the cheaper (smaller) rate
    return min(candidates, key=lambda c: (-c.utility, c.beta))


def optimize_beta(
    topology_class: TopologyClass,
    params: SystemParams,
    cost: CostFunction,
    search: SearchSpec = SearchSpec(),
) -> EquilibriumReport:
    """Best committed sampling rate against the induced stable profile.

    The subscriber fraction is piecewise constant in beta with known left
    endpoints, and any non-decreasing cost is minimized at a piece's left
    endpoint, so those endpoints are the complete candidate set:

    * line/tree: beta*(K) over the spacing window (pieces where F_S = 1/K,
      resp. (r-1)/(r**K - 1));
    * star: beta_min and each regime threshold (pieces where F_S = k/(r+1),
      then 1 at the all-subscribe threshold);
    * general: the supplied explicit grid, each point scored by exhaustive
      enumeration.

    beta is taken from the candidates, never from params.
    """
    if isinstance(topology_class, (LineClass, TreeClass)):
        return _optimize_spacing_family(topology_class, params, cost, search)
    if isinstance(topology_class, StarClass):
        return _optimize_star(topology_class, params, cost, search)
    if isinstance(topology_class, GeneralClass):
        return _optimize_general(topology_class, params, cost, search)
    raise ConfigurationError(f"unknown topology class {topology_class!r}")


def _optimize_spacing_family(
    topology_class: LineClass | TreeClass,
    params: SystemParams,
    cost: CostFunction,
    search: SearchSpec,
) -> EquilibriumReport:
    is_tree = isinstance(topology_class, TreeClass)

    def fraction_at(K: int) -> float:
        if is_tree:
            r = topology_class.r
            return (r - 1) / (r**K - 1)
        return 1.0 / K

    candidates: list[Candidate] = []
    if params.L == 1.0:
        # every node must subscribe at any rate; cheapest rate wins
        beta = search.beta_min
        candidates.append(Candidate(beta, 1.0, server_utility(1.0, beta, cost), "K=1"))
    else:
        k_max = _resolved_k_max(params, search)
        k_floor = analytic.line_k_star(params.with_beta(search.beta_min))
        for K in range(search.k_min, k_max + 1):
            rate = analytic.line_beta_star(K, params)
            if rate.feasible and rate.value >= search.beta_min:
                beta = rate.value
            elif K == k_floor:
                # the floor falls inside this spacing's piece
                beta = search.beta_min
            else:
                continue
            f_s = fraction_at(K)
            candidates.append(Candidate(beta, f_s, server_utility(f_s, beta, cost), f"K={K}"))

    winner = _pick(candidates)
    best_k = int(winner.label.removeprefix("K="))
    profile = None
    if isinstance(topology_class, LineClass) and topology_class.n is not None:
        profile = analytic.line_periodic_profile(topology_class.n, best_k)
    elif is_tree and topology_class.depth is not None:
        topo = Topology.tree(topology_class.r, topology_class.depth)
        profile = analytic.tree_level_profile(topo, best_k)
    return EquilibriumReport(
        beta_star=winner.beta,
        f_s=winner.f_s,
        utility=winner.utility,
        label=winner.label,
        profile=profile,
        candidates=tuple(candidates),
    )


def _optimize_star(
    topology_class: StarClass,
    params: SystemParams,
    cost: CostFunction,
    search: SearchSpec,
) -> EquilibriumReport:
    r = topology_class.r
    candidates: list[Candidate] = []
    profiles: dict[str, SubscriptionProfile] = {}

    if params.L == 1.0:
        beta = search.beta_min
        label = "all"
        candidates.append(Candidate(beta, 1.0, server_utility(1.0, beta, cost), label))
        profiles[label] = analytic.star_profile(r, r, center=True)
    else:
        thresholds = analytic.star_thresholds(params, r)
        for k in range(1, r + 1):
            if k == 1:
                beta = search.beta_min
            else:
                rate = thresholds.beta_k[k - 2]
                if not rate.feasible:
                    continue
                beta = max(rate.value, search.beta_min)
            # the regime's piece is right-open at beta_k; a floor at or past
            # it pushes the candidate out of the piece entirely
            hi = thresholds.beta_k[k - 1]
            if hi.is_finite and beta >= hi.value:
                continue
            if beta > 1.0:
                continue
            f_s = k / (r + 1)
            label = f"k={k}"
            candidates.append(Candidate(beta, f_s, server_utility(f_s, beta, cost), label))
            profiles[label] = analytic.star_profile(r, k)
        if thresholds.beta_r.feasible:
            beta = max(thresholds.beta_r.value, search.beta_min)
            if beta <= 1.0:
                label = "all"
                candidates.append(Candidate(beta, 1.0, server_utility(1.0, beta, cost), label))
                profiles[label] = analytic.star_profile(r, r, center=True)

    winner = _pick(candidates)
    return EquilibriumReport(
        beta_star=winner.beta,
        f_s=winner.f_s,
        utility=winner.utility,
        label=winner.label,
        profile=profiles[winner.label],
        candidates=tuple(candidates),
    )


def _optimize_general(
    topology_class: GeneralClass,
    params: SystemParams,
    cost: CostFunction,
    search: SearchSpec,
) -> EquilibriumReport:
    topology = topology_class.topology
    oracle = topology_class.oracle
    if oracle is None:
        if topology.kind == "general":
            raise ConfigurationError(
                "untagged topology has no exact evaluator; supply an oracle "
                "(e.g. SimOracle) in GeneralClass"
            )
        oracle = AnalyticOracle()
    if not topology_class.beta_grid:
        raise ConfigurationError("general optimization needs a nonempty beta grid")

    candidates: list[Candidate] = []
    profiles: dict[str, SubscriptionProfile] = {}
    for beta in sorted(topology_class.beta_grid):
        run = params.with_beta(beta)
        stable = enumerate_stable_profiles(topology, run, oracle, cap=search.cap)
        if not stable:
            continue
        profile, f_s = server_preferred(v.profile for v in stable)
        label = f"beta={beta:.10g}"
        candidates.append(Candidate(beta, f_s, server_utility(f_s, beta, cost), label))
        profiles[label] = profile
    if not candidates:
        raise InfeasibleSearchError("no grid rate admits any AC-stable profile")
    winner = _pick(candidates)
    return EquilibriumReport(
        beta_star=winner.beta,
        f_s=winner.f_s,
        utility=winner.utility,
        label=winner.label,
        profile=profiles[winner.label],
        candidates=tuple(candidates),
    )
