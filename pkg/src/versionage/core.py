"""Shared primitives for the version-age gossip model.

A single source holds the latest version of a piece of information.  Time is
slotted: in each slot the source advances its version with probability p_e,
the server samples the source with probability beta, and every directed
gossip edge independently carries a copy with probability p.  A node's
version age is the number of versions it lags behind the source.  Nodes
either subscribe to the server (receiving its copy every slot) or free-ride
on gossip from their in-neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property


class ConfigurationError(ValueError):
    """Invalid parameters, topology, profile, or run configuration."""


class UnsupportedTopologyError(ConfigurationError):
    """An operation needs a line/tree/star tag but got a general graph."""


class EnumerationCapError(RuntimeError):
    """Exhaustive profile enumeration would exceed the node cap."""


class NoStableProfileError(RuntimeError):
    """No subscription profile survives the stability check."""


class InfeasibleSearchError(RuntimeError):
    """Every optimizer candidate fell outside the feasible rate domain."""


@dataclass(frozen=True)
class SystemParams:
    """Model probabilities and the age-tolerance multiplier.

    p_e   per-slot probability that the source gains a new version
    beta  per-slot probability that the server samples the source
    p     per-slot success probability of each gossip edge
    L     tolerance multiplier: a non-subscriber accepts age below L times
          the subscriber age
    """

    p_e: float
    beta: float
    p: float
    L: float

    def __post_init__(self) -> None:
        for name in ("p_e", "beta", "p"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigurationError(f"{name} must be in (0, 1], got {v!r}")
        if not self.L >= 1.0:
            raise ConfigurationError(f"L must be >= 1, got {self.L!r}")

    def with_beta(self, beta: float) -> "SystemParams":
        return SystemParams(self.p_e, beta, self.p, self.L)


@dataclass(frozen=True)
class ExtendedRate:
    """A sampling-rate threshold: a positive real, or +inf with a reason.

    Thresholds computed from closed forms can leave the meaningful domain in
    two distinct ways, and callers need to tell them apart:

    * the defining denominator is nonpositive, so the constraint never binds
      for any rate: value is +inf and ``reason`` says why;
    * the formula yields a finite value above 1, i.e. the constraint would
      only bind at a rate no sampler can realize: the value is kept finite
      (``feasible`` is False) with a reason, never collapsed to +inf.
    """

    value: float
    reason: str = ""

    def __post_init__(self) -> None:
        if math.isnan(self.value):
            raise ConfigurationError("rate cannot be NaN")
        if self.value <= 0.0:
            raise ConfigurationError(f"finite rate must be positive, got {self.value!r}")

    @classmethod
    def finite(cls, value: float, reason: str = "") -> "ExtendedRate":
        if not math.isfinite(value):
            raise ConfigurationError("use ExtendedRate.infinite for non-finite rates")
        if value > 1.0 and not reason:
            reason = "needs-beta-above-1"
        return cls(value, reason)

    @classmethod
    def infinite(cls, reason: str) -> "ExtendedRate":
        return cls(math.inf, reason)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)

    @property
    def feasible(self) -> bool:
        """True when the threshold is an actual rate: finite and within (0, 1]."""
        return self.is_finite and self.value <= 1.0


def server_age(p_e: float, beta: float) -> float:
    """Long-run expected version age of the server, p_e / beta."""
    if beta <= 0.0:
        raise ConfigurationError(f"beta must be positive, got {beta!r}")
    return p_e / beta


def subscriber_age(p_e: float, beta: float) -> float:
    """Long-run expected age of any subscriber: the server's age plus one
    slot of staleness, p_e * (1/beta + 1)."""
    return server_age(p_e, beta) + p_e


def ac_threshold(params: SystemParams) -> float:
    """Age ceiling for a content non-subscriber: L times the subscriber age."""
    return params.L * subscriber_age(params.p_e, params.beta)


def _line_edges(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((k, k + 1) for k in range(n - 1))


def _tree_edges(r: int, n: int) -> tuple[tuple[int, int], ...]:
    # heap layout: children of v are r*v + 1 .. r*v + r
    out = []
    for v in range(n):
        for c in range(r * v + 1, r * v + r + 1):
            if c < n:
                out.append((v, c))
    return tuple(out)


def _star_edges(r: int) -> tuple[tuple[int, int], ...]:
    out = []
    for i in range(1, r + 1):
        out.append((0, i))
        out.append((i, 0))
    return tuple(out)


@dataclass(frozen=True)
class Topology:
    """A directed gossip graph with an optional structural class tag.

    kind is one of "line", "tree", "star", "general".  Tagged topologies are
    validated against their canonical edge sets so the closed-form solvers
    can trust the structure:

    * line: nodes 0..n-1, edges (k, k+1); node 0 is the head.
    * tree: complete r-ary out-tree in heap layout.  ``depth`` counts levels
      including the root, so n = (r**depth - 1) // (r - 1).
    * star: center 0 and r peripherals with bidirectional edges.
    """

    kind: str
    n: int
    edges: tuple[tuple[int, int], ...]
    r: int | None = None
    depth: int | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError(f"topology needs at least one node, got n={self.n}")
        seen = set()
        for e in self.edges:
            j, i = e
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise ConfigurationError(f"edge {e} out of range for n={self.n}")
            if j == i:
                raise ConfigurationError(f"self-loop {e} not allowed")
            if e in seen:
                raise ConfigurationError(f"duplicate edge {e}")
            seen.add(e)
        if self.kind == "line":
            if self.edges != _line_edges(self.n):
                raise ConfigurationError("line tag requires edges (k, k+1) in order")
        elif self.kind == "tree":
            if self.r is None or self.depth is None:
                raise ConfigurationError("tree tag requires r and depth")
            if self.r < 2:
                raise ConfigurationError(f"tree fan-out must be >= 2, got r={self.r}")
            if self.depth < 1:
                raise ConfigurationError(f"tree needs at least one level, got depth={self.depth}")
            expected_n = (self.r**self.depth - 1) // (self.r - 1)
            if self.n != expected_n:
                raise ConfigurationError(
                    f"complete {self.r}-ary tree with {self.depth} levels has "
                    f"{expected_n} nodes, got n={self.n}"
                )
            if self.edges != _tree_edges(self.r, self.n):
                raise ConfigurationError("tree tag requires heap-layout edges")
        elif self.kind == "star":
            if self.r is None or self.r < 1:
                raise ConfigurationError("star tag requires r >= 1 peripherals")
            if self.n != self.r + 1:
                raise ConfigurationError(f"star with r={self.r} has {self.r + 1} nodes, got n={self.n}")
            if self.edges != _star_edges(self.r):
                raise ConfigurationError("star tag requires center<->peripheral edges")
        elif self.kind != "general":
            raise ConfigurationError(f"unknown topology kind {self.kind!r}")

    @classmethod
    def line(cls, n: int) -> "Topology":
        return cls("line", n, _line_edges(n))

    @classmethod
    def tree(cls, r: int, depth: int) -> "Topology":
        if r < 2 or depth < 1:
            raise ConfigurationError(f"tree requires r >= 2 and depth >= 1, got r={r}, depth={depth}")
        n = (r**depth - 1) // (r - 1)
        return cls("tree", n, _tree_edges(r, n), r=r, depth=depth)

    @classmethod
    def star(cls, r: int) -> "Topology":
        return cls("star", r + 1, _star_edges(r), r=r)

    @classmethod
    def general(cls, n: int, edges: tuple[tuple[int, int], ...]) -> "Topology":
        return cls("general", n, tuple(edges))

    @cached_property
    def in_neighbors(self) -> tuple[tuple[int, ...], ...]:
        ins: list[list[int]] = [[] for _ in range(self.n)]
        for j, i in self.edges:
            ins[i].append(j)
        return tuple(tuple(v) for v in ins)

    @cached_property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        outs: list[list[int]] = [[] for _ in range(self.n)]
        for j, i in self.edges:
            outs[j].append(i)
        return tuple(tuple(v) for v in outs)

    def tree_parent(self, v: int) -> int | None:
        if self.kind != "tree":
            raise UnsupportedTopologyError("tree_parent needs a tree tag")
        if v == 0:
            return None
        assert self.r is not None
        return (v - 1) // self.r

    def tree_level(self, v: int) -> int:
        if self.kind != "tree":
            raise UnsupportedTopologyError("tree_level needs a tree tag")
        level = 0
        while v != 0:
            v = (v - 1) // self.r  # type: ignore[operator]
            level += 1
        return level

    def reachable_from(self, sources: tuple[int, ...]) -> tuple[bool, ...]:
        """Nodes reachable from ``sources`` along directed edges (sources included)."""
        seen = [False] * self.n
        stack = [s for s in sources if 0 <= s < self.n]
        for s in stack:
            seen[s] = True
        while stack:
            v = stack.pop()
            for w in self.out_neighbors[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        return tuple(seen)


@dataclass(frozen=True)
class SubscriptionProfile:
    """Per-node subscription actions, 1 = subscribes to the server."""

    actions: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(a not in (0, 1) for a in self.actions):
            raise ConfigurationError("actions must be 0 or 1")

    @classmethod
    def from_string(cls, bits: str) -> "SubscriptionProfile":
        if not bits or any(c not in "01" for c in bits):
            raise ConfigurationError(f"profile string must be nonempty 0/1, got {bits!r}")
        return cls(tuple(int(c) for c in bits))

    @property
    def n(self) -> int:
        return len(self.actions)

    @property
    def subscribers(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.actions) if a == 1)

    @property
    def subscriber_count(self) -> int:
        return sum(self.actions)

    def fraction(self) -> float:
        return self.subscriber_count / self.n

    def flip(self, node: int) -> "SubscriptionProfile":
        if not 0 <= node < self.n:
            raise ConfigurationError(f"node {node} out of range for n={self.n}")
        acts = list(self.actions)
        acts[node] = 1 - acts[node]
        return SubscriptionProfile(tuple(acts))

    def to_string(self) -> str:
        return "".join(str(a) for a in self.actions)


def check_dimensions(topology: Topology, profile: SubscriptionProfile) -> None:
    if profile.n != topology.n:
        raise ConfigurationError(
            f"profile has {profile.n} actions but topology has {topology.n} nodes"
        )


def divergent_nodes(topology: Topology, profile: SubscriptionProfile) -> tuple[bool, ...]:
    """Nodes whose age grows without bound: no path from any subscriber.

    Subscribers themselves are always fed by the server and never divergent.
    """
    check_dimensions(topology, profile)
    return tuple(
        not ok for ok in topology.reachable_from(profile.subscribers)
    )
