"""Slotted Monte Carlo engine for version-age gossip.

Determinism contract: replication i draws its entire randomness from the
PCG64 stream seeded by SeedSequence(master_seed, spawn_key=(i,)), in a fixed
order (one uniform vector per slot: event, server sampling, then one entry
per edge in topology order).  Per-replication statistics are assembled into a
replication-indexed matrix before any reduction, so the estimate is
bit-identical for any worker count or internal batch size.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    SubscriptionProfile,
    SystemParams,
    Topology,
    check_dimensions,
    divergent_nodes,
)

# Memory budget for one block's pre-drawn uniforms.
_BUFFER_BYTES = 64 * 1024 * 1024
_TIME_CHUNK = 1024


@dataclass(frozen=True)
class SimConfig:
    """Execution parameters for one estimate.

    burn_in defaults to horizon // 10; only states after it enter the
    per-replication time average.  workers > 1 fans replications out to a
    process pool (contiguous index ranges) without changing any result bit.
    """

    horizon: int
    replications: int
    master_seed: int = 0
    burn_in: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.replications < 1:
            raise ConfigurationError(f"replications must be >= 1, got {self.replications}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.horizon // 10)
        if not 0 <= self.burn_in < self.horizon:
            raise ConfigurationError(
                f"burn_in must be in [0, horizon), got {self.burn_in} for horizon {self.horizon}"
            )


@dataclass(frozen=True)
class SimState:
    """Instantaneous ages: the server's and every node's."""

    server_age: int
    node_ages: tuple[int, ...]

    @classmethod
    def zeros(cls, n: int) -> "SimState":
        return cls(0, (0,) * n)


@dataclass(frozen=True)
class AgeEstimate:
    """Monte Carlo estimate of per-node expected ages.

    mean and ci_half_width (95%, normal approximation over per-replication
    time averages) are per-node arrays.  Structurally divergent nodes (no
    path from any subscriber) carry mean = ci_half_width = inf and a True
    divergent flag; their sample paths grow without bound, so no finite
    estimate exists.
    """

    mean: np.ndarray
    ci_half_width: np.ndarray
    replications: int
    horizon: int
    burn_in: int
    master_seed: int
    divergent: np.ndarray

    @property
    def any_divergent(self) -> bool:
        return bool(self.divergent.any())


def step(
    state: SimState,
    topology: Topology,
    profile: SubscriptionProfile,
    params: SystemParams,
    rng: np.random.Generator,
) -> SimState:
    """Advance one slot synchronously from slot-t values.

    Each node keeps the freshest copy offered this slot: its own, the
    server's (if subscribed), and each in-neighbor whose edge delivered.
    Every age then grows by one if the source gained a version.  The server
    resets to the source (age U_E) when its sampling succeeds.
    """
    check_dimensions(topology, profile)
    if len(state.node_ages) != topology.n:
        raise ConfigurationError(
            f"state has {len(state.node_ages)} ages but topology has {topology.n} nodes"
        )
    m = len(topology.edges)
    u = rng.random(2 + m)
    event = u[0] < params.p_e
    sampled = u[1] < params.beta

    ages = state.node_ages
    new = list(ages)
    for i in profile.subscribers:
        if state.server_age < new[i]:
            new[i] = state.server_age
    for e_idx, (j, i) in enumerate(topology.edges):
        if u[2 + e_idx] < params.p and ages[j] < new[i]:
            new[i] = ages[j]

    inc = 1 if event else 0
    server = (0 if sampled else state.server_age) + inc
    return SimState(server, tuple(v + inc for v in new))


def _replication_generators(master_seed: int, lo: int, hi: int) -> list[np.random.Generator]:
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(i,))))
        for i in range(lo, hi)
    ]


def _block_size(width: int) -> int:
    by_memory = _BUFFER_BYTES // (_TIME_CHUNK * width * 8)
    return int(min(4096, max(32, by_memory)))


def _run_block(
    topology: Topology,
    profile: SubscriptionProfile,
    params: SystemParams,
    horizon: int,
    burn_in: int,
    gens: list[np.random.Generator],
    record: bool = False,
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray] | None]:
    """Run one batch of replications, vectorized across the batch axis.

    Every lane evolves from its own stream with elementwise ops only, so
    batch composition cannot influence any lane's values.  Returns the
    (B, n) matrix of per-replication time averages; with record=True also the
    full trajectories (server (B, T+1), ages (B, T+1, n), uniforms
    (B, T, 2+m)) for invariant checking.
    """
    B = len(gens)
    n = topology.n
    edges = topology.edges
    width = 2 + len(edges)
    sub_idx = np.fromiter(profile.subscribers, dtype=np.intp, count=len(profile.subscribers))

    server = np.zeros(B, dtype=np.int64)
    ages = np.zeros((B, n), dtype=np.int64)
    sums = np.zeros((B, n), dtype=np.int64)

    t_chunk = min(_TIME_CHUNK, horizon)
    buf = np.empty((t_chunk, B, width), dtype=np.float64)

    traj = None
    if record:
        server_traj = np.zeros((B, horizon + 1), dtype=np.int64)
        ages_traj = np.zeros((B, horizon + 1, n), dtype=np.int64)
        u_traj = np.empty((B, horizon, width), dtype=np.float64)
        traj = (server_traj, ages_traj, u_traj)

    done = 0
    while done < horizon:
        span = min(t_chunk, horizon - done)
        for b, g in enumerate(gens):
            buf[:span, b, :] = g.random((span, width))
        if record:
            traj[2][:, done : done + span, :] = buf[:span].transpose(1, 0, 2)
        for s in range(span):
            u = buf[s]
            event = u[:, 0] < params.p_e
            sampled = u[:, 1] < params.beta

            new = ages.copy()
            if sub_idx.size:
                new[:, sub_idx] = np.minimum(ages[:, sub_idx], server[:, None])
            for e_idx, (j, i) in enumerate(edges):
                delivered = u[:, 2 + e_idx] < params.p
                col = new[:, i]
                np.minimum(col, np.where(delivered, ages[:, j], col), out=col)

            inc = event.astype(np.int64)
            new += inc[:, None]
            server = np.where(sampled, 0, server) + inc
            ages = new

            t_next = done + s + 1
            if t_next > burn_in:
                sums += ages
            if record:
                traj[0][:, t_next] = server
                traj[1][:, t_next, :] = ages
        done += span

    averages = sums / float(horizon - burn_in)
    return averages, traj


def _chunk_worker(args) -> tuple[int, np.ndarray]:
    topology, profile, params, horizon, burn_in, master_seed, lo, hi = args
    width = 2 + len(topology.edges)
    block = _block_size(width)
    out = np.empty((hi - lo, topology.n), dtype=np.float64)
    pos = lo
    while pos < hi:
        end = min(pos + block, hi)
        gens = _replication_generators(master_seed, pos, end)
        averages, _ = _run_block(topology, profile, params, horizon, burn_in, gens)
        out[pos - lo : end - lo] = averages
        pos = end
    return lo, out


def estimate_ages(
    topology: Topology,
    profile: SubscriptionProfile,
    params: SystemParams,
    config: SimConfig,
) -> AgeEstimate:
    """Estimate every node's expected age under the given profile.

    Each replication starts from all-zero ages, runs `horizon` slots, and
    contributes the time average of its post-burn-in states; the estimate is
    the replication mean of those averages, reduced in replication order.
    """
    check_dimensions(topology, profile)
    diverged = np.array(divergent_nodes(topology, profile), dtype=bool)

    R = config.replications
    per_rep = np.empty((R, topology.n), dtype=np.float64)
    chunks = _split(R, config.workers)
    tasks = [
        (topology, profile, params, config.horizon, config.burn_in, config.master_seed, lo, hi)
        for lo, hi in chunks
    ]
    if config.workers == 1 or len(tasks) == 1:
        results = [_chunk_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_chunk_worker, tasks))
    for lo, block in results:
        per_rep[lo : lo + block.shape[0]] = block

    mean = per_rep.mean(axis=0)
    if R >= 2:
        ci = 1.96 * per_rep.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        ci = np.full(topology.n, np.inf)
    mean = np.where(diverged, np.inf, mean)
    ci = np.where(diverged, np.inf, ci)
    return AgeEstimate(
        mean=mean,
        ci_half_width=ci,
        replications=R,
        horizon=config.horizon,
        burn_in=int(config.burn_in),
        master_seed=config.master_seed,
        divergent=diverged,
    )


def _split(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    base, extra = divmod(total, parts)
    bounds = []
    lo = 0
    for i in range(parts):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def alternate_age(
    node: int,
    topology: Topology,
    profile: SubscriptionProfile,
    params: SystemParams,
    config: SimConfig,
) -> AgeEstimate:
    """Estimate ages after flipping one node's subscription.

    The entry for `node` is its unilateral-deviation age; other entries
    describe the counterfactual network and are incidental.
    """
    return estimate_ages(topology, profile.flip(node), params, config)


def simulate_trajectories(
    topology: Topology,
    profile: SubscriptionProfile,
    params: SystemParams,
    horizon: int,
    replications: int,
    master_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full recorded runs for validation: (server (R, T+1), ages (R, T+1, n),
    uniforms (R, T, 2+m)).  Streams are identical to estimate_ages's."""
    check_dimensions(topology, profile)
    gens = _replication_generators(master_seed, 0, replications)
    _, traj = _run_block(
        topology, profile, params, horizon, burn_in=0, gens=gens, record=True
    )
    assert traj is not None
    return traj
