"""Sequential balls-into-bins allocation on a graph and its load metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels, rng
from .graph import Graph, pair_hops
from .policy import PolicyKind, SamplingTable, build_sampling_table

__all__ = [
    "ARRIVAL_MODELS",
    "InvalidArrival",
    "EmptyTrace",
    "StaticState",
    "LoadDistribution",
    "AllocationTrace",
    "StaticResult",
    "run_static",
    "simulate_final_loads",
    "draw_origins",
    "load_distribution",
    "total_variation",
    "average_request_distance",
    "max_load",
    "mean_distribution",
    "tv_evolution",
]

ARRIVAL_MODELS = ("uniform", "spatial")


class InvalidArrival(ValueError):
    pass


class EmptyTrace(ValueError):
    pass


@dataclass
class StaticState:
    loads: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, n: int) -> "StaticState":
        return cls(np.zeros(n, dtype=np.int64), 0)


@dataclass(frozen=True)
class LoadDistribution:
    """Probability mass over integer values 0..len(probs)-1."""

    probs: np.ndarray

    @classmethod
    def from_mapping(cls, mapping: dict[int, float]) -> "LoadDistribution":
        size = max(mapping) + 1 if mapping else 1
        p = np.zeros(size)
        for i, v in mapping.items():
            p[i] = v
        return cls(p)

    def __getitem__(self, i: int) -> float:
        return float(self.probs[i]) if 0 <= i < len(self.probs) else 0.0

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(self.probs[i]) for i in np.flatnonzero(self.probs)}

    @property
    def support_max(self) -> int:
        nz = np.flatnonzero(self.probs)
        return int(nz[-1]) if len(nz) else 0

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def tail(self) -> np.ndarray:
        """P(X >= i) for i = 0..len-1."""
        return np.cumsum(self.probs[::-1])[::-1]


@dataclass
class AllocationTrace:
    """Per-job records; ``level`` is the destination load just before placement."""

    origin: np.ndarray
    peer: np.ndarray
    dest: np.ndarray
    hop: np.ndarray
    level: np.ndarray

    def __len__(self) -> int:
        return len(self.origin)


@dataclass
class StaticResult:
    state: StaticState
    trace: AllocationTrace
    snapshots: dict[int, LoadDistribution] = field(default_factory=dict)


def draw_origins(g: Graph, count: int, arrivals: str, gen: np.random.Generator) -> np.ndarray:
    """Origin server of each job.

    ``uniform`` picks a server uniformly. ``spatial`` places the user uniformly
    on the graph's support (line [0, L_max) or circle) and picks the nearest
    server, lower id on ties.
    """
    if arrivals == "uniform":
        u = np.floor(gen.random(count) * g.n).astype(np.int64)
        return np.minimum(u, g.n - 1)
    if arrivals != "spatial":
        raise InvalidArrival(f"unknown arrival model {arrivals!r}")
    topo = g.topology
    if g.embedding is None or topo is None or topo.kind not in ("spatial-line", "spatial-ring"):
        raise InvalidArrival("spatial arrivals need a spatial line or spatial ring graph")
    pos = np.asarray(g.embedding)
    order = np.argsort(pos, kind="stable")
    sp = pos[order]
    if topo.kind == "spatial-line":
        x = gen.random(count) * float(topo.param)
        right = np.clip(np.searchsorted(sp, x), 0, g.n - 1)
        left = np.clip(right - 1, 0, g.n - 1)
        dl, dr = np.abs(x - sp[left]), np.abs(sp[right] - x)
    else:
        period = 2 * math.pi
        x = gen.random(count) * period
        idx = np.searchsorted(sp, x)
        right = idx % g.n
        left = (idx - 1) % g.n
        dl = np.mod(x - sp[left], period)
        dr = np.mod(sp[right] - x, period)
    pick_left = (dl < dr) | ((dl == dr) & (order[left] < order[right]))
    return np.where(pick_left, order[left], order[right]).astype(np.int64)


def _streams(seed: int):
    return (
        rng.generator(seed, "arrivals"),
        rng.bit_generator(seed, "sampling"),
        rng.bit_generator(seed, "ties"),
    )


def run_static(
    g: Graph,
    policy: PolicyKind | SamplingTable,
    m: int,
    arrivals: str = "uniform",
    seed: int = 0,
    snapshots: Iterable[int] | None = None,
) -> StaticResult:
    """Place ``m`` jobs one at a time; each goes to the less loaded of its origin and sampled peer."""
    if m < 1:
        raise ValueError("m must be >= 1")
    table = policy if isinstance(policy, SamplingTable) else build_sampling_table(g, policy)
    arr_gen, samp_bg, tie_bg = _streams(seed)
    origins = draw_origins(g, m, arrivals, arr_gen)
    loads = np.zeros((1, g.n), dtype=np.int32)
    peer = np.empty(m, dtype=np.int32)
    dest = np.empty(m, dtype=np.int32)
    hop = np.empty(m, dtype=np.int32)
    level = np.empty(m, dtype=np.int32)
    kernels.static_kernel(
        table.kernel_spec(), origins, 1, m, samp_bg, tie_bg, loads, peer, dest, hop, level
    )
    unknown = hop < 0
    if unknown.any():
        hop[unknown] = pair_hops(g, origins[unknown], dest[unknown])
    trace = AllocationTrace(origins.astype(np.int32), peer, dest, hop, level)
    state = StaticState(loads[0].astype(np.int64), m)
    snaps = {}
    if snapshots is not None:
        snaps = {int(t): snapshot_distribution(trace, g.n, int(t)) for t in snapshots}
    return StaticResult(state, trace, snaps)


def simulate_final_loads(
    g: Graph, policy: PolicyKind | SamplingTable, m: int, runs: int, seed: int = 0,
    arrivals: str = "uniform",
) -> np.ndarray:
    """Final load vectors of ``runs`` independent allocations, shape (runs, n)."""
    table = policy if isinstance(policy, SamplingTable) else build_sampling_table(g, policy)
    arr_gen, samp_bg, tie_bg = _streams(seed)
    origins = draw_origins(g, runs * m, arrivals, arr_gen)
    loads = np.zeros((runs, g.n), dtype=np.int32)
    kernels.static_kernel(table.kernel_spec(), origins, runs, m, samp_bg, tie_bg, loads)
    return loads


def snapshot_distribution(trace: AllocationTrace, n: int, t: int) -> LoadDistribution:
    """Load distribution right after job ``t`` (1-based) was placed."""
    counts = np.bincount(trace.dest[:t], minlength=n)
    return load_distribution(StaticState(counts, t))


def load_distribution(state: StaticState | np.ndarray | Sequence[int]) -> LoadDistribution:
    loads = np.asarray(state.loads if isinstance(state, StaticState) else state, dtype=np.int64)
    if loads.size == 0:
        return LoadDistribution(np.array([1.0]))
    return LoadDistribution(np.bincount(loads) / loads.size)


def total_variation(a: LoadDistribution, b: LoadDistribution) -> float:
    size = max(len(a.probs), len(b.probs))
    pa = np.zeros(size)
    pb = np.zeros(size)
    pa[: len(a.probs)] = a.probs
    pb[: len(b.probs)] = b.probs
    return 0.5 * float(np.abs(pa - pb).sum())


def average_request_distance(trace: AllocationTrace) -> float:
    if len(trace) == 0:
        raise EmptyTrace("no jobs in trace")
    return float(np.mean(trace.hop))


def max_load(state: StaticState) -> int:
    return int(state.loads.max()) if state.loads.size else 0


def mean_distribution(dists: Sequence[LoadDistribution]) -> LoadDistribution:
    """Pointwise average, used for multi-seed reporting."""
    size = max(len(d.probs) for d in dists)
    acc = np.zeros(size)
    for d in dists:
        acc[: len(d.probs)] += d.probs
    return LoadDistribution(acc / len(dists))


def tv_evolution(a: StaticResult, b: StaticResult) -> np.ndarray:
    """TV distance between the two runs' load distributions after each arrival."""
    if len(a.trace) != len(b.trace) or a.state.loads.size != b.state.loads.size:
        raise ValueError("runs must share n and m")
    return kernels.tv_evolution(a.trace.level, b.trace.level, a.state.loads.size)
