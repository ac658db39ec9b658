"""Event-driven simulation of the queueing system with two-choice routing.

Jobs arrive at each server as a Poisson(lambda) stream, probe one peer drawn
from the routing policy, join the shorter of the two queues and are served
FCFS with exponential(mu) service. Occupancy and joint statistics are
time-weighted over the measurement window that follows the warm-up.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels, rng
from .graph import Graph, TopologySpec, build_graph
from .policy import PolicyKind, SamplingTable, build_sampling_table
from .static_sim import LoadDistribution

__all__ = [
    "InvalidConfig",
    "InvalidRate",
    "NoMeasurement",
    "UntrackedPair",
    "NoDepartures",
    "EmptyRecords",
    "DynamicConfig",
    "OccupancyEstimator",
    "JointEstimator",
    "JobRecords",
    "JobSummary",
    "DynamicResult",
    "run_dynamic",
    "occupancy_pdf",
    "server_pdf",
    "mean_field_pot_pdf",
    "mean_field_mean_sojourn",
    "joint_pdf",
    "joint_distance",
    "mean_sojourn_time",
    "mean_request_distance_dynamic",
]

log = logging.getLogger(__name__)

DEFAULT_PAIRS = ((0, 1), (0, 2), (0, 8))


class InvalidConfig(ValueError):
    pass


class InvalidRate(ValueError):
    pass


class NoMeasurement(ValueError):
    pass


class UntrackedPair(KeyError):
    pass


class NoDepartures(ValueError):
    pass


class EmptyRecords(ValueError):
    pass


@dataclass
class DynamicConfig:
    n: int
    lam: float
    mu: float
    policy: PolicyKind
    horizon_arrivals: int
    warmup_fraction: float = 0.1
    joint_pairs: tuple[tuple[int, int], ...] | None = None
    seed: int = 0
    record_jobs: bool = False

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidConfig("n must be >= 1")
        if not (self.lam > 0 and self.mu > 0):
            raise InvalidConfig("lambda and mu must be positive")
        if self.lam >= self.mu:
            log.warning("unstable system: lambda=%s >= mu=%s; refusing to run", self.lam, self.mu)
            raise InvalidConfig(f"unstable system: lambda={self.lam} >= mu={self.mu}")
        if self.horizon_arrivals < 1:
            raise InvalidConfig("horizon_arrivals must be >= 1")
        if not 0 <= self.warmup_fraction < 1:
            raise InvalidConfig("warmup_fraction must lie in [0, 1)")
        for i, j in self.pairs():
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InvalidConfig(f"tracked pair ({i}, {j}) outside 0..{self.n - 1}")

    def pairs(self) -> tuple[tuple[int, int], ...]:
        if self.joint_pairs is not None:
            return tuple((int(i), int(j)) for i, j in self.joint_pairs)
        return tuple(p for p in DEFAULT_PAIRS if max(p) < self.n)

    @property
    def warmup_arrivals(self) -> int:
        return int(math.floor(self.warmup_fraction * self.horizon_arrivals))

    def config_hash(self) -> str:
        d = asdict(self)
        d["policy"] = [self.policy.name, self.policy.k]
        d["joint_pairs"] = [list(p) for p in self.pairs()]
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class OccupancyEstimator:
    """Time spent by each server at each queue length, over the measured window."""

    time_at: np.ndarray  # (n, max_count + 1)
    measured_time: float

    @property
    def n(self) -> int:
        return self.time_at.shape[0]


@dataclass
class JointEstimator:
    pairs: tuple[tuple[int, int], ...]
    time_at: np.ndarray  # (pairs, c, c)
    measured_time: float


@dataclass
class JobRecords:
    arrival: np.ndarray
    origin: np.ndarray
    dest: np.ndarray
    hop: np.ndarray
    departure: np.ndarray  # NaN while still in the system at the horizon

    def __len__(self) -> int:
        return len(self.arrival)


@dataclass
class JobSummary:
    """Streaming totals over post-warm-up jobs."""

    arrivals: int
    departed: int
    sojourn_sum: float
    hop_sum: int


@dataclass
class DynamicResult:
    config: DynamicConfig
    occupancy: OccupancyEstimator
    joint: JointEstimator
    jobs: JobSummary
    records: JobRecords | None
    total_arrivals: int
    total_departures: int
    final_counts: np.ndarray
    t_start: float
    t_end: float
    metadata: dict = field(default_factory=dict)


def run_dynamic(
    cfg: DynamicConfig, graph: Graph | None = None, check: bool = False
) -> DynamicResult:
    """Simulate ``cfg.horizon_arrivals`` arrivals; the ring of size ``cfg.n`` is the default topology.

    ``check`` re-verifies event ordering, queue/departure bookkeeping and job
    conservation after every event (slow; for tests).
    """
    cfg.validate()
    if graph is None:
        graph = build_graph(TopologySpec("ring", cfg.n)) if cfg.n >= 2 else Graph.from_edges(1, [])
    if graph.n != cfg.n:
        raise InvalidConfig(f"graph has {graph.n} vertices, config says n={cfg.n}")
    table = build_sampling_table(graph, cfg.policy)
    return run_dynamic_table(cfg, table, check=check)


def run_dynamic_table(cfg: DynamicConfig, table: SamplingTable, check: bool = False) -> DynamicResult:
    cfg.validate()
    pairs = cfg.pairs()
    pi = np.array([p[0] for p in pairs], dtype=np.int64)
    pj = np.array([p[1] for p in pairs], dtype=np.int64)
    warmup = cfg.warmup_arrivals
    out = kernels.dynamic_kernel(
        table.kernel_spec(need_hops=True),
        float(cfg.lam),
        float(cfg.mu),
        int(cfg.horizon_arrivals),
        warmup,
        rng.bit_generator(cfg.seed, "arrivals"),
        rng.bit_generator(cfg.seed, "sampling"),
        rng.bit_generator(cfg.seed, "ties"),
        rng.bit_generator(cfg.seed, "service"),
        pi,
        pj,
        bool(cfg.record_jobs),
        bool(check),
    )
    measured = out["t_end"] - out["t_start"]
    records = None
    if cfg.record_jobs:
        records = JobRecords(*out["records"])
    in_system = int(out["counts"].sum())
    return DynamicResult(
        config=cfg,
        occupancy=OccupancyEstimator(out["occ"], measured),
        joint=JointEstimator(pairs, out["joint"], measured),
        jobs=JobSummary(
            arrivals=int(out["arrivals"]) - warmup,
            departed=int(out["departed_measured"]),
            sojourn_sum=float(out["sojourn_sum"]),
            hop_sum=int(out["hop_sum"]),
        ),
        records=records,
        total_arrivals=int(out["arrivals"]),
        total_departures=int(out["departures"]),
        final_counts=out["counts"],
        t_start=float(out["t_start"]),
        t_end=float(out["t_end"]),
        metadata={
            "backend": kernels.BACKEND,
            "config_hash": cfg.config_hash(),
            "excluded_in_system": in_system,
        },
    )


# ---- estimators -------------------------------------------------------------


def occupancy_pdf(est: OccupancyEstimator | DynamicResult) -> LoadDistribution:
    """Fraction of server-time spent at each queue length."""
    if isinstance(est, DynamicResult):
        est = est.occupancy
    if not est.measured_time > 0:
        raise NoMeasurement("no measured time")
    mass = est.time_at.sum(axis=0)
    return LoadDistribution(mass / mass.sum())


def server_pdf(est: OccupancyEstimator | DynamicResult, server: int) -> LoadDistribution:
    if isinstance(est, DynamicResult):
        est = est.occupancy
    if not est.measured_time > 0:
        raise NoMeasurement("no measured time")
    row = est.time_at[server]
    return LoadDistribution(row / row.sum())


def joint_pdf(est: JointEstimator | DynamicResult, pair: tuple[int, int]) -> np.ndarray:
    """Normalized time-averaged histogram over (Q_i, Q_j)."""
    if isinstance(est, DynamicResult):
        est = est.joint
    pair = (int(pair[0]), int(pair[1]))
    if pair not in est.pairs:
        raise UntrackedPair(pair)
    if not est.measured_time > 0:
        raise NoMeasurement("no measured time")
    h = est.time_at[est.pairs.index(pair)]
    return h / h.sum()


def joint_distance(a: np.ndarray, b: np.ndarray) -> float:
    rows = max(a.shape[0], b.shape[0])
    cols = max(a.shape[1], b.shape[1])
    pa = np.zeros((rows, cols))
    pb = np.zeros((rows, cols))
    pa[: a.shape[0], : a.shape[1]] = a
    pb[: b.shape[0], : b.shape[1]] = b
    return 0.5 * float(np.abs(pa - pb).sum())


def mean_sojourn_time(records: JobRecords | JobSummary | DynamicResult) -> float:
    """Mean arrival-to-departure time of post-warm-up jobs that departed."""
    if isinstance(records, DynamicResult):
        records = records.jobs
    if isinstance(records, JobSummary):
        if records.departed == 0:
            raise NoDepartures("no departed jobs")
        return records.sojourn_sum / records.departed
    done = ~np.isnan(records.departure)
    if not done.any():
        raise NoDepartures("no departed jobs")
    return float(np.mean(records.departure[done] - records.arrival[done]))


def mean_request_distance_dynamic(records: JobRecords | JobSummary | DynamicResult) -> float:
    if isinstance(records, DynamicResult):
        records = records.jobs
    if isinstance(records, JobSummary):
        if records.arrivals == 0:
            raise EmptyRecords("no measured jobs")
        return records.hop_sum / records.arrivals
    if len(records) == 0:
        raise EmptyRecords("no measured jobs")
    return float(np.mean(records.hop))


# ---- mean-field reference ---------------------------------------------------


def mean_field_tail(lam: float, mu: float, d: int, support_cap: int) -> np.ndarray:
    """T_i = (lam/mu)^((d^i - 1)/(d - 1)) for i = 0..support_cap+1 (geometric when d = 1)."""
    if lam < 0 or mu <= 0 or lam >= mu:
        raise InvalidRate(f"need 0 <= lambda < mu, got lambda={lam}, mu={mu}")
    if d < 1:
        raise InvalidRate("d must be >= 1")
    rho = lam / mu
    i = np.arange(support_cap + 2, dtype=np.float64)
    expo = i if d == 1 else (np.power(float(d), i) - 1) / (d - 1)
    if rho == 0:
        return np.where(i == 0, 1.0, 0.0)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(expo * math.log(rho))


def mean_field_pot_pdf(lam: float, mu: float, d: int = 2, support_cap: int = 50) -> LoadDistribution:
    tail = mean_field_tail(lam, mu, d, support_cap)
    pdf = tail[:-1] - tail[1:]
    pdf[-1] = tail[-2]  # fold P(X >= cap) into the last bin
    return LoadDistribution(pdf)


def mean_field_mean_sojourn(lam: float, mu: float, d: int = 2, support_cap: int = 200) -> float:
    """Little's law on the fixed point: sum_{i>=1} T_i / lambda."""
    tail = mean_field_tail(lam, mu, d, support_cap)
    return float(tail[1:].sum() / lam)
