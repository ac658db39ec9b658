"""Run units shared by the CLI and the presets.

Every unit is a top-level function of plain arguments so it can be shipped
to a process pool.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .dynamic_sim import (
    DynamicConfig,
    joint_distance,
    joint_pdf,
    mean_request_distance_dynamic,
    mean_sojourn_time,
    occupancy_pdf,
    run_dynamic,
)
from .graph import Graph, TopologySpec, build_graph
from .policy import PolicyKind, SamplingTable, build_sampling_table
from .static_sim import (
    LoadDistribution,
    average_request_distance,
    load_distribution,
    max_load,
    mean_distribution,
    run_static,
    total_variation,
)

def resolve_k(symbol: str | int, n: int) -> int:
    """Hop radius from a literal or the symbols ``logn`` (rounded natural log, at least 1) and ``n``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if isinstance(symbol, str):
        s = symbol.strip().lower()
        if s == "logn":
            return max(1, round(math.log(n)))
        if s == "n":
            return n
        try:
            symbol = int(s)
        except ValueError:
            raise ValueError(f"k must be an integer, 'logn' or 'n', got {symbol!r}") from None
    if int(symbol) < 1:
        raise ValueError(f"k must be >= 1, got {symbol}")
    return int(symbol)


def make_policy(name: str, k_symbol: str | int | None, n: int) -> PolicyKind:
    if name == "pot":
        return PolicyKind.pot()
    return PolicyKind(name, resolve_k(k_symbol if k_symbol is not None else "logn", n))


def policy_k_label(policy: PolicyKind) -> str:
    return "" if policy.k is None else str(policy.k)


@lru_cache(maxsize=8)
def cached_graph(kind: str, n: int, param: float | None, seed: int) -> Graph:
    spec = TopologySpec(kind, n, param)
    if kind in ("line", "ring"):
        seed = 0
    return build_graph(spec, seed)


@lru_cache(maxsize=8)
def cached_table(kind: str, n: int, param: float | None, seed: int, policy: PolicyKind) -> SamplingTable:
    return build_sampling_table(cached_graph(kind, n, param, seed), policy)


@dataclass(frozen=True)
class StaticTask:
    kind: str
    n: int
    param: float | None
    policy: str
    k: str | int | None
    m: int
    arrivals: str
    seed: int
    graph_seed: int | None = None
    keep_levels: bool = False


def run_static_task(task: StaticTask) -> dict:
    t0 = time.perf_counter()
    gseed = task.seed if task.graph_seed is None else task.graph_seed
    g = cached_graph(task.kind, task.n, task.param, gseed)
    policy = make_policy(task.policy, task.k, task.n)
    table = cached_table(task.kind, task.n, task.param, gseed, policy)
    res = run_static(g, table, task.m, arrivals=task.arrivals, seed=task.seed)
    out = {
        "seed": task.seed,
        "topology": task.kind,
        "params": TopologySpec(task.kind, task.n, task.param).params_label(),
        "policy": task.policy,
        "k": policy_k_label(policy),
        "m": task.m,
        "n": task.n,
        "max_load": max_load(res.state),
        "avg_request_distance": average_request_distance(res.trace),
        "hist": np.bincount(res.state.loads),
        "wall_time": time.perf_counter() - t0,
    }
    if task.keep_levels:
        out["levels"] = res.trace.level
    return out


@dataclass(frozen=True)
class DynamicTask:
    n: int
    lam: float
    mu: float
    policy: str
    k: str | int | None
    arrivals: int
    seed: int
    warmup_fraction: float = 0.1
    pairs: tuple[tuple[int, int], ...] | None = None


def run_dynamic_task(task: DynamicTask) -> dict:
    t0 = time.perf_counter()
    policy = make_policy(task.policy, task.k, max(task.n, 2)) if task.n >= 2 else PolicyKind.pot()
    cfg = DynamicConfig(
        n=task.n,
        lam=task.lam,
        mu=task.mu,
        policy=policy,
        horizon_arrivals=task.arrivals,
        warmup_fraction=task.warmup_fraction,
        joint_pairs=task.pairs,
        seed=task.seed,
    )
    res = run_dynamic(cfg)
    joints = {p: joint_pdf(res, p) for p in cfg.pairs()}
    return {
        "policy": task.policy,
        "k": policy_k_label(policy),
        "n": task.n,
        "lambda": task.lam,
        "mu": task.mu,
        "seed": task.seed,
        "mean_sojourn": mean_sojourn_time(res),
        "mean_request_distance": mean_request_distance_dynamic(res),
        "arrivals": res.total_arrivals,
        "departures": res.total_departures,
        "occupancy": occupancy_pdf(res),
        "joints": joints,
        "config_hash": cfg.config_hash(),
        "excluded_in_system": res.metadata["excluded_in_system"],
        "wall_time": time.perf_counter() - t0,
    }


def pool_map(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Order-preserving map, in-process when ``workers`` <= 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def hist_distribution(hist: np.ndarray) -> LoadDistribution:
    hist = np.asarray(hist, dtype=np.float64)
    return LoadDistribution(hist / hist.sum())


def averaged_distribution(results: Iterable[dict]) -> LoadDistribution:
    return mean_distribution([hist_distribution(r["hist"]) for r in results])


def tv_against(results: Iterable[dict], reference: Iterable[dict]) -> float:
    return total_variation(averaged_distribution(results), averaged_distribution(reference))


def joint_distance_triple(joints: dict) -> tuple[float, float, float]:
    """Distances between the (0,1), (0,2) and (0,8) joint PDFs: (12-13, 12-19, 13-19)."""
    a, b, c = joints[(0, 1)], joints[(0, 2)], joints[(0, 8)]
    return joint_distance(a, b), joint_distance(a, c), joint_distance(b, c)


__all__ = [
    "resolve_k",
    "make_policy",
    "StaticTask",
    "DynamicTask",
    "run_static_task",
    "run_dynamic_task",
    "pool_map",
    "averaged_distribution",
    "tv_against",
    "joint_distance_triple",
    "load_distribution",
]
