"""Named experiment presets, each at ``paper`` and ``desk`` scale.

A preset expands into run units, executes them and reduces the results to
tables. Desk budgets (single worker, commodity core) are listed in
``DESK_BUDGET_S``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamic_sim import mean_field_pot_pdf
from .experiments import (
    DynamicTask,
    StaticTask,
    averaged_distribution,
    joint_distance_triple,
    pool_map,
    resolve_k,
    run_dynamic_task,
    run_static_task,
)
from .graph import TopologySpec
from .static_sim import total_variation
from . import kernels

SCALES = ("paper", "desk")


class RunError(RuntimeError):
    """A single run failed; the message carries the run's parameters."""


@dataclass
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)


@dataclass
class Outcome:
    tables: list[Table] = field(default_factory=list)
    runs: list[dict] = field(default_factory=list)

    def table(self, name: str, columns: tuple[str, ...]) -> Table:
        t = Table(name, columns)
        self.tables.append(t)
        return t


def _guard_static(task: StaticTask) -> dict:
    try:
        return run_static_task(task)
    except Exception as exc:  # re-raised with run context
        raise RunError(f"static run {task}: {type(exc).__name__}: {exc}") from exc


def _guard_dynamic(task: DynamicTask) -> dict:
    try:
        return run_dynamic_task(task)
    except Exception as exc:
        raise RunError(f"dynamic run {task}: {type(exc).__name__}: {exc}") from exc


class Runner:
    """Executes run units on the worker pool and logs per-run wall time."""

    def __init__(self, workers: int = 1, outcome: Outcome | None = None):
        self.workers = workers
        self.outcome = outcome if outcome is not None else Outcome()

    def _log(self, tag: str, tasks, results) -> None:
        for t, r in zip(tasks, results):
            self.outcome.runs.append(
                {"kind": tag, "task": repr(t), "seed": t.seed, "wall_time": r["wall_time"]}
            )

    def static(self, tasks: list[StaticTask]) -> list[dict]:
        results = pool_map(_guard_static, tasks, self.workers)
        self._log("static", tasks, results)
        return results

    def dynamic(self, tasks: list[DynamicTask]) -> list[dict]:
        results = pool_map(_guard_dynamic, tasks, self.workers)
        self._log("dynamic", tasks, results)
        return results


# ---- shared static helpers ---------------------------------------------------


def seed_tasks(
    kind: str, n: int, param, policy: str, k, m: int, arrivals: str, seeds: int, base: int,
    seed_offset: int = 0, keep_levels: bool = False,
) -> list[StaticTask]:
    """Run r uses seed base + r (+ seed_offset) on graph seed base + r."""
    return [
        StaticTask(kind, n, param, policy, k, m, arrivals, base + r + seed_offset, base + r, keep_levels)
        for r in range(seeds)
    ]


def default_arrivals(kind: str) -> str:
    return "spatial" if kind in ("spatial-line", "spatial-ring") else "uniform"


def run_rows(results: list[dict]) -> list[tuple]:
    return [
        (r["seed"], r["topology"], r["params"], r["policy"], r["k"], r["m"], r["n"],
         r["max_load"], r["avg_request_distance"])
        for r in results
    ]


RUN_COLUMNS = ("seed", "topology", "params", "policy", "k", "m", "n", "max_load", "avg_request_distance")


def distribution_rows(dist) -> list[tuple]:
    return [(i, float(p)) for i, p in enumerate(dist.probs)]


def _mean(results: list[dict], key: str) -> float:
    return float(np.mean([r[key] for r in results]))


@dataclass
class Comparison:
    """Seed-averaged metrics of one configuration against its POT reference."""

    results: list[dict]
    reference: list[dict]

    @property
    def tv(self) -> float:
        return total_variation(averaged_distribution(self.results), averaged_distribution(self.reference))

    @property
    def request_distance(self) -> float:
        return _mean(self.results, "avg_request_distance")

    @property
    def max_load(self) -> float:
        return _mean(self.results, "max_load")


def compare_grid(
    runner: Runner, configs: list[tuple], policies: list[tuple[str, object]], seeds: int, base: int,
    runs_table: Table | None = None,
) -> dict[tuple, Comparison]:
    """Runs every (kind, n, param, m, arrivals) config under POT and each (policy, k).

    Returns a Comparison per (config, policy, k-label); POT appears with its
    own runs as both sides.
    """
    tasks: list[StaticTask] = []
    index: list[tuple] = []
    for cfg in configs:
        kind, n, param, m, arrivals = cfg
        for r in seed_tasks(kind, n, param, "pot", None, m, arrivals, seeds, base):
            tasks.append(r)
            index.append((cfg, "pot", None))
        for pol, k in policies:
            for r in seed_tasks(kind, n, param, pol, k, m, arrivals, seeds, base):
                tasks.append(r)
                index.append((cfg, pol, k))
    results = runner.static(tasks)
    if runs_table is not None:
        runs_table.rows.extend(run_rows(results))
    grouped: dict[tuple, list[dict]] = {}
    for key, res in zip(index, results):
        grouped.setdefault(key, []).append(res)
    out = {}
    for (cfg, pol, k), res in grouped.items():
        out[(cfg, pol, k)] = Comparison(res, grouped[(cfg, "pot", None)])
    return out


def k_text(k, n: int) -> str:
    return "" if k is None else str(resolve_k(k, n))


# ---- static presets ----------------------------------------------------------


def preset_tradeoff(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    n = 1000
    ks = [2**i for i in range(int(math.log2(n)) + 1)] + [n]
    out = runner.outcome
    runs = out.table("tradeoff_runs.csv", RUN_COLUMNS)
    table = out.table("tradeoff.csv", ("policy", "k", "avg_max_load", "avg_request_distance"))
    for pol in ("unif", "invsq"):
        for k in ks:
            res = runner.static(seed_tasks("line", n, None, pol, k, n, "uniform", seeds, seed))
            runs.rows.extend(run_rows(res))
            table.rows.append((pol, k, _mean(res, "max_load"), _mean(res, "avg_request_distance")))
    return out


def _line_ring_ns(scale: str) -> list[int]:
    return list(range(1000, 10001, 1000)) if scale == "paper" else [250, 500, 1000, 2000]


def preset_deterministic_pdf(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    n = 10000 if scale == "paper" else 1000
    out = runner.outcome
    runs = out.table("deterministic_pdf_runs.csv", RUN_COLUMNS)
    policies = [("unif", "logn"), ("invsq", "logn"), ("invsq", "n")]
    for kind in ("line", "ring"):
        comp = compare_grid(runner, [(kind, n, None, n, "uniform")], policies, seeds, seed, runs)
        for (cfg, pol, k), c in comp.items():
            suffix = "" if k is None else f"_k{k_text(k, n)}"
            t = out.table(f"pdf_{kind}_{pol}{suffix}.csv", ("load", "fraction"))
            t.rows.extend(distribution_rows(averaged_distribution(c.results)))
    return out


def preset_tv_vs_n(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    out = runner.outcome
    runs = out.table("tv_vs_n_runs.csv", RUN_COLUMNS)
    table = out.table("tv_vs_n.csv", ("topology", "policy", "k", "n", "tv_distance"))
    policies = [("unif", "logn"), ("invsq", "logn"), ("invsq", "n"), ("invsq", 1)]
    for kind in ("line", "ring"):
        cfgs = [(kind, n, None, n, "uniform") for n in _line_ring_ns(scale)]
        comp = compare_grid(runner, cfgs, policies, seeds, seed, runs)
        for (cfg, pol, k), c in comp.items():
            if pol != "pot":
                table.rows.append((kind, pol, k_text(k, cfg[1]), cfg[1], c.tv))
    return out


def preset_rd_vs_n(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    out = runner.outcome
    runs = out.table("rd_vs_n_runs.csv", RUN_COLUMNS)
    table = out.table("rd_vs_n.csv", ("topology", "policy", "k", "n", "avg_request_distance"))
    policies = [("unif", "logn"), ("invsq", "logn"), ("invsq", "n")]
    for kind in ("line", "ring"):
        cfgs = [(kind, n, None, n, "uniform") for n in _line_ring_ns(scale)]
        comp = compare_grid(runner, cfgs, policies, seeds, seed, runs)
        for (cfg, pol, k), c in comp.items():
            table.rows.append((kind, pol, k_text(k, cfg[1]), cfg[1], c.request_distance))
    return out


def _er_gammas(n: int) -> list[float]:
    lo = math.log(n) / n
    return [float(g) for g in np.linspace(lo, 2 * lo, 5)]


def _random_params(n: int) -> dict[str, list]:
    return {"er": _er_gammas(n), "rr": list(range(5, 12)), "ba": list(range(1, 8))}


def _mid_random_param(kind: str, n: int):
    return {"er": 2 * math.log(n) / n, "rr": 6, "ba": 3}[kind]


def preset_random_graphs(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    n = 10000 if scale == "paper" else 1000
    ns = list(range(1000, 10001, 3000)) if scale == "paper" else [250, 500, 1000]
    out = runner.outcome
    runs = out.table("random_graphs_runs.csv", RUN_COLUMNS)
    table = out.table(
        "random_graphs.csv",
        ("topology", "params", "policy", "k", "n", "tv_distance", "avg_request_distance"),
    )
    scaling = out.table(
        "random_rd_vs_n.csv", ("topology", "params", "policy", "k", "n", "avg_request_distance")
    )
    policies = [(p, k) for p in ("unif", "invsq") for k in (2, "logn", "n")]
    for kind, params in _random_params(n).items():
        cfgs = [(kind, n, float(p), n, "uniform") for p in params]
        comp = compare_grid(runner, cfgs, policies, seeds, seed, runs)
        for (cfg, pol, k), c in comp.items():
            label = TopologySpec(kind, n, cfg[2]).params_label()
            tv = c.tv if pol != "pot" else 0.0
            table.rows.append((kind, label, pol, k_text(k, n), n, tv, c.request_distance))
        cfgs = [(kind, nn, float(_mid_random_param(kind, nn)), nn, "uniform") for nn in ns]
        comp = compare_grid(runner, cfgs, policies, seeds, seed, runs)
        for (cfg, pol, k), c in comp.items():
            label = TopologySpec(kind, cfg[1], cfg[2]).params_label()
            scaling.rows.append((kind, label, pol, k_text(k, cfg[1]), cfg[1], c.request_distance))
    return out


def preset_spatial_graphs(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    n = 10000 if scale == "paper" else 1000
    ns = list(range(1000, 7001, 1000)) if scale == "paper" else [250, 500, 1000]
    out = runner.outcome
    runs = out.table("spatial_graphs_runs.csv", RUN_COLUMNS)
    rgg = out.table(
        "spatial_rgg.csv",
        ("topology", "params", "policy", "k", "n", "tv_distance", "avg_request_distance"),
    )
    chain = out.table(
        "spatial_vs_n.csv", ("topology", "params", "policy", "k", "n", "tv_distance", "avg_request_distance")
    )
    policies = [(p, k) for p in ("unif", "invsq") for k in ("logn", "n")]
    lo, hi = math.sqrt(math.log(n) / (math.pi * n)), math.sqrt(math.sqrt(n) / (math.pi * n))
    # the threshold radius itself is almost never connected in the bounded square; step above it
    radii = [float(r) for r in np.linspace(lo, hi, 6)[1:]]
    cfgs = [("rgg", n, r, n, "uniform") for r in radii]
    for (cfg, pol, k), c in compare_grid(runner, cfgs, policies, seeds, seed, runs).items():
        label = TopologySpec("rgg", n, cfg[2]).params_label()
        tv = c.tv if pol != "pot" else 0.0
        rgg.rows.append(("rgg", label, pol, k_text(k, n), n, tv, c.request_distance))
    for kind in ("spatial-line", "spatial-ring"):
        cfgs = [
            (kind, nn, float(nn) if kind == "spatial-line" else 1.0, nn, "spatial") for nn in ns
        ]
        for (cfg, pol, k), c in compare_grid(runner, cfgs, policies, seeds, seed, runs).items():
            label = TopologySpec(kind, cfg[1], cfg[2]).params_label()
            tv = c.tv if pol != "pot" else 0.0
            chain.rows.append((kind, label, pol, k_text(k, cfg[1]), cfg[1], tv, c.request_distance))
    return out


def _evolution_topologies(n: int) -> list[tuple[str, float | None]]:
    ln = math.log(n)
    beta = round(2 * ln)
    if (n * beta) % 2:
        beta += 1
    return [
        ("er", 2 * ln / n),
        ("ba", float(max(1, round(ln)))),
        ("rr", float(beta)),
        ("line", None),
        ("ring", None),
        ("spatial-line", float(n)),
        ("spatial-ring", 1.0),
    ]


def preset_tv_evolution(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    n, m = (5000, 10000) if scale == "paper" else (1000, 2000)
    out = runner.outcome
    for pol in ("unif", "invsq"):
        for kind, param in _evolution_topologies(n):
            arr = default_arrivals(kind)
            tasks = seed_tasks(kind, n, param, pol, "logn", m, arr, seeds, seed, keep_levels=True)
            # the POT side of each pair takes the next block of seeds, independent of the policy side
            refs = seed_tasks(kind, n, param, "pot", None, m, arr, seeds, seed, seed_offset=seeds,
                              keep_levels=True)
            res = runner.static(tasks + refs)
            curves = [
                kernels.tv_evolution(a["levels"], b["levels"], n)
                for a, b in zip(res[:seeds], res[seeds:])
            ]
            curve = np.mean(curves, axis=0)
            t = out.table(
                f"evolution_{kind}_{pol}_k{resolve_k('logn', n)}.csv", ("t", "tv_distance")
            )
            t.rows.extend((i + 1, float(v)) for i, v in enumerate(curve))
    return out


# ---- dynamic presets ---------------------------------------------------------


def _horizon(scale: str, n: int) -> int:
    # n*10^5 arrivals, never below 10^7 so small systems stay resolved
    return max(n * 100_000, 10_000_000) if scale == "paper" else 10_000_000


SUMMARY_COLUMNS = (
    "policy", "k", "n", "lambda", "mean_sojourn", "mean_request_distance", "arrivals", "departures",
)


def summary_row(r: dict) -> tuple:
    return (r["policy"], r["k"], r["n"], r["lambda"], r["mean_sojourn"], r["mean_request_distance"],
            r["arrivals"], r["departures"])


def _occupancy_name(r: dict) -> str:
    k = f"_k{r['k']}" if r["k"] else ""
    return f"occupancy_n{r['n']}_{r['policy']}{k}.csv"


def preset_dynamic_pdfs(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    lam, mu = 0.95, 1.0
    if scale == "paper":
        groups = [(1001, (2, 3, 5, 10, 500)), (250, (2, 3, 5, 10)), (10, (2,)), (100, (2,)), (2000, (2,))]
    else:
        groups = [(101, (2, 3, 5, 10, 50)), (250, (2, 3, 5, 10)), (10, (2,))]
    tasks = []
    seen = set()
    for n, ks in groups:
        for pol in ("unif", "invsq"):
            for k in ks:
                if (n, pol, k) not in seen:
                    seen.add((n, pol, k))
                    tasks.append(DynamicTask(n, lam, mu, pol, k, _horizon(scale, n), seed))
    tasks.append(DynamicTask(21, lam, mu, "pot", None, _horizon(scale, 21), seed))
    out = runner.outcome
    summary = out.table("dynamic_pdfs_summary.csv", SUMMARY_COLUMNS)
    for r in runner.dynamic(tasks):
        summary.rows.append(summary_row(r))
        t = out.table(_occupancy_name(r), ("count", "probability"))
        t.rows.extend(distribution_rows(r["occupancy"]))
    mf = out.table("occupancy_meanfield.csv", ("count", "probability"))
    mf.rows.extend(distribution_rows(mean_field_pot_pdf(lam, mu, 2, 50)))
    return out


def preset_dynamic_tables(scale: str, seed: int, seeds: int, runner: Runner) -> Outcome:
    lam, mu = 0.95, 1.0
    if scale == "paper":
        n, ks, joint_ns = 1001, (2, 3, 5, 10, 15, 20, 125, 500), (10, 1000, 2000)
    else:
        n, ks, joint_ns = 101, (2, 3, 5, 10, 15, 20, 50), (10, 101)
    tasks = [
        DynamicTask(n, lam, mu, pol, k, _horizon(scale, n), seed + r)
        for pol in ("unif", "invsq") for k in ks for r in range(seeds)
    ]
    jtasks = [
        DynamicTask(jn, lam, mu, pol, 2, _horizon(scale, jn), seed)
        for pol in ("unif", "invsq") for jn in joint_ns
    ]
    out = runner.outcome
    summary = out.table("summary.csv", SUMMARY_COLUMNS)
    for r in runner.dynamic(tasks):
        summary.rows.append(summary_row(r))
    dist = out.table("joint_distances.csv", ("policy", "k", "n", "d_12_13", "d_12_19", "d_13_19"))
    for r in runner.dynamic(jtasks):
        dist.rows.append((r["policy"], r["k"], r["n"], *joint_distance_triple(r["joints"])))
        for (i, j), h in r["joints"].items():
            t = out.table(f"joint_n{r['n']}_{r['policy']}_k{r['k']}_{i}_{j}.csv", ("qi", "qj", "probability"))
            t.rows.extend(joint_rows(h))
    return out


def joint_rows(h: np.ndarray) -> list[tuple]:
    return [(int(a), int(b), float(h[a, b])) for a, b in zip(*np.nonzero(h))]


@dataclass(frozen=True)
class Preset:
    name: str
    run: Callable[[str, int, int, Runner], Outcome]
    default_seeds: int
    description: str


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in (
        Preset("tradeoff", preset_tradeoff, 10, "max load vs request distance over k on a line"),
        Preset("deterministic-pdf", preset_deterministic_pdf, 10, "load PDFs on line and ring"),
        Preset("tv-vs-n", preset_tv_vs_n, 10, "TV distance to POT vs n on line and ring"),
        Preset("rd-vs-n", preset_rd_vs_n, 10, "request distance vs n on line and ring"),
        Preset("random-graphs", preset_random_graphs, 10, "ER/RR/BA parameter sweeps"),
        Preset("spatial-graphs", preset_spatial_graphs, 10, "RGG radius sweep, spatial line/ring vs n"),
        Preset("tv-evolution", preset_tv_evolution, 10, "TV distance after every arrival"),
        Preset("dynamic-pdfs", preset_dynamic_pdfs, 1, "stationary occupancy PDFs on the ring"),
        Preset("dynamic-tables", preset_dynamic_tables, 1, "sojourn, request-distance and joint-PDF tables"),
    )
}

# measured single-worker desk wall time, seconds (budget: 600 each)
DESK_BUDGET_S = {
    "tradeoff": 5,
    "deterministic-pdf": 2,
    "tv-vs-n": 8,
    "rd-vs-n": 8,
    "random-graphs": 70,
    "spatial-graphs": 15,
    "tv-evolution": 7,
    "dynamic-pdfs": 55,
    "dynamic-tables": 40,
}


def run_preset(name: str, scale: str = "desk", seed: int = 0, seeds: int | None = None,
               workers: int = 1) -> Outcome:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    p = PRESETS[name]
    runner = Runner(workers)
    return p.run(scale, seed, p.default_seeds if seeds is None else seeds, runner)
