"""Command-line harness: ``proxpot {static,dynamic,graph-stats,sweep,preset}``.

Settings come from defaults, then an optional flat ``key = value`` config
file, then explicit flags. Every CSV starts with a ``#`` comment carrying the
base seed and config hash; ``manifest.json`` adds versions and wall times.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .experiments import DynamicTask, resolve_k
from .graph import (
    TopologySpec,
    average_path_length,
    build_graph,
    diameter,
    graph_density,
    read_edgelist,
    write_edgelist,
)
from .presets import (
    PRESETS,
    RUN_COLUMNS,
    SCALES,
    SUMMARY_COLUMNS,
    Outcome,
    Runner,
    RunError,
    averaged_distribution,
    compare_grid,
    default_arrivals,
    distribution_rows,
    joint_rows,
    k_text,
    run_preset,
    summary_row,
)
from .static_sim import mean_distribution

log = logging.getLogger("proxpot")

MODES = ("static", "dynamic", "graph-stats", "sweep", "preset")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    topology: str = "ring"
    n: list[int] = field(default_factory=lambda: [1000])
    param: list[float] = field(default_factory=list)
    m: int | None = None
    policy: list[str] = field(default_factory=lambda: ["pot"])
    k: list[str] = field(default_factory=lambda: ["logn"])
    lam: float | None = None
    mu: float | None = None
    arrivals: int = 10_000_000
    arrival_model: str = "auto"
    warmup: float = 0.1
    seeds: int | None = None
    seed: int = 0
    scale: str = "desk"
    out: str = "results"
    workers: int = 1
    preset: str | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: unknown mode {self.mode!r}")
        if self.mode == "preset":
            if self.preset not in PRESETS:
                raise ConfigError(f"preset: unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
            if self.scale not in SCALES:
                raise ConfigError(f"scale: must be one of {SCALES}")
        if self.seeds is not None and self.seeds < 1:
            raise ConfigError("seeds: must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        for p in self.policy:
            if p not in ("pot", "unif", "invsq"):
                raise ConfigError(f"policy: unknown policy {p!r}")
        for n in self.n:
            for k in self.k:
                try:
                    resolve_k(k, max(n, 2))
                except ValueError as exc:
                    raise ConfigError(f"k: {exc}") from None
        if self.mode in ("static", "dynamic", "graph-stats") and (len(self.n) > 1 or len(self.param) > 1):
            raise ConfigError("n/param: lists are only accepted by 'sweep'")
        if self.mode == "dynamic":
            for name in ("lam", "mu"):
                if getattr(self, name) is None:
                    label = "lambda" if name == "lam" else name
                    raise ConfigError(f"{label}: required field missing for dynamic mode")
        if self.arrival_model not in ("auto", "uniform", "spatial"):
            raise ConfigError(f"arrival-model: unknown model {self.arrival_model!r}")

    def hash(self) -> str:
        d = asdict(self)
        for volatile in ("out", "workers"):
            d.pop(volatile)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


# ---- config file -------------------------------------------------------------

_LIST_INT = ("n",)
_LIST_FLOAT = ("param",)
_LIST_STR = ("policy", "k")
_INT = ("m", "arrivals", "seeds", "seed", "workers")
_FLOAT = ("lam", "mu", "warmup")
_STR = ("mode", "topology", "arrival_model", "scale", "out", "preset")
_ALIASES = {"lambda": "lam", "arrival-model": "arrival_model", "arrival_model": "arrival_model"}


def _field_name(key: str) -> str:
    key = key.strip().lower()
    key = _ALIASES.get(key, key.replace("-", "_"))
    if key not in {f.name for f in fields(ExperimentConfig)}:
        raise KeyError(key)
    return key


def _convert(name: str, raw: str):
    raw = raw.strip()
    if name in _LIST_INT:
        return [int(x) for x in raw.split(",") if x.strip()]
    if name in _LIST_FLOAT:
        return [float(x) for x in raw.split(",") if x.strip()]
    if name in _LIST_STR:
        return [x.strip().lower() for x in raw.split(",") if x.strip()]
    if name in _INT:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if name in _FLOAT:
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        sep = "=" if "=" in body else (":" if ":" in body else None)
        if sep is None:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, value = body.split(sep, 1)
        try:
            name = _field_name(key)
        except KeyError:
            raise ConfigError(f"{source}:{lineno}: unknown field {key.strip()!r}") from None
        try:
            out[name] = _convert(name, value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: field {key.strip()!r}: bad value {value.strip()!r}") from None
        if out[name] == [] or out[name] == "":
            raise ConfigError(f"{source}:{lineno}: field {key.strip()!r} is empty")
    return out


def build_config(mode: str, file_values: dict, flag_values: dict) -> ExperimentConfig:
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    if "mode" in file_values and file_values["mode"] != mode:
        raise ConfigError(f"mode: config file says {file_values['mode']!r} but subcommand is {mode!r}")
    merged["mode"] = mode
    cfg = ExperimentConfig(**merged)
    cfg.validate()
    return cfg


# ---- output ------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(columns, rows, comment: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_outcome(outcome: Outcome, cfg: ExperimentConfig, out_dir: Path, wall: float) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = (
        f"proxpot {__version__} mode={cfg.mode}"
        + (f" preset={cfg.preset} scale={cfg.scale}" if cfg.mode == "preset" else "")
        + f" seed={cfg.seed} config={cfg.hash()}"
    )
    paths = []
    for t in outcome.tables:
        p = out_dir / t.name
        p.write_text(csv_text(t.columns, t.rows, comment))
        paths.append(p)
    seeds = sorted({r["seed"] for r in outcome.runs})
    manifest = {
        "config": asdict(cfg),
        "config_hash": cfg.hash(),
        "seeds": seeds,
        "version": __version__,
        "backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_time_s": wall,
        "files": [p.name for p in paths],
        "runs": outcome.runs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return paths


# ---- modes -------------------------------------------------------------------


def _policy_grid(cfg: ExperimentConfig) -> list[tuple[str, str | None]]:
    grid: list[tuple[str, str | None]] = []
    for p in cfg.policy:
        if p == "pot":
            continue
        grid.extend((p, k) for k in cfg.k)
    return grid


def _params(cfg: ExperimentConfig) -> list[float | None]:
    return list(cfg.param) if cfg.param else [None]


def _arrival_model(cfg: ExperimentConfig) -> str:
    return default_arrivals(cfg.topology) if cfg.arrival_model == "auto" else cfg.arrival_model


def run_static_mode(cfg: ExperimentConfig, runner: Runner) -> Outcome:
    """Runs each policy over the seed fan-out; POT is always run as the TV reference."""
    out = runner.outcome
    seeds = cfg.seeds or 10
    runs = out.table("runs.csv", RUN_COLUMNS)
    summary = out.table(
        "summary.csv",
        ("topology", "params", "n", "m", "policy", "k", "avg_max_load", "avg_request_distance", "tv_vs_pot"),
    )
    configs = [
        (cfg.topology, n, p, cfg.m or n, _arrival_model(cfg)) for n in cfg.n for p in _params(cfg)
    ]
    comp = compare_grid(runner, configs, _policy_grid(cfg), seeds, cfg.seed, runs)
    for (c, pol, k), res in comp.items():
        kind, n, p, m, _ = c
        label = TopologySpec(kind, n, p).params_label()
        summary.rows.append(
            (kind, label, n, m, pol, k_text(k, n), res.max_load, res.request_distance,
             0.0 if pol == "pot" else res.tv)
        )
        if cfg.mode == "static":
            suffix = "" if k is None else f"_k{k_text(k, n)}"
            t = out.table(f"distribution_{pol}{suffix}.csv", ("load", "fraction"))
            t.rows.extend(distribution_rows(averaged_distribution(res.results)))
    return out


def run_dynamic_mode(cfg: ExperimentConfig, runner: Runner) -> Outcome:
    out = runner.outcome
    n = cfg.n[0]
    seeds = cfg.seeds or 1
    tasks = []
    for pol in cfg.policy:
        for k in ([None] if pol == "pot" else cfg.k):
            tasks.extend(
                DynamicTask(n, cfg.lam, cfg.mu, pol, k, cfg.arrivals, cfg.seed + r, cfg.warmup)
                for r in range(seeds)
            )
    results = runner.dynamic(tasks)
    summary = out.table("summary.csv", SUMMARY_COLUMNS)
    groups: dict[tuple, list[dict]] = {}
    for r in results:
        summary.rows.append(summary_row(r))
        groups.setdefault((r["policy"], r["k"]), []).append(r)
    for (pol, k), rs in groups.items():
        suffix = f"_k{k}" if k else ""
        t = out.table(f"occupancy_{pol}{suffix}.csv", ("count", "probability"))
        t.rows.extend(distribution_rows(mean_distribution([r["occupancy"] for r in rs])))
        for pair in rs[0]["joints"]:
            hs = [r["joints"][pair] for r in rs]
            shape = tuple(max(h.shape[d] for h in hs) for d in (0, 1))
            acc = np.zeros(shape)
            for h in hs:
                acc[: h.shape[0], : h.shape[1]] += h
            t = out.table(f"joint_{pol}{suffix}_{pair[0]}_{pair[1]}.csv", ("qi", "qj", "probability"))
            t.rows.extend(joint_rows(acc / len(hs)))
    return out


def graph_stats(cfg: ExperimentConfig, edgelist: str | None = None, export: str | None = None) -> dict:
    if edgelist:
        g = read_edgelist(edgelist)
        topo, label = "edgelist", Path(edgelist).name
    else:
        spec = TopologySpec(cfg.topology, cfg.n[0], _params(cfg)[0])
        g = build_graph(spec, cfg.seed)
        topo, label = cfg.topology, spec.params_label()
    if export:
        write_edgelist(g, export)
    return {
        "topology": topo,
        "params": label,
        "n": g.n,
        "edges": g.num_edges,
        "density": graph_density(g),
        "avg_path_length": average_path_length(g),
        "diameter": diameter(g),
    }


# ---- argument parsing --------------------------------------------------------


def _common(p: argparse.ArgumentParser, dynamic: bool = False) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--topology", help="line, ring, ba, rr, er, rgg, spatial-line, spatial-ring")
    p.add_argument("--n", help="server count (comma list for sweep)")
    p.add_argument("--param", help="generator parameter (comma list for sweep)")
    p.add_argument("--policy", help="comma list of pot, unif, invsq")
    p.add_argument("--k", help="comma list of hop radii: integer, logn (natural log) or n")
    p.add_argument("--seeds", type=int, help="number of seeds; run r uses seed + r")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="process pool size")
    if dynamic:
        p.add_argument("--lambda", dest="lam", type=float, help="per-server arrival rate")
        p.add_argument("--mu", type=float, help="service rate")
        p.add_argument("--arrivals", type=int, help="total simulated arrivals")
        p.add_argument("--warmup", type=float, help="fraction of arrivals discarded")
    else:
        p.add_argument("--m", type=int, help="jobs per run (default n)")
        p.add_argument("--arrival-model", dest="arrival_model",
                       help="uniform or spatial (default: spatial on spatial line/ring)")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="proxpot", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"proxpot {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="mode", required=True)
    _common(sub.add_parser("static", help="one static configuration over seeds"))
    _common(sub.add_parser("sweep", help="static runs over lists of n / param"))
    _common(sub.add_parser("dynamic", help="queueing simulation on the ring"), dynamic=True)
    gs = sub.add_parser("graph-stats", help="density, average path length and diameter")
    gs.add_argument("--config")
    gs.add_argument("--topology")
    gs.add_argument("--n")
    gs.add_argument("--param")
    gs.add_argument("--seed", type=int)
    gs.add_argument("--out", help="also write graph_stats.csv here")
    gs.add_argument("--edgelist", help="read the graph from an edge-list file instead")
    gs.add_argument("--export", help="write the graph as an edge list")
    pr = sub.add_parser("preset", help="named experiment")
    pr.add_argument("preset", choices=sorted(PRESETS))
    pr.add_argument("--config")
    pr.add_argument("--scale", choices=SCALES)
    pr.add_argument("--seed", type=int)
    pr.add_argument("--seeds", type=int)
    pr.add_argument("--out")
    pr.add_argument("--workers", type=int)
    return ap


_FLAG_FIELDS = {
    "topology", "n", "param", "policy", "k", "seeds", "seed", "out", "workers", "lam", "mu",
    "arrivals", "warmup", "m", "arrival_model", "scale", "preset",
}


def _flag_values(ns: argparse.Namespace) -> dict:
    vals = {}
    for name in _FLAG_FIELDS:
        v = getattr(ns, name, None)
        if v is None:
            continue
        if isinstance(v, str) and name in _LIST_INT + _LIST_FLOAT + _LIST_STR:
            try:
                v = _convert(name, v)
            except ValueError:
                raise ConfigError(f"--{name}: bad value {getattr(ns, name)!r}") from None
        vals[name] = v
    return vals


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in PRESETS:
        argv.insert(0, "preset")
    ns = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = {}
        if ns.config:
            path = Path(ns.config)
            if not path.is_file():
                raise ConfigError(f"{path}: no such config file")
            file_values = parse_config_text(path.read_text(), str(path))
        cfg = build_config(ns.mode, file_values, _flag_values(ns))
    except ConfigError as exc:
        print(f"proxpot: config error: {exc}", file=sys.stderr)
        return 2
    except (TypeError, ValueError) as exc:
        print(f"proxpot: config error: {exc}", file=sys.stderr)
        return 2

    t0 = time.perf_counter()
    try:
        if cfg.mode == "graph-stats":
            stats = graph_stats(cfg, ns.edgelist, ns.export)
            for key, val in stats.items():
                print(f"{key}: {_fmt(val)}")
            if ns.out:
                o = Outcome()
                t = o.table("graph_stats.csv", tuple(stats))
                t.rows.append(tuple(stats.values()))
                write_outcome(o, cfg, Path(cfg.out), time.perf_counter() - t0)
            return 0
        runner = Runner(cfg.workers)
        if cfg.mode == "preset":
            outcome = run_preset(cfg.preset, cfg.scale, cfg.seed, cfg.seeds, cfg.workers)
        elif cfg.mode in ("static", "sweep"):
            outcome = run_static_mode(cfg, runner)
        else:
            outcome = run_dynamic_mode(cfg, runner)
    except RunError as exc:
        print(f"proxpot: run failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"proxpot: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    paths = write_outcome(outcome, cfg, Path(cfg.out), time.perf_counter() - t0)
    print(f"wrote {len(paths)} CSV files and manifest.json to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
