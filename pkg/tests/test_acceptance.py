"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run under pytest (lines appear in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chisquare

sys.path.insert(0, str(Path(__file__).resolve().parent))

import conftest  # noqa: E402
from _oracles import ORACLE_CASES, exact_final_loads  # noqa: E402
from _runs import ring_run, run_seconds  # noqa: E402
from proxpot.dynamic_sim import (  # noqa: E402
    DynamicConfig,
    joint_distance,
    joint_pdf,
    mean_field_mean_sojourn,
    mean_request_distance_dynamic,
    mean_sojourn_time,
    occupancy_pdf,
    run_dynamic,
)
from proxpot.experiments import resolve_k  # noqa: E402
from proxpot.graph import TopologySpec, build_graph, diameter  # noqa: E402
from proxpot.policy import PolicyKind, build_sampling_table, sample_peer  # noqa: E402
from proxpot.static_sim import (  # noqa: E402
    LoadDistribution,
    average_request_distance,
    load_distribution,
    mean_distribution,
    run_static,
    simulate_final_loads,
    total_variation,
)


def harmonic(k: int, power: int = 1) -> float:
    return sum(1 / j**power for j in range(1, k + 1))


def record(number: int, ok: bool, detail: str) -> str:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    return line


# ---- criteria ---------------------------------------------------------------------


def criterion_1() -> tuple[bool, str]:
    ks = [2, 3, 5, 10, 20]
    rd = {k: mean_request_distance_dynamic(ring_run(1001, "unif", k)) for k in ks}
    seconds = sum(run_seconds(1001, "unif", k) for k in ks)
    within = all(abs(rd[k] / ((k + 1) / 4) - 1) <= 0.015 for k in ks)
    k2 = abs(rd[2] - 0.7499) <= 0.01
    ok = within and k2 and seconds <= 180
    vals = " ".join(f"k{k}={rd[k]:.4f}/{(k + 1) / 4:.4f}" for k in ks)
    return ok, f"unif ring n=1001 {vals} runtime={seconds:.0f}s"


def criterion_2() -> tuple[bool, str]:
    reported = {2: 0.6, 3: 0.6736, 5: 0.7801}
    rd = {k: mean_request_distance_dynamic(ring_run(1001, "invsq", k)) for k in reported}
    oracle = {k: harmonic(k) / (2 * harmonic(k, 2)) for k in reported}
    ok = all(abs(rd[k] / oracle[k] - 1) <= 0.015 and abs(rd[k] - reported[k]) <= 0.01 for k in reported)
    vals = " ".join(f"k{k}={rd[k]:.4f}/{oracle[k]:.4f}/{reported[k]}" for k in reported)
    return ok, f"invsq ring n=1001 measured/closed-form/reported {vals}"


def criterion_3() -> tuple[bool, str]:
    mf = mean_field_mean_sojourn(0.95, 1.0)
    unif = mean_sojourn_time(ring_run(1001, "unif", 500))
    invsq = mean_sojourn_time(ring_run(1001, "invsq", 500))
    ratio = invsq / unif
    ok = abs(unif / mf - 1) <= 0.02 and abs(ratio - 1.134) <= 0.02
    return ok, f"unif500={unif:.4f} mean-field={mf:.4f} invsq500={invsq:.4f} ratio={ratio:.4f}"


def criterion_4() -> tuple[bool, str]:
    res = ring_run(10, "unif", 2, 30_000_000)
    a, b, c = (joint_pdf(res, p) for p in ((0, 1), (0, 2), (0, 8)))
    d12_13, d12_19, d13_19 = joint_distance(a, b), joint_distance(a, c), joint_distance(b, c)
    ok = d13_19 <= 0.01 and d12_13 > d13_19 and d12_19 > d13_19
    return ok, f"n=10 unif k=2 d12-13={d12_13:.4f} d12-19={d12_19:.4f} d13-19={d13_19:.4f}"


def criterion_5() -> tuple[bool, str]:
    tvs = {}
    for pol in ("unif", "invsq"):
        for k in (2, 5):
            tvs[(pol, k)] = total_variation(
                occupancy_pdf(ring_run(250, pol, k)), occupancy_pdf(ring_run(1001, pol, k))
            )
    ok = all(v <= 0.02 for v in tvs.values())
    return ok, "TV(n=250, n=1001) " + " ".join(f"{p}{k}={v:.4f}" for (p, k), v in tvs.items())


_STATIC: dict = {}


def _static_ring1000() -> dict:
    if not _STATIC:
        t0 = time.perf_counter()
        g = build_graph(TopologySpec("ring", 1000))
        k = resolve_k("logn", 1000)
        for name, pol in (("pot", PolicyKind.pot()), ("unif", PolicyKind.unif(k)), ("invsq", PolicyKind.invsq(k))):
            table = build_sampling_table(g, pol)
            runs = [run_static(g, table, 1000, seed=s) for s in range(10)]
            _STATIC[name] = (
                mean_distribution([load_distribution(r.state) for r in runs]),
                float(np.mean([average_request_distance(r.trace) for r in runs])),
            )
        _STATIC["seconds"] = time.perf_counter() - t0
    return _STATIC


def criterion_6() -> tuple[bool, str]:
    s = _static_ring1000()
    tv_u = total_variation(s["unif"][0], s["pot"][0])
    tv_i = total_variation(s["invsq"][0], s["pot"][0])
    ok = tv_u <= 0.05 and tv_i <= 0.08 and s["seconds"] <= 60
    return ok, f"ring n=m=1000 10 seeds TV unif7={tv_u:.4f} invsq7={tv_i:.4f} runtime={s['seconds']:.1f}s"


def criterion_7() -> tuple[bool, str]:
    s = _static_ring1000()
    pot, inv = s["pot"][1], s["invsq"][1]
    return inv <= 0.05 * pot, f"request distance invsq7={inv:.4f} pot={pot:.2f} ratio={inv / pot:.4%}"


def _random_graphs() -> list:
    gen = np.random.default_rng(2024)
    graphs = []
    for i in range(20):
        n = int(gen.integers(10, 201))
        kind = ("er", "ba", "rr", "rgg")[i % 4]
        param = {
            "er": min(1.0, 2.5 * np.log(n) / n),
            "ba": int(gen.integers(1, 4)),
            "rr": 4,
            "rgg": 2.0 * np.sqrt(np.log(n) / (np.pi * n)),
        }[kind]
        graphs.append(build_graph(TopologySpec(kind, n, param), seed=i))
    return graphs


def criterion_8() -> tuple[bool, str]:
    k1 = dia = 0
    for g in _random_graphs():
        k1 += np.array_equal(
            build_sampling_table(g, PolicyKind.unif(1)).dense(),
            build_sampling_table(g, PolicyKind.invsq(1)).dense(),
        )
        dia += np.array_equal(
            build_sampling_table(g, PolicyKind.unif(diameter(g))).dense(),
            build_sampling_table(g, PolicyKind.pot()).dense(),
        )
    return k1 == 20 and dia == 20, f"exact table equality unif1==invsq1 {k1}/20, unif(diam)==pot {dia}/20"


def criterion_9() -> tuple[bool, str]:
    tvs = []
    for g, pol, m in ORACLE_CASES:
        exact = exact_final_loads(g, pol, m)
        runs = 1_000_000
        keys, counts = np.unique(simulate_final_loads(g, pol, m, runs, seed=17), axis=0, return_counts=True)
        emp = {tuple(int(x) for x in k): c / runs for k, c in zip(keys, counts)}
        tvs.append(0.5 * sum(abs(exact.get(s, 0.0) - emp.get(s, 0.0)) for s in set(exact) | set(emp)))
    mm1 = ring_run(1, "pot", None, 1_000_000, lam=0.5, mu=1.0)
    pdf = occupancy_pdf(mm1)
    geo = LoadDistribution(0.5 * 0.5 ** np.arange(len(pdf.probs) + 30))
    tv_mm1 = total_variation(pdf, geo)
    ok = max(tvs) <= 0.005 and tv_mm1 <= 0.01
    return ok, f"enumeration max TV={max(tvs):.4f} over {len(tvs)} cases, M/M/1 TV={tv_mm1:.4f}"


def criterion_10() -> tuple[bool, str]:
    checks = {}
    # conservation and event-time monotonicity: check mode asserts both after every event
    res = run_dynamic(DynamicConfig(41, 0.9, 1.0, PolicyKind.invsq(3), 200_000, seed=1, record_jobs=True), check=True)
    checks["conservation"] = int(res.final_counts.sum()) == res.total_arrivals - res.total_departures
    checks["monotone"] = bool(np.all(np.diff(res.records.arrival) >= 0))
    # sampler chi-square
    g = build_graph(TopologySpec("ba", 60, 2), seed=3)
    table = build_sampling_table(g, PolicyKind.invsq(3))
    gen = np.random.default_rng(5)
    draws = np.array([sample_peer(table, 0, gen) for _ in range(200_000)])
    probs = table.dense()[0]
    support = np.flatnonzero(probs)
    observed = np.array([(draws == v).sum() for v in support])
    checks["chi-square"] = chisquare(observed, probs[support] * len(draws)).pvalue > 0.001
    # TV metric axioms on random distributions
    gen = np.random.default_rng(9)
    ds = [LoadDistribution(p) for p in gen.dirichlet(np.ones(8), size=6)]
    checks["tv-metric"] = all(
        total_variation(a, a) == 0
        and total_variation(a, b) == total_variation(b, a)
        and total_variation(a, c) <= total_variation(a, b) + total_variation(b, c) + 1e-15
        for a in ds for b in ds for c in ds
    )
    # Little's law on a long ring run
    ring = ring_run(1001, "unif", 2)
    lam_eff = ring.jobs.arrivals / (ring.t_end - ring.t_start)
    little = ring.config.n * occupancy_pdf(ring).mean() / lam_eff
    checks["little"] = abs(little / mean_sojourn_time(ring) - 1) <= 0.02
    ok = all(checks.values())
    return ok, " ".join(f"{k}={'ok' if v else 'bad'}" for k, v in checks.items())


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


@pytest.mark.parametrize("number", list(CRITERIA))
def test_acceptance_criterion(number):
    ok, detail = CRITERIA[number]()
    line = record(number, ok, detail)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for number, fn in CRITERIA.items():
        ok, detail = fn()
        print(record(number, ok, detail), flush=True)
        failed += not ok
    sys.exit(1 if failed else 0)
