from __future__ import annotations

import itertools
import logging

import numpy as np
import pytest

from _runs import LAM, ring_run
from proxpot.dynamic_sim import (
    DynamicConfig,
    EmptyRecords,
    InvalidConfig,
    InvalidRate,
    JobRecords,
    JobSummary,
    NoDepartures,
    NoMeasurement,
    OccupancyEstimator,
    UntrackedPair,
    joint_distance,
    joint_pdf,
    mean_field_mean_sojourn,
    mean_field_pot_pdf,
    mean_field_tail,
    mean_request_distance_dynamic,
    mean_sojourn_time,
    occupancy_pdf,
    run_dynamic,
    server_pdf,
)
from proxpot.graph import TopologySpec, build_graph
from proxpot.policy import PolicyKind
from proxpot.static_sim import LoadDistribution, total_variation


def harmonic(k, power=1):
    return sum(1 / j**power for j in range(1, k + 1))


# ---- configuration -------------------------------------------------------------


def test_unstable_config_is_refused_with_warning(caplog):
    cfg = DynamicConfig(10, 1.0, 1.0, PolicyKind.pot(), 100)
    with caplog.at_level(logging.WARNING, logger="proxpot.dynamic_sim"):
        with pytest.raises(InvalidConfig):
            run_dynamic(cfg)
    assert "unstable" in caplog.text


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=0),
        dict(lam=-1.0),
        dict(mu=0.0),
        dict(horizon_arrivals=0),
        dict(warmup_fraction=1.0),
        dict(joint_pairs=((0, 12),)),
    ],
)
def test_invalid_configs(kwargs):
    base = dict(n=10, lam=0.5, mu=1.0, policy=PolicyKind.unif(2), horizon_arrivals=100)
    base.update(kwargs)
    with pytest.raises(InvalidConfig):
        run_dynamic(DynamicConfig(**base))


def test_graph_size_must_match():
    cfg = DynamicConfig(10, 0.5, 1.0, PolicyKind.pot(), 100)
    with pytest.raises(InvalidConfig):
        run_dynamic(cfg, graph=build_graph(TopologySpec("ring", 11)))


def test_default_pairs_fit_small_systems():
    assert DynamicConfig(10, 0.5, 1, PolicyKind.pot(), 1).pairs() == ((0, 1), (0, 2), (0, 8))
    assert DynamicConfig(5, 0.5, 1, PolicyKind.pot(), 1).pairs() == ((0, 1), (0, 2))


# ---- engine invariants ----------------------------------------------------------


@pytest.mark.parametrize(
    "policy", [PolicyKind.pot(), PolicyKind.unif(2), PolicyKind.invsq(3)], ids=lambda p: p.label
)
def test_checked_run_and_conservation(policy):
    """check=True re-verifies event order, one departure per busy server and job conservation per event."""
    cfg = DynamicConfig(31, 0.9, 1.0, policy, 100_000, seed=3, record_jobs=True)
    res = run_dynamic(cfg, check=True)
    assert res.total_arrivals == cfg.horizon_arrivals
    assert int(res.final_counts.sum()) == res.total_arrivals - res.total_departures
    rec = res.records
    assert len(rec) == cfg.horizon_arrivals - cfg.warmup_arrivals
    assert np.all(np.diff(rec.arrival) >= 0)
    done = ~np.isnan(rec.departure)
    assert np.all(rec.departure[done] > rec.arrival[done])
    assert res.metadata["excluded_in_system"] == int((~done).sum())
    if policy.k is not None:
        assert rec.hop.max() <= policy.k
    assert np.all((rec.hop == 0) == (rec.dest == rec.origin))


def test_records_and_streaming_summary_agree():
    cfg = DynamicConfig(21, 0.8, 1.0, PolicyKind.invsq(4), 50_000, seed=8, record_jobs=True)
    res = run_dynamic(cfg)
    assert mean_sojourn_time(res.records) == pytest.approx(mean_sojourn_time(res), rel=1e-9)
    assert mean_request_distance_dynamic(res.records) == pytest.approx(
        mean_request_distance_dynamic(res), rel=1e-12
    )


def test_runs_are_deterministic():
    cfg = DynamicConfig(15, 0.9, 1.0, PolicyKind.invsq(3), 20_000, seed=4)
    a, b = run_dynamic(cfg), run_dynamic(cfg)
    assert np.array_equal(a.occupancy.time_at, b.occupancy.time_at)
    assert np.array_equal(a.joint.time_at, b.joint.time_at)
    assert a.jobs == b.jobs


def test_k1_policies_coincide():
    a = ring_run(51, "unif", 1, 1_000_000)
    b = ring_run(51, "invsq", 1, 1_000_000)
    assert mean_request_distance_dynamic(a) == mean_request_distance_dynamic(b)
    assert np.array_equal(a.occupancy.time_at, b.occupancy.time_at)


# ---- estimators -----------------------------------------------------------------


def test_idle_occupancy():
    est = OccupancyEstimator(np.array([[5.0], [5.0], [5.0]]), 5.0)
    assert occupancy_pdf(est).as_dict() == {0: 1.0}


def test_estimator_errors():
    with pytest.raises(NoMeasurement):
        occupancy_pdf(OccupancyEstimator(np.zeros((2, 1)), 0.0))
    with pytest.raises(NoDepartures):
        mean_sojourn_time(JobSummary(3, 0, 0.0, 0))
    with pytest.raises(EmptyRecords):
        mean_request_distance_dynamic(JobSummary(0, 0, 0.0, 0))
    empty = JobRecords(*(np.zeros(0) for _ in range(5)))
    with pytest.raises(EmptyRecords):
        mean_request_distance_dynamic(empty)
    with pytest.raises(NoDepartures):
        mean_sojourn_time(empty)
    res = ring_run(10, "unif", 2, 100_000)
    with pytest.raises(UntrackedPair):
        joint_pdf(res, (3, 4))


def test_mm1_occupancy_and_sojourn():
    res = ring_run(1, "pot", None, 1_000_000, seed=0, lam=0.5, mu=1.0)
    rho = 0.5
    pdf = occupancy_pdf(res)
    geo = LoadDistribution((1 - rho) * rho ** np.arange(len(pdf.probs) + 30))
    assert total_variation(pdf, geo) <= 0.01
    assert mean_sojourn_time(res) == pytest.approx(2.0, abs=0.05)


def test_occupancy_pdf_is_normalized_with_monotone_tail():
    pdf = occupancy_pdf(ring_run(1001, "unif", 2))
    assert pdf.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(pdf.tail()) <= 1e-15)


def test_littles_law():
    res = ring_run(1001, "unif", 2)
    measured = res.t_end - res.t_start
    mean_in_system = res.config.n * occupancy_pdf(res).mean()
    lam_eff = res.jobs.arrivals / measured
    assert mean_in_system / lam_eff == pytest.approx(mean_sojourn_time(res), rel=0.02)


def test_routing_symmetry_on_ring():
    # one server sees ~10^6 arrivals here, so per-server PDFs agree to a few 1e-3
    res = ring_run(10, "unif", 2)
    pdfs = [server_pdf(res, s) for s in range(10)]
    worst = max(total_variation(a, b) for a, b in itertools.combinations(pdfs, 2))
    assert worst <= 0.01


def test_joint_marginal_matches_server_pdf():
    res = ring_run(10, "invsq", 2)
    for (i, j) in res.joint.pairs:
        h = joint_pdf(res, (i, j))
        assert h.sum() == pytest.approx(1.0, abs=1e-12)
        assert total_variation(LoadDistribution(h.sum(1)), server_pdf(res, i)) <= 0.01
        assert total_variation(LoadDistribution(h.sum(0)), server_pdf(res, j)) <= 0.01


def test_joint_distance_examples():
    a = np.array([[0.5, 0.0], [0.25, 0.25]])
    assert joint_distance(a, a) == 0.0
    b = np.array([[0.0, 0.5], [0.0, 0.0], [0.5, 0.0]])
    c = np.array([[1.0]])
    assert joint_distance(b, c) == 1.0


def test_joint_symmetry_n10():
    res = ring_run(10, "unif", 2, 30_000_000)
    assert joint_distance(joint_pdf(res, (0, 2)), joint_pdf(res, (0, 8))) <= 0.01


def test_no_decoupling_n1000():
    res = ring_run(1000, "unif", 2)
    h = joint_pdf(res, (0, 1))
    product = np.outer(h.sum(1), h.sum(0))
    assert joint_distance(h, product) > 0.05
    d = joint_distance(joint_pdf(res, (0, 1)), joint_pdf(res, (0, 8)))
    assert d == pytest.approx(0.215, abs=0.03)


# ---- reference values on the ring ----------------------------------------------


def test_request_distance_k2_examples():
    assert mean_request_distance_dynamic(ring_run(1001, "unif", 2)) == pytest.approx(0.75, abs=0.01)
    assert mean_request_distance_dynamic(ring_run(1001, "invsq", 2)) == pytest.approx(0.60, abs=0.01)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_request_distance_closed_forms_small_ring(k):
    n = 51
    unif = mean_request_distance_dynamic(ring_run(n, "unif", k, 2_000_000))
    invsq = mean_request_distance_dynamic(ring_run(n, "invsq", k, 2_000_000))
    assert unif == pytest.approx((k + 1) / 4, rel=0.01)
    assert invsq == pytest.approx(harmonic(k) / (2 * harmonic(k, 2)), rel=0.01)


def test_sojourn_k500():
    unif = mean_sojourn_time(ring_run(1001, "unif", 500))
    invsq = mean_sojourn_time(ring_run(1001, "invsq", 500))
    assert unif == pytest.approx(3.38, abs=0.05)
    assert invsq == pytest.approx(3.83, abs=0.06)
    assert invsq / unif == pytest.approx(1.134, abs=0.02)


@pytest.mark.parametrize("k", [2, 3, 5, 10])
def test_pdf_converges_in_n(k):
    small = occupancy_pdf(ring_run(250, "invsq", k))
    large = occupancy_pdf(ring_run(1001, "invsq", k))
    assert total_variation(small, large) <= 0.02


# ---- mean-field reference --------------------------------------------------------


def test_mean_field_tail_values():
    t = mean_field_tail(0.95, 1.0, 2, 5)
    assert t[1] == pytest.approx(0.95, rel=1e-15)
    assert t[2] == pytest.approx(0.857375, rel=1e-14)
    assert t[3] == pytest.approx(0.95**7, rel=1e-14)
    assert t[3] == pytest.approx(0.698337, abs=1e-6)


def test_mean_field_geometric_when_d1():
    t = mean_field_tail(0.6, 1.0, 1, 10)
    assert np.allclose(t, 0.6 ** np.arange(12), rtol=1e-13)


def test_mean_field_zero_load():
    assert mean_field_pot_pdf(0.0, 1.0).as_dict() == {0: 1.0}


def test_mean_field_pdf_and_sojourn():
    pdf = mean_field_pot_pdf(LAM, 1.0, 2, 50)
    assert pdf.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert mean_field_mean_sojourn(LAM, 1.0) == pytest.approx(3.383, abs=5e-4)
    assert mean_field_mean_sojourn(0.5, 1.0, d=1) == pytest.approx(2.0, rel=1e-12)


def test_mean_field_rejects_bad_rates():
    with pytest.raises(InvalidRate):
        mean_field_pot_pdf(1.2, 1.0)
    with pytest.raises(InvalidRate):
        mean_field_tail(0.5, 1.0, 0, 5)
