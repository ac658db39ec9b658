from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from proxpot import kernels, rng
from proxpot.graph import TopologySpec, build_graph
from proxpot.policy import PolicyKind, build_sampling_table
from proxpot.static_sim import draw_origins

IMPLS = kernels.implementations()
needs_both = pytest.mark.skipif(len(IMPLS) < 2, reason="compiled core not built")

GRAPHS = [
    ("ring", 40, None, 0),
    ("line", 33, None, 0),
    ("er", 60, 0.12, 3),
    ("ba", 50, 2, 1),
    ("rr", 48, 3, 2),
]
POLICIES = [PolicyKind.pot(), PolicyKind.unif(3), PolicyKind.invsq(4), PolicyKind.invsq(200)]


def _graph(kind, n, param, seed):
    return build_graph(TopologySpec(kind, n, param), seed)


def test_backend_is_reported():
    assert kernels.BACKEND in IMPLS
    assert "python" in IMPLS


@needs_both
@pytest.mark.parametrize("spec", GRAPHS, ids=lambda s: s[0])
def test_khop_layers_match(spec):
    g = _graph(*spec)
    for k in (1, 2, 5, g.n):
        a = IMPLS["python"].khop_layers(g.indptr, g.indices, k)
        b = IMPLS["cython"].khop_layers(g.indptr, g.indices, k)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(np.asarray(x), np.asarray(y))


@needs_both
@pytest.mark.parametrize("spec", GRAPHS, ids=lambda s: s[0])
def test_bfs_rows_match(spec):
    g = _graph(*spec)
    src = np.arange(g.n, dtype=np.int64)
    assert np.array_equal(
        IMPLS["python"].bfs_rows(g.indptr, g.indices, src),
        IMPLS["cython"].bfs_rows(g.indptr, g.indices, src),
    )


def _static(impl, table, g, runs, m, seed):
    origins = draw_origins(g, runs * m, "uniform", rng.generator(seed, "arrivals"))
    loads = np.zeros((runs, g.n), dtype=np.int32)
    rec = [np.empty(runs * m, dtype=np.int32) for _ in range(4)]
    impl.static_kernel(
        table.kernel_spec(), origins, runs, m,
        rng.bit_generator(seed, "sampling"), rng.bit_generator(seed, "ties"), loads, *rec,
    )
    return loads, rec


@needs_both
@pytest.mark.parametrize("spec", GRAPHS, ids=lambda s: s[0])
@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.label)
def test_static_kernel_bit_identical(spec, policy):
    g = _graph(*spec)
    table = build_sampling_table(g, policy)
    la, ra = _static(IMPLS["python"], table, g, 3, 2 * g.n, 11)
    lb, rb = _static(IMPLS["cython"], table, g, 3, 2 * g.n, 11)
    assert np.array_equal(la, lb)
    for x, y in zip(ra, rb):
        assert np.array_equal(x, y)


def _dynamic(impl, table, n, seed, check):
    pi = np.array([0, 0], dtype=np.int64)
    pj = np.array([1, 2], dtype=np.int64)
    return impl.dynamic_kernel(
        table.kernel_spec(need_hops=True), 0.9, 1.0, 20_000, 2_000,
        *(rng.bit_generator(seed, s) for s in ("arrivals", "sampling", "ties", "service")),
        pi, pj, True, check,
    )


@needs_both
@pytest.mark.parametrize("spec", GRAPHS[:3], ids=lambda s: s[0])
@pytest.mark.parametrize("policy", POLICIES[:3], ids=lambda p: p.label)
def test_dynamic_kernel_bit_identical(spec, policy):
    g = _graph(*spec)
    table = build_sampling_table(g, policy)
    a = _dynamic(IMPLS["python"], table, g.n, 5, True)
    b = _dynamic(IMPLS["cython"], table, g.n, 5, True)
    assert a.keys() == b.keys()
    for key in a:
        if key == "records":
            for x, y in zip(a[key], b[key]):
                assert np.array_equal(x, y, equal_nan=True)
        elif isinstance(a[key], np.ndarray):
            assert np.array_equal(a[key], b[key])
        else:
            assert a[key] == b[key], key


def _levels(dests, n):
    counts = np.zeros(n, dtype=np.int64)
    out = np.empty(len(dests), dtype=np.int32)
    for t, d in enumerate(dests):
        out[t] = counts[d]
        counts[d] += 1
    return out


@needs_both
@given(st.lists(st.integers(0, 6), min_size=1, max_size=60), st.integers(0, 2**32))
def test_tv_evolution_bit_identical(dests, seed):
    a = _levels(dests, 7)
    b = _levels(np.random.default_rng(seed).integers(0, 7, len(dests)), 7)
    assert np.array_equal(
        IMPLS["python"].tv_evolution(a, b, 7), IMPLS["cython"].tv_evolution(a, b, 7)
    )
