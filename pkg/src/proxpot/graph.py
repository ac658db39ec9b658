"""Server topologies: generators, hop distances and graph attributes."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import kernels, rng

__all__ = [
    "TOPOLOGIES",
    "InvalidSpec",
    "ConnectivityFailure",
    "Disconnected",
    "TopologySpec",
    "Graph",
    "DistanceField",
    "build_graph",
    "distances_up_to_k",
    "graph_density",
    "average_path_length",
    "diameter",
    "is_connected",
    "all_pairs_hops",
    "write_edgelist",
    "read_edgelist",
]

TOPOLOGIES = ("line", "ring", "ba", "rr", "er", "rgg", "spatial-line", "spatial-ring")
_PARAM_NAMES = {
    "ba": "alpha",
    "rr": "beta",
    "er": "gamma",
    "rgg": "r",
    "spatial-line": "L_max",
    "spatial-ring": "R",
}
MAX_CONNECT_ATTEMPTS = 100


class InvalidSpec(ValueError):
    pass


class ConnectivityFailure(RuntimeError):
    pass


class Disconnected(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    """Generator name, server count and the generator's single parameter.

    ``param`` is alpha (BA attachment count), beta (RR degree), gamma (ER edge
    probability), r (RGG radius), L_max (spatial line length) or R (spatial
    ring radius). Line and Ring take none.
    """

    kind: str
    n: int
    param: float | None = None

    def validate(self) -> None:
        kind, n, p = self.kind, self.n, self.param
        if kind not in TOPOLOGIES:
            raise InvalidSpec(f"unknown topology {kind!r}; expected one of {TOPOLOGIES}")
        if int(n) != n or n < 2:
            raise InvalidSpec(f"n must be an integer >= 2, got {n}")
        if kind in ("line", "ring"):
            return
        if p is None:
            raise InvalidSpec(f"{kind} requires parameter {_PARAM_NAMES[kind]}")
        if kind == "ba":
            if int(p) != p or p < 1:
                raise InvalidSpec(f"alpha must be an integer >= 1, got {p}")
            if n < p + 1:
                raise InvalidSpec(f"BA needs n >= alpha + 1, got n={n}, alpha={p}")
        elif kind == "rr":
            if int(p) != p or p < 3:
                raise InvalidSpec(f"beta must be an integer >= 3, got {p}")
            if p >= n:
                raise InvalidSpec(f"beta must be < n, got beta={p}, n={n}")
            if (n * int(p)) % 2:
                raise InvalidSpec(f"n*beta must be even, got n={n}, beta={p}")
        elif kind == "er":
            if not math.log(n) / n <= p <= 1:
                raise InvalidSpec(f"gamma must lie in [ln(n)/n, 1], got {p}")
        elif kind == "rgg":
            if p < math.sqrt(math.log(n) / (math.pi * n)):
                raise InvalidSpec(f"r must be >= sqrt(ln(n)/(pi n)), got {p}")
        elif p <= 0:
            raise InvalidSpec(f"{_PARAM_NAMES[kind]} must be positive, got {p}")

    @property
    def spatial(self) -> bool:
        return self.kind in ("rgg", "spatial-line", "spatial-ring")

    def params_label(self) -> str:
        if self.param is None:
            return ""
        p = self.param
        text = str(int(p)) if float(p).is_integer() else f"{p:.6g}"
        return f"{_PARAM_NAMES[self.kind]}={text}"


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form with sorted neighbour lists.

    ``embedding`` holds a 1-D position (spatial line), an angle in radians
    (spatial ring) or an (n, 2) array of points (RGG).
    """

    indptr: np.ndarray
    indices: np.ndarray
    embedding: np.ndarray | None = None
    topology: TopologySpec | None = None
    _rank: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]] | np.ndarray,
        embedding: np.ndarray | None = None,
        topology: TopologySpec | None = None,
    ) -> "Graph":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        und = np.unique(lo * n + hi)
        lo, hi = und // n, und % n
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        indices = dst.astype(np.int32)
        indptr.setflags(write=False)
        indices.setflags(write=False)
        if embedding is not None:
            embedding = np.array(embedding, dtype=np.float64)
            embedding.setflags(write=False)
        rank = None
        if topology is not None and topology.kind in ("line", "ring"):
            rank = np.arange(n, dtype=np.int64)
        elif topology is not None and topology.kind in ("spatial-line", "spatial-ring"):
            rank = np.empty(n, dtype=np.int64)
            rank[np.argsort(embedding, kind="stable")] = np.arange(n)
        return cls(indptr, indices, embedding, topology, rank)

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(u).tolist() for u in range(self.n)]

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def chain(self) -> tuple[str, np.ndarray] | None:
        """``("line"|"ring", rank)`` when hop distance is ``|rank_u - rank_v|`` (wrapped on a ring)."""
        if self._rank is None or self.topology is None:
            return None
        kind = "ring" if self.topology.kind in ("ring", "spatial-ring") else "line"
        if kind == "ring" and self.n == 2:
            kind = "line"
        return kind, self._rank


@dataclass(frozen=True)
class DistanceField:
    origin: int
    k: int
    dist: dict[int, int]

    def __len__(self) -> int:
        return len(self.dist) - 1

    def neighborhood(self) -> list[int]:
        """Vertices at hop distance 1..k."""
        return [v for v, d in self.dist.items() if d > 0]


# ---- generators -------------------------------------------------------------


def _line(n: int) -> np.ndarray:
    i = np.arange(n - 1)
    return np.column_stack([i, i + 1])


def _ring(n: int) -> np.ndarray:
    i = np.arange(n)
    return np.column_stack([i, (i + 1) % n])


def _barabasi_albert(n: int, alpha: int, gen: np.random.Generator) -> np.ndarray:
    edges = [(0, v) for v in range(1, alpha + 1)]
    # one entry per edge endpoint: uniform draws are degree-proportional
    ends = [0] * alpha + list(range(1, alpha + 1))
    for v in range(alpha + 1, n):
        targets: set[int] = set()
        while len(targets) < alpha:
            targets.add(ends[int(gen.random() * len(ends))])
        for w in sorted(targets):
            edges.append((w, v))
            ends.append(w)
            ends.append(v)
    return np.asarray(edges, dtype=np.int64)


def _pairing_attempt(n: int, beta: int, gen: np.random.Generator) -> np.ndarray | None:
    stubs = gen.permutation(np.repeat(np.arange(n), beta)).reshape(-1, 2)
    if np.any(stubs[:, 0] == stubs[:, 1]):
        return None
    lo = np.minimum(stubs[:, 0], stubs[:, 1])
    hi = np.maximum(stubs[:, 0], stubs[:, 1])
    keys = lo.astype(np.int64) * n + hi
    if len(np.unique(keys)) != len(keys):
        return None
    return np.column_stack([lo, hi])


def _incremental_pairing(n: int, beta: int, gen: np.random.Generator) -> np.ndarray:
    """Pair stubs one suitable edge at a time, restarting on dead ends."""
    while True:
        edges: set[tuple[int, int]] = set()
        stubs = list(np.repeat(np.arange(n), beta))
        stuck = False
        while stubs and not stuck:
            gen.shuffle(stubs)
            leftover: list[int] = []
            it = iter(stubs)
            for a in it:
                b = next(it)
                key = (a, b) if a < b else (b, a)
                if a != b and key not in edges:
                    edges.add(key)
                else:
                    leftover.extend((a, b))
            if len(leftover) == len(stubs):
                # every shuffled pairing failed; give up if no suitable pair exists at all
                uniq = sorted(set(leftover))
                stuck = not any(
                    (x, y) not in edges for i, x in enumerate(uniq) for y in uniq[i + 1 :]
                )
            stubs = leftover
        if not stubs:
            return np.asarray(sorted(edges), dtype=np.int64)


def _random_regular(n: int, beta: int, gen: np.random.Generator) -> np.ndarray:
    # pairing model is uniform but accepted w.p. ~exp(-(beta^2-1)/4)
    if math.exp(-(beta * beta - 1) / 4) >= 1e-3:
        for _ in range(20000):
            edges = _pairing_attempt(n, beta, gen)
            if edges is not None:
                return edges
    return _incremental_pairing(n, beta, gen)


def _erdos_renyi(n: int, gamma: float, gen: np.random.Generator) -> np.ndarray:
    total = n * (n - 1) // 2
    m = int(gen.binomial(total, gamma))
    idx = np.sort(gen.choice(total, size=m, replace=False)).astype(np.int64)
    # lower-triangle index -> (i, j), j < i
    i = np.floor((1 + np.sqrt(1 + 8 * idx.astype(np.float64))) / 2).astype(np.int64)
    i -= (i * (i - 1) // 2) > idx
    i += ((i + 1) * i // 2) <= idx
    j = idx - i * (i - 1) // 2
    return np.column_stack([j, i])


def _geometric(n: int, r: float, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    from scipy.spatial import cKDTree

    pts = gen.random((n, 2))
    pairs = cKDTree(pts).query_pairs(r, output_type="ndarray")
    if len(pairs):
        d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        pairs = pairs[d < r]
    return pairs.reshape(-1, 2), pts


def _sorted_chain(pos: np.ndarray, closed: bool) -> np.ndarray:
    order = np.argsort(pos, kind="stable")
    edges = np.column_stack([order[:-1], order[1:]])
    if closed and len(order) > 2:
        edges = np.vstack([edges, [order[-1], order[0]]])
    return edges


def _generate(spec: TopologySpec, gen: np.random.Generator) -> Graph:
    n, p = spec.n, spec.param
    if spec.kind == "ba":
        return Graph.from_edges(n, _barabasi_albert(n, int(p), gen), topology=spec)
    if spec.kind == "rr":
        return Graph.from_edges(n, _random_regular(n, int(p), gen), topology=spec)
    if spec.kind == "er":
        return Graph.from_edges(n, _erdos_renyi(n, float(p), gen), topology=spec)
    if spec.kind == "rgg":
        edges, pts = _geometric(n, float(p), gen)
        return Graph.from_edges(n, edges, embedding=pts, topology=spec)
    if spec.kind == "spatial-line":
        pos = gen.random(n) * float(p)
        return Graph.from_edges(n, _sorted_chain(pos, closed=False), embedding=pos, topology=spec)
    if spec.kind == "spatial-ring":
        ang = gen.random(n) * (2 * math.pi)
        return Graph.from_edges(n, _sorted_chain(ang, closed=True), embedding=ang, topology=spec)
    raise InvalidSpec(spec.kind)


def build_graph(spec: TopologySpec, seed: int = 0) -> Graph:
    """Draw a connected graph from ``spec``; identical (spec, seed) give identical graphs."""
    spec.validate()
    if spec.kind == "line":
        return Graph.from_edges(spec.n, _line(spec.n), topology=spec)
    if spec.kind == "ring":
        return Graph.from_edges(spec.n, _ring(spec.n), topology=spec)
    for attempt in range(MAX_CONNECT_ATTEMPTS):
        g = _generate(spec, rng.generator(seed, "graph", attempt))
        if is_connected(g):
            return g
    raise ConnectivityFailure(
        f"{spec.kind}(n={spec.n}, {spec.params_label()}) not connected after "
        f"{MAX_CONNECT_ATTEMPTS} attempts"
    )


# ---- distances and attributes ----------------------------------------------


def distances_up_to_k(g: Graph, u: int, k: int) -> DistanceField:
    if not 0 <= u < g.n:
        raise ValueError(f"vertex {u} out of range")
    if k < 1:
        raise ValueError("k must be >= 1")
    dist = {u: 0}
    q = deque([u])
    while q:
        w = q.popleft()
        d = dist[w]
        if d == k:
            continue
        for x in g.neighbors(w).tolist():
            if x not in dist:
                dist[x] = d + 1
                q.append(x)
    return DistanceField(u, k, dist)


def is_connected(g: Graph) -> bool:
    if g.n <= 1:
        return True
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        w = stack.pop()
        nb = g.neighbors(w)
        new = nb[~seen[nb]]
        seen[new] = True
        stack.extend(new.tolist())
    return bool(seen.all())


def graph_density(g: Graph) -> float:
    return 2.0 * g.num_edges / (g.n * (g.n - 1))


def _bfs_chunks(g: Graph, chunk: int = 512):
    for start in range(0, g.n, chunk):
        src = np.arange(start, min(start + chunk, g.n))
        yield src, kernels.bfs_rows(g.indptr, g.indices, src)


def average_path_length(g: Graph) -> float:
    total = 0
    for _, rows in _bfs_chunks(g):
        if (rows < 0).any():
            raise Disconnected("graph has unreachable vertex pairs")
        total += int(rows.sum(dtype=np.int64))
    return total / (g.n * (g.n - 1))


def diameter(g: Graph) -> int:
    best = 0
    for _, rows in _bfs_chunks(g):
        if (rows < 0).any():
            raise Disconnected("graph has unreachable vertex pairs")
        best = max(best, int(rows.max()))
    return best


def all_pairs_hops(g: Graph) -> np.ndarray:
    return kernels.bfs_rows(g.indptr, g.indices, np.arange(g.n))


def pair_hops(g: Graph, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Hop distance for each (src[i], dst[i]); one BFS per distinct source."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    out = np.empty(len(src), dtype=np.int32)
    uniq, inv = np.unique(src, return_inverse=True)
    for start in range(0, len(uniq), 256):
        block = uniq[start : start + 256]
        rows = kernels.bfs_rows(g.indptr, g.indices, block)
        sel = (inv >= start) & (inv < start + len(block))
        out[sel] = rows[inv[sel] - start, dst[sel]]
    return out


# ---- edge-list format -------------------------------------------------------


def write_edgelist(g: Graph, dest: str | Path | IO[str]) -> None:
    lines = [f"n {g.n}"]
    lines += [f"{u} {v}" for u, v in g.edges().tolist()]
    if g.embedding is not None:
        emb = g.embedding.reshape(g.n, -1)
        lines += [f"pos {v} " + " ".join(repr(float(c)) for c in emb[v]) for v in range(g.n)]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)


def read_edgelist(src: str | Path | IO[str]) -> Graph:
    text = src.read() if hasattr(src, "read") else Path(src).read_text()
    n = None
    edges: list[tuple[int, int]] = []
    pos: dict[int, list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "n":
                n = int(parts[1])
            elif parts[0] == "pos":
                pos[int(parts[1])] = [float(x) for x in parts[2:]]
            else:
                u, v = int(parts[0]), int(parts[1])
                edges.append((u, v))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}") from exc
    if n is None:
        raise ValueError("missing header line 'n <count>'")
    emb = None
    if pos:
        if len(pos) != n:
            raise ValueError("embedding must list every vertex")
        emb = np.array([pos[v] for v in range(n)])
        if emb.shape[1] == 1:
            emb = emb[:, 0]
    return Graph.from_edges(n, edges, embedding=emb)
