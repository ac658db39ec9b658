"""Peer-sampling distributions for POT, Unif-POT(k) and InvSq-POT(k).

A proximity table stores, per origin, its k-hop neighbourhood in BFS order
grouped into distance layers. All vertices of a layer share one probability,
so a draw picks the layer by binary search over the layer cumulative
probabilities and then a uniform position inside it, from a single variate.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _pycore, kernels
from .graph import Graph, all_pairs_hops

__all__ = [
    "PolicyKind",
    "SamplingTable",
    "Choice",
    "build_sampling_table",
    "sample_peer",
    "probability",
    "allocate",
]

POLICIES = ("pot", "unif", "invsq")


@dataclass(frozen=True)
class PolicyKind:
    name: str
    k: int | None = None

    def __post_init__(self):
        if self.name not in POLICIES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {POLICIES}")
        if self.name == "pot":
            object.__setattr__(self, "k", None)
        elif self.k is None or int(self.k) != self.k or self.k < 1:
            raise ValueError(f"{self.name} needs an integer hop radius k >= 1, got {self.k}")

    @classmethod
    def pot(cls) -> "PolicyKind":
        return cls("pot")

    @classmethod
    def unif(cls, k: int) -> "PolicyKind":
        return cls("unif", k)

    @classmethod
    def invsq(cls, k: int) -> "PolicyKind":
        return cls("invsq", k)

    @property
    def label(self) -> str:
        if self.name == "pot":
            return "POT"
        return f"{'Unif' if self.name == 'unif' else 'InvSq'}-POT({self.k})"


class Choice(enum.Enum):
    ORIGIN = "origin"
    PEER = "peer"


class SamplingTable:
    """Immutable per-origin sampling distribution over candidate peers."""

    def __init__(self, g: Graph, policy: PolicyKind):
        self.graph = g
        self.policy = policy
        self.n = g.n
        n = g.n
        if n == 1:
            self.kind = kernels.KIND_NONE
        elif policy.name == "pot" or (policy.name == "unif" and policy.k >= n - 1):
            # N_k(u) = V \ {u} for every u once k >= n - 1
            self.kind = kernels.KIND_POT
        else:
            self.kind = kernels.KIND_LAYERED
        empty_i = np.zeros(0, dtype=np.int32)
        empty_l = np.zeros(n + 1, dtype=np.int64)
        self.order, self.optr, self.lsize, self.lptr = empty_i, empty_l, empty_i, empty_l
        self.lstart = np.zeros(0, dtype=np.int64)
        self.lcum = np.zeros(0, dtype=np.float64)
        self.lprob = np.zeros(0, dtype=np.float64)
        if self.kind == kernels.KIND_LAYERED:
            self._build_layers()
        for arr in (self.order, self.optr, self.lsize, self.lptr, self.lstart, self.lcum, self.lprob):
            arr.setflags(write=False)

    def _build_layers(self) -> None:
        order, optr, lsize, lptr = kernels.khop_layers(
            self.graph.indptr, self.graph.indices, int(self.policy.k)
        )
        nl = len(lsize)
        lstart = np.empty(nl, dtype=np.int64)
        lcum = np.empty(nl, dtype=np.float64)
        lprob = np.empty(nl, dtype=np.float64)
        invsq = self.policy.name == "invsq"
        for u in range(self.n):
            a, b = int(lptr[u]), int(lptr[u + 1])
            if a == b:
                raise ValueError(f"vertex {u} has an empty {self.policy.k}-hop neighbourhood")
            sizes = lsize[a:b].astype(np.float64)
            w = 1.0 / np.arange(1, b - a + 1, dtype=np.float64) ** 2 if invsq else np.ones(b - a)
            mass = sizes * w
            total = math.fsum(mass.tolist())
            lprob[a:b] = w / total
            cum = np.cumsum(mass) / total
            cum[-1] = 1.0
            lcum[a:b] = cum
            lstart[a] = 0
            lstart[a + 1 : b] = np.cumsum(lsize[a : b - 1])
        self.order, self.optr, self.lsize, self.lptr = order, optr, lsize, lptr
        self.lstart, self.lcum, self.lprob = lstart, lcum, lprob

    # ---- queries -------------------------------------------------------------

    def candidates(self, u: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(peer ids, hop distances, probabilities, cumulative probabilities) for origin ``u``."""
        if self.kind == kernels.KIND_NONE:
            z = np.zeros(0)
            return z.astype(np.int32), z.astype(np.int32), z, z
        if self.kind == kernels.KIND_POT:
            peers = np.delete(np.arange(self.n, dtype=np.int32), u)
            hops = all_pairs_hops_row(self.graph, u)[peers]
            probs = np.full(self.n - 1, 1.0 / (self.n - 1))
            return peers, hops, probs, np.cumsum(probs)
        a, b = int(self.lptr[u]), int(self.lptr[u + 1])
        sizes = self.lsize[a:b]
        peers = self.order[self.optr[u] : self.optr[u + 1]]
        hops = np.repeat(np.arange(1, b - a + 1, dtype=np.int32), sizes)
        probs = np.repeat(self.lprob[a:b], sizes)
        return peers, hops, probs, np.cumsum(probs)

    def probability(self, u: int, v: int) -> float:
        if u == v or self.kind == kernels.KIND_NONE:
            return 0.0
        if self.kind == kernels.KIND_POT:
            return 1.0 / (self.n - 1)
        seg = self.order[self.optr[u] : self.optr[u + 1]]
        hit = np.flatnonzero(seg == v)
        if not len(hit):
            return 0.0
        a, b = int(self.lptr[u]), int(self.lptr[u + 1])
        layer = int(np.searchsorted(self.lstart[a:b], hit[0], side="right")) - 1
        return float(self.lprob[a + layer])

    def dense(self) -> np.ndarray:
        """Full n x n matrix of p_uv (small graphs only)."""
        P = np.zeros((self.n, self.n))
        for u in range(self.n):
            peers, _, probs, _ = self.candidates(u)
            P[u, peers] = probs
        return P

    # ---- kernel interface ----------------------------------------------------

    def kernel_spec(self, need_hops: bool = False) -> dict:
        """Arrays consumed by the compiled/pure kernels.

        POT hop distances come from a closed form on line/ring graphs, from an
        all-pairs matrix when ``need_hops`` is set, and otherwise are left at
        -1 for the caller to fill in.
        """
        dist_mode, rank, distmat = kernels.DIST_UNKNOWN, np.zeros(1, dtype=np.int64), None
        if self.kind == kernels.KIND_POT:
            chain = self.graph.chain()
            if chain is not None:
                dist_mode = kernels.DIST_RING if chain[0] == "ring" else kernels.DIST_LINE
                rank = chain[1]
            elif need_hops:
                dist_mode, distmat = kernels.DIST_MATRIX, self._distmat
        return {
            "kind": self.kind,
            "n": self.n,
            "order": self.order,
            "optr": self.optr,
            "lcum": self.lcum,
            "lsize": self.lsize,
            "lstart": self.lstart,
            "lptr": self.lptr,
            "dist_mode": dist_mode,
            "rank": rank,
            "distmat": distmat,
        }

    @cached_property
    def _distmat(self) -> np.ndarray:
        return all_pairs_hops(self.graph)

    @cached_property
    def _sampler(self) -> "_pycore._Sampler":
        return _pycore._Sampler(self.kernel_spec(need_hops=False))

    def draw(self, u: int, x: float) -> tuple[int, int]:
        """Peer and its hop distance for uniform variate ``x`` (hop -1 if unknown)."""
        if self.kind == kernels.KIND_NONE:
            raise ValueError("single-server graph has no peers")
        return self._sampler.draw(u, x)


def all_pairs_hops_row(g: Graph, u: int) -> np.ndarray:
    return kernels.bfs_rows(g.indptr, g.indices, np.array([u]))[0]


def build_sampling_table(g: Graph, policy: PolicyKind) -> SamplingTable:
    return SamplingTable(g, policy)


def sample_peer(table: SamplingTable, u: int, gen: np.random.Generator) -> int:
    return table.draw(u, gen.random())[0]


def probability(table: SamplingTable, u: int, v: int) -> float:
    return table.probability(u, v)


def allocate(load_u: int, load_v: int, gen: np.random.Generator) -> Choice:
    """Least-loaded of origin and peer, fair coin on a tie."""
    if load_u < load_v:
        return Choice.ORIGIN
    if load_v < load_u:
        return Choice.PEER
    return Choice.ORIGIN if gen.random() < 0.5 else Choice.PEER
