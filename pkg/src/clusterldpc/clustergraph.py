"""LTRIP cluster-graph construction, RIP validation and layered scheduling."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .gf2code import ParityCheckMatrix

log = logging.getLogger(__name__)

Edge = tuple[int, int]


def _edge(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass
class ClusterGraph:
    """Clusters (variable sets) joined by sepsets keyed on ordered id pairs ``(i, j)``, ``i < j``."""

    clusters: tuple[frozenset[int], ...]
    sepsets: dict[Edge, frozenset[int]] = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def edges(self) -> list[Edge]:
        return sorted(self.sepsets)

    def neighbours(self, i: int) -> list[int]:
        return self.adjacency[i]

    @property
    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.clusters]
        for a, b in self.sepsets:
            adj[a].append(b)
            adj[b].append(a)
        return [sorted(x) for x in adj]

    def sepset(self, i: int, j: int) -> frozenset[int]:
        return self.sepsets[_edge(i, j)]

    def add_to_sepset(self, i: int, j: int, var: int) -> None:
        e = _edge(i, j)
        self.sepsets[e] = self.sepsets.get(e, frozenset()) | {var}

    def variables(self) -> list[int]:
        return sorted(set().union(*self.clusters)) if self.clusters else []

    def dump(self, schedule: "MessageSchedule | None" = None,
             attachment: "BitAttachment | None" = None) -> str:
        """Human-readable structured text (used by ``build-graph``)."""
        out = [f"clusters {self.n_clusters}"]
        for i, c in enumerate(self.clusters):
            out.append(f"  phi{i} card={len(c)} vars={sorted(c)}")
        out.append(f"sepsets {len(self.sepsets)}")
        for (a, b) in self.edges:
            out.append(f"  phi{a} -- phi{b} : {sorted(self.sepsets[(a, b)])}")
        if schedule is not None:
            out.append(f"layers {len(schedule.layers)}")
            for k, layer in enumerate(schedule.layers):
                out.append(f"  layer{k}: {['phi%d' % c for c in layer]}")
            out.append(f"schedule pairs {len(schedule.ordered_pairs)}")
            out.append("  " + " ".join(f"{s}->{d}" for s, d in schedule.ordered_pairs))
        if attachment is not None:
            out.append("bit attachment")
            for n, j in sorted(attachment.cluster_of.items()):
                note = " (fallback)" if n in attachment.fallback else ""
                out.append(f"  b{n} -> phi{j}{note}")
        return "\n".join(out) + "\n"


def clusters_from_matrix(h: ParityCheckMatrix) -> list[frozenset[int]]:
    return [frozenset(r) for r in h.row_support]


# -------------------------------------------------------------------- LTRIP


class _DisjointSet:
    def __init__(self, items: Iterable[int]):
        self.parent = {i: i for i in items}

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def build_ltrip(clusters: Sequence[Iterable[int]], bonus: float = 0.5) -> ClusterGraph:
    """Layered-trees construction: one maximum spanning tree per variable.

    For variable ``v``, the complete graph over clusters containing ``v`` is
    weighted by ``|C_i & C_j|`` (plus ``bonus`` if ``i``-``j`` already carries a
    sepset from an earlier variable) and Kruskal picks a maximum-weight
    spanning tree, ties broken by ``(min id, max id)``. ``v`` is added to the
    sepset of every tree edge. Variables are processed in ascending order.
    """
    cl = tuple(frozenset(int(v) for v in c) for c in clusters)
    if not cl:
        raise ValueError("need at least one cluster")
    g = ClusterGraph(cl)
    holders: dict[int, list[int]] = defaultdict(list)
    for i, c in enumerate(cl):
        for v in c:
            holders[v].append(i)
    for v in sorted(holders):
        ids = holders[v]
        if len(ids) < 2:
            continue
        cand = []
        for a_pos, a in enumerate(ids):
            for b in ids[a_pos + 1:]:
                w = len(cl[a] & cl[b]) + (bonus if (a, b) in g.sepsets else 0.0)
                cand.append((-w, a, b))
        cand.sort()
        ds = _DisjointSet(ids)
        added = 0
        for _, a, b in cand:
            if ds.union(a, b):
                g.add_to_sepset(a, b, v)
                added += 1
                if added == len(ids) - 1:
                    break
    return g


# ---------------------------------------------------------------------- RIP


@dataclass(frozen=True)
class RipViolation:
    variable: int | None
    kind: str  # "cycle", "disconnected", "bad-sepset"
    detail: str

    def __str__(self) -> str:
        who = "" if self.variable is None else f"variable {self.variable}: "
        return f"{who}{self.kind}: {self.detail}"


def validate_rip(g: ClusterGraph) -> list[RipViolation]:
    """Check every sepset and every per-variable subgraph; empty list means valid."""
    out: list[RipViolation] = []
    for (a, b), s in g.sepsets.items():
        if not s:
            out.append(RipViolation(None, "bad-sepset", f"empty sepset on edge {a}-{b}"))
        elif not (s <= g.clusters[a] and s <= g.clusters[b]):
            out.append(RipViolation(None, "bad-sepset", f"sepset {sorted(s)} of edge {a}-{b} "
                                                        "is not a subset of both clusters"))
    holders: dict[int, list[int]] = defaultdict(list)
    for i, c in enumerate(g.clusters):
        for v in c:
            holders[v].append(i)
    carrying: dict[int, list[Edge]] = defaultdict(list)
    for e, s in g.sepsets.items():
        for v in s:
            carrying[v].append(e)
    for v in sorted(holders):
        nodes = holders[v]
        ds = _DisjointSet(nodes)
        for a, b in sorted(carrying.get(v, [])):
            if a not in ds.parent or b not in ds.parent:
                continue  # already reported as bad-sepset
            if not ds.union(a, b):
                out.append(RipViolation(v, "cycle", f"edge {a}-{b} closes a loop"))
        roots = {ds.find(i) for i in nodes}
        if len(roots) > 1:
            comps = defaultdict(list)
            for i in nodes:
                comps[ds.find(i)].append(i)
            parts = sorted(sorted(c) for c in comps.values())
            out.append(RipViolation(v, "disconnected", f"components {parts}"))
    return out


# ----------------------------------------------------------------- schedule


@dataclass(frozen=True)
class MessageSchedule:
    """Breadth-first layering from the large clusters.

    ``ordered_pairs`` are (source, destination) in discovery order, i.e.
    outward from layer 0. ``layers[-1]`` is the first parity-check layer.
    """

    ordered_pairs: tuple[tuple[int, int], ...]
    layers: tuple[tuple[int, ...], ...]

    @property
    def first_parity_layer(self) -> tuple[int, ...]:
        return self.layers[-1]

    def layer_of(self) -> dict[int, int]:
        return {c: k for k, layer in enumerate(self.layers) for c in layer}

    @property
    def inward(self) -> list[tuple[int, int]]:
        """Pairs flowing toward layer 0 (reverse order, reversed direction)."""
        return [(d, s) for s, d in reversed(self.ordered_pairs)]

    @property
    def outward(self) -> list[tuple[int, int]]:
        return list(self.ordered_pairs)


def layered_schedule(g: ClusterGraph, large_ids: Iterable[int]) -> MessageSchedule:
    """Layered message passing schedule from the selected large clusters.

    Sources within a layer are visited in ascending id order. A connected
    component that holds no large cluster is seeded from its largest cluster
    (lowest id on ties) once the reachable part is exhausted.
    """
    current = sorted(set(int(i) for i in large_ids))
    if not current:
        raise ValueError("large_ids must be non-empty")
    for i in current:
        if not 0 <= i < g.n_clusters:
            raise ValueError(f"cluster id {i} out of range")
    adj = g.adjacency
    available = set(range(g.n_clusters))
    pairs: list[tuple[int, int]] = []
    layers: list[tuple[int, ...]] = []
    while available:
        if not current:
            seed = min(available, key=lambda c: (-len(g.clusters[c]), c))
            log.debug("schedule: reseeding disconnected component at cluster %d", seed)
            current = [seed]
        layers.append(tuple(current))
        in_layer = set(current)
        nxt: set[int] = set()
        for s in current:
            available.discard(s)
            for n in adj[s]:
                if n in available:
                    pairs.append((s, n))
                    if n not in in_layer:
                        nxt.add(n)
        current = sorted(nxt)
    return MessageSchedule(tuple(pairs), tuple(layers))


def select_large_clusters(clusters: Sequence[Iterable[int]], policy=None) -> set[int]:
    """Pick the clusters that anchor layer 0.

    ``policy`` may be None (clusters whose cardinality is one of the two
    largest distinct values), an explicit iterable of ids, or an int
    minimum cardinality.
    """
    sizes = [len(set(c)) for c in clusters]
    if policy is None:
        top = sorted(set(sizes), reverse=True)[:2]
        chosen = {i for i, s in enumerate(sizes) if s in top}
    elif isinstance(policy, int):
        chosen = {i for i, s in enumerate(sizes) if s >= policy}
    else:
        chosen = {int(i) for i in policy}
        bad = [i for i in chosen if not 0 <= i < len(sizes)]
        if bad:
            raise ValueError(f"cluster ids out of range: {bad}")
    if not chosen:
        raise ValueError("large-cluster selection is empty")
    return chosen


# ----------------------------------------------------------- bit attachment


@dataclass(frozen=True)
class BitAttachment:
    """Which parity cluster each observed bit node couples to."""

    cluster_of: dict[int, int]
    fallback: frozenset[int] = frozenset()

    def __getitem__(self, n: int) -> int:
        return self.cluster_of[n]

    def __len__(self) -> int:
        return len(self.cluster_of)

    def as_list(self) -> list[int]:
        return [self.cluster_of[n] for n in range(len(self.cluster_of))]


def attach_bits(g: ClusterGraph, schedule: MessageSchedule, n_bits: int | None = None) -> BitAttachment:
    """Attach each bit to the smallest cluster holding it in the outermost layer possible."""
    n_bits = n_bits if n_bits is not None else (max(g.variables()) + 1 if g.clusters else 0)
    out: dict[int, int] = {}
    fallback = set()
    for n in range(n_bits):
        for depth, layer in enumerate(reversed(schedule.layers)):
            cand = [c for c in layer if n in g.clusters[c]]
            if cand:
                out[n] = min(cand, key=lambda c: (len(g.clusters[c]), c))
                if depth > 0:
                    fallback.add(n)
                break
        else:
            raise ValueError(f"bit {n} appears in no cluster")
    if fallback:
        log.debug("bits attached outside the first parity layer: %s", sorted(fallback))
    return BitAttachment(out, frozenset(fallback))


@dataclass(frozen=True)
class CodeGraph:
    """Everything the decoder needs that depends only on H."""

    h: ParityCheckMatrix
    graph: ClusterGraph
    schedule: MessageSchedule
    attachment: BitAttachment
    large_ids: frozenset[int]


def compile_code(h: ParityCheckMatrix, large_policy=None) -> CodeGraph:
    clusters = clusters_from_matrix(h)
    g = build_ltrip(clusters)
    large = select_large_clusters(clusters, large_policy)
    sched = layered_schedule(g, large)
    att = attach_bits(g, sched, h.n_cols)
    return CodeGraph(h, g, sched, att, frozenset(large))
