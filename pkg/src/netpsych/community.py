"""Community detection on weighted item networks: walktrap and louvain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class CommunityPartition:
    """Items assigned to communities numbered 1..k in order of first appearance."""

    nodes: tuple[str, ...]
    membership: tuple[int, ...]
    modularity: float

    @property
    def assignment(self) -> dict[str, int]:
        return dict(zip(self.nodes, self.membership))

    @property
    def n_communities(self) -> int:
        return len(set(self.membership))

    def communities(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for node, c in zip(self.nodes, self.membership):
            out.setdefault(c, []).append(node)
        return dict(sorted(out.items()))

    def as_factor_sets(self, prefix: str = "") -> dict[str, list[str]]:
        return {f"{prefix}{c}": items for c, items in self.communities().items()}

    def to_dict(self) -> dict:
        return {"assignment": self.assignment, "n_communities": self.n_communities,
                "modularity": self.modularity}


def canonical_labels(labels: Sequence) -> tuple[int, ...]:
    """Relabel to 1..k by order of first appearance."""
    seen: dict = {}
    return tuple(seen.setdefault(l, len(seen) + 1) for l in labels)


def _abs_adjacency(network) -> tuple[tuple[str, ...], np.ndarray]:
    if hasattr(network, "weights"):
        nodes, w = tuple(network.nodes), np.asarray(network.weights, dtype=float)
    else:
        w = np.asarray(network, dtype=float)
        nodes = tuple(str(i) for i in range(w.shape[0]))
    w = np.abs(w)
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    return nodes, w


def modularity(network, membership, resolution: float = 1.0) -> float:
    """Weighted Newman modularity over absolute edge weights.

    ``membership`` is a sequence aligned with the nodes or a mapping
    node -> community.
    """
    nodes, w = _abs_adjacency(network)
    if isinstance(membership, Mapping):
        missing = [n for n in nodes if n not in membership]
        if missing:
            raise ValueError(f"assignment does not cover nodes {missing}")
        membership = [membership[n] for n in nodes]
    membership = np.asarray(membership)
    if membership.shape[0] != len(nodes):
        raise ValueError("assignment does not cover all nodes")
    two_m = w.sum()
    if two_m == 0:
        return 0.0
    k = w.sum(axis=1)
    same = membership[:, None] == membership[None, :]
    return float(((w - resolution * np.outer(k, k) / two_m) * same).sum() / two_m)


def _walktrap_merges(w: np.ndarray, steps: int):
    """Agglomerate by random-walk distance; yields the membership after each merge."""
    n = w.shape[0]
    a = w.copy()
    deg = (a > 0).sum(axis=1)
    strength = a.sum(axis=1)
    loops = np.where(deg > 0, strength / np.maximum(deg, 1), 1.0)
    a[np.diag_indices(n)] = loops
    d = a.sum(axis=1)
    P = a / d[:, None]
    Pt = np.linalg.matrix_power(P, steps)
    inv_sqrt_d = 1.0 / np.sqrt(d)

    # community id = smallest member index
    members = {i: [i] for i in range(n)}
    prob = {i: Pt[i] * inv_sqrt_d for i in range(n)}
    adj = {i: set(np.flatnonzero(w[i] > 0).tolist()) for i in range(n)}
    labels = np.arange(n)
    history = [labels.copy()]
    while True:
        best = None
        for c1 in sorted(members):
            for c2 in sorted(adj[c1]):
                if c2 <= c1:
                    continue
                n1, n2 = len(members[c1]), len(members[c2])
                diff = prob[c1] - prob[c2]
                ds = (n1 * n2 / (n1 + n2)) * float(diff @ diff) / n
                if best is None or ds < best[0] - _TIE_EPS * max(1.0, abs(best[0])):
                    best = (ds, c1, c2)
        if best is None:
            break
        _, c1, c2 = best
        n1, n2 = len(members[c1]), len(members[c2])
        prob[c1] = (n1 * prob[c1] + n2 * prob[c2]) / (n1 + n2)
        members[c1] = sorted(members[c1] + members.pop(c2))
        del prob[c2]
        nb = (adj[c1] | adj.pop(c2)) - {c1, c2}
        adj[c1] = nb
        for c in nb:
            adj[c].discard(c2)
            adj[c].add(c1)
        labels[members[c1]] = c1
        history.append(labels.copy())
    return history


def walktrap(network, steps: int = 4, n_communities: int | None = None) -> CommunityPartition:
    """Walktrap communities: the modularity-maximizing cut of the merge tree.

    With ``n_communities`` the cut with that many communities is returned
    instead (or the closest reachable count above it when components keep
    the tree from merging further). Merges only join communities that share
    an edge, so components are never merged.
    """
    nodes, w = _abs_adjacency(network)
    if len(nodes) == 0:
        raise ValueError("network has no nodes")
    history = _walktrap_merges(w, steps)
    if n_communities is not None:
        counts = [len(set(h.tolist())) for h in history]
        ok = [i for i, c in enumerate(counts) if c >= n_communities]
        pick = min(ok, key=lambda i: (counts[i] - n_communities, i))
        labels = history[pick]
    else:
        scores = [modularity(w, h) for h in history]
        top = max(scores)
        # ties toward the coarser cut
        pick = max(i for i, s in enumerate(scores) if s >= top - _TIE_EPS)
        labels = history[pick]
    membership = canonical_labels(labels.tolist())
    return CommunityPartition(nodes, membership, modularity(w, membership))


def louvain(network, resolution: float = 1.0, max_levels: int = 50) -> CommunityPartition:
    """Greedy two-phase modularity optimization.

    Nodes are visited in index order and ties keep the lowest community id,
    so the result is deterministic for a fixed node order.
    """
    nodes, w = _abs_adjacency(network)
    n = len(nodes)
    if n == 0:
        raise ValueError("network has no nodes")
    two_m = w.sum()
    if two_m == 0:
        membership = canonical_labels(range(n))
        return CommunityPartition(nodes, membership, 0.0)

    node_comm = np.arange(n)
    g = w.copy()
    for _ in range(max_levels):
        size = g.shape[0]
        comm = np.arange(size)
        k = g.sum(axis=1)
        loops = np.diag(g).copy()
        tot = k.copy()
        improved = False
        moved = True
        while moved:
            moved = False
            for i in range(size):
                ci = comm[i]
                tot[ci] -= k[i]
                links = np.bincount(comm, weights=g[i], minlength=size)
                links[ci] -= loops[i]
                cand = np.unique(np.concatenate(([ci], comm[g[i] > 0])))
                gains = links[cand] - resolution * tot[cand] * k[i] / two_m
                best = cand[int(np.argmax(gains))]
                if gains[cand == ci][0] >= gains.max() - _TIE_EPS:
                    best = ci
                tot[best] += k[i]
                if best != ci:
                    comm[i] = best
                    moved = improved = True
        if not improved:
            break
        labels = np.unique(comm, return_inverse=True)[1]
        node_comm = labels[node_comm]
        m = labels.max() + 1
        agg = np.zeros((m, m))
        np.add.at(agg, (labels[:, None], labels[None, :]), g)
        g = agg
        if m == 1:
            break
    membership = canonical_labels(node_comm.tolist())
    return CommunityPartition(nodes, membership, modularity(w, membership))


def partition_from_sets(factor_sets: Mapping[str, Sequence[str]], nodes: Sequence[str]) -> CommunityPartition:
    """Build a partition from named item sets covering ``nodes``."""
    lookup = {}
    for name, items in factor_sets.items():
        for it in items:
            lookup[str(it)] = name
    missing = [n for n in nodes if n not in lookup]
    if missing:
        raise ValueError(f"factor sets do not cover items {missing}")
    return CommunityPartition(tuple(nodes), canonical_labels([lookup[n] for n in nodes]), float("nan"))
