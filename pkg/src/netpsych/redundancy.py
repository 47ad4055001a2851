"""Unique variable analysis: weighted topological overlap between items."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BANDS = (
    ("large", 0.30, np.inf),
    ("moderate", 0.25, 0.30),
    ("small-to-moderate", 0.20, 0.25),
)


def wto_matrix(network) -> np.ndarray:
    """Weighted topological overlap on absolute network weights.

    wTO_ij = (sum_u |w_iu||w_uj| + |w_ij|) / (min(k_i, k_j) + 1 - |w_ij|)
    with k_i the absolute strength of node i. The diagonal is zero.
    """
    w = np.abs(np.asarray(getattr(network, "weights", network), dtype=float))
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    if w.shape[0] < 2:
        raise ValueError("wTO needs at least two nodes")
    k = w.sum(axis=1)
    num = w @ w + w
    den = np.minimum.outer(k, k) + 1.0 - w
    out = num / den
    np.fill_diagonal(out, 0.0)
    return out


@dataclass(frozen=True)
class RedundantPair:
    item_a: str
    item_b: str
    wto: float
    band: str


@dataclass(frozen=True)
class RedundancyReport:
    pairs: tuple[RedundantPair, ...]
    thresholds: tuple[float, float] = (0.20, 0.30)

    def band(self, name: str) -> list[RedundantPair]:
        return [p for p in self.pairs if p.band == name]

    def lookup(self, a: str, b: str) -> RedundantPair | None:
        for p in self.pairs:
            if {p.item_a, p.item_b} == {a, b}:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "thresholds": {"flag": self.thresholds[0], "conservative": self.thresholds[1]},
            "pairs": [{"item_a": p.item_a, "item_b": p.item_b, "wto": p.wto, "band": p.band}
                      for p in self.pairs],
        }

    def to_markdown(self) -> str:
        lines = ["| item A | item B | wTO | band |", "|---|---|---|---|"]
        for p in self.pairs:
            lines.append(f"| {p.item_a} | {p.item_b} | {p.wto:.3f} | {p.band} |")
        if not self.pairs:
            lines.append("| - | - | - | no pair at or above the flag threshold |")
        return "\n".join(lines) + "\n"


def band_of(value: float, flag: float = 0.20, conservative: float = 0.30) -> str | None:
    if value >= conservative:
        return "large"
    if value >= (flag + conservative) / 2:
        return "moderate"
    if value >= flag:
        return "small-to-moderate"
    return None


def flag_redundant(wto: np.ndarray, nodes, flag: float = 0.20, conservative: float = 0.30) -> RedundancyReport:
    """Pairs with wTO at or above ``flag``, sorted by descending wTO and banded."""
    wto = np.asarray(wto, dtype=float)
    nodes = [str(n) for n in nodes]
    iu, ju = np.triu_indices(len(nodes), 1)
    pairs = []
    for i, j in zip(iu, ju):
        band = band_of(wto[i, j], flag, conservative)
        if band is not None:
            pairs.append(RedundantPair(nodes[i], nodes[j], float(wto[i, j]), band))
    pairs.sort(key=lambda p: (-p.wto, nodes.index(p.item_a), nodes.index(p.item_b)))
    return RedundancyReport(tuple(pairs), (flag, conservative))
