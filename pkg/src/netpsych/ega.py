"""Exploratory graph analysis: correlations -> PD repair -> EBIC glasso -> communities."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import community
from .association import (AssociationMatrix, association_matrix, cross_kendall,
                          nearest_positive_definite)
from .community import CommunityPartition, canonical_labels
from .dataset import LikertMatrix, factor_scores
from .glasso import PartialCorrelationNetwork, select_lambda

# loading of the four orthogonal marker variables used by the unidimensionality check
_UNIDIM_LOADING = 0.7
_UNIDIM_ITEMS = 4


class EgaStageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class EgaConfig:
    corr_method: str = "auto"
    gamma: float = 0.5
    n_lambda: int = 100
    lambda_ratio: float = 0.01
    steps: int = 4
    algorithm: str = "walktrap"
    resolution: float = 1.0
    unidim_check: bool = True
    pd_floor: float = 1e-6


@dataclass(frozen=True)
class EgaResult:
    network: PartialCorrelationNetwork
    partition: CommunityPartition
    correlation: AssociationMatrix
    method_metadata: dict = field(default_factory=dict)

    @property
    def item_order(self) -> tuple[str, ...]:
        return self.network.nodes

    @property
    def n_communities(self) -> int:
        return self.partition.n_communities

    def to_dict(self) -> dict:
        return {
            "item_order": list(self.item_order),
            "n_communities": self.n_communities,
            "partition": self.partition.to_dict(),
            "network": self.network.to_dict(),
            "metadata": self.method_metadata,
        }


def _detect(network: PartialCorrelationNetwork, config: EgaConfig, n_communities=None) -> CommunityPartition:
    if config.algorithm == "walktrap":
        return community.walktrap(network, config.steps, n_communities=n_communities)
    if config.algorithm == "louvain":
        if n_communities is not None:
            raise ValueError("louvain cannot target a community count")
        return community.louvain(network, config.resolution)
    raise ValueError(f"unknown community algorithm {config.algorithm!r}")


def _is_unidimensional(corr: np.ndarray, n: int, config: EgaConfig) -> bool:
    """Append orthogonal marker variables; one community among the real items
    means unidimensional."""
    p = corr.shape[0]
    q = _UNIDIM_ITEMS
    aug = np.eye(p + q)
    aug[:p, :p] = corr
    block = np.full((q, q), _UNIDIM_LOADING ** 2)
    np.fill_diagonal(block, 1.0)
    aug[p:, p:] = block
    net = select_lambda(aug, n, config.gamma, config.n_lambda, config.lambda_ratio)
    part = _detect(net, config)
    return len(set(part.membership[:p])) == 1


def ega_from_correlation(corr: np.ndarray, n: int, nodes: Sequence[str], config: EgaConfig,
                         n_communities: int | None = None) -> tuple[PartialCorrelationNetwork, CommunityPartition, dict]:
    nodes = tuple(nodes)
    try:
        R = nearest_positive_definite(corr, config.pd_floor)
    except Exception as exc:  # pragma: no cover - eigh failure
        raise EgaStageError("pd_repair", str(exc)) from exc
    try:
        net = select_lambda(R, n, config.gamma, config.n_lambda, config.lambda_ratio, nodes=nodes)
    except Exception as exc:
        raise EgaStageError("glasso", str(exc)) from exc
    unidim = False
    try:
        if n_communities == 1:
            part = CommunityPartition(nodes, (1,) * len(nodes), 0.0)
        elif n_communities is None and config.unidim_check and _is_unidimensional(R, n, config):
            unidim = True
            part = CommunityPartition(nodes, (1,) * len(nodes), 0.0)
        else:
            part = _detect(net, config, n_communities)
    except EgaStageError:
        raise
    except Exception as exc:
        raise EgaStageError("community", str(exc)) from exc
    meta = {
        "correlation_method": config.corr_method,
        "lambda": net.lambda_selected,
        "gamma": config.gamma,
        "ebic": net.ebic,
        "n_lambda": config.n_lambda,
        "lambda_ratio": config.lambda_ratio,
        "algorithm": config.algorithm,
        "steps": config.steps,
        "unidimensional": unidim,
        "n": int(n),
        "lambda_path_monotone": net.path.get("monotone"),
    }
    if n_communities is not None:
        meta["target_communities"] = n_communities
    return net, part, meta


def run_ega(matrix: LikertMatrix, config: EgaConfig | None = None,
            n_communities: int | None = None) -> EgaResult:
    """Full EGA on a response matrix; errors carry the failing stage name."""
    config = config or EgaConfig()
    if matrix.n_items < 3:
        raise EgaStageError("input", "EGA needs at least 3 items")
    try:
        corr = association_matrix(matrix, config.corr_method)
    except Exception as exc:
        raise EgaStageError("correlation", str(exc)) from exc
    net, part, meta = ega_from_correlation(corr.coefficients, matrix.n_respondents,
                                           matrix.item_ids, config, n_communities)
    return EgaResult(net, part, corr, meta)


# --------------------------------------------------------------------------
# comparing structures

FactorSets = Mapping[str, Sequence[str]]


def _as_sets(x, prefix: str) -> dict[str, set[str]]:
    if isinstance(x, CommunityPartition):
        return {k: set(v) for k, v in x.as_factor_sets(prefix).items()}
    return {str(k): set(str(i) for i in v) for k, v in x.items()}


@dataclass(frozen=True)
class JaccardMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    values: np.ndarray

    def get(self, row: str, col: str) -> float:
        return float(self.values[self.rows.index(row), self.cols.index(col)])

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "cols": list(self.cols), "values": self.values.tolist()}


def jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def compare_partitions(a, b, prefix_a: str = "EGA", prefix_b: str = "EGA") -> JaccardMatrix:
    """Jaccard index between every factor of ``a`` and every factor of ``b``."""
    sa, sb = _as_sets(a, prefix_a), _as_sets(b, prefix_b)
    ua = set().union(*sa.values()) if sa else set()
    ub = set().union(*sb.values()) if sb else set()
    if ua != ub:
        raise ValueError(f"item universes differ: {sorted(ua ^ ub)}")
    vals = np.array([[jaccard(x, y) for y in sb.values()] for x in sa.values()])
    return JaccardMatrix(tuple(sa), tuple(sb), vals)


@dataclass(frozen=True)
class CrossCorrelogram:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    tau: np.ndarray
    p_values: np.ndarray
    method: str = "kendall_tau_b"

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "cols": list(self.cols), "method": self.method,
                "tau": self.tau.tolist(), "p_values": self.p_values.tolist()}


def factor_score_correlogram(matrix: LikertMatrix, partition_a, partition_b,
                             prefix_a: str = "EGA", prefix_b: str = "EGA") -> CrossCorrelogram:
    """Kendall tau-b between summed factor scores of two item allocations."""
    sa = {k: sorted(v, key=matrix.item_ids.index) for k, v in _as_sets(partition_a, prefix_a).items()}
    sb = {k: sorted(v, key=matrix.item_ids.index) for k, v in _as_sets(partition_b, prefix_b).items()}
    fa = factor_scores(matrix, sa)
    fb = factor_scores(matrix, sb)
    tau, pv = cross_kendall(fa, fb)
    return CrossCorrelogram(tuple(fa), tuple(fb), tau, pv)


def relabel_to(partition: CommunityPartition, nodes: Sequence[str]) -> CommunityPartition:
    """Same partition with nodes listed in ``nodes`` order."""
    a = partition.assignment
    return replace(partition, nodes=tuple(nodes), membership=canonical_labels([a[n] for n in nodes]))
