"""Total entropy fit index (TEFI) and its bootstrap comparison test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .association import association_matrix, nearest_positive_definite
from .community import CommunityPartition, canonical_labels
from .dataset import DataError, LikertMatrix


def _membership(partition, n_items: int) -> np.ndarray:
    if isinstance(partition, CommunityPartition):
        return np.asarray(partition.membership)
    m = np.asarray(partition)
    if m.shape != (n_items,):
        raise ValueError("partition must give one label per item")
    return m


def _plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


@dataclass(frozen=True)
class TefiResult:
    tefi: float
    total_entropy: float
    community_entropies: tuple[float, ...]
    n_communities: int
    correlation_basis: str = "auto"


def tefi(corr, partition, penalty: Callable[[int], float] = np.sqrt,
         correlation_basis: str = "auto") -> TefiResult:
    """Entropy fit of a partition of a correlation matrix (lower is better).

    Cells of |R| are normalized to a distribution P over all p^2 cells.
    H_T is the Shannon entropy of P; H_c sums -P log P over the cells inside
    community c. TEFI = mean(H_c) - H_T + penalty(k) * (H_T - sum(H_c)).
    A single community scores 0; the second term charges for correlation
    mass falling between communities.
    """
    R = np.abs(np.asarray(getattr(corr, "coefficients", corr), dtype=float))
    p = R.shape[0]
    labels = _membership(partition, p)
    P = R / R.sum()
    terms = -_plogp(P)
    h_total = float(terms.sum())
    comms = sorted(set(labels.tolist()))
    h_c = []
    for c in comms:
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ValueError(f"community {c} is empty")
        h_c.append(float(terms[np.ix_(idx, idx)].sum()))
    k = len(comms)
    value = float(np.mean(h_c) - h_total + penalty(k) * (h_total - np.sum(h_c)))
    return TefiResult(value, h_total, tuple(h_c), k, correlation_basis)


def random_partition(n_items: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform labels in 1..k, redrawn until every community is non-empty."""
    if k > n_items:
        raise ValueError("more communities than items")
    while True:
        labels = rng.integers(1, k + 1, n_items)
        if np.unique(labels).size == k:
            return np.asarray(canonical_labels(labels.tolist()))


@dataclass(frozen=True)
class TefiComparison:
    base_mean: float
    base_sd: float
    comparison_mean: float
    comparison_sd: float
    t_statistic: float
    p_one_tailed: float
    n_draws: int
    n_failed: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def tefi_bootstrap_test(matrix: LikertMatrix, partition, n_draws: int = 500, seed: int = 0,
                        corr_method: str = "auto", pd_floor: float = 1e-6,
                        min_draws: int = 100) -> TefiComparison:
    """Compare TEFI of a fixed partition against random same-k partitions.

    Each draw resamples respondents with replacement (generator seeded by
    (seed, draw)), scores the fixed partition and one fresh random partition
    on the resampled correlation matrix, and the two samples are compared by
    Welch's t-test, one-tailed for base < comparison.
    """
    if n_draws < min_draws:
        raise ValueError(f"n_draws must be at least {min_draws}")
    labels = _membership(partition, matrix.n_items)
    k = np.unique(labels).size
    base, comp, failed = [], [], 0
    n = matrix.n_respondents
    for d in range(n_draws):
        rng = np.random.default_rng([seed, d])
        rows = rng.integers(0, n, n)
        try:
            R = association_matrix(matrix.take_rows(rows), corr_method).coefficients
        except DataError:
            failed += 1
            continue
        R = nearest_positive_definite(R, pd_floor)
        base.append(tefi(R, labels).tefi)
        comp.append(tefi(R, random_partition(matrix.n_items, k, rng)).tefi)
    if failed > 0.1 * n_draws:
        raise RuntimeError(f"{failed} of {n_draws} bootstrap draws failed")
    base = np.array(base)
    comp = np.array(comp)
    t, p = stats.ttest_ind(base, comp, equal_var=False, alternative="less")
    return TefiComparison(float(base.mean()), float(base.std(ddof=1)), float(comp.mean()),
                          float(comp.std(ddof=1)), float(t), float(p), len(base), failed, seed)
