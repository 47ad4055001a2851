"""Between-group tests: Kruskal-Wallis, Dunn-Bonferroni and one-way ANOVA."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .dataset import DataError, LikertMatrix, factor_means


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p: float
    test: str
    groups: tuple[str, ...]
    df: tuple[float, ...] = ()
    sizes: tuple[int, ...] = ()
    p_unadjusted: float | None = None
    extras: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"test": self.test, "statistic": self.statistic, "p": self.p,
             "groups": list(self.groups), "df": list(self.df), "sizes": list(self.sizes)}
        if self.p_unadjusted is not None:
            d["p_unadjusted"] = self.p_unadjusted
        if self.extras:
            d["extras"] = self.extras
        if self.flags:
            d["flags"] = list(self.flags)
        return d


def _prepare(groups, labels):
    if isinstance(groups, Mapping):
        labels = tuple(str(k) for k in groups)
        groups = list(groups.values())
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("every group must be non-empty")
    labels = tuple(labels) if labels is not None else tuple(str(i + 1) for i in range(len(groups)))
    return groups, labels


def _ranks(groups):
    pooled = np.concatenate(groups)
    ranks = stats.rankdata(pooled)
    _, counts = np.unique(pooled, return_counts=True)
    ties = float((counts ** 3 - counts).sum())
    splits = np.cumsum([g.size for g in groups])[:-1]
    return np.split(ranks, splits), pooled.size, ties


def kruskal_wallis(groups, labels: Sequence[str] | None = None) -> TestResult:
    """Tie-corrected H with a chi-square(k-1) p-value."""
    groups, labels = _prepare(groups, labels)
    rank_groups, N, ties = _ranks(groups)
    sizes = tuple(g.size for g in groups)
    k = len(groups)
    correction = 1.0 - ties / (N ** 3 - N)
    if correction <= 0:
        return TestResult(0.0, 1.0, "kruskal_wallis", labels, (k - 1,), sizes,
                          flags=("all values identical",))
    h = 12.0 / (N * (N + 1)) * sum(r.sum() ** 2 / r.size for r in rank_groups) - 3.0 * (N + 1)
    h = max(h / correction, 0.0)
    p = float(special.chdtrc(k - 1, h))
    eps2 = h * (N + 1) / (N * N - 1)
    return TestResult(float(h), p, "kruskal_wallis", labels, (k - 1,), sizes,
                      extras={"epsilon_squared": float(eps2), "tie_correction": float(correction)})


def dunn_bonferroni(groups, labels: Sequence[str] | None = None) -> list[TestResult]:
    """Pairwise Dunn z on mean ranks; p-values times the number of pairs, capped at 1."""
    groups, labels = _prepare(groups, labels)
    rank_groups, N, ties = _ranks(groups)
    var0 = N * (N + 1) / 12.0 - ties / (12.0 * (N - 1))
    pairs = list(combinations(range(len(groups)), 2))
    m = len(pairs)
    out = []
    for i, j in pairs:
        ni, nj = rank_groups[i].size, rank_groups[j].size
        diff = rank_groups[i].mean() - rank_groups[j].mean()
        se = np.sqrt(max(var0, 0.0) * (1.0 / ni + 1.0 / nj))
        flags = ()
        if se == 0:
            z, flags = 0.0, ("all values identical",)
        else:
            z = diff / se
        p = float(min(1.0, 2.0 * special.ndtr(-abs(z))))
        out.append(TestResult(float(z), min(1.0, p * m), "dunn_z", (labels[i], labels[j]),
                              (), (ni, nj), p_unadjusted=p, flags=flags))
    return out


def anova_oneway(groups, labels: Sequence[str] | None = None) -> TestResult:
    groups, labels = _prepare(groups, labels)
    if any(g.size < 2 for g in groups):
        raise ValueError("every group needs at least two observations")
    pooled = np.concatenate(groups)
    N, k = pooled.size, len(groups)
    grand = pooled.mean()
    ssb = float(sum(g.size * (g.mean() - grand) ** 2 for g in groups))
    ssw = float(sum(((g - g.mean()) ** 2).sum() for g in groups))
    if ssw == 0:
        raise ValueError("zero within-group variance in every group")
    f = (ssb / (k - 1)) / (ssw / (N - k))
    p = float(special.fdtrc(k - 1, N - k, f))
    return TestResult(float(f), p, "anova_f", labels, (k - 1, N - k), tuple(g.size for g in groups),
                      extras={"eta_squared": ssb / (ssb + ssw)})


def _ordered(labels):
    uniq = sorted(set(labels))
    try:
        return sorted(uniq, key=float)
    except ValueError:
        return uniq


def cohort_comparisons(matrix: LikertMatrix, partition: Mapping[str, Sequence[str]],
                       by: str = "cohort") -> list[dict]:
    """Group per-respondent factor means and run KW, Dunn and ANOVA.

    ``by="cohort"`` compares cohorts within each factor; ``by="factor"``
    compares factors within each cohort (independent-groups approximation:
    the same respondents appear in every factor group).
    """
    if matrix.cohorts is None:
        raise DataError("cohort comparisons need a cohort column")
    means = factor_means(matrix, partition)
    cohorts = np.array(matrix.cohorts)
    labels = _ordered(matrix.cohorts)
    blocks = []
    if by == "cohort":
        for f, v in means.items():
            groups = {c: v[cohorts == c] for c in labels}
            blocks.append(("factor", f, groups))
    elif by == "factor":
        for c in labels:
            groups = {f: v[cohorts == c] for f, v in means.items()}
            blocks.append(("cohort", c, groups))
    else:
        raise ValueError("by must be 'cohort' or 'factor'")
    out = []
    for kind, name, groups in blocks:
        entry = {kind: name, "kruskal_wallis": kruskal_wallis(groups).to_dict(),
                 "dunn_bonferroni": [r.to_dict() for r in dunn_bonferroni(groups)]}
        try:
            entry["anova"] = anova_oneway(groups).to_dict()
        except ValueError as exc:
            entry["anova"] = {"error": str(exc)}
        if by == "factor":
            entry["caveat"] = "factors share respondents; tests treat them as independent groups"
        out.append(entry)
    return out
