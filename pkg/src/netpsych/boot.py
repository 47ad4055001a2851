"""Bootstrap EGA: dimension frequencies and item stability."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .community import CommunityPartition
from .dataset import LikertMatrix
from .ega import EgaConfig, jaccard, run_ega
from .simulate import discretize

NEW = None  # alignment target for candidate communities with no reference match


@dataclass(frozen=True)
class BootstrapResult:
    n_replications: int
    dimension_frequencies: dict[int, float]
    median_structure: CommunityPartition
    item_stability: dict[str, float]
    seed: int
    mode: str = "nonparametric"
    replication_counts: tuple[int, ...] = ()
    failures: tuple[tuple[int, str], ...] = ()
    median_dimensions: int = 0
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_replications": self.n_replications,
            "n_succeeded": len(self.replication_counts),
            "seed": self.seed,
            "mode": self.mode,
            "median_dimensions": self.median_dimensions,
            "dimension_frequencies": {str(k): v for k, v in self.dimension_frequencies.items()},
            "median_structure": self.median_structure.to_dict(),
            "item_stability": self.item_stability,
            "failures": [{"replication": i, "error": e} for i, e in self.failures],
        }


def align_communities(reference: CommunityPartition, candidate: CommunityPartition) -> dict[int, int | None]:
    """Greedy maximum-Jaccard matching of candidate to reference communities.

    Pairs are taken in order of decreasing Jaccard (ties by reference then
    candidate label); candidate communities left unmatched map to None.
    """
    if set(reference.nodes) != set(candidate.nodes):
        raise ValueError("partitions cover different items")
    ref = {k: set(v) for k, v in reference.communities().items()}
    cand = {k: set(v) for k, v in candidate.communities().items()}
    scored = sorted(((jaccard(ref[r], cand[c]), r, c) for r in ref for c in cand),
                    key=lambda t: (-t[0], t[1], t[2]))
    mapping: dict[int, int | None] = {c: NEW for c in cand}
    used_r, used_c = set(), set()
    for j, r, c in scored:
        if j <= 0:
            break
        if r in used_r or c in used_c:
            continue
        mapping[c] = r
        used_r.add(r)
        used_c.add(c)
    return mapping


def _parametric_sampler(matrix: LikertMatrix, config: EgaConfig):
    full = run_ega(matrix, config)
    w = full.network.weights
    theta = np.eye(w.shape[0]) - w  # standardized precision
    cov = np.linalg.inv(theta)
    d = 1.0 / np.sqrt(np.diag(cov))
    corr = cov * d[:, None] * d[None, :]
    chol = np.linalg.cholesky((corr + corr.T) / 2)
    cuts = []
    for j in range(matrix.n_items):
        col = matrix.values[:, j]
        cats, counts = np.unique(col, return_counts=True)
        cum = np.cumsum(counts)[:-1] / counts.sum()
        cuts.append((cats, ndtri(cum)))
    return chol, cuts


def _replicate(args):
    matrix, config, seed, index, mode, sampler = args
    rng = np.random.default_rng([seed, index])
    if mode == "nonparametric":
        rows = rng.integers(0, matrix.n_respondents, matrix.n_respondents)
        sample = matrix.take_rows(rows)
    else:
        chol, cuts = sampler
        z = rng.standard_normal((matrix.n_respondents, matrix.n_items)) @ chol.T
        codes = discretize(z, [t for _, t in cuts])
        values = np.column_stack([cats[codes[:, j] - 1] for j, (cats, _) in enumerate(cuts)])
        sample = LikertMatrix(values, matrix.item_ids, matrix.scale_min, matrix.scale_max)
    return run_ega(sample, config).partition


def boot_ega(matrix: LikertMatrix, config: EgaConfig | None = None, n_replications: int = 500,
             seed: int = 0, mode: str = "nonparametric", n_jobs: int = 1,
             max_failure_rate: float = 0.10) -> BootstrapResult:
    """Replicate EGA on resampled data.

    Replication ``i`` draws from a generator seeded by ``(seed, i)``, so the
    result does not depend on ``n_jobs``. The median structure is the
    full-data walktrap cut with the (lower) median replication dimension
    count; item stability is the share of successful replications placing
    the item in the community aligned with its median-structure community.
    """
    config = config or EgaConfig()
    if n_replications < 1:
        raise ValueError("n_replications must be at least 1")
    if mode not in ("nonparametric", "parametric"):
        raise ValueError("mode must be 'nonparametric' or 'parametric'")
    sampler = _parametric_sampler(matrix, config) if mode == "parametric" else None
    tasks = [(matrix, config, seed, i, mode, sampler) for i in range(n_replications)]

    results: list[CommunityPartition | Exception] = []
    if n_jobs == 1:
        for t in tasks:
            try:
                results.append(_replicate(t))
            except Exception as exc:  # recorded and skipped
                results.append(exc)
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_replicate, t) for t in tasks]
            for f in futures:
                try:
                    results.append(f.result())
                except Exception as exc:
                    results.append(exc)

    failures = tuple((i, str(r)) for i, r in enumerate(results) if isinstance(r, Exception))
    parts = [r for r in results if not isinstance(r, Exception)]
    if len(failures) > max_failure_rate * n_replications or not parts:
        raise RuntimeError(f"{len(failures)} of {n_replications} bootstrap replications failed: "
                           f"{failures[:3]}")
    counts = tuple(p.n_communities for p in parts)
    median_k = int(statistics.median_low(counts))
    median = run_ega(matrix, config, n_communities=median_k).partition

    stable = np.zeros(len(median.nodes))
    ref_of = median.assignment
    for part in parts:
        mapping = align_communities(median, part)
        a = part.assignment
        for j, node in enumerate(median.nodes):
            if mapping[a[node]] == ref_of[node]:
                stable[j] += 1
    stability = {node: float(stable[j] / len(parts)) for j, node in enumerate(median.nodes)}
    uniq, cnt = np.unique(counts, return_counts=True)
    freqs = {int(k): float(c / len(parts)) for k, c in zip(uniq, cnt)}
    return BootstrapResult(n_replications, freqs, median, stability, seed, mode, counts, failures,
                           median_k, {"config": config.__dict__})
