"""Synthetic Likert data from known factor models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .dataset import LikertMatrix

CHUNK_ROWS = 4096


class SpecError(ValueError):
    pass


def equiprobable_thresholds(n_categories: int = 5) -> np.ndarray:
    return special.ndtri(np.arange(1, n_categories) / n_categories)


@dataclass(frozen=True)
class GeneratorSpec:
    """Simple-structure factor model plus ordinal cut points.

    ``loadings`` maps item -> (factor, loading). Factor order follows
    ``factors`` when given, otherwise first appearance in ``loadings``.
    ``thresholds`` maps item -> increasing cut points; items without an
    entry use ``n_categories`` equiprobable categories.
    """

    loadings: Mapping[str, tuple[str, float]]
    n: int
    seed: int = 0
    factor_correlations: np.ndarray | None = None
    factors: tuple[str, ...] | None = None
    thresholds: Mapping[str, Sequence[float]] | None = None
    n_categories: int = 5

    def factor_names(self) -> tuple[str, ...]:
        if self.factors is not None:
            return tuple(self.factors)
        seen: dict[str, None] = {}
        for f, _ in self.loadings.values():
            seen.setdefault(f, None)
        return tuple(seen)

    def item_ids(self) -> tuple[str, ...]:
        return tuple(self.loadings)

    def phi(self) -> np.ndarray:
        k = len(self.factor_names())
        return np.eye(k) if self.factor_correlations is None else np.asarray(self.factor_correlations, float)

    def cut_points(self, item: str) -> np.ndarray:
        if self.thresholds is not None and item in self.thresholds:
            return np.asarray(self.thresholds[item], dtype=float)
        return equiprobable_thresholds(self.n_categories)

    def validate(self) -> None:
        if self.n < 1:
            raise SpecError("sample size must be positive")
        names = self.factor_names()
        for item, (f, lam) in self.loadings.items():
            if f not in names:
                raise SpecError(f"item {item!r} loads on unknown factor {f!r}")
            if not abs(lam) < 1:
                raise SpecError(f"loading of {item!r} must satisfy |loading| < 1")
        phi = self.phi()
        if phi.shape != (len(names), len(names)):
            raise SpecError("factor correlation matrix has the wrong shape")
        if not np.allclose(phi, phi.T) or not np.allclose(np.diag(phi), 1.0):
            raise SpecError("factor correlations must be symmetric with unit diagonal")
        if np.linalg.eigvalsh(phi).min() <= 0:
            raise SpecError("factor correlations must be positive definite")
        for item in self.loadings:
            t = self.cut_points(item)
            if t.size < 1 or np.any(np.diff(t) <= 0):
                raise SpecError(f"thresholds of {item!r} must be strictly increasing")


def latent_scores(spec: GeneratorSpec) -> np.ndarray:
    """Continuous item latents y = loading * factor + sqrt(1 - loading^2) * noise.

    Rows are produced in fixed-size chunks, each from its own generator
    seeded by (seed, chunk index).
    """
    spec.validate()
    names = spec.factor_names()
    items = spec.item_ids()
    fidx = np.array([names.index(spec.loadings[i][0]) for i in items])
    lam = np.array([spec.loadings[i][1] for i in items], dtype=float)
    chol = np.linalg.cholesky(spec.phi())
    out = np.empty((spec.n, len(items)))
    for c, start in enumerate(range(0, spec.n, CHUNK_ROWS)):
        rows = min(CHUNK_ROWS, spec.n - start)
        rng = np.random.default_rng([spec.seed, c])
        eta = rng.standard_normal((rows, len(names))) @ chol.T
        noise = rng.standard_normal((rows, len(items)))
        out[start:start + rows] = eta[:, fidx] * lam + np.sqrt(1.0 - lam * lam) * noise
    return out


def discretize(latent: np.ndarray, cut_points: Sequence[np.ndarray]) -> np.ndarray:
    cols = [np.searchsorted(t, latent[:, j], side="right") + 1 for j, t in enumerate(cut_points)]
    return np.column_stack(cols).astype(np.int64)


def generate(spec: GeneratorSpec) -> LikertMatrix:
    y = latent_scores(spec)
    cuts = [spec.cut_points(i) for i in spec.item_ids()]
    values = discretize(y, cuts)
    k = max(t.size for t in cuts) + 1
    return LikertMatrix(values, spec.item_ids(), 1, k)


def block_spec(n_factors: int, items_per_factor: int, loading: float, n: int, seed: int = 0,
               factor_correlation: float = 0.0, n_categories: int = 5, prefix: str = "i") -> GeneratorSpec:
    """Equal-size simple-structure spec with a common loading and factor correlation."""
    loadings = {}
    for f in range(n_factors):
        for j in range(items_per_factor):
            loadings[f"{prefix}{f * items_per_factor + j + 1}"] = (f"F{f + 1}", loading)
    phi = np.full((n_factors, n_factors), factor_correlation)
    np.fill_diagonal(phi, 1.0)
    return GeneratorSpec(loadings, n, seed, phi, tuple(f"F{f + 1}" for f in range(n_factors)),
                         None, n_categories)


def planted_sets(spec: GeneratorSpec) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {f: [] for f in spec.factor_names()}
    for item, (f, _) in spec.loadings.items():
        out[f].append(item)
    return out
