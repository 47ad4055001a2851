"""Maximum-likelihood confirmatory factor analysis for simple-structure models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from .dataset import LikertMatrix

_BAD = 1e10


class CfaError(RuntimeError):
    pass


class CfaConvergenceError(CfaError):
    pass


@dataclass(frozen=True)
class FactorModelSpec:
    """Each item loads on exactly one factor; factor variances are fixed to 1."""

    factors: tuple[str, ...]
    loading_pattern: dict[str, str]

    def __post_init__(self):
        for item, f in self.loading_pattern.items():
            if f not in self.factors:
                raise ValueError(f"item {item!r} mapped to unknown factor {f!r}")
        empty = [f for f in self.factors if f not in self.loading_pattern.values()]
        if empty:
            raise ValueError(f"factors without items: {empty}")

    @classmethod
    def from_sets(cls, sets: Mapping[str, Sequence[str]]) -> "FactorModelSpec":
        pattern: dict[str, str] = {}
        for f, items in sets.items():
            for it in items:
                if str(it) in pattern:
                    raise ValueError(f"item {it!r} assigned to more than one factor")
                pattern[str(it)] = str(f)
        return cls(tuple(str(f) for f in sets), pattern)

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(self.loading_pattern)

    @property
    def n_items(self) -> int:
        return len(self.loading_pattern)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def n_free(self) -> int:
        k = self.n_factors
        return 2 * self.n_items + k * (k - 1) // 2

    @property
    def df(self) -> int:
        p = self.n_items
        return p * (p + 1) // 2 - self.n_free

    def factor_index(self, items: Sequence[str] | None = None) -> np.ndarray:
        items = self.items if items is None else items
        return np.array([self.factors.index(self.loading_pattern[i]) for i in items])


@dataclass(frozen=True)
class CfaOptions:
    n_starts: int = 3
    seed: int = 0
    psi_lower: float = 1e-4
    max_iter: int = 20000
    gtol: float = 1e-10
    raise_on_failure: bool = False


@dataclass(frozen=True)
class CfaFit:
    items: tuple[str, ...]
    factors: tuple[str, ...]
    loadings: dict[str, float]
    standardized_loadings: dict[str, float]
    residual_variances: dict[str, float]
    factor_correlations: np.ndarray
    chi_square: float
    df: int
    p: float
    cfi: float
    rmsea: float
    srmr: float
    baseline_chi_square: float
    baseline_df: int
    converged: bool
    n: int
    f_ml: float
    gradient_norm: float
    heywood: tuple[str, ...] = ()
    n_free: int = 0
    sigma_hat: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "items": list(self.items),
            "factors": list(self.factors),
            "loadings": self.loadings,
            "standardized_loadings": self.standardized_loadings,
            "residual_variances": self.residual_variances,
            "factor_correlations": self.factor_correlations.tolist(),
            "chi_square": self.chi_square,
            "df": self.df,
            "p": self.p,
            "cfi": self.cfi,
            "rmsea": self.rmsea,
            "srmr": self.srmr,
            "baseline_chi_square": self.baseline_chi_square,
            "baseline_df": self.baseline_df,
            "converged": self.converged,
            "n": self.n,
            "f_ml": self.f_ml,
            "gradient_norm": self.gradient_norm,
            "heywood": list(self.heywood),
            "n_free": self.n_free,
        }

    def report(self, cfi_min: float = 0.90, rmsea_max: float = 0.06, srmr_max: float = 0.08) -> str:
        ok = lambda b: "acceptable" if b else "inadequate"  # noqa: E731
        lines = [
            f"chi2 = {self.chi_square:.3f}, df = {self.df}, p = {self.p:.4g}, N = {self.n}",
            f"CFI   = {self.cfi:.3f} ({ok(self.cfi > cfi_min)}, threshold > {cfi_min})",
            f"RMSEA = {self.rmsea:.3f} ({ok(self.rmsea < rmsea_max)}, threshold < {rmsea_max})",
            f"SRMR  = {self.srmr:.3f} ({ok(self.srmr < srmr_max)}, threshold < {srmr_max})",
            f"model {'rejected' if self.rejected(cfi_min, rmsea_max) else 'retained'}",
        ]
        if self.heywood:
            lines.append(f"warning: Heywood case for {', '.join(self.heywood)}")
        if not self.converged:
            lines.append("warning: optimizer did not converge")
        return "\n".join(lines) + "\n"

    def rejected(self, cfi_min: float = 0.90, rmsea_max: float = 0.06) -> bool:
        return self.cfi < cfi_min or self.rmsea > rmsea_max


# --------------------------------------------------------------------------
# parameter packing: [loadings (p), residual variances (p), factor correlations (k(k-1)/2)]

def _unpack(theta, fidx, k):
    p = fidx.size
    lam = theta[:p]
    psi = theta[p:2 * p]
    L = np.zeros((p, k))
    L[np.arange(p), fidx] = lam
    Phi = np.eye(k)
    iu = np.triu_indices(k, 1)
    Phi[iu] = theta[2 * p:]
    Phi[(iu[1], iu[0])] = theta[2 * p:]
    return L, psi, Phi


def implied_covariance(theta, fidx, k) -> np.ndarray:
    L, psi, Phi = _unpack(theta, fidx, k)
    return L @ Phi @ L.T + np.diag(psi)


def ml_discrepancy(theta, S, fidx, k) -> float:
    """F_ML = log|Sigma| + tr(S Sigma^-1) - log|S| - p."""
    Sigma = implied_covariance(theta, fidx, k)
    try:
        c = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return _BAD
    logdet = 2.0 * np.log(np.diag(c)).sum()
    inv = np.linalg.inv(Sigma)
    _, logdet_s = np.linalg.slogdet(S)
    return float(logdet + np.sum(S * inv) - logdet_s - S.shape[0])


def ml_gradient(theta, S, fidx, k) -> np.ndarray:
    L, psi, Phi = _unpack(theta, fidx, k)
    Sigma = L @ Phi @ L.T + np.diag(psi)
    try:
        inv = np.linalg.inv(Sigma)
    except np.linalg.LinAlgError:
        return np.zeros_like(theta)
    G = inv - inv @ S @ inv
    p = fidx.size
    g_lam = 2.0 * (G @ L @ Phi)[np.arange(p), fidx]
    g_psi = np.diag(G).copy()
    iu = np.triu_indices(k, 1)
    g_phi = 2.0 * (L.T @ G @ L)[iu]
    return np.concatenate([g_lam, g_psi, g_phi])


def fit_indices(chi_square, df, n, baseline_chi_square, baseline_df, S=None, Sigma_hat=None):
    """CFI, RMSEA (N-1 scaling) and SRMR.

    SRMR averages squared residuals (s_ij - sigma_ij) / sqrt(s_ii s_jj) over
    the p(p+1)/2 unique cells; it is ``nan`` when S or Sigma_hat is missing.
    """
    excess = max(chi_square - df, 0.0)
    denom = max(baseline_chi_square - baseline_df, excess, 0.0)
    cfi = 1.0 if denom == 0 else 1.0 - excess / denom
    rmsea = 0.0 if df <= 0 else float(np.sqrt(excess / (df * (n - 1))))
    srmr = float("nan")
    if S is not None and Sigma_hat is not None:
        S = np.asarray(S, dtype=float)
        d = np.sqrt(np.diag(S))
        resid = (S - np.asarray(Sigma_hat, dtype=float)) / np.outer(d, d)
        il = np.tril_indices_from(S)
        srmr = float(np.sqrt(np.mean(resid[il] ** 2)))
    return float(np.clip(cfi, 0.0, 1.0)), rmsea, srmr


def baseline_model(S, n: int) -> tuple[float, int]:
    """Independence model chi-square (N-1 scaling) and its df."""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    _, logdet = np.linalg.slogdet(S)
    if not np.isfinite(logdet):
        raise CfaError("sample covariance is singular")
    f = float(np.log(np.diag(S)).sum() - logdet)
    return (n - 1) * max(f, 0.0), p * (p - 1) // 2


def _data(data, spec: FactorModelSpec, item_ids=None) -> np.ndarray:
    if isinstance(data, LikertMatrix):
        cols = [data.index_of(i) for i in spec.items]
        return data.values[:, cols].astype(float)
    X = np.asarray(data, dtype=float)
    if item_ids is None:
        if X.shape[1] != spec.n_items:
            raise CfaError("data columns do not match the model items")
        return X
    item_ids = [str(i) for i in item_ids]
    missing = [i for i in spec.items if i not in item_ids]
    if missing:
        raise CfaError(f"model items missing from data: {missing}")
    return X[:, [item_ids.index(i) for i in spec.items]]


def _starts(S, fidx, k, options):
    sd = np.sqrt(np.diag(S))
    var = np.diag(S)
    m = k * (k - 1) // 2
    rng = np.random.default_rng(options.seed)
    starts = []
    for j in range(options.n_starts):
        if j == 0:
            lam = np.full(fidx.size, 0.7)
        elif j == 1:
            lam = np.full(fidx.size, 0.5)
        else:
            lam = rng.uniform(0.3, 0.9, fidx.size)
        psi = np.maximum((1.0 - lam ** 2) * var, options.psi_lower * 10)
        starts.append(np.concatenate([lam * sd, psi, np.full(m, 0.3)]))
    return starts


def fit_covariance(S, n: int, spec: FactorModelSpec, options: CfaOptions | None = None) -> CfaFit:
    """Fit the model to a sample covariance matrix whose rows/cols follow ``spec.items``."""
    options = options or CfaOptions()
    S = np.asarray(S, dtype=float)
    p = spec.n_items
    if n <= p:
        raise CfaError(f"need more respondents ({n}) than items ({p})")
    if np.linalg.eigvalsh(S).min() <= 0:
        raise CfaError("sample covariance is singular")
    k = spec.n_factors
    fidx = spec.factor_index()
    m = k * (k - 1) // 2
    bounds = [(None, None)] * p + [(options.psi_lower, None)] * p + [(-0.999, 0.999)] * m

    best = None
    for x0 in _starts(S, fidx, k, options):
        res = minimize(ml_discrepancy, x0, args=(S, fidx, k), jac=ml_gradient, method="L-BFGS-B",
                       bounds=bounds,
                       options={"maxiter": options.max_iter, "gtol": options.gtol, "ftol": 1e-16,
                                "maxcor": 30})
        if best is None or res.fun < best.fun:
            best = res
    theta = best.x.copy()
    # loadings are sign-indeterminate per factor; orient each factor positive
    L, psi, Phi = _unpack(theta, fidx, k)
    signs = np.sign(L.sum(axis=0))
    signs[signs == 0] = 1
    theta[:p] = theta[:p] * signs[fidx]
    iu = np.triu_indices(k, 1)
    theta[2 * p:] = theta[2 * p:] * signs[iu[0]] * signs[iu[1]]

    f = ml_discrepancy(theta, S, fidx, k)
    grad = ml_gradient(theta, S, fidx, k)
    at_lower = theta[p:2 * p] <= options.psi_lower * (1 + 1e-6)
    free = np.ones_like(grad, dtype=bool)
    free[p:2 * p] = ~at_lower  # projected gradient: bound-active residuals excluded
    gnorm = float(np.linalg.norm(grad[free]))
    converged = bool(best.success) or gnorm <= 1e-5
    if not converged:
        msg = f"CFA optimizer did not converge: {best.message} (|grad| = {gnorm:.2e})"
        if options.raise_on_failure:
            raise CfaConvergenceError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    heywood = tuple(i for i, b in zip(spec.items, at_lower) if b)
    if heywood:
        warnings.warn(f"Heywood case: residual variance at lower bound for {heywood}",
                      RuntimeWarning, stacklevel=2)

    Sigma = implied_covariance(theta, fidx, k)
    chi2 = (n - 1) * f
    df = spec.df
    bchi, bdf = baseline_model(S, n)
    cfi, rmsea, srmr = fit_indices(chi2, df, n, bchi, bdf, S, Sigma)
    L, psi, Phi = _unpack(theta, fidx, k)
    lam = theta[:p]
    std = lam / np.sqrt(np.diag(Sigma))
    pval = float(stats.chi2.sf(chi2, df)) if df > 0 else float("nan")
    return CfaFit(
        items=spec.items, factors=spec.factors,
        loadings=dict(zip(spec.items, map(float, lam))),
        standardized_loadings=dict(zip(spec.items, map(float, std))),
        residual_variances=dict(zip(spec.items, map(float, psi))),
        factor_correlations=Phi, chi_square=float(chi2), df=df, p=pval,
        cfi=cfi, rmsea=rmsea, srmr=srmr, baseline_chi_square=float(bchi), baseline_df=bdf,
        converged=converged, n=int(n), f_ml=float(f), gradient_norm=gnorm, heywood=heywood,
        n_free=int(theta.size), sigma_hat=Sigma,
    )


def fit_cfa(data, spec: FactorModelSpec, options: CfaOptions | None = None, item_ids=None) -> CfaFit:
    """ML CFA on the raw-score covariance (divisor N-1) of ``data``.

    ``data`` is a :class:`LikertMatrix` or a numeric array; with an array,
    ``item_ids`` names its columns (otherwise they must follow ``spec.items``).
    """
    X = _data(data, spec, item_ids)
    S = np.cov(X, rowvar=False, ddof=1)
    return fit_covariance(S, X.shape[0], spec, options)
