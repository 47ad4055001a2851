"""Graphical lasso by block coordinate descent, EBIC, and lambda-path selection."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)


class GlassoError(ValueError):
    pass


@dataclass(frozen=True)
class PrecisionEstimate:
    precision: np.ndarray
    covariance_hat: np.ndarray
    lam: float
    n_nonzero_edges: int
    converged: bool = True
    n_iter: int = 0
    duality_gap: float = 0.0
    ebic: float = float("nan")


@dataclass(frozen=True)
class PartialCorrelationNetwork:
    nodes: tuple[str, ...]
    weights: np.ndarray
    lambda_selected: float
    ebic: float = float("nan")
    gamma: float = 0.5
    n: int = 0
    path: dict = field(default_factory=dict, compare=False)

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "weights": self.weights.tolist(),
            "lambda": self.lambda_selected,
            "ebic": self.ebic,
            "gamma": self.gamma,
            "n": self.n,
            "n_edges": self.n_edges,
        }


@njit(cache=True)
def _lasso_cd(W11, s12, lam, beta, tol, max_sweeps):
    m = beta.shape[0]
    for _ in range(max_sweeps):
        delta = 0.0
        for k in range(m):
            r = s12[k]
            for l in range(m):
                if l != k:
                    r -= W11[k, l] * beta[l]
            if r > lam:
                new = (r - lam) / W11[k, k]
            elif r < -lam:
                new = (r + lam) / W11[k, k]
            else:
                new = 0.0
            d = abs(new - beta[k])
            if d > delta:
                delta = d
            beta[k] = new
        if delta < tol:
            break
    return beta


@njit(cache=True)
def _glasso_bcd(S, lam, tol, max_iter, inner_tol):
    p = S.shape[0]
    W = S.copy()
    B = np.zeros((p, p - 1))
    idx = np.empty(p - 1, dtype=np.int64)
    W11 = np.empty((p - 1, p - 1))
    s12 = np.empty(p - 1)
    n_iter = 0
    converged = False
    for it in range(max_iter):
        n_iter = it + 1
        change = 0.0
        for j in range(p):
            c = 0
            for i in range(p):
                if i != j:
                    idx[c] = i
                    c += 1
            for a in range(p - 1):
                s12[a] = S[idx[a], j]
                for b in range(p - 1):
                    W11[a, b] = W[idx[a], idx[b]]
            beta = B[j].copy()
            beta = _lasso_cd(W11, s12, lam, beta, inner_tol, 10000)
            B[j] = beta
            for a in range(p - 1):
                v = 0.0
                for b in range(p - 1):
                    v += W11[a, b] * beta[b]
                d = abs(v - W[idx[a], j])
                if d > change:
                    change = d
                W[idx[a], j] = v
                W[j, idx[a]] = v
        if change < tol:
            converged = True
            break
    Theta = np.zeros((p, p))
    for j in range(p):
        c = 0
        for i in range(p):
            if i != j:
                idx[c] = i
                c += 1
        w12b = 0.0
        for a in range(p - 1):
            w12b += W[idx[a], j] * B[j, a]
        tjj = 1.0 / (W[j, j] - w12b)
        Theta[j, j] = tjj
        for a in range(p - 1):
            Theta[idx[a], j] = -B[j, a] * tjj
    return W, Theta, n_iter, converged


def _check_input(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise GlassoError("input must be a square matrix")
    if not np.allclose(S, S.T, atol=1e-10):
        raise GlassoError("input must be symmetric")
    if np.linalg.eigvalsh((S + S.T) / 2).min() <= 0:
        raise GlassoError("input must be positive definite")
    return (S + S.T) / 2


def objective(S, Theta, lam) -> float:
    """log det(Theta) - tr(S Theta) - lam * sum_{i != j} |Theta_ij|."""
    sign, logdet = np.linalg.slogdet(Theta)
    if sign <= 0:
        return -np.inf
    off = np.abs(Theta).sum() - np.abs(np.diag(Theta)).sum()
    return float(logdet - np.sum(S * Theta) - lam * off)


def duality_gap(S, Theta, lam) -> float:
    p = S.shape[0]
    off = np.abs(Theta).sum() - np.abs(np.diag(Theta)).sum()
    return float(np.sum(S * Theta) - p + lam * off)


def kkt_residual(S, Theta, lam, covariance=None) -> float:
    """Largest violation of the stationarity conditions off the diagonal.

    Zero entries need |S_ij - Sigma_ij| <= lam; nonzero entries need
    Sigma_ij - S_ij = lam * sign(Theta_ij).
    """
    Sigma = np.linalg.inv(Theta) if covariance is None else covariance
    p = S.shape[0]
    off = ~np.eye(p, dtype=bool)
    diff = Sigma - S
    nz = (Theta != 0) & off
    z = (Theta == 0) & off
    worst = 0.0
    if nz.any():
        worst = max(worst, float(np.abs(diff[nz] - lam * np.sign(Theta[nz])).max()))
    if z.any():
        worst = max(worst, float(np.maximum(np.abs(diff[z]) - lam, 0.0).max()))
    worst = max(worst, float(np.abs(np.diag(diff)).max()))
    return worst


def glasso_fit(S, lam: float, tol: float = 1e-5, max_iter: int = 1000,
               inner_tol: float = 1e-10) -> PrecisionEstimate:
    """Sparse precision matrix maximizing the L1-penalized Gaussian likelihood.

    The diagonal is not penalized. Convergence is declared when the largest
    elementwise change of the working covariance in one outer sweep drops
    below ``tol``; otherwise the estimate is returned with ``converged=False``
    and its duality gap.
    """
    S = _check_input(S)
    if lam < 0:
        raise GlassoError("lambda must be non-negative")
    if lam == 0:
        Theta = np.linalg.inv(S)
        Theta = (Theta + Theta.T) / 2
        return PrecisionEstimate(Theta, S.copy(), 0.0,
                                 int(np.count_nonzero(np.triu(Theta, 1))), True, 0,
                                 duality_gap(S, Theta, 0.0))
    W, Theta, n_iter, converged = _glasso_bcd(S, float(lam), float(tol), int(max_iter), float(inner_tol))
    # symmetric sparsity: keep an edge only if both column solves kept it
    both = (Theta != 0) & (Theta.T != 0)
    Theta = np.where(both, (Theta + Theta.T) / 2, 0.0)
    gap = duality_gap(S, Theta, lam)
    if not converged:
        warnings.warn(f"glasso did not converge in {max_iter} sweeps (lambda={lam:.4g}, gap={gap:.3g})",
                      RuntimeWarning, stacklevel=2)
    edges = int(np.count_nonzero(np.triu(Theta, 1)))
    return PrecisionEstimate(Theta, W, float(lam), edges, bool(converged), int(n_iter), gap)


def gaussian_loglik(S, Theta, n: int) -> float:
    p = S.shape[0]
    _, logdet = np.linalg.slogdet(Theta)
    return float(n / 2.0 * (logdet - np.sum(S * Theta) - p * np.log(2 * np.pi)))


def ebic(estimate: PrecisionEstimate, S, n: int, gamma: float = 0.5) -> float:
    """-2 logLik + E log n + 4 E gamma log p, E = number of edges."""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    E = int(np.count_nonzero(np.triu(estimate.precision, 1)))
    return -2.0 * gaussian_loglik(S, estimate.precision, n) + E * np.log(n) + 4.0 * E * gamma * np.log(p)


def partial_correlations(Theta) -> np.ndarray:
    d = 1.0 / np.sqrt(np.diag(Theta))
    w = -Theta * d[:, None] * d[None, :]
    np.fill_diagonal(w, 0.0)
    w = (w + w.T) / 2
    return np.clip(w, -1.0, 1.0)


def lambda_grid(S, n_lambda: int = 100, ratio: float = 0.01) -> np.ndarray:
    """Log-spaced grid from max |S_ij| (i != j) down to ratio times that."""
    S = np.asarray(S, dtype=float)
    off = np.abs(S[np.triu_indices_from(S, 1)])
    lam_max = float(off.max()) if off.size else 0.0
    if lam_max == 0:
        return np.zeros(1)
    return np.exp(np.linspace(np.log(lam_max), np.log(lam_max * ratio), n_lambda))


def select_lambda(S, n: int, gamma: float = 0.5, n_lambda: int = 100, ratio: float = 0.01,
                  nodes=None, tol: float = 1e-5, max_iter: int = 1000) -> PartialCorrelationNetwork:
    """Fit the glasso path and keep the EBIC-minimizing network.

    Ties go to the larger (sparser) lambda. The per-lambda edge counts are
    kept in ``path``; a non-monotone path is logged, not raised, because the
    lasso path of the graphical lasso is not guaranteed monotone.
    """
    S = _check_input(S)
    p = S.shape[0]
    nodes = tuple(nodes) if nodes is not None else tuple(str(i) for i in range(p))
    grid = lambda_grid(S, n_lambda, ratio)
    fits, scores, edges, failures = [], [], [], []
    for lam in grid:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est = glasso_fit(S, float(lam), tol=tol, max_iter=max_iter)
            score = ebic(est, S, n, gamma)
        except (GlassoError, np.linalg.LinAlgError) as exc:
            failures.append(str(exc))
            fits.append(None)
            scores.append(np.inf)
            edges.append(-1)
            continue
        fits.append(est)
        scores.append(score)
        edges.append(est.n_nonzero_edges)
    if all(f is None for f in fits):
        raise GlassoError(f"all {len(grid)} glasso fits failed: {failures[:3]}")
    best = None
    for i, s in enumerate(scores):  # grid runs from largest lambda down
        if fits[i] is not None and (best is None or s < scores[best]):
            best = i
    valid = [e for e in edges if e >= 0]
    monotone = all(a <= b for a, b in zip(valid, valid[1:]))
    if not monotone:
        log.debug("edge count not monotone along the lambda path: %s", valid)
    est = fits[best]
    return PartialCorrelationNetwork(
        nodes=nodes,
        weights=partial_correlations(est.precision),
        lambda_selected=float(grid[best]),
        ebic=float(scores[best]),
        gamma=gamma,
        n=int(n),
        path={"lambdas": grid.tolist(), "ebic": [float(s) for s in scores],
              "edges": edges, "monotone": monotone,
              "converged": bool(est.converged)},
    )
