"""Pairwise association for ordinal items.

Kendall tau-b with a normal-approximation p-value, Spearman, Pearson and
two-step polychoric correlations, the ``auto`` dispatcher used ahead of
network estimation, and an eigenvalue-clipping PD repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss
from scipy import special, stats
from scipy.optimize import minimize_scalar

from .dataset import DataError, LikertMatrix

METHODS = ("kendall_tau_b", "spearman", "pearson", "polychoric", "auto")
AUTO_MAX_CATEGORIES = 7
PD_FLOOR = 1e-6
RHO_BOUND = 0.999


class AssociationError(DataError):
    pass


@dataclass(frozen=True)
class AssociationMatrix:
    coefficients: np.ndarray
    p_values: np.ndarray
    method: str
    n_used: int
    item_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        p = self.p_values.copy()
        np.fill_diagonal(p, np.nan)
        return {
            "method": self.method,
            "n_used": self.n_used,
            "item_ids": list(self.item_ids),
            "coefficients": self.coefficients.tolist(),
            "p_values": [[None if np.isnan(v) else float(v) for v in row] for row in p],
        }


# --------------------------------------------------------------------------
# rank correlations

def _contingency(x, y):
    ux, ix = np.unique(x, return_inverse=True)
    uy, iy = np.unique(y, return_inverse=True)
    table = np.zeros((ux.size, uy.size), dtype=np.int64)
    np.add.at(table, (ix, iy), 1)
    return table


def _concordance(table):
    """Concordant and discordant pair counts from a contingency table."""
    t = table.astype(np.float64)
    # below_right[i, j] = sum of t[a, b] with a > i, b > j
    cs = t[::-1, ::-1].cumsum(0).cumsum(1)[::-1, ::-1]
    below_right = np.zeros_like(t)
    below_right[:-1, :-1] = cs[1:, 1:]
    # below_left[i, j] = sum of t[a, b] with a > i, b < j
    cl = t[::-1, :].cumsum(0)[::-1, :].cumsum(1)
    below_left = np.zeros_like(t)
    below_left[:-1, 1:] = cl[1:, :-1]
    return float((t * below_right).sum()), float((t * below_left).sum())


def kendall_tau_b(x, y) -> tuple[float, float]:
    """Tau-b with tie correction and a two-sided normal-approximation p-value.

    Returns ``(nan, nan)`` when exactly one vector is constant; raises when
    both are.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise AssociationError("kendall_tau_b needs two 1-d vectors of equal length")
    n = x.size
    if n < 2:
        raise AssociationError("kendall_tau_b needs at least 2 observations")
    table = _contingency(x, y)
    tx = table.sum(axis=1).astype(np.float64)
    ty = table.sum(axis=0).astype(np.float64)
    if tx.size == 1 and ty.size == 1:
        raise AssociationError("both vectors are constant; tau is undefined")
    c, d = _concordance(table)
    n0 = n * (n - 1) / 2.0
    n1 = (tx * (tx - 1)).sum() / 2.0
    n2 = (ty * (ty - 1)).sum() / 2.0
    denom = np.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0:
        return float("nan"), float("nan")
    tau = float(np.clip((c - d) / denom, -1.0, 1.0))

    v0 = n * (n - 1) * (2 * n + 5)
    vt = (tx * (tx - 1) * (2 * tx + 5)).sum()
    vu = (ty * (ty - 1) * (2 * ty + 5)).sum()
    var = (v0 - vt - vu) / 18.0
    if n > 2:
        var += ((tx * (tx - 1) * (tx - 2)).sum() * (ty * (ty - 1) * (ty - 2)).sum()
                / (9.0 * n * (n - 1) * (n - 2)))
    var += (tx * (tx - 1)).sum() * (ty * (ty - 1)).sum() / (2.0 * n * (n - 1))
    if var <= 0:
        return tau, 1.0
    z = (c - d) / np.sqrt(var)
    p = float(min(1.0, 2.0 * special.ndtr(-abs(z))))
    return tau, p


def _pearson_p(r: float, n: int) -> float:
    if n <= 2:
        return float("nan")
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def pearson(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0:
        return float("nan"), float("nan")
    r = float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))
    return r, _pearson_p(r, x.size)


def spearman(x, y) -> tuple[float, float]:
    return pearson(stats.rankdata(x), stats.rankdata(y))


# --------------------------------------------------------------------------
# bivariate normal CDF (Drezner-Wesolowsky / Genz quadrature)

_GL6, _GL12, _GL20 = (np.ascontiguousarray(leggauss(n)) for n in (6, 12, 20))
_BIG = 38.0  # ndtr(-38) underflows to 0; stands in for +-inf
_SQRT1_2 = 0.7071067811865476
_TWOPI = 2.0 * np.pi


@njit(cache=True)
def _ndtr(x):
    return 0.5 * math.erfc(-x * _SQRT1_2)


@njit(cache=True)
def _bvn_upper(h, k, r, gl6, gl12, gl20):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r."""
    h = min(max(h, -_BIG), _BIG)
    k = min(max(k, -_BIG), _BIG)
    if r == 0.0:
        return _ndtr(-h) * _ndtr(-k)
    ar = abs(r)
    gl = gl6 if ar < 0.3 else gl12 if ar < 0.75 else gl20
    t, w = gl[0], gl[1]
    hk = h * k
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        acc = 0.0
        for i in range(t.size):
            sn = math.sin(asr * (1.0 + t[i]))  # nodes mapped to [0, 2]
            acc += w[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = acc * asr / _TWOPI + _ndtr(-h) * _ndtr(-k)
        return min(max(bvn, 0.0), 1.0)

    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if ar < 1:
        as_ = (1.0 - r) * (1.0 + r)
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        asr = -(bs / as_ + hk) / 2.0
        if asr > -100:
            bvn = a * math.exp(asr) * (1 - c * (bs - as_) * (1 - d * bs) / 3 + c * d * as_ * as_)
        if hk > -100:
            b = math.sqrt(bs)
            sp = math.sqrt(_TWOPI) * _ndtr(-b / a)
            bvn -= math.exp(-hk / 2) * sp * b * (1 - c * bs * (1 - d * bs) / 3)
        a2 = a / 2.0
        acc = 0.0
        for i in range(t.size):
            xs = (a2 * (1.0 + t[i])) ** 2
            asr2 = -(bs / xs + hk) / 2.0
            if asr2 > -100:
                sp2 = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                rs = math.sqrt(1.0 - xs)
                ep = math.exp(-(hk / 2.0) * xs / (1.0 + rs) ** 2) / rs
                acc += w[i] * math.exp(asr2) * (sp2 - ep)
        bvn = (a2 * acc - bvn) / _TWOPI
    if r > 0:
        bvn += _ndtr(-max(h, k))
    elif h >= k:
        bvn = -bvn
    elif h < 0:
        bvn = _ndtr(k) - _ndtr(h) - bvn
    else:
        bvn = _ndtr(-h) - _ndtr(-k) - bvn
    return min(max(bvn, 0.0), 1.0)


@njit(cache=True)
def _bvn_lower_many(h, k, r, gl6, gl12, gl20):
    out = np.empty(h.size)
    for i in range(h.size):
        out[i] = _bvn_upper(-h[i], -k[i], r, gl6, gl12, gl20)
    return out


def bivariate_normal_cdf(h, k, r):
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation r.

    Genz's adaptation of the Drezner-Wesolowsky method (Gauss-Legendre
    quadrature with 6, 12 or 20 nodes by |r|); ``h`` and ``k`` broadcast.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    out = _bvn_lower_many(np.ascontiguousarray(h).ravel(), np.ascontiguousarray(k).ravel(), float(r),
                          _GL6, _GL12, _GL20).reshape(h.shape)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# polychoric

def ordinal_thresholds(x) -> tuple[np.ndarray, np.ndarray]:
    """Observed categories and interior thresholds from cumulative proportions."""
    u, counts = np.unique(np.asarray(x), return_counts=True)
    cum = np.cumsum(counts)[:-1] / counts.sum()
    return u, special.ndtri(cum)


@njit(cache=True)
def _loglik(table, tx, ty, rho, gl6, gl12, gl20):
    nx, ny = tx.size + 1, ty.size + 1
    # g[i, j] = P(X <= a_i, Y <= b_j) over the padded thresholds
    g = np.zeros((nx + 1, ny + 1))
    for i in range(1, nx + 1):
        for j in range(1, ny + 1):
            if i == nx and j == ny:
                g[i, j] = 1.0
            elif i == nx:
                g[i, j] = _ndtr(ty[j - 1])
            elif j == ny:
                g[i, j] = _ndtr(tx[i - 1])
            else:
                g[i, j] = _bvn_upper(-tx[i - 1], -ty[j - 1], rho, gl6, gl12, gl20)
    ll = 0.0
    for i in range(nx):
        for j in range(ny):
            if table[i, j] > 0:
                p = g[i + 1, j + 1] - g[i, j + 1] - g[i + 1, j] + g[i, j]
                ll += table[i, j] * math.log(max(p, 1e-300))
    return ll


def polychoric_loglik(table, tx, ty, rho) -> float:
    """Multinomial log-likelihood of a contingency table under a latent bivariate normal."""
    return float(_loglik(np.asarray(table, dtype=float), np.asarray(tx, dtype=float),
                         np.asarray(ty, dtype=float), float(rho), _GL6, _GL12, _GL20))


def polychoric(x, y, categories=None, *, tol: float = 1e-6, return_p: bool = False):
    """Two-step polychoric correlation of two ordinal vectors.

    Thresholds come from each margin's cumulative proportions; rho then
    maximizes the bivariate-normal likelihood of the contingency table over
    (-0.999, 0.999). ``categories`` optionally restricts the admissible
    values; categories never observed carry no likelihood and are dropped.
    With ``return_p`` the likelihood-ratio p-value against rho = 0 is
    returned as well.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise AssociationError("polychoric needs two 1-d vectors of equal length")
    if categories is not None:
        allowed = set(np.asarray(categories).tolist())
        if not set(np.unique(x).tolist()) <= allowed or not set(np.unique(y).tolist()) <= allowed:
            raise AssociationError("observed value outside the declared categories")
    ux, tx = ordinal_thresholds(x)
    uy, ty = ordinal_thresholds(y)
    if ux.size < 2 or uy.size < 2:
        raise AssociationError("degenerate contingency table: a variable has one observed category")
    table = _contingency(x, y).astype(float)

    res = minimize_scalar(lambda r: -polychoric_loglik(table, tx, ty, r),
                          bounds=(-RHO_BOUND, RHO_BOUND), method="bounded",
                          options={"xatol": tol, "maxiter": 500})
    if not res.success:
        raise AssociationError(f"polychoric optimizer did not converge: {res.message}")
    rho = float(res.x)
    if not return_p:
        return rho
    lr = 2.0 * (-res.fun - polychoric_loglik(table, tx, ty, 0.0))
    return rho, float(stats.chi2.sf(max(lr, 0.0), 1))


# --------------------------------------------------------------------------
# matrices

def _pair(method, x, y):
    if method == "kendall_tau_b":
        return kendall_tau_b(x, y)
    if method == "spearman":
        return spearman(x, y)
    if method == "pearson":
        return pearson(x, y)
    if method == "polychoric":
        return polychoric(x, y, return_p=True)
    raise ValueError(f"unknown association method {method!r}")


def resolve_auto(values: np.ndarray, i: int, j: int) -> str:
    ci = np.unique(values[:, i]).size
    cj = np.unique(values[:, j]).size
    return "polychoric" if max(ci, cj) <= AUTO_MAX_CATEGORIES else "pearson"


def association_matrix(matrix: LikertMatrix, method: str = "kendall_tau_b") -> AssociationMatrix:
    """All pairwise coefficients and p-values for the items of ``matrix``.

    ``auto`` uses polychoric correlations for pairs whose items both have at
    most seven observed categories and Pearson otherwise.
    """
    if method not in METHODS:
        raise ValueError(f"unknown association method {method!r}")
    values = matrix.values
    p = matrix.n_items
    coef = np.eye(p)
    pv = np.zeros((p, p))
    for i, j in combinations(range(p), 2):
        m = resolve_auto(values, i, j) if method == "auto" else method
        try:
            r, pval = _pair(m, values[:, i], values[:, j])
        except DataError as exc:
            raise AssociationError(f"items {matrix.item_ids[i]!r}/{matrix.item_ids[j]!r}: {exc}") from exc
        if not np.isfinite(r):
            raise AssociationError(
                f"items {matrix.item_ids[i]!r}/{matrix.item_ids[j]!r}: coefficient undefined (constant item)")
        coef[i, j] = coef[j, i] = r
        pv[i, j] = pv[j, i] = pval
    return AssociationMatrix(coef, pv, method, matrix.n_respondents, matrix.item_ids)


def cross_kendall(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Kendall tau-b between every score vector of ``a`` and every one of ``b``."""
    tau = np.zeros((len(a), len(b)))
    pv = np.zeros_like(tau)
    for i, va in enumerate(a.values()):
        for j, vb in enumerate(b.values()):
            tau[i, j], pv[i, j] = kendall_tau_b(va, vb)
    return tau, pv


def nearest_positive_definite(m, floor: float = PD_FLOOR) -> np.ndarray:
    """Symmetric PD correlation matrix close to ``m`` in Frobenius norm.

    Eigenvalues below ``floor`` are clipped and the result rescaled to unit
    diagonal; a final shrink toward the identity restores the floor if the
    rescaling pushed the spectrum below it. PD inputs come back symmetrized
    and otherwise unchanged.
    """
    m = np.asarray(m, dtype=float)
    m = (m + m.T) / 2.0
    vals, vecs = np.linalg.eigh(m)
    if vals.min() >= floor:
        return m
    out = (vecs * np.maximum(vals, floor)) @ vecs.T
    d = 1.0 / np.sqrt(np.diag(out))
    out = out * d[:, None] * d[None, :]
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 1.0)
    lo = np.linalg.eigvalsh(out).min()
    if lo < floor:
        # (1-a) * out + a * I lifts every eigenvalue and keeps the unit diagonal
        a = (floor - lo) / (1.0 - lo) * (1 + 1e-9) + 1e-15
        out = (1.0 - a) * out + a * np.eye(out.shape[0])
        np.fill_diagonal(out, 1.0)
    return out
