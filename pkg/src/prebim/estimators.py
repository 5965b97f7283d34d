"""OLS, two-stage least squares, pseudo-residuals and the Fisher z correlation test."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .model import (
    Dataset,
    PrebimError,
    SaturatedCorrelationError,
    SingularInstrumentsError,
    WeakInstrumentError,
    ZeroVarianceError,
)

DEFAULT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class CorrelationTest:
    r: float
    z_stat: float
    p_value: float
    reject: bool


def _as_vector(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise PrebimError(f"{name} must be one-dimensional")
    return a


def _index_array(subset, g=None):
    idx = np.array(sorted(int(i) for i in subset), dtype=np.int64)
    if idx.size == 0:
        raise PrebimError("instrument subset must be nonempty")
    if len(set(idx.tolist())) != idx.size:
        raise PrebimError(f"duplicate indices in subset {list(subset)}")
    if g is not None and (idx[0] < 0 or idx[-1] >= g):
        raise PrebimError(f"subset {idx.tolist()} out of range for {g} variants")
    return idx


def ols_estimate(x, y) -> float:
    """Least-squares slope of y on x after centering both."""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.size != y.size or x.size < 2:
        raise PrebimError("x and y must have equal length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    if np.ptp(x) == 0:
        raise ZeroVarianceError("x has zero variance")
    return float(xc @ yc) / float(xc @ xc)


def _raise_for_status(status, subset):
    if status == kernels.SINGULAR:
        raise SingularInstrumentsError(f"instrument columns {list(subset)} are rank deficient")
    if status == kernels.WEAK:
        raise WeakInstrumentError(f"instruments {list(subset)} carry no first-stage signal")


def tsls_estimate(x, y, genotypes, subset, tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Two-stage least squares slope of y on x using the selected genotype columns.

    Computes ``(x'Px)^-1 x'Py`` with ``P`` the projection onto the centered
    instrument columns, via a thin QR factorisation.

    Raises
    ------
    SingularInstrumentsError
        The selected columns are not of full column rank.
    WeakInstrumentError
        ``x'Px`` is below ``tolerance * x'x``.
    """
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    genotypes = np.asarray(genotypes, dtype=np.float64)
    if genotypes.ndim != 2 or genotypes.shape[0] != x.size or y.size != x.size:
        raise PrebimError("x, y and genotypes must share the number of observations")
    idx = _index_array(subset, genotypes.shape[1])
    z = genotypes[:, idx]
    z = z - z.mean(axis=0)
    xc = x - x.mean()
    yc = y - y.mean()
    q, rmat = np.linalg.qr(z)
    diag = np.abs(np.diag(rmat))
    if diag.size == 0 or diag.max() <= 0 or diag.min() <= np.sqrt(kernels.SINGULAR_RTOL) * diag.max():
        raise SingularInstrumentsError(f"instrument columns {idx.tolist()} are rank deficient")
    qx = q.T @ xc
    den = float(qx @ qx)
    if den <= tolerance * float(xc @ xc):
        raise WeakInstrumentError(f"instruments {idx.tolist()} carry no first-stage signal")
    return float(qx @ (q.T @ yc)) / den


def tsls_population(moments, subset, exposure_index: int = -2, outcome_index: int = -1,
                    tolerance: float = DEFAULT_TOLERANCE) -> float:
    """TSLS limit computed from a covariance matrix.

    ``b = C_SS^-1 C_SX`` are the first-stage coefficients and the result is
    ``(b . C_SY) / (b . C_SX)``. By default X and Y are the last two
    rows/columns, which matches both :func:`prebim.model.population_moments`
    and :attr:`prebim.model.Dataset.moments`.
    """
    cov = np.ascontiguousarray(moments, dtype=np.float64)
    m = cov.shape[0]
    ix, iy = exposure_index % m, outcome_index % m
    idx = _index_array(subset, m)
    if ix in idx or iy in idx:
        raise PrebimError("subset must not contain the exposure or outcome column")
    w, status = kernels.tsls(cov, idx, ix, iy, tolerance)
    _raise_for_status(status, idx.tolist())
    return float(w)


def tsls_dataset(dataset: Dataset, subset, reverse: bool = False,
                 tolerance: float = DEFAULT_TOLERANCE) -> float:
    """TSLS of Y on X (or X on Y when ``reverse``) from the dataset's sample moments."""
    ix, iy = (dataset.iy, dataset.ix) if reverse else (dataset.ix, dataset.iy)
    return tsls_population(dataset.moments, subset, ix, iy, tolerance)


def pseudo_residual(x, y, genotypes, subset, tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Return ``y - omega * x`` with ``omega`` the TSLS slope on ``subset``."""
    omega = tsls_estimate(x, y, genotypes, subset, tolerance)
    return np.asarray(y, dtype=np.float64) - omega * np.asarray(x, dtype=np.float64)


def pearson_correlation(a, b) -> float:
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    if a.size != b.size or a.size < 2:
        raise PrebimError("sequences must have equal length >= 2")
    ac = a - a.mean()
    bc = b - b.mean()
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ZeroVarianceError("correlation undefined for a constant sequence")
    saa = float(ac @ ac)
    sbb = float(bc @ bc)
    return float(np.clip((ac @ bc) / math.sqrt(saa * sbb), -1.0, 1.0))


def fisher_z_test(r: float, n: int, alpha: float = 0.05) -> CorrelationTest:
    """Two-sided test of zero correlation through Fisher's z transform."""
    if n <= 3:
        raise PrebimError(f"Fisher z test needs n > 3, got {n}")
    r = float(r)
    if not -1.0 < r < 1.0:
        raise SaturatedCorrelationError(f"|r| = 1 gives an infinite z statistic (r={r})")
    z = math.atanh(r) * math.sqrt(n - 3)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return CorrelationTest(r=r, z_stat=z, p_value=p, reject=p < alpha)


def fisher_z_pvalues(r, n: int) -> np.ndarray:
    """Vectorised two-sided p-values; |r| >= 1 maps to 0 and NaN stays NaN."""
    r = np.asarray(r, dtype=np.float64)
    out = np.full(r.shape, np.nan)
    finite = np.isfinite(r)
    saturated = finite & (np.abs(r) >= 1.0)
    inner = finite & ~saturated
    z = np.abs(np.arctanh(r[inner])) * math.sqrt(n - 3)
    out[inner] = [math.erfc(v / math.sqrt(2.0)) for v in z]
    out[saturated] = 0.0
    return out


def accepts_zero(r, n: int, alpha: float) -> np.ndarray:
    """True where the test fails to reject zero correlation. NaN entries count as rejections."""
    p = fisher_z_pvalues(r, n)
    return np.where(np.isnan(p), False, p >= alpha)


def leave_one_out_correlations(moments, subset, ix: int, iy: int,
                               tolerance: float = DEFAULT_TOLERANCE, adjust: bool = False) -> np.ndarray:
    """corr(Y - omega_{S minus j} X, G_j) for every j in ``subset`` (sorted order).

    With ``adjust`` the instrument is first made orthogonal to X through the
    first-stage fit, see :mod:`prebim.kernels`.
    """
    idx = _index_array(subset)
    if idx.size < 2:
        raise PrebimError("leave-one-out needs at least two instruments")
    r, status = kernels.loo_correlations(np.ascontiguousarray(moments, dtype=np.float64), idx, ix, iy,
                                         tolerance, adjust)
    for j, st in enumerate(status):
        if st != kernels.OK:
            _raise_for_status(st, np.delete(idx, j).tolist())
    return np.asarray(r)


def valid_set_test(dataset: Dataset, subset, alpha: float = 0.05,
                   tolerance: float = DEFAULT_TOLERANCE, adjust: bool = True) -> bool:
    """True iff no leave-one-out pseudo-residual correlation is significant.

    For each ``j`` in ``subset`` the pseudo-residual is built from the
    remaining instruments and tested against ``G_j``; a single rejection
    marks the set as invalid.

    ``adjust=True`` (default) tests the instrument's component orthogonal
    to X, which keeps the test at its nominal level despite the slope being
    estimated from the same sample. ``adjust=False`` correlates with G_j
    directly and over-rejects valid sets, increasingly so when the held-out
    instrument is stronger than the ones defining the slope.
    """
    idx = _index_array(subset, dataset.g)
    r = leave_one_out_correlations(dataset.moments, idx, dataset.ix, dataset.iy, tolerance, adjust)
    return bool(np.all(accepts_zero(r, dataset.n, alpha)))


def population_valid_set(moments, subset, ix: int = -2, iy: int = -1,
                         tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Exact-moment version of :func:`valid_set_test`: all leave-one-out correlations vanish."""
    m = np.asarray(moments).shape[0]
    r = leave_one_out_correlations(moments, subset, ix % m, iy % m, tolerance)
    return bool(np.all(np.abs(r) <= tolerance))


def pseudo_residual_correlation(moments, subset: Sequence[int], j: int, ix: int = -2, iy: int = -1,
                                tolerance: float = DEFAULT_TOLERANCE, adjust: bool = False) -> float:
    """corr(Y - omega_S X, G_j) from a covariance matrix."""
    m = np.asarray(moments).shape[0]
    ix, iy = ix % m, iy % m
    idx = _index_array(subset, m)
    r, status = kernels.pr_correlations(np.ascontiguousarray(moments, dtype=np.float64), idx,
                                        np.array([j], dtype=np.int64), ix, iy, tolerance, adjust)
    _raise_for_status(status, idx.tolist())
    return float(r[0])


def pseudo_residual_covariance(moments, subset: Sequence[int], j: int, ix: int = -2, iy: int = -1,
                               tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Cov(Y - omega_S X, G_j) from a covariance matrix."""
    cov = np.asarray(moments, dtype=np.float64)
    w = tsls_population(cov, subset, ix, iy, tolerance)
    return float(cov[iy, j] - w * cov[ix, j])
