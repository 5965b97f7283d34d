"""Moment-matrix kernels behind every TSLS / pseudo-residual computation.

All kernels take a covariance matrix ``cov`` of centered data (or exact
population moments) together with the column indices of the exposure
(``ix``) and outcome (``iy``). Passing ``ix``/``iy`` swapped gives the
reverse direction. Instrument sets are int64 index arrays into ``cov``.

Pseudo-residual correlations come in two flavours selected by ``adjust``.
The plain one is corr(PR_S, G_j). The adjusted one is corr(PR_S, h_j) with
``h_j = G_j - kappa * Xhat_S`` and ``kappa`` chosen so that h_j is
uncorrelated with X. TSLS makes PR_S exactly orthogonal to the first-stage
fit Xhat_S, so both share the numerator Cov(PR_S, G_j) and vanish together;
only the adjusted one has the 1/n null variance of an ordinary sample
correlation, because the slope estimation error drops out to first order.

Kernels never raise on degenerate inputs. They report a status code per
result instead: ``OK``, ``SINGULAR`` (instrument block not full rank) or
``WEAK`` (first-stage fitted variance below ``wtol`` times the exposure
variance). The python wrappers in :mod:`prebim.estimators` turn those into
exceptions.

Two implementations with identical signatures are provided: ``*_numba``
(explicit loops compiled with ``numba.njit``) and ``*_numpy`` (vectorised).
The module-level names bind to whichever backend :mod:`prebim._backend`
selected.
"""
import numpy as np

from ._backend import BACKEND, HAVE_NUMBA

OK = 0
SINGULAR = 1
WEAK = 2

# relative Cholesky pivot threshold for rank deficiency
SINGULAR_RTOL = 1e-12
# variances below this fraction of their reference are treated as zero
_ZERO_VAR_RTOL = 1e-14


# ---------------------------------------------------------------------------
# loop implementations (compiled by numba when available)
# ---------------------------------------------------------------------------

def _moment_matrix_loops(z):
    n, m = z.shape
    out = np.zeros((m, m))
    for a in range(m):
        for b in range(a, m):
            s = 0.0
            for i in range(n):
                s += z[i, a] * z[i, b]
            out[a, b] = s / n
            out[b, a] = out[a, b]
    return out


def _chol_solve(a, b):
    m = a.shape[0]
    low = np.zeros((m, m))
    scale = 0.0
    for i in range(m):
        if a[i, i] > scale:
            scale = a[i, i]
    if scale <= 0.0:
        return np.zeros(m), False
    for j in range(m):
        s = a[j, j]
        for k in range(j):
            s -= low[j, k] * low[j, k]
        if s <= SINGULAR_RTOL * scale:
            return np.zeros(m), False
        low[j, j] = np.sqrt(s)
        for i in range(j + 1, m):
            t = a[i, j]
            for k in range(j):
                t -= low[i, k] * low[j, k]
            low[i, j] = t / low[j, j]
    y = np.empty(m)
    for i in range(m):
        t = b[i]
        for k in range(i):
            t -= low[i, k] * y[k]
        y[i] = t / low[i, i]
    x = np.empty(m)
    for i in range(m - 1, -1, -1):
        t = y[i]
        for k in range(i + 1, m):
            t -= low[k, i] * x[k]
        x[i] = t / low[i, i]
    return x, True


def _tsls_core(cov, idx, ix, iy, wtol):
    # returns slope, status, first-stage coefficients and Var(Xhat) = b . C_SX
    m = idx.shape[0]
    if m == 0:
        return np.nan, SINGULAR, np.zeros(0), 0.0
    block = np.empty((m, m))
    cx = np.empty(m)
    cy = np.empty(m)
    for a in range(m):
        cx[a] = cov[idx[a], ix]
        cy[a] = cov[idx[a], iy]
        for b in range(m):
            block[a, b] = cov[idx[a], idx[b]]
    coef, ok = _chol_solve(block, cx)
    if not ok:
        return np.nan, SINGULAR, coef, 0.0
    num = 0.0
    den = 0.0
    for a in range(m):
        num += coef[a] * cy[a]
        den += coef[a] * cx[a]
    if den <= wtol * cov[ix, ix]:
        return np.nan, WEAK, coef, den
    return num / den, OK, coef, den


def _tsls_loops(cov, idx, ix, iy, wtol):
    w, status, coef, den = _tsls_core(cov, idx, ix, iy, wtol)
    return w, status


def _pr_corr_loops(cov, w, j, ix, iy, idx, coef, den, adjust):
    c = cov[iy, j] - w * cov[ix, j]
    v = cov[iy, iy] - 2.0 * w * cov[ix, iy] + w * w * cov[ix, ix]
    vh = cov[j, j]
    if adjust:
        kappa = cov[j, ix] / den
        cjs = 0.0
        for a in range(idx.shape[0]):
            cjs += coef[a] * cov[j, idx[a]]
        vh = cov[j, j] - 2.0 * kappa * cjs + kappa * kappa * den
    if v <= _ZERO_VAR_RTOL * cov[iy, iy] or vh <= _ZERO_VAR_RTOL * cov[j, j] or cov[j, j] <= 0.0:
        return 0.0
    r = c / np.sqrt(v * vh)
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


def _loo_loops(cov, idx, ix, iy, wtol, adjust):
    m = idx.shape[0]
    r = np.full(m, np.nan)
    status = np.zeros(m, dtype=np.int64)
    rest = np.empty(max(m - 1, 0), dtype=np.int64)
    for j in range(m):
        p = 0
        for a in range(m):
            if a != j:
                rest[p] = idx[a]
                p += 1
        w, st, coef, den = _tsls_core(cov, rest, ix, iy, wtol)
        status[j] = st
        if st == OK:
            r[j] = _pr_corr_loops(cov, w, idx[j], ix, iy, rest, coef, den, adjust)
    return r, status


def _pr_correlations_loops(cov, idx, cand, ix, iy, wtol, adjust):
    k = cand.shape[0]
    r = np.full(k, np.nan)
    w, st, coef, den = _tsls_core(cov, idx, ix, iy, wtol)
    if st == OK:
        for a in range(k):
            r[a] = _pr_corr_loops(cov, w, cand[a], ix, iy, idx, coef, den, adjust)
    return r, st


def _pair_scores_loops(cov, cand, ix, iy, wtol, adjust):
    k = cand.shape[0]
    r = np.full((k, k), np.nan)
    status = np.zeros(k, dtype=np.int64)
    single = np.empty(1, dtype=np.int64)
    for b in range(k):
        single[0] = cand[b]
        w, st, coef, den = _tsls_core(cov, single, ix, iy, wtol)
        status[b] = st
        if st != OK:
            continue
        for a in range(k):
            if a != b:
                r[a, b] = _pr_corr_loops(cov, w, cand[a], ix, iy, single, coef, den, adjust)
    return r, status


def _extension_loops(cov, idx, cand, ix, iy, wtol, adjust):
    m = idx.shape[0]
    k = cand.shape[0]
    r = np.full((k, m + 1), np.nan)
    status = np.zeros((k, m + 1), dtype=np.int64)
    ext = np.empty(m + 1, dtype=np.int64)
    for a in range(m):
        ext[a] = idx[a]
    for c in range(k):
        ext[m] = cand[c]
        rc, sc = _loo_loops(cov, ext, ix, iy, wtol, adjust)
        for a in range(m + 1):
            r[c, a] = rc[a]
            status[c, a] = sc[a]
    return r, status


if HAVE_NUMBA:
    from numba import njit

    _jit = njit(cache=True, nogil=True)
    moment_matrix_numba = _jit(_moment_matrix_loops)
    _chol_solve = _jit(_chol_solve)
    _tsls_core = _jit(_tsls_core)
    _pr_corr_loops = _jit(_pr_corr_loops)
    _loo_loops = _jit(_loo_loops)
    tsls_numba = _jit(_tsls_loops)
    loo_correlations_numba = _loo_loops
    pr_correlations_numba = _jit(_pr_correlations_loops)
    pair_scores_numba = _jit(_pair_scores_loops)
    extension_correlations_numba = _jit(_extension_loops)
else:  # pragma: no cover
    moment_matrix_numba = _moment_matrix_loops
    tsls_numba = _tsls_loops
    loo_correlations_numba = _loo_loops
    pr_correlations_numba = _pr_correlations_loops
    pair_scores_numba = _pair_scores_loops
    extension_correlations_numba = _extension_loops


# ---------------------------------------------------------------------------
# vectorised numpy implementations
# ---------------------------------------------------------------------------

def moment_matrix_numpy(z):
    z = np.asarray(z, dtype=np.float64)
    return (z.T @ z) / z.shape[0]


def _batched_solve(blocks, rhs):
    """Solve a stack of small SPD systems; flag rank-deficient ones."""
    eig = np.linalg.eigvalsh(blocks)
    scale = np.max(np.abs(eig), axis=-1)
    ok = (scale > 0) & (eig[..., 0] > SINGULAR_RTOL * scale)
    coef = np.zeros(rhs.shape)
    if ok.any():
        coef[ok] = np.linalg.solve(blocks[ok], rhs[ok][..., None])[..., 0]
    return coef, ok


def _tsls_batch(cov, sets, ix, iy, wtol):
    # sets: (b, m) index matrix, one instrument set per row
    blocks = cov[sets[:, :, None], sets[:, None, :]]
    cx = cov[sets, ix]
    cy = cov[sets, iy]
    coef, ok = _batched_solve(blocks, cx)
    den = np.einsum("bm,bm->b", coef, cx)
    num = np.einsum("bm,bm->b", coef, cy)
    status = np.where(ok, OK, SINGULAR)
    weak = ok & (den <= wtol * cov[ix, ix])
    status[weak] = WEAK
    w = np.full(len(sets), np.nan)
    good = status == OK
    w[good] = num[good] / den[good]
    return w, status, coef, den


def _pr_corr_numpy(cov, w, j, ix, iy, den=None, cjs=None):
    # broadcasting over w, j, den and cjs; cjs = Cov(G_j, Xhat) enables the adjusted form
    c = cov[iy, j] - w * cov[ix, j]
    v = cov[iy, iy] - 2.0 * w * cov[ix, iy] + w * w * cov[ix, ix]
    cjj = cov[j, j]
    vh = cjj
    if cjs is not None:
        with np.errstate(invalid="ignore", divide="ignore"):
            kappa = cov[j, ix] / den
        vh = cjj - 2.0 * kappa * cjs + kappa * kappa * den
    degenerate = (v <= _ZERO_VAR_RTOL * cov[iy, iy]) | (vh <= _ZERO_VAR_RTOL * cjj) | (cjj <= 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = c / np.sqrt(np.where(degenerate, 1.0, v * vh))
    r = np.where(degenerate, 0.0, r)
    return np.clip(r, -1.0, 1.0)


def tsls_numpy(cov, idx, ix, iy, wtol):
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return np.nan, SINGULAR
    w, status, _, _ = _tsls_batch(cov, idx[None, :], ix, iy, wtol)
    return float(w[0]), int(status[0])


def loo_correlations_numpy(cov, idx, ix, iy, wtol, adjust):
    idx = np.asarray(idx, dtype=np.int64)
    m = idx.size
    if m < 2:
        return np.full(m, np.nan), np.full(m, SINGULAR, dtype=np.int64)
    keep = ~np.eye(m, dtype=bool)
    sets = np.broadcast_to(idx, (m, m))[keep].reshape(m, m - 1)
    w, status, coef, den = _tsls_batch(cov, sets, ix, iy, wtol)
    r = np.full(m, np.nan)
    good = status == OK
    cjs = None
    if adjust:
        cjs = np.einsum("bm,bm->b", coef, cov[idx[:, None], sets])[good]
    r[good] = _pr_corr_numpy(cov, w[good], idx[good], ix, iy, den[good], cjs)
    return r, status.astype(np.int64)


def pr_correlations_numpy(cov, idx, cand, ix, iy, wtol, adjust):
    idx = np.asarray(idx, dtype=np.int64)
    cand = np.asarray(cand, dtype=np.int64)
    if idx.size == 0:
        return np.full(cand.size, np.nan), SINGULAR
    w, status, coef, den = _tsls_batch(cov, idx[None, :], ix, iy, wtol)
    if status[0] != OK:
        return np.full(cand.size, np.nan), int(status[0])
    cjs = cov[cand[:, None], idx[None, :]] @ coef[0] if adjust else None
    return _pr_corr_numpy(cov, w[0], cand, ix, iy, den[0], cjs), OK


def pair_scores_numpy(cov, cand, ix, iy, wtol, adjust):
    cand = np.asarray(cand, dtype=np.int64)
    k = cand.size
    w, status, coef, den = _tsls_batch(cov, cand[:, None], ix, iy, wtol)
    good = status == OK
    cjs = None
    if adjust:
        # Cov(G_a, Xhat_b) for the single-instrument fit on b
        cjs = cov[cand[:, None], cand[None, :]] * coef[:, 0][None, :]
    # r[a, b] = corr(PR_{cand[b]}, G_{cand[a]})
    r = _pr_corr_numpy(cov, w[None, :], cand[:, None], ix, iy, den[None, :], cjs)
    r = np.where(good[None, :], r, np.nan)
    np.fill_diagonal(r, np.nan)
    return r, status.astype(np.int64)


def extension_correlations_numpy(cov, idx, cand, ix, iy, wtol, adjust):
    idx = np.asarray(idx, dtype=np.int64)
    cand = np.asarray(cand, dtype=np.int64)
    m = idx.size
    r = np.full((cand.size, m + 1), np.nan)
    status = np.zeros((cand.size, m + 1), dtype=np.int64)
    for c, k in enumerate(cand):
        r[c], status[c] = loo_correlations_numpy(cov, np.append(idx, k), ix, iy, wtol, adjust)
    return r, status


IMPLEMENTATIONS = {
    "numba": {
        "moment_matrix": moment_matrix_numba,
        "tsls": tsls_numba,
        "loo_correlations": loo_correlations_numba,
        "pr_correlations": pr_correlations_numba,
        "pair_scores": pair_scores_numba,
        "extension_correlations": extension_correlations_numba,
    },
    "numpy": {
        "moment_matrix": moment_matrix_numpy,
        "tsls": tsls_numpy,
        "loo_correlations": loo_correlations_numpy,
        "pr_correlations": pr_correlations_numpy,
        "pair_scores": pair_scores_numpy,
        "extension_correlations": extension_correlations_numpy,
    },
}

_active = IMPLEMENTATIONS[BACKEND]
# the Gram product is a single BLAS call, which beats the compiled loops
# (see benchmarks/bench_kernels.py), so both backends bind it here
moment_matrix = moment_matrix_numpy
tsls = _active["tsls"]
loo_correlations = _active["loo_correlations"]
pr_correlations = _active["pr_correlations"]
pair_scores = _active["pair_scores"]
extension_correlations = _active["extension_correlations"]
