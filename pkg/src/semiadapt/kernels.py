"""Hot per-step kernels for the block-diagonal recursions.

Every kernel works on ``D`` independent blocks that share one feature vector
``phi`` of length ``h``. Arrays are updated in place; callers own the copies.

Each kernel exists twice: a loop version compiled by numba and a vectorised
numpy version. The module-level names dispatch to one of them according to
:data:`semiadapt._jit.USE_NUMBA`.
"""
import numpy as np

from ._jit import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# RLS gain / parameter update
# ---------------------------------------------------------------------------

def _rls_update_loop(theta, gain, phi, y, lam1, lam2, err_out):
    D, h = theta.shape
    fphi = np.empty(h)
    inv1 = 1.0 / lam1
    min_denom = np.inf
    min_diag = np.inf
    for d in range(D):
        F = gain[d]
        pred = 0.0
        for i in range(h):
            pred += phi[i] * theta[d, i]
        e = y[d] - pred
        err_out[d] = e

        q = 0.0
        for i in range(h):
            s = 0.0
            for j in range(h):
                s += F[i, j] * phi[j]
            fphi[i] = s
            q += phi[i] * s
        denom = lam1 + lam2 * q
        if denom < min_denom:
            min_denom = denom
        if denom <= 0.0:
            continue
        c = lam2 / denom
        # upper triangle, mirrored: the result is exactly symmetric
        for i in range(h):
            ci = c * fphi[i]
            for j in range(i, h):
                v = (F[i, j] - ci * fphi[j]) * inv1
                F[i, j] = v
                F[j, i] = v
            if F[i, i] < min_diag:
                min_diag = F[i, i]

        # parameter step with the updated gain: F_new phi == F phi / denom
        g = e / denom
        for i in range(h):
            theta[d, i] += fphi[i] * g
    return min_denom, min_diag


def _rls_update_vec(theta, gain, phi, y, lam1, lam2, err_out):
    err_out[:] = y - theta @ phi
    fphi = gain @ phi
    q = fphi @ phi
    denom = lam1 + lam2 * q
    min_denom = float(denom.min())
    if min_denom <= 0.0:
        ok = denom > 0.0
    else:
        ok = slice(None)
    c = np.zeros_like(denom)
    c[ok] = lam2 / denom[ok]
    upd = (gain - c[:, None, None] * fphi[:, :, None] * fphi[:, None, :]) / lam1
    upd = 0.5 * (upd + upd.transpose(0, 2, 1))
    gain[ok] = upd[ok]
    theta[ok] += fphi[ok] * (err_out[ok] / denom[ok])[:, None]
    min_diag = float(np.diagonal(gain, axis1=1, axis2=2).min())
    return min_denom, min_diag


# ---------------------------------------------------------------------------
# quadratic forms phi' X_d phi
# ---------------------------------------------------------------------------

def _quad_forms_loop(blocks, phi, out):
    D, h, _ = blocks.shape
    for d in range(D):
        acc = 0.0
        for i in range(h):
            s = 0.0
            for j in range(h):
                s += blocks[d, i, j] * phi[j]
            acc += phi[i] * s
        out[d] = acc


def _quad_forms_vec(blocks, phi, out):
    out[:] = (blocks @ phi) @ phi


# ---------------------------------------------------------------------------
# parameter MSEE bookkeeping
# ---------------------------------------------------------------------------

def _psd_within(X, tol, work):
    """True if ``X + tol*I`` admits a Cholesky factorisation."""
    h = X.shape[0]
    for j in range(h):
        s = X[j, j] + tol
        for r in range(j):
            s -= work[j, r] * work[j, r]
        if not s > 0.0:
            return False
        ljj = np.sqrt(s)
        work[j, j] = ljj
        for i in range(j + 1, h):
            t = X[i, j]
            for r in range(j):
                t -= work[i, r] * work[j, r]
            work[i, j] = t / ljj
    return True


def _param_msee_loop(xtt, etheta, gain, phi, x_diag, dtheta, clip_tol):
    """One step of the parameter-error recursion for every block.

    ``gain`` is the gain that produced this step's parameter update. Blocks
    that are not positive semidefinite to within ``clip_tol`` get their
    negative eigenvalues clipped to zero; the number of such blocks is
    returned.
    """
    D, h, _ = xtt.shape
    k = np.empty(h)
    xphi = np.empty(h)
    work = np.empty((h, h))
    clips = 0
    for d in range(D):
        X = xtt[d]
        F = gain[d]
        dl = dtheta[d]
        pe = 0.0
        for i in range(h):
            s = 0.0
            t = 0.0
            for j in range(h):
                s += F[i, j] * phi[j]
                t += X[i, j] * phi[j]
            k[i] = s
            xphi[i] = t
            pe += phi[i] * etheta[d, i]
        for i in range(h):
            etheta[d, i] = etheta[d, i] - k[i] * pe + dl[i]
        e = etheta[d]
        xd = x_diag[d]
        # every term is symmetric in (i, j): fill the upper triangle and mirror
        for i in range(h):
            for j in range(i, h):
                v = (k[i] * xd * k[j]
                     - xphi[i] * k[j] - k[i] * xphi[j]
                     + e[i] * dl[j] + dl[i] * e[j] - dl[i] * dl[j]
                     + X[i, j])
                X[i, j] = v
                X[j, i] = v
        if _psd_within(X, clip_tol, work):
            continue
        clips += 1
        w, V = np.linalg.eigh(X)
        for i in range(h):
            if w[i] < 0.0:
                w[i] = 0.0
        for i in range(h):
            for j in range(i, h):
                s = 0.0
                for r in range(h):
                    s += V[i, r] * w[r] * V[j, r]
                X[i, j] = s
                X[j, i] = s
    return clips


def _param_msee_vec(xtt, etheta, gain, phi, x_diag, dtheta, clip_tol):
    k = gain @ phi
    xphi = xtt @ phi
    pe = etheta @ phi
    etheta[:] = etheta - k * pe[:, None] + dtheta
    e = etheta
    outer = lambda a, b: a[:, :, None] * b[:, None, :]  # noqa: E731
    new = (x_diag[:, None, None] * outer(k, k)
           - outer(xphi, k) - outer(k, xphi)
           + outer(e, dtheta) + outer(dtheta, e) - outer(dtheta, dtheta)
           + xtt)
    new = 0.5 * (new + new.transpose(0, 2, 1))
    eye = clip_tol * np.eye(new.shape[1])
    try:
        np.linalg.cholesky(new + eye)
        bad = []
    except np.linalg.LinAlgError:
        bad = []
        for d in range(new.shape[0]):
            try:
                np.linalg.cholesky(new[d] + eye)
            except np.linalg.LinAlgError:
                bad.append(d)
    for d in bad:
        w, V = np.linalg.eigh(new[d])
        proj = (V * np.maximum(w, 0.0)) @ V.T
        new[d] = 0.5 * (proj + proj.T)
    xtt[:] = new
    return len(bad)


rls_update_numba = njit(_rls_update_loop)
quad_forms_numba = njit(_quad_forms_loop)
_psd_within = njit(_psd_within)
param_msee_numba = njit(_param_msee_loop)

rls_update_numpy = _rls_update_vec
quad_forms_numpy = _quad_forms_vec
param_msee_numpy = _param_msee_vec

if USE_NUMBA:
    rls_update_blocks = rls_update_numba
    quad_forms = quad_forms_numba
    param_msee_blocks = param_msee_numba
else:
    rls_update_blocks = rls_update_numpy
    quad_forms = quad_forms_numpy
    param_msee_blocks = param_msee_numpy
