"""Seeded random variate generators and the density helpers the sampler needs.

All samplers take an explicit :class:`numpy.random.Generator`; there is no
module-level random state.  Several functions accept stacked inputs
(leading batch axes) so that per-cluster or per-unit draws can be made in
one call; the scalar/vector call forms are the public surface described in
the docstrings.
"""

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    AllZeroWeights,
    DofTooSmall,
    NonPositiveAlpha,
    NotPositiveDefinite,
)

Rng = np.random.Generator

# standardized truncation point above which the exponential-proposal
# tail sampler replaces inverse-cdf inversion
_TAIL_SWITCH = 5.0
_JITTER = 1e-10


def make_rng(seed):
    """Return a PCG64 generator for a 64-bit integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


# -- covariance handling ----------------------------------------------------

def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def spd_cholesky(a, error=NotPositiveDefinite):
    """Lower Cholesky factor of a (stack of) symmetric positive definite matrices.

    The input is symmetrized first.  A matrix whose factorization fails gets
    one diagonal jitter of ``1e-10 * trace / d``; a second failure raises
    ``error``.
    """
    a = symmetrize(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    d = a.shape[-1]
    flat = a.reshape(-1, d, d)
    out = np.empty_like(flat)
    for k, mat in enumerate(flat):
        try:
            out[k] = np.linalg.cholesky(mat)
            continue
        except np.linalg.LinAlgError:
            pass
        tr = np.trace(mat)
        if not np.isfinite(tr) or tr <= 0:
            raise error(f"matrix is not positive definite (trace={tr})")
        try:
            out[k] = np.linalg.cholesky(mat + _JITTER * tr / d * np.eye(d))
        except np.linalg.LinAlgError:
            raise error("matrix is not positive definite after jitter") from None
    return out.reshape(a.shape)


def is_cov_matrix(a, rtol=1e-12):
    """True when ``a`` is square, symmetric to ``rtol`` and Cholesky-factorizable."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.all(np.isfinite(a)):
        return False
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > rtol * scale:
        return False
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


# -- Gaussian ---------------------------------------------------------------

def draw_mvn(rng, mean, cov):
    """Draw from N(mean, cov); ``mean`` may carry leading batch axes matching ``cov``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape[-1] != mean.shape[-1] or cov.shape[-2] != mean.shape[-1]:
        raise ValueError(f"dimension mismatch: mean {mean.shape}, cov {cov.shape}")
    chol = spd_cholesky(cov)
    z = rng.standard_normal(mean.shape)
    return mean + np.einsum("...ij,...j->...i", chol, z)


def draw_mvn_precision(rng, precision, rhs, error=NotPositiveDefinite):
    """Draw x ~ N(P^-1 b, P^-1) for a stack of precisions P and vectors b.

    Parameters
    ----------
    precision : array (..., d, d)
    rhs : array (..., d)
        The linear term ``b``; the returned mean is ``solve(P, b)``.
    """
    chol = spd_cholesky(precision, error=error)
    half = np.linalg.solve(chol, rhs[..., None])
    z = rng.standard_normal(rhs.shape)[..., None]
    # P = L L^T  =>  mean = L^-T L^-1 b,  noise = L^-T z
    lt = np.swapaxes(chol, -1, -2)
    return np.linalg.solve(lt, half + z)[..., 0]


def mvn_logpdf(x, mean, chol):
    """Log-density of N(mean, L L^T) at the rows of ``x``.

    ``x`` is (n, d); ``mean`` is (C, d) and ``chol`` (C, d, d).  Returns the
    (n, C) matrix of log densities.
    """
    n, d = x.shape
    C = mean.shape[0]
    inv_chol = np.linalg.inv(chol)                       # (C, d, d)
    # whitened coordinates L_c^-1 (x - mu_c) for every c in one matmul
    stacked = np.swapaxes(inv_chol, -1, -2).transpose(1, 0, 2).reshape(d, C * d)
    shift = np.einsum("cij,cj->ci", inv_chol, mean).reshape(C * d)
    white = (x @ stacked - shift).reshape(n, C, d)
    maha = np.einsum("ncd,ncd->nc", white, white) if d > 1 else white[..., 0] ** 2
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (maha + logdet[None, :] + d * np.log(2.0 * np.pi))


def normal_logpdf(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


# -- Wishart family ---------------------------------------------------------

def draw_inverse_wishart(rng, scale, dof):
    """Draw from the inverse-Wishart IW(scale, dof), mean ``scale/(dof-d-1)``.

    Uses the Bartlett factor of a Wishart(scale^-1, dof) matrix: with
    ``scale = C C^T`` and ``A`` the Bartlett lower triangle,
    ``C A^-T A^-1 C^T`` is the required draw.  ``scale`` may be a stack
    (..., d, d) and ``dof`` a matching array of degrees of freedom.
    """
    scale = np.asarray(scale, dtype=float)
    d = scale.shape[-1]
    batch = scale.shape[:-2]
    dof = np.broadcast_to(np.asarray(dof, dtype=float), batch)
    if np.any(dof < d):
        raise DofTooSmall(f"inverse-Wishart needs dof >= {d}, got {np.min(dof)}")
    c = spd_cholesky(scale)
    a = np.zeros(batch + (d, d))
    idx = np.arange(d)
    a[..., idx, idx] = np.sqrt(rng.chisquare(dof[..., None] - idx))
    low = np.tril_indices(d, -1)
    if low[0].size:
        a[..., low[0], low[1]] = rng.standard_normal(batch + (low[0].size,))
    k = c @ np.swapaxes(np.linalg.inv(a), -1, -2)
    return symmetrize(k @ np.swapaxes(k, -1, -2))


# -- simplex / scalar families ----------------------------------------------

def draw_dirichlet(rng, alpha):
    """Dirichlet draw; ``alpha`` is (K,) or a stack (..., K) of concentrations."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise NonPositiveAlpha("Dirichlet concentrations must be positive")
    g = rng.standard_gamma(alpha)
    tot = g.sum(axis=-1, keepdims=True)
    out = g / np.where(tot > 0, tot, 1.0)
    if np.any(tot <= 0):
        # all gammas underflowed (tiny alpha): fall back to numpy's
        # small-alpha-safe routine for those rows
        flat_a = alpha.reshape(-1, alpha.shape[-1])
        flat_o = out.reshape(-1, alpha.shape[-1])
        for r in np.flatnonzero(tot.reshape(-1) <= 0):
            flat_o[r] = rng.dirichlet(flat_a[r])
        out = flat_o.reshape(alpha.shape)
    return out


def draw_gamma(rng, shape, rate, size=None):
    """Gamma(shape, rate) draw(s); mean ``shape/rate``."""
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def draw_beta(rng, a, b, size=None):
    return rng.beta(a, b, size=size)


def draw_categorical(rng, weights):
    """Index drawn with probability proportional to non-negative ``weights``."""
    w = np.asarray(weights, dtype=float)
    tot = w.sum()
    if not tot > 0 or not np.isfinite(tot):
        raise AllZeroWeights("categorical weights sum to zero")
    cum = np.cumsum(w)
    return int(min(np.searchsorted(cum, rng.random() * tot, side="right"), w.size - 1))


def draw_categorical_log(rng, log_weights):
    """Row-wise categorical draws from an (n, K) matrix of unnormalized log-weights.

    Weights are exponentiated after subtracting each row's maximum, so adding
    a constant to a row does not change the result.
    """
    lw = np.asarray(log_weights, dtype=float)
    top = lw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise AllZeroWeights("a row of allocation weights is entirely -inf or nan")
    w = np.exp(lw - top)
    cum = np.cumsum(w, axis=1)
    u = rng.random(lw.shape[0]) * cum[:, -1]
    z = np.sum(cum <= u[:, None], axis=1)
    return np.minimum(z, lw.shape[1] - 1)


# -- truncated normal ---------------------------------------------------------

def _std_normal_above(rng, alpha):
    """Standard normal draws conditioned on z > alpha (vector of bounds)."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    body = alpha <= _TAIL_SWITCH
    if np.any(body):
        a = alpha[body]
        u = rng.random(a.shape)
        # inverse survival function, numerically safe for a > 0
        out[body] = -ndtri(u * ndtr(-a))
    tail = np.flatnonzero(~body)
    if tail.size:
        # exponential-proposal rejection, accept rate > 0.98 for a >= 5
        a = alpha[tail]
        lam = 0.5 * (a + np.sqrt(a * a + 4.0))
        pending = np.arange(tail.size)
        while pending.size:
            ap, lp = a[pending], lam[pending]
            z = ap + rng.exponential(1.0 / lp)
            ok = rng.random(pending.size) <= np.exp(-0.5 * (z - lp) ** 2)
            out[tail[pending[ok]]] = z[ok]
            pending = pending[~ok]
    return np.maximum(out, alpha)


def draw_truncated_normal(rng, mean, sd, side):
    """Draw from N(mean, sd^2) restricted to (0, inf) or (-inf, 0].

    Parameters
    ----------
    mean, sd : float or array
    side : {"positive", "negative"} or a boolean array
        A boolean array selects the positive side elementwise (the probit
        augmentation case, where ``side = (y == 1)``).
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
    if np.any(~(sd > 0)):
        raise ValueError("sd must be positive")
    if isinstance(side, str):
        s = side.lower()
        if s not in ("positive", "negative"):
            raise ValueError(f"unknown side {side!r}")
        positive = np.full(mean.shape, s == "positive")
    else:
        positive = np.broadcast_to(np.asarray(side, dtype=bool), mean.shape)
    sign = np.where(positive, 1.0, -1.0)
    m = sign * mean
    z = _std_normal_above(rng, np.atleast_1d(-m / sd)).reshape(mean.shape)
    x = m + sd * z
    # keep the support strict on the positive side after rounding
    x = np.where(x > 0, x, np.nextafter(0.0, 1.0))
    out = sign * x
    out = np.where(positive, out, np.minimum(out, 0.0))
    return out if out.ndim else float(out)
