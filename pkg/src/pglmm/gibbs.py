"""Blocked Gibbs sampler for the truncated profile-regression mixed model.

One sweep updates, in order: allocations, stick fractions and weights, the
concentration, the clustering-model parameters, the probit latent outcomes
(probit only) and the outcome-model parameters.  Every block is an exact
draw from its full conditional.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng_dist as rd
from .errors import NumericalError, RankDeficientBlock, SamplerError
from .priors import ParamState, fingerprint, stick_weights, theta_init

log = logging.getLogger(__name__)

BLOCKS = ("allocations", "sticks", "concentration", "assignment", "latents",
          "beta", "eta", "W_re", "gamma", "W_int")
_V_MAX = 1.0 - 1e-12


# -- helpers ----------------------------------------------------------------

def _group_sum(values, groups, n_groups):
    """Per-group sums of the rows of ``values`` (n, k) -> (n_groups, k)."""
    out = np.empty((n_groups, values.shape[1]))
    for k in range(values.shape[1]):
        out[:, k] = np.bincount(groups, weights=values[:, k], minlength=n_groups)
    return out


def _group_gram(X, groups, n_groups):
    """Per-group Gram matrices sum_{i in group} x_i x_i^T -> (n_groups, q, q)."""
    q = X.shape[1]
    out = np.empty((n_groups, q, q))
    for a in range(q):
        for b in range(a, q):
            s = np.bincount(groups, weights=X[:, a] * X[:, b], minlength=n_groups)
            out[:, a, b] = s
            out[:, b, a] = s
    return out


class SweepCache:
    """Data-only quantities reused by every sweep."""

    def __init__(self, data):
        self.XtX_fe = data.X_fe.T @ data.X_fe
        self.G_re = _group_gram(data.X_re, data.g, data.m) if data.q_re else None


def _working_response(state, data, spec):
    return state.ystar if spec.is_probit else data.y


def _re_term(state, data):
    if not data.q_re:
        return np.zeros(data.n)
    return np.einsum("ij,ij->i", data.X_re, state.eta[data.g])


def _int_term(state, data):
    return np.einsum("ij,ij->i", data.X_int, state.gamma[state.Z])


def _inv_spd(a):
    chol = rd.spd_cholesky(a)
    inv_chol = np.linalg.inv(chol)
    return np.swapaxes(inv_chol, -1, -2) @ inv_chol


# -- allocation weights -----------------------------------------------------

def allocation_log_weights(state, data, spec):
    """(n, C) unnormalized log allocation weights.

    log pi_c + log f_y(y_i | gamma_c, beta, eta_g(i), sigma2) + log f_u(u_i | theta_c).
    """
    C = state.gamma.shape[0]
    with np.errstate(divide="ignore"):
        lw = np.broadcast_to(np.log(state.pi), (data.n, C)).copy()
    w = _working_response(state, data, spec)
    resid = w - data.X_fe @ state.beta - _re_term(state, data)
    pred = data.X_int @ state.gamma.T
    sigma2 = 1.0 if spec.is_probit else state.sigma2
    lw += rd.normal_logpdf(resid[:, None], pred, sigma2)
    if data.q_uc:
        chol = rd.spd_cholesky(state.Sigma)
        lw += rd.mvn_logpdf(data.U_cont, state.mu, chol)
    for j, ph in enumerate(state.phi):
        with np.errstate(divide="ignore"):
            lw += np.log(ph[:, data.U_cat[:, j]]).T
    return lw


def update_allocations(rng, state, data, spec):
    """Draw every Z_i from its categorical full conditional."""
    C = state.gamma.shape[0]
    if data.n == 0:
        return np.zeros(0, dtype=np.int64)
    if C == 1:
        return np.zeros(data.n, dtype=np.int64)
    return rd.draw_categorical_log(rng, allocation_log_weights(state, data, spec))


# -- mixture weights --------------------------------------------------------

def update_sticks_and_weights(rng, state):
    """V_c ~ Beta(1 + n_c, zeta + sum_{l>c} n_l) for c < C, V_C = 1."""
    C = state.V.shape[0]
    counts = np.bincount(state.Z, minlength=C).astype(float)
    above = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0.0]))
    V = np.ones(C)
    V[:-1] = rd.draw_beta(rng, 1.0 + counts[:-1], state.zeta + above[:-1])
    return V, stick_weights(V)


def update_concentration(rng, state, priors):
    """zeta ~ Gamma(a + C - 1, b - sum_{c<C} log(1 - V_c))."""
    C = state.V.shape[0]
    v = np.minimum(state.V[:-1], _V_MAX)
    rate = priors.dp.b - np.sum(np.log1p(-v))
    return float(rd.draw_gamma(rng, priors.dp.a + C - 1, rate))


# -- clustering-model parameters ---------------------------------------------

def update_assignment_params(rng, state, data, priors):
    """Normal-inverse-Wishart and Dirichlet conjugate draws for every cluster.

    Returns ``(mu, Sigma, phi)``.  Empty clusters get fresh prior draws.
    """
    C = state.gamma.shape[0]
    Z = state.Z
    counts = np.bincount(Z, minlength=C).astype(float)

    if data.q_uc:
        p = priors.assign_cont
        q = data.q_uc
        s1 = _group_sum(data.U_cont, Z, C)
        s2 = _group_gram(data.U_cont, Z, C)
        lam_n = p.lambda0 + counts
        mu_n = (p.lambda0 * p.mu0[None, :] + s1) / lam_n[:, None]
        phi_n = (p.phi0[None] + s2 + p.lambda0 * np.outer(p.mu0, p.mu0)[None]
                 - lam_n[:, None, None] * mu_n[:, :, None] * mu_n[:, None, :])
        Sigma = rd.draw_inverse_wishart(rng, rd.symmetrize(phi_n), p.nu0 + counts)
        mu = rd.draw_mvn(rng, mu_n, Sigma / lam_n[:, None, None])
    else:
        q = 0
        Sigma, mu = np.zeros((C, q, q)), np.zeros((C, q))

    phi = []
    for j, K in enumerate(data.n_categories):
        cat_counts = np.bincount(Z * K + data.U_cat[:, j], minlength=C * K).reshape(C, K)
        phi.append(rd.draw_dirichlet(rng, priors.assign_cat.rho + cat_counts))
    return mu, Sigma, phi


# -- probit augmentation ------------------------------------------------------

def update_probit_latents(rng, state, data):
    """y*_i ~ N(m_i, 1) truncated to (0, inf) when y_i = 1 and (-inf, 0] otherwise."""
    m = data.X_fe @ state.beta + _re_term(state, data) + _int_term(state, data)
    return np.atleast_1d(rd.draw_truncated_normal(rng, m, 1.0, data.y == 1))


# -- outcome-model parameters ---------------------------------------------------

def draw_fixed_effects(rng, resid, X, XtX, priors, probit):
    """Conjugate draw of (beta, sigma2) for the regression of ``resid`` on ``X``.

    Linear: NormGamma posterior with precision ``lam I + X^T X``.  Probit:
    sigma2 is fixed at 1 and beta | rest ~ N(P^-1 X^T r, P^-1).
    """
    q = X.shape[1]
    prec = priors.fe.lam * np.eye(q) + XtX
    xtr = X.T @ resid
    if probit:
        return rd.draw_mvn_precision(rng, prec, xtr, error=RankDeficientBlock), 1.0
    chol = rd.spd_cholesky(prec, error=RankDeficientBlock)
    half = np.linalg.solve(chol, xtr)                         # L^-1 X^T r
    a_n = priors.fe.a + 0.5 * resid.shape[0]
    b_n = priors.fe.b + 0.5 * max(float(resid @ resid - half @ half), 0.0)
    sigma2 = 1.0 / rd.draw_gamma(rng, a_n, b_n)
    z = rng.standard_normal(q)
    beta = np.linalg.solve(chol.T, half + np.sqrt(sigma2) * z)
    return beta, float(sigma2)


def random_effect_conditional(data, W_re, sigma2, resid, G_re=None):
    """Precisions (m, q, q) and linear terms (m, q) of every eta_j | rest.

    ``resid`` is the working response minus the fixed-effect and cluster
    terms; the conditional mean of eta_j is ``solve(prec[j], rhs[j])``.
    """
    if G_re is None:
        G_re = _group_gram(data.X_re, data.g, data.m)
    prec = _inv_spd(W_re)[None] + G_re / sigma2
    rhs = _group_sum(data.X_re * resid[:, None], data.g, data.m) / sigma2
    return prec, rhs


def update_outcome_params(rng, state, data, spec, priors, cache=None, fixed=()):
    """Sequential conjugate draws of beta, sigma2, eta, W_re, gamma and W_int.

    Returns a dict with the updated entries.  Blocks named in ``fixed``
    (``"beta"``, ``"eta"``, ``"W_re"``, ``"gamma"``, ``"W_int"``) keep their
    current values.
    """
    cache = cache or SweepCache(data)
    w = _working_response(state, data, spec)
    probit = spec.is_probit
    beta, sigma2, eta, W_re = state.beta, state.sigma2, state.eta, state.W_re
    gamma, W_int = state.gamma, state.W_int
    re_term = _re_term(state, data)
    int_term = _int_term(state, data)

    if "beta" not in fixed:
        beta, sigma2 = draw_fixed_effects(rng, w - re_term - int_term, data.X_fe,
                                          cache.XtX_fe, priors, probit)
    fe_term = data.X_fe @ beta

    if data.q_re:
        if "eta" not in fixed:
            prec, rhs = random_effect_conditional(data, W_re, sigma2, w - fe_term - int_term,
                                                  cache.G_re)
            eta = rd.draw_mvn_precision(rng, prec, rhs, error=RankDeficientBlock)
            re_term = np.einsum("ij,ij->i", data.X_re, eta[data.g])
        if "W_re" not in fixed:
            W_re = rd.draw_inverse_wishart(rng, priors.re.psi + eta.T @ eta,
                                           priors.re.nu + data.m)

    C = gamma.shape[0]
    if "gamma" not in fixed:
        resid = w - fe_term - re_term
        H = _group_gram(data.X_int, state.Z, C)
        prec = _inv_spd(W_int)[None] + H / sigma2
        rhs = _group_sum(data.X_int * resid[:, None], state.Z, C) / sigma2
        gamma = rd.draw_mvn_precision(rng, prec, rhs, error=RankDeficientBlock)
    if "W_int" not in fixed:
        W_int = rd.draw_inverse_wishart(rng, priors.interaction.psi + gamma.T @ gamma,
                                        priors.interaction.nu + C)

    return {"beta": beta, "sigma2": sigma2, "eta": eta, "W_re": W_re,
            "gamma": gamma, "W_int": W_int}


# -- sweeps and chains ----------------------------------------------------------

def sweep(rng, state, data, spec, priors, cache=None, fixed=()):
    """One full Gibbs sweep; updates ``state`` in place and returns it."""
    if "allocations" not in fixed:
        state.Z = update_allocations(rng, state, data, spec)
    if "sticks" not in fixed:
        state.V, state.pi = update_sticks_and_weights(rng, state)
    if "concentration" not in fixed:
        state.zeta = update_concentration(rng, state, priors)
    if "assignment" not in fixed:
        state.mu, state.Sigma, state.phi = update_assignment_params(rng, state, data, priors)
    if spec.is_probit and "latents" not in fixed:
        state.ystar = update_probit_latents(rng, state, data)
    for k, v in update_outcome_params(rng, state, data, spec, priors, cache, fixed).items():
        setattr(state, k, v)
    return state


@dataclass
class McmcChain:
    """Retained post-burn-in draws, stored as stacked arrays (leading axis H)."""

    Z: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    eta: np.ndarray
    W_re: np.ndarray
    gamma: np.ndarray
    W_int: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray
    pi: np.ndarray
    zeta: np.ndarray
    phi: list
    ystar: np.ndarray = None
    n_iterations: int = 0
    n_burn_in: int = 0
    seed: int = None
    meta: dict = field(default_factory=dict)

    ARRAYS = ("Z", "beta", "sigma2", "eta", "W_re", "gamma", "W_int", "mu",
              "Sigma", "V", "pi", "zeta")

    def __len__(self):
        return self.Z.shape[0]

    @property
    def n_draws(self):
        return len(self)

    @property
    def n_clusters_max(self):
        return self.V.shape[1]

    def state(self, h):
        """The h-th retained draw as a :class:`ParamState`."""
        has_re = self.W_re.shape[-1] > 0
        return ParamState(
            beta=self.beta[h].copy(), sigma2=float(self.sigma2[h]),
            eta=self.eta[h].copy(), W_re=self.W_re[h].copy() if has_re else None,
            gamma=self.gamma[h].copy(), W_int=self.W_int[h].copy(),
            phi=[p[h].copy() for p in self.phi], mu=self.mu[h].copy(),
            Sigma=self.Sigma[h].copy(), V=self.V[h].copy(), pi=self.pi[h].copy(),
            zeta=float(self.zeta[h]), Z=self.Z[h].astype(np.int64),
            ystar=None if self.ystar is None else self.ystar[h].copy(),
        )

    def occupied_counts(self):
        """Number of non-empty clusters in each retained draw."""
        C = self.n_clusters_max
        return np.array([np.count_nonzero(np.bincount(z, minlength=C)) for z in self.Z])


class _Recorder:
    def __init__(self, H, state, n):
        def empty(x, dtype=float):
            return np.empty((H,) + np.shape(x), dtype=dtype)

        C = state.V.shape[0]
        self.zdtype = np.int16 if C < 2 ** 15 else np.int32
        self.arrays = {
            "Z": np.empty((H, n), dtype=self.zdtype),
            "beta": empty(state.beta), "sigma2": np.empty(H),
            "eta": empty(state.eta),
            "W_re": empty(state.W_re) if state.W_re is not None else np.zeros((H, 0, 0)),
            "gamma": empty(state.gamma), "W_int": empty(state.W_int),
            "mu": empty(state.mu), "Sigma": empty(state.Sigma),
            "V": empty(state.V), "pi": empty(state.pi), "zeta": np.empty(H),
        }
        self.phi = [empty(p) for p in state.phi]
        self.ystar = empty(state.ystar) if state.ystar is not None else None

    def store(self, h, state):
        for k, arr in self.arrays.items():
            val = getattr(state, k)
            if val is None:
                continue
            arr[h] = val
        for arr, p in zip(self.phi, state.phi):
            arr[h] = p
        if self.ystar is not None:
            self.ystar[h] = state.ystar


def run_chain(rng, spec, data, priors, init, n_it, n_burn_in, progress_every=100,
              fixed=(), seed=None):
    """Run ``n_it`` sweeps from ``init`` and keep the last ``n_it - n_burn_in``.

    Parameters
    ----------
    rng : numpy.random.Generator
        The chain's single random stream.
    init : ParamState
        Starting state; it is copied, not modified.
    progress_every : int
        Log an ``Iteration: k`` message every this many sweeps (0 disables).
    fixed : iterable of str
        Names of blocks (see ``BLOCKS``) held at their initial values.
    seed : int, optional
        Recorded in the chain metadata.
    """
    n_it, n_burn_in = int(n_it), int(n_burn_in)
    if n_burn_in < 0 or n_it <= n_burn_in:
        raise ValueError(f"need n_it > n_burn_in >= 0, got n_it={n_it}, n_burn_in={n_burn_in}")
    unknown = set(fixed) - set(BLOCKS)
    if unknown:
        raise ValueError(f"unknown blocks in fixed: {sorted(unknown)}")
    H = n_it - n_burn_in
    state = init.copy()
    cache = SweepCache(data)
    rec = _Recorder(H, state, data.n)
    for it in range(n_it):
        if progress_every and it % progress_every == 0:
            log.info("Iteration: %d", it)
        try:
            sweep(rng, state, data, spec, priors, cache, fixed)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SamplerError(it, exc) from exc
        if it >= n_burn_in:
            rec.store(it - n_burn_in, state)
    meta = {
        "spec": spec.to_dict(),
        "priors": priors.to_dict(),
        "data": data.meta(),
        "fingerprints": {
            "spec": fingerprint(spec.to_dict()),
            "priors": priors.fingerprint(),
        },
        "fixed": sorted(fixed),
    }
    return McmcChain(**rec.arrays, phi=rec.phi, ystar=rec.ystar, n_iterations=n_it,
                     n_burn_in=n_burn_in, seed=seed, meta=meta)


def fit(spec, data, priors, n_it, n_burn_in, seed, progress_every=100):
    """Seeded convenience wrapper: prior-draw initialization then :func:`run_chain`."""
    rng = rd.make_rng(seed)
    init = theta_init(rng, priors, spec, data)
    return run_chain(rng, spec, data, priors, init, n_it, n_burn_in,
                     progress_every=progress_every, seed=seed)
