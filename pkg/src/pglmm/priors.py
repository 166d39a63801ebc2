"""Prior hyperparameters, the sampler state, and initialization by prior draws."""

import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import rng_dist as rd
from .errors import SpecError

# initial sigma^2 prior draws are clipped to this range: the vague default
# InvGamma(1e-6, 1e-6) otherwise returns 0 or inf in double precision
SIGMA2_INIT_RANGE = (1e-2, 1e2)


@dataclass
class FEPrior:
    """NormGamma(0, lam, a, b): sigma2 ~ InvGamma(a, b), beta | sigma2 ~ N(0, sigma2/lam I)."""

    lam: float = 1e-6
    a: float = 1e-6
    b: float = 1e-6


@dataclass
class IWPrior:
    psi: np.ndarray
    nu: float


@dataclass
class NIWPrior:
    lambda0: float
    nu0: float
    phi0: np.ndarray
    mu0: np.ndarray


@dataclass
class CatPrior:
    rho: float = 1.0


@dataclass
class DPPrior:
    """Gamma(a, b) prior (shape, rate) on the concentration zeta."""

    a: float
    b: float


@dataclass
class PriorSpec:
    fe: FEPrior
    interaction: IWPrior
    dp: DPPrior
    re: IWPrior = None
    assign_cont: NIWPrior = None
    assign_cat: CatPrior = None

    def to_dict(self):
        def iw(p):
            return None if p is None else {"psi": np.asarray(p.psi).tolist(), "nu": float(p.nu)}

        out = {
            "fe": {"lambda": float(self.fe.lam), "a": float(self.fe.a), "b": float(self.fe.b)},
            "re": iw(self.re),
            "int": iw(self.interaction),
            "assign_cont": None,
            "assign_cat": None,
            "dp": {"a": float(self.dp.a), "b": float(self.dp.b)},
        }
        if self.assign_cont is not None:
            p = self.assign_cont
            out["assign_cont"] = {"lambda0": float(p.lambda0), "nu0": float(p.nu0),
                                  "phi0": np.asarray(p.phi0).tolist(),
                                  "mu0": np.asarray(p.mu0).tolist()}
        if self.assign_cat is not None:
            out["assign_cat"] = {"rho": float(self.assign_cat.rho)}
        return out

    def with_overrides(self, overrides):
        """Return a copy with fields replaced from a (partial) JSON-style dict."""
        new = copy.deepcopy(self)
        for block, values in (overrides or {}).items():
            if values is None:
                continue
            target = {"fe": new.fe, "re": new.re, "int": new.interaction,
                      "assign_cont": new.assign_cont, "assign_cat": new.assign_cat,
                      "dp": new.dp}.get(block, KeyError)
            if target is KeyError:
                raise SpecError(f"unknown prior block {block!r}")
            if target is None:
                raise SpecError(f"prior block {block!r} is not used by this model")
            for key, val in values.items():
                attr = "lam" if key == "lambda" else key
                if not hasattr(target, attr):
                    raise SpecError(f"unknown prior field {block}.{key}")
                old = getattr(target, attr)
                if isinstance(old, np.ndarray):
                    val = np.asarray(val, dtype=float)
                    if val.shape != old.shape:
                        raise SpecError(f"{block}.{key} must have shape {old.shape}")
                else:
                    val = float(val)
                setattr(target, attr, val)
        new.check()
        return new

    def check(self):
        if not (self.fe.lam > 0 and self.fe.a > 0 and self.fe.b > 0):
            raise SpecError("fe prior parameters must be positive")
        if not (self.dp.a > 0 and self.dp.b > 0):
            raise SpecError("dp prior parameters must be positive")
        for name, p in (("re", self.re), ("int", self.interaction)):
            if p is not None:
                _check_scale(name, p.psi, p.nu)
        if self.assign_cont is not None:
            p = self.assign_cont
            if not p.lambda0 > 0:
                raise SpecError("assign_cont.lambda0 must be positive")
            _check_scale("assign_cont", p.phi0, p.nu0)
        if self.assign_cat is not None and not self.assign_cat.rho > 0:
            raise SpecError("assign_cat.rho must be positive")

    def fingerprint(self):
        return fingerprint(self.to_dict())


def _check_scale(name, psi, nu):
    if not rd.is_cov_matrix(psi):
        raise SpecError(f"{name} scale matrix must be symmetric positive definite")
    if nu < psi.shape[0]:
        raise SpecError(f"{name} degrees of freedom must be >= {psi.shape[0]}")


def fingerprint(obj):
    """Short sha256 of the canonical JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def default_priors(spec, data):
    """Vague default hyperparameters sized from ``data``."""
    C = spec.n_clusters_max
    re = None
    if spec.has_random_effects:
        re = IWPrior(psi=np.eye(data.q_re), nu=float(data.q_re))
    cont = None
    if data.q_uc:
        cont = NIWPrior(lambda0=1.0, nu0=float(data.q_uc), phi0=np.eye(data.q_uc),
                        mu0=np.zeros(data.q_uc))
    return PriorSpec(
        fe=FEPrior(),
        re=re,
        interaction=IWPrior(psi=np.eye(data.q_int), nu=float(data.q_int)),
        assign_cont=cont,
        assign_cat=CatPrior() if data.n_cat else None,
        dp=DPPrior(a=float(np.sqrt(C)), b=float(np.sqrt(C))),
    )


def priors_from_dict(spec, data, overrides):
    return default_priors(spec, data).with_overrides(overrides)


@dataclass
class ParamState:
    """One joint draw of every model parameter and latent variable.

    ``Z`` holds 0-based cluster labels; ``eta`` has one row per unit;
    ``phi[j]`` is the (C, K_j) matrix of category probabilities for the
    j-th categorical clustering covariate.  ``W_re`` is ``None`` and ``eta``
    has zero columns when the model has no random effects; ``ystar`` is
    ``None`` for linear models.
    """

    beta: np.ndarray
    sigma2: float
    eta: np.ndarray
    W_re: np.ndarray
    gamma: np.ndarray
    W_int: np.ndarray
    phi: list
    mu: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray
    pi: np.ndarray
    zeta: float
    Z: np.ndarray
    ystar: np.ndarray = None

    def copy(self):
        return copy.deepcopy(self)


def stick_weights(V):
    """pi_1 = V_1, pi_c = V_c prod_{j<c} (1 - V_j)."""
    V = np.asarray(V, dtype=float)
    rest = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    return V * rest


def linear_predictor(state, data):
    """x_fe beta + x_re eta_g + x_int gamma_Z for every observation."""
    out = data.X_fe @ state.beta
    if data.q_re:
        out = out + np.einsum("ij,ij->i", data.X_re, state.eta[data.g])
    out = out + np.einsum("ij,ij->i", data.X_int, state.gamma[state.Z])
    return out


def theta_init(rng, priors, spec, data):
    """Draw a full initial state from the priors.

    The allocation vector is drawn from the initial mixture weights and, for
    probit models, the latent outcomes from the truncated normals implied by
    the initial parameters.
    """
    C = spec.n_clusters_max
    zeta = float(rd.draw_gamma(rng, priors.dp.a, priors.dp.b))
    V = np.append(rd.draw_beta(rng, 1.0, zeta, size=C - 1), 1.0)
    pi = stick_weights(V)

    if spec.is_probit:
        sigma2 = 1.0
    else:
        precision = float(rd.draw_gamma(rng, priors.fe.a, priors.fe.b))
        lo, hi = SIGMA2_INIT_RANGE
        sigma2 = hi if precision <= 1.0 / hi else float(np.clip(1.0 / precision, lo, hi))
    beta = rng.standard_normal(data.q_fe) * np.sqrt(sigma2 / priors.fe.lam)

    if priors.re is not None:
        W_re = rd.draw_inverse_wishart(rng, priors.re.psi, priors.re.nu)
        eta = rd.draw_mvn(rng, np.zeros((data.m, data.q_re)),
                          np.broadcast_to(W_re, (data.m,) + W_re.shape))
    else:
        W_re = None
        eta = np.zeros((data.m, 0))

    W_int = rd.draw_inverse_wishart(rng, priors.interaction.psi, priors.interaction.nu)
    gamma = rd.draw_mvn(rng, np.zeros((C, data.q_int)),
                        np.broadcast_to(W_int, (C,) + W_int.shape))

    if priors.assign_cont is not None:
        p = priors.assign_cont
        Sigma = rd.draw_inverse_wishart(rng, np.broadcast_to(p.phi0, (C,) + p.phi0.shape), p.nu0)
        mu = rd.draw_mvn(rng, np.broadcast_to(p.mu0, (C, data.q_uc)), Sigma / p.lambda0)
    else:
        Sigma = np.zeros((C, 0, 0))
        mu = np.zeros((C, 0))

    phi = [rd.draw_dirichlet(rng, np.full((C, k), priors.assign_cat.rho))
           for k in data.n_categories]

    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    Z = rd.draw_categorical_log(rng, np.broadcast_to(log_pi, (data.n, C))) \
        if data.n else np.zeros(0, dtype=np.int64)

    state = ParamState(beta=beta, sigma2=sigma2, eta=eta, W_re=W_re, gamma=gamma,
                       W_int=W_int, phi=phi, mu=mu, Sigma=Sigma, V=V, pi=pi,
                       zeta=zeta, Z=Z.astype(np.int64))
    if spec.is_probit:
        state.ystar = np.atleast_1d(rd.draw_truncated_normal(
            rng, linear_predictor(state, data), 1.0, data.y == 1))
    return state


def validate_state(state, spec, data, tol=1e-12):
    """Check every structural invariant of a state; return the violations found."""
    bad = []
    C = spec.n_clusters_max
    V = np.asarray(state.V)
    if V.shape != (C,):
        bad.append(f"V has shape {V.shape}, expected ({C},)")
    else:
        if V[-1] != 1.0:
            bad.append("V_C must equal 1")
        if np.any(~((V > 0) & (V <= 1))):
            bad.append("stick fractions outside (0, 1]")
        gap = np.max(np.abs(np.asarray(state.pi) - stick_weights(V)))
        if not gap < tol:
            bad.append(f"stick identity violated (max gap {gap:.3g})")
        if abs(np.sum(state.pi) - 1.0) > tol:
            bad.append("mixture weights do not sum to 1")
    if not state.zeta > 0:
        bad.append("zeta must be positive")
    if not spec.is_probit and not state.sigma2 > 0:
        bad.append("sigma2 must be positive")
    if state.beta.shape != (data.q_fe,):
        bad.append("beta has the wrong length")
    if state.gamma.shape != (C, data.q_int):
        bad.append("gamma has the wrong shape")
    if not rd.is_cov_matrix(state.W_int):
        bad.append("W_int is not a covariance matrix")
    if spec.has_random_effects:
        if state.W_re is None or not rd.is_cov_matrix(state.W_re):
            bad.append("W_re is not a covariance matrix")
        if state.eta.shape != (data.m, data.q_re):
            bad.append("eta has the wrong shape")
    for c in range(C):
        if data.q_uc and not rd.is_cov_matrix(state.Sigma[c]):
            bad.append(f"Sigma[{c}] is not a covariance matrix")
        for j, ph in enumerate(state.phi):
            row = ph[c]
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-9:
                bad.append(f"phi row (c={c}, j={j}) is not a probability vector")
    Z = np.asarray(state.Z)
    if Z.shape != (data.n,) or (Z.size and (Z.min() < 0 or Z.max() >= C)):
        bad.append("allocations outside [0, C)")
    if spec.is_probit:
        ys = np.asarray(state.ystar)
        wrong = np.flatnonzero((ys > 0) != (data.y == 1))
        for i in wrong:
            bad.append(f"latent outcome sign inconsistent with y at i={i}")
    return bad
