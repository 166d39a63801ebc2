"""Out-of-sample prediction from a post-processed fit.

Cluster membership is predicted from the clustering covariates alone; the
outcome prediction adds the fixed-effect part (posterior mean beta) and the
interaction part of the predicted cluster.  Random effects of new units are
set to their prior mean, zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from . import rng_dist as rd
from .errors import DimensionMismatch, UnknownCategory

REPRESENTATIVE = "representative"
POSTERIOR_MEAN_PROB = "posterior_mean_prob"


@dataclass
class Prediction:
    fe: np.ndarray
    class_pred: np.ndarray
    int: np.ndarray
    y: np.ndarray

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({"fe": self.fe, "class_pred": self.class_pred,
                             "int": self.int, "y": self.y})


def _check(new, fit):
    data = fit.meta["data"]
    K = fit.clusters.size.size
    expect = {"X_fe": len(data["fe_names"]), "X_int": len(data["int_names"]),
              "U_cont": len(data["cont_names"]), "U_cat": len(data["cat_names"])}
    n = None
    for name, q in expect.items():
        arr = np.asarray(getattr(new, name))
        if arr.ndim != 2 or arr.shape[1] != q:
            raise DimensionMismatch(f"{name} must have {q} columns, got shape {arr.shape}")
        if n is None:
            n = arr.shape[0]
        elif arr.shape[0] != n:
            raise DimensionMismatch("new-data matrices have different row counts")
    U_cat = np.asarray(new.U_cat)
    for j, k in enumerate(data["n_categories"]):
        col = U_cat[:, j]
        if col.size and (col.min() < 0 or col.max() >= k):
            raise UnknownCategory(f"categorical covariate {j} has a level outside [0, {k})")
    return n, K


def _assignment_loglik(U_cont, U_cat, mu, Sigma, phi):
    """(n, C) log f_u for cluster parameters (mu (C,q), Sigma (C,q,q), phi list)."""
    n = U_cont.shape[0]
    out = np.zeros((n, mu.shape[0]))
    if U_cont.shape[1]:
        out += rd.mvn_logpdf(U_cont, mu, rd.spd_cholesky(Sigma))
    with np.errstate(divide="ignore"):
        for j, p in enumerate(phi):
            out += np.log(p[:, U_cat[:, j]]).T
    return out


def cluster_scores(fit, new, weights="size"):
    """(n, K) log w_c + log f_u(u_i | representative cluster c)."""
    cl = fit.clusters
    if weights == "size":
        w = cl.size / cl.size.sum()
    elif weights == "pi":
        w = cl.pi_weight / cl.pi_weight.sum()
    else:
        raise ValueError("weights must be 'size' or 'pi'")
    q = len(fit.meta["data"]["cont_names"])
    K = cl.size.size
    mu = cl.cen.mean if cl.cen is not None else np.zeros((K, q))
    Sigma = cl.coVar.mean if cl.coVar is not None else np.zeros((K, q, q))
    ll = _assignment_loglik(np.asarray(new.U_cont, dtype=float),
                            np.asarray(new.U_cat, dtype=np.int64),
                            mu, Sigma, [p.mean for p in cl.pvec])
    with np.errstate(divide="ignore"):
        return np.log(w)[None, :] + ll


def posterior_class_probs(fit, new, chain):
    """Assignment probabilities averaged over draws, mapped onto z_star clusters.

    At draw h every occupied cluster k is mapped to the representative
    cluster holding most of its members; probabilities of empty draw
    clusters are dropped and each draw's mapped probabilities renormalized.
    """
    from .postprocess import membership_counts

    K = fit.clusters.size.size
    counts = membership_counts(chain, fit.z_star, chain.n_clusters_max)   # (H, K, C)
    U_cont = np.asarray(new.U_cont, dtype=float)
    U_cat = np.asarray(new.U_cat, dtype=np.int64)
    n = U_cont.shape[0]
    acc = np.zeros((n, K))
    for h in range(len(chain)):
        occupied = counts[h].sum(axis=0) > 0
        target = np.argmax(counts[h], axis=0)
        with np.errstate(divide="ignore"):
            lw = np.log(chain.pi[h])[None, :] + _assignment_loglik(
                U_cont, U_cat, chain.mu[h], chain.Sigma[h], [p[h] for p in chain.phi])
        lw = lw[:, occupied]
        p = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        mapped = np.zeros((n, K))
        np.add.at(mapped.T, target[occupied], p.T)
        acc += mapped
    return acc / len(chain)


def predict(fit, new, mode=REPRESENTATIVE, weights="size", chain=None):
    """Predict cluster membership and the outcome decomposition for new data.

    Parameters
    ----------
    fit : FitResult
    new : object with ``X_fe``, ``X_int``, ``U_cont`` and ``U_cat`` arrays
        (a :class:`~pglmm.model_spec.NewData` or the training Dataset).
    mode : {"representative", "posterior_mean_prob"}
        Score against the pooled cluster summaries, or average per-draw
        assignment probabilities (needs ``chain``).
    weights : {"size", "pi"}
        Representative-cluster weights: N_c / n or pooled mixture weights.
    """
    _check(new, fit)
    if mode == REPRESENTATIVE:
        class_pred = np.argmax(cluster_scores(fit, new, weights), axis=1)
    elif mode == POSTERIOR_MEAN_PROB:
        if chain is None:
            raise ValueError("mode='posterior_mean_prob' needs the chain")
        class_pred = np.argmax(posterior_class_probs(fit, new, chain), axis=1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fe = np.asarray(new.X_fe, dtype=float) @ fit.beta_mean
    gamma = fit.clusters.gamma.mean
    inter = np.einsum("ij,ij->i", np.asarray(new.X_int, dtype=float), gamma[class_pred])
    total = fe + inter
    if fit.meta["spec"]["regression_type"] == "probit":
        total = ndtr(total)
    return Prediction(fe=fe, class_pred=class_pred.astype(np.int64), int=inter, y=total)
