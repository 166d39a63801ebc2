"""Label-switching-safe summaries of a chain.

The co-occurrence matrix ``S`` (fraction of draws in which two observations
share a cluster) does not depend on cluster labels.  A representative
partition ``z_star`` is read off ``S`` either as the best-matching sampled
partition (least squares) or by Ng-Jordan-Weiss spectral clustering.
Cluster parameters are then pooled over every draw and every observation of
each representative cluster.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from sklearn.cluster import KMeans

from .errors import EigSolverFailure, EmptyRepresentativeCluster

LS = "ls"
NG = "ng"
_CHUNK = 64
# above this size the leading eigenpairs come from Lanczos iterations
_DENSE_EIG_MAX = 1500


def _onehot_chunks(Z, C, chunk=_CHUNK):
    """Yield dense (n, k) 0/1 membership matrices for blocks of draws."""
    H, n = Z.shape
    rows = np.arange(n)
    for start in range(0, H, chunk):
        block = Z[start:start + chunk].astype(np.int64)
        cols = block.T + C * np.arange(block.shape[0])[None, :]
        M = np.zeros((n, block.shape[0] * C))
        M[rows[:, None], cols] = 1.0
        yield start, block, M[:, M.any(axis=0)]


def co_occurrence(chain_or_Z, n_clusters=None):
    """S[i, k] = fraction of draws with Z_i == Z_k.

    Accepts an :class:`~pglmm.gibbs.McmcChain` or an (H, n) allocation array.
    Counts are accumulated as exact integers, so the result does not depend
    on the labels used in each draw.
    """
    Z = getattr(chain_or_Z, "Z", chain_or_Z)
    Z = np.asarray(Z)
    H, n = Z.shape
    C = n_clusters or int(Z.max()) + 1
    S = np.zeros((n, n))
    for _, _, M in _onehot_chunks(Z, C):
        S += M @ M.T
    S /= H
    return S


def ls_scores(S, Z):
    """sum_{i<k} (1{Z_i == Z_k} - S_ik)^2 for every sampled partition (row of Z)."""
    Z = np.asarray(Z)
    s_sq = np.sum(S * S)
    scores = np.empty(Z.shape[0])
    for h, z in enumerate(Z):
        _, inv, sizes = np.unique(z, return_inverse=True, return_counts=True)
        M = np.zeros((z.size, sizes.size))
        M[np.arange(z.size), inv] = 1.0
        inner = np.sum(M * (S @ M))
        # half the full-matrix squared distance; the diagonal contributes 0
        scores[h] = 0.5 * (np.sum(sizes.astype(float) ** 2) - 2.0 * inner + s_sq)
    return scores


def relabel_first_appearance(z):
    """Map labels to 0, 1, ... in order of first appearance."""
    z = np.asarray(z)
    _, first = np.unique(z, return_index=True)
    order = np.argsort(first)
    lookup = np.empty(order.size, dtype=np.int64)
    lookup[order] = np.arange(order.size)
    _, inv = np.unique(z, return_inverse=True)
    return lookup[inv]


def representative_ls(S, chain_or_Z):
    """The sampled partition closest to S in squared error (first one on ties)."""
    Z = np.asarray(getattr(chain_or_Z, "Z", chain_or_Z))
    scores = ls_scores(S, Z)
    # identical partitions may differ by rounding in the last bits
    best = scores.min()
    h = int(np.flatnonzero(scores <= best + 1e-9 * max(1.0, abs(best)))[0])
    return relabel_first_appearance(Z[h])


def _normalized_affinity(S):
    d = S.sum(axis=1)
    if np.any(d <= 0):
        raise EigSolverFailure("similarity matrix has a zero-degree row")
    inv_sqrt = 1.0 / np.sqrt(d)
    return S * inv_sqrt[:, None] * inv_sqrt[None, :]


def _leading_eigh(L, k):
    """Largest ``k`` eigenvalues (descending) and eigenvectors of symmetric L."""
    n = L.shape[0]
    k = min(k, n)
    try:
        if n <= _DENSE_EIG_MAX or k >= n - 1:
            w, v = scipy.linalg.eigh(L, subset_by_index=[n - k, n - 1])
        else:
            v0 = np.full(n, 1.0 / np.sqrt(n))
            w, v = scipy.sparse.linalg.eigsh(L, k=k, which="LA", v0=v0, tol=1e-10)
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def eigengap_k(S, k_max):
    """Number of clusters at the largest gap among the leading eigenvalues of
    the normalized affinity ``D^-1/2 S D^-1/2``."""
    n = S.shape[0]
    k_max = max(1, min(k_max, n - 1))
    w, _ = _leading_eigh(_normalized_affinity(S), k_max + 1)
    gaps = w[:-1] - w[1:]
    return int(np.argmax(gaps)) + 1


def modal_occupied(chain_or_Z, n_clusters=None):
    """Most frequent number of non-empty clusters across draws (smallest on ties)."""
    Z = np.asarray(getattr(chain_or_Z, "Z", chain_or_Z))
    C = n_clusters or int(Z.max()) + 1
    occ = np.array([np.count_nonzero(np.bincount(z, minlength=C)) for z in Z])
    return int(np.bincount(occ).argmax())


def representative_ng(S, k="auto", chain=None, seed=0, n_init=20, k_max=None):
    """Ng-Jordan-Weiss spectral clustering of the similarity matrix S.

    Parameters
    ----------
    k : int, "auto" or "modal"
        ``"auto"`` picks the eigengap of the normalized affinity among the
        first ``k_max`` eigenvalues (default: the truncation level of
        ``chain``, else 30); ``"modal"`` uses the modal number of occupied
        clusters in ``chain``.
    seed : int
        k-means++ seed; ``n_init`` restarts are run and the lowest inertia kept.
    """
    n = S.shape[0]
    if k == "modal":
        if chain is None:
            raise ValueError("k='modal' needs the chain")
        k = modal_occupied(chain)
    elif k == "auto":
        if k_max is None:
            k_max = chain.n_clusters_max if chain is not None else 30
        k = eigengap_k(S, k_max)
    k = int(k)
    if not 1 <= k <= n:
        raise ValueError(f"cluster count must lie in [1, {n}], got {k}")
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    _, X = _leading_eigh(_normalized_affinity(S), k)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    Y = X / np.where(norms > 0, norms, 1.0)
    km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, random_state=seed)
    labels = km.fit_predict(Y)
    return relabel_first_appearance(labels)


# -- pooled summaries -----------------------------------------------------------

def _weighted_quantile(values, weights, probs):
    """Inverted-cdf quantiles of a weighted pool, column by column.

    values : (P, D); weights : (P,).  Equals ``np.quantile(expanded,
    method="inverted_cdf")`` on the pool where value p is repeated weights[p] times.
    """
    keep = weights > 0
    values, weights = values[keep], weights[keep]
    out = np.empty((len(probs), values.shape[1]))
    total = weights.sum()
    for d in range(values.shape[1]):
        order = np.argsort(values[:, d], kind="stable")
        cum = np.cumsum(weights[order])
        for r, p in enumerate(probs):
            idx = np.searchsorted(cum, p * total, side="left")
            out[r, d] = values[order[min(idx, order.size - 1)], d]
    return out


@dataclass
class PooledParameter:
    """Pooled mean and equal-tailed interval per representative cluster."""

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "lower": self.lower.tolist(),
                "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=float) for k in ("mean", "lower", "upper")))


def membership_counts(chain_or_Z, z_star, n_clusters=None):
    """N[h, c, k] = #{i : z_star_i == c and Z_i^(h) == k}."""
    Z = np.asarray(getattr(chain_or_Z, "Z", chain_or_Z)).astype(np.int64)
    H = Z.shape[0]
    C = n_clusters or int(Z.max()) + 1
    K = int(np.max(z_star)) + 1
    flat = np.asarray(z_star)[None, :] * C + Z
    out = np.empty((H, K, C))
    for h in range(H):
        out[h] = np.bincount(flat[h], minlength=K * C).reshape(K, C)
    return out


def pool_parameter(values, counts, level=0.95):
    """Pool per-draw cluster parameters through membership counts.

    values : (H, C, ...) per-draw cluster parameters
    counts : (H, K, C) from :func:`membership_counts`
    """
    H, K, C = counts.shape
    shape = values.shape[2:]
    flat = values.reshape(H * C, -1)
    alpha = 0.5 * (1.0 - level)
    means, lows, ups = [], [], []
    for c in range(K):
        w = counts[:, c, :].reshape(H * C)
        tot = w.sum()
        if tot <= 0:
            raise EmptyRepresentativeCluster(f"representative cluster {c} is empty")
        means.append((w @ flat) / tot)
        q = _weighted_quantile(flat, w, (alpha, 1.0 - alpha))
        lows.append(q[0])
        ups.append(q[1])
    fix = lambda xs: np.stack(xs).reshape((K,) + shape)  # noqa: E731
    return PooledParameter(fix(means), fix(lows), fix(ups))


@dataclass
class ClusterSummaries:
    size: np.ndarray
    gamma: PooledParameter
    cen: PooledParameter = None
    coVar: PooledParameter = None
    pvec: list = field(default_factory=list)
    pi_weight: np.ndarray = None

    def to_dict(self):
        return {
            "size": self.size.tolist(),
            "gamma": self.gamma.to_dict(),
            "cen": None if self.cen is None else self.cen.to_dict(),
            "coVar": None if self.coVar is None else self.coVar.to_dict(),
            "pvec": [p.to_dict() for p in self.pvec],
            "pi_weight": None if self.pi_weight is None else self.pi_weight.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        opt = lambda x: None if x is None else PooledParameter.from_dict(x)  # noqa: E731
        return cls(size=np.asarray(d["size"], dtype=np.int64),
                   gamma=PooledParameter.from_dict(d["gamma"]),
                   cen=opt(d["cen"]), coVar=opt(d["coVar"]),
                   pvec=[PooledParameter.from_dict(p) for p in d["pvec"]],
                   pi_weight=None if d["pi_weight"] is None else np.asarray(d["pi_weight"]))


def summarize_clusters(chain, z_star, level=0.95):
    """Mean a posteriori cluster parameters pooled over draws and members.

    For representative cluster c the pool holds, for every draw h and every
    i with ``z_star[i] == c``, the parameter of the cluster i occupied at
    draw h.
    """
    z_star = np.asarray(z_star, dtype=np.int64)
    C = chain.n_clusters_max
    counts = membership_counts(chain, z_star, C)
    size = np.bincount(z_star)
    if np.any(size == 0):
        raise EmptyRepresentativeCluster("z_star labels are not contiguous")
    has_cont = chain.mu.shape[-1] > 0
    # share of each draw cluster's mixture weight carried into each
    # representative cluster, averaged over draws
    occ = counts.sum(axis=1)                                   # (H, C)
    frac = np.divide(counts, occ[:, None, :], out=np.zeros_like(counts),
                     where=occ[:, None, :] > 0)
    pi_weight = np.einsum("hkc,hc->k", frac, chain.pi) / len(chain)
    return ClusterSummaries(
        size=size,
        gamma=pool_parameter(chain.gamma, counts, level),
        cen=pool_parameter(chain.mu, counts, level) if has_cont else None,
        coVar=pool_parameter(chain.Sigma, counts, level) if has_cont else None,
        pvec=[pool_parameter(p, counts, level) for p in chain.phi],
        pi_weight=pi_weight,
    )


def _interval(draws, level):
    draws = np.asarray(draws, dtype=float)
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha], axis=0)
    return {"mean": draws.mean(axis=0).tolist(), "lower": lo.tolist(), "upper": hi.tolist()}


def summarize_population(chain, level=0.95, probit=None):
    """Posterior means and equal-tailed intervals of the population parameters."""
    if probit is None:
        probit = chain.meta.get("spec", {}).get("regression_type") == "probit"
    out = {"beta": _interval(chain.beta, level), "zeta": _interval(chain.zeta, level),
           "W_int": _interval(chain.W_int, level)}
    if not probit:
        out["sigma2"] = _interval(chain.sigma2, level)
    if chain.W_re.shape[-1]:
        out["W_re"] = _interval(chain.W_re, level)
    return out


@dataclass
class FitResult:
    z_star: np.ndarray
    clusters: ClusterSummaries
    population: dict
    method: str
    k: int
    level: float
    n_draws: int
    meta: dict = field(default_factory=dict)
    S: np.ndarray = None

    @property
    def n_clusters(self):
        return int(self.k)

    @property
    def beta_mean(self):
        return np.asarray(self.population["beta"]["mean"], dtype=float)

    def to_dict(self):
        return {
            "format": "pglmm-fit/1",
            "method": self.method,
            "k": int(self.k),
            "level": self.level,
            "n_draws": self.n_draws,
            "z_star": self.z_star.tolist(),
            "clus": self.clusters.to_dict(),
            "population": self.population,
            **self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        meta = {k: d[k] for k in ("spec", "priors", "data", "fingerprints", "seed")
                if k in d}
        return cls(z_star=np.asarray(d["z_star"], dtype=np.int64),
                   clusters=ClusterSummaries.from_dict(d["clus"]),
                   population=d["population"], method=d["method"], k=d["k"],
                   level=d["level"], n_draws=d["n_draws"], meta=meta)


def postprocess(chain, method=NG, k="auto", level=0.95, seed=None, keep_S=True):
    """Co-occurrence, representative clustering and all summaries of ``chain``."""
    method = method.lower()
    if method not in (LS, NG):
        raise ValueError(f"method must be 'ls' or 'ng', got {method!r}")
    S = co_occurrence(chain, chain.n_clusters_max)
    if method == LS:
        z_star = representative_ls(S, chain)
    else:
        if seed is None:
            seed = chain.seed if chain.seed is not None else 0
        z_star = representative_ng(S, k=k, chain=chain, seed=seed)
    meta = {"spec": chain.meta.get("spec"), "priors": chain.meta.get("priors"),
            "data": chain.meta.get("data"), "fingerprints": chain.meta.get("fingerprints"),
            "seed": chain.seed}
    return FitResult(
        z_star=z_star,
        clusters=summarize_clusters(chain, z_star, level),
        population=summarize_population(chain, level),
        method=method, k=int(z_star.max()) + 1, level=level, n_draws=len(chain),
        meta=meta, S=S if keep_S else None,
    )
