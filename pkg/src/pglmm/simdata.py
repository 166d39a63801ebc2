"""Seeded generators for the exposure, piecewise-linear and benchmark datasets.

Each generator returns a pandas DataFrame and (except :func:`gen_bench`) a
``truth`` dict holding every parameter used, so the noiseless outcome can be
recomputed exactly.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .rng_dist import make_rng

GRID = np.array([(a, b) for a in (-1.0, 0.0, 1.0) for b in (-1.0, 0.0, 1.0)])

# cluster-specific (intercept, slope on X), one row per grid cell in GRID order
EXPOSURE_GAMMA = np.array([
    [-8.0, -4.0], [-4.0, 2.0], [0.0, 6.0],
    [-6.0, 4.0], [2.0, 0.0], [6.0, -6.0],
    [0.0, -6.0], [4.0, -2.0], [10.0, 4.0],
])


@dataclass
class ExposureConfig:
    n_individuals: int = 1500
    n_waves: int = 3
    seed: int = 1
    beta: tuple = (1.0, 0.5)
    gamma: np.ndarray = field(default_factory=lambda: EXPOSURE_GAMMA.copy())
    scatter_sd: float = 0.35
    re_sd: float = 0.3
    noise_sd: float = 0.5
    t_max: float = 3.0


@dataclass
class PiecewiseConfig:
    n_obs: int = 1000
    seed: int = 1
    # segment edges; the outer edges bound the uniform range of x
    breaks: tuple = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
    intercepts: tuple = (-8.0, 4.0, -4.0, 6.0, -3.0, 10.0)
    slopes: tuple = (-2.0, 3.0, -3.0, 2.5, 4.0, -2.0)
    fe_intercept: float = 1.0
    noise_sd: float = 1.0


@dataclass
class BenchConfig:
    n_obs: int = 1200
    seed: int = 1
    beta: tuple = (1.0, -0.5)
    centers: np.ndarray = field(default_factory=lambda: np.array(
        [[-2.0, -2.0], [-2.0, 2.0], [2.0, -2.0], [2.0, 2.0]]))
    cluster_intercepts: tuple = (-2.0, 0.0, 1.0, 3.0)
    scatter_sd: float = 0.5
    noise_sd: float = 1.0


def gen_exposure(cfg=None):
    """Three-wave longitudinal exposure data clustered on a 3x3 grid.

    Rows are wave-major (all individuals at wave 1, then wave 2, ...).  The
    latent cluster is drawn per individual; exposures scatter around the grid
    cell centre at every wave.  The outcome is
    ``beta1 + X beta2 + t eta_indiv + gamma_c1 + X gamma_c2 + eps``.
    """
    cfg = cfg or ExposureConfig()
    rng = make_rng(cfg.seed)
    n_ind, waves = cfg.n_individuals, cfg.n_waves
    n = n_ind * waves
    lat_ind = rng.integers(0, len(GRID), size=n_ind)
    eta = rng.normal(0.0, cfg.re_sd, size=n_ind)
    indiv = np.tile(np.arange(1, n_ind + 1), waves)
    lat = lat_ind[indiv - 1]
    X = rng.standard_normal(n)
    t = rng.uniform(0.0, cfg.t_max, size=n)
    exp = GRID[lat] + cfg.scatter_sd * rng.standard_normal((n, 2))
    gamma = np.asarray(cfg.gamma, dtype=float)
    beta = np.asarray(cfg.beta, dtype=float)
    y_fe = beta[0] + X * beta[1]
    y_re = t * eta[indiv - 1]
    y_lat = gamma[lat, 0] + X * gamma[lat, 1]
    Y = y_fe + y_re + y_lat + cfg.noise_sd * rng.standard_normal(n)
    df = pd.DataFrame({"X": X, "t": t, "indiv": indiv, "Exp1": exp[:, 0],
                       "Exp2": exp[:, 1], "Y": Y})
    truth = {
        "beta": beta.tolist(), "gamma": gamma.tolist(), "eta": eta.tolist(),
        "centers": GRID.tolist(), "Lat": lat.tolist(),
        "yFe": y_fe.tolist(), "yRe": y_re.tolist(), "yLat": y_lat.tolist(),
        "scatter_sd": cfg.scatter_sd, "re_sd": cfg.re_sd, "noise_sd": cfg.noise_sd,
        "seed": cfg.seed,
        "covariates": {"X": "standard normal", "t": f"uniform(0, {cfg.t_max})"},
    }
    return df, truth


def piecewise_signal(x, cfg):
    """Segment index and noiseless (yFe, yLat) components at ``x``."""
    edges = np.asarray(cfg.breaks, dtype=float)
    seg = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)
    y_lat = np.asarray(cfg.intercepts)[seg] + np.asarray(cfg.slopes)[seg] * x
    y_fe = np.full_like(x, cfg.fe_intercept, dtype=float)
    return seg, y_fe, y_lat


def gen_piecewise(cfg=None):
    """One covariate ``x`` and a noisy piecewise-linear outcome ``Y``."""
    cfg = cfg or PiecewiseConfig()
    if len(cfg.intercepts) != len(cfg.breaks) - 1 or len(cfg.slopes) != len(cfg.intercepts):
        raise ValueError("need one (intercept, slope) pair per segment")
    rng = make_rng(cfg.seed)
    x = rng.uniform(cfg.breaks[0], cfg.breaks[-1], size=cfg.n_obs)
    seg, y_fe, y_lat = piecewise_signal(x, cfg)
    Y = y_fe + y_lat + cfg.noise_sd * rng.standard_normal(cfg.n_obs)
    df = pd.DataFrame({"x": x, "Y": Y})
    truth = {
        "breaks": list(cfg.breaks), "intercepts": list(cfg.intercepts),
        "slopes": list(cfg.slopes), "fe_intercept": cfg.fe_intercept,
        "noise_sd": cfg.noise_sd, "segment": seg.tolist(),
        "yFe": y_fe.tolist(), "yLat": y_lat.tolist(), "seed": cfg.seed,
    }
    return df, truth


def gen_bench(cfg=None):
    """Benchmark table: two fixed effects, two clustering covariates, an outcome."""
    cfg = cfg or BenchConfig()
    rng = make_rng(cfg.seed)
    n = cfg.n_obs
    centers = np.asarray(cfg.centers, dtype=float)
    lab = rng.integers(0, len(centers), size=n)
    fe = rng.standard_normal((n, 2))
    u = centers[lab] + cfg.scatter_sd * rng.standard_normal((n, 2))
    signal = fe @ np.asarray(cfg.beta) + np.asarray(cfg.cluster_intercepts)[lab]
    outcome = signal + cfg.noise_sd * rng.standard_normal(n)
    return pd.DataFrame({"FixedEffects1": fe[:, 0], "FixedEffects2": fe[:, 1],
                         "Variable1": u[:, 0], "Variable2": u[:, 1],
                         "outcome": outcome})


def bench_signal_variance(cfg=None):
    """Population variance of the noiseless benchmark outcome."""
    cfg = cfg or BenchConfig()
    b = np.asarray(cfg.beta, dtype=float)
    ints = np.asarray(cfg.cluster_intercepts, dtype=float)
    return float(b @ b + ints.var())


# canonical model specs for the bundled scenarios (JSON field names)
EXPOSURE_SPEC = {
    "regression_type": "linear", "fe": ["X"], "re": ["t"], "re_unit": "indiv",
    "lat": ["X"], "assign_cont": ["Exp1", "Exp2"], "assign_cat": [], "outcome": "Y",
    "n_clusters_max": 30, "intercepts": {"fe": True, "re": False, "lat": True},
}
PIECEWISE_SPEC = {
    "regression_type": "linear", "fe": [], "re": [], "re_unit": None, "lat": ["x"],
    "assign_cont": ["x"], "assign_cat": [], "outcome": "Y", "n_clusters_max": 20,
    "intercepts": {"fe": True, "re": False, "lat": True},
}
BENCH_SPEC = {
    "regression_type": "linear", "fe": ["FixedEffects1", "FixedEffects2"], "re": [],
    "re_unit": None, "lat": [], "assign_cont": ["Variable1", "Variable2"],
    "assign_cat": [], "outcome": "outcome", "n_clusters_max": 15,
    "intercepts": {"fe": False, "re": False, "lat": True},
}
