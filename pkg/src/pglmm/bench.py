"""Wall-clock timing of the sampler on the benchmark scenario."""

import time
from dataclasses import replace

import numpy as np

from . import gibbs
from .model_spec import ModelSpec, compile_data
from .priors import default_priors
from .simdata import BENCH_SPEC, BenchConfig, gen_bench


def time_fit(n_obs, n_it, n_burn_in, seed):
    """Seconds spent in the Gibbs sampler (data generation excluded)."""
    spec = ModelSpec.from_dict(BENCH_SPEC)
    data = compile_data(spec, gen_bench(replace(BenchConfig(), n_obs=n_obs, seed=seed)))
    priors = default_priors(spec, data)
    start = time.perf_counter()
    gibbs.fit(spec, data, priors, n_it, n_burn_in, seed=seed, progress_every=0)
    return time.perf_counter() - start


def run_bench(sizes=(1200, 6000, 12000), reps=10, n_it=2000, n_burn_in=500, seed=1):
    """Mean and standard deviation of the elapsed time over ``reps`` replications.

    Replication r of every size uses seed ``seed + r``.  Returns a list of
    ``(size, mean_seconds, sd_seconds)`` tuples.
    """
    rows = []
    for n in sizes:
        times = np.array([time_fit(int(n), n_it, n_burn_in, seed + r) for r in range(reps)])
        sd = float(times.std(ddof=1)) if reps > 1 else 0.0
        rows.append((int(n), float(times.mean()), sd))
    return rows
